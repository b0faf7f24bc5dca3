# Empty file to make geometry a package
