# Empty file to make loopspace a package
