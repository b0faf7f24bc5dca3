import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

def _int_env(name: str, default: int) -> int:
    """Read an integer environment variable, falling back on garbage"""
    try:
        return int(os.getenv(name, str(default)))
    except ValueError:
        return default

class Settings:
    # Parallelism
    THREADS = max(1, _int_env("MAGFLOW_THREADS", 1))

    # Logging and output
    LOG_LEVEL = os.getenv("MAGFLOW_LOG_LEVEL", "INFO").upper()
    OUTPUT_DIR = os.getenv("MAGFLOW_OUTPUT_DIR", "output")
    DEBUG = os.getenv("MAGFLOW_DEBUG", "False").lower() == "true"

    # Numerical defaults
    DEFAULT_RESOLUTION = _int_env("MAGFLOW_RESOLUTION", 128)
    GRID_LEVEL = _int_env("MAGFLOW_GRID_LEVEL", 3)
    MONODROMY_MARGIN = float(os.getenv("MAGFLOW_MONODROMY_MARGIN", "1e-4"))

    @property
    def is_parallel(self) -> bool:
        """Check if multi-start work may fan out over threads"""
        return self.THREADS > 1

settings = Settings()
