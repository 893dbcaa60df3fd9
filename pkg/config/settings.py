"""Process-level settings for kinetic-gmsfem."""

import os
from pathlib import Path

from dotenv import load_dotenv
from config.logger import get_logger

load_dotenv(override=False)
logger = get_logger(__name__)


class Settings:
    """Environment-backed settings.

    Only the output directory may be overridden from the environment; every
    numerical parameter lives in the experiment config file so runs stay
    archivable.
    """

    def __init__(self):
        self.output_dir = Path(os.getenv("GMSFEM_OUTPUT_DIR", "output"))

    @property
    def cache_dir(self) -> Path:
        """Offline artifacts live next to the results they produced."""
        return self.output_dir / "cache"

    def ensure_dirs(self) -> None:
        """Create the output and cache directories if missing."""
        try:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            logger.error(f"Failed to create output directory {self.output_dir}: {e}")
            raise

    def resolve_output(self, path: str | Path) -> Path:
        """Place relative output paths under the output directory."""
        path = Path(path)
        return path if path.is_absolute() else self.output_dir / path


# Global instance
settings = Settings()
