from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings loaded from SNH_* environment variables or defaults."""
    data_dir: str = str(Path("."))
    log_level: str = "INFO"
    log_format: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"

    # collect() refuses noise_free=True unless this is set (test suite only)
    allow_noise_free: bool = False

    artifact_version: int = 1

    model_config = SettingsConfigDict(
        env_prefix="SNH_",
        env_file=".env",
        extra="ignore",
    )

    def resolve(self, path: str | Path) -> Path:
        """Resolve a user supplied path against the data directory."""
        p = Path(path).expanduser()
        if p.is_absolute():
            return p
        return Path(self.data_dir) / p


settings = Settings()
