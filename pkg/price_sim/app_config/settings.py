from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

# Pull .env into os.environ before Settings reads it
load_dotenv()


# Runtime knobs for price-sim, read from the environment
class Settings(BaseSettings):
    # Where `price-sim run` writes when neither --out nor output.dir is given
    PRICE_SIM_OUTPUT_DIR: str = "results"
    PRICE_SIM_LOG_LEVEL: str = "INFO"

    # tqdm bar for long runs; only drawn when stdout is also a TTY
    PRICE_SIM_PROGRESS_BAR: bool = False

    # Process pool size for independent (variant, T) sweep cells
    PRICE_SIM_SWEEP_WORKERS: int = Field(default=1, ge=1)

    # Numeric floor on x^T A x below which the knowledge set counts as flat
    PRICE_SIM_DIRECTION_FLOOR: float = Field(default=1e-14, gt=0)

    # .env is optional; unknown keys are ignored
    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", case_sensitive=False, extra="ignore"
    )


# Shared instance imported by the CLI and the task modules
config = Settings()
