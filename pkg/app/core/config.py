from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    PROJECT_NAME: str = "ISAC Scene Sensing"
    VERSION: str = "0.1.0"
    API_V1_PREFIX: str = "/api/v1"
    HOST: str = "127.0.0.1"
    PORT: int = 8000

    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "text"

    DEFAULT_PRESET: str = Field(default="quick")
    WORKERS: int = Field(default=1, ge=1)
    OUTPUT_DIR: str = Field(default="results")

    RATE_LIMIT_ENABLED: bool = True
    RATE_LIMIT_SIMULATIONS: int = 10

    class Config:
        env_file = ".env"
        case_sensitive = True
        extra = "ignore"


settings = Settings()
