from pydantic_settings import BaseSettings
from typing import Optional

KIB = 1024
MIB = 1024 * 1024


class Settings(BaseSettings):
    # Memoria simulada
    page_size: int = 4096  # 4096 | 65536 | 2097152
    region_bytes: int = 64 * MIB  # Tamaño de cada región de reserva
    backing: str = "mmap"  # mmap | virtual
    node_capacity_pages: Optional[int] = None  # None = sin límite por nodo

    # Topología / afinidad
    topology_file: Optional[str] = None
    exclusive_cores: bool = False  # Si true, un core admite un solo thread

    # Caches
    core_cache_cap_bytes: int = 4 * MIB
    central_batch_bytes: int = 64 * KIB
    max_batch_size: int = 32
    large_cache_max_spans: int = 64
    large_cache_max_bytes: int = 256 * MIB

    # Logging
    log_level: str = "INFO"

    # Environment
    environment: str = "development"  # development | ci

    class Config:
        env_file = ".env"
        env_prefix = "PSM_"

settings = Settings()

def get_settings() -> Settings:
    return settings
