from pydantic import BaseModel, Field, field_validator
from typing import List, Literal, Optional, Union


AllocatorName = Literal["psm", "first-touch", "shared-cache", "membind"]
OutputFormat = Literal["text", "csv", "json"]

MIB = 1024 * 1024


class TopologyFile(BaseModel):
    """Formato del archivo de topología (JSON o YAML)"""
    nodes: int = Field(ge=1)
    cores_per_node: int = Field(ge=1)
    distance: Union[Literal["auto"], List[List[float]]] = "auto"


class BenchConfig(BaseModel):
    """Configuración del benchmark de verificación de localidad"""
    allocator: AllocatorName = "psm"
    threads: int = Field(default=8, ge=1)
    topology: Optional[str] = None  # Archivo; None = topología de referencia 32x8
    page_size: Optional[int] = None
    repetitions: int = Field(default=5, ge=1)  # Más una de warm-up
    seed: int = 0
    deterministic: bool = False
    backing: Optional[str] = "virtual"  # 256 threads x 64 MiB no caben en RAM
    blocks_per_thread: int = Field(default=64, ge=1)
    block_bytes: int = Field(default=MIB, ge=0)
    write_blocks: bool = True


class StressConfig(BaseModel):
    allocator: AllocatorName = "psm"
    threads: int = Field(default=64, ge=1)
    ops: int = Field(default=1_000_000, ge=1)
    topology: Optional[str] = None
    page_size: Optional[int] = None
    seed: int = 0
    deterministic: bool = False
    backing: Optional[str] = None
    max_live_per_thread: int = Field(default=64, ge=1)
    large_fraction: float = Field(default=0.01, ge=0.0, le=1.0)
    max_large_bytes: int = Field(default=MIB, ge=1)
    cross_free_fraction: float = Field(default=0.25, ge=0.0, le=1.0)
    bad_free_fraction: float = Field(default=0.005, ge=0.0, le=1.0)
    inject_double_free: bool = False


class AdvectionConfig(BaseModel):
    """Mini-app de advección lineal 2D con intercambio de halos"""
    nodes: List[int] = Field(default_factory=lambda: [1, 2, 4, 8, 16, 32])
    topology: Optional[str] = None
    page_size: Optional[int] = None
    patch_cells: int = Field(default=184, ge=1)  # Celdas interiores por lado
    halo: int = Field(default=1, ge=1)
    timesteps: int = Field(default=20, ge=1)
    grid: Optional[List[int]] = None  # [ny, nx] en celdas; debe partirse exacto en patches
    velocity: List[float] = Field(default_factory=lambda: [0.5, 0.25])  # Courant [cy, cx]
    seed: int = 0
    deterministic: bool = False

    @field_validator("nodes")
    @classmethod
    def _nodes_not_empty(cls, value: List[int]) -> List[int]:
        if not value or any(n < 1 for n in value):
            raise ValueError("nodes debe ser una lista no vacía de enteros >= 1")
        return value

    @field_validator("velocity")
    @classmethod
    def _stable_courant(cls, value: List[float]) -> List[float]:
        if len(value) != 2 or any(c < 0 for c in value) or sum(value) > 1.0:
            raise ValueError("velocity debe ser [cy, cx] >= 0 con cy + cx <= 1")
        return value
