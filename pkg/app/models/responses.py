from pydantic import BaseModel, Field
from typing import Any, Dict, List, Optional
import csv
import io


HEAP_CSV_COLUMNS = ["node", "live_bytes", "reserved_bytes", "spans", "remote_blocks"]


class NodeReport(BaseModel):
    node: int
    live_bytes: int = 0  # Vista del llamador (bloques entregados)
    reserved_bytes: int = 0  # Páginas en spans / extents vivos
    spans: int = 0
    remote_blocks: int = 0


class HeapReport(BaseModel):
    """Snapshot del heap en un punto quiescente"""
    allocator: str
    page_size: int
    nodes: List[NodeReport]
    remote_block_count: int = 0
    live_bytes: int = 0
    reserved_bytes: int = 0
    fragmentation: float = 0.0  # % de bytes reservados no entregados
    cached_bytes: int = 0  # Core caches + listas centrales + cache de grandes
    path_counters: Dict[str, int] = Field(default_factory=dict)
    provider: Dict[str, Any] = Field(default_factory=dict)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(HEAP_CSV_COLUMNS)
        for node in self.nodes:
            writer.writerow([node.node, node.live_bytes, node.reserved_bytes, node.spans, node.remote_blocks])
        return buffer.getvalue()


class RepetitionResult(BaseModel):
    repetition: int  # 0 = warm-up
    remote_pages: int
    local_pages: int
    unbound_pages: int = 0
    modeled_cost: float  # Σ access_cost(escritor, nodo de la página) por página escrita
    pages_allocated: int  # Páginas nuevas pedidas al proveedor en la repetición
    wall_time_s: float  # Informativo


class RunResult(BaseModel):
    """Resultado de la verificación de localidad para un número de threads"""
    allocator: str
    threads: int
    nodes_used: int
    page_size: int
    mode: str  # "threaded" | "deterministic"
    repetitions: List[RepetitionResult]
    remote_pages: int  # Mediana de las repeticiones medidas
    local_pages: int
    modeled_cost: float
    requested_bytes: int
    reserved_bytes: int
    fragmentation: float
    wall_time_s: float
    heap: Optional[HeapReport] = None

    @property
    def measured(self) -> List[RepetitionResult]:
        return [r for r in self.repetitions if r.repetition > 0]


class VerifyReport(BaseModel):
    allocator: str
    runs: List[RunResult]
    passed: bool
    failures: List[str] = Field(default_factory=list)


class FragTable(BaseModel):
    """Grilla de fragmentación: filas = tamaños de página, columnas = tamaños de dato"""
    data_sizes: List[int]
    page_sizes: List[int]
    cells: List[List[float]]

    def cell(self, page_size: int, data_size: int) -> float:
        return self.cells[self.page_sizes.index(page_size)][self.data_sizes.index(data_size)]


class Violation(BaseModel):
    kind: str  # overlap | alignment | locality | false_sharing | double_free | corruption | error
    op_index: int
    tid: int
    message: str
    details: Dict[str, Any] = Field(default_factory=dict)


class StressResult(BaseModel):
    allocator: str
    threads: int
    ops: int
    seed: int
    mode: str
    passed: bool
    violations: List[Violation] = Field(default_factory=list)
    first_violation_op: Optional[int] = None
    reproducing_prefix: Optional[int] = None  # Ops a re-ejecutar (modo determinista, misma semilla)
    path_counters: Dict[str, int] = Field(default_factory=dict)
    bad_free_checks: Dict[str, int] = Field(default_factory=dict)
    peak_live_blocks: int = 0
    limitations: List[str] = Field(default_factory=list)  # Chequeos que el modo no cubre
    wall_time_s: float = 0.0


class PhaseCost(BaseModel):
    local_pages: int = 0
    remote_pages: int = 0
    modeled_cost: float = 0.0


class AdvectArm(BaseModel):
    placement: str  # "psm-owner" | "first-touch-initializer"
    local_pages: int
    remote_pages: int
    modeled_cost: float
    phases: Dict[str, PhaseCost]
    checksum: float
    wall_time_s: float


class AdvectResult(BaseModel):
    nodes: int
    threads: int
    grid: List[int]  # celdas [ny, nx]
    thread_grid: List[int]  # patches [py, px]
    timesteps: int
    psm: AdvectArm
    first_touch: AdvectArm
    improvement_ratio: float  # coste first-touch / coste psm


class AdvectSweep(BaseModel):
    points: List[AdvectResult]
    passed: bool
    failures: List[str] = Field(default_factory=list)
