from dataclasses import dataclass
from typing import List, Optional


@dataclass(frozen=True)
class PageExtent:
    """Run contiguo de páginas ligado a un nodo NUMA (node=None mientras no esté ligado)"""
    base: int
    num_pages: int
    page_size: int
    node: Optional[int]

    @property
    def nbytes(self) -> int:
        return self.num_pages * self.page_size

    @property
    def end(self) -> int:
        return self.base + self.nbytes

    @property
    def first_page(self) -> int:
        return self.base // self.page_size


@dataclass(frozen=True)
class ProviderStats:
    """Snapshot de contadores del proveedor de páginas"""
    pages_live_per_node: List[int]
    pages_unbound: int  # Páginas vivas aún sin first-touch
    pages_total_allocated: int
    allocation_calls: int
    release_calls: int


@dataclass(frozen=True)
class ThreadBinding:
    """Ligadura inmutable thread → core → nodo"""
    tid: int
    core: int
    node: int


@dataclass(frozen=True)
class SizeClass:
    """Clase de tamaño: bloque, geometría del span y lote de transferencia"""
    index: int
    block_size: int
    pages_per_span: int
    batch_size: int

    @property
    def alignment(self) -> int:
        # Los bloques se cortan a stride block_size desde una base alineada a página
        return min(self.block_size & -self.block_size, 16)
