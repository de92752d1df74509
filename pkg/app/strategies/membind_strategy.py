"""
Asignador con política de memoria explícita (estilo numactl --membind).
Liga las páginas al nodo del dueño al asignar: localidad total, pero
una ida al proveedor por bloque y fragmentación a granularidad de página.
"""
from typing import Optional

from app.domain.entities import PageExtent
from app.strategies.allocator_strategy import register_strategy
from app.strategies.page_strategy import PageGranularStrategy


@register_strategy
class MembindAllocator(PageGranularStrategy):
    name = "membind"
    locality_guaranteed = True

    def _allocate_extent(self, num_pages: int, owner_node: int) -> PageExtent:
        return self.provider.allocate_pages(num_pages, owner_node)

    def mb_alloc(self, nbytes: int, tid: int) -> int:
        return self._alloc_pages(nbytes, tid)

    def mb_free(self, addr: int) -> None:
        self._free_pages(addr)

    def alloc(self, nbytes: int, tid: int) -> int:
        return self.mb_alloc(nbytes, tid)

    def free(self, addr: int, tid: Optional[int] = None) -> None:
        self.mb_free(addr)
