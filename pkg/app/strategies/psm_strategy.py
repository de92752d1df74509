"""
Strategy del asignador NUMA particionado.
"""
from typing import Dict, Optional

from app.infra.psm_heap import PsmHeap
from app.models.responses import HeapReport
from app.strategies.allocator_strategy import AllocatorStrategy, register_strategy


@register_strategy
class PsmStrategy(AllocatorStrategy):
    """psm_alloc / psm_free sobre un PsmHeap que comparte el proveedor de la estrategia"""

    name = "psm"
    locality_guaranteed = True

    def __init__(self, topology, registry, provider, settings=None):
        super().__init__(topology, registry, provider, settings)
        self.heap = PsmHeap(topology, registry=registry, provider=provider, settings=self.settings)

    def alloc(self, nbytes: int, tid: int) -> int:
        return self.heap.psm_alloc(nbytes, owner=tid)

    def free(self, addr: int, tid: Optional[int] = None) -> None:
        self.heap.psm_free(addr, caller=tid)

    def usable_size(self, addr: int) -> int:
        return self.heap.usable_size(addr)

    def alignment_for(self, nbytes: int) -> int:
        size_class = self.heap.table.class_for_size(nbytes)
        if size_class is None:
            return self.provider.page_size
        return self.heap.table[size_class].alignment

    def path_counters(self) -> Dict[str, int]:
        return self.heap.path_counters()

    def report(self) -> HeapReport:
        return self.heap.heap_report()
