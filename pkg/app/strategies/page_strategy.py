"""
Base de los asignadores a granularidad de página (sin clases de tamaño).
Cada pedido se redondea a páginas enteras: la fragmentación es la del cálculo por página.
"""
import math
import threading
from abc import abstractmethod
from dataclasses import dataclass
from typing import Dict

from app.domain.entities import PageExtent
from app.models.responses import HeapReport, NodeReport
from app.shared.errors import StateError
from app.strategies.allocator_strategy import AllocatorStrategy


@dataclass(frozen=True)
class PageBlock:
    extent: PageExtent
    owner_node: int
    requested: int


class PageGranularStrategy(AllocatorStrategy):
    """Un extent del proveedor por bloque; liberar devuelve las páginas al proveedor"""

    def __init__(self, topology, registry, provider, settings=None):
        super().__init__(topology, registry, provider, settings)
        self._live: Dict[int, PageBlock] = {}
        self._counters_lock = threading.Lock()
        self._counters = {"allocs": 0, "frees": 0}

    @abstractmethod
    def _allocate_extent(self, num_pages: int, owner_node: int) -> PageExtent:
        """Pedir al proveedor num_pages páginas para un bloque de owner_node"""

    def _alloc_pages(self, nbytes: int, tid: int) -> int:
        owner_node = self.registry.node_of_thread(tid)
        num_pages = max(1, math.ceil(nbytes / self.provider.page_size))
        extent = self._allocate_extent(num_pages, owner_node)
        self._live[extent.base] = PageBlock(extent, owner_node, nbytes)
        self._count("allocs")
        return extent.base

    def _free_pages(self, addr: int) -> None:
        block = self._live.pop(addr, None)
        if block is None:
            raise StateError(f"Dirección desconocida o ya liberada: 0x{addr:x}")
        self.provider.release_pages(block.extent)
        self._count("frees")

    def _count(self, key: str, amount: int = 1) -> None:
        with self._counters_lock:
            self._counters[key] = self._counters.get(key, 0) + amount

    def usable_size(self, addr: int) -> int:
        block = self._live.get(addr)
        if block is None:
            raise StateError(f"Dirección desconocida: 0x{addr:x}")
        return block.extent.nbytes

    def path_counters(self) -> Dict[str, int]:
        with self._counters_lock:
            return dict(self._counters)

    def report(self) -> HeapReport:
        nodes = {n: NodeReport(node=n) for n in range(self.topology.num_nodes)}
        for block in list(self._live.values()):
            entry = nodes[block.owner_node]
            entry.live_bytes += block.requested
            entry.reserved_bytes += block.extent.nbytes
            entry.spans += 1
            _, remote, _ = self.provider.page_census(
                block.extent.base, block.extent.nbytes, block.owner_node
            )
            if remote:
                entry.remote_blocks += 1
        rows = list(nodes.values())
        live = sum(n.live_bytes for n in rows)
        reserved = sum(n.reserved_bytes for n in rows)
        return HeapReport(
            allocator=self.name,
            page_size=self.provider.page_size,
            nodes=rows,
            remote_block_count=sum(n.remote_blocks for n in rows),
            live_bytes=live,
            reserved_bytes=reserved,
            fragmentation=(reserved - live) / reserved * 100.0 if reserved else 0.0,
            path_counters=self.path_counters(),
            provider=self.provider.report(),
        )
