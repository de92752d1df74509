"""
Asignador first-touch (estilo mmap de GLIBC).
Las páginas nacen sin ligar; la primera escritura las liga al nodo del thread que escribe.
"""
import logging
from typing import List, Optional, Tuple

from app.domain.entities import PageExtent
from app.strategies.allocator_strategy import register_strategy
from app.strategies.page_strategy import PageGranularStrategy

logger = logging.getLogger(__name__)


@register_strategy
class FirstTouchAllocator(PageGranularStrategy):
    """
    Baseline idealizado: la ligadura depende solo de quién escribe primero.
    El log de ligaduras permite recalcular las páginas remotas.
    """

    name = "first-touch"
    locality_guaranteed = True  # Solo si el dueño escribe primero

    def __init__(self, topology, registry, provider, settings=None):
        super().__init__(topology, registry, provider, settings)
        # (addr, length, nodo del escritor, páginas ligadas)
        self.binding_log: List[Tuple[int, int, int, int]] = []

    def _allocate_extent(self, num_pages: int, owner_node: int) -> PageExtent:
        return self.provider.allocate_unbound(num_pages)

    def ft_alloc(self, nbytes: int, tid: int) -> int:
        return self._alloc_pages(nbytes, tid)

    def ft_write(self, addr: int, length: int, tid: int, value: int = 0) -> int:
        """
        Escribir desde tid; liga las páginas aún vírgenes al nodo de tid.

        Returns:
            Páginas ligadas por esta escritura
        """
        node = self.registry.node_of_thread(tid)
        bound = self.provider.bind_untouched(addr, length, node)
        if bound:
            self.binding_log.append((addr, length, node, bound))
            self._count("pages_bound", bound)
        self.provider.fill(addr, length, value)
        return bound

    def ft_free(self, addr: int) -> None:
        self._free_pages(addr)

    def alloc(self, nbytes: int, tid: int) -> int:
        return self.ft_alloc(nbytes, tid)

    def free(self, addr: int, tid: Optional[int] = None) -> None:
        self.ft_free(addr)

    def write(self, addr: int, length: int, tid: int, value: int = 0) -> None:
        self.ft_write(addr, length, tid, value)
