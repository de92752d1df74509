"""
Cache de bloques por core, primer nivel del camino de servicio.

Muchos threads pueden pedir bloques al mismo core, así que cada cache
tiene su propio lock. Un cache solo guarda bloques de su heap.
"""
import logging
from typing import List, Optional

from app.config import Settings, get_settings
from app.infra.lock_audit import AuditedLock
from app.infra.node_heap import NodeHeap
from app.shared.errors import RangeError, StateError

logger = logging.getLogger(__name__)


class CoreCache:
    """
    Listas LIFO por clase frente a las listas centrales de un heap.

    - Watermark por clase: 2 x batch_size
    - Tope por core: core_cache_cap_bytes; al excederlo se vacía hacia la lista central
    """

    def __init__(
        self,
        core: int,
        node: int,
        heap: NodeHeap,
        settings: Optional[Settings] = None,
    ):
        settings = settings or get_settings()
        self.core = core
        self.node = node
        self.heap = heap
        self.table = heap.table
        self.cap_bytes = settings.core_cache_cap_bytes
        self.lock = AuditedLock("core_cache", core)
        self._lists: List[List[int]] = [[] for _ in range(len(self.table))]
        self.cached_bytes = 0
        self.alloc_calls = 0
        self.free_calls = 0
        self.hits = 0
        self.misses = 0
        self.central_fetches = 0
        self.flushes = 0

    def watermark(self, size_class: int) -> int:
        return 2 * self.table[size_class].batch_size

    def cache_alloc(self, size_class: int) -> int:
        """
        Servir un bloque de la clase; en fallo se rellena un lote desde la lista central.

        Raises:
            RangeError: Si la clase no existe
            HeapOutOfMemoryError: Si el proveedor no tiene páginas
        """
        self._check_class(size_class)
        sc = self.table[size_class]
        with self.lock:
            self.alloc_calls += 1
            blocks = self._lists[size_class]
            if blocks:
                self.hits += 1
            else:
                self.misses += 1
                self.central_fetches += 1
                refill = self.heap.fetch_blocks(size_class, sc.batch_size)
                # LIFO: el primer bloque del lote queda arriba
                blocks.extend(reversed(refill))
                self.cached_bytes += len(refill) * sc.block_size
            self.cached_bytes -= sc.block_size
            return blocks.pop()

    def cache_free(self, size_class: int, block: int) -> None:
        """
        Cachear un bloque liberado por un thread de este nodo.

        Raises:
            StateError: Si el bloque pertenece a otro heap (debe ir a su lista central)
        """
        self._check_class(size_class)
        span = self.heap.page_map.lookup(block)
        if span is None or span.heap_id != self.heap.heap_id:
            owner = None if span is None else span.heap_id
            raise StateError(
                f"Bloque remoto 0x{block:x} (heap {owner}) en el cache del core {self.core}",
                details={"core": self.core, "node": self.node},
            )
        if span.size_class != size_class:
            raise StateError(f"Bloque 0x{block:x} no es de la clase {size_class}")

        sc = self.table[size_class]
        with self.lock:
            self.free_calls += 1
            blocks = self._lists[size_class]
            blocks.append(block)
            self.cached_bytes += sc.block_size
            if len(blocks) > self.watermark(size_class):
                self._flush(size_class, sc.batch_size)
            while self.cached_bytes > self.cap_bytes:
                largest = max(
                    range(len(self._lists)),
                    key=lambda c: len(self._lists[c]) * self.table[c].block_size,
                )
                self._flush(largest, len(self._lists[largest]))

    def flush_all(self) -> int:
        """Devolver todos los bloques cacheados a sus listas centrales"""
        with self.lock:
            flushed = 0
            for size_class, blocks in enumerate(self._lists):
                if blocks:
                    flushed += len(blocks)
                    self._flush(size_class, len(blocks))
            return flushed

    def _flush(self, size_class: int, count: int) -> None:
        blocks = self._lists[size_class]
        # los más antiguos están al fondo de la pila
        victims = blocks[:count]
        del blocks[:count]
        self.cached_bytes -= len(victims) * self.table[size_class].block_size
        self.flushes += 1
        self.heap.return_blocks(size_class, victims)

    def cached_blocks(self, size_class: Optional[int] = None) -> List[int]:
        if size_class is not None:
            return list(self._lists[size_class])
        return [block for blocks in self._lists for block in blocks]

    def _check_class(self, size_class: int) -> None:
        if not 0 <= size_class < len(self._lists):
            raise RangeError(f"Clase {size_class} fuera de rango")
