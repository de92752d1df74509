"""
Heap independiente por nodo NUMA.

Cada NodeHeap gestiona sus spans, una lista central por clase de tamaño y
el camino de objetos grandes con su cache de reutilización. Los locks son
por (nodo, clase) y por nodo para objetos grandes; las páginas nuevas se
piden al proveedor mediante la política de ubicación del heap.
"""
import logging
import math
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Deque, Dict, List, Optional, Set

from app.config import Settings, get_settings
from app.domain.entities import PageExtent
from app.domain.events import LargeSpanEvictedEvent, SpanReclaimedEvent
from app.domain.size_classes import SizeClassTable
from app.infra.event_bus import get_event_bus
from app.infra.lock_audit import AuditedLock
from app.infra.page_map import PageMap
from app.infra.sim_page_provider import SimPageProvider
from app.shared.errors import RangeError, StateError

logger = logging.getLogger(__name__)

# Devuelve el nodo donde ligar las próximas páginas del heap
Placement = Callable[[], int]


class SpanState(str, Enum):
    FREE = "free"
    ASSIGNED = "assigned"
    LARGE = "large"
    CACHED = "cached"


@dataclass(eq=False)
class Span:
    """Run de páginas gestionado como unidad: bloques de una clase o un objeto grande"""
    extent: PageExtent
    heap_id: int
    state: SpanState = SpanState.FREE
    size_class: Optional[int] = None
    block_size: int = 0
    free_blocks: List[int] = field(default_factory=list)
    carved: int = 0  # bloques ya cortados (el resto sigue virgen)
    allocated_count: int = 0  # bloques fuera de la lista central
    live_blocks: Set[int] = field(default_factory=set)  # bloques en manos del llamador
    requested_bytes: int = 0

    @property
    def base(self) -> int:
        return self.extent.base

    @property
    def node(self) -> int:
        return self.extent.node

    @property
    def nbytes(self) -> int:
        return self.extent.nbytes

    @property
    def total_blocks(self) -> int:
        if self.state == SpanState.ASSIGNED:
            return self.nbytes // self.block_size
        return 1

    @property
    def free_count(self) -> int:
        return len(self.free_blocks) + self.total_blocks - self.carved

    def check_block(self, addr: int) -> int:
        """
        Validar que addr es el inicio de un bloque del span.

        Raises:
            StateError: Si addr apunta al interior de un bloque o fuera del área útil
        """
        offset = addr - self.base
        if offset < 0 or offset % self.block_size or offset // self.block_size >= self.total_blocks:
            raise StateError(
                f"0x{addr:x} no es el inicio de un bloque de {self.block_size} B",
                details={"span": hex(self.base), "size_class": self.size_class},
            )
        return addr

    def pop_blocks(self, k: int) -> List[int]:
        taken = []
        while self.free_blocks and len(taken) < k:
            taken.append(self.free_blocks.pop())
        while self.carved < self.total_blocks and len(taken) < k:
            taken.append(self.base + self.carved * self.block_size)
            self.carved += 1
        self.allocated_count += len(taken)
        return taken


class CentralFreeList:
    """Lista central de una clase en un heap de nodo"""

    def __init__(self, heap: "NodeHeap", size_class: int, lock: Optional[AuditedLock] = None):
        self.heap = heap
        self.size_class = size_class
        self.block_size = heap.table[size_class].block_size
        self.lock = lock or AuditedLock("central_list", (heap.heap_id, size_class))
        self._nonempty: "OrderedDict[Span, None]" = OrderedDict()
        self.fetch_calls = 0
        self.return_calls = 0
        self.spans_created = 0
        self.spans_reclaimed = 0

    @property
    def node(self) -> int:
        return self.heap.heap_id

    def fetch_blocks(self, k: int) -> List[int]:
        """
        Entregar entre 1 y k bloques de la clase.

        Si la lista está vacía, corta un span nuevo ligado al nodo del heap.

        Raises:
            ValueError: Si k < 1
            HeapOutOfMemoryError: Si el proveedor no tiene páginas
        """
        if k < 1:
            raise ValueError(f"k debe ser >= 1 (recibido {k})")
        with self.lock:
            self.fetch_calls += 1
            blocks: List[int] = []
            while len(blocks) < k and self._nonempty:
                span = next(iter(self._nonempty))
                blocks.extend(span.pop_blocks(k - len(blocks)))
                if span.free_count == 0:
                    del self._nonempty[span]
            if not blocks:
                span = self.heap.new_class_span(self.size_class)
                self.spans_created += 1
                blocks = span.pop_blocks(k)
                if span.free_count:
                    self._nonempty[span] = None
            return blocks

    def return_blocks(self, blocks: List[int]) -> None:
        """
        Devolver bloques a la lista; un span sin bloques fuera se recicla.

        Raises:
            StateError: Si algún bloque no pertenece a este heap y clase
        """
        page_map = self.heap.page_map
        with self.lock:
            spans = []
            for block in blocks:
                span = page_map.lookup(block)
                if (
                    span is None
                    or span.heap_id != self.heap.heap_id
                    or span.state != SpanState.ASSIGNED
                    or span.size_class != self.size_class
                ):
                    raise StateError(
                        f"Bloque 0x{block:x} no pertenece a la lista central "
                        f"(heap {self.heap.heap_id}, clase {self.size_class})"
                    )
                span.check_block(block)
                spans.append(span)

            self.return_calls += 1
            for block, span in zip(blocks, spans):
                if span.free_count == 0:
                    self._nonempty[span] = None
                span.free_blocks.append(block)
                span.allocated_count -= 1
                if span.allocated_count == 0:
                    del self._nonempty[span]
                    self.heap.reclaim_span(span)
                    self.spans_reclaimed += 1

    def cached_blocks(self) -> int:
        return sum(span.free_count for span in list(self._nonempty))


class NodeHeap:
    """
    Heap de un nodo NUMA (o el heap único de un asignador no NUMA).

    Args:
        heap_id: Identificador del heap (el nodo, para heaps NUMA)
        provider: Proveedor de páginas
        page_map: Mapa global de páginas
        table: Tabla de clases de tamaño
        placement: Nodo donde ligar cada span nuevo
        shared_lock: Si se indica, todas las listas y el camino grande lo comparten
    """

    def __init__(
        self,
        heap_id: int,
        provider: SimPageProvider,
        page_map: PageMap,
        table: SizeClassTable,
        placement: Placement,
        shared_lock: Optional[AuditedLock] = None,
        settings: Optional[Settings] = None,
    ):
        settings = settings or get_settings()
        self.heap_id = heap_id
        self.provider = provider
        self.page_map = page_map
        self.table = table
        self.placement = placement
        self.large_cache_max_spans = settings.large_cache_max_spans
        self.large_cache_max_bytes = settings.large_cache_max_bytes
        self.large_lock = shared_lock or AuditedLock("node_large", heap_id)
        self.central = [CentralFreeList(self, c, shared_lock) for c in range(len(table))]
        self._spans: Dict[int, Span] = {}
        self._large_buckets: Dict[int, Deque[Span]] = {}
        self._large_fifo: "OrderedDict[Span, None]" = OrderedDict()
        self.large_cached_bytes = 0
        self.large_allocs = 0
        self.large_frees = 0
        self.large_reuse_hits = 0
        self.large_evictions = 0
        self._event_bus = get_event_bus()

    # ------------------------------------------------------------------
    # Spans de clase
    # ------------------------------------------------------------------
    def new_class_span(self, size_class: int) -> Span:
        """Pedir páginas al proveedor y registrar un span asignado a la clase"""
        sc = self.table[size_class]
        extent = self.provider.allocate_pages(sc.pages_per_span, self.placement())
        span = Span(
            extent=extent,
            heap_id=self.heap_id,
            state=SpanState.ASSIGNED,
            size_class=size_class,
            block_size=sc.block_size,
        )
        self.page_map.register_span(extent, span)
        self._spans[span.base] = span
        return span

    def reclaim_span(self, span: Span) -> None:
        """Devolver al proveedor un span de clase sin bloques fuera"""
        if span.allocated_count != 0:
            raise StateError(f"Span 0x{span.base:x} aún tiene {span.allocated_count} bloques fuera")
        self.page_map.deregister_span(span.extent)
        self._spans.pop(span.base, None)
        span.state = SpanState.FREE
        self.provider.release_pages(span.extent)
        self._event_bus.publish_sync(SpanReclaimedEvent(
            heap_id=self.heap_id,
            size_class=span.size_class,
            base=span.base,
            num_pages=span.extent.num_pages,
        ))

    def fetch_blocks(self, size_class: int, k: int) -> List[int]:
        return self._central(size_class).fetch_blocks(k)

    def return_blocks(self, size_class: int, blocks: List[int]) -> None:
        self._central(size_class).return_blocks(blocks)

    def _central(self, size_class: int) -> CentralFreeList:
        if not 0 <= size_class < len(self.central):
            raise RangeError(f"Clase {size_class} fuera de rango")
        return self.central[size_class]

    # ------------------------------------------------------------------
    # Objetos grandes
    # ------------------------------------------------------------------
    def allocate_large(self, nbytes: int) -> Span:
        """
        Span dedicado de ceil(nbytes / page_size) páginas.

        Reutiliza un span cacheado del mismo número de páginas si existe.

        Raises:
            HeapOutOfMemoryError: Si el proveedor no tiene páginas
        """
        num_pages = max(1, math.ceil(nbytes / self.provider.page_size))
        with self.large_lock:
            self.large_allocs += 1
            bucket = self._large_buckets.get(num_pages)
            if bucket:
                span = bucket.popleft()
                if not bucket:
                    del self._large_buckets[num_pages]
                del self._large_fifo[span]
                self.large_cached_bytes -= span.nbytes
                self.large_reuse_hits += 1
                span.state = SpanState.LARGE
                span.requested_bytes = nbytes
                return span

            extent = self.provider.allocate_pages(num_pages, self.placement())
            span = Span(
                extent=extent,
                heap_id=self.heap_id,
                state=SpanState.LARGE,
                block_size=extent.nbytes,
                requested_bytes=nbytes,
            )
            self.page_map.register_span(extent, span)
            self._spans[span.base] = span
            return span

    def free_large(self, span: Span) -> None:
        """
        Devolver un span grande: queda en el cache del nodo o vuelve al proveedor.

        Raises:
            StateError: Si el span no está vivo (doble free)
        """
        with self.large_lock:
            if span.state != SpanState.LARGE or span.heap_id != self.heap_id:
                raise StateError(f"Doble free del objeto grande 0x{span.base:x}")
            self.large_frees += 1
            span.state = SpanState.CACHED
            span.live_blocks.clear()
            self._large_buckets.setdefault(span.extent.num_pages, deque()).append(span)
            self._large_fifo[span] = None
            self.large_cached_bytes += span.nbytes

            while self._large_fifo and (
                len(self._large_fifo) > self.large_cache_max_spans
                or self.large_cached_bytes > self.large_cache_max_bytes
            ):
                reason = "spans" if len(self._large_fifo) > self.large_cache_max_spans else "bytes"
                self._evict_oldest(reason)

    def _evict_oldest(self, reason: str) -> None:
        victim, _ = self._large_fifo.popitem(last=False)
        bucket = self._large_buckets[victim.extent.num_pages]
        bucket.remove(victim)
        if not bucket:
            del self._large_buckets[victim.extent.num_pages]
        self.large_cached_bytes -= victim.nbytes
        self.large_evictions += 1
        self.page_map.deregister_span(victim.extent)
        self._spans.pop(victim.base, None)
        victim.state = SpanState.FREE
        self.provider.release_pages(victim.extent)
        self._event_bus.publish_sync(LargeSpanEvictedEvent(
            heap_id=self.heap_id,
            base=victim.base,
            num_pages=victim.extent.num_pages,
            reason=reason,
        ))

    def trim_large_cache(self) -> int:
        """Liberar todo el cache de spans grandes; devuelve los spans liberados"""
        with self.large_lock:
            count = len(self._large_fifo)
            while self._large_fifo:
                self._evict_oldest("trim")
        return count

    # ------------------------------------------------------------------
    # Estadísticas
    # ------------------------------------------------------------------
    def spans(self) -> List[Span]:
        return list(self._spans.values())

    def stats(self) -> dict:
        spans = self.spans()
        assigned = [s for s in spans if s.state == SpanState.ASSIGNED]
        large = [s for s in spans if s.state == SpanState.LARGE]
        return {
            "heap_id": self.heap_id,
            "spans": len(assigned) + len(large),
            "class_spans": len(assigned),
            "large_spans": len(large),
            "cached_large_spans": len(self._large_fifo),
            "live_bytes": sum(len(s.live_blocks) * s.block_size for s in assigned)
            + sum(s.nbytes for s in large),
            "reserved_bytes": sum(s.nbytes for s in spans),
            "central_cached_blocks": sum(c.cached_blocks() for c in self.central),
            "large_cached_bytes": self.large_cached_bytes,
            "large_allocs": self.large_allocs,
            "large_reuse_hits": self.large_reuse_hits,
            "large_evictions": self.large_evictions,
        }
