"""
Heap de memoria compartida particionada.

Dos entradas esenciales:
- psm_alloc(bytes, owner): el bloque queda en páginas del nodo del thread dueño
- psm_free(addr): libre de ubicación; el page map resuelve el heap dueño

El heap está partido en un NodeHeap por nodo y un CoreCache por core, todos
sobre un único PageMap y una única SizeClassTable. Ningún camino de
alloc/free toma un lock global.
"""
import logging
from typing import List, Optional

from app.config import Settings, get_settings
from app.domain.size_classes import SizeClassTable, build_table
from app.domain.topology import NumaTopology, ThreadRegistry
from app.infra.core_cache import CoreCache
from app.infra.node_heap import NodeHeap, Span, SpanState
from app.infra.page_map import PageMap
from app.infra.sim_page_provider import SimPageProvider
from app.models.responses import HeapReport, NodeReport
from app.shared.errors import RangeError, StateError

logger = logging.getLogger(__name__)


class PsmHeap:
    """
    Fachada pública del asignador NUMA.

    Args:
        topology: Máquina simulada
        registry: Registro thread → core; se crea uno vacío si no se indica
        provider: Proveedor de páginas; se crea uno con la configuración si no se indica
        page_size: Tamaño de página (por defecto, el de settings)
        backing: "mmap" o "virtual"
    """

    name = "psm"

    def __init__(
        self,
        topology: NumaTopology,
        registry: Optional[ThreadRegistry] = None,
        provider: Optional[SimPageProvider] = None,
        page_size: Optional[int] = None,
        backing: Optional[str] = None,
        settings: Optional[Settings] = None,
    ):
        settings = settings or get_settings()
        self.topology = topology
        self.registry = registry or ThreadRegistry(topology, settings.exclusive_cores)
        self.provider = provider or SimPageProvider(
            topology, page_size=page_size, backing=backing, settings=settings
        )
        self.page_map = PageMap(self.provider.page_size)
        self.table: SizeClassTable = build_table(
            self.provider.page_size,
            batch_bytes=settings.central_batch_bytes,
            max_batch=settings.max_batch_size,
        )
        self.node_heaps: List[NodeHeap] = [
            NodeHeap(
                heap_id=node,
                provider=self.provider,
                page_map=self.page_map,
                table=self.table,
                placement=lambda node=node: node,
                settings=settings,
            )
            for node in range(topology.num_nodes)
        ]
        self.core_caches: List[CoreCache] = [
            CoreCache(core, topology.node_of_core(core), self.node_heaps[topology.node_of_core(core)], settings)
            for core in range(topology.total_cores)
        ]
        logger.info(
            f"🧠 PsmHeap ready: {topology.num_nodes} node heaps, {topology.total_cores} core caches, "
            f"{len(self.table)} size classes"
        )

    # ------------------------------------------------------------------
    # API esencial
    # ------------------------------------------------------------------
    def psm_alloc(self, nbytes: int, owner: int) -> int:
        """
        Asignar un bloque en la memoria local del thread dueño.

        Args:
            nbytes: Bytes útiles pedidos (0 devuelve un bloque mínimo)
            owner: Thread dueño; debe estar registrado

        Returns:
            Dirección del bloque

        Raises:
            StateError: Si owner no está registrado
            RangeError: Si nbytes es negativo
            HeapOutOfMemoryError: Si el nodo no tiene páginas
        """
        binding = self.registry.binding(owner)
        return self._alloc(nbytes, binding.node, self.core_caches[binding.core])

    def psm_alloc_on_node(self, nbytes: int, node: int) -> int:
        """Variante por nodo: usa el primer core del nodo como cache"""
        self.topology.check_node(node)
        core = self.topology.cores_of_node(node)[0]
        return self._alloc(nbytes, node, self.core_caches[core])

    def _alloc(self, nbytes: int, node: int, cache: CoreCache) -> int:
        if nbytes < 0:
            raise RangeError(f"Tamaño negativo: {nbytes}")
        size_class = self.table.class_for_size(nbytes)
        if size_class is None:
            span = self.node_heaps[node].allocate_large(nbytes)
            span.live_blocks.add(span.base)
            return span.base

        block = cache.cache_alloc(size_class)
        self.page_map.lookup(block).live_blocks.add(block)
        return block

    def psm_free(self, addr: int, caller: Optional[int] = None) -> None:
        """
        Liberar un bloque desde cualquier thread.

        Mismo nodo que el dueño → core cache del llamador; otro nodo (o llamador
        desconocido) → lista central del heap dueño; grandes → camino grande.

        Raises:
            StateError: Dirección desconocida, interior o doble free
        """
        span = self._span_of(addr)
        if span.state == SpanState.LARGE:
            if addr != span.base:
                raise StateError(f"0x{addr:x} apunta al interior del objeto grande 0x{span.base:x}")
            self.node_heaps[span.heap_id].free_large(span)
            return
        if span.state != SpanState.ASSIGNED:
            raise StateError(f"Doble free de 0x{addr:x}")

        span.check_block(addr)
        try:
            span.live_blocks.remove(addr)
        except KeyError:
            raise StateError(f"Doble free de 0x{addr:x}") from None

        tid = caller if caller is not None else self.registry.current_tid()
        if tid is not None and self.registry.is_registered(tid):
            binding = self.registry.binding(tid)
            if binding.node == span.heap_id:
                self.core_caches[binding.core].cache_free(span.size_class, addr)
                return
        self.node_heaps[span.heap_id].return_blocks(span.size_class, [addr])

    # ------------------------------------------------------------------
    # Consultas
    # ------------------------------------------------------------------
    def _span_of(self, addr: int) -> Span:
        span = self.page_map.lookup(addr)
        if span is None:
            raise StateError(f"Dirección desconocida: 0x{addr:x}")
        return span

    def owner_node_of(self, addr: int) -> int:
        """
        Nodo del span dueño de addr (vale cualquier dirección dentro del bloque).

        Raises:
            StateError: Si addr no pertenece a un bloque vivo
        """
        span = self._span_of(addr)
        if span.state == SpanState.CACHED:
            raise StateError(f"0x{addr:x} pertenece a un objeto grande liberado")
        if span.state == SpanState.ASSIGNED:
            block = addr - (addr - span.base) % span.block_size
            if block not in span.live_blocks:
                raise StateError(f"0x{addr:x} pertenece a un bloque libre")
        return span.heap_id

    def usable_size(self, addr: int) -> int:
        span = self._span_of(addr)
        if span.state == SpanState.LARGE:
            return span.nbytes
        return span.block_size

    def write(self, addr: int, data: bytes) -> None:
        self.provider.write(addr, data)

    def fill(self, addr: int, length: int, value: int) -> None:
        self.provider.fill(addr, length, value)

    def read(self, addr: int, length: int) -> bytes:
        return self.provider.read(addr, length)

    def remote_block_count(self) -> int:
        return sum(self._remote_blocks(heap) for heap in self.node_heaps)

    def _remote_blocks(self, heap: NodeHeap) -> int:
        remote = 0
        for span in heap.spans():
            if span.state not in (SpanState.ASSIGNED, SpanState.LARGE):
                continue
            if self.provider.count_remote(span.base, span.nbytes, span.heap_id) == 0:
                continue
            for block in list(span.live_blocks):
                if self.provider.count_remote(block, span.block_size, span.heap_id):
                    remote += 1
        return remote

    def path_counters(self) -> dict:
        return {
            "small_allocs": sum(c.alloc_calls for c in self.core_caches),
            "large_allocs": sum(h.large_allocs for h in self.node_heaps),
            "core_cache_frees": sum(c.free_calls for c in self.core_caches),
            "central_returns": sum(sum(cl.return_calls for cl in h.central) for h in self.node_heaps),
            "central_fetches": sum(c.central_fetches for c in self.core_caches),
            "large_frees": sum(h.large_frees for h in self.node_heaps),
            "large_reuse_hits": sum(h.large_reuse_hits for h in self.node_heaps),
        }

    def heap_report(self) -> HeapReport:
        """Snapshot consistente del heap (llamar en un punto quiescente)"""
        nodes = []
        cached = sum(c.cached_bytes for c in self.core_caches)
        for heap in self.node_heaps:
            stats = heap.stats()
            nodes.append(NodeReport(
                node=heap.heap_id,
                live_bytes=stats["live_bytes"],
                reserved_bytes=stats["reserved_bytes"],
                spans=stats["spans"],
                remote_blocks=self._remote_blocks(heap),
            ))
            cached += stats["large_cached_bytes"] + sum(
                cl.cached_blocks() * cl.block_size for cl in heap.central
            )
        live = sum(n.live_bytes for n in nodes)
        reserved = sum(n.reserved_bytes for n in nodes)
        return HeapReport(
            allocator=self.name,
            page_size=self.provider.page_size,
            nodes=nodes,
            remote_block_count=sum(n.remote_blocks for n in nodes),
            live_bytes=live,
            reserved_bytes=reserved,
            fragmentation=(reserved - live) / reserved * 100.0 if reserved else 0.0,
            cached_bytes=cached,
            path_counters=self.path_counters(),
            provider=self.provider.report(),
        )
