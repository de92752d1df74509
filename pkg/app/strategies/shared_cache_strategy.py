"""
Asignador con caches compartidos sin conciencia NUMA (estilo TCMalloc).

Un único heap global con caches por core. Las páginas nuevas se reparten
round-robin entre los nodos ocupados por threads registrados, así que un
cache puede servir bloques remotos y una página puede alojar bloques de
dueños de distintos nodos.
"""
import logging
from typing import Dict, List, Optional

from app.infra.core_cache import CoreCache
from app.infra.lock_audit import AuditedLock
from app.infra.node_heap import NodeHeap, SpanState
from app.infra.page_map import PageMap
from app.domain.size_classes import build_table
from app.models.responses import HeapReport, NodeReport
from app.shared.errors import RangeError, StateError
from app.strategies.allocator_strategy import AllocatorStrategy, register_strategy

logger = logging.getLogger(__name__)

GLOBAL_HEAP = 0


@register_strategy
class SharedCacheAllocator(AllocatorStrategy):
    name = "shared-cache"
    locality_guaranteed = False

    def __init__(self, topology, registry, provider, settings=None):
        super().__init__(topology, registry, provider, settings)
        self.page_map = PageMap(provider.page_size)
        self.table = build_table(
            provider.page_size,
            batch_bytes=self.settings.central_batch_bytes,
            max_batch=self.settings.max_batch_size,
        )
        # Una sola región de exclusión para listas centrales y objetos grandes
        self.lock = AuditedLock("shared_heap", GLOBAL_HEAP)
        self._next = 0
        self.heap = NodeHeap(
            heap_id=GLOBAL_HEAP,
            provider=provider,
            page_map=self.page_map,
            table=self.table,
            placement=self._round_robin,
            shared_lock=self.lock,
            settings=self.settings,
        )
        self.core_caches: List[CoreCache] = [
            CoreCache(core, topology.node_of_core(core), self.heap, self.settings)
            for core in range(topology.total_cores)
        ]
        # bloque → nodo del dueño que lo pidió
        self._owners: Dict[int, int] = {}

    def _round_robin(self) -> int:
        # Se llama con self.lock tomado
        nodes = self.registry.occupied_nodes() or [0]
        node = nodes[self._next % len(nodes)]
        self._next += 1
        return node

    def sc_alloc(self, nbytes: int, tid: int) -> int:
        binding = self.registry.binding(tid)
        if nbytes < 0:
            raise RangeError(f"Tamaño negativo: {nbytes}")
        size_class = self.table.class_for_size(nbytes)
        if size_class is None:
            span = self.heap.allocate_large(nbytes)
            block = span.base
        else:
            block = self.core_caches[binding.core].cache_alloc(size_class)
            span = self.page_map.lookup(block)
        span.live_blocks.add(block)
        self._owners[block] = binding.node
        return block

    def sc_free(self, addr: int, tid: Optional[int] = None) -> None:
        span = self.page_map.lookup(addr)
        if span is None:
            raise StateError(f"Dirección desconocida: 0x{addr:x}")
        if span.state == SpanState.LARGE:
            if addr != span.base:
                raise StateError(f"0x{addr:x} apunta al interior del objeto grande 0x{span.base:x}")
            self._owners.pop(addr, None)
            self.heap.free_large(span)
            return
        if span.state != SpanState.ASSIGNED:
            raise StateError(f"Doble free de 0x{addr:x}")
        span.check_block(addr)
        try:
            span.live_blocks.remove(addr)
        except KeyError:
            raise StateError(f"Doble free de 0x{addr:x}") from None
        self._owners.pop(addr, None)

        if tid is None:
            tid = self.registry.current_tid()
        if tid is not None and self.registry.is_registered(tid):
            self.core_caches[self.registry.binding(tid).core].cache_free(span.size_class, addr)
        else:
            self.heap.return_blocks(span.size_class, [addr])

    def alloc(self, nbytes: int, tid: int) -> int:
        return self.sc_alloc(nbytes, tid)

    def free(self, addr: int, tid: Optional[int] = None) -> None:
        self.sc_free(addr, tid)

    def usable_size(self, addr: int) -> int:
        span = self.page_map.lookup(addr)
        if span is None:
            raise StateError(f"Dirección desconocida: 0x{addr:x}")
        return span.nbytes if span.state == SpanState.LARGE else span.block_size

    def alignment_for(self, nbytes: int) -> int:
        size_class = self.table.class_for_size(nbytes)
        if size_class is None:
            return self.provider.page_size
        return self.table[size_class].alignment

    def path_counters(self) -> Dict[str, int]:
        return {
            "small_allocs": sum(c.alloc_calls for c in self.core_caches),
            "large_allocs": self.heap.large_allocs,
            "core_cache_frees": sum(c.free_calls for c in self.core_caches),
            "large_frees": self.heap.large_frees,
        }

    def report(self) -> HeapReport:
        nodes = {n: NodeReport(node=n) for n in range(self.topology.num_nodes)}
        for span in self.heap.spans():
            if span.state not in (SpanState.ASSIGNED, SpanState.LARGE):
                continue
            entry = nodes[span.node]
            entry.spans += 1
            entry.reserved_bytes += span.nbytes
            for block in list(span.live_blocks):
                entry.live_bytes += span.block_size
                owner = self._owners.get(block)
                if owner is not None and self.provider.count_remote(block, span.block_size, owner):
                    nodes[owner].remote_blocks += 1
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
            cached_bytes=sum(c.cached_bytes for c in self.core_caches) + self.heap.large_cached_bytes,
            path_counters=self.path_counters(),
            provider=self.provider.report(),
        )
