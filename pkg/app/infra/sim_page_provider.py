"""
Proveedor de páginas NUMA simulado.

Reserva regiones grandes (mmap anónimo o solo metadatos), corta extents
de páginas contiguas y registra a qué nodo está ligada cada página.
Sustituye a get_mempolicy: node_of_page responde la ubicación de cualquier
dirección de forma determinista, sin soporte NUMA del sistema operativo.

Espacio de direcciones: cada nodo tiene su propio pool de direcciones
(y hay un pool extra para páginas aún sin ligar). Un pool solo se muta
bajo su lock, de modo que asignaciones de nodos distintos no compiten.
"""
import logging
import math
import mmap
from typing import Dict, List, Optional, Tuple

import numpy as np
from sortedcontainers import SortedList

from app.config import Settings, get_settings
from app.domain.entities import PageExtent, ProviderStats
from app.domain.events import PagesExhaustedEvent
from app.domain.size_classes import SUPPORTED_PAGE_SIZES
from app.domain.topology import NumaTopology
from app.infra.event_bus import get_event_bus
from app.infra.lock_audit import AuditedLock
from app.shared.errors import ConfigError, HeapOutOfMemoryError, StateError

logger = logging.getLogger(__name__)

ADDRESS_BITS = 47
ARENA_BASE = 1 << 32
UNMAPPED = -2
UNBOUND = -1
BACKINGS = ("mmap", "virtual")

# (región, página inicial, página final) relativos a la región
Run = Tuple["Region", int, int]

# MADV_DONTNEED solo descarta el contenido en mapeos privados
_PRIVATE_MAPPING = hasattr(mmap, "MAP_PRIVATE") and hasattr(mmap, "MAP_ANONYMOUS")


def _anonymous_mapping(nbytes: int) -> mmap.mmap:
    if _PRIVATE_MAPPING:
        return mmap.mmap(-1, nbytes, flags=mmap.MAP_PRIVATE | mmap.MAP_ANONYMOUS)
    return mmap.mmap(-1, nbytes)


class Region:
    """Región de reserva: páginas contiguas con su mapa de nodos"""

    __slots__ = ("base", "num_pages", "page_size", "page_nodes", "buffer")

    def __init__(self, base: int, num_pages: int, page_size: int, backing: str):
        self.base = base
        self.num_pages = num_pages
        self.page_size = page_size
        self.page_nodes = np.full(num_pages, UNMAPPED, dtype=np.int16)
        self.buffer = _anonymous_mapping(num_pages * page_size) if backing == "mmap" else None

    @property
    def end(self) -> int:
        return self.base + self.num_pages * self.page_size

    def page_range(self, addr: int, length: int) -> Tuple[int, int]:
        first = (addr - self.base) // self.page_size
        last = (addr + max(length, 1) - 1 - self.base) // self.page_size
        if first < 0 or last >= self.num_pages:
            raise StateError(
                f"Rango 0x{addr:x}+{length} cruza el límite de la región 0x{self.base:x}"
            )
        return first, last + 1

    def zero(self, start_page: int, stop_page: int) -> None:
        if self.buffer is None:
            return
        offset = start_page * self.page_size
        length = (stop_page - start_page) * self.page_size
        if _PRIVATE_MAPPING and hasattr(mmap, "MADV_DONTNEED"):
            # Mapeo privado: las páginas vuelven a leerse como cero
            self.buffer.madvise(mmap.MADV_DONTNEED, offset, length)
        else:
            self.buffer[offset:offset + length] = bytes(length)


class _Pool:
    """
    Pool de direcciones de un nodo (o de páginas sin ligar).

    La gestión de huecos libres sigue el esquema best-fit con fusión de
    vecinos: longitudes ordenadas + diccionarios por inicio y por fin.
    """

    def __init__(self, index: int, base: int, limit: int, region_pages: int,
                 page_size: int, backing: str, node: Optional[int]):
        self.index = index
        self.base = base
        self.limit = limit
        self.region_pages = region_pages
        self.page_size = page_size
        self.backing = backing
        self.node = node
        self.lock = AuditedLock("provider_node", index)
        self.slots: Dict[int, Region] = {}
        self.next_slot = 0
        self.live: Dict[int, PageExtent] = {}
        self.live_pages = 0
        self.bound_pages: Dict[int, int] = {}  # solo pool sin ligar: nodo → páginas
        self.pages_total_allocated = 0
        self.allocation_calls = 0
        self.release_calls = 0
        self._lengths: SortedList = SortedList()
        self._len_to_seq: Dict[int, List[Run]] = {}
        self._start_to_run: Dict[Tuple[int, int], Run] = {}
        self._stop_to_run: Dict[Tuple[int, int], Run] = {}

    @property
    def region_bytes(self) -> int:
        return self.region_pages * self.page_size

    def region_at(self, addr: int) -> Optional[Region]:
        return self.slots.get((addr - self.base) // self.region_bytes)

    def _new_region(self, num_pages: int) -> Region:
        nslots = math.ceil(num_pages / self.region_pages)
        base = self.base + self.next_slot * self.region_bytes
        if base + nslots * self.region_bytes > self.limit:
            raise HeapOutOfMemoryError(
                f"Espacio de direcciones agotado en el pool {self.index}"
            )
        region = Region(base, nslots * self.region_pages, self.page_size, self.backing)
        for slot in range(self.next_slot, self.next_slot + nslots):
            self.slots[slot] = region
        self.next_slot += nslots
        logger.debug(
            f"🗺️  Reserved region 0x{base:x} ({region.num_pages} pages) for pool {self.index}"
        )
        return region

    def take(self, num_pages: int) -> Run:
        i = self._lengths.bisect_left(num_pages)
        if i == len(self._lengths):
            region = self._new_region(num_pages)
            run = (region, 0, region.num_pages)
        else:
            length = self._lengths[i]
            seq = self._len_to_seq[length]
            run = seq.pop()
            if not seq:
                del self._len_to_seq[length]
                del self._lengths[i]
            region, start, stop = run
            del self._start_to_run[(region.base, start)]
            del self._stop_to_run[(region.base, stop)]

        region, start, stop = run
        if start + num_pages < stop:
            self.give((region, start + num_pages, stop))
        return (region, start, start + num_pages)

    def give(self, run: Run) -> None:
        region, start, stop = run

        prev_run = self._stop_to_run.get((region.base, start))
        if prev_run is not None:
            start, _ = self._absorb(prev_run)

        next_run = self._start_to_run.get((region.base, stop))
        if next_run is not None:
            _, stop = self._absorb(next_run)

        run = (region, start, stop)
        length = stop - start
        seq = self._len_to_seq.get(length)
        if seq is None:
            self._len_to_seq[length] = [run]
            self._lengths.add(length)
        else:
            seq.append(run)
        self._start_to_run[(region.base, start)] = run
        self._stop_to_run[(region.base, stop)] = run

    def _absorb(self, run: Run) -> Tuple[int, int]:
        region, start, stop = run
        del self._start_to_run[(region.base, start)]
        del self._stop_to_run[(region.base, stop)]
        length = stop - start
        seq = self._len_to_seq[length]
        seq.remove(run)
        if not seq:
            del self._len_to_seq[length]
            self._lengths.remove(length)
        return start, stop


class SimPageProvider:
    """
    Backend de memoria NUMA simulado.

    - allocate_pages / release_pages: exclusivos por nodo
    - node_of_page: sin lock, seguro en paralelo con asignaciones de otros rangos
    """

    def __init__(
        self,
        topology: NumaTopology,
        page_size: Optional[int] = None,
        region_bytes: Optional[int] = None,
        backing: Optional[str] = None,
        node_capacity_pages: Optional[int] = None,
        settings: Optional[Settings] = None,
    ):
        settings = settings or get_settings()
        self.topology = topology
        self.page_size = page_size or settings.page_size
        self.region_bytes = region_bytes or settings.region_bytes
        self.backing = backing or settings.backing
        self.node_capacity_pages = (
            node_capacity_pages if node_capacity_pages is not None
            else settings.node_capacity_pages
        )

        if self.page_size not in SUPPORTED_PAGE_SIZES:
            raise ConfigError(f"Tamaño de página no soportado: {self.page_size}")
        if self.region_bytes < self.page_size or self.region_bytes % self.page_size:
            raise ConfigError(
                f"region_bytes ({self.region_bytes}) debe ser múltiplo de page_size ({self.page_size})"
            )
        if self.backing not in BACKINGS:
            raise ConfigError(f"Backing desconocido: {self.backing}", details={"valid": BACKINGS})

        npools = topology.num_nodes + 1
        stride = ((1 << ADDRESS_BITS) - ARENA_BASE) // npools
        stride -= stride % self.region_bytes
        if stride < self.region_bytes:
            raise ConfigError("Demasiados nodos para el espacio de direcciones simulado")
        self._stride = stride
        region_pages = self.region_bytes // self.page_size
        self._pools = [
            _Pool(
                index=i,
                base=ARENA_BASE + i * stride,
                limit=ARENA_BASE + (i + 1) * stride,
                region_pages=region_pages,
                page_size=self.page_size,
                backing=self.backing,
                node=i if i < topology.num_nodes else None,
            )
            for i in range(npools)
        ]
        self._unbound = self._pools[-1]
        self._event_bus = get_event_bus()
        logger.info(
            f"🧱 SimPageProvider ready: {topology.num_nodes} nodes, page={self.page_size}, "
            f"backing={self.backing}"
        )

    # ------------------------------------------------------------------
    # Asignación
    # ------------------------------------------------------------------
    def allocate_pages(self, num_pages: int, node: int) -> PageExtent:
        """
        Asignar num_pages páginas contiguas ligadas a node.

        Raises:
            RangeError: Si el nodo no existe
            HeapOutOfMemoryError: Si se excede la capacidad del nodo
        """
        self.topology.check_node(node)
        if num_pages < 1:
            raise ValueError(f"num_pages debe ser >= 1 (recibido {num_pages})")
        pool = self._pools[node]
        with pool.lock:
            if self.node_capacity_pages is not None:
                live = pool.live_pages + self._unbound.bound_pages.get(node, 0)
                if live + num_pages > self.node_capacity_pages:
                    self._event_bus.publish_sync(PagesExhaustedEvent(
                        node=node,
                        requested_pages=num_pages,
                        live_pages=live,
                        capacity_pages=self.node_capacity_pages,
                    ))
                    raise HeapOutOfMemoryError(
                        f"Nodo {node} sin capacidad: {live} + {num_pages} > {self.node_capacity_pages} páginas",
                        details={"node": node, "requested_pages": num_pages},
                    )
            return self._carve(pool, num_pages, node)

    def allocate_unbound(self, num_pages: int) -> PageExtent:
        """Asignar páginas sin ligar: el primer write decide el nodo (first-touch)"""
        if num_pages < 1:
            raise ValueError(f"num_pages debe ser >= 1 (recibido {num_pages})")
        with self._unbound.lock:
            return self._carve(self._unbound, num_pages, None)

    def _carve(self, pool: _Pool, num_pages: int, node: Optional[int]) -> PageExtent:
        region, start, stop = pool.take(num_pages)
        region.page_nodes[start:stop] = UNBOUND if node is None else node
        extent = PageExtent(
            base=region.base + start * self.page_size,
            num_pages=num_pages,
            page_size=self.page_size,
            node=node,
        )
        pool.live[extent.base] = extent
        pool.live_pages += num_pages
        pool.pages_total_allocated += num_pages
        pool.allocation_calls += 1
        return extent

    def release_pages(self, extent: PageExtent) -> None:
        """
        Devolver un extent al proveedor; sus páginas quedan sin mapear.

        Raises:
            StateError: Si el extent ya fue liberado o no viene de este proveedor
        """
        pool = self._pool_of(extent.base)
        if pool is None:
            raise StateError(f"Extent 0x{extent.base:x} no pertenece a este proveedor")
        with pool.lock:
            live = pool.live.get(extent.base)
            if live is None or live.num_pages != extent.num_pages:
                raise StateError(f"Extent 0x{extent.base:x} no está vivo (¿doble release?)")
            del pool.live[extent.base]
            region = pool.region_at(extent.base)
            start, stop = region.page_range(extent.base, extent.nbytes)
            if pool is self._unbound:
                nodes = region.page_nodes[start:stop]
                for node, count in enumerate(np.bincount(nodes[nodes >= 0])):
                    if count:
                        pool.bound_pages[node] -= int(count)
            region.page_nodes[start:stop] = UNMAPPED
            region.zero(start, stop)
            pool.live_pages -= extent.num_pages
            pool.release_calls += 1
            pool.give((region, start, stop))

    def bind_untouched(self, addr: int, length: int, node: int) -> int:
        """
        Ligar a node las páginas aún sin ligar del rango (first-touch).

        Returns:
            Número de páginas ligadas por esta llamada
        """
        self.topology.check_node(node)
        region = self._region_of(addr)
        start, stop = region.page_range(addr, length)
        pool = self._pool_of(addr)
        with pool.lock:
            pages = region.page_nodes[start:stop]
            if np.any(pages == UNMAPPED):
                raise StateError(f"Escritura sobre páginas no mapeadas en 0x{addr:x}")
            mask = pages == UNBOUND
            count = int(np.count_nonzero(mask))
            if count:
                pages[mask] = node
                if pool is self._unbound:
                    pool.bound_pages[node] = pool.bound_pages.get(node, 0) + count
        return count

    # ------------------------------------------------------------------
    # Consultas de ubicación
    # ------------------------------------------------------------------
    def _pool_of(self, addr: int) -> Optional[_Pool]:
        index = (addr - ARENA_BASE) // self._stride
        if addr < ARENA_BASE or index >= len(self._pools):
            return None
        return self._pools[index]

    def _region_of(self, addr: int) -> Region:
        pool = self._pool_of(addr)
        region = pool.region_at(addr) if pool is not None else None
        if region is None:
            raise StateError(f"Dirección 0x{addr:x} no mapeada")
        return region

    def node_of_page(self, addr: int) -> Optional[int]:
        """Nodo de la página que contiene addr; None si no está mapeada (o no ligada)"""
        pool = self._pool_of(addr)
        if pool is None:
            return None
        region = pool.region_at(addr)
        if region is None:
            return None
        index = (addr - region.base) // self.page_size
        if index >= region.num_pages:
            return None
        node = int(region.page_nodes[index])
        return node if node >= 0 else None

    def nodes_of_range(self, addr: int, length: int) -> np.ndarray:
        """Copia del mapa de nodos de las páginas que cubre [addr, addr+length)"""
        region = self._region_of(addr)
        start, stop = region.page_range(addr, length)
        return region.page_nodes[start:stop].copy()

    def page_census(self, addr: int, length: int, node: int) -> Tuple[int, int, int]:
        """
        Contar páginas del rango respecto a node.

        Returns:
            (locales, remotas, sin ligar)
        """
        region = self._region_of(addr)
        start, stop = region.page_range(addr, length)
        pages = region.page_nodes[start:stop]
        local = int(np.count_nonzero(pages == node))
        unbound = int(np.count_nonzero(pages < 0))
        return local, len(pages) - local - unbound, unbound

    def count_remote(self, addr: int, length: int, node: int) -> int:
        return self.page_census(addr, length, node)[1]

    # ------------------------------------------------------------------
    # Memoria
    # ------------------------------------------------------------------
    def _checked_span(self, addr: int, length: int) -> Tuple[Region, int]:
        region = self._region_of(addr)
        start, stop = region.page_range(addr, length)
        if np.any(region.page_nodes[start:stop] == UNMAPPED):
            raise StateError(f"Acceso a páginas no mapeadas en 0x{addr:x}")
        return region, addr - region.base

    @property
    def has_memory(self) -> bool:
        return self.backing == "mmap"

    def write(self, addr: int, data: bytes) -> None:
        region, offset = self._checked_span(addr, len(data))
        if region.buffer is not None:
            region.buffer[offset:offset + len(data)] = data

    def fill(self, addr: int, length: int, value: int) -> None:
        region, offset = self._checked_span(addr, length)
        if region.buffer is not None:
            region.buffer[offset:offset + length] = bytes([value]) * length

    def read(self, addr: int, length: int) -> bytes:
        region, offset = self._checked_span(addr, length)
        if region.buffer is None:
            raise StateError("El backing 'virtual' no guarda contenido")
        return region.buffer[offset:offset + length]

    def buffer_view(self, addr: int, length: int) -> memoryview:
        """Vista escribible sobre la memoria del rango (solo backing mmap)"""
        region, offset = self._checked_span(addr, length)
        if region.buffer is None:
            raise StateError("El backing 'virtual' no expone memoria")
        return memoryview(region.buffer)[offset:offset + length]

    # ------------------------------------------------------------------
    # Estadísticas
    # ------------------------------------------------------------------
    def stats(self) -> ProviderStats:
        nodes = self.topology.num_nodes
        bound = self._unbound.bound_pages
        live_per_node = [self._pools[n].live_pages + bound.get(n, 0) for n in range(nodes)]
        return ProviderStats(
            pages_live_per_node=live_per_node,
            pages_unbound=self._unbound.live_pages - sum(bound.values()),
            pages_total_allocated=sum(p.pages_total_allocated for p in self._pools),
            allocation_calls=sum(p.allocation_calls for p in self._pools),
            release_calls=sum(p.release_calls for p in self._pools),
        )

    def report(self) -> dict:
        stats = self.stats()
        return {
            "page_size": self.page_size,
            "backing": self.backing,
            "pages_live_per_node": stats.pages_live_per_node,
            "pages_unbound": stats.pages_unbound,
            "pages_total_allocated": stats.pages_total_allocated,
            "allocation_calls": stats.allocation_calls,
            "release_calls": stats.release_calls,
        }
