"""
Page map de dos niveles: número de página → span dueño.

Los 15 bits bajos del número de página indexan la hoja; el resto indexa
la raíz. Las hojas se crean bajo demanda. Un único mapa global sirve a
todos los heaps de nodo: resolver el dueño de un bloque es una lookup.
"""
import logging
from typing import Any, Dict, Iterator, List, Optional, Tuple

from app.domain.entities import PageExtent
from app.infra.lock_audit import AuditedLock
from app.shared.errors import ConfigError, StateError

logger = logging.getLogger(__name__)

ADDRESS_BITS = 47
LEAF_BITS = 15
LEAF_SIZE = 1 << LEAF_BITS
LEAF_MASK = LEAF_SIZE - 1
LOCK_STRIPES = 64


class PageMap:
    """
    Mapa radix de dos niveles.

    - lookup: dos accesos indexados, sin lock
    - register_span / deregister_span: exclusivos sobre las hojas afectadas
    """

    def __init__(self, page_size: int):
        if page_size <= 0 or page_size & (page_size - 1):
            raise ConfigError(f"page_size debe ser potencia de dos (recibido {page_size})")
        self.page_size = page_size
        self.page_shift = page_size.bit_length() - 1
        root_bits = max(ADDRESS_BITS - self.page_shift - LEAF_BITS, 0)
        self._root: List[Optional[List[Any]]] = [None] * (1 << root_bits)
        self._stripes = [AuditedLock("page_map_leaf", i) for i in range(LOCK_STRIPES)]
        # primera página → (num_pages, span)
        self._registered: Dict[int, Tuple[int, Any]] = {}

    def lookup(self, addr: int) -> Optional[Any]:
        """Span que cubre la página de addr, o None"""
        page = addr >> self.page_shift
        if addr < 0 or (page >> LEAF_BITS) >= len(self._root):
            return None
        leaf = self._root[page >> LEAF_BITS]
        if leaf is None:
            return None
        return leaf[page & LEAF_MASK]

    def register_span(self, extent: PageExtent, span: Any) -> None:
        """
        Mapear todas las páginas del extent al span.

        Raises:
            StateError: Si alguna página ya estaba registrada
        """
        pieces = self._pieces(extent)
        with _Stripes(self._stripes, pieces):
            for root_index, lo, hi in pieces:
                leaf = self._root[root_index]
                if leaf is not None and any(entry is not None for entry in leaf[lo:hi]):
                    raise StateError(
                        f"Extent 0x{extent.base:x} solapa con un span ya registrado"
                    )
            for root_index, lo, hi in pieces:
                leaf = self._root[root_index]
                if leaf is None:
                    leaf = [None] * LEAF_SIZE
                    self._root[root_index] = leaf
                leaf[lo:hi] = [span] * (hi - lo)
            self._registered[extent.base >> self.page_shift] = (extent.num_pages, span)

    def deregister_span(self, extent: PageExtent) -> None:
        """
        Vaciar las páginas del extent.

        Raises:
            StateError: Si el extent no está registrado completo como un solo span
        """
        first_page = extent.base >> self.page_shift
        pieces = self._pieces(extent)
        with _Stripes(self._stripes, pieces):
            entry = self._registered.get(first_page)
            if entry is None or entry[0] != extent.num_pages:
                raise StateError(
                    f"Extent 0x{extent.base:x} ({extent.num_pages} páginas) no está registrado completo"
                )
            del self._registered[first_page]
            for root_index, lo, hi in pieces:
                self._root[root_index][lo:hi] = [None] * (hi - lo)

    def registered_spans(self) -> Iterator[Tuple[int, int, Any]]:
        """(primera página, num_pages, span) de cada registro vivo"""
        for first_page, (num_pages, span) in list(self._registered.items()):
            yield first_page, num_pages, span

    def __len__(self) -> int:
        return len(self._registered)

    def _pieces(self, extent: PageExtent) -> List[Tuple[int, int, int]]:
        if extent.page_size != self.page_size:
            raise ConfigError(
                f"Extent con página {extent.page_size} en un mapa de página {self.page_size}"
            )
        first = extent.base >> self.page_shift
        stop = first + extent.num_pages
        if (stop - 1) >> LEAF_BITS >= len(self._root):
            raise StateError(f"Extent 0x{extent.base:x} fuera del espacio de direcciones")
        pieces = []
        page = first
        while page < stop:
            root_index = page >> LEAF_BITS
            hi = min(stop, (root_index + 1) << LEAF_BITS)
            pieces.append((root_index, page & LEAF_MASK, ((hi - 1) & LEAF_MASK) + 1))
            page = hi
        return pieces


class _Stripes:
    """Adquiere los locks de las hojas afectadas en orden creciente"""

    def __init__(self, stripes: List[AuditedLock], pieces: List[Tuple[int, int, int]]):
        keys = sorted({root_index % len(stripes) for root_index, _, _ in pieces})
        self._locks = [stripes[k] for k in keys]

    def __enter__(self) -> None:
        for lock in self._locks:
            lock.__enter__()

    def __exit__(self, exc_type, exc, tb) -> None:
        for lock in reversed(self._locks):
            lock.__exit__(exc_type, exc, tb)
