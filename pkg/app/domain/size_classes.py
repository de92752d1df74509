"""
Tabla de clases de tamaño (almacenamiento segregado al estilo TCMalloc).

Reglas de generación:
- pasos de 8 bytes hasta 128
- pasos de 16 bytes hasta 512
- luego geométrico con razón <= 1.125 (redondeado hacia abajo a múltiplo de 8)
- tope en large_threshold = 256 KiB

Con estas reglas todo request s >= 64 recibe un bloque <= 1.125 * s.
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

from app.domain.entities import SizeClass
from app.shared.errors import ConfigError, RangeError

SUPPORTED_PAGE_SIZES = (4096, 65536, 2 * 1024 * 1024)
LARGE_THRESHOLD = 256 * 1024
MIN_BLOCK = 8
GROWTH = 1.125
MAX_SPAN_WASTE = 0.125


def batch_size_for(block_size: int, batch_bytes: int = 64 * 1024, max_batch: int = 32) -> int:
    """Bloques movidos por viaje a la lista central: min(ceil(64K / block), 32)"""
    return max(1, min(math.ceil(batch_bytes / block_size), max_batch))


def pages_per_span_for(block_size: int, page_size: int) -> int:
    """Mínimo número de páginas cuyo residuo de corte en bloques sea <= 12.5%"""
    pages = max(1, math.ceil(block_size / page_size))
    while True:
        span_bytes = pages * page_size
        if (span_bytes % block_size) / span_bytes <= MAX_SPAN_WASTE:
            return pages
        pages += 1


def block_sizes(large_threshold: int = LARGE_THRESHOLD) -> List[int]:
    sizes = list(range(MIN_BLOCK, 129, 8))
    sizes += list(range(144, 513, 16))
    while sizes[-1] < large_threshold:
        nxt = int(sizes[-1] * GROWTH) // 8 * 8
        sizes.append(min(nxt, large_threshold))
    return sizes


@dataclass(frozen=True)
class SizeClassTable:
    """Tabla inmutable; las búsquedas son seguras desde cualquier thread"""
    page_size: int
    large_threshold: int
    classes: Tuple[SizeClass, ...]
    _lookup: Tuple[int, ...]  # (s + 7) >> 3 → índice de clase

    def __len__(self) -> int:
        return len(self.classes)

    def __getitem__(self, index: int) -> SizeClass:
        return self.classes[index]

    def class_for_size(self, size: int) -> Optional[int]:
        """Clase más pequeña con block_size >= size; None para objetos grandes"""
        if size > self.large_threshold:
            return None
        if size < 0:
            raise RangeError(f"Tamaño negativo: {size}")
        return self._lookup[(size + 7) >> 3]

    def block_size_for(self, size: int) -> Optional[int]:
        index = self.class_for_size(size)
        return None if index is None else self.classes[index].block_size


def build_table(
    page_size: int,
    large_threshold: int = LARGE_THRESHOLD,
    batch_bytes: int = 64 * 1024,
    max_batch: int = 32,
) -> SizeClassTable:
    """
    Construir la tabla de clases para un tamaño de página.

    Raises:
        ConfigError: Si el tamaño de página no está soportado
    """
    if page_size not in SUPPORTED_PAGE_SIZES:
        raise ConfigError(
            f"Tamaño de página no soportado: {page_size}",
            details={"supported": list(SUPPORTED_PAGE_SIZES)},
        )

    classes = tuple(
        SizeClass(
            index=i,
            block_size=bs,
            pages_per_span=pages_per_span_for(bs, page_size),
            batch_size=batch_size_for(bs, batch_bytes, max_batch),
        )
        for i, bs in enumerate(block_sizes(large_threshold))
    )

    lookup = []
    current = 0
    for slot in range((large_threshold >> 3) + 1):
        # Un slot cubre los tamaños (8*(slot-1), 8*slot]
        while classes[current].block_size < slot * 8:
            current += 1
        lookup.append(current)

    return SizeClassTable(
        page_size=page_size,
        large_threshold=large_threshold,
        classes=classes,
        _lookup=tuple(lookup),
    )


def fragmentation_rate(data_size: int, page_size: int) -> float:
    """
    Fragmentación (%) de reservar data_size en páginas enteras.

    Ejemplo: 3200 B en páginas de 4 KiB desperdician el 21.9%.
    """
    if data_size < 1:
        raise ValueError(f"data_size debe ser >= 1 (recibido {data_size})")
    reserved = math.ceil(data_size / page_size) * page_size
    return (reserved - data_size) / reserved * 100.0
