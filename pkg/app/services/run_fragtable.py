"""
Grilla de fragmentación por página entera para tamaños de patch y de página.
"""
import logging
from typing import List, Optional, Sequence

from app.domain.events import ExperimentCompletedEvent
from app.domain.size_classes import fragmentation_rate
from app.infra.event_bus import get_event_bus
from app.models.responses import FragTable

logger = logging.getLogger(__name__)

# Patches 20x20, 50x50, 1000 y 30x30x30 valores de 8 bytes
DEFAULT_DATA_SIZES = (3200, 20000, 8000, 216000)
DEFAULT_PAGE_SIZES = (4096, 65536, 2 * 1024 * 1024)

# Valores publicados (%, un decimal) para la grilla por defecto
REFERENCE_CELLS = (
    (21.9, 2.3, 2.3, 0.5),
    (95.1, 69.5, 87.8, 17.6),
    (99.8, 99.0, 99.6, 89.6),
)
TOLERANCE_PP = 0.1


class RunFragtableService:

    def __init__(self):
        self.event_bus = get_event_bus()

    def execute(
        self,
        data_sizes: Sequence[int] = DEFAULT_DATA_SIZES,
        page_sizes: Sequence[int] = DEFAULT_PAGE_SIZES,
    ) -> FragTable:
        """
        Calcular la grilla.

        Raises:
            ValueError: Si alguna lista está vacía o un tamaño es < 1
        """
        if not data_sizes or not page_sizes:
            raise ValueError("data_sizes y page_sizes no pueden estar vacíos")
        cells = [[fragmentation_rate(size, page) for size in data_sizes] for page in page_sizes]
        table = FragTable(data_sizes=list(data_sizes), page_sizes=list(page_sizes), cells=cells)
        failures = reference_deviations(table)
        self.event_bus.publish_sync(ExperimentCompletedEvent(
            command="fragtable",
            passed=not failures,
            summary={"cells": len(data_sizes) * len(page_sizes), "deviations": failures},
        ))
        return table


def reference_deviations(table: FragTable) -> List[str]:
    """Celdas de la grilla por defecto que se alejan más de 0.1 pp del valor publicado"""
    failures = []
    for p, page in enumerate(DEFAULT_PAGE_SIZES):
        for d, size in enumerate(DEFAULT_DATA_SIZES):
            value = _cell_or_none(table, page, size)
            if value is None:
                continue
            expected = REFERENCE_CELLS[p][d]
            if abs(round(value, 1) - expected) > TOLERANCE_PP + 1e-9:
                failures.append(f"page={page} size={size}: {value:.2f}% vs {expected}%")
    return failures


def _cell_or_none(table: FragTable, page: int, size: int) -> Optional[float]:
    if page not in table.page_sizes or size not in table.data_sizes:
        return None
    return table.cell(page, size)
