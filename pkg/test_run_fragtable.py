"""
Tests de la grilla de fragmentación.
"""
import pytest

from app.domain.events import ExperimentCompletedEvent
from app.listeners.audit_listener import recent_events
from app.services.run_fragtable import (
    DEFAULT_DATA_SIZES,
    DEFAULT_PAGE_SIZES,
    REFERENCE_CELLS,
    RunFragtableService,
    reference_deviations,
)


def test_default_grid_matches_reference_cells():
    table = RunFragtableService().execute()
    assert table.page_sizes == list(DEFAULT_PAGE_SIZES)
    assert table.data_sizes == list(DEFAULT_DATA_SIZES)
    assert reference_deviations(table) == []
    for p, page in enumerate(DEFAULT_PAGE_SIZES):
        for d, size in enumerate(DEFAULT_DATA_SIZES):
            assert abs(round(table.cell(page, size), 1) - REFERENCE_CELLS[p][d]) <= 0.1 + 1e-9
    event = [e for e in recent_events() if isinstance(e, ExperimentCompletedEvent)][-1]
    assert event.command == "fragtable" and event.passed


def test_size_equal_to_page_is_zero():
    table = RunFragtableService().execute([4096, 65536], [4096, 65536])
    assert table.cell(4096, 4096) == 0.0
    assert table.cell(65536, 65536) == 0.0
    assert table.cell(65536, 4096) == pytest.approx(93.75)


def test_fifty_by_fifty_column_uses_20000_bytes():
    table = RunFragtableService().execute([20000, 4000], [65536])
    assert round(table.cell(65536, 20000), 1) == 69.5
    assert round(table.cell(65536, 4000), 1) != 69.5


def test_empty_lists_rejected():
    with pytest.raises(ValueError):
        RunFragtableService().execute([], [4096])
    with pytest.raises(ValueError):
        RunFragtableService().execute([3200], [])
