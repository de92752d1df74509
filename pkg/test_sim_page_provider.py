"""
Tests del proveedor de páginas NUMA simulado.
"""
import threading

import numpy as np
import pytest

from app.domain.events import PagesExhaustedEvent
from app.domain.topology import NumaTopology
from app.infra.sim_page_provider import ARENA_BASE, SimPageProvider
from app.listeners.audit_listener import recent_events
from app.shared.errors import ConfigError, HeapOutOfMemoryError, RangeError, StateError


@pytest.fixture
def provider(small_topology, settings):
    return SimPageProvider(small_topology, settings=settings)


def test_allocated_pages_are_bound_to_node(provider):
    extent = provider.allocate_pages(4, node=2)
    assert extent.node == 2
    assert extent.base % provider.page_size == 0
    for page in range(4):
        assert provider.node_of_page(extent.base + page * provider.page_size) == 2
    # Cualquier byte de la página responde lo mismo
    assert provider.node_of_page(extent.base + 17) == 2
    assert provider.count_remote(extent.base, extent.nbytes, 2) == 0
    assert provider.count_remote(extent.base, extent.nbytes, 1) == 4


def test_released_pages_are_unmapped(provider):
    extent = provider.allocate_pages(2, node=0)
    provider.release_pages(extent)
    assert provider.node_of_page(extent.base) is None
    with pytest.raises(StateError):
        provider.release_pages(extent)


def test_extents_are_disjoint_and_reused(provider):
    extents = [provider.allocate_pages(n, node=1) for n in (1, 3, 2, 5)]
    ranges = sorted((e.base, e.end) for e in extents)
    assert all(a_end <= b_start for (_, a_end), (b_start, _) in zip(ranges, ranges[1:]))

    provider.release_pages(extents[1])
    again = provider.allocate_pages(3, node=1)
    assert again.base == extents[1].base


def test_unknown_addresses():
    provider = SimPageProvider(NumaTopology.uniform(2, 1), backing="virtual")
    assert provider.node_of_page(0) is None
    assert provider.node_of_page(ARENA_BASE - 1) is None
    assert provider.node_of_page(ARENA_BASE) is None


def test_invalid_arguments(small_topology, settings):
    provider = SimPageProvider(small_topology, settings=settings)
    with pytest.raises(RangeError):
        provider.allocate_pages(1, node=4)
    with pytest.raises(ValueError):
        provider.allocate_pages(0, node=0)
    with pytest.raises(ConfigError):
        SimPageProvider(small_topology, page_size=8192, settings=settings)
    with pytest.raises(ConfigError):
        SimPageProvider(small_topology, backing="tmpfs", settings=settings)


def test_capacity_exhaustion_publishes_event(small_topology, settings):
    provider = SimPageProvider(small_topology, node_capacity_pages=4, settings=settings)
    provider.allocate_pages(3, node=0)
    with pytest.raises(HeapOutOfMemoryError):
        provider.allocate_pages(2, node=0)
    # Otros nodos no se ven afectados
    provider.allocate_pages(4, node=1)
    events = [e for e in recent_events() if isinstance(e, PagesExhaustedEvent)]
    assert events and events[-1].node == 0


def test_first_touch_binding(provider):
    extent = provider.allocate_unbound(4)
    assert provider.node_of_page(extent.base) is None
    assert provider.page_census(extent.base, extent.nbytes, 0) == (0, 0, 4)

    page = provider.page_size
    assert provider.bind_untouched(extent.base + page, 2 * page, node=3) == 2
    # Las páginas ya ligadas no cambian
    assert provider.bind_untouched(extent.base, extent.nbytes, node=1) == 2
    assert list(provider.nodes_of_range(extent.base, extent.nbytes)) == [1, 3, 3, 1]
    assert provider.stats().pages_live_per_node[3] == 2

    provider.release_pages(extent)
    stats = provider.stats()
    assert stats.pages_live_per_node == [0, 0, 0, 0]
    assert stats.pages_unbound == 0


def test_memory_is_zeroed_on_reuse(provider):
    extent = provider.allocate_pages(1, node=0)
    provider.fill(extent.base, 100, 0xAB)
    assert provider.read(extent.base, 4) == b"\xab\xab\xab\xab"
    provider.release_pages(extent)
    again = provider.allocate_pages(1, node=0)
    assert again.base == extent.base
    assert provider.read(again.base, 100) == bytes(100)


def test_multi_page_extent_is_zeroed_on_reuse(provider):
    extent = provider.allocate_pages(4, node=1)
    provider.fill(extent.base, extent.nbytes, 0xAB)
    provider.release_pages(extent)

    again = provider.allocate_pages(4, node=1)
    assert again.base == extent.base
    data = np.frombuffer(provider.read(again.base, again.nbytes), dtype=np.uint8)
    assert np.count_nonzero(data) == 0


def test_partial_reuse_of_released_extent_is_zeroed(provider):
    extent = provider.allocate_pages(3, node=2)
    provider.fill(extent.base, extent.nbytes, 0x5A)
    provider.release_pages(extent)

    head = provider.allocate_pages(1, node=2)
    tail = provider.allocate_pages(2, node=2)
    assert {head.base, tail.base} <= {extent.base + i * provider.page_size for i in range(3)}
    assert provider.read(head.base, head.nbytes) == bytes(head.nbytes)
    assert provider.read(tail.base, tail.nbytes) == bytes(tail.nbytes)


def test_released_holes_are_reused_best_fit(provider):
    a = provider.allocate_pages(1, node=0)
    b = provider.allocate_pages(3, node=0)
    c = provider.allocate_pages(1, node=0)
    d = provider.allocate_pages(2, node=0)
    provider.allocate_pages(1, node=0)
    provider.release_pages(b)
    provider.release_pages(d)

    assert provider.allocate_pages(2, node=0).base == d.base
    assert provider.allocate_pages(3, node=0).base == b.base
    assert a.base < b.base < c.base < d.base


def test_access_to_unmapped_pages_fails(provider):
    extent = provider.allocate_pages(1, node=0)
    provider.release_pages(extent)
    with pytest.raises(StateError):
        provider.write(extent.base, b"x")


def test_virtual_backing_keeps_metadata_only(small_topology, settings):
    provider = SimPageProvider(small_topology, backing="virtual", settings=settings)
    extent = provider.allocate_pages(2, node=1)
    provider.fill(extent.base, extent.nbytes, 1)
    assert not provider.has_memory
    with pytest.raises(StateError):
        provider.read(extent.base, 1)


def test_buffer_view_is_writable(provider):
    extent = provider.allocate_pages(1, node=0)
    view = np.frombuffer(provider.buffer_view(extent.base, 64), dtype=np.float64)
    view[:] = 2.5
    assert np.frombuffer(provider.read(extent.base, 64), dtype=np.float64).tolist() == [2.5] * 8


def test_large_extent_spans_several_regions(small_topology, settings):
    provider = SimPageProvider(small_topology, settings=settings)
    region_pages = settings.region_bytes // provider.page_size
    extent = provider.allocate_pages(region_pages + 3, node=2)
    assert provider.count_remote(extent.base, extent.nbytes, 2) == 0
    provider.release_pages(extent)


def test_concurrent_allocations_on_distinct_nodes(small_topology, settings):
    provider = SimPageProvider(small_topology, backing="virtual", settings=settings)
    results = {}

    def worker(node):
        results[node] = [provider.allocate_pages(2, node) for _ in range(200)]

    threads = [threading.Thread(target=worker, args=(n,)) for n in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    bases = [e.base for extents in results.values() for e in extents]
    assert len(set(bases)) == len(bases)
    for node, extents in results.items():
        assert all(provider.node_of_page(e.base) == node for e in extents)
    assert provider.stats().pages_live_per_node == [400] * 4
