"""
Tests de los asignadores de referencia: first-touch, shared-cache y membind.
"""
import pytest

from app.domain.size_classes import LARGE_THRESHOLD
from app.domain.topology import NumaTopology, ThreadRegistry
from app.infra.lock_audit import recording
from app.shared.errors import ConfigError, StateError
from app.strategies.allocator_strategy import available_allocators, create_allocator
from app.strategies.page_strategy import PageGranularStrategy


def _allocator(name, topology, threads, settings, backing="virtual"):
    registry = ThreadRegistry(topology)
    registry.register_compact(threads)
    return create_allocator(name, topology, registry, backing=backing, settings=settings)


def test_registry_lists_every_allocator():
    assert set(available_allocators()) == {"psm", "first-touch", "shared-cache", "membind"}


def test_unknown_allocator(small_topology):
    with pytest.raises(ConfigError):
        create_allocator("jemalloc", small_topology)


def test_page_granular_base_requires_an_extent_policy(small_topology):
    assert "_allocate_extent" in PageGranularStrategy.__abstractmethods__
    with pytest.raises(TypeError):
        PageGranularStrategy(small_topology, ThreadRegistry(small_topology), None)


# ---------------------------------------------------------------------------
# first-touch
# ---------------------------------------------------------------------------
def test_first_touch_binds_to_first_writer(small_topology, settings):
    allocator = _allocator("first-touch", small_topology, 8, settings)
    addr = allocator.ft_alloc(3 * 4096, tid=0)
    assert allocator.page_nodes(addr, 3 * 4096).tolist() == [-1, -1, -1]

    # thread 6 (nodo 3) escribe primero la segunda página
    assert allocator.ft_write(addr + 4096, 4096, tid=6) == 1
    assert allocator.ft_write(addr, 3 * 4096, tid=0) == 2
    assert allocator.page_nodes(addr, 3 * 4096).tolist() == [0, 3, 0]
    assert allocator.census(addr, 3 * 4096, 0) == (2, 1, 0)
    assert allocator.binding_log[0] == (addr + 4096, 4096, 3, 1)

    allocator.ft_free(addr)
    with pytest.raises(StateError):
        allocator.ft_free(addr)


def test_first_touch_owner_writes_are_local(small_topology, settings):
    allocator = _allocator("first-touch", small_topology, 8, settings)
    for tid in range(8):
        addr = allocator.alloc(10_000, tid)
        allocator.write(addr, 10_000, tid)
        assert allocator.census(addr, 10_000, tid // 2)[1] == 0


def test_first_touch_is_page_granular(small_topology, settings):
    allocator = _allocator("first-touch", small_topology, 1, settings)
    addr = allocator.alloc(3200, 0)
    assert allocator.usable_size(addr) == 4096
    allocator.write(addr, 3200, 0)
    report = allocator.report()
    assert report.reserved_bytes == 4096
    assert report.fragmentation == pytest.approx((4096 - 3200) / 4096 * 100)


# ---------------------------------------------------------------------------
# membind
# ---------------------------------------------------------------------------
def test_membind_binds_at_allocation(small_topology, settings):
    allocator = _allocator("membind", small_topology, 8, settings)
    addr = allocator.mb_alloc(5000, tid=5)
    assert allocator.page_nodes(addr, 5000).tolist() == [2, 2]
    assert allocator.path_counters()["allocs"] == 1
    allocator.mb_free(addr)
    with pytest.raises(StateError):
        allocator.mb_free(addr)
    assert allocator.provider.stats().pages_live_per_node == [0, 0, 0, 0]


# ---------------------------------------------------------------------------
# shared-cache
# ---------------------------------------------------------------------------
def test_shared_cache_single_node_is_local(reference_topology, settings):
    allocator = _allocator("shared-cache", reference_topology, 8, settings)
    for tid in range(8):
        addr = allocator.alloc(1 << 20, tid)
        assert allocator.census(addr, 1 << 20, 0)[1] == 0


def test_shared_cache_spreads_pages_over_occupied_nodes(reference_topology, settings):
    allocator = _allocator("shared-cache", reference_topology, 16, settings)
    remote = 0
    for tid in range(16):
        for _ in range(4):
            addr = allocator.alloc(1 << 20, tid)
            remote += allocator.census(addr, 1 << 20, tid // 8)[1]
    assert remote > 0
    assert allocator.report().remote_block_count > 0


def test_shared_cache_false_page_sharing(small_topology, settings):
    allocator = _allocator("shared-cache", small_topology, 8, settings)
    # thread 0 (nodo 0) llena el cache del core 0 y libera en el cache del core 7 (nodo 3)
    addr = allocator.alloc(64, 0)
    allocator.free(addr, 7)
    reused = allocator.alloc(64, 7)
    assert reused == addr
    assert allocator.page_nodes(reused, 64)[0] != 3


def test_shared_cache_takes_the_global_lock(small_topology, settings):
    allocator = _allocator("shared-cache", small_topology, 8, settings)
    with recording() as acquisitions:
        allocator.alloc(64, 0)
        allocator.alloc(LARGE_THRESHOLD + 1, 3)
    assert ("shared_heap", 0) in acquisitions


def test_shared_cache_invalid_frees(small_topology, settings):
    allocator = _allocator("shared-cache", small_topology, 8, settings)
    addr = allocator.alloc(64, 0)
    big = allocator.alloc(LARGE_THRESHOLD + 1, 0)
    with pytest.raises(StateError):
        allocator.free(addr + 3, 0)
    allocator.free(addr, 0)
    with pytest.raises(StateError):
        allocator.free(addr, 0)
    allocator.free(big, 0)
    with pytest.raises(StateError):
        allocator.free(big, 0)


@pytest.mark.parametrize("name", ["psm", "first-touch", "shared-cache", "membind"])
def test_strategy_contract(name, small_topology, settings):
    allocator = _allocator(name, small_topology, 8, settings, backing="mmap")
    addr = allocator.alloc(300, 3)
    assert addr % allocator.alignment_for(300) == 0
    assert allocator.usable_size(addr) >= 300
    allocator.write(addr, 300, 3, 7)
    assert allocator.read(addr, 300) == bytes([7]) * 300
    allocator.free(addr, 3)
    report = allocator.report()
    assert report.allocator == name
    assert report.live_bytes == 0
