"""
Tests de la fachada psm_alloc / psm_free.
"""
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from app.domain.size_classes import LARGE_THRESHOLD
from app.domain.topology import NumaTopology, ThreadRegistry
from app.infra.lock_audit import recording
from app.infra.psm_heap import PsmHeap
from app.infra.sim_page_provider import ARENA_BASE
from app.shared.errors import RangeError, StateError

PSM_SCOPES = {"core_cache", "central_list", "node_large", "provider_node", "page_map_leaf"}


@pytest.fixture
def heap(small_topology, registry, settings):
    return PsmHeap(small_topology, registry=registry, settings=settings)


def test_small_block_lives_on_owner_node(heap):
    # thread 5 → core 5 → nodo 2
    addr = heap.psm_alloc(100, owner=5)
    assert heap.owner_node_of(addr) == 2
    assert heap.provider.node_of_page(addr) == 2
    assert heap.usable_size(addr) >= 100
    heap.psm_free(addr, caller=5)


def test_large_block_lives_on_owner_node(heap):
    addr = heap.psm_alloc(LARGE_THRESHOLD + 1, owner=7)
    assert addr % heap.provider.page_size == 0
    assert heap.provider.count_remote(addr, LARGE_THRESHOLD + 1, 3) == 0
    assert heap.owner_node_of(addr + 5000) == 3
    heap.psm_free(addr)


def test_zero_byte_request_returns_a_valid_block(heap):
    a = heap.psm_alloc(0, owner=0)
    b = heap.psm_alloc(0, owner=0)
    assert a != b
    assert heap.usable_size(a) >= 1


def test_unregistered_owner_and_negative_size(small_topology, settings):
    heap = PsmHeap(small_topology, registry=ThreadRegistry(small_topology), settings=settings)
    with pytest.raises(StateError):
        heap.psm_alloc(64, owner=0)
    heap.registry.register(0, 0)
    with pytest.raises(RangeError):
        heap.psm_alloc(-1, owner=0)


def test_alloc_on_node(heap):
    addr = heap.psm_alloc_on_node(64, node=3)
    assert heap.owner_node_of(addr) == 3
    with pytest.raises(RangeError):
        heap.psm_alloc_on_node(64, node=4)


def test_cross_node_free_returns_to_owner_heap(heap):
    addr = heap.psm_alloc(64, owner=0)  # nodo 0
    heap.psm_free(addr, caller=6)  # nodo 3
    assert heap.core_caches[6].cached_blocks() == []
    assert heap.path_counters()["central_returns"] == 1
    # El bloque vuelve a servirse desde el nodo 0
    again = [heap.psm_alloc(64, owner=1) for _ in range(64)]
    assert all(heap.owner_node_of(a) == 0 for a in again)


def test_same_node_free_goes_to_caller_cache(heap):
    addr = heap.psm_alloc(64, owner=0)
    heap.psm_free(addr, caller=1)  # core 1, mismo nodo
    assert addr in heap.core_caches[1].cached_blocks()


def test_owner_node_of_rejects_freed_blocks(heap):
    small = heap.psm_alloc(64, owner=2)  # nodo 1
    assert heap.owner_node_of(small + 10) == 1
    heap.psm_free(small, caller=2)
    assert small in heap.core_caches[2].cached_blocks()
    with pytest.raises(StateError):
        heap.owner_node_of(small)
    with pytest.raises(StateError):
        heap.owner_node_of(small + 10)

    large = heap.psm_alloc(LARGE_THRESHOLD + 1, owner=2)
    heap.psm_free(large, caller=2)
    with pytest.raises(StateError):
        heap.owner_node_of(large)


def test_free_without_caller_uses_attached_thread(heap):
    addr = heap.psm_alloc(64, owner=2)
    heap.registry.attach(3)
    try:
        heap.psm_free(addr)
    finally:
        heap.registry.detach()
    assert addr in heap.core_caches[3].cached_blocks()


def test_invalid_frees_are_detected(heap):
    small = heap.psm_alloc(64, owner=0)
    large = heap.psm_alloc(LARGE_THRESHOLD * 2, owner=0)

    with pytest.raises(StateError):
        heap.psm_free(small + 1)
    with pytest.raises(StateError):
        heap.psm_free(large + 64)
    with pytest.raises(StateError):
        heap.psm_free(ARENA_BASE - 4096)

    heap.psm_free(small, caller=0)
    with pytest.raises(StateError):
        heap.psm_free(small, caller=0)
    heap.psm_free(large)
    with pytest.raises(StateError):
        heap.psm_free(large)


def test_blocks_are_disjoint_and_writable(heap):
    blocks = []
    for i, size in enumerate((8, 64, 100, 4096, 20_000, 300_000)):
        addr = heap.psm_alloc(size, owner=i % 8)
        heap.fill(addr, size, i + 1)
        blocks.append((addr, size, i + 1))
    for addr, size, value in blocks:
        assert heap.read(addr, size) == bytes([value]) * size
    ranges = sorted((a, a + heap.usable_size(a)) for a, _, _ in blocks)
    assert all(end <= start for (_, end), (start, _) in zip(ranges, ranges[1:]))


@given(st.lists(st.integers(min_value=0, max_value=2 * LARGE_THRESHOLD), min_size=1, max_size=40))
def test_every_block_is_local_to_its_owner(sizes):
    topology = NumaTopology.uniform(4, 2)
    registry = ThreadRegistry(topology)
    registry.register_compact(8)
    heap = PsmHeap(topology, registry=registry, backing="virtual")
    live = []
    for i, size in enumerate(sizes):
        owner = i % 8
        addr = heap.psm_alloc(size, owner)
        assert heap.provider.count_remote(addr, max(size, 1), registry.node_of_thread(owner)) == 0
        live.append(addr)
    assert heap.remote_block_count() == 0
    for i, addr in enumerate(live):
        heap.psm_free(addr, caller=(i + 3) % 8)
    assert heap.heap_report().live_bytes == 0


def test_lock_audit_only_sees_partitioned_scopes(heap):
    with recording() as acquisitions:
        for owner in range(8):
            small = heap.psm_alloc(64, owner)
            large = heap.psm_alloc(LARGE_THRESHOLD + 1, owner)
            heap.psm_free(small, caller=(owner + 2) % 8)
            heap.psm_free(large, caller=owner)
    scopes = {scope for scope, _ in acquisitions}
    assert scopes <= PSM_SCOPES
    assert "core_cache" in scopes and "node_large" in scopes
    # Los locks de lista central y de objetos grandes son por nodo
    central_nodes = {key[0] for scope, key in acquisitions if scope == "central_list"}
    assert central_nodes == {0, 1, 2, 3}


def test_heap_report(heap):
    addr = heap.psm_alloc(1000, owner=4)
    big = heap.psm_alloc(LARGE_THRESHOLD + 1, owner=4)
    report = heap.heap_report()
    node = report.nodes[2]
    assert node.live_bytes == heap.usable_size(addr) + heap.usable_size(big)
    assert node.reserved_bytes >= node.live_bytes
    assert report.remote_block_count == 0
    assert 0.0 <= report.fragmentation < 100.0
    assert report.to_csv().splitlines()[0] == "node,live_bytes,reserved_bytes,spans,remote_blocks"


def test_concurrent_alloc_free_with_cross_frees(small_topology, settings):
    registry = ThreadRegistry(small_topology)
    registry.register_compact(8)
    heap = PsmHeap(small_topology, registry=registry, backing="virtual", settings=settings)
    handoff = [[] for _ in range(8)]
    barrier = threading.Barrier(8)
    errors = []

    def worker(tid):
        try:
            registry.attach(tid)
            mine = [heap.psm_alloc(16 + 8 * (i % 200), tid) for i in range(500)]
            node = registry.node_of_thread(tid)
            if any(heap.provider.node_of_page(a) != node for a in mine):
                errors.append(f"remote block for {tid}")
            handoff[tid] = mine
            barrier.wait()
            for addr in handoff[(tid - 1) % 8]:
                heap.psm_free(addr)
        except Exception as e:  # noqa: BLE001
            errors.append(repr(e))

    threads = [threading.Thread(target=worker, args=(t,)) for t in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert errors == []
    assert heap.heap_report().live_bytes == 0
