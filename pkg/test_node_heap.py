"""
Tests del heap por nodo: spans de clase, lista central y camino de objetos grandes.
"""
import pytest

from app.domain.events import LargeSpanEvictedEvent, SpanReclaimedEvent
from app.domain.size_classes import build_table
from app.infra.node_heap import NodeHeap, SpanState
from app.infra.page_map import PageMap
from app.infra.sim_page_provider import SimPageProvider
from app.listeners.audit_listener import recent_events
from app.shared.errors import RangeError, StateError


@pytest.fixture
def provider(small_topology, settings):
    return SimPageProvider(small_topology, backing="virtual", settings=settings)


def _heap(provider, settings, node=1, **overrides):
    if overrides:
        settings = settings.model_copy(update=overrides)
    table = build_table(provider.page_size)
    page_map = PageMap(provider.page_size)
    return NodeHeap(node, provider, page_map, table, placement=lambda: node, settings=settings)


def test_fetch_carves_a_span_on_the_heap_node(provider, settings):
    heap = _heap(provider, settings)
    cls = heap.table.class_for_size(64)
    blocks = heap.fetch_blocks(cls, 8)
    assert len(blocks) == 8
    assert len(set(blocks)) == 8
    span = heap.page_map.lookup(blocks[0])
    assert span.state == SpanState.ASSIGNED
    assert span.size_class == cls
    assert all(provider.node_of_page(b) == 1 for b in blocks)
    assert all((b - span.base) % span.block_size == 0 for b in blocks)
    assert heap.central[cls].spans_created == 1


def test_fetch_returns_between_one_and_k(provider, settings):
    heap = _heap(provider, settings)
    size = 200_000
    cls = heap.table.class_for_size(size)
    span_blocks = heap.table[cls].pages_per_span * provider.page_size // heap.table[cls].block_size
    first = heap.fetch_blocks(cls, span_blocks + 5)
    assert 1 <= len(first) <= span_blocks + 5
    assert size <= heap.table[cls].block_size
    with pytest.raises(ValueError):
        heap.fetch_blocks(cls, 0)


def test_span_reclaimed_when_all_blocks_return(provider, settings):
    heap = _heap(provider, settings)
    cls = heap.table.class_for_size(1024)
    blocks = heap.fetch_blocks(cls, 4)
    span = heap.page_map.lookup(blocks[0])
    pages_before = provider.stats().pages_live_per_node[1]

    heap.return_blocks(cls, blocks[:2])
    assert span.state == SpanState.ASSIGNED
    heap.return_blocks(cls, blocks[2:])

    assert span.state == SpanState.FREE
    assert heap.page_map.lookup(blocks[0]) is None
    assert provider.stats().pages_live_per_node[1] == pages_before - span.extent.num_pages
    assert any(isinstance(e, SpanReclaimedEvent) and e.base == span.base for e in recent_events())


def test_foreign_block_rejected_before_any_mutation(provider, settings):
    heap = _heap(provider, settings)
    small = heap.table.class_for_size(64)
    other = heap.table.class_for_size(4096)
    ours = heap.fetch_blocks(small, 2)
    theirs = heap.fetch_blocks(other, 1)
    with pytest.raises(StateError):
        heap.return_blocks(small, [ours[0], theirs[0]])
    # El primer bloque no se devolvió
    assert heap.page_map.lookup(ours[0]).allocated_count == 2
    with pytest.raises(StateError):
        heap.return_blocks(small, [ours[0] + 1])
    with pytest.raises(RangeError):
        heap.fetch_blocks(len(heap.table), 1)


def test_large_allocation_and_reuse(provider, settings):
    heap = _heap(provider, settings)
    span = heap.allocate_large(300_000)
    assert span.state == SpanState.LARGE
    assert span.extent.num_pages == -(-300_000 // provider.page_size)
    assert provider.count_remote(span.base, span.nbytes, 1) == 0

    heap.free_large(span)
    assert span.state == SpanState.CACHED
    with pytest.raises(StateError):
        heap.free_large(span)

    again = heap.allocate_large(299_500)
    assert again is span
    assert heap.large_reuse_hits == 1


def test_large_cache_evicts_fifo(provider, settings):
    heap = _heap(provider, settings, large_cache_max_spans=2)
    spans = [heap.allocate_large(300_000) for _ in range(3)]
    for span in spans:
        heap.free_large(span)
    assert spans[0].state == SpanState.FREE
    assert spans[1].state == SpanState.CACHED
    assert heap.page_map.lookup(spans[0].base) is None
    assert heap.large_evictions == 1
    assert any(isinstance(e, LargeSpanEvictedEvent) and e.reason == "spans" for e in recent_events())

    assert heap.trim_large_cache() == 2
    assert heap.stats()["reserved_bytes"] == 0


def test_large_cache_byte_cap(provider, settings):
    heap = _heap(provider, settings, large_cache_max_bytes=1024 * 1024)
    spans = [heap.allocate_large(600_000) for _ in range(2)]
    for span in spans:
        heap.free_large(span)
    assert heap.large_cached_bytes <= 1024 * 1024
    assert heap.large_evictions == 1


def test_stats(provider, settings):
    heap = _heap(provider, settings)
    cls = heap.table.class_for_size(64)
    blocks = heap.fetch_blocks(cls, 3)
    span = heap.page_map.lookup(blocks[0])
    span.live_blocks.update(blocks)
    heap.allocate_large(300_000)
    stats = heap.stats()
    assert stats["class_spans"] == 1
    assert stats["large_spans"] == 1
    assert stats["live_bytes"] == 3 * 64 + -(-300_000 // 4096) * 4096
    assert stats["central_cached_blocks"] == span.total_blocks - 3
