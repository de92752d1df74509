"""
Tests del cache por core.
"""
import pytest

from app.domain.size_classes import build_table
from app.infra.core_cache import CoreCache
from app.infra.node_heap import NodeHeap
from app.infra.page_map import PageMap
from app.infra.sim_page_provider import SimPageProvider
from app.shared.errors import RangeError, StateError


@pytest.fixture
def heaps(small_topology, settings):
    provider = SimPageProvider(small_topology, backing="virtual", settings=settings)
    table = build_table(provider.page_size)
    page_map = PageMap(provider.page_size)
    return [
        NodeHeap(n, provider, page_map, table, placement=lambda n=n: n, settings=settings)
        for n in range(2)
    ]


def test_miss_refills_a_batch_then_hits(heaps, settings):
    cache = CoreCache(0, 0, heaps[0], settings)
    cls = cache.table.class_for_size(64)
    batch = cache.table[cls].batch_size

    first = cache.cache_alloc(cls)
    assert cache.misses == 1
    assert len(cache.cached_blocks(cls)) == batch - 1
    second = cache.cache_alloc(cls)
    assert cache.hits == 1
    assert first != second
    assert cache.cached_bytes == (batch - 2) * 64


def test_lifo_reuse(heaps, settings):
    cache = CoreCache(0, 0, heaps[0], settings)
    cls = cache.table.class_for_size(128)
    block = cache.cache_alloc(cls)
    cache.cache_free(cls, block)
    assert cache.cache_alloc(cls) == block


def test_watermark_flushes_a_batch(heaps, settings):
    cache = CoreCache(0, 0, heaps[0], settings)
    cls = cache.table.class_for_size(4096)
    batch = cache.table[cls].batch_size
    blocks = [cache.cache_alloc(cls) for _ in range(3 * batch)]
    for block in blocks:
        cache.cache_free(cls, block)
    assert len(cache.cached_blocks(cls)) <= cache.watermark(cls)
    assert cache.flushes >= 1


def test_cap_flushes_largest_list(heaps, settings):
    cache = CoreCache(0, 0, heaps[0], settings.model_copy(update={"core_cache_cap_bytes": 64 * 1024}))
    cls = cache.table.class_for_size(16_000)
    blocks = [cache.cache_alloc(cls) for _ in range(6)]
    for block in blocks:
        cache.cache_free(cls, block)
    assert cache.cached_bytes <= 64 * 1024


def test_remote_block_rejected(heaps, settings):
    local = CoreCache(0, 0, heaps[0], settings)
    remote = CoreCache(2, 1, heaps[1], settings)
    cls = local.table.class_for_size(64)
    block = remote.cache_alloc(cls)
    with pytest.raises(StateError):
        local.cache_free(cls, block)
    with pytest.raises(StateError):
        remote.cache_free(cls + 1, block)
    with pytest.raises(RangeError):
        local.cache_alloc(len(local.table))


def test_flush_all_returns_everything(heaps, settings):
    cache = CoreCache(0, 0, heaps[0], settings)
    cls = cache.table.class_for_size(64)
    block = cache.cache_alloc(cls)
    cache.cache_free(cls, block)
    flushed = cache.flush_all()
    assert flushed == cache.table[cls].batch_size
    assert cache.cached_blocks() == []
    assert cache.cached_bytes == 0
    # Todos los bloques volvieron: el span se recicló
    assert heaps[0].page_map.lookup(block) is None
