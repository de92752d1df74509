"""
Tests del stress aleatorio contra el oráculo de contabilidad.
"""
import numpy as np
import pytest

from app.domain.events import StressViolationEvent
from app.domain.size_classes import build_table
from app.infra.report_writer import render_stress
from app.listeners.audit_listener import recent_events
from app.models.requests import StressConfig
from app.services.run_stress import RunStressService
from app.services.stress_oracle import BookkeepingOracle
from app.shared.errors import ConfigError


def _config(**overrides):
    base = dict(threads=16, ops=20_000, seed=7, deterministic=True, bad_free_fraction=0.05)
    base.update(overrides)
    return StressConfig(**base)


def test_psm_deterministic_passes_and_exercises_both_paths():
    result = RunStressService().execute(_config(allocator="psm"))
    assert result.passed, result.violations[:5]
    assert result.path_counters["small_allocs"] > 0
    assert result.path_counters["large_allocs"] > 0
    assert result.path_counters["central_returns"] > 0
    assert result.bad_free_checks["double_free"] > 0
    assert result.bad_free_checks["interior"] > 0
    assert result.reproducing_prefix is None
    assert result.limitations == []


def test_psm_threaded_passes():
    result = RunStressService().execute(_config(allocator="psm", deterministic=False, threads=8, ops=10_000))
    assert result.passed, result.violations[:5]
    assert result.mode == "threaded"
    # Sin intercalado controlado no se prueban dobles frees reales
    assert result.bad_free_checks["double_free"] == 0
    assert len(result.limitations) == 1
    assert "double_free" in result.limitations[0]
    assert "Note:" in render_stress(result, "text")
    assert render_stress(result, "json").count("limitations") == 1


@pytest.mark.parametrize("allocator", ["first-touch", "shared-cache", "membind"])
def test_baselines_pass(allocator):
    result = RunStressService().execute(_config(allocator=allocator, ops=5_000))
    assert result.passed, result.violations[:5]


def test_injected_double_free_fails_with_diagnosis():
    config = _config(allocator="psm", ops=4_000, inject_double_free=True)
    result = RunStressService().execute(config)
    assert not result.passed
    assert result.first_violation_op == 2_000
    assert result.reproducing_prefix == 2_001
    violation = result.violations[0]
    assert violation.kind == "double_free"
    assert violation.details["injected"] is True
    assert "detectado" in violation.message
    assert any(isinstance(e, StressViolationEvent) for e in recent_events())


def test_deterministic_runs_are_reproducible():
    first = RunStressService().execute(_config(allocator="psm", ops=5_000))
    second = RunStressService().execute(_config(allocator="psm", ops=5_000))
    assert first.path_counters == second.path_counters
    assert first.peak_live_blocks == second.peak_live_blocks


def test_too_many_threads_is_a_config_error():
    with pytest.raises(ConfigError):
        RunStressService().execute(_config(threads=300))


def test_oracle_detects_overlap_alignment_and_false_sharing():
    oracle = BookkeepingOracle(page_size=4096, total_ops=10)
    assert oracle.on_alloc(0, 0, 0, 0x10000, 64, 64, 16) == []
    overlap = oracle.on_alloc(1, 1, 0, 0x10020, 64, 64, 16)
    assert [v.kind for v in overlap] == ["overlap"]
    misaligned = oracle.on_alloc(2, 1, 0, 0x20008, 64, 64, 16)
    assert [v.kind for v in misaligned] == ["alignment"]
    sharing = oracle.on_alloc(3, 2, 1, 0x10100, 64, 64, 16)
    assert [v.kind for v in sharing] == ["false_sharing"]
    assert oracle.violation_count == 3
    assert oracle.first_violation_op == 1


def test_oracle_locality_and_untracked_free():
    oracle = BookkeepingOracle(page_size=4096, total_ops=10)
    found = oracle.on_alloc(0, 0, 2, 0x40000, 8192, 8192, 4096, page_nodes=np.array([2, 1]))
    assert [v.kind for v in found] == ["locality"]
    assert oracle.on_free(1, 0, 0x40000) is not None
    assert oracle.on_free(2, 0, 0x40000) is None
    assert oracle.violations[-1].kind == "untracked_free"
    assert [oracle.next_op() for _ in range(11)][-1] is None


@pytest.mark.parametrize("threads", [8, 16, 32, 64, 128, 256])
@pytest.mark.parametrize("deterministic", [True, False])
def test_psm_full_cycle_safety_across_thread_counts(threads, deterministic):
    config = _config(
        allocator="psm", threads=threads, ops=threads * 40, deterministic=deterministic,
        max_live_per_thread=8, max_large_bytes=300_000,
    )
    result = RunStressService().execute(config)
    assert result.passed, result.violations[:5]
    assert result.threads == threads
    assert result.path_counters["small_allocs"] > 0


def test_oracle_accepts_eight_byte_alignment_for_odd_multiple_classes():
    table = build_table(4096)
    alignment = table[table.class_for_size(24)].alignment
    assert alignment == 8
    oracle = BookkeepingOracle(page_size=4096, total_ops=10)
    assert oracle.on_alloc(0, 0, 0, 0x10008, 24, 24, alignment) == []
    assert [v.kind for v in oracle.on_alloc(1, 0, 0, 0x10024, 24, 24, alignment)] == ["alignment"]
