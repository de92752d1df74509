"""
Benchmark de verificación de localidad.

Cada thread asigna blocks_per_thread bloques de block_bytes para sí mismo,
los escribe, cuenta sus páginas remotas y, tras una barrera, libera los
bloques de su vecino izquierdo ((tid - 1 + N) mod N). Una repetición de
warm-up y luego `repetitions` medidas.
"""
import logging
import statistics
import time
from typing import Dict, List, Optional

import numpy as np

from app.domain.events import ExperimentCompletedEvent, RepetitionCompletedEvent
from app.domain.topology import NumaTopology, ThreadRegistry
from app.infra.event_bus import get_event_bus
from app.infra.executor import create_executor
from app.infra.topology_repository import resolve_topology
from app.models.requests import BenchConfig
from app.models.responses import RepetitionResult, RunResult, VerifyReport
from app.shared.errors import ConfigError
from app.strategies.allocator_strategy import create_allocator

logger = logging.getLogger(__name__)

DEFAULT_THREAD_COUNTS = (8, 16, 32, 64, 128, 192, 256)
TREND_THREAD_COUNTS = (16, 32, 64, 128)


class RunVerifyService:
    """Ejecuta el benchmark de verificación y evalúa las expectativas por asignador"""

    def __init__(self):
        self.event_bus = get_event_bus()

    def execute(self, config: BenchConfig, topology: Optional[NumaTopology] = None) -> RunResult:
        """
        Una ejecución completa (warm-up + repeticiones) para config.threads.

        Raises:
            ConfigError: Si la configuración es inválida (antes de cualquier asignación)
        """
        topology = topology or resolve_topology(config.topology)
        if config.threads > topology.total_cores:
            raise ConfigError(
                f"threads={config.threads} excede los {topology.total_cores} cores de la topología"
            )

        registry = ThreadRegistry(topology)
        registry.register_compact(config.threads)
        allocator = create_allocator(
            config.allocator, topology, registry,
            page_size=config.page_size, backing=config.backing,
        )
        executor = create_executor(config.deterministic, config.seed)
        n = config.threads
        distance = topology.distance
        blocks: List[List[int]] = [[] for _ in range(n)]

        repetitions: List[RepetitionResult] = []
        started = time.perf_counter()
        for rep in range(config.repetitions + 1):
            # [remote, local, unbound, coste] por thread
            tallies = np.zeros((n, 4), dtype=np.float64)
            pages_before = allocator.provider.stats().pages_total_allocated
            rep_started = time.perf_counter()

            def allocate_and_write(tid: int) -> None:
                node = registry.node_of_thread(tid)
                mine = blocks[tid]
                for _ in range(config.blocks_per_thread):
                    addr = allocator.alloc(config.block_bytes, tid)
                    mine.append(addr)
                    length = max(config.block_bytes, 1)
                    if config.write_blocks:
                        allocator.write(addr, length, tid, 0)
                    nodes = allocator.page_nodes(addr, length)
                    bound = nodes[nodes >= 0]
                    local = int(np.count_nonzero(bound == node))
                    tallies[tid, 0] += len(bound) - local
                    tallies[tid, 1] += local
                    tallies[tid, 2] += len(nodes) - len(bound)
                    if config.write_blocks:
                        tallies[tid, 3] += float(distance[node, bound].sum())

            def free_left_neighbor(tid: int) -> None:
                left = (tid - 1 + n) % n
                victims = blocks[left]
                blocks[left] = []
                for addr in victims:
                    allocator.free(addr, tid)

            executor.run_lockstep(n, [allocate_and_write, free_left_neighbor], on_start=registry.attach)
            registry.detach()

            totals = tallies.sum(axis=0)
            result = RepetitionResult(
                repetition=rep,
                remote_pages=int(totals[0]),
                local_pages=int(totals[1]),
                unbound_pages=int(totals[2]),
                modeled_cost=float(totals[3]),
                pages_allocated=allocator.provider.stats().pages_total_allocated - pages_before,
                wall_time_s=time.perf_counter() - rep_started,
            )
            repetitions.append(result)
            self.event_bus.publish_sync(RepetitionCompletedEvent(
                allocator=config.allocator,
                threads=n,
                repetition=rep,
                remote_pages=result.remote_pages,
                local_pages=result.local_pages,
            ))

        measured = repetitions[1:]
        requested = n * config.blocks_per_thread * config.block_bytes
        reserved = n * config.blocks_per_thread * self._reserved_per_block(allocator, config.block_bytes)
        run = RunResult(
            allocator=config.allocator,
            threads=n,
            nodes_used=len(registry.occupied_nodes()),
            page_size=allocator.provider.page_size,
            mode=executor.mode,
            repetitions=repetitions,
            remote_pages=int(statistics.median(r.remote_pages for r in measured)),
            local_pages=int(statistics.median(r.local_pages for r in measured)),
            modeled_cost=float(statistics.median(r.modeled_cost for r in measured)),
            requested_bytes=requested,
            reserved_bytes=reserved,
            fragmentation=(reserved - requested) / reserved * 100.0 if reserved else 0.0,
            wall_time_s=time.perf_counter() - started,
            heap=allocator.report(),
        )
        logger.info(
            f"📊 verify {config.allocator} threads={n}: remote pages (median) = {run.remote_pages}"
        )
        return run

    @staticmethod
    def _reserved_per_block(allocator, nbytes: int) -> int:
        tid = allocator.registry.bindings()[0].tid
        addr = allocator.alloc(nbytes, tid)
        try:
            return allocator.usable_size(addr)
        finally:
            allocator.free(addr, tid)

    def sweep(self, config: BenchConfig, thread_counts=DEFAULT_THREAD_COUNTS) -> VerifyReport:
        """Ejecutar para varios números de threads y evaluar las expectativas del asignador"""
        topology = resolve_topology(config.topology)
        runs = [
            self.execute(config.model_copy(update={"threads": threads}), topology)
            for threads in thread_counts
        ]
        failures = check_expectations(config.allocator, runs, topology)
        report = VerifyReport(allocator=config.allocator, runs=runs, passed=not failures, failures=failures)
        self.event_bus.publish_sync(ExperimentCompletedEvent(
            command="verify",
            passed=report.passed,
            summary={"allocator": config.allocator, "remote_pages": {r.threads: r.remote_pages for r in runs}},
        ))
        return report


def check_expectations(allocator: str, runs: List[RunResult], topology: NumaTopology) -> List[str]:
    """
    Expectativas por asignador:
    - psm / membind: 0 páginas remotas en toda repetición medida
    - shared-cache: 0 con un solo nodo ocupado, > 0 con dos o más,
      y mediana no decreciente en 16 → 32 → 64 → 128 threads
    - first-touch (el dueño escribe primero): 0 páginas remotas
    """
    failures: List[str] = []
    if allocator in ("psm", "membind", "first-touch"):
        for run in runs:
            bad = [r.repetition for r in run.measured if r.remote_pages != 0]
            if bad:
                failures.append(
                    f"{allocator} threads={run.threads}: páginas remotas en las repeticiones {bad}"
                )
        return failures

    by_threads: Dict[int, RunResult] = {run.threads: run for run in runs}
    for run in runs:
        if run.nodes_used == 1 and run.remote_pages != 0:
            failures.append(f"{allocator} threads={run.threads}: un solo nodo y {run.remote_pages} páginas remotas")
        if run.nodes_used > 1 and topology.num_nodes > 1 and run.remote_pages == 0:
            failures.append(f"{allocator} threads={run.threads}: se esperaban páginas remotas")
    trend = [by_threads[t].remote_pages for t in TREND_THREAD_COUNTS if t in by_threads]
    if any(b < a for a, b in zip(trend, trend[1:])):
        failures.append(f"{allocator}: mediana de páginas remotas decreciente {trend}")
    return failures
