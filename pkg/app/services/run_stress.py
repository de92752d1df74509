"""
Stress aleatorio de alloc/free contra el oráculo de contabilidad.
"""
import logging
import math
import time
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from app.domain.events import ExperimentCompletedEvent, StressViolationEvent
from app.domain.size_classes import LARGE_THRESHOLD
from app.domain.topology import ThreadRegistry
from app.infra.event_bus import get_event_bus
from app.infra.executor import create_executor
from app.infra.sim_page_provider import ARENA_BASE
from app.infra.topology_repository import resolve_topology
from app.models.requests import StressConfig
from app.models.responses import StressResult
from app.services.stress_oracle import BookkeepingOracle
from app.shared.errors import ConfigError, PsmError, StateError
from app.strategies.allocator_strategy import AllocatorStrategy, create_allocator

logger = logging.getLogger(__name__)

MAX_PUBLISHED_VIOLATIONS = 20
THREADED_LIMITATION = (
    "chequeo double_free desactivado en modo threaded: la dirección puede reasignarse a otro "
    "thread dentro de la misma op; usar --deterministic o --inject-double-free"
)


class RunStressService:
    """
    Traza aleatoria concurrente de alloc/free sobre un asignador.

    Cada thread asigna para sí mismo y libera bloques propios o del vecino
    izquierdo (frees cruzados). Se verifican disjunción, alineación,
    localidad, false page-sharing y detección de frees inválidos.
    """

    def __init__(self):
        self.event_bus = get_event_bus()

    def execute(self, config: StressConfig) -> StressResult:
        """
        Ejecutar el stress.

        Raises:
            ConfigError: Si threads excede los cores de la topología
        """
        topology = resolve_topology(config.topology)
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
        run = _StressRun(config, allocator, registry)

        logger.info(
            f"🔥 Stress {config.allocator}: {config.ops} ops, {config.threads} threads, "
            f"seed={config.seed}, deterministic={config.deterministic}"
        )
        started = time.perf_counter()
        executor = create_executor(config.deterministic, config.seed)
        executor.run_interleaved(config.threads, run.task, on_start=registry.attach)
        registry.detach()
        run.drain()
        elapsed = time.perf_counter() - started

        oracle = run.oracle
        passed = oracle.violation_count == 0
        result = StressResult(
            allocator=config.allocator,
            threads=config.threads,
            ops=config.ops,
            seed=config.seed,
            mode=executor.mode,
            passed=passed,
            violations=sorted(oracle.violations, key=lambda v: v.op_index),
            first_violation_op=oracle.first_violation_op,
            reproducing_prefix=None if passed else oracle.first_violation_op + 1,
            path_counters=allocator.path_counters(),
            bad_free_checks=run.bad_free_checks,
            peak_live_blocks=oracle.peak_live,
            limitations=[] if config.deterministic else [THREADED_LIMITATION],
            wall_time_s=elapsed,
        )

        for violation in result.violations[:MAX_PUBLISHED_VIOLATIONS]:
            self.event_bus.publish_sync(StressViolationEvent(
                allocator=config.allocator,
                kind=violation.kind,
                op_index=violation.op_index,
                message=violation.message,
                details=violation.details,
            ))
        self.event_bus.publish_sync(ExperimentCompletedEvent(
            command="stress",
            passed=passed,
            summary={"allocator": config.allocator, "violations": oracle.violation_count},
        ))
        if passed:
            logger.info(f"✅ Stress passed in {elapsed:.1f}s (peak live blocks {oracle.peak_live})")
        else:
            logger.warning(
                f"⚠️ Stress failed: {oracle.violation_count} violations, "
                f"first at op {oracle.first_violation_op}"
            )
        return result


class _StressRun:
    """Estado compartido de una ejecución de stress"""

    def __init__(self, config: StressConfig, allocator: AllocatorStrategy, registry: ThreadRegistry):
        self.config = config
        self.allocator = allocator
        self.registry = registry
        self.oracle = BookkeepingOracle(
            page_size=allocator.provider.page_size,
            total_ops=config.ops,
            check_locality=allocator.locality_guaranteed,
            check_false_sharing=allocator.locality_guaranteed,
        )
        self.has_memory = allocator.provider.has_memory
        self.live: List[List[Tuple[int, int]]] = [[] for _ in range(config.threads)]
        self.inject_at = config.ops // 2 if config.inject_double_free else None
        self.bad_free_checks: Dict[str, int] = {"double_free": 0, "interior": 0, "unknown": 0}
        self._unknown_addr = ARENA_BASE - allocator.provider.page_size

    def _draw_size(self, rng: np.random.Generator) -> int:
        if rng.random() < self.config.large_fraction:
            return int(rng.integers(LARGE_THRESHOLD + 1, max(self.config.max_large_bytes, LARGE_THRESHOLD + 1) + 1))
        # log-uniforme en [0, 256 KiB]
        return int(math.exp(rng.uniform(0, math.log(LARGE_THRESHOLD + 1)))) - 1

    def task(self, tid: int) -> Iterator[None]:
        rng = np.random.default_rng([self.config.seed, tid])
        owner_node = self.registry.node_of_thread(tid)
        while True:
            op = self.oracle.next_op()
            if op is None:
                return
            mine = self.live[tid]
            if op == self.inject_at:
                self._inject_double_free(op, tid)
            elif len(mine) < self.config.max_live_per_thread and (not mine or rng.random() < 0.55):
                self._alloc(op, tid, owner_node, rng)
            else:
                self._free(op, tid, rng)
            yield

    def _alloc(self, op: int, tid: int, owner_node: int, rng: np.random.Generator) -> None:
        size = self._draw_size(rng)
        try:
            addr = self.allocator.alloc(size, tid)
            length = max(size, 1)
            tag = op % 255 + 1
            self.allocator.write(addr, length, tid, tag)
            usable = self.allocator.usable_size(addr)
            nodes = self.allocator.page_nodes(addr, length) if self.oracle.check_locality else None
        except PsmError as e:
            self.oracle.record("error", op, tid, f"alloc({size}) falló: {e.message}", code=e.code)
            return
        self.oracle.on_alloc(
            op, tid, owner_node, addr, size, usable,
            self.allocator.alignment_for(size), nodes, tag,
        )
        self.live[tid].append((addr, tag))

    def _take_block(self, tid: int, rng: np.random.Generator) -> Optional[Tuple[int, int]]:
        # list.pop es atómico; un bloque tomado es exclusivo de quien lo tomó
        left = (tid - 1) % self.config.threads
        sources = [left, tid] if rng.random() < self.config.cross_free_fraction else [tid]
        for source in sources:
            try:
                return self.live[source].pop()
            except IndexError:
                continue
        return None

    def _free(self, op: int, tid: int, rng: np.random.Generator) -> None:
        taken = self._take_block(tid, rng)
        if taken is None:
            return
        addr, tag = taken
        check_bad_frees = rng.random() < self.config.bad_free_fraction

        if check_bad_frees:
            self._expect_rejected(op, tid, addr + 1, "interior")
            self._expect_rejected(op, tid, self._unknown_addr, "unknown")

        if self.oracle.on_free(op, tid, addr) is None:
            return
        try:
            if self.has_memory and self.allocator.read(addr, 1)[0] != tag:
                self.oracle.record("corruption", op, tid, f"Bloque 0x{addr:x} sobrescrito por otro dueño")
            self.allocator.free(addr, tid)
        except PsmError as e:
            self.oracle.record("error", op, tid, f"free(0x{addr:x}) falló: {e.message}", code=e.code)
            return

        # Un doble free real solo es seguro sin intercalado dentro de la op
        if check_bad_frees and self.config.deterministic:
            self._expect_rejected(op, tid, addr, "double_free")

    def _expect_rejected(self, op: int, tid: int, addr: int, kind: str) -> None:
        self.bad_free_checks[kind] += 1
        try:
            self.allocator.free(addr, tid)
        except StateError:
            return
        except PsmError as e:
            self.oracle.record("error", op, tid, f"Free inválido ({kind}) lanzó {e.code}: {e.message}")
            return
        self.oracle.record(
            "double_free" if kind == "double_free" else "invalid_free",
            op, tid, f"Free inválido ({kind}) en 0x{addr:x} no fue detectado",
        )

    def _inject_double_free(self, op: int, tid: int) -> None:
        if self.live[tid]:
            addr, _ = self.live[tid].pop()
        else:
            addr = self.allocator.alloc(64, tid)
            self.oracle.on_alloc(op, tid, self.registry.node_of_thread(tid), addr, 64, 64, 0)
        self.oracle.on_free(op, tid, addr)
        self.allocator.free(addr, tid)
        try:
            self.allocator.free(addr, tid)
        except StateError as e:
            self.oracle.record(
                "double_free", op, tid,
                f"Doble free inyectado en 0x{addr:x} detectado por el asignador: {e.message}",
                injected=True,
            )
            return
        self.oracle.record(
            "double_free", op, tid,
            f"Doble free inyectado en 0x{addr:x} NO detectado", injected=True,
        )

    def drain(self) -> None:
        """Liberar todo lo vivo y verificar que el asignador no retiene bytes vivos"""
        op = self.config.ops
        for tid, blocks in enumerate(self.live):
            while blocks:
                addr, _ = blocks.pop()
                self.oracle.on_free(op, tid, addr)
                try:
                    self.allocator.free(addr, tid)
                except PsmError as e:
                    self.oracle.record("error", op, tid, f"free(0x{addr:x}) al drenar: {e.message}")
        report = self.allocator.report()
        if report.live_bytes:
            self.oracle.record(
                "leak", op, -1, f"{report.live_bytes} bytes vivos tras liberar todo",
            )
