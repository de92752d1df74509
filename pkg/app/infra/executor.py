"""
Ejecutores de workloads multi-thread.

- ThreadedExecutor: un thread real por thread lógico; cada lockstep termina en una barrera
- DeterministicExecutor: misma lógica en un solo thread con un intercalado sembrado,
  reproducible bit a bit con la misma semilla
"""
import logging
import threading
from abc import ABC, abstractmethod
from typing import Callable, Iterator, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

Phase = Callable[[int], None]
Task = Callable[[int], Iterator[None]]
Hook = Optional[Callable[[int], None]]


class Executor(ABC):
    """Contrato común: fases en lockstep y tareas intercaladas"""

    mode: str

    @abstractmethod
    def run_lockstep(self, num_threads: int, phases: Sequence[Phase], on_start: Hook = None) -> None:
        """
        Ejecutar cada fase en todos los threads, con barrera entre fases.

        Args:
            num_threads: Threads lógicos (tid 0..num_threads-1)
            phases: Funciones phase(tid)
            on_start: Llamada antes de que un thread ejecute trabajo (p.ej. registry.attach)
        """

    @abstractmethod
    def run_interleaved(self, num_threads: int, task: Task, on_start: Hook = None) -> None:
        """Ejecutar task(tid) en todos los threads; cada `yield` es un punto de intercalado"""


class ThreadedExecutor(Executor):
    mode = "threaded"

    def run_lockstep(self, num_threads: int, phases: Sequence[Phase], on_start: Hook = None) -> None:
        barrier = threading.Barrier(num_threads)

        def worker(tid: int) -> None:
            if on_start:
                on_start(tid)
            for phase in phases:
                phase(tid)
                barrier.wait()

        self._run(num_threads, worker, barrier)

    def run_interleaved(self, num_threads: int, task: Task, on_start: Hook = None) -> None:
        def worker(tid: int) -> None:
            if on_start:
                on_start(tid)
            for _ in task(tid):
                pass

        self._run(num_threads, worker, None)

    def _run(self, num_threads: int, worker: Phase, barrier: Optional[threading.Barrier]) -> None:
        errors: List[BaseException] = []
        errors_lock = threading.Lock()

        def guarded(tid: int) -> None:
            try:
                worker(tid)
            except threading.BrokenBarrierError:
                pass
            except BaseException as e:
                with errors_lock:
                    errors.append(e)
                if barrier is not None:
                    barrier.abort()

        threads = [
            threading.Thread(target=guarded, args=(tid,), name=f"psm-worker-{tid}", daemon=True)
            for tid in range(num_threads)
        ]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        if errors:
            logger.error(f"❌ {len(errors)} worker thread(s) failed; first: {errors[0]!r}")
            raise errors[0]


class DeterministicExecutor(Executor):
    """Intercalado sembrado en el thread que llama"""

    mode = "deterministic"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def run_lockstep(self, num_threads: int, phases: Sequence[Phase], on_start: Hook = None) -> None:
        for phase in phases:
            for tid in self._rng.permutation(num_threads):
                tid = int(tid)
                if on_start:
                    on_start(tid)
                phase(tid)

    def run_interleaved(self, num_threads: int, task: Task, on_start: Hook = None) -> None:
        running = [(tid, task(tid)) for tid in range(num_threads)]
        while running:
            index = int(self._rng.integers(len(running)))
            tid, steps = running[index]
            if on_start:
                on_start(tid)
            try:
                next(steps)
            except StopIteration:
                running[index] = running[-1]
                running.pop()


def create_executor(deterministic: bool, seed: int = 0) -> Executor:
    return DeterministicExecutor(seed) if deterministic else ThreadedExecutor()
