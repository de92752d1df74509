"""
Job que regenera todas las tablas de resultados como CSV.

Genera:
1. fragtable.csv: grilla de fragmentación por página entera
2. verify.csv: páginas remotas por asignador y número de threads
3. advect.csv: curva de mejora psm-owner vs first-touch-initializer

Uso:
    python -m app.jobs.reproduce_tables [directorio_salida]
"""
import logging
import sys
from pathlib import Path
from typing import Optional

from app.infra.report_writer import render_advect, render_fragtable, render_verify, write_output
from app.infra.topology_repository import resolve_topology
from app.models.requests import AdvectionConfig, BenchConfig
from app.services.run_advect import RunAdvectService
from app.services.run_fragtable import RunFragtableService
from app.services.run_verify import DEFAULT_THREAD_COUNTS, RunVerifyService
from app.strategies.allocator_strategy import available_allocators

import app.listeners  # noqa: F401

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)


def reproduce_tables(
    output_dir: Path,
    deterministic: bool = True,
    bench: Optional[BenchConfig] = None,
    advection: Optional[AdvectionConfig] = None,
) -> bool:
    """
    Regenerar las tablas en output_dir.

    Args:
        output_dir: Directorio destino de los CSV
        deterministic: Intercalado sembrado en un solo thread
        bench: Plantilla de verify (topología, bloques, repeticiones); el asignador se recorre
        advection: Configuración de la mini-app de advección

    Returns:
        True si todas las verificaciones pasaron
    """
    passed = True

    # 1️⃣ Fragmentación
    table = RunFragtableService().execute()
    write_output(render_fragtable(table, "csv"), output_dir / "fragtable.csv")
    logger.info("Fragmentation grid written")

    # 2️⃣ Páginas remotas por asignador
    bench = bench or BenchConfig()
    topology = resolve_topology(bench.topology)
    thread_counts = [t for t in DEFAULT_THREAD_COUNTS if t <= topology.total_cores]
    service = RunVerifyService()
    reports = []
    for allocator in available_allocators():
        config = bench.model_copy(update={"allocator": allocator, "deterministic": deterministic})
        report = service.sweep(config, thread_counts)
        passed = passed and report.passed
        reports.append(report)
        logger.info(f"Verify {allocator}: {'passed' if report.passed else 'FAILED'}")
    write_output(render_verify(reports, "csv"), output_dir / "verify.csv")

    # 3️⃣ Advección
    advection = (advection or AdvectionConfig()).model_copy(update={"deterministic": deterministic})
    sweep = RunAdvectService().sweep(advection)
    passed = passed and sweep.passed
    write_output(render_advect(sweep, "csv"), output_dir / "advect.csv")
    logger.info(f"Advection trend: {'passed' if sweep.passed else 'FAILED'}")

    return passed


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("results")
    logger.info(f"Starting reproduction job into {target}...")
    ok = reproduce_tables(target)
    logger.info("Reproduction job finished")
    sys.exit(0 if ok else 1)
