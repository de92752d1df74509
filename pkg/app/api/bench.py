"""
Comandos del CLI `bench`: verify | fragtable | stress | advect.
"""
import logging
from pathlib import Path
from typing import Annotated, List, Optional

import typer

from app.config import get_settings
from app.infra.report_writer import (
    render_advect,
    render_fragtable,
    render_stress,
    render_verify,
    write_output,
)
from app.infra.topology_repository import resolve_topology
from app.middleware.error_handler import EXIT_CHECK_FAILED, handle_errors
from app.models.requests import AdvectionConfig, BenchConfig, StressConfig
from app.services.run_advect import RunAdvectService
from app.services.run_fragtable import (
    DEFAULT_DATA_SIZES,
    DEFAULT_PAGE_SIZES,
    RunFragtableService,
    reference_deviations,
)
from app.services.run_stress import RunStressService
from app.services.run_verify import DEFAULT_THREAD_COUNTS, RunVerifyService
from app.shared.errors import ConfigError
from app.utils.sizes import parse_size

logger = logging.getLogger(__name__)

router = typer.Typer()

# Opciones compartidas
TopologyOption = Annotated[
    Optional[str],
    typer.Option("--topology", help="Archivo de topología JSON/YAML (por defecto: referencia 32x8)"),
]
PageSizeOption = Annotated[Optional[str], typer.Option("--page-size", help="4K, 64K o 2M")]
SeedOption = Annotated[int, typer.Option("--seed")]
FormatOption = Annotated[str, typer.Option("--format", help="text | csv | json")]
OutOption = Annotated[Optional[Path], typer.Option("--out", help="Archivo de salida (por defecto stdout)")]
DeterministicOption = Annotated[
    bool, typer.Option("--deterministic", help="Intercalado sembrado en un solo thread")
]
BackingOption = Annotated[Optional[str], typer.Option("--backing", help="mmap | virtual")]


def _topology_path(topology: Optional[str]) -> Optional[str]:
    return topology or get_settings().topology_file


def _page_size(text: Optional[str]) -> Optional[int]:
    return parse_size(text) if text else None


def _finish(passed: bool) -> None:
    if not passed:
        raise typer.Exit(code=EXIT_CHECK_FAILED)


@router.command()
def verify(
    allocator: Annotated[List[str], typer.Option("--allocator", "-a")] = ["psm"],
    threads: Annotated[Optional[List[int]], typer.Option("--threads", "-t")] = None,
    topology: TopologyOption = None,
    page_size: PageSizeOption = None,
    seed: SeedOption = 0,
    reps: Annotated[int, typer.Option("--reps", help="Repeticiones medidas (más una de warm-up)")] = 5,
    fmt: FormatOption = "text",
    out: OutOption = None,
    deterministic: DeterministicOption = False,
    backing: BackingOption = "virtual",
    blocks_per_thread: Annotated[int, typer.Option("--blocks-per-thread")] = 64,
    block_size: Annotated[str, typer.Option("--block-size")] = "1M",
):
    """Benchmark de localidad: páginas remotas por asignador y número de threads."""
    with handle_errors("verify"):
        path = _topology_path(topology)
        resolved = resolve_topology(path)
        thread_counts = threads or [t for t in DEFAULT_THREAD_COUNTS if t <= resolved.total_cores]
        if not thread_counts:
            raise ConfigError("Ningún número de threads cabe en la topología")

        service = RunVerifyService()
        reports = []
        for name in allocator:
            config = BenchConfig(
                allocator=name,
                threads=thread_counts[0],
                topology=path,
                page_size=_page_size(page_size),
                repetitions=reps,
                seed=seed,
                deterministic=deterministic,
                backing=backing,
                blocks_per_thread=blocks_per_thread,
                block_bytes=parse_size(block_size),
            )
            reports.append(service.sweep(config, thread_counts))
        write_output(render_verify(reports, fmt), out)
    _finish(all(report.passed for report in reports))


@router.command()
def fragtable(
    size: Annotated[Optional[List[str]], typer.Option("--size", "-s", help="Tamaño de dato")] = None,
    page_size: Annotated[Optional[List[str]], typer.Option("--page-size", "-p")] = None,
    fmt: FormatOption = "text",
    out: OutOption = None,
):
    """Grilla de fragmentación por página entera."""
    with handle_errors("fragtable"):
        data_sizes = [parse_size(s) for s in size] if size else list(DEFAULT_DATA_SIZES)
        page_sizes = [parse_size(p) for p in page_size] if page_size else list(DEFAULT_PAGE_SIZES)
        if any(s < 1 for s in data_sizes + page_sizes):
            raise ConfigError("Los tamaños deben ser >= 1 byte")
        table = RunFragtableService().execute(data_sizes, page_sizes)
        write_output(render_fragtable(table, fmt), out)
        deviations = reference_deviations(table)
        for deviation in deviations:
            logger.warning(f"⚠️ Reference cell mismatch: {deviation}")
    _finish(not deviations)


@router.command()
def stress(
    allocator: Annotated[str, typer.Option("--allocator", "-a")] = "psm",
    threads: Annotated[int, typer.Option("--threads", "-t")] = 64,
    ops: Annotated[int, typer.Option("--ops")] = 1_000_000,
    topology: TopologyOption = None,
    page_size: PageSizeOption = None,
    seed: SeedOption = 0,
    fmt: FormatOption = "text",
    out: OutOption = None,
    deterministic: DeterministicOption = False,
    backing: BackingOption = None,
    inject_double_free: Annotated[bool, typer.Option("--inject-double-free")] = False,
):
    """Stress aleatorio de alloc/free contra el oráculo de contabilidad."""
    with handle_errors("stress"):
        config = StressConfig(
            allocator=allocator,
            threads=threads,
            ops=ops,
            topology=_topology_path(topology),
            page_size=_page_size(page_size),
            seed=seed,
            deterministic=deterministic,
            backing=backing,
            inject_double_free=inject_double_free,
        )
        result = RunStressService().execute(config)
        write_output(render_stress(result, fmt), out)
    _finish(result.passed)


@router.command()
def advect(
    nodes: Annotated[Optional[List[int]], typer.Option("--nodes", "-n")] = None,
    topology: TopologyOption = None,
    page_size: PageSizeOption = None,
    patch_cells: Annotated[int, typer.Option("--patch-cells")] = 184,
    halo: Annotated[int, typer.Option("--halo")] = 1,
    timesteps: Annotated[int, typer.Option("--timesteps")] = 20,
    seed: SeedOption = 0,
    fmt: FormatOption = "text",
    out: OutOption = None,
    deterministic: DeterministicOption = False,
):
    """Mini-app de advección: psm-owner contra first-touch-initializer."""
    with handle_errors("advect"):
        update = {"nodes": nodes} if nodes else {}
        config = AdvectionConfig(
            topology=_topology_path(topology),
            page_size=_page_size(page_size),
            patch_cells=patch_cells,
            halo=halo,
            timesteps=timesteps,
            seed=seed,
            deterministic=deterministic,
            **update,
        )
        sweep = RunAdvectService().sweep(config)
        write_output(render_advect(sweep, fmt), out)
    _finish(sweep.passed)
