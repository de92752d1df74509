"""
Render de resultados: tabla de texto (rich), CSV o JSON.

Columnas CSV estables (documentadas en README):
- verify:    VERIFY_CSV_COLUMNS, una fila por repetición
- fragtable: FRAGTABLE_CSV_COLUMNS, una fila por celda
- stress:    STRESS_CSV_COLUMNS, una fila por violación
- advect:    ADVECT_CSV_COLUMNS, una fila por (punto, brazo, fase)
- heap:      HEAP_CSV_COLUMNS (ver HeapReport.to_csv)
"""
import csv
import io
import json
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

from pydantic import BaseModel
from rich import box
from rich.console import Console
from rich.table import Table

from app.models.responses import AdvectSweep, FragTable, HeapReport, StressResult, VerifyReport
from app.shared.errors import ConfigError
from app.utils.sizes import format_size

FORMATS = ("text", "csv", "json")

VERIFY_CSV_COLUMNS = [
    "allocator", "threads", "nodes_used", "page_size", "mode", "repetition",
    "remote_pages", "local_pages", "unbound_pages", "modeled_cost", "pages_allocated",
    "requested_bytes", "reserved_bytes", "fragmentation",
]
FRAGTABLE_CSV_COLUMNS = ["page_size", "data_size", "fragmentation"]
STRESS_CSV_COLUMNS = ["allocator", "seed", "mode", "kind", "op_index", "tid", "message"]
ADVECT_CSV_COLUMNS = [
    "nodes", "threads", "placement", "phase", "local_pages", "remote_pages",
    "modeled_cost", "checksum", "improvement_ratio",
]


def _check_format(fmt: str) -> None:
    if fmt not in FORMATS:
        raise ConfigError(f"Formato desconocido: {fmt}", details={"formats": list(FORMATS)})


def _csv(columns: List[str], rows: Iterable[Sequence]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buffer.getvalue()


def _json(payload) -> str:
    if isinstance(payload, BaseModel):
        return payload.model_dump_json(indent=2)
    return json.dumps(
        [item.model_dump(mode="json") if isinstance(item, BaseModel) else item for item in payload],
        indent=2,
    )


def _text(*renderables) -> str:
    console = Console(file=io.StringIO(), width=160, color_system=None, highlight=False)
    for renderable in renderables:
        console.print(renderable)
    return console.file.getvalue()


def render_verify(reports: Sequence[VerifyReport], fmt: str = "text") -> str:
    """Páginas remotas por asignador (filas) y número de threads (columnas)"""
    _check_format(fmt)
    if fmt == "json":
        return _json(list(reports))
    if fmt == "csv":
        rows = []
        for report in reports:
            for run in report.runs:
                for rep in run.repetitions:
                    rows.append([
                        run.allocator, run.threads, run.nodes_used, run.page_size, run.mode,
                        rep.repetition, rep.remote_pages, rep.local_pages, rep.unbound_pages,
                        round(rep.modeled_cost, 4), rep.pages_allocated,
                        run.requested_bytes, run.reserved_bytes, round(run.fragmentation, 4),
                    ])
        return _csv(VERIFY_CSV_COLUMNS, rows)

    thread_counts = sorted({run.threads for report in reports for run in report.runs})
    table = Table(title="Remote pages (median of measured repetitions)", box=box.SIMPLE_HEAVY)
    table.add_column("Allocator")
    for threads in thread_counts:
        table.add_column(str(threads), justify="right")
    table.add_column("Check")
    cost = Table(title="Modeled writing cost / pages allocated / fragmentation", box=box.SIMPLE_HEAVY)
    for column in ("Allocator", "Threads", "Modeled cost", "Pages allocated", "Reserved", "Fragmentation"):
        cost.add_column(column, justify="left" if column == "Allocator" else "right")

    for report in reports:
        by_threads = {run.threads: run for run in report.runs}
        cells = [str(by_threads[t].remote_pages) if t in by_threads else "N.A." for t in thread_counts]
        table.add_row(report.allocator, *cells, "PASS" if report.passed else "FAIL")
        for run in report.runs:
            pages = sorted(r.pages_allocated for r in run.measured)
            cost.add_row(
                run.allocator, str(run.threads), f"{run.modeled_cost:.1f}",
                str(pages[len(pages) // 2]) if pages else "0",
                format_size(run.reserved_bytes), f"{run.fragmentation:.2f}%",
            )
    failures = [f"❌ {failure}" for report in reports for failure in report.failures]
    return _text(table, cost, *failures)


def render_fragtable(table: FragTable, fmt: str = "text") -> str:
    _check_format(fmt)
    if fmt == "json":
        return _json(table)
    if fmt == "csv":
        rows = [
            [page, size, round(table.cell(page, size), 4)]
            for page in table.page_sizes
            for size in table.data_sizes
        ]
        return _csv(FRAGTABLE_CSV_COLUMNS, rows)

    grid = Table(title="Whole-page fragmentation (%)", box=box.SIMPLE_HEAVY)
    grid.add_column("Page \\ Data")
    for size in table.data_sizes:
        grid.add_column(f"{size}B", justify="right")
    for page, row in zip(table.page_sizes, table.cells):
        grid.add_row(format_size(page), *(f"{value:.1f}" for value in row))
    return _text(grid)


def render_stress(result: StressResult, fmt: str = "text") -> str:
    _check_format(fmt)
    if fmt == "json":
        return _json(result)
    if fmt == "csv":
        rows = [
            [result.allocator, result.seed, result.mode, v.kind, v.op_index, v.tid, v.message]
            for v in result.violations
        ]
        return _csv(STRESS_CSV_COLUMNS, rows)

    summary = Table(title=f"Stress {result.allocator}", box=box.SIMPLE_HEAVY, show_header=False)
    summary.add_column("key")
    summary.add_column("value", justify="right")
    summary.add_row("ops", str(result.ops))
    summary.add_row("threads", str(result.threads))
    summary.add_row("seed / mode", f"{result.seed} / {result.mode}")
    summary.add_row("peak live blocks", str(result.peak_live_blocks))
    for name, value in sorted(result.path_counters.items()):
        summary.add_row(name, str(value))
    for name, value in sorted(result.bad_free_checks.items()):
        summary.add_row(f"free inválido {name}", str(value))
    summary.add_row("result", "PASS" if result.passed else "FAIL")

    renderables = [summary]
    for limitation in result.limitations:
        renderables.append(f"Note: {limitation}")
    if result.violations:
        violations = Table(title="Violations", box=box.SIMPLE)
        for column in ("op", "tid", "kind", "message"):
            violations.add_column(column)
        for v in result.violations:
            violations.add_row(str(v.op_index), str(v.tid), v.kind, v.message)
        renderables.append(violations)
        renderables.append(
            f"First violation at op {result.first_violation_op}; "
            f"reproduce with --deterministic --seed {result.seed} --ops {result.reproducing_prefix}"
        )
    return _text(*renderables)


def render_advect(sweep: AdvectSweep, fmt: str = "text") -> str:
    _check_format(fmt)
    if fmt == "json":
        return _json(sweep)
    if fmt == "csv":
        rows = []
        for point in sweep.points:
            for arm in (point.psm, point.first_touch):
                for phase, cost in [*arm.phases.items(), ("total", arm)]:
                    rows.append([
                        point.nodes, point.threads, arm.placement, phase,
                        cost.local_pages, cost.remote_pages, round(cost.modeled_cost, 4),
                        repr(arm.checksum), round(point.improvement_ratio, 6),
                    ])
        return _csv(ADVECT_CSV_COLUMNS, rows)

    table = Table(title="Advection: modeled cost by placement", box=box.SIMPLE_HEAVY)
    for column in ("Nodes", "Threads", "psm-owner", "first-touch-init", "Improvement", "psm compute remote"):
        table.add_column(column, justify="right")
    for point in sweep.points:
        table.add_row(
            str(point.nodes), str(point.threads),
            f"{point.psm.modeled_cost:.0f}", f"{point.first_touch.modeled_cost:.0f}",
            f"{point.improvement_ratio:.3f}x", str(point.psm.phases["compute"].remote_pages),
        )
    failures = [f"❌ {failure}" for failure in sweep.failures]
    return _text(table, *failures)


def render_heap(report: HeapReport, fmt: str = "text") -> str:
    _check_format(fmt)
    if fmt == "json":
        return _json(report)
    if fmt == "csv":
        return report.to_csv()
    table = Table(title=f"Heap {report.allocator} ({format_size(report.page_size)} pages)", box=box.SIMPLE)
    for column in ("Node", "Live", "Reserved", "Spans", "Remote blocks"):
        table.add_column(column, justify="right")
    for node in report.nodes:
        table.add_row(
            str(node.node), format_size(node.live_bytes), format_size(node.reserved_bytes),
            str(node.spans), str(node.remote_blocks),
        )
    return _text(table)


def write_output(content: str, out: Optional[Path]) -> None:
    """Escribir a `out` o a stdout"""
    if out is None:
        print(content, end="" if content.endswith("\n") else "\n")
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(content, encoding="utf-8")
