"""
Punto de entrada del CLI `bench`.
"""
import logging

import typer
from rich.console import Console
from rich.logging import RichHandler

from app.api.bench import router as bench_router
from app.config import get_settings

# Importar listeners para auto-registro
import app.listeners  # noqa: F401

logger = logging.getLogger(__name__)

cli = typer.Typer(
    name="bench",
    help="Simulador de heap NUMA con memoria compartida particionada.",
    no_args_is_help=True,
    add_completion=False,
)
cli.add_typer(bench_router)


@cli.callback()
def main(
    log_level: str = typer.Option(None, "--log-level", help="DEBUG | INFO | WARNING"),
):
    settings = get_settings()
    logging.basicConfig(
        level=(log_level or settings.log_level).upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )
    logger.debug(f"🚀 bench starting (environment={settings.environment})")


if __name__ == "__main__":
    cli()
