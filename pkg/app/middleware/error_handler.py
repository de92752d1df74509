import json
import logging
import sys
from contextlib import contextmanager
from datetime import datetime, timezone
from typing import Any, Iterator, List, Union

import typer
from pydantic import ValidationError

from app.shared.errors import ConfigError, PsmError

# Configurar logger
logger = logging.getLogger("psmheap.errors")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_HEAP_ERROR = 3
EXIT_INTERNAL_ERROR = 4


def create_error_response(
    message: str,
    code: str = "ERROR",
    details: Union[List[str], Any] = None,
    command: str = "",
) -> dict:
    return {
        "success": False,
        "error": {
            "code": code,
            "message": message,
            "details": details,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "command": command,
        },
    }


def exit_code_for(exc: BaseException) -> int:
    """Exit code del CLI para una excepción"""
    if isinstance(exc, (ConfigError, ValidationError)):
        return EXIT_CONFIG_ERROR
    if isinstance(exc, PsmError):
        return EXIT_HEAP_ERROR
    return EXIT_INTERNAL_ERROR


def error_response_for(exc: BaseException, command: str) -> dict:
    if isinstance(exc, ValidationError):
        # Errores de validación de Pydantic
        details = []
        for error in exc.errors():
            field = ".".join(str(x) for x in error["loc"])
            details.append(f"{field}: {error['msg']}")
        return create_error_response("Validation Error", "VALIDATION_ERROR", details, command)
    if isinstance(exc, PsmError):
        return create_error_response(exc.message, exc.code, exc.details, command)
    return create_error_response("Internal Error", "INTERNAL_ERROR", command=command)


@contextmanager
def handle_errors(command: str) -> Iterator[None]:
    """
    Convertir excepciones en el sobre de error JSON (stderr) y en exit code.

    Usage:
        with handle_errors("verify"):
            ...
    """
    try:
        yield
    except typer.Exit:
        raise
    except Exception as exc:
        if not isinstance(exc, (PsmError, ValidationError)):
            logger.error(f"Unhandled error in {command}: {exc}", exc_info=True)
        envelope = error_response_for(exc, command)
        sys.stderr.write(json.dumps(envelope, default=str) + "\n")
        raise typer.Exit(code=exit_code_for(exc))
