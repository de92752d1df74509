"""
Jerarquía de errores del heap simulado.

Cada error lleva un `code` estable que el CLI usa para construir
el sobre de error y decidir el exit code.
"""
from typing import Any, Optional


class PsmError(Exception):
    """Base de todos los errores del simulador"""
    code = "PSM_ERROR"

    def __init__(self, message: str, details: Optional[Any] = None):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "details": self.details}


class RangeError(PsmError, IndexError):
    """Nodo, core o tamaño fuera de rango"""
    code = "RANGE_ERROR"


class StateError(PsmError):
    """Uso inválido del estado: doble free, dirección desconocida, rebinding, solapamiento"""
    code = "STATE_ERROR"


class HeapOutOfMemoryError(PsmError, MemoryError):
    """Capacidad simulada de un nodo agotada"""
    code = "OUT_OF_MEMORY"


class ConfigError(PsmError, ValueError):
    """Configuración, topología o tamaño de página inválidos"""
    code = "CONFIG_ERROR"
