"""
Parseo de tamaños legibles ("4K", "64K", "2M", "216000").
"""
import re

from app.shared.errors import ConfigError

_UNITS = {"": 1, "B": 1, "K": 1024, "KB": 1024, "KIB": 1024, "M": 1024 ** 2, "MB": 1024 ** 2, "MIB": 1024 ** 2}
_PATTERN = re.compile(r"^\s*(\d+)\s*([A-Za-z]*)\s*$")


def parse_size(text: str) -> int:
    """
    Convertir un tamaño legible a bytes.

    Raises:
        ConfigError: Si el texto no es un tamaño válido
    """
    match = _PATTERN.match(str(text))
    if not match or match.group(2).upper() not in _UNITS:
        raise ConfigError(f"Tamaño inválido: {text!r}")
    return int(match.group(1)) * _UNITS[match.group(2).upper()]


def format_size(nbytes: int) -> str:
    for unit, factor in (("M", 1024 ** 2), ("K", 1024)):
        if nbytes >= factor and nbytes % factor == 0:
            return f"{nbytes // factor}{unit}"
    return str(nbytes)
