"""
Strategy Pattern para los asignadores bajo prueba (psm, first-touch, shared-cache, membind).
Los workloads solo hablan con esta interfaz.
"""
from abc import ABC, abstractmethod
from typing import Dict, Optional, Tuple, Type

import numpy as np

from app.config import Settings, get_settings
from app.domain.topology import NumaTopology, ThreadRegistry
from app.infra.sim_page_provider import SimPageProvider
from app.models.responses import HeapReport
from app.shared.errors import ConfigError


class AllocatorStrategy(ABC):
    """
    Estrategia base para un asignador sobre el proveedor simulado.
    Cada asignador implementa alloc/free y el informe; el acceso a memoria
    y las consultas de ubicación pasan por el proveedor.
    """

    name: str = ""
    locality_guaranteed: bool = True  # Toda página de un bloque queda en el nodo del dueño

    def __init__(
        self,
        topology: NumaTopology,
        registry: ThreadRegistry,
        provider: SimPageProvider,
        settings: Optional[Settings] = None,
    ):
        self.topology = topology
        self.registry = registry
        self.provider = provider
        self.settings = settings or get_settings()

    @abstractmethod
    def alloc(self, nbytes: int, tid: int) -> int:
        """
        Asignar un bloque para el thread tid.

        Args:
            nbytes: Bytes pedidos
            tid: Thread dueño (registrado)

        Returns:
            Dirección del bloque
        """
        pass

    @abstractmethod
    def free(self, addr: int, tid: Optional[int] = None) -> None:
        """
        Liberar un bloque desde el thread tid (None = thread desconocido).

        Raises:
            StateError: Dirección desconocida o doble free
        """
        pass

    @abstractmethod
    def usable_size(self, addr: int) -> int:
        pass

    @abstractmethod
    def report(self) -> HeapReport:
        pass

    def alignment_for(self, nbytes: int) -> int:
        """Alineación garantizada para un pedido de nbytes"""
        return self.provider.page_size

    def path_counters(self) -> Dict[str, int]:
        return {}

    def write(self, addr: int, length: int, tid: int, value: int = 0) -> None:
        """memset desde el thread tid"""
        self.provider.fill(addr, length, value)

    def read(self, addr: int, length: int) -> bytes:
        return self.provider.read(addr, length)

    def page_nodes(self, addr: int, length: int) -> np.ndarray:
        return self.provider.nodes_of_range(addr, length)

    def census(self, addr: int, length: int, node: int) -> Tuple[int, int, int]:
        return self.provider.page_census(addr, length, node)


_STRATEGIES: Dict[str, Type[AllocatorStrategy]] = {}


def register_strategy(cls: Type[AllocatorStrategy]) -> Type[AllocatorStrategy]:
    _STRATEGIES[cls.name] = cls
    return cls


def available_allocators() -> Tuple[str, ...]:
    _load_builtin()
    return tuple(_STRATEGIES)


def create_allocator(
    name: str,
    topology: NumaTopology,
    registry: Optional[ThreadRegistry] = None,
    page_size: Optional[int] = None,
    backing: Optional[str] = None,
    settings: Optional[Settings] = None,
) -> AllocatorStrategy:
    """
    Construir un asignador con su propio proveedor de páginas.

    Raises:
        ConfigError: Si el asignador no existe
    """
    _load_builtin()
    cls = _STRATEGIES.get(name)
    if cls is None:
        raise ConfigError(f"Asignador desconocido: {name}", details={"valid": list(_STRATEGIES)})
    settings = settings or get_settings()
    registry = registry or ThreadRegistry(topology, settings.exclusive_cores)
    provider = SimPageProvider(topology, page_size=page_size, backing=backing, settings=settings)
    return cls(topology, registry, provider, settings)


def _load_builtin() -> None:
    # Importar registra cada estrategia
    from app.strategies import (  # noqa: F401
        first_touch_strategy,
        membind_strategy,
        psm_strategy,
        shared_cache_strategy,
    )
