"""
Modelo de la máquina cc-NUMA simulada: nodos, cores, distancias
y la ligadura thread → core → nodo usada por cada decisión de ubicación.
"""
import logging
import threading
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from app.domain.entities import ThreadBinding
from app.shared.errors import ConfigError, RangeError, StateError

logger = logging.getLogger(__name__)

# Plataforma de referencia: 32 sockets Xeon 7550 de 8 cores
REFERENCE_NODES = 32
REFERENCE_CORES_PER_NODE = 8
MIN_DISTANCE = 1.0
MAX_DISTANCE = 6.8


def interpolated_distances(num_nodes: int) -> np.ndarray:
    """
    Matriz de distancias por defecto.

    Los nodos se disponen en una cadena 1-D: la distancia crece linealmente
    con la separación, de 1.0 (local) a 6.8 (extremos de la cadena).
    """
    idx = np.arange(num_nodes)
    hops = np.abs(idx[:, None] - idx[None, :]).astype(np.float64)
    if num_nodes == 1:
        return np.ones((1, 1), dtype=np.float64)
    return MIN_DISTANCE + (MAX_DISTANCE - MIN_DISTANCE) * hops / (num_nodes - 1)


@dataclass(frozen=True, eq=False)
class NumaTopology:
    """Máquina simulada, inmutable tras construirse"""
    num_nodes: int
    cores_per_node: int
    distance: np.ndarray

    def __post_init__(self):
        if self.num_nodes < 1 or self.cores_per_node < 1:
            raise ConfigError(
                f"Topología inválida: nodes={self.num_nodes}, cores_per_node={self.cores_per_node}"
            )
        matrix = np.array(self.distance, dtype=np.float64)
        if matrix.shape != (self.num_nodes, self.num_nodes):
            raise ConfigError(
                f"La matriz de distancias debe ser {self.num_nodes}x{self.num_nodes}",
                details={"shape": list(matrix.shape)},
            )
        if not np.allclose(matrix, matrix.T):
            raise ConfigError("La matriz de distancias no es simétrica")
        if not np.allclose(np.diag(matrix), 1.0):
            raise ConfigError("La diagonal de distancias debe ser 1.0")
        if np.any(matrix < 1.0):
            raise ConfigError("Las distancias fuera de la diagonal deben ser >= 1.0")
        matrix.setflags(write=False)
        object.__setattr__(self, "distance", matrix)

    @classmethod
    def uniform(cls, num_nodes: int, cores_per_node: int) -> "NumaTopology":
        if num_nodes < 1:
            raise ConfigError(f"Topología inválida: nodes={num_nodes}")
        return cls(num_nodes, cores_per_node, interpolated_distances(num_nodes))

    @classmethod
    def reference(cls) -> "NumaTopology":
        """32 nodos x 8 cores con distancias interpoladas entre 1.0 y 6.8"""
        return cls.uniform(REFERENCE_NODES, REFERENCE_CORES_PER_NODE)

    @property
    def total_cores(self) -> int:
        return self.num_nodes * self.cores_per_node

    def check_node(self, node: int) -> int:
        if not 0 <= node < self.num_nodes:
            raise RangeError(f"Nodo {node} fuera de rango (0..{self.num_nodes - 1})")
        return node

    def check_core(self, core: int) -> int:
        if not 0 <= core < self.total_cores:
            raise RangeError(f"Core {core} fuera de rango (0..{self.total_cores - 1})")
        return core

    def node_of_core(self, core: int) -> int:
        self.check_core(core)
        return core // self.cores_per_node

    def cores_of_node(self, node: int) -> range:
        self.check_node(node)
        return range(node * self.cores_per_node, (node + 1) * self.cores_per_node)

    def access_cost(self, from_node: int, to_node: int) -> float:
        self.check_node(from_node)
        self.check_node(to_node)
        return float(self.distance[from_node, to_node])

    def to_dict(self) -> dict:
        return {
            "nodes": self.num_nodes,
            "cores_per_node": self.cores_per_node,
            "distance": self.distance.tolist(),
        }


class ThreadRegistry:
    """
    Registro thread → core (afinidad compacta).

    El registro es explícito y obligatorio antes de la primera asignación.
    Las búsquedas no toman lock; solo la mutación es exclusiva.
    """

    def __init__(self, topology: NumaTopology, exclusive_cores: bool = False):
        self.topology = topology
        self.exclusive_cores = exclusive_cores
        self._bindings: Dict[int, ThreadBinding] = {}
        self._taken_cores: set[int] = set()
        self._lock = threading.Lock()
        self._local = threading.local()

    def register(self, tid: int, core: int) -> ThreadBinding:
        """
        Ligar un thread lógico a un core.

        Raises:
            RangeError: Si el core no existe en la topología
            StateError: Si el thread ya estaba ligado o el core es exclusivo y está tomado
        """
        node = self.topology.node_of_core(core)
        with self._lock:
            if tid in self._bindings:
                raise StateError(
                    f"Thread {tid} ya está ligado al core {self._bindings[tid].core}"
                )
            if self.exclusive_cores and core in self._taken_cores:
                raise StateError(f"Core {core} ya tiene un thread ligado")
            binding = ThreadBinding(tid=tid, core=core, node=node)
            self._bindings[tid] = binding
            self._taken_cores.add(core)
        logger.debug(f"🧵 Thread {tid} bound to core {core} (node {node})")
        return binding

    def register_compact(self, num_threads: int) -> list[ThreadBinding]:
        """Afinidad compacta: thread i → core i"""
        return [self.register(tid, tid) for tid in range(num_threads)]

    def binding(self, tid: int) -> ThreadBinding:
        binding = self._bindings.get(tid)
        if binding is None:
            raise StateError(f"Thread {tid} no está registrado")
        return binding

    def is_registered(self, tid: int) -> bool:
        return tid in self._bindings

    def node_of_thread(self, tid: int) -> int:
        return self.binding(tid).node

    def bindings(self) -> Sequence[ThreadBinding]:
        return list(self._bindings.values())

    def occupied_nodes(self) -> list[int]:
        return sorted({b.node for b in self._bindings.values()})

    def attach(self, tid: int) -> ThreadBinding:
        """Asociar el thread del sistema que llama con un thread lógico registrado"""
        binding = self.binding(tid)
        self._local.tid = tid
        return binding

    def detach(self) -> None:
        self._local.tid = None

    def current_tid(self) -> Optional[int]:
        return getattr(self._local, "tid", None)
