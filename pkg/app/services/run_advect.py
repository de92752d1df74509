"""
Mini-app de advección lineal 2D con intercambio de halos.

La malla se parte en un patch por thread (owner-compute). Cada lockstep:
1. exchange: cada thread copia a su halo las filas/columnas interiores de sus vecinos
2. compute: cada thread actualiza su interior con un esquema upwind de primer orden

Los patches viven en memoria del proveedor simulado (vistas numpy sobre mmap).
Cada página distinta tocada por un thread en una fase se cobra una vez,
con peso access_cost(nodo del thread, nodo de la página).

Dos brazos:
- psm-owner: el thread 0 asigna cada patch con psm_alloc(owner=t)
- first-touch-initializer: el thread 0 asigna e inicializa todo; first-touch liga todo al nodo 0
"""
import logging
import math
import time
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from app.domain.events import ExperimentCompletedEvent
from app.domain.topology import NumaTopology, ThreadRegistry
from app.infra.event_bus import get_event_bus
from app.infra.executor import create_executor
from app.infra.topology_repository import resolve_topology
from app.models.requests import AdvectionConfig
from app.models.responses import AdvectArm, AdvectResult, AdvectSweep, PhaseCost
from app.shared.errors import ConfigError
from app.strategies.allocator_strategy import AllocatorStrategy, create_allocator

logger = logging.getLogger(__name__)

CELL_BYTES = 8
PLACEMENTS = {"psm-owner": "psm", "first-touch-initializer": "first-touch"}
ONE_NODE_TOLERANCE = 0.05


def decompose(threads: int) -> Tuple[int, int]:
    """(py, px) con py * px = threads y py <= px lo más cuadrado posible"""
    py = int(math.isqrt(threads))
    while threads % py:
        py -= 1
    return py, threads // py


class _Layout:
    """Geometría de un patch y las páginas (relativas a la página de su base) que toca cada acceso"""

    def __init__(self, patch: int, halo: int, page_size: int):
        self.patch = patch
        self.halo = halo
        self.side = patch + 2 * halo
        self.nbytes = self.side * self.side * CELL_BYTES
        self.page_size = page_size
        self._cache: Dict[int, Dict[str, Set[int]]] = {}

    def pages(self, offset: int) -> Dict[str, Set[int]]:
        """Conjuntos de páginas por acceso para un patch que empieza en offset dentro de su página"""
        if offset not in self._cache:
            h, s = self.halo, self.side
            inner = range(h, s - h)

            def rect(rows: range, cols: range) -> Set[int]:
                pages: Set[int] = set()
                for row in rows:
                    first = offset + (row * s + cols.start) * CELL_BYTES
                    last = offset + (row * s + cols.stop) * CELL_BYTES - 1
                    pages.update(range(first // self.page_size, last // self.page_size + 1))
                return pages

            self._cache[offset] = {
                "interior": rect(inner, inner),
                "halo_writes": (
                    rect(range(0, h), inner) | rect(range(s - h, s), inner)
                    | rect(inner, range(0, h)) | rect(inner, range(s - h, s))
                ),
                # Lo que cada dirección lee del patch vecino
                "up": rect(range(s - 2 * h, s - h), inner),
                "down": rect(range(h, 2 * h), inner),
                "left": rect(inner, range(s - 2 * h, s - h)),
                "right": rect(inner, range(h, 2 * h)),
            }
        return self._cache[offset]


class RunAdvectService:
    """Ejecuta los dos brazos de placement para cada número de nodos"""

    def __init__(self):
        self.event_bus = get_event_bus()

    def execute(self, config: AdvectionConfig, nodes: int, topology: Optional[NumaTopology] = None) -> AdvectResult:
        """
        Un punto de la curva: `nodes` nodos con cores_per_node threads cada uno.

        Raises:
            ConfigError: Si faltan nodos o la malla no se parte exacto en patches
        """
        topology = topology or resolve_topology(config.topology)
        if nodes > topology.num_nodes:
            raise ConfigError(f"nodes={nodes} excede los {topology.num_nodes} nodos de la topología")
        threads = nodes * topology.cores_per_node
        py, px = decompose(threads)
        grid = [py * config.patch_cells, px * config.patch_cells]
        if config.grid is not None and list(config.grid) != grid:
            raise ConfigError(
                f"La malla {config.grid} no se parte en {py}x{px} patches de {config.patch_cells} celdas",
                details={"expected": grid},
            )

        arms = {
            placement: self._run_arm(config, topology, threads, py, px, placement)
            for placement in PLACEMENTS
        }
        psm, first_touch = arms["psm-owner"], arms["first-touch-initializer"]
        result = AdvectResult(
            nodes=nodes,
            threads=threads,
            grid=grid,
            thread_grid=[py, px],
            timesteps=config.timesteps,
            psm=psm,
            first_touch=first_touch,
            improvement_ratio=first_touch.modeled_cost / psm.modeled_cost,
        )
        logger.info(
            f"🌊 advect nodes={nodes} threads={threads}: ratio={result.improvement_ratio:.3f}, "
            f"psm compute remote={psm.phases['compute'].remote_pages}"
        )
        return result

    def sweep(self, config: AdvectionConfig) -> AdvectSweep:
        topology = resolve_topology(config.topology)
        points = [self.execute(config, nodes, topology) for nodes in config.nodes]
        failures = check_trend(points)
        sweep = AdvectSweep(points=points, passed=not failures, failures=failures)
        self.event_bus.publish_sync(ExperimentCompletedEvent(
            command="advect",
            passed=sweep.passed,
            summary={"ratios": {p.nodes: round(p.improvement_ratio, 4) for p in points}},
        ))
        return sweep

    def _run_arm(
        self,
        config: AdvectionConfig,
        topology: NumaTopology,
        threads: int,
        py: int,
        px: int,
        placement: str,
    ) -> AdvectArm:
        registry = ThreadRegistry(topology)
        registry.register_compact(threads)
        allocator = create_allocator(
            PLACEMENTS[placement], topology, registry,
            page_size=config.page_size, backing="mmap",
        )
        layout = _Layout(config.patch_cells, config.halo, allocator.provider.page_size)
        started = time.perf_counter()

        # El thread 0 asigna e inicializa todos los patches
        patches = [self._allocate_patch(allocator, layout.nbytes, tid, placement) for tid in range(threads)]
        fields = [self._field_view(allocator, addr, layout) for addr in patches]
        for tid, field in enumerate(fields):
            allocator.write(patches[tid], layout.nbytes, 0, 0)
            field[...] = _initial_condition(config, layout, tid, py, px)

        neighbors = [_neighbors(tid, py, px) for tid in range(threads)]
        page_nodes = [allocator.page_nodes(addr, layout.nbytes) for addr in patches]
        offsets = [addr % layout.page_size for addr in patches]
        costs = _phase_costs(topology, registry, layout, neighbors, offsets, page_nodes)

        tallies = {phase: np.zeros((threads, 3), dtype=np.float64) for phase in ("exchange", "compute")}
        h = config.halo
        cy, cx = config.velocity

        def exchange(tid: int) -> None:
            u = fields[tid]
            up, down, left, right = (fields[n] for n in neighbors[tid])
            u[:h, h:-h] = up[-2 * h:-h, h:-h]
            u[-h:, h:-h] = down[h:2 * h, h:-h]
            u[h:-h, :h] = left[h:-h, -2 * h:-h]
            u[h:-h, -h:] = right[h:-h, h:2 * h]
            tallies["exchange"][tid] += costs["exchange"][tid]

        def compute(tid: int) -> None:
            u = fields[tid]
            c = u[h:-h, h:-h]
            updated = c - cy * (c - u[h - 1:-h - 1, h:-h]) - cx * (c - u[h:-h, h - 1:-h - 1])
            u[h:-h, h:-h] = updated
            tallies["compute"][tid] += costs["compute"][tid]

        executor = create_executor(config.deterministic, config.seed)
        executor.run_lockstep(threads, [exchange, compute] * config.timesteps, on_start=registry.attach)
        registry.detach()

        checksum = float(sum(float(np.sum(f[h:-h, h:-h])) for f in fields))
        phases = {
            name: PhaseCost(
                local_pages=int(t[:, 0].sum()),
                remote_pages=int(t[:, 1].sum()),
                modeled_cost=float(t[:, 2].sum()),
            )
            for name, t in tallies.items()
        }
        del fields
        for addr in patches:
            allocator.free(addr, 0)

        return AdvectArm(
            placement=placement,
            local_pages=sum(p.local_pages for p in phases.values()),
            remote_pages=sum(p.remote_pages for p in phases.values()),
            modeled_cost=sum(p.modeled_cost for p in phases.values()),
            phases=phases,
            checksum=checksum,
            wall_time_s=time.perf_counter() - started,
        )

    @staticmethod
    def _allocate_patch(allocator: AllocatorStrategy, nbytes: int, owner: int, placement: str) -> int:
        if placement == "psm-owner":
            return allocator.alloc(nbytes, owner)
        return allocator.alloc(nbytes, 0)

    @staticmethod
    def _field_view(allocator: AllocatorStrategy, addr: int, layout: _Layout) -> np.ndarray:
        view = allocator.provider.buffer_view(addr, layout.nbytes)
        return np.frombuffer(view, dtype=np.float64).reshape(layout.side, layout.side)


def _neighbors(tid: int, py: int, px: int) -> Tuple[int, int, int, int]:
    """(arriba, abajo, izquierda, derecha) con bordes periódicos"""
    r, c = divmod(tid, px)
    return (
        ((r - 1) % py) * px + c,
        ((r + 1) % py) * px + c,
        r * px + (c - 1) % px,
        r * px + (c + 1) % px,
    )


def _phase_costs(
    topology: NumaTopology,
    registry: ThreadRegistry,
    layout: _Layout,
    neighbors: Sequence[Tuple[int, int, int, int]],
    offsets: Sequence[int],
    page_nodes: Sequence[np.ndarray],
) -> Dict[str, np.ndarray]:
    """[locales, remotas, coste] por thread y fase, por lockstep"""
    threads = len(neighbors)
    costs = {phase: np.zeros((threads, 3), dtype=np.float64) for phase in ("exchange", "compute")}
    for tid in range(threads):
        node = registry.node_of_thread(tid)
        touched: Dict[int, Set[int]] = {tid: set(layout.pages(offsets[tid])["halo_writes"])}
        for direction, neighbor in zip(("up", "down", "left", "right"), neighbors[tid]):
            touched.setdefault(neighbor, set()).update(layout.pages(offsets[neighbor])[direction])
        costs["exchange"][tid] = _charge(topology, node, touched, page_nodes)
        costs["compute"][tid] = _charge(topology, node, {tid: layout.pages(offsets[tid])["interior"]}, page_nodes)
    return costs


def _charge(topology: NumaTopology, node: int, touched: Dict[int, Set[int]], page_nodes) -> np.ndarray:
    local = remote = 0
    cost = 0.0
    for patch, pages in touched.items():
        nodes = page_nodes[patch][sorted(pages)]
        hits = int(np.count_nonzero(nodes == node))
        local += hits
        remote += len(nodes) - hits
        cost += float(topology.distance[node, nodes].sum())
    return np.array([local, remote, cost], dtype=np.float64)


def _initial_condition(config: AdvectionConfig, layout: _Layout, tid: int, py: int, px: int) -> np.ndarray:
    """Pulso gaussiano global más ruido sembrado por patch"""
    r, c = divmod(tid, px)
    h, n = layout.halo, layout.patch
    ys = (np.arange(layout.side) - h + r * n)[:, None]
    xs = (np.arange(layout.side) - h + c * n)[None, :]
    cy, cx = py * n / 2, px * n / 2
    sigma = max(n / 2, 1.0)
    pulse = np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * sigma ** 2))
    noise = np.random.default_rng([config.seed, tid]).random((layout.side, layout.side)) * 1e-3
    return pulse + noise


def check_trend(points: List[AdvectResult]) -> List[str]:
    """
    - 1 nodo: ratio dentro de ±5% de 1.0
    - ratio estrictamente creciente con el número de nodos
    - psm-owner: 0 páginas remotas en la fase compute
    """
    failures = []
    ordered = sorted(points, key=lambda p: p.nodes)
    for point in ordered:
        if point.nodes == 1 and abs(point.improvement_ratio - 1.0) > ONE_NODE_TOLERANCE:
            failures.append(f"1 nodo: ratio {point.improvement_ratio:.3f} fuera de 1.0 ± {ONE_NODE_TOLERANCE}")
        if point.psm.phases["compute"].remote_pages:
            failures.append(
                f"nodes={point.nodes}: psm-owner tocó {point.psm.phases['compute'].remote_pages} páginas remotas en compute"
            )
    for prev, nxt in zip(ordered, ordered[1:]):
        if not nxt.improvement_ratio > prev.improvement_ratio:
            failures.append(
                f"ratio no crece de {prev.nodes} a {nxt.nodes} nodos: "
                f"{prev.improvement_ratio:.3f} -> {nxt.improvement_ratio:.3f}"
            )
    return failures
