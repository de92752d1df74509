"""
Tests de la topología NUMA simulada y del registro de threads.
"""
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from app.domain.topology import NumaTopology, ThreadRegistry, interpolated_distances
from app.infra.topology_repository import TopologyRepository, resolve_topology
from app.shared.errors import ConfigError, RangeError, StateError


def test_reference_topology_shape():
    topology = NumaTopology.reference()
    assert topology.num_nodes == 32
    assert topology.cores_per_node == 8
    assert topology.total_cores == 256
    assert topology.access_cost(0, 0) == 1.0
    assert topology.access_cost(0, 31) == pytest.approx(6.8)


def test_core_to_node_mapping():
    topology = NumaTopology.reference()
    assert topology.node_of_core(7) == 0
    assert topology.node_of_core(8) == 1
    assert topology.node_of_core(255) == 31
    assert list(topology.cores_of_node(1)) == list(range(8, 16))


def test_out_of_range_lookups():
    topology = NumaTopology.uniform(2, 4)
    with pytest.raises(RangeError):
        topology.node_of_core(8)
    with pytest.raises(RangeError):
        topology.access_cost(0, 2)
    with pytest.raises(RangeError):
        topology.cores_of_node(-1)


def test_invalid_matrices_rejected():
    # 1️⃣ asimétrica
    with pytest.raises(ConfigError):
        NumaTopology(2, 1, [[1.0, 2.0], [3.0, 1.0]])
    # 2️⃣ diagonal distinta de 1
    with pytest.raises(ConfigError):
        NumaTopology(2, 1, [[2.0, 2.0], [2.0, 1.0]])
    # 3️⃣ dimensiones
    with pytest.raises(ConfigError):
        NumaTopology(3, 1, [[1.0, 2.0], [2.0, 1.0]])
    # 4️⃣ sin nodos
    with pytest.raises(ConfigError):
        NumaTopology.uniform(0, 8)


@given(st.integers(min_value=1, max_value=64))
def test_interpolated_distances_properties(n):
    matrix = interpolated_distances(n)
    assert matrix.shape == (n, n)
    assert np.allclose(matrix, matrix.T)
    assert np.allclose(np.diag(matrix), 1.0)
    assert matrix.min() >= 1.0
    assert matrix.max() <= 6.8 + 1e-9
    # La distancia al nodo 0 crece con el índice
    assert np.all(np.diff(matrix[0]) >= 0)


def test_single_node_costs_are_uniform():
    topology = NumaTopology.uniform(1, 8)
    assert topology.access_cost(0, 0) == 1.0


def test_register_and_rebind_rejected():
    topology = NumaTopology.uniform(2, 2)
    registry = ThreadRegistry(topology)
    binding = registry.register(5, 3)
    assert (binding.core, binding.node) == (3, 1)
    assert registry.node_of_thread(5) == 1
    with pytest.raises(StateError):
        registry.register(5, 0)
    with pytest.raises(RangeError):
        registry.register(6, 4)


def test_oversubscription_allowed_unless_exclusive():
    topology = NumaTopology.uniform(1, 2)
    shared = ThreadRegistry(topology)
    shared.register(0, 0)
    shared.register(1, 0)
    assert shared.node_of_thread(1) == 0

    exclusive = ThreadRegistry(topology, exclusive_cores=True)
    exclusive.register(0, 0)
    with pytest.raises(StateError):
        exclusive.register(1, 0)


def test_unregistered_thread_lookup_fails():
    registry = ThreadRegistry(NumaTopology.uniform(1, 1))
    with pytest.raises(StateError):
        registry.node_of_thread(0)


def test_compact_affinity_and_occupied_nodes(reference_topology):
    registry = ThreadRegistry(reference_topology)
    registry.register_compact(16)
    assert registry.occupied_nodes() == [0, 1]
    assert registry.binding(15).core == 15


def test_attach_is_thread_local(registry):
    seen = {}

    def worker(tid):
        registry.attach(tid)
        seen[tid] = registry.current_tid()

    threads = [threading.Thread(target=worker, args=(t,)) for t in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert seen == {0: 0, 1: 1, 2: 2, 3: 3}
    assert registry.current_tid() is None


def test_topology_file_round_trip(tmp_path):
    topology = NumaTopology.uniform(4, 2)
    repository = TopologyRepository()
    for name in ("topo.json", "topo.yaml"):
        path = repository.save(topology, tmp_path / name)
        loaded = repository.load(path)
        assert loaded.num_nodes == 4
        assert np.allclose(loaded.distance, topology.distance)


def test_topology_file_auto_distances(tmp_path):
    path = tmp_path / "auto.yaml"
    path.write_text("nodes: 3\ncores_per_node: 2\ndistance: auto\n", encoding="utf-8")
    topology = resolve_topology(str(path))
    assert topology.total_cores == 6
    assert np.allclose(topology.distance, interpolated_distances(3))


def test_topology_file_errors(tmp_path):
    repository = TopologyRepository()
    with pytest.raises(ConfigError):
        repository.load(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{"nodes": 2, "cores_per_node": 1, "distance": [[1, 2], [3, 1]]}', encoding="utf-8")
    with pytest.raises(ConfigError):
        repository.load(bad)
    with pytest.raises(ConfigError):
        repository.from_dict({"nodes": 0, "cores_per_node": 1})


def test_resolve_topology_defaults_to_reference():
    assert resolve_topology(None).total_cores == 256
    assert resolve_topology("reference").num_nodes == 32
