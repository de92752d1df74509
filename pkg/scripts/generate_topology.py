"""
Script para generar el archivo de la topología de referencia (32 nodos x 8 cores)
con su matriz de distancias explícita.

Uso:
    python scripts/generate_topology.py [ruta.json|ruta.yaml] [nodos] [cores_por_nodo]
"""
import sys

from app.domain.topology import NumaTopology, interpolated_distances
from app.infra.topology_repository import TopologyRepository

if __name__ == "__main__":
    path = sys.argv[1] if len(sys.argv) > 1 else "topologies/reference.json"
    nodes = int(sys.argv[2]) if len(sys.argv) > 2 else 32
    cores = int(sys.argv[3]) if len(sys.argv) > 3 else 8
    topology = NumaTopology(nodes, cores, interpolated_distances(nodes))
    written = TopologyRepository().save(topology, path)
    print("\n" + "=" * 60)
    print(f"🗺️  TOPOLOGY WRITTEN: {written}")
    print("=" * 60)
    print(f"\n{nodes} nodes x {cores} cores, distances 1.0 .. {topology.distance.max():.1f}")
    print(f"\nUse it with: bench verify --topology {written}\n")
