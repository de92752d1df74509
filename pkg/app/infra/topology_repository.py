"""
Carga y guardado de archivos de topología (JSON o YAML).
"""
import json
import logging
from pathlib import Path
from typing import Optional, Union

import yaml
from pydantic import ValidationError

from app.domain.topology import NumaTopology, interpolated_distances
from app.models.requests import TopologyFile
from app.shared.errors import ConfigError

logger = logging.getLogger(__name__)


class TopologyRepository:
    """
    Formato: {"nodes": N, "cores_per_node": C, "distance": [[...]] | "auto"}.
    YAML es superconjunto de JSON, así que un solo parser lee ambos.
    """

    def load(self, path: Union[str, Path]) -> NumaTopology:
        """
        Leer y validar una topología.

        Raises:
            ConfigError: Si el archivo no existe, no parsea o viola los invariantes
        """
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"Archivo de topología no encontrado: {path}") from None
        except yaml.YAMLError as e:
            raise ConfigError(f"Archivo de topología inválido: {path}", details=str(e)) from None
        return self.from_dict(raw, source=str(path))

    def from_dict(self, raw: object, source: str = "<inline>") -> NumaTopology:
        try:
            parsed = TopologyFile.model_validate(raw)
        except ValidationError as e:
            raise ConfigError(
                f"Topología inválida en {source}",
                details=e.errors(include_url=False),
            ) from None
        distance = (
            interpolated_distances(parsed.nodes) if parsed.distance == "auto" else parsed.distance
        )
        topology = NumaTopology(parsed.nodes, parsed.cores_per_node, distance)
        logger.info(
            f"🗺️  Loaded topology from {source}: {parsed.nodes} nodes x {parsed.cores_per_node} cores"
        )
        return topology

    def save(self, topology: NumaTopology, path: Union[str, Path], explicit: bool = True) -> Path:
        """Escribir la topología; .yaml/.yml como YAML, cualquier otra extensión como JSON"""
        path = Path(path)
        data = topology.to_dict()
        if not explicit:
            data["distance"] = "auto"
        if path.suffix in (".yaml", ".yml"):
            text = yaml.safe_dump(data, sort_keys=False)
        else:
            text = json.dumps(data, indent=2)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info(f"💾 Topology written to {path}")
        return path


def resolve_topology(path: Optional[str] = None) -> NumaTopology:
    """Topología del archivo indicado, o la de referencia 32x8"""
    if path in (None, "", "reference"):
        return NumaTopology.reference()
    return TopologyRepository().load(path)
