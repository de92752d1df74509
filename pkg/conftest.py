"""
Fixtures compartidas de los tests.

Perfiles de hypothesis:
- default: 100 ejemplos
- fast: 20 ejemplos (HYPOTHESIS_PROFILE=fast)
"""
import os

import pytest
from hypothesis import HealthCheck, settings as hypothesis_settings

from app.config import Settings
from app.domain.topology import NumaTopology, ThreadRegistry
from app.listeners import audit_listener

hypothesis_settings.register_profile(
    "default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
hypothesis_settings.register_profile("fast", max_examples=20, deadline=None)
hypothesis_settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def settings() -> Settings:
    """Configuración aislada del .env local"""
    return Settings(_env_file=None, backing="mmap", region_bytes=8 * 1024 * 1024)


@pytest.fixture
def small_topology() -> NumaTopology:
    """4 nodos x 2 cores"""
    return NumaTopology.uniform(4, 2)


@pytest.fixture
def reference_topology() -> NumaTopology:
    return NumaTopology.reference()


@pytest.fixture
def registry(small_topology) -> ThreadRegistry:
    registry = ThreadRegistry(small_topology)
    registry.register_compact(small_topology.total_cores)
    return registry


@pytest.fixture(autouse=True)
def _clear_audit_events():
    audit_listener.clear_events()
    yield
