"""
Locks auditables del heap.

Cada lock del asignador declara su ámbito (core_cache, central_list,
node_large, provider_node, page_map_leaf, shared_heap) y una clave.
Con una grabación activa, cada adquisición queda registrada para que
los tests verifiquen que ningún camino de alloc/free toma un lock global.
"""
import threading
from contextlib import contextmanager
from typing import Hashable, Iterator, List, Optional, Tuple

Acquisition = Tuple[str, Hashable]

_recording: Optional[List[Acquisition]] = None


class AuditedLock:
    """threading.Lock con ámbito declarado"""

    __slots__ = ("scope", "key", "_lock")

    def __init__(self, scope: str, key: Hashable = None):
        self.scope = scope
        self.key = key
        self._lock = threading.Lock()

    def __enter__(self) -> "AuditedLock":
        self._lock.acquire()
        if _recording is not None:
            _recording.append((self.scope, self.key))
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self._lock.release()

    def locked(self) -> bool:
        return self._lock.locked()

    def __repr__(self) -> str:
        return f"AuditedLock({self.scope!r}, {self.key!r})"


@contextmanager
def recording() -> Iterator[List[Acquisition]]:
    """
    Grabar adquisiciones mientras dure el bloque.

    Usage:
        with recording() as acquisitions:
            heap.psm_alloc(64, owner=0)
        scopes = {scope for scope, _ in acquisitions}
    """
    global _recording
    previous = _recording
    _recording = []
    try:
        yield _recording
    finally:
        _recording = previous
