"""
Oráculo de contabilidad por fuerza bruta para el stress de asignadores.

Replica el conjunto de bloques vivos como intervalos ordenados y verifica
cada asignación: tamaño útil, alineación, disjunción, localidad y
ausencia de false page-sharing (una página con bloques vivos de dueños
en dos nodos distintos).
"""
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from sortedcontainers import SortedList

from app.models.responses import Violation

MAX_RECORDED_VIOLATIONS = 100


@dataclass
class LiveRecord:
    start: int
    end: int
    tid: int
    owner_node: int
    tag: int


class BookkeepingOracle:
    """
    Estado de referencia del stress; todos los métodos son thread-safe.

    Args:
        page_size: Tamaño de página del proveedor
        total_ops: Presupuesto de operaciones (next_op devuelve None al agotarse)
        check_locality: Verificar que toda página del bloque esté en el nodo del dueño
        check_false_sharing: Verificar que una página no aloje dueños de dos nodos
    """

    def __init__(
        self,
        page_size: int,
        total_ops: int,
        check_locality: bool = True,
        check_false_sharing: bool = True,
    ):
        self.page_size = page_size
        self.total_ops = total_ops
        self.check_locality = check_locality
        self.check_false_sharing = check_false_sharing
        self._lock = threading.Lock()
        self._starts: SortedList = SortedList()
        self._live: Dict[int, LiveRecord] = {}
        # página → [nodo, bloques vivos de ese nodo en la página]
        self._page_owners: Dict[int, List[int]] = {}
        self._next_op = 0
        self.violations: List[Violation] = []
        self.violation_count = 0
        self.first_violation_op: Optional[int] = None
        self.peak_live = 0

    def next_op(self) -> Optional[int]:
        with self._lock:
            if self._next_op >= self.total_ops:
                return None
            op = self._next_op
            self._next_op += 1
            return op

    @property
    def live_count(self) -> int:
        return len(self._live)

    def record(self, kind: str, op: int, tid: int, message: str, **details) -> Violation:
        violation = Violation(kind=kind, op_index=op, tid=tid, message=message, details=details)
        with self._lock:
            self._record_locked(violation)
        return violation

    def _record_locked(self, violation: Violation) -> None:
        self.violation_count += 1
        if self.first_violation_op is None or violation.op_index < self.first_violation_op:
            self.first_violation_op = violation.op_index
        if len(self.violations) < MAX_RECORDED_VIOLATIONS:
            self.violations.append(violation)

    def on_alloc(
        self,
        op: int,
        tid: int,
        owner_node: int,
        addr: int,
        requested: int,
        usable: int,
        alignment: int,
        page_nodes: Optional[np.ndarray] = None,
        tag: int = 0,
    ) -> List[Violation]:
        """Verificar y registrar un bloque recién asignado"""
        found: List[Violation] = []

        def flag(kind: str, message: str, **details) -> None:
            found.append(Violation(kind=kind, op_index=op, tid=tid, message=message, details=details))

        if usable < requested:
            flag("size", f"Bloque 0x{addr:x} útil {usable} < pedido {requested}")
        # alignment es el bit bajo del tamaño de bloque (tope 16): las clases de 24, 40, 56... B solo garantizan 8
        if alignment and addr % alignment:
            flag("alignment", f"Bloque 0x{addr:x} no alineado a {alignment}", alignment=alignment)
        if self.check_locality and page_nodes is not None and np.any(page_nodes != owner_node):
            flag(
                "locality",
                f"Bloque 0x{addr:x} con páginas fuera del nodo {owner_node}",
                nodes=sorted({int(n) for n in page_nodes}),
            )

        end = addr + max(usable, 1)
        with self._lock:
            i = self._starts.bisect_right(addr)
            if i > 0 and self._live[self._starts[i - 1]].end > addr:
                other = self._live[self._starts[i - 1]]
                flag("overlap", f"Bloque 0x{addr:x} solapa con 0x{other.start:x}", other_tid=other.tid)
            elif i < len(self._starts) and self._starts[i] < end:
                other = self._live[self._starts[i]]
                flag("overlap", f"Bloque 0x{addr:x} solapa con 0x{other.start:x}", other_tid=other.tid)

            if self.check_false_sharing:
                for page in range(addr // self.page_size, (end - 1) // self.page_size + 1):
                    entry = self._page_owners.get(page)
                    if entry is None:
                        self._page_owners[page] = [owner_node, 1]
                    elif entry[0] == owner_node:
                        entry[1] += 1
                    else:
                        flag(
                            "false_sharing",
                            f"Página {page:#x} con bloques de los nodos {entry[0]} y {owner_node}",
                        )
                        break

            if addr not in self._live:
                self._starts.add(addr)
                self._live[addr] = LiveRecord(addr, end, tid, owner_node, tag)
                self.peak_live = max(self.peak_live, len(self._live))
            for violation in found:
                self._record_locked(violation)
        return found

    def on_free(self, op: int, tid: int, addr: int) -> Optional[LiveRecord]:
        """Quitar un bloque del estado de referencia antes de liberarlo"""
        with self._lock:
            record = self._live.pop(addr, None)
            if record is None:
                self._record_locked(Violation(
                    kind="untracked_free", op_index=op, tid=tid,
                    message=f"Free de 0x{addr:x}, que el oráculo no tiene vivo",
                ))
                return None
            self._starts.remove(addr)
            if self.check_false_sharing:
                for page in range(addr // self.page_size, (record.end - 1) // self.page_size + 1):
                    entry = self._page_owners.get(page)
                    if entry is not None and entry[0] == record.owner_node:
                        entry[1] -= 1
                        if entry[1] == 0:
                            del self._page_owners[page]
            return record
