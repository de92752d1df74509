"""
Domain Events del heap simulado.
Eventos inmutables que representan hechos que ocurrieron en el sistema.
"""
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, Optional
from abc import ABC


# Base abstracta sin campos (solo para type checking)
class DomainEvent(ABC):
    """Base class para todos los eventos de dominio"""
    pass


# Eventos del heap
@dataclass(frozen=True)
class SpanReclaimedEvent(DomainEvent):
    """Un span de clase quedó sin bloques vivos y sus páginas volvieron al proveedor"""
    heap_id: int
    size_class: int
    base: int
    num_pages: int
    timestamp: datetime = field(default_factory=lambda: datetime.now(timezone.utc))


@dataclass(frozen=True)
class LargeSpanEvictedEvent(DomainEvent):
    """Un span grande salió del cache de reutilización y se liberó"""
    heap_id: int
    base: int
    num_pages: int
    reason: str  # "spans" | "bytes"
    timestamp: datetime = field(default_factory=lambda: datetime.now(timezone.utc))


@dataclass(frozen=True)
class PagesExhaustedEvent(DomainEvent):
    """El proveedor rechazó una asignación por capacidad de nodo"""
    node: int
    requested_pages: int
    live_pages: int
    capacity_pages: int
    timestamp: datetime = field(default_factory=lambda: datetime.now(timezone.utc))


# Eventos de experimentos
@dataclass(frozen=True)
class RepetitionCompletedEvent(DomainEvent):
    """Una repetición del benchmark de verificación terminó"""
    allocator: str
    threads: int
    repetition: int  # 0 = warm-up
    remote_pages: int
    local_pages: int
    timestamp: datetime = field(default_factory=lambda: datetime.now(timezone.utc))


@dataclass(frozen=True)
class StressViolationEvent(DomainEvent):
    """El oráculo detectó una violación durante el stress"""
    allocator: str
    kind: str  # "overlap" | "alignment" | "locality" | "false_sharing" | "double_free" | ...
    op_index: int
    message: str
    details: Optional[Dict[str, Any]] = None
    timestamp: datetime = field(default_factory=lambda: datetime.now(timezone.utc))


@dataclass(frozen=True)
class ExperimentCompletedEvent(DomainEvent):
    """Un comando del benchmark terminó"""
    command: str  # "verify" | "fragtable" | "stress" | "advect"
    passed: bool
    summary: Dict[str, Any]
    timestamp: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
