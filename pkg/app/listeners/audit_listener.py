"""
Listener de auditoría del heap y de los experimentos.
Loguea los eventos de dominio y conserva los más recientes en memoria.
"""
import logging
from collections import deque
from typing import List

from app.domain.events import (
    DomainEvent,
    ExperimentCompletedEvent,
    LargeSpanEvictedEvent,
    PagesExhaustedEvent,
    RepetitionCompletedEvent,
    SpanReclaimedEvent,
    StressViolationEvent,
)
from app.infra.event_bus import get_event_bus

logger = logging.getLogger(__name__)

event_bus = get_event_bus()

# Cola en memoria, acotada
_recent: deque = deque(maxlen=10000)


def recent_events() -> List[DomainEvent]:
    """Eventos auditados, del más antiguo al más reciente"""
    return list(_recent)


def clear_events() -> None:
    _recent.clear()


@event_bus.subscribe(SpanReclaimedEvent)
def on_span_reclaimed(event: SpanReclaimedEvent):
    _recent.append(event)
    logger.debug(
        f"♻️ Span reclaimed: heap={event.heap_id} class={event.size_class} "
        f"base=0x{event.base:x} pages={event.num_pages}"
    )


@event_bus.subscribe(LargeSpanEvictedEvent)
def on_large_span_evicted(event: LargeSpanEvictedEvent):
    _recent.append(event)
    logger.debug(
        f"🗑️ Large span evicted ({event.reason}): heap={event.heap_id} pages={event.num_pages}"
    )


@event_bus.subscribe(PagesExhaustedEvent)
def on_pages_exhausted(event: PagesExhaustedEvent):
    _recent.append(event)
    logger.warning(
        f"⚠️ Node {event.node} out of pages: requested {event.requested_pages}, "
        f"live {event.live_pages}/{event.capacity_pages}"
    )


@event_bus.subscribe(RepetitionCompletedEvent)
def on_repetition_completed(event: RepetitionCompletedEvent):
    _recent.append(event)
    label = "warm-up" if event.repetition == 0 else f"rep {event.repetition}"
    logger.info(
        f"⏱️ {event.allocator} threads={event.threads} {label}: "
        f"remote={event.remote_pages} local={event.local_pages}"
    )


@event_bus.subscribe(StressViolationEvent)
def on_stress_violation(event: StressViolationEvent):
    _recent.append(event)
    logger.warning(f"🚨 [{event.allocator}] {event.kind} at op {event.op_index}: {event.message}")


@event_bus.subscribe(ExperimentCompletedEvent)
def on_experiment_completed(event: ExperimentCompletedEvent):
    _recent.append(event)
    status = "✅ passed" if event.passed else "❌ failed"
    logger.info(f"🏁 {event.command} {status}")
