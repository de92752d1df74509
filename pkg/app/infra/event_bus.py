"""
Event Bus para publicar y suscribirse a eventos de dominio.
Síncrono: los eventos se publican desde threads de trabajo del simulador.
"""
from typing import Callable, Dict, List, Type, TypeVar
from collections import defaultdict
import logging
import threading

from app.domain.events import DomainEvent

T = TypeVar('T', bound=DomainEvent)

logger = logging.getLogger(__name__)


class EventBus:
    """
    Event Bus para publicar y suscribirse a eventos de dominio.

    Características:
    - Suscripción basada en decoradores
    - Listeners síncronos, ejecutados en el thread que publica
    - Manejo de errores sin afectar al asignador ni a otros listeners
    """

    def __init__(self):
        # Dict[EventType, List[Listener]]
        self._listeners: Dict[Type[DomainEvent], List[Callable]] = defaultdict(list)
        self._lock = threading.Lock()

    def subscribe(self, event_type: Type[T]) -> Callable:
        """
        Decorator para registrar un listener.

        Usage:
            @event_bus.subscribe(SpanReclaimedEvent)
            def handle_span_reclaimed(event: SpanReclaimedEvent):
                ...
        """
        def decorator(handler: Callable[[T], None]):
            with self._lock:
                self._listeners[event_type].append(handler)
            logger.debug(f"✅ Registered listener for {event_type.__name__}")
            return handler
        return decorator

    def publish_sync(self, event: DomainEvent):
        """
        Publicar un evento a todos los listeners registrados.
        Los errores en listeners se loguean y no se propagan.
        """
        event_type = type(event)
        listeners = list(self._listeners.get(event_type, ()))
        for listener in listeners:
            try:
                listener(event)
            except Exception as e:
                logger.error(f"❌ Error in listener for {event_type.__name__}: {e}")

    def get_listener_count(self, event_type: Type[DomainEvent] = None) -> int:
        """Obtener número de listeners registrados"""
        if event_type:
            return len(self._listeners.get(event_type, []))
        return sum(len(listeners) for listeners in self._listeners.values())


# Singleton global
_event_bus = EventBus()


def get_event_bus() -> EventBus:
    """Obtener instancia global del event bus"""
    return _event_bus
