from typing import Any, Callable, Dict, List

# Topics emitted by the simulator. Payloads are positional:
#   BLOCK_MINED(time, node_id, block)
#   CHAIN_ADOPTED(time, node_id, old_chain, new_chain)
#   ANNOUNCEMENT_IGNORED(time, node_id, sender, reason, local_chain, candidate)
#   MESSAGE_DROPPED(time, sender, receiver, cause)
#   PARTITION_STARTED(time, index) / PARTITION_ENDED(time, index)
BLOCK_MINED = "block_mined"
CHAIN_ADOPTED = "chain_adopted"
ANNOUNCEMENT_IGNORED = "announcement_ignored"
MESSAGE_DROPPED = "message_dropped"
PARTITION_STARTED = "partition_started"
PARTITION_ENDED = "partition_ended"

TOPICS = (
    BLOCK_MINED,
    CHAIN_ADOPTED,
    ANNOUNCEMENT_IGNORED,
    MESSAGE_DROPPED,
    PARTITION_STARTED,
    PARTITION_ENDED,
)


class EventBus:
    """Callback fan-out in registration order, so listeners observe a deterministic sequence."""

    def __init__(self) -> None:
        self._listeners: Dict[str, List[Callable[..., Any]]] = {}
        self.emitted = 0

    def on(self, event: str, callback: Callable[..., Any]) -> None:
        if event not in TOPICS:
            raise ValueError(f"unknown simulator topic {event!r}")
        self._listeners.setdefault(event, []).append(callback)

    def off(self, event: str, callback: Callable[..., Any]) -> None:
        listeners = self._listeners.get(event, [])
        if callback in listeners:
            listeners.remove(callback)

    def emit(self, event: str, *args: Any) -> None:
        self.emitted += 1
        for cb in list(self._listeners.get(event, [])):
            cb(*args)
