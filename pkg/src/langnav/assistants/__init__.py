from .clients import (
    LlmClient,
    MockBackend,
    ReplayBackend,
    LiveBackend,
    RecordingClient,
    TransportError,
)
from .pipeline import (
    AssistantPipeline,
    ImportanceRatings,
    PipelineEvent,
    PipelineError,
    Query,
    RouteDecision,
    RouteKind,
    AllZeroRatings,
    ratings_to_weights,
)

__all__ = [
    "LlmClient",
    "MockBackend",
    "ReplayBackend",
    "LiveBackend",
    "RecordingClient",
    "TransportError",
    "AssistantPipeline",
    "ImportanceRatings",
    "PipelineEvent",
    "PipelineError",
    "Query",
    "RouteDecision",
    "RouteKind",
    "AllZeroRatings",
    "ratings_to_weights",
]
