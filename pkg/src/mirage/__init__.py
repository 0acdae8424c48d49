"""Relational grounding layer for multi-figure artwork interpretation.

The package turns per-image detection bundles into an inspectable
evidence layer: identity-stable character anchors, pairwise relation
records, a preserved-conflict ledger, and a Markdown grounding document
that downstream language models reason over.
"""

from .anchoring import CharacterAnchor, FaceAnchor, ObjectAnchor
from .bundle import DetectionBundle, load_bundle
from .characters import CharacterProfile, PoseAbstraction
from .config import RunConfig, load_config
from .conflicts import ConflictRecord, reconcile
from .document import GroundingDocument, parse, render
from .gateway import (
    GatewayError,
    InterpretationRequest,
    MockGateway,
    RemoteGateway,
    StructuredAnswer,
)
from .geometry import BBox, KeypointSet, Point, Ray, ScoredBox
from .pipeline import SceneRecord, ground_scene
from .relations import InteractionCue, RelationRecord, SceneTopology

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "CharacterAnchor",
    "CharacterProfile",
    "ConflictRecord",
    "DetectionBundle",
    "FaceAnchor",
    "GatewayError",
    "GroundingDocument",
    "InteractionCue",
    "InterpretationRequest",
    "KeypointSet",
    "MockGateway",
    "ObjectAnchor",
    "Point",
    "PoseAbstraction",
    "Ray",
    "RelationRecord",
    "RemoteGateway",
    "RunConfig",
    "SceneRecord",
    "SceneTopology",
    "ScoredBox",
    "StructuredAnswer",
    "ground_scene",
    "load_bundle",
    "load_config",
    "parse",
    "reconcile",
    "render",
]
