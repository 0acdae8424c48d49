"""Conflict ledger: preserve geometry/semantic disagreements verbatim.

When the geometric pipeline and the semantic gateway disagree about an
attribute, both readings are recorded side by side instead of one being
resolved away. Downstream consumers decide what to do with the tension.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .characters import ARM_SIDES, CharacterProfile
from .geometry import natural_id_key
from .relations import RelationRecord

ATTRIBUTES = ("posture", "gaze-target", "pointing-target", "interaction-type")
TARGET_ATTRIBUTES = ("gaze-target", "pointing-target")

STATUS_CONFLICT = "conflict-preserved"
STATUS_AGREED = "agreed"
STATUS_GEOMETRY_ONLY = "geometry-only"
STATUS_SEMANTIC_ONLY = "semantic-only"

BASIS_GEOMETRY = "geometry"
BASIS_SEMANTIC = "VLM"

# The document displays the semantic reading when both are present; the
# preference orders output only and never drops the other value.
DISPLAY_PREFERENCE = "semantic"

_ENTITY_TOKEN = re.compile(r"\b([CO]\d+)\b")


@dataclass(frozen=True)
class Signal:
    value: str
    basis: str


@dataclass(frozen=True)
class ConflictRecord:
    subject: str  # character id or relation key
    attribute: str
    geometric_value: Optional[str]
    geometric_basis: Optional[str]
    semantic_value: Optional[str]
    semantic_basis: Optional[str]
    status: str

    @property
    def display_value(self) -> Optional[str]:
        if self.semantic_value is not None:
            return self.semantic_value
        return self.geometric_value


def normalize_target(value: str) -> str:
    """Canonical form for target comparison: entity id if one is present."""
    m = _ENTITY_TOKEN.search(value)
    if m:
        return m.group(1)
    return value.strip().lower()


def _label_set(value: str) -> set[str]:
    return {part.strip().lower() for part in value.split("/") if part.strip()}


def values_equal(attribute: str, a: str, b: str) -> bool:
    """Attribute-specific equality.

    Target attributes compare by entity id. Label attributes treat
    slash-joined values as alternatives and only disagree when the label
    sets are disjoint, so "standing/crouching" is compatible with
    "standing" but conflicts with "kneeling".
    """
    if attribute in TARGET_ATTRIBUTES:
        return normalize_target(a) == normalize_target(b)
    return not _label_set(a).isdisjoint(_label_set(b))


def reconcile(
    subject: str,
    attribute: str,
    geometric: Optional[Signal],
    semantic: Optional[Signal],
) -> ConflictRecord:
    """Combine one attribute's signals without discarding either.

    Raises ValueError when neither signal is present.
    """
    if attribute not in ATTRIBUTES:
        raise ValueError(f"unknown attribute: {attribute}")
    if geometric is None and semantic is None:
        raise ValueError(f"no signal for {subject}/{attribute}")
    if geometric is None:
        status = STATUS_SEMANTIC_ONLY
    elif semantic is None:
        status = STATUS_GEOMETRY_ONLY
    elif values_equal(attribute, geometric.value, semantic.value):
        status = STATUS_AGREED
    else:
        status = STATUS_CONFLICT
    return ConflictRecord(
        subject=subject,
        attribute=attribute,
        geometric_value=geometric.value if geometric else None,
        geometric_basis=geometric.basis if geometric else None,
        semantic_value=semantic.value if semantic else None,
        semantic_basis=semantic.basis if semantic else None,
        status=status,
    )


def _geometric_posture(profile: CharacterProfile) -> Optional[Signal]:
    if profile.pose is None or profile.pose.posture == "unknown":
        return None
    return Signal(profile.pose.posture, "pose skeleton")


def _geometric_gaze(profile: CharacterProfile) -> Optional[Signal]:
    if profile.pose is None or profile.pose.gaze is None or profile.pose.gaze.target is None:
        return None
    return Signal(profile.pose.gaze.target, "gaze ray first hit")


def _geometric_pointing(profile: CharacterProfile) -> Optional[Signal]:
    if profile.pose is None:
        return None
    targets = []
    for side in ARM_SIDES:
        rt = profile.pose.pointing.get(side)
        if rt is not None and rt.target is not None and rt.target not in targets:
            targets.append(rt.target)
    if not targets:
        return None
    return Signal("/".join(targets), "arm ray first hit")


def _semantic_signal(profile: CharacterProfile, key: str) -> Optional[Signal]:
    value = profile.semantic(key)
    if value is None:
        return None
    return Signal(value, BASIS_SEMANTIC)


def ledger_for_scene(
    profiles: Sequence[CharacterProfile],
    relations: Sequence[RelationRecord],
    relation_semantics: Optional[Mapping[str, str]] = None,
) -> list[ConflictRecord]:
    """One record per (subject, attribute) where any signal exists.

    Character subjects cover posture, gaze target, and pointing target;
    relation subjects cover the interaction type, with the geometric side
    summarizing cue kinds and the semantic side supplied by the gateway.
    Output order is deterministic: subject id, then attribute name.
    """
    records = []
    for profile in profiles:
        pairs = (
            ("posture", _geometric_posture(profile), _semantic_signal(profile, "posture")),
            (
                "gaze-target",
                _geometric_gaze(profile),
                _semantic_signal(profile, "attention_direction"),
            ),
            (
                "pointing-target",
                _geometric_pointing(profile),
                _semantic_signal(profile, "pointing_target"),
            ),
        )
        for attribute, geo, sem in pairs:
            if geo is not None or sem is not None:
                records.append(reconcile(profile.id, attribute, geo, sem))

    semantics = relation_semantics or {}
    for rec in relations:
        kinds = sorted({cue.kind for cue in rec.cues})
        geo = Signal("/".join(kinds), "interaction cues") if kinds else None
        sem_value = semantics.get(rec.key)
        sem = Signal(sem_value, BASIS_SEMANTIC) if sem_value else None
        if geo is not None or sem is not None:
            records.append(reconcile(rec.key, "interaction-type", geo, sem))

    records.sort(key=lambda r: (natural_id_key(r.subject), r.attribute))
    return records
