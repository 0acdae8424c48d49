"""Pairwise relation records and scene-level interaction topology.

Every unordered character pair gets one record holding the quantitative
spatial evidence (distance, overlap, relative position, size ratio), a
localized pair crop, and directed interaction cues derived from rays,
contact and shared object references.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Optional, Sequence

from .anchoring import ObjectAnchor
from .characters import ARM_SIDES, CharacterProfile
from .config import RunConfig
from .geometry import (
    BBox,
    center_distance,
    iou,
    natural_id_key,
    relative_position,
    size_ratio,
    union_with_margin,
)

CUE_KINDS = ("pointing-at", "gazing-at", "touching", "shared-attention")
PROXIMITY_CLASSES = ("close", "moderate", "distant")

# Overlap fraction at which contact evidence saturates to full strength.
TOUCH_STRENGTH_IOU_SCALE = 0.25


@dataclass(frozen=True)
class InteractionCue:
    kind: str
    source: str
    target: str
    evidence: str
    strength: float

    def __post_init__(self) -> None:
        if self.kind not in CUE_KINDS:
            raise ValueError(f"unknown cue kind: {self.kind}")
        if self.source == self.target:
            raise ValueError(f"cue source equals target: {self.source}")
        if not 0.0 <= self.strength <= 1.0:
            raise ValueError(f"cue strength outside [0, 1]: {self.strength}")


@dataclass(frozen=True)
class RelationRecord:
    key: str
    pair: tuple[str, str]
    dist: float
    iou: float
    relative_position: str
    size_ratio: float
    proximity_class: str
    cues: tuple[InteractionCue, ...] = ()
    shared_objects: tuple[str, ...] = ()
    pair_crop: Optional[BBox] = None
    meaning: Optional[str] = None


@dataclass(frozen=True)
class SceneTopology:
    """Directed-cue aggregation across all relation records.

    incoming is tracked per entity (characters and objects), outgoing per
    character, so both totals equal the number of directed cues.
    """

    incoming: Mapping[str, int] = field(default_factory=dict)
    outgoing: Mapping[str, int] = field(default_factory=dict)
    focal_candidates: tuple[str, ...] = ()
    object_hubs: tuple[str, ...] = ()
    object_referencers: Mapping[str, tuple[str, ...]] = field(default_factory=dict)


def proximity_class(dist: float, config: RunConfig) -> str:
    if dist < config.proximity_close:
        return "close"
    if dist < config.proximity_moderate:
        return "moderate"
    return "distant"


def _ray_targets(profile: CharacterProfile) -> list[str]:
    """Resolved pointing and gaze targets, in a fixed evaluation order."""
    targets = []
    if profile.pose is not None:
        for side in ARM_SIDES:
            rt = profile.pose.pointing.get(side)
            if rt is not None and rt.target is not None:
                targets.append(rt.target)
        if profile.pose.gaze is not None and profile.pose.gaze.target is not None:
            targets.append(profile.pose.gaze.target)
    return targets


def _confident_wrists(profile: CharacterProfile, threshold: float):
    if profile.keypoints is None:
        return
    for side in ARM_SIDES:
        kp = profile.keypoints.get(f"{side}_wrist")
        if kp is not None and kp.confidence >= threshold:
            yield side, kp


def detect_touch(
    p_i: CharacterProfile, p_j: CharacterProfile, config: RunConfig
) -> Optional[InteractionCue]:
    """Contact cue from wrist placement, or body overlap as a fallback.

    A confident wrist inside the other body box wins; when neither
    character has usable wrists, sufficient body overlap alone counts as
    contact evidence.
    """
    body_iou = iou(p_i.body, p_j.body)
    overlap_strength = min(body_iou / TOUCH_STRENGTH_IOU_SCALE, 1.0)
    wrists_seen = False
    for owner, other in ((p_i, p_j), (p_j, p_i)):
        for side, kp in _confident_wrists(owner, config.keypoint_conf_min):
            wrists_seen = True
            if other.body.contains(kp.point):
                return InteractionCue(
                    kind="touching",
                    source=owner.id,
                    target=other.id,
                    evidence=f"{side} wrist of {owner.id} lies inside {other.id}'s body box",
                    strength=max(kp.confidence, overlap_strength),
                )
    if not wrists_seen and body_iou > config.touch_iou_floor:
        first, second = sorted((p_i.id, p_j.id), key=natural_id_key)
        return InteractionCue(
            kind="touching",
            source=first,
            target=second,
            evidence=f"body overlap IoU={body_iou:.3f} with no wrist evidence available",
            strength=overlap_strength,
        )
    return None


def shared_object_refs(
    p_i: CharacterProfile, p_j: CharacterProfile, objects: Sequence[ObjectAnchor]
) -> list[str]:
    """Object ids targeted by rays of both characters."""
    object_ids = {o.id for o in objects}
    shared = set(_ray_targets(p_i)) & set(_ray_targets(p_j)) & object_ids
    return sorted(shared, key=natural_id_key)


def relate_pair(
    p_i: CharacterProfile,
    p_j: CharacterProfile,
    objects: Sequence[ObjectAnchor],
    config: RunConfig,
    key: str = "",
) -> RelationRecord:
    """Build the full evidence record for one character pair.

    The pair is keyed with ids in natural order. Cues cover rays resolved
    to the partner, contact, and one shared-attention cue per object both
    characters target.
    """
    if p_i.id == p_j.id:
        raise ValueError("relate_pair requires distinct profiles")
    first, second = sorted((p_i, p_j), key=lambda p: natural_id_key(p.id))

    cues: list[InteractionCue] = []
    for src, dst in ((first, second), (second, first)):
        if src.pose is None:
            continue
        for side in ARM_SIDES:
            rt = src.pose.pointing.get(side)
            if rt is not None and rt.target == dst.id:
                cues.append(
                    InteractionCue(
                        kind="pointing-at",
                        source=src.id,
                        target=dst.id,
                        evidence=f"{side} arm ray of {src.id} first intersects {dst.id}",
                        strength=1.0,
                    )
                )
        if src.pose.gaze is not None and src.pose.gaze.target == dst.id:
            cues.append(
                InteractionCue(
                    kind="gazing-at",
                    source=src.id,
                    target=dst.id,
                    evidence=f"gaze ray of {src.id} first intersects {dst.id}",
                    strength=1.0,
                )
            )
    touch = detect_touch(first, second, config)
    if touch is not None:
        cues.append(touch)
    shared = shared_object_refs(first, second, objects)
    for obj_id in shared:
        cues.append(
            InteractionCue(
                kind="shared-attention",
                source=first.id,
                target=obj_id,
                evidence=f"{first.id} and {second.id} both direct rays at {obj_id}",
                strength=1.0,
            )
        )

    dist = center_distance(first.body, second.body)
    return RelationRecord(
        key=key,
        pair=(first.id, second.id),
        dist=dist,
        iou=iou(first.body, second.body),
        relative_position=relative_position(first.body, second.body, config.overlap_iou),
        size_ratio=size_ratio(first.body, second.body),
        proximity_class=proximity_class(dist, config),
        cues=tuple(cues),
        shared_objects=tuple(shared),
        pair_crop=union_with_margin(first.body, second.body, config.pair_crop_margin),
    )


def build_relations(
    profiles: Sequence[CharacterProfile],
    objects: Sequence[ObjectAnchor],
    config: RunConfig,
) -> list[RelationRecord]:
    """All n(n-1)/2 records, keyed R0.. in pair enumeration order."""
    ordered = sorted(profiles, key=lambda p: natural_id_key(p.id))
    records = []
    for index, (a, b) in enumerate(combinations(ordered, 2)):
        records.append(relate_pair(a, b, objects, config, key=f"R{index}"))
    return records


def build_topology(records: Sequence[RelationRecord]) -> SceneTopology:
    """Aggregate directed cues into focal candidates and object hubs.

    Focal candidates are characters ranked by incoming cue count; object
    hubs are objects ranked by how many distinct characters reference them
    through shared-object evidence. Entities without any signal are left
    out of the rankings.
    """
    members = sorted({cid for rec in records for cid in rec.pair}, key=natural_id_key)
    expected = {tuple(sorted(p, key=natural_id_key)) for p in combinations(members, 2)}
    seen = {rec.pair for rec in records}
    if seen != expected:
        raise ValueError("records must cover every unordered character pair exactly once")

    incoming: dict[str, int] = {}
    outgoing: dict[str, int] = {}
    referencers: dict[str, set[str]] = {}
    total = 0
    for rec in records:
        for cue in rec.cues:
            total += 1
            outgoing[cue.source] = outgoing.get(cue.source, 0) + 1
            incoming[cue.target] = incoming.get(cue.target, 0) + 1
        for obj_id in rec.shared_objects:
            referencers.setdefault(obj_id, set()).update(rec.pair)

    focal = sorted(
        (cid for cid in incoming if cid in set(members)),
        key=lambda cid: (-incoming[cid], natural_id_key(cid)),
    )
    hubs = sorted(
        referencers,
        key=lambda oid: (-len(referencers[oid]), natural_id_key(oid)),
    )
    return SceneTopology(
        incoming=incoming,
        outgoing=outgoing,
        focal_candidates=tuple(focal),
        object_hubs=tuple(hubs),
        object_referencers={
            oid: tuple(sorted(chars, key=natural_id_key)) for oid, chars in referencers.items()
        },
    )
