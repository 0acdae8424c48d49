"""Build a grounding document from pipeline outputs.

Display rule: when both modalities describe an attribute, the semantic
reading is shown in the main field and the geometric reading is preserved
on a conflict line. Nothing is dropped; the preference only orders output.
"""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

from .anchoring import ObjectAnchor
from .characters import ARM_SIDES, CharacterProfile
from .config import RunConfig
from .conflicts import STATUS_CONFLICT, ConflictRecord
from .document import (
    CharacterBlock,
    DocConflict,
    GroundingDocument,
    ObjectEntry,
    RelationBlock,
    SceneOverview,
    render,
    round3,
)
from .geometry import natural_id_key
from .relations import RelationRecord

PROXIMITY_PHRASES = {
    "close": "close proximity",
    "moderate": "moderate proximity",
    "distant": "distant",
}


def _doc_conflicts(records: Sequence[ConflictRecord], subject: str) -> tuple[DocConflict, ...]:
    """Conflict lines for one subject: the non-displayed (geometric) side."""
    lines = []
    for rec in records:
        if rec.subject != subject or rec.status != STATUS_CONFLICT:
            continue
        lines.append(
            DocConflict(basis="geometry", value=rec.geometric_value, attribute=rec.attribute)
        )
    return tuple(lines)


def _display_value(records: Sequence[ConflictRecord], subject: str, attribute: str) -> Optional[str]:
    for rec in records:
        if rec.subject == subject and rec.attribute == attribute:
            return rec.display_value
    return None


def _geometric_actions(profile: CharacterProfile) -> Optional[str]:
    if profile.pose is None:
        return None
    targets = []
    for side in ARM_SIDES:
        rt = profile.pose.pointing.get(side)
        if rt is not None and rt.target is not None and rt.target not in targets:
            targets.append(rt.target)
    if not targets:
        return None
    return ", ".join(f"points at {t}" for t in targets)


def character_block(
    profile: CharacterProfile, conflicts: Sequence[ConflictRecord]
) -> CharacterBlock:
    return CharacterBlock(
        id=profile.id,
        role=profile.semantic("role"),
        posture=_display_value(conflicts, profile.id, "posture"),
        gaze=_display_value(conflicts, profile.id, "gaze-target"),
        actions=profile.semantic("object_interaction") or _geometric_actions(profile),
        note=profile.semantic("note"),
        conflicts=_doc_conflicts(conflicts, profile.id),
    )


def interaction_phrase(record: RelationRecord, config: RunConfig) -> str:
    parts = []
    if record.iou > config.doc_overlap_iou:
        parts.append("overlap")
    parts.append(PROXIMITY_PHRASES[record.proximity_class])
    return " / ".join(parts)


def relation_block(
    record: RelationRecord, conflicts: Sequence[ConflictRecord], config: RunConfig
) -> RelationBlock:
    return RelationBlock(
        key=record.key,
        pair=record.pair,
        dist=round3(record.dist),
        iou=round3(record.iou),
        interaction=interaction_phrase(record, config),
        cues=tuple((c.kind, c.source, c.target) for c in record.cues),
        meaning=record.meaning,
        conflicts=_doc_conflicts(conflicts, record.key),
    )


def build_document(
    title: str,
    scene: Mapping[str, str],
    objects: Sequence[ObjectAnchor],
    profiles: Sequence[CharacterProfile],
    relations: Sequence[RelationRecord],
    conflicts: Sequence[ConflictRecord],
    config: RunConfig,
) -> GroundingDocument:
    ordered_profiles = sorted(profiles, key=lambda p: natural_id_key(p.id))
    ordered_objects = sorted(objects, key=lambda o: natural_id_key(o.id))
    ordered_relations = sorted(relations, key=lambda r: natural_id_key(r.key))
    return GroundingDocument(
        title=title,
        scene=SceneOverview(
            setting=scene.get("setting", ""),
            mood=scene.get("mood", ""),
            composition=scene.get("composition", ""),
            focus=scene.get("focus", ""),
        ),
        objects=tuple(ObjectEntry(o.id, o.label, o.note) for o in ordered_objects),
        characters=tuple(character_block(p, conflicts) for p in ordered_profiles),
        relations=tuple(relation_block(r, conflicts, config) for r in ordered_relations),
    )


def assemble(
    title: str,
    scene: Mapping[str, str],
    objects: Sequence[ObjectAnchor],
    profiles: Sequence[CharacterProfile],
    relations: Sequence[RelationRecord],
    conflicts: Sequence[ConflictRecord],
    config: Optional[RunConfig] = None,
) -> str:
    """Serialize pipeline outputs to document text (deterministic bytes)."""
    return render(
        build_document(
            title, scene, objects, profiles, relations, conflicts, config or RunConfig()
        )
    )
