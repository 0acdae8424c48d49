"""End-to-end grounding: bundle in, scene record out.

The pipeline chains anchoring, character grounding, relational grounding,
the conflict ledger, and document assembly. Gateway failures degrade to
geometry-only output with a logged warning; they never abort the run.
Everything is deterministic for a fixed bundle, config, and mock script.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from .anchoring import ObjectAnchor, build_character_anchors, filter_objects
from .assemble import assemble
from .bundle import DetectionBundle, bundle_to_dict, load_bundle
from .characters import CharacterProfile, build_profile
from .config import RunConfig
from .conflicts import ConflictRecord, ledger_for_scene
from .document import parse as parse_document
from .gateway import GatewayError
from .geometry import natural_id_key
from .relations import RelationRecord, SceneTopology, build_relations, build_topology

RECORD_SCHEMA = "scene-record/v1"
OVERLAY_SCHEMA = "overlay/v1"


@dataclasses.dataclass(frozen=True)
class SceneRecord:
    scene_id: str
    bundle: DetectionBundle
    objects: tuple[ObjectAnchor, ...]
    profiles: tuple[CharacterProfile, ...]
    relations: tuple[RelationRecord, ...]
    topology: SceneTopology
    conflicts: tuple[ConflictRecord, ...]
    document: str
    provenance: tuple[str, ...]


def _default_scene_context(n_characters: int, n_objects: int, focal: Optional[str]) -> dict:
    return {
        "setting": "Scene context derived from detections only.",
        "mood": "unspecified",
        "composition": f"{n_characters} figure(s) with {n_objects} anchored object(s).",
        "focus": f"Relational cues converge on {focal}." if focal else "No dominant focus.",
    }


def ground_scene(
    bundle: DetectionBundle,
    config: RunConfig,
    gateway,
    scene_id: str,
) -> SceneRecord:
    """Run the full grounding pipeline over one detection bundle."""
    log: list[str] = [f"gateway: {type(gateway).__name__}"]
    image_ref = bundle.image.ref

    anchors = build_character_anchors(bundle.faces, bundle.bodies, config)
    log.append(f"anchors: {len(bundle.faces)} raw faces -> {len(anchors)} characters")

    candidates = [(o.label, o.scored) for o in bundle.objects]
    detector_ids = [o.detector_id or f"obj_{i:03d}" for i, o in enumerate(bundle.objects)]
    objects = filter_objects(
        candidates, gateway, config, scene_ref=image_ref, detector_ids=detector_ids, log=log
    )
    log.append(f"objects: {len(candidates)} candidates -> {len(objects)} anchors")

    profiles = tuple(
        build_profile(
            anchor,
            bundle.keypoints.get(anchor.body_index) if anchor.body_index is not None else None,
            anchors,
            objects,
            gateway,
            config,
            image_ref=image_ref,
            log=log,
        )
        for anchor in anchors
    )

    relations = build_relations(profiles, objects, config)
    relation_semantics: dict[str, str] = {}
    enriched: list[RelationRecord] = []
    for rec in relations:
        try:
            attrs = gateway.enrich_relation(
                rec.key,
                rec.pair,
                [c.kind for c in rec.cues],
                rec.shared_objects,
                image_ref,
            )
        except GatewayError as exc:
            log.append(f"relations: gateway unavailable for {rec.key} ({exc}); geometry-only")
            attrs = {}
        if attrs.get("interaction_type"):
            relation_semantics[rec.key] = attrs["interaction_type"]
        enriched.append(
            dataclasses.replace(rec, meaning=attrs.get("meaning") or None)
        )
    relations = enriched

    topology = build_topology(relations)
    conflicts = tuple(ledger_for_scene(profiles, relations, relation_semantics))
    preserved = sum(1 for c in conflicts if c.status == "conflict-preserved")
    log.append(f"conflicts: {len(conflicts)} ledger records, {preserved} preserved")
    log.append("display preference: semantic (gaze, posture); geometry kept on conflict lines")

    focal = topology.focal_candidates[0] if topology.focal_candidates else None
    try:
        scene_ctx = gateway.describe_scene(
            image_ref, len(profiles), [o.label for o in objects], focal
        )
    except GatewayError as exc:
        log.append(f"scene: gateway unavailable ({exc}); geometric defaults")
        scene_ctx = _default_scene_context(len(profiles), len(objects), focal)

    document = assemble(
        bundle.title, scene_ctx, objects, profiles, relations, conflicts, config
    )

    return SceneRecord(
        scene_id=scene_id,
        bundle=bundle,
        objects=tuple(objects),
        profiles=profiles,
        relations=tuple(relations),
        topology=topology,
        conflicts=conflicts,
        document=document,
        provenance=tuple(log),
    )


# --------------------------------------------------------------------------
# Serialized forms (persisted and served)


def _box(b) -> list[float]:
    return [b.x, b.y, b.w, b.h]


def _profile_dict(p: CharacterProfile) -> dict:
    pose = None
    if p.pose is not None:
        pose = {
            "posture": p.pose.posture,
            "orientation": p.pose.orientation,
            "pointing": {
                side: {
                    "origin": [rt.ray.origin.x, rt.ray.origin.y],
                    "direction": [rt.ray.direction.x, rt.ray.direction.y],
                    "target": rt.target,
                }
                for side, rt in sorted(p.pose.pointing.items())
            },
            "gaze": None
            if p.pose.gaze is None
            else {
                "origin": [p.pose.gaze.ray.origin.x, p.pose.gaze.ray.origin.y],
                "direction": [p.pose.gaze.ray.direction.x, p.pose.gaze.ray.direction.y],
                "target": p.pose.gaze.target,
            },
        }
    return {
        "id": p.id,
        "body": _box(p.body),
        "face": _box(p.face),
        "body_source": p.body_source,
        "spatial": {
            "horizontal": p.spatial.horizontal,
            "vertical": p.spatial.vertical,
            "center": [p.spatial.center.x, p.spatial.center.y],
        },
        "appearance": {
            key: {"value": attr.value, "provenance": attr.provenance}
            for key, attr in sorted(p.appearance.items())
        },
        "neighborhood": list(p.neighborhood),
        "pose": pose,
        "keypoints": None
        if p.keypoints is None
        else {
            name: [kp.point.x, kp.point.y, kp.confidence]
            for name, kp in sorted(p.keypoints.joints.items())
        },
    }


def _relation_dict(r: RelationRecord) -> dict:
    return {
        "key": r.key,
        "pair": list(r.pair),
        "dist": r.dist,
        "iou": r.iou,
        "relative_position": r.relative_position,
        "size_ratio": r.size_ratio,
        "proximity_class": r.proximity_class,
        "cues": [
            {
                "kind": c.kind,
                "source": c.source,
                "target": c.target,
                "evidence": c.evidence,
                "strength": c.strength,
            }
            for c in r.cues
        ],
        "shared_objects": list(r.shared_objects),
        "pair_crop": _box(r.pair_crop) if r.pair_crop else None,
        "meaning": r.meaning,
    }


def _conflict_dict(c: ConflictRecord) -> dict:
    return {
        "subject": c.subject,
        "attribute": c.attribute,
        "geometric_value": c.geometric_value,
        "geometric_basis": c.geometric_basis,
        "semantic_value": c.semantic_value,
        "semantic_basis": c.semantic_basis,
        "status": c.status,
    }


def topology_dict(t: SceneTopology) -> dict:
    return {
        "incoming": dict(sorted(t.incoming.items())),
        "outgoing": dict(sorted(t.outgoing.items())),
        "focal_candidates": list(t.focal_candidates),
        "object_hubs": list(t.object_hubs),
        "object_referencers": {k: list(v) for k, v in sorted(t.object_referencers.items())},
    }


def overlay_payload(record: SceneRecord) -> dict:
    """Normalized geometry for client-side rendering, keyed by entity id."""
    characters = {}
    conflict_attrs: dict[str, list[str]] = {}
    for c in record.conflicts:
        if c.status == "conflict-preserved":
            conflict_attrs.setdefault(c.subject, []).append(c.attribute)
    for p in sorted(record.profiles, key=lambda p: natural_id_key(p.id)):
        rays = []
        if p.pose is not None:
            for side, rt in sorted(p.pose.pointing.items()):
                rays.append(
                    {
                        "kind": f"pointing-{side}",
                        "origin": [rt.ray.origin.x, rt.ray.origin.y],
                        "direction": [rt.ray.direction.x, rt.ray.direction.y],
                        "target": rt.target,
                    }
                )
            if p.pose.gaze is not None:
                rays.append(
                    {
                        "kind": "gaze",
                        "origin": [p.pose.gaze.ray.origin.x, p.pose.gaze.ray.origin.y],
                        "direction": [p.pose.gaze.ray.direction.x, p.pose.gaze.ray.direction.y],
                        "target": p.pose.gaze.target,
                    }
                )
        characters[p.id] = {
            "body": _box(p.body),
            "face": _box(p.face),
            "body_source": p.body_source,
            "rays": rays,
            "conflicts": sorted(conflict_attrs.get(p.id, [])),
        }
    return {
        "schema": OVERLAY_SCHEMA,
        "image": {
            "ref": record.bundle.image.ref,
            "width_px": record.bundle.image.width_px,
            "height_px": record.bundle.image.height_px,
        },
        "characters": characters,
        "objects": {
            o.id: {"label": o.label, "box": _box(o.box), "source": o.source}
            for o in sorted(record.objects, key=lambda o: natural_id_key(o.id))
        },
        "relations": {
            r.key: {
                "pair": list(r.pair),
                "pair_crop": _box(r.pair_crop) if r.pair_crop else None,
                "dist": r.dist,
                "iou": r.iou,
                "proximity_class": r.proximity_class,
                "cues": [
                    {"kind": c.kind, "source": c.source, "target": c.target, "strength": c.strength}
                    for c in r.cues
                ],
                "conflicts": sorted(conflict_attrs.get(r.key, [])),
            }
            for r in sorted(record.relations, key=lambda r: natural_id_key(r.key))
        },
        "focal_candidates": list(record.topology.focal_candidates),
        "object_hubs": list(record.topology.object_hubs),
    }


def record_to_dict(record: SceneRecord) -> dict:
    return {
        "schema": RECORD_SCHEMA,
        "scene_id": record.scene_id,
        "bundle": bundle_to_dict(record.bundle),
        "objects": [
            {
                "id": o.id,
                "label": o.label,
                "box": _box(o.box),
                "interaction_salience": o.interaction_salience,
                "source": o.source,
                "score": o.score,
                "detector_id": o.detector_id,
                "note": o.note,
            }
            for o in record.objects
        ],
        "profiles": [_profile_dict(p) for p in record.profiles],
        "relations": [_relation_dict(r) for r in record.relations],
        "topology": topology_dict(record.topology),
        "conflicts": [_conflict_dict(c) for c in record.conflicts],
        "document": record.document,
        "overlay": overlay_payload(record),
        "provenance": list(record.provenance),
    }


def validate_record_dict(data: Mapping[str, Any]) -> None:
    """Invariant check for persisted records: the document must parse and
    its ids must cover exactly the stored entities."""
    if data.get("schema") != RECORD_SCHEMA:
        raise ValueError(f"expected {RECORD_SCHEMA!r}, got {data.get('schema')!r}")
    doc = parse_document(data["document"])
    doc_ids = doc.defined_ids()
    stored = {p["id"] for p in data["profiles"]}
    stored |= {o["id"] for o in data["objects"]}
    stored |= {r["key"] for r in data["relations"]}
    if doc_ids != stored:
        raise ValueError(
            f"document ids {sorted(doc_ids)} do not match stored entities {sorted(stored)}"
        )


def dump_json(data: Mapping[str, Any]) -> str:
    """Canonical JSON form used for all persisted artifacts."""
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_scene(record: SceneRecord, out_dir: str | Path) -> Path:
    """Persist a scene: record, document, and overlay geometry files."""
    scene_dir = Path(out_dir) / record.scene_id
    scene_dir.mkdir(parents=True, exist_ok=True)
    record_data = record_to_dict(record)
    validate_record_dict(record_data)
    (scene_dir / "record.json").write_text(dump_json(record_data), encoding="utf-8")
    (scene_dir / "document.md").write_text(record.document, encoding="utf-8")
    (scene_dir / "overlay.json").write_text(
        dump_json(record_data["overlay"]), encoding="utf-8"
    )
    return scene_dir


def ground_bundle_file(
    bundle_path: str | Path, config: RunConfig, gateway, out_dir: str | Path,
    scene_id: Optional[str] = None,
) -> SceneRecord:
    bundle = load_bundle(bundle_path)
    sid = scene_id or Path(bundle_path).parent.name or Path(bundle_path).stem
    record = ground_scene(bundle, config, gateway, scene_id=sid)
    write_scene(record, out_dir)
    return record
