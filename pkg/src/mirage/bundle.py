"""Detection bundle: serialized detector outputs the pipeline consumes.

The bundle is a versioned JSON file with normalized coordinates (fractions
of image width/height). Validation failures name the offending path and
field so producer bugs are easy to locate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

from .geometry import BBox, Keypoint, KeypointSet, Point, ScoredBox

BUNDLE_SCHEMA = "detection-bundle/v1"


class BundleError(ValueError):
    """Invalid bundle content; message carries the JSON path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class ImageInfo:
    ref: str
    width_px: int
    height_px: int
    title: str = ""


@dataclass(frozen=True)
class ObjectCandidate:
    label: str
    scored: ScoredBox
    detector_id: Optional[str] = None


@dataclass(frozen=True)
class DetectionBundle:
    image: ImageInfo
    faces: tuple[ScoredBox, ...] = ()
    bodies: tuple[ScoredBox, ...] = ()
    keypoints: Mapping[int, KeypointSet] = field(default_factory=dict)  # by body index
    objects: tuple[ObjectCandidate, ...] = ()
    producer: Mapping[str, Any] = field(default_factory=dict)

    @property
    def title(self) -> str:
        return self.image.title or Path(self.image.ref).stem


def _require(data: Mapping[str, Any], key: str, path: str) -> Any:
    if key not in data:
        raise BundleError(path, f"missing field {key!r}")
    return data[key]


def _parse_box(values: Any, path: str) -> BBox:
    if not isinstance(values, (list, tuple)) or len(values) != 4:
        raise BundleError(path, "box must be [x, y, w, h]")
    try:
        return BBox(*(float(v) for v in values))
    except (TypeError, ValueError) as exc:
        raise BundleError(path, f"invalid box: {exc}")


def _parse_scored(data: Any, path: str) -> ScoredBox:
    if not isinstance(data, Mapping):
        raise BundleError(path, "expected an object with box and score")
    box = _parse_box(_require(data, "box", path), f"{path}.box")
    try:
        return ScoredBox(box=box, score=float(_require(data, "score", path)))
    except (TypeError, ValueError) as exc:
        raise BundleError(f"{path}.score", f"invalid score: {exc}")


def _parse_keypoints(data: Any, path: str, n_bodies: int) -> dict[int, KeypointSet]:
    result: dict[int, KeypointSet] = {}
    if not isinstance(data, list):
        raise BundleError(path, "keypoints must be a list")
    for i, entry in enumerate(data):
        entry_path = f"{path}[{i}]"
        body_index = _require(entry, "body_index", entry_path)
        if not isinstance(body_index, int) or not 0 <= body_index < n_bodies:
            raise BundleError(
                f"{entry_path}.body_index", f"must reference an existing body (0..{n_bodies - 1})"
            )
        if body_index in result:
            raise BundleError(f"{entry_path}.body_index", "duplicate body reference")
        joints = {}
        for name, j in _require(entry, "joints", entry_path).items():
            joint_path = f"{entry_path}.joints.{name}"
            try:
                joints[name] = Keypoint(
                    point=Point(float(j["x"]), float(j["y"])),
                    confidence=float(j["confidence"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise BundleError(joint_path, f"invalid joint: {exc}")
        try:
            result[body_index] = KeypointSet(joints=joints)
        except ValueError as exc:
            raise BundleError(f"{entry_path}.joints", str(exc))
    return result


def bundle_from_dict(data: Mapping[str, Any]) -> DetectionBundle:
    if data.get("schema") != BUNDLE_SCHEMA:
        raise BundleError("schema", f"expected {BUNDLE_SCHEMA!r}, got {data.get('schema')!r}")
    image_data = _require(data, "image", "image")
    image = ImageInfo(
        ref=str(_require(image_data, "ref", "image")),
        width_px=int(_require(image_data, "width_px", "image")),
        height_px=int(_require(image_data, "height_px", "image")),
        title=str(image_data.get("title", "")),
    )
    if image.width_px <= 0 or image.height_px <= 0:
        raise BundleError("image", "dimensions must be positive")
    faces = tuple(
        _parse_scored(f, f"faces[{i}]") for i, f in enumerate(data.get("faces", []))
    )
    bodies = tuple(
        _parse_scored(b, f"bodies[{i}]") for i, b in enumerate(data.get("bodies", []))
    )
    keypoints = _parse_keypoints(data.get("keypoints", []), "keypoints", len(bodies))
    objects = []
    for i, o in enumerate(data.get("objects", [])):
        path = f"objects[{i}]"
        label = str(_require(o, "label", path))
        if not label:
            raise BundleError(f"{path}.label", "label must be nonempty")
        objects.append(
            ObjectCandidate(
                label=label,
                scored=_parse_scored(o, path),
                detector_id=o.get("detector_id"),
            )
        )
    return DetectionBundle(
        image=image,
        faces=faces,
        bodies=bodies,
        keypoints=keypoints,
        objects=tuple(objects),
        producer=dict(data.get("producer", {})),
    )


def load_bundle(path: str | Path) -> DetectionBundle:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BundleError("$", f"not valid JSON: {exc}")
    return bundle_from_dict(data)


def bundle_to_dict(bundle: DetectionBundle) -> dict:
    return {
        "schema": BUNDLE_SCHEMA,
        "image": {
            "ref": bundle.image.ref,
            "width_px": bundle.image.width_px,
            "height_px": bundle.image.height_px,
            "title": bundle.image.title,
        },
        "faces": [
            {"box": list(f.box.as_tuple()), "score": f.score} for f in bundle.faces
        ],
        "bodies": [
            {"box": list(b.box.as_tuple()), "score": b.score} for b in bundle.bodies
        ],
        "keypoints": [
            {
                "body_index": idx,
                "joints": {
                    name: {
                        "x": kp.point.x,
                        "y": kp.point.y,
                        "confidence": kp.confidence,
                    }
                    for name, kp in sorted(kps.joints.items())
                },
            }
            for idx, kps in sorted(bundle.keypoints.items())
        ],
        "objects": [
            {
                "label": o.label,
                "box": list(o.scored.box.as_tuple()),
                "score": o.scored.score,
                "detector_id": o.detector_id,
            }
            for o in bundle.objects
        ],
        "producer": dict(bundle.producer),
    }
