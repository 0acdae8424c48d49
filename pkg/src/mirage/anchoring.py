"""Grounding initialization: face anchors, body association, object anchors.

Faces act as identity seeds. Each face is matched to the most plausible
body region under a head-location prior (face center inside the body box,
in its upper half); faces without a valid body get a proportional fallback
estimate so every identity keeps a usable support region.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .config import RunConfig
from .gateway import GatewayError, LabelDecision
from .geometry import BBox, Point, ScoredBox, natural_id_key, nms

BODY_DETECTED = "detected"
BODY_FALLBACK = "fallback"


@dataclass(frozen=True)
class FaceAnchor:
    face: ScoredBox

    @property
    def center(self) -> Point:
        return self.face.box.center


@dataclass(frozen=True)
class CharacterAnchor:
    """Identity-stable character: face seed plus body support region.

    body_index points back at the detected body in the source bundle
    (None for fallback bodies) so per-body keypoints stay attached.
    """

    id: str
    face: FaceAnchor
    body: BBox
    body_source: str
    body_index: Optional[int] = None

    def __post_init__(self) -> None:
        if self.body_source not in (BODY_DETECTED, BODY_FALLBACK):
            raise ValueError(f"unknown body_source: {self.body_source}")
        c = self.face.center
        if not self.body.contains(c):
            raise ValueError(f"face center {c} outside body box for {self.id}")
        if c.y > self.body.y + self.body.h / 2.0:
            raise ValueError(f"face center {c} below body upper half for {self.id}")


@dataclass(frozen=True)
class AnchorDraft:
    """Character anchor before identity assignment."""

    face: FaceAnchor
    body: BBox
    body_source: str
    body_index: Optional[int] = None


@dataclass(frozen=True)
class ObjectAnchor:
    id: str
    label: str
    box: BBox
    interaction_salience: str  # accepted | rejected
    source: str  # semantic-filter | detector
    score: float = 1.0
    detector_id: Optional[str] = None
    note: str = ""


def filter_faces(
    raw: Sequence[ScoredBox],
    conf_min: float,
    nms_iou: float,
    aspect_limits: tuple[float, float] = (0.4, 2.5),
    area_max: float = 0.25,
) -> list[FaceAnchor]:
    """Confidence filter, suppression, then plausibility constraints.

    Drops detections below conf_min, deduplicates with NMS, then rejects
    boxes whose aspect ratio falls outside the limits or whose area covers
    more than ``area_max`` of the image (painted-texture artifacts).
    """
    if not (0.0 <= conf_min <= 1.0 and 0.0 <= nms_iou <= 1.0):
        raise ValueError("thresholds must lie in [0, 1]")
    lo, hi = aspect_limits
    kept = nms([s for s in raw if s.score >= conf_min], nms_iou)
    anchors = []
    for scored in kept:
        aspect = scored.box.w / scored.box.h
        if aspect < lo or aspect > hi:
            continue
        if scored.box.area > area_max:
            continue
        anchors.append(FaceAnchor(face=scored))
    return anchors


def _containment_fit(face_center: Point, body: BBox) -> float:
    """Horizontal-center alignment of the face within the body, in [0, 1]."""
    offset = abs(face_center.x - body.center.x) / (body.w / 2.0)
    return min(max(1.0 - offset, 0.0), 1.0)


def association_score(face: FaceAnchor, body: ScoredBox) -> float:
    """Detector confidence weighted by spatial consistency."""
    return body.score * _containment_fit(face.center, body.box)


def associate_body(face: FaceAnchor, bodies: Sequence[ScoredBox]) -> Optional[ScoredBox]:
    """Best body whose box holds the face center within its upper half.

    Selection maximizes association_score; ties prefer the higher raw
    detector score, then the smaller box x. None when no body satisfies
    the head-location constraint.
    """
    c = face.center
    candidates = [
        b
        for b in bodies
        if b.box.x <= c.x <= b.box.right and b.box.y <= c.y <= b.box.y + b.box.h / 2.0
    ]
    if not candidates:
        return None
    return max(candidates, key=lambda b: (association_score(face, b), b.score, -b.box.x))


def fallback_body(
    face: FaceAnchor, width_factor: float = 3.0, height_factor: float = 6.0
) -> BBox:
    """Proportional body estimate grown from the face box.

    The face box sits horizontally centered at the top of the estimate;
    the result is clamped to the canvas and always keeps the face center
    in its upper half.
    """
    fb = face.face.box
    return BBox.clamped(
        fb.x - fb.w * (width_factor - 1.0) / 2.0,
        fb.y,
        fb.w * width_factor,
        fb.h * height_factor,
    )


def assign_ids(drafts: Sequence[AnchorDraft]) -> list[CharacterAnchor]:
    """Assign dense C1..Cn ids by face center x, then y.

    The ordering is a total order over face centers, so permutations of
    the input never change the assignment.
    """
    ordered = sorted(drafts, key=lambda d: (d.face.center.x, d.face.center.y))
    return [
        CharacterAnchor(
            id=f"C{i}",
            face=d.face,
            body=d.body,
            body_source=d.body_source,
            body_index=d.body_index,
        )
        for i, d in enumerate(ordered, start=1)
    ]


def build_character_anchors(
    faces: Sequence[ScoredBox], bodies: Sequence[ScoredBox], config: RunConfig
) -> list[CharacterAnchor]:
    """Full anchoring pass: filter faces, associate or fall back, assign ids."""
    anchors = filter_faces(
        faces,
        conf_min=config.face_conf_min,
        nms_iou=config.face_nms_iou,
        aspect_limits=(config.face_aspect_min, config.face_aspect_max),
        area_max=config.face_area_max,
    )
    drafts = []
    for anchor in anchors:
        body = associate_body(anchor, bodies)
        if body is not None:
            drafts.append(
                AnchorDraft(anchor, body.box, BODY_DETECTED, body_index=bodies.index(body))
            )
        else:
            drafts.append(
                AnchorDraft(
                    anchor,
                    fallback_body(
                        anchor, config.fallback_width_factor, config.fallback_height_factor
                    ),
                    BODY_FALLBACK,
                )
            )
    return assign_ids(drafts)


def allowlist_accepts(label: str, allowlist: Sequence[str]) -> bool:
    """True when any allowlist term occurs in the normalized label."""
    norm = label.lower()
    return any(term in norm for term in allowlist)


def filter_objects(
    candidates: Sequence[tuple[str, ScoredBox]],
    gateway,
    config: RunConfig,
    scene_ref: str = "",
    detector_ids: Optional[Sequence[str]] = None,
    log: Optional[list[str]] = None,
) -> list[ObjectAnchor]:
    """Keep interaction-central object candidates.

    The gateway decides per label; when it is unavailable the configured
    allowlist takes over and the degradation is flagged in the log. Ids
    are assigned left to right over the accepted set.
    """
    if not candidates:
        return []
    labels = [label for label, _ in candidates]
    source = "semantic-filter"
    try:
        decisions = gateway.filter_labels(labels, scene_ref)
    except GatewayError as exc:
        if log is not None:
            log.append(f"objects: gateway filter unavailable ({exc}); allowlist fallback")
        decisions = {
            label: LabelDecision(allowlist_accepts(label, config.object_allowlist))
            for label in labels
        }
        source = "detector"
    accepted = []
    for idx, (label, scored) in enumerate(candidates):
        decision = decisions.get(label)
        if decision is None or not decision.accepted:
            continue
        accepted.append((label, scored, idx, decision.note))
    accepted.sort(key=lambda item: (item[1].box.center.x, item[1].box.center.y, item[0]))
    anchors = []
    for oid, (label, scored, idx, note) in enumerate(accepted, start=1):
        det_id = detector_ids[idx] if detector_ids is not None else None
        anchors.append(
            ObjectAnchor(
                id=f"O{oid}",
                label=label,
                box=scored.box,
                interaction_salience="accepted",
                source=source,
                score=scored.score,
                detector_id=det_id,
                note=note,
            )
        )
    return anchors


def sort_ids(ids) -> list[str]:
    return sorted(ids, key=natural_id_key)
