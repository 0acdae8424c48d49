"""Character-centric grounding: pose abstraction, rays, and profiles.

Keypoints are abstracted into posture, orientation, and candidate
pointing/gaze rays. Pose signals are emitted only when the body region
was actually detected and enough joints are confident; fallback bodies
never carry pose, so no unsupported geometry propagates downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .anchoring import BODY_DETECTED, CharacterAnchor, ObjectAnchor
from .config import RunConfig
from .gateway import GatewayError
from .geometry import (
    BBox,
    KeypointSet,
    Point,
    Ray,
    center_distance,
    natural_id_key,
    ray_first_hit,
)

POSTURES = ("standing", "seated", "kneeling", "crouching", "reclining", "unknown")
ORIENTATIONS = ("facing-left", "facing-right", "frontal", "away", "unknown")
ARM_SIDES = ("left", "right")

PROVENANCE_GEOMETRY = "geometry"
PROVENANCE_SEMANTIC = "semantic"

# Semantic attribute keys a gateway may fill on a profile.
APPEARANCE_KEYS = (
    "role",
    "posture",
    "body_language",
    "expression",
    "object_interaction",
    "attention_direction",
    "pointing_target",
    "note",
)


@dataclass(frozen=True)
class RayTarget:
    ray: Ray
    target: Optional[str] = None


@dataclass(frozen=True)
class PoseAbstraction:
    posture: str
    orientation: str
    pointing: Mapping[str, RayTarget] = field(default_factory=dict)  # keyed by arm side
    gaze: Optional[RayTarget] = None

    def __post_init__(self) -> None:
        if self.posture not in POSTURES:
            raise ValueError(f"unknown posture: {self.posture}")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"unknown orientation: {self.orientation}")


@dataclass(frozen=True)
class SpatialAttributes:
    horizontal: str  # left | center | right image third
    vertical: str  # top | middle | bottom image third
    center: Point


@dataclass(frozen=True)
class SemanticAttribute:
    value: str
    provenance: str  # geometry | semantic


@dataclass(frozen=True)
class CharacterProfile:
    id: str
    body: BBox
    face: BBox
    body_source: str
    spatial: SpatialAttributes
    appearance: Mapping[str, SemanticAttribute] = field(default_factory=dict)
    neighborhood: tuple[str, ...] = ()
    pose: Optional[PoseAbstraction] = None
    keypoints: Optional[KeypointSet] = None

    def semantic(self, key: str) -> Optional[str]:
        attr = self.appearance.get(key)
        return attr.value if attr is not None else None


def _midpoint(kps: KeypointSet, joint: str, threshold: float) -> Optional[Point]:
    """Midpoint of left/right joints; single side if only one is confident."""
    pts = [
        p
        for p in (
            kps.confident(f"left_{joint}", threshold),
            kps.confident(f"right_{joint}", threshold),
        )
        if p is not None
    ]
    if not pts:
        return None
    return Point(sum(p.x for p in pts) / len(pts), sum(p.y for p in pts) / len(pts))


def _angle_deg(a: Point, vertex: Point, c: Point) -> Optional[float]:
    """Interior angle at `vertex` between segments to a and c."""
    v1 = (a.x - vertex.x, a.y - vertex.y)
    v2 = (c.x - vertex.x, c.y - vertex.y)
    n1 = math.hypot(*v1)
    n2 = math.hypot(*v2)
    if n1 == 0.0 or n2 == 0.0:
        return None
    cos = max(-1.0, min(1.0, (v1[0] * v2[0] + v1[1] * v2[1]) / (n1 * n2)))
    return math.degrees(math.acos(cos))


def _knee_angles(kps: KeypointSet, threshold: float) -> list[float]:
    angles = []
    for side in ARM_SIDES:
        hip = kps.confident(f"{side}_hip", threshold)
        knee = kps.confident(f"{side}_knee", threshold)
        ankle = kps.confident(f"{side}_ankle", threshold)
        if hip and knee and ankle:
            angle = _angle_deg(hip, knee, ankle)
            if angle is not None:
                angles.append(angle)
    return angles


def _leg_lengths(kps: KeypointSet, threshold: float) -> list[float]:
    """Per-side hip-knee-ankle path lengths (folded legs stay long)."""
    lengths = []
    for side in ARM_SIDES:
        hip = kps.confident(f"{side}_hip", threshold)
        knee = kps.confident(f"{side}_knee", threshold)
        ankle = kps.confident(f"{side}_ankle", threshold)
        if hip and knee and ankle:
            lengths.append(hip.distance_to(knee) + knee.distance_to(ankle))
    return lengths


def _torso_angle_from_horizontal(shoulders: Point, hips: Point) -> Optional[float]:
    dx = shoulders.x - hips.x
    dy = shoulders.y - hips.y
    if dx == 0.0 and dy == 0.0:
        return None
    return math.degrees(math.atan2(abs(dy), abs(dx)))


def classify_posture(kps: Optional[KeypointSet], config: RunConfig) -> str:
    """Rule cascade over joint angles and extents.

    Rules fire in order (seated, kneeling, crouching, reclining); a rule
    whose joints are missing is skipped. Falls back to "standing" when a
    torso is measurable, otherwise "unknown". Total and deterministic.
    """
    thr = config.keypoint_conf_min
    if kps is None or kps.count_confident(thr) < config.min_pose_joints:
        return "unknown"
    shoulders = _midpoint(kps, "shoulder", thr)
    hips = _midpoint(kps, "hip", thr)
    knees = _midpoint(kps, "knee", thr)
    ankles = _midpoint(kps, "ankle", thr)
    torso_angle = (
        _torso_angle_from_horizontal(shoulders, hips) if shoulders and hips else None
    )
    upright = torso_angle is not None and torso_angle >= 90.0 - config.torso_tilt_deg

    knee_angles = _knee_angles(kps, thr)
    if hips and knees and knee_angles:
        if hips.y > knees.y and min(knee_angles) < config.seated_knee_angle_deg:
            return "seated"

    if upright:
        for side in ARM_SIDES:
            knee = kps.confident(f"{side}_knee", thr)
            ankle = kps.confident(f"{side}_ankle", thr)
            if knee and ankle and abs(knee.y - ankle.y) <= config.kneeling_ankle_tol:
                return "kneeling"

    leg_lengths = _leg_lengths(kps, thr)
    if shoulders and hips and ankles and leg_lengths:
        torso_len = shoulders.distance_to(hips)
        leg_len = sum(leg_lengths) / len(leg_lengths)
        hips_low = hips.y > (shoulders.y + ankles.y) / 2.0
        if leg_len > 0 and torso_len / leg_len < config.crouch_torso_leg_ratio and hips_low:
            return "crouching"

    if torso_angle is not None and torso_angle < config.torso_tilt_deg:
        return "reclining"

    if shoulders and hips:
        return "standing"
    return "unknown"


def pointing_ray(kps: KeypointSet, side: str, config: RunConfig) -> Optional[Ray]:
    """Arm ray: origin at the wrist, direction along shoulder-to-wrist.

    None when either joint is missing or the arm is foreshortened below
    the minimum extent.
    """
    if side not in ARM_SIDES:
        raise ValueError(f"side must be left or right, got {side}")
    thr = config.keypoint_conf_min
    shoulder = kps.confident(f"{side}_shoulder", thr)
    wrist = kps.confident(f"{side}_wrist", thr)
    if shoulder is None or wrist is None:
        return None
    if wrist.distance_to(shoulder) < config.arm_min_extent:
        return None
    return Ray.towards(wrist, Point(wrist.x - shoulder.x, wrist.y - shoulder.y))


def gaze_ray(kps: KeypointSet, face: BBox, config: RunConfig) -> Optional[Ray]:
    """In-plane gaze from face keypoints: eye midpoint toward the nose.

    Symmetric eyes about the nose indicate a frontal gaze with no
    in-plane target, so None is returned. origin is the face center.
    """
    thr = config.keypoint_conf_min
    nose = kps.confident("nose", thr)
    left = kps.confident("left_eye", thr)
    right = kps.confident("right_eye", thr)
    eyes = [p for p in (left, right) if p is not None]
    if nose is None or not eyes:
        return None
    mid = Point(sum(p.x for p in eyes) / len(eyes), sum(p.y for p in eyes) / len(eyes))
    if left is not None and right is not None:
        inter_eye = left.distance_to(right)
        if inter_eye > 0:
            axis = Point((right.x - left.x) / inter_eye, (right.y - left.y) / inter_eye)
            asym = (nose.x - mid.x) * axis.x + (nose.y - mid.y) * axis.y
            if abs(asym) < config.gaze_symmetry_ratio * inter_eye:
                return None
    direction = Point(nose.x - mid.x, nose.y - mid.y)
    if math.hypot(direction.x, direction.y) < 1e-9:
        return None
    return Ray.towards(face.center, direction)


def classify_orientation(kps: KeypointSet, config: RunConfig) -> str:
    thr = config.keypoint_conf_min
    nose = kps.confident("nose", thr)
    left = kps.confident("left_eye", thr)
    right = kps.confident("right_eye", thr)
    eyes = [p for p in (left, right) if p is not None]
    if nose is not None and eyes:
        mid = Point(sum(p.x for p in eyes) / len(eyes), sum(p.y for p in eyes) / len(eyes))
        if left is not None and right is not None:
            inter_eye = left.distance_to(right)
            if inter_eye > 0:
                axis = Point((right.x - left.x) / inter_eye, (right.y - left.y) / inter_eye)
                asym = (nose.x - mid.x) * axis.x + (nose.y - mid.y) * axis.y
                if abs(asym) < config.gaze_symmetry_ratio * inter_eye:
                    return "frontal"
        dx = nose.x - mid.x
        if dx < 0:
            return "facing-left"
        if dx > 0:
            return "facing-right"
        return "frontal"
    if nose is None and _midpoint(kps, "shoulder", thr) is not None:
        return "away"
    return "unknown"


def resolve_targets(
    self_id: str,
    pointing: Mapping[str, Ray],
    gaze: Optional[Ray],
    characters: Sequence[CharacterAnchor],
    objects: Sequence[ObjectAnchor],
    posture: str,
    orientation: str,
) -> PoseAbstraction:
    """Resolve each ray to its first intersected character or object.

    The emitting character's own body is excluded; rays that hit nothing
    keep their direction with target None.
    """
    targets = [(c.id, c.body) for c in characters if c.id != self_id]
    targets += [(o.id, o.box) for o in objects]

    def resolve(ray: Ray) -> RayTarget:
        hit = ray_first_hit(ray, targets)
        return RayTarget(ray, hit[0] if hit else None)

    return PoseAbstraction(
        posture=posture,
        orientation=orientation,
        pointing={side: resolve(ray) for side, ray in pointing.items()},
        gaze=resolve(gaze) if gaze is not None else None,
    )


def spatial_attributes(body: BBox) -> SpatialAttributes:
    c = body.center
    horizontal = "left" if c.x < 1 / 3 else ("center" if c.x < 2 / 3 else "right")
    vertical = "top" if c.y < 1 / 3 else ("middle" if c.y < 2 / 3 else "bottom")
    return SpatialAttributes(horizontal, vertical, c)


def pose_supported(anchor: CharacterAnchor, kps: Optional[KeypointSet], config: RunConfig) -> bool:
    """Gate for pose inference: detected body plus enough confident joints."""
    return (
        anchor.body_source == BODY_DETECTED
        and kps is not None
        and kps.count_confident(config.keypoint_conf_min) >= config.min_pose_joints
    )


def build_profile(
    anchor: CharacterAnchor,
    keypoints: Optional[KeypointSet],
    characters: Sequence[CharacterAnchor],
    objects: Sequence[ObjectAnchor],
    gateway,
    config: RunConfig,
    image_ref: str = "",
    log: Optional[list[str]] = None,
) -> CharacterProfile:
    """Assemble the full per-character profile.

    Pose is omitted for fallback bodies or thin keypoint support. Gateway
    enrichment fills semantic attributes; on gateway failure the profile
    stays valid in geometry-only mode with a logged warning.
    """
    pose = None
    kept_keypoints = keypoints if anchor.body_source == BODY_DETECTED else None
    if pose_supported(anchor, kept_keypoints, config):
        rays = {}
        for side in ARM_SIDES:
            ray = pointing_ray(kept_keypoints, side, config)
            if ray is not None:
                rays[side] = ray
        gaze = gaze_ray(kept_keypoints, anchor.face.face.box, config)
        pose = resolve_targets(
            anchor.id,
            rays,
            gaze,
            characters,
            objects,
            posture=classify_posture(kept_keypoints, config),
            orientation=classify_orientation(kept_keypoints, config),
        )

    neighborhood = tuple(
        sorted(
            (
                other.id
                for other in characters
                if other.id != anchor.id
                and center_distance(anchor.body, other.body) < config.proximity_close
            ),
            key=natural_id_key,
        )
    )

    draft = CharacterProfile(
        id=anchor.id,
        body=anchor.body,
        face=anchor.face.face.box,
        body_source=anchor.body_source,
        spatial=spatial_attributes(anchor.body),
        neighborhood=neighborhood,
        pose=pose,
        keypoints=kept_keypoints,
    )

    appearance: dict[str, SemanticAttribute] = {}
    try:
        attrs = gateway.enrich_character(
            draft,
            crops={"face": draft.face, "body": draft.body},
            image_ref=image_ref,
        )
    except GatewayError as exc:
        if log is not None:
            log.append(f"enrichment: gateway unavailable for {anchor.id} ({exc}); geometry-only")
        attrs = {}
    for key, value in attrs.items():
        if key not in APPEARANCE_KEYS:
            continue
        if value:
            appearance[key] = SemanticAttribute(value=value, provenance=PROVENANCE_SEMANTIC)

    return CharacterProfile(
        id=draft.id,
        body=draft.body,
        face=draft.face,
        body_source=draft.body_source,
        spatial=draft.spatial,
        appearance=appearance,
        neighborhood=draft.neighborhood,
        pose=draft.pose,
        keypoints=draft.keypoints,
    )
