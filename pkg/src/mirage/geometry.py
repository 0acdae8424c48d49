"""Planar geometry over normalized image coordinates.

Everything here works in a unit square: x is a fraction of image width,
y a fraction of image height, origin at the upper-left corner. All
functions are pure and deterministic, so they are safe for concurrent use.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

BOUNDS_EPS = 1e-6
DIAGONAL = math.sqrt(2.0)

# Octant labels in tie-break order: when a direction falls exactly on a
# sector boundary the label with the smaller index wins.
COMPASS_LABELS = ("E", "NE", "N", "NW", "W", "SW", "S", "SE")

# 17-joint convention emitted by the pose detectors we ingest.
JOINT_NAMES = (
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
)

# Pose models may extrapolate joints slightly off-canvas.
JOINT_MIN = -0.25
JOINT_MAX = 1.25

_ID_TOKEN = re.compile(r"^([A-Za-z]+)(\d+)$")


def natural_id_key(entity_id: Any) -> tuple:
    """Sort key that orders C2 before C10 (prefix, then numeric suffix)."""
    m = _ID_TOKEN.match(str(entity_id))
    if m:
        return (m.group(1), int(m.group(2)))
    return (str(entity_id), -1)


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def distance_to(self, other: "Point") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box anchored at its upper-left corner.

    Sides must be positive and the box must stay inside the unit square
    (up to BOUNDS_EPS). Use :meth:`clamped` when constructing from values
    that may spill over the canvas.
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box sides must be positive: w={self.w}, h={self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"box anchor outside unit square: ({self.x}, {self.y})")
        if self.x + self.w > 1 + BOUNDS_EPS or self.y + self.h > 1 + BOUNDS_EPS:
            raise ValueError(
                f"box escapes unit square: right={self.x + self.w}, bottom={self.y + self.h}"
            )

    @classmethod
    def clamped(cls, x: float, y: float, w: float, h: float) -> "BBox":
        """Clip the given extent to the unit square before validating."""
        x0 = min(max(x, 0.0), 1.0)
        y0 = min(max(y, 0.0), 1.0)
        x1 = min(max(x + w, 0.0), 1.0)
        y1 = min(max(y + h, 0.0), 1.0)
        if x1 - x0 <= 0 or y1 - y0 <= 0:
            raise ValueError(f"box lies entirely off-canvas: ({x}, {y}, {w}, {h})")
        return cls(x0, y0, x1 - x0, y1 - y0)

    @property
    def right(self) -> float:
        return self.x + self.w

    @property
    def bottom(self) -> float:
        return self.y + self.h

    @property
    def center(self) -> Point:
        return Point(self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> float:
        return self.w * self.h

    def contains(self, p: Point) -> bool:
        """Inclusive point-in-box test."""
        return self.x <= p.x <= self.right and self.y <= p.y <= self.bottom

    def contains_box(self, other: "BBox", tol: float = 1e-9) -> bool:
        return (
            self.x <= other.x + tol
            and self.y <= other.y + tol
            and self.right >= other.right - tol
            and self.bottom >= other.bottom - tol
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class ScoredBox:
    box: BBox
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score outside [0, 1]: {self.score}")


@dataclass(frozen=True)
class Ray:
    """Parametric ray: origin + t * direction for t >= 0, unit direction."""

    origin: Point
    direction: Point

    def __post_init__(self) -> None:
        norm = math.hypot(self.direction.x, self.direction.y)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"ray direction must be unit length, got {norm}")

    @classmethod
    def towards(cls, origin: Point, direction: Point) -> "Ray":
        """Build a ray with an unnormalized direction vector."""
        norm = math.hypot(direction.x, direction.y)
        if norm == 0.0:
            raise ValueError("ray direction cannot be zero")
        return cls(origin, Point(direction.x / norm, direction.y / norm))

    def at(self, t: float) -> Point:
        return Point(self.origin.x + t * self.direction.x, self.origin.y + t * self.direction.y)


@dataclass(frozen=True)
class Keypoint:
    point: Point
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"keypoint confidence outside [0, 1]: {self.confidence}")
        if not (JOINT_MIN <= self.point.x <= JOINT_MAX and JOINT_MIN <= self.point.y <= JOINT_MAX):
            raise ValueError(f"keypoint outside plausible canvas range: {self.point}")


@dataclass(frozen=True)
class KeypointSet:
    """Named skeleton joints, each optional, with per-joint confidence."""

    joints: Mapping[str, Keypoint] = field(default_factory=dict)

    def __post_init__(self) -> None:
        unknown = set(self.joints) - set(JOINT_NAMES)
        if unknown:
            raise ValueError(f"unknown joint names: {sorted(unknown)}")

    def get(self, name: str) -> Optional[Keypoint]:
        return self.joints.get(name)

    def confident(self, name: str, threshold: float) -> Optional[Point]:
        kp = self.joints.get(name)
        if kp is not None and kp.confidence >= threshold:
            return kp.point
        return None

    def count_confident(self, threshold: float) -> int:
        return sum(1 for kp in self.joints.values() if kp.confidence >= threshold)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0.0 for disjoint boxes, symmetric."""
    ix = min(a.right, b.right) - max(a.x, b.x)
    iy = min(a.bottom, b.bottom) - max(a.y, b.y)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    # Round-off can push inter a few ulps past the union for identical boxes.
    return min(1.0, inter / (a.area + b.area - inter))


def center_distance(a: BBox, b: BBox) -> float:
    """Distance between box centers, normalized by the image diagonal.

    The diagonal normalizer makes values scale-free: 1.0 means opposite
    canvas corners regardless of aspect ratio.
    """
    return a.center.distance_to(b.center) / DIAGONAL


def compass_sector(angle_deg: float) -> str:
    """Octant label for a direction angle (degrees, 0 = east, 90 = north).

    Sector boundaries sit 22.5 degrees off the axes; a direction exactly
    on a boundary resolves to the smaller sector index in COMPASS_LABELS
    order.
    """
    shifted = ((angle_deg % 360.0) + 22.5) / 45.0
    idx = int(math.floor(shifted))
    if shifted == idx:  # exactly on a sector boundary
        return COMPASS_LABELS[min((idx - 1) % 8, idx % 8)]
    return COMPASS_LABELS[idx % 8]


def relative_position(a: BBox, b: BBox, overlap_iou: float = 0.25) -> str:
    """Compass octant of b's center relative to a's center.

    Returns "overlapping" when the boxes overlap beyond ``overlap_iou``.
    """
    if iou(a, b) > overlap_iou:
        return "overlapping"
    dx = b.center.x - a.center.x
    dy = a.center.y - b.center.y  # flip so that north means "above" on canvas
    return compass_sector(math.degrees(math.atan2(dy, dx)))


def size_ratio(a: BBox, b: BBox) -> float:
    """Area ratio area(a) / area(b)."""
    return a.area / b.area


def union_with_margin(a: BBox, b: BBox, margin: float) -> BBox:
    """Axis-aligned union expanded by margin * union-dimension per side.

    The result is clamped to the unit square.
    """
    if margin < 0:
        raise ValueError(f"margin must be nonnegative: {margin}")
    x0 = min(a.x, b.x)
    y0 = min(a.y, b.y)
    x1 = max(a.right, b.right)
    y1 = max(a.bottom, b.bottom)
    mx = margin * (x1 - x0)
    my = margin * (y1 - y0)
    return BBox.clamped(x0 - mx, y0 - my, (x1 - x0) + 2 * mx, (y1 - y0) + 2 * my)


def ray_box_entry(ray: Ray, box: BBox) -> Optional[float]:
    """Slab-method entry parameter of a ray against a box.

    Returns the smallest t >= 0 where the ray enters the box, or None when
    the ray misses or the box lies behind the origin. Callers that must
    skip boxes containing the origin should test containment first.
    """
    tmin = -math.inf
    tmax = math.inf
    for o, d, lo, hi in (
        (ray.origin.x, ray.direction.x, box.x, box.right),
        (ray.origin.y, ray.direction.y, box.y, box.bottom),
    ):
        if d == 0.0:
            if o < lo or o > hi:
                return None
            continue
        t0 = (lo - o) / d
        t1 = (hi - o) / d
        if t0 > t1:
            t0, t1 = t1, t0
        tmin = max(tmin, t0)
        tmax = min(tmax, t1)
        if tmin > tmax:
            return None
    if tmax < 0.0 or tmin < 0.0:
        return None
    return tmin


def ray_first_hit(
    ray: Ray, targets: Sequence[tuple[Any, BBox]]
) -> Optional[tuple[Any, float]]:
    """First box the ray enters, skipping boxes that contain the origin.

    Returns (target id, entry t) for the minimal entry parameter, breaking
    exact ties toward the smaller id. None when nothing is hit.
    """
    ids = [tid for tid, _ in targets]
    if len(set(ids)) != len(ids):
        raise ValueError("target ids must be unique")
    best: Optional[tuple[float, Any]] = None
    for tid, box in targets:
        if box.contains(ray.origin):
            continue
        t = ray_box_entry(ray, box)
        if t is None:
            continue
        key = (t, natural_id_key(tid), tid)
        if best is None or key < best:
            best = key
    if best is None:
        return None
    return (best[2], best[0])


def nms(boxes: Sequence[ScoredBox], iou_threshold: float) -> list[ScoredBox]:
    """Greedy descending-score non-maximum suppression.

    Output is sorted by descending score (ties keep input order); no
    surviving pair overlaps beyond the threshold. Idempotent.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold outside [0, 1]: {iou_threshold}")
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    kept: list[ScoredBox] = []
    for i in order:
        candidate = boxes[i]
        if all(iou(candidate.box, k.box) <= iou_threshold for k in kept):
            kept.append(candidate)
    return kept
