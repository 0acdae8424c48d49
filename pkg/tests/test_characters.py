from __future__ import annotations

import math
import random

import pytest

from mirage.anchoring import (
    BODY_DETECTED,
    BODY_FALLBACK,
    CharacterAnchor,
    FaceAnchor,
    ObjectAnchor,
)
from mirage.characters import (
    build_profile,
    classify_orientation,
    classify_posture,
    gaze_ray,
    pointing_ray,
    resolve_targets,
    spatial_attributes,
)
from mirage.gateway import FailingGateway, MockGateway
from mirage.geometry import BBox, Keypoint, KeypointSet, Point, Ray, ScoredBox

from skeletons import (
    crouching_skeleton,
    kneeling_skeleton,
    kps,
    reclining_skeleton,
    seated_skeleton,
    standing_skeleton,
)


def make_anchor(cid="C1", face_box=None, body=None, source=BODY_DETECTED, body_index=0):
    face_box = face_box or BBox(0.45, 0.18, 0.1, 0.08)
    body = body or BBox(0.35, 0.18, 0.3, 0.75)
    return CharacterAnchor(
        id=cid,
        face=FaceAnchor(ScoredBox(face_box, 0.9)),
        body=body,
        body_source=source,
        body_index=body_index if source == BODY_DETECTED else None,
    )


class TestClassifyPosture:
    def test_standing(self, config):
        assert classify_posture(standing_skeleton(), config) == "standing"

    def test_seated(self, config):
        assert classify_posture(seated_skeleton(), config) == "seated"

    def test_kneeling(self, config):
        assert classify_posture(kneeling_skeleton(), config) == "kneeling"

    def test_crouching(self, config):
        assert classify_posture(crouching_skeleton(), config) == "crouching"

    def test_reclining(self, config):
        assert classify_posture(reclining_skeleton(), config) == "reclining"

    def test_too_few_joints_is_unknown(self, config):
        sparse = kps({"nose": (0.5, 0.2), "left_eye": (0.48, 0.19), "left_hip": (0.47, 0.5)})
        assert classify_posture(sparse, config) == "unknown"

    def test_missing_torso_is_unknown(self, config):
        legs_only = kps(
            {
                "left_knee": (0.45, 0.7),
                "right_knee": (0.55, 0.7),
                "left_ankle": (0.45, 0.9),
                "right_ankle": (0.55, 0.9),
                "left_elbow": (0.4, 0.45),
                "right_elbow": (0.6, 0.45),
            }
        )
        assert classify_posture(legs_only, config) == "unknown"

    def test_none_is_unknown(self, config):
        assert classify_posture(None, config) == "unknown"

    def test_deterministic(self, config):
        sk = standing_skeleton()
        assert all(classify_posture(sk, config) == "standing" for _ in range(5))


class TestPointingRay:
    def test_axis_aligned(self, config):
        sk = kps({"left_shoulder": (0.5, 0.5), "left_wrist": (0.6, 0.5)})
        ray = pointing_ray(sk, "left", config)
        assert ray.origin == Point(0.6, 0.5)
        assert ray.direction.x == pytest.approx(1.0)
        assert ray.direction.y == pytest.approx(0.0)

    def test_foreshortened_arm_gives_none(self, config):
        sk = kps({"left_shoulder": (0.5, 0.5), "left_wrist": (0.5, 0.5)})
        assert pointing_ray(sk, "left", config) is None

    def test_diagonal_direction(self, config):
        sk = kps({"right_shoulder": (0.5, 0.5), "right_wrist": (0.6, 0.4)})
        ray = pointing_ray(sk, "right", config)
        assert ray.direction.x == pytest.approx(math.sqrt(0.5), abs=1e-9)
        assert ray.direction.y == pytest.approx(-math.sqrt(0.5), abs=1e-9)

    def test_missing_joint_gives_none(self, config):
        sk = kps({"left_shoulder": (0.5, 0.5)})
        assert pointing_ray(sk, "left", config) is None

    def test_low_confidence_joint_gives_none(self, config):
        sk = KeypointSet(
            {
                "left_shoulder": Keypoint(Point(0.5, 0.5), 0.9),
                "left_wrist": Keypoint(Point(0.6, 0.5), 0.1),
            }
        )
        assert pointing_ray(sk, "left", config) is None

    def test_invalid_side_rejected(self, config):
        with pytest.raises(ValueError):
            pointing_ray(kps({}), "up", config)

    def test_direction_parallel_to_shoulder_wrist(self, config):
        rng = random.Random(41)
        for _ in range(300):
            sx, sy = rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)
            wx, wy = rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)
            sk = kps({"left_shoulder": (sx, sy), "left_wrist": (wx, wy)})
            ray = pointing_ray(sk, "left", config)
            norm = math.hypot(wx - sx, wy - sy)
            if norm < config.arm_min_extent:
                assert ray is None
                continue
            cosine = (ray.direction.x * (wx - sx) + ray.direction.y * (wy - sy)) / norm
            assert cosine >= 1.0 - 1e-9


class TestGazeRay:
    FACE = BBox(0.45, 0.25, 0.1, 0.1)

    def test_rightward_gaze(self, config):
        sk = kps({"nose": (0.52, 0.31), "left_eye": (0.48, 0.3), "right_eye": (0.52, 0.3)})
        ray = gaze_ray(sk, self.FACE, config)
        assert ray is not None
        assert ray.origin == self.FACE.center
        assert ray.direction.x > 0

    def test_symmetric_eyes_are_frontal(self, config):
        sk = kps({"nose": (0.5, 0.32), "left_eye": (0.48, 0.3), "right_eye": (0.52, 0.3)})
        assert gaze_ray(sk, self.FACE, config) is None

    def test_missing_eyes_gives_none(self, config):
        sk = kps({"nose": (0.5, 0.3)})
        assert gaze_ray(sk, self.FACE, config) is None

    def test_single_eye_supported(self, config):
        sk = kps({"nose": (0.52, 0.31), "left_eye": (0.48, 0.3)})
        ray = gaze_ray(sk, self.FACE, config)
        assert ray is not None
        assert ray.direction.x > 0


class TestOrientation:
    def test_frontal(self, config):
        sk = kps({"nose": (0.5, 0.32), "left_eye": (0.48, 0.3), "right_eye": (0.52, 0.3)})
        assert classify_orientation(sk, config) == "frontal"

    def test_facing_right(self, config):
        sk = kps({"nose": (0.53, 0.31), "left_eye": (0.48, 0.3), "right_eye": (0.52, 0.3)})
        assert classify_orientation(sk, config) == "facing-right"

    def test_facing_left(self, config):
        sk = kps({"nose": (0.47, 0.31), "left_eye": (0.48, 0.3), "right_eye": (0.52, 0.3)})
        assert classify_orientation(sk, config) == "facing-left"

    def test_away_when_face_hidden(self, config):
        sk = kps({"left_shoulder": (0.45, 0.3), "right_shoulder": (0.55, 0.3)})
        assert classify_orientation(sk, config) == "away"

    def test_unknown_without_signal(self, config):
        assert classify_orientation(kps({"left_elbow": (0.4, 0.5)}), config) == "unknown"


class TestResolveTargets:
    def test_nearer_object_beats_farther_character(self):
        ray = Ray(Point(0.2, 0.5), Point(1.0, 0.0))
        characters = [
            make_anchor("C1", body=BBox(0.1, 0.2, 0.2, 0.6), face_box=BBox(0.15, 0.2, 0.1, 0.08)),
            make_anchor("C2", body=BBox(0.7, 0.2, 0.2, 0.6), face_box=BBox(0.75, 0.2, 0.1, 0.08)),
        ]
        objects = [
            ObjectAnchor("O1", "staff", BBox(0.4, 0.4, 0.1, 0.3), "accepted", "semantic-filter")
        ]
        pose = resolve_targets("C1", {"right": ray}, None, characters, objects, "standing", "frontal")
        assert pose.pointing["right"].target == "O1"

    def test_unresolved_ray_keeps_direction(self):
        ray = Ray(Point(0.5, 0.1), Point(0.0, -1.0))
        pose = resolve_targets("C1", {"left": ray}, None, [make_anchor("C1")], [], "unknown", "unknown")
        assert pose.pointing["left"].target is None
        assert pose.pointing["left"].ray == ray

    def test_self_body_excluded(self):
        anchor = make_anchor("C1", body=BBox(0.3, 0.2, 0.4, 0.7))
        ray = Ray(Point(0.5, 0.5), Point(1.0, 0.0))  # starts inside own body
        other = make_anchor("C2", body=BBox(0.8, 0.3, 0.15, 0.5), face_box=BBox(0.82, 0.3, 0.08, 0.07))
        pose = resolve_targets("C1", {}, ray, [anchor, other], [], "standing", "frontal")
        assert pose.gaze.target == "C2"


class TestSpatialAttributes:
    def test_thirds(self):
        sp = spatial_attributes(BBox(0.0, 0.0, 0.2, 0.2))  # center (0.1, 0.1)
        assert (sp.horizontal, sp.vertical) == ("left", "top")
        sp = spatial_attributes(BBox(0.4, 0.4, 0.2, 0.2))
        assert (sp.horizontal, sp.vertical) == ("center", "middle")
        sp = spatial_attributes(BBox(0.75, 0.75, 0.2, 0.2))
        assert (sp.horizontal, sp.vertical) == ("right", "bottom")


class TestBuildProfile:
    def scene(self):
        c1 = make_anchor("C1", body=BBox(0.1, 0.2, 0.25, 0.7), face_box=BBox(0.17, 0.2, 0.09, 0.08))
        c2 = make_anchor(
            "C2",
            body=BBox(0.3, 0.2, 0.25, 0.7),
            face_box=BBox(0.37, 0.2, 0.09, 0.08),
            source=BODY_FALLBACK,
            body_index=None,
        )
        objects = [
            ObjectAnchor("O1", "staff", BBox(0.8, 0.3, 0.06, 0.4), "accepted", "semantic-filter")
        ]
        return c1, c2, objects

    def test_fallback_body_carries_no_pose(self, config):
        c1, c2, objects = self.scene()
        profile = build_profile(c2, standing_skeleton(), [c1, c2], objects, MockGateway(), config)
        assert profile.pose is None
        assert profile.keypoints is None

    def test_detected_body_with_full_skeleton(self, config):
        c1, c2, objects = self.scene()
        profile = build_profile(c1, standing_skeleton(), [c1, c2], objects, MockGateway(), config)
        assert profile.pose is not None
        assert profile.pose.posture == "standing"
        assert profile.appearance["posture"].value == "standing"
        assert profile.appearance["posture"].provenance == "semantic"
        assert "C2" in profile.neighborhood

    def test_thin_keypoint_support_disables_pose(self, config):
        c1, c2, objects = self.scene()
        sparse = kps({"nose": (0.2, 0.22), "left_eye": (0.19, 0.21), "left_hip": (0.2, 0.5)})
        profile = build_profile(c1, sparse, [c1, c2], objects, MockGateway(), config)
        assert profile.pose is None
        assert profile.keypoints is sparse  # raw substrate kept for contact checks

    def test_gateway_down_degrades_to_geometry_only(self, config):
        c1, c2, objects = self.scene()
        log = []
        profile = build_profile(
            c1, standing_skeleton(), [c1, c2], objects, FailingGateway(), config, log=log
        )
        assert profile.appearance == {}
        assert profile.pose is not None
        assert any("geometry-only" in line for line in log)
