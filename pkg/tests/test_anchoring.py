from __future__ import annotations

import random

import pytest

from mirage.anchoring import (
    AnchorDraft,
    BODY_DETECTED,
    BODY_FALLBACK,
    CharacterAnchor,
    FaceAnchor,
    allowlist_accepts,
    assign_ids,
    associate_body,
    association_score,
    build_character_anchors,
    fallback_body,
    filter_faces,
    filter_objects,
)
from mirage.config import RunConfig
from mirage.gateway import FailingGateway, MockGateway
from mirage.geometry import BBox, ScoredBox

from oracles import random_box


def face(x, y, w=0.1, h=0.1, score=0.9) -> ScoredBox:
    return ScoredBox(BBox(x, y, w, h), score)


def exhaustive_associate(anchor: FaceAnchor, bodies):
    """Brute-force constrained argmax used as the association oracle."""
    c = anchor.center
    best = None
    for b in bodies:
        inside = b.box.x <= c.x <= b.box.x + b.box.w
        upper = b.box.y <= c.y <= b.box.y + b.box.h / 2.0
        if not (inside and upper):
            continue
        key = (association_score(anchor, b), b.score, -b.box.x)
        if best is None or key > best[0]:
            best = (key, b)
    return None if best is None else best[1]


class TestFilterFaces:
    def test_all_below_threshold(self):
        raw = [face(0.1, 0.1, score=0.2), face(0.4, 0.1, score=0.1)]
        assert filter_faces(raw, conf_min=0.3, nms_iou=0.45) == []

    def test_single_good_face_kept(self):
        raw = [face(0.4, 0.2)]
        kept = filter_faces(raw, conf_min=0.3, nms_iou=0.45)
        assert len(kept) == 1
        assert kept[0].face == raw[0]

    def test_duplicates_collapse_to_one(self):
        box = BBox(0.4, 0.2, 0.1, 0.1)
        near = BBox(0.41, 0.2, 0.1, 0.1)
        raw = [ScoredBox(box, 0.9), ScoredBox(near, 0.8), ScoredBox(box, 0.7)]
        kept = filter_faces(raw, conf_min=0.3, nms_iou=0.45)
        assert len(kept) == 1
        assert kept[0].face.score == 0.9

    def test_implausible_aspect_dropped(self):
        wide = face(0.2, 0.2, w=0.3, h=0.05)  # aspect 6
        assert filter_faces([wide], conf_min=0.3, nms_iou=0.45) == []

    def test_oversized_area_dropped(self):
        big = face(0.1, 0.1, w=0.6, h=0.6)  # over a quarter of the canvas
        assert filter_faces([big], conf_min=0.3, nms_iou=0.45) == []

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            filter_faces([], conf_min=1.5, nms_iou=0.45)


class TestAssociateBody:
    def test_lower_half_violates_constraint(self):
        anchor = FaceAnchor(face(0.45, 0.55))  # center (0.5, 0.6)
        body = ScoredBox(BBox(0.4, 0.2, 0.2, 0.6), 0.9)  # upper half ends at y=0.5
        assert associate_body(anchor, [body]) is None

    def test_single_valid_body(self):
        anchor = FaceAnchor(face(0.45, 0.2))
        body = ScoredBox(BBox(0.4, 0.2, 0.2, 0.6), 0.9)
        assert associate_body(anchor, [body]) == body

    def test_two_candidates_match_argmax(self):
        anchor = FaceAnchor(face(0.45, 0.22))
        bodies = [
            ScoredBox(BBox(0.38, 0.2, 0.25, 0.6), 0.8),
            ScoredBox(BBox(0.42, 0.18, 0.18, 0.65), 0.7),
        ]
        assert associate_body(anchor, bodies) == exhaustive_associate(anchor, bodies)

    def test_matches_exhaustive_search_on_random_fixtures(self):
        rng = random.Random(23)
        for _ in range(500):
            face_box = random_box(rng, 0.03, 0.12)
            anchor = FaceAnchor(ScoredBox(face_box, rng.uniform(0.3, 1.0)))
            bodies = [
                ScoredBox(random_box(rng, 0.1, 0.5), round(rng.uniform(0.1, 1.0), 2))
                for _ in range(rng.randint(0, 6))
            ]
            assert associate_body(anchor, bodies) == exhaustive_associate(anchor, bodies)


class TestFallbackBody:
    def test_expansion_factors(self):
        anchor = FaceAnchor(face(0.45, 0.1))
        body = fallback_body(anchor)
        assert body.x == pytest.approx(0.35)
        assert body.y == pytest.approx(0.1)
        assert body.w == pytest.approx(0.3)
        assert body.h == pytest.approx(0.6)

    def test_clamped_at_bottom_edge(self):
        anchor = FaceAnchor(face(0.45, 0.85))
        body = fallback_body(anchor)
        assert body.bottom == pytest.approx(1.0)
        assert body.contains(anchor.center)

    def test_always_satisfies_anchor_invariants(self):
        rng = random.Random(29)
        for _ in range(500):
            face_box = random_box(rng, 0.02, 0.15)
            anchor = FaceAnchor(ScoredBox(face_box, 0.9))
            body = fallback_body(anchor)
            # constructor validates containment and the upper-half rule
            CharacterAnchor(id="C1", face=anchor, body=body, body_source=BODY_FALLBACK)


class TestAssignIds:
    def test_single_figure(self):
        draft = AnchorDraft(FaceAnchor(face(0.4, 0.2)), BBox(0.3, 0.2, 0.3, 0.6), BODY_DETECTED)
        anchors = assign_ids([draft])
        assert [a.id for a in anchors] == ["C1"]

    def test_left_to_right(self):
        left = AnchorDraft(FaceAnchor(face(0.1, 0.2)), BBox(0.05, 0.2, 0.3, 0.6), BODY_DETECTED)
        right = AnchorDraft(FaceAnchor(face(0.7, 0.2)), BBox(0.65, 0.2, 0.3, 0.6), BODY_DETECTED)
        anchors = assign_ids([right, left])
        assert anchors[0].face.center.x < anchors[1].face.center.x
        assert [a.id for a in anchors] == ["C1", "C2"]

    def test_equal_x_breaks_by_y(self):
        upper = AnchorDraft(FaceAnchor(face(0.4, 0.1)), BBox(0.3, 0.1, 0.3, 0.6), BODY_DETECTED)
        lower = AnchorDraft(FaceAnchor(face(0.4, 0.4)), BBox(0.3, 0.4, 0.3, 0.55), BODY_DETECTED)
        anchors = assign_ids([lower, upper])
        assert anchors[0].face.center.y < anchors[1].face.center.y

    def test_permutation_invariant(self):
        rng = random.Random(31)
        drafts = []
        for _ in range(6):
            fb = random_box(rng, 0.03, 0.08)
            body = fallback_body(FaceAnchor(ScoredBox(fb, 0.9)))
            drafts.append(AnchorDraft(FaceAnchor(ScoredBox(fb, 0.9)), body, BODY_FALLBACK))
        baseline = assign_ids(drafts)
        for _ in range(10):
            shuffled = drafts[:]
            rng.shuffle(shuffled)
            assert assign_ids(shuffled) == baseline


class TestFilterObjects:
    def candidates(self):
        return [
            ("tomb_inscription", ScoredBox(BBox(0.45, 0.3, 0.1, 0.1), 0.8)),
            ("cloud_texture", ScoredBox(BBox(0.1, 0.05, 0.2, 0.1), 0.6)),
            ("staff", ScoredBox(BBox(0.7, 0.4, 0.05, 0.4), 0.7)),
        ]

    def test_mock_accepting_all(self, config):
        gateway = MockGateway()
        gateway.script.objects  # default allowlist path
        anchors = filter_objects(self.candidates(), gateway, config)
        assert [a.label for a in anchors] == ["tomb_inscription", "staff"]
        assert [a.id for a in anchors] == ["O1", "O2"]
        assert all(a.interaction_salience == "accepted" for a in anchors)
        assert all(a.source == "semantic-filter" for a in anchors)

    def test_allowlist_fallback_on_gateway_failure(self, config):
        log = []
        anchors = filter_objects(self.candidates(), FailingGateway(), config, log=log)
        assert [a.label for a in anchors] == ["tomb_inscription", "staff"]
        assert all(a.source == "detector" for a in anchors)
        assert any("allowlist" in line for line in log)

    def test_empty_candidates(self, config):
        assert filter_objects([], MockGateway(), config) == []

    def test_ids_assigned_left_to_right(self, config):
        candidates = [
            ("staff", ScoredBox(BBox(0.7, 0.4, 0.05, 0.4), 0.7)),
            ("tomb", ScoredBox(BBox(0.1, 0.3, 0.3, 0.4), 0.9)),
        ]
        anchors = filter_objects(candidates, MockGateway(), config)
        assert [(a.id, a.label) for a in anchors] == [("O1", "tomb"), ("O2", "staff")]

    def test_allowlist_matches_compound_labels(self):
        assert allowlist_accepts("tomb_inscription", ("tomb",))
        assert allowlist_accepts("shepherds_staff", ("staff",))
        assert not allowlist_accepts("cloud_texture", ("tomb", "staff"))


class TestBuildCharacterAnchors:
    def test_detected_and_fallback_mix(self, config):
        faces = [face(0.15, 0.2), face(0.6, 0.15)]
        bodies = [ScoredBox(BBox(0.1, 0.18, 0.2, 0.6), 0.85)]  # only covers the first face
        anchors = build_character_anchors(faces, bodies, config)
        assert [a.id for a in anchors] == ["C1", "C2"]
        assert anchors[0].body_source == BODY_DETECTED
        assert anchors[0].body_index == 0
        assert anchors[1].body_source == BODY_FALLBACK
        assert anchors[1].body_index is None

    def test_every_anchor_satisfies_head_location_constraint(self, config):
        rng = random.Random(37)
        for _ in range(200):
            faces = [
                ScoredBox(random_box(rng, 0.03, 0.1), rng.uniform(0.4, 1.0))
                for _ in range(rng.randint(1, 5))
            ]
            bodies = [
                ScoredBox(random_box(rng, 0.1, 0.5), rng.uniform(0.3, 1.0))
                for _ in range(rng.randint(0, 5))
            ]
            for anchor in build_character_anchors(faces, bodies, config):
                c = anchor.face.center
                assert anchor.body.contains(c)
                assert c.y <= anchor.body.y + anchor.body.h / 2.0
