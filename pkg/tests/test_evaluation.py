from __future__ import annotations

import json
import random
from fractions import Fraction

import pytest

from mirage.document import (
    CharacterBlock,
    GroundingDocument,
    ObjectEntry,
    RelationBlock,
    SceneOverview,
    render,
)
from mirage.evaluation import (
    EvaluationItem,
    ModelAnswer,
    extract_model_answer,
    grade_identity,
    load_manifest,
    report_markdown,
    run_protocol,
    score_direction,
    score_grounding,
    score_identity,
    score_interaction,
)
from mirage.gateway import MockGateway, MockScript, StructuredAnswer, EvidenceRef


def eval_document() -> str:
    doc = GroundingDocument(
        title="Eval Fixture",
        scene=SceneOverview("A study.", "calm", "Two figures.", "Centered on C1."),
        objects=(ObjectEntry("O1", "scroll", ""),),
        characters=(CharacterBlock(id="C1"), CharacterBlock(id="C2")),
        relations=(
            RelationBlock(
                key="R0",
                pair=("C1", "C2"),
                dist=0.120,
                iou=0.050,
                interaction="close proximity",
                cues=(("touching", "C1", "C2"),),
            ),
        ),
    )
    return render(doc)


def item(item_id="i1", existence="yes", itype="touch", direction="C1", evidence=("R0", "C1", "C2")):
    return EvaluationItem(
        item_id=item_id,
        scene_id="s1",
        pair=("C1", "C2"),
        existence=existence,
        interaction_type=itype,
        directionality=direction,
        evidence_refs=tuple(evidence),
    )


def answer(
    item_id="i1",
    identity=1.0,
    existence="yes",
    itype="touch",
    direction="C1",
    evidence=("R0", "C1", "C2"),
    ack=False,
):
    return ModelAnswer(
        item_id=item_id,
        identity_score=identity,
        existence=existence,
        interaction_type=itype,
        directionality=direction,
        evidence_refs=tuple(evidence),
        ambiguity_acknowledged=ack,
    )


class TestItemValidation:
    def test_existence_no_forces_none(self):
        with pytest.raises(ValueError):
            item(existence="no", itype="touch", direction="C1")
        item(existence="no", itype="none", direction="none")

    def test_identity_score_domain(self):
        with pytest.raises(ValueError):
            answer(identity=0.7)


class TestScoreIdentity:
    def test_all_consistent(self):
        assert score_identity([answer(identity=1.0) for _ in range(4)]) == 1

    def test_hand_computed_mean(self):
        answers = [
            answer("i1", identity=1.0),
            answer("i2", identity=1.0),
            answer("i3", identity=0.5),
            answer("i4", identity=0.0),
        ]
        assert score_identity(answers) == Fraction(5, 8)

    def test_all_drifted(self):
        assert score_identity([answer(identity=0.0) for _ in range(3)]) == 0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            score_identity([])


class TestScoreInteraction:
    def test_perfect(self):
        truth = [item("i1"), item("i2")]
        answers = [answer("i1"), answer("i2")]
        assert score_interaction(answers, truth) == 1

    def test_one_wrong_type_of_four(self):
        truth = [item(f"i{k}") for k in range(4)]
        answers = [answer(f"i{k}") for k in range(3)] + [answer("i3", itype="support")]
        assert score_interaction(answers, truth) == Fraction(3, 4)

    def test_all_existence_wrong(self):
        truth = [item(f"i{k}") for k in range(3)]
        answers = [
            answer(f"i{k}", existence="no", itype="none", direction="none") for k in range(3)
        ]
        assert score_interaction(answers, truth) == 0

    def test_ambiguous_truth_accepts_acknowledgment(self):
        truth = [item("i1", existence="ambiguous", itype="shared-attention", direction="none")]
        acknowledged = [answer("i1", existence="yes", ack=True)]
        assert score_interaction(acknowledged, truth) == 1
        unacknowledged = [answer("i1", existence="yes", ack=False)]
        assert score_interaction(unacknowledged, truth) == 0

    def test_misaligned_sets_rejected(self):
        with pytest.raises(ValueError):
            score_interaction([answer("i1")], [item("other")])


class TestScoreDirection:
    def test_all_mutual(self):
        truth = [item(f"i{k}", direction="mutual") for k in range(3)]
        answers = [answer(f"i{k}", direction="mutual") for k in range(3)]
        assert score_direction(answers, truth) == 1

    def test_swapped_initiator_counts_wrong(self):
        truth = [item("i1", direction="C1")]
        answers = [answer("i1", direction="C2")]
        assert score_direction(answers, truth) == 0

    def test_three_of_four(self):
        truth = [item(f"i{k}", direction="C1") for k in range(4)]
        answers = [answer(f"i{k}", direction="C1") for k in range(3)] + [
            answer("i3", direction="mutual")
        ]
        assert score_direction(answers, truth) == Fraction(3, 4)

    def test_scored_only_over_confirmed_items(self):
        truth = [item("i1"), item("i2", existence="no", itype="none", direction="none")]
        answers = [answer("i1"), answer("i2", direction="C2")]
        assert score_direction(answers, truth) == 1


class TestScoreGrounding:
    def test_all_valid_and_acknowledged(self):
        truth = [
            item("i1"),
            item("i2", existence="ambiguous", itype="shared-attention", direction="none"),
        ]
        answers = [answer("i1"), answer("i2", ack=True)]
        evidence, conflict, ground = score_grounding(answers, truth, eval_document())
        assert (evidence, conflict, ground) == (1, 1, 1)

    def test_eq_arithmetic(self):
        # force S_evidence = 0.8 and S_conflict = 0.6 by construction
        truth = [item(f"i{k}") for k in range(4)] + [
            item(f"a{k}", existence="ambiguous", itype="shared-attention", direction="none")
            for k in range(5)
        ]
        answers = [answer(f"i{k}") for k in range(4)]
        answers += [answer(f"a{k}", ack=(k < 3)) for k in range(5)]
        # per-item fractions: all 9 items cite fully valid refs -> 1.0 each
        # except we blank out refs on one item to reduce the mean
        answers[0] = answer("i0", evidence=())
        evidence, conflict, ground = score_grounding(answers, truth, eval_document())
        assert evidence == Fraction(8, 9)
        assert conflict == Fraction(3, 5)
        assert ground == (Fraction(8, 9) + Fraction(3, 5)) / 2

    def test_dangling_ref_reduces_fraction(self):
        truth = [item("i1", evidence=("R0", "C1", "C2", "O1"))]
        answers = [answer("i1", evidence=("R0", "C1", "C2", "O1", "C9"))]
        evidence, _, _ = score_grounding(answers, truth, eval_document())
        assert evidence == Fraction(4, 5)

    def test_valid_but_off_truth_ref_not_counted(self):
        truth = [item("i1", evidence=("R0",))]
        answers = [answer("i1", evidence=("O1",))]  # resolves in doc, not in truth set
        evidence, _, _ = score_grounding(answers, truth, eval_document())
        assert evidence == 0

    def test_order_invariance_and_monotonicity(self):
        rng = random.Random(79)
        truth = [
            item(
                f"i{k}",
                existence=rng.choice(["yes", "ambiguous"]),
                itype=rng.choice(["touch", "shared-attention"]),
                direction=rng.choice(["C1", "C2", "mutual"]),
            )
            if rng.random() < 0.8
            else item(f"i{k}", existence="no", itype="none", direction="none")
            for k in range(12)
        ]
        truth = [
            t if t.existence != "ambiguous" else item(t.item_id, "ambiguous", t.interaction_type, "none")
            for t in truth
        ]
        answers = [
            answer(
                t.item_id,
                identity=rng.choice([1.0, 0.5]),
                existence=t.existence,
                itype=t.interaction_type,
                direction=t.directionality,
                ack=t.existence == "ambiguous",
            )
            for t in truth
        ]
        base = (
            score_identity(answers),
            score_interaction(answers, truth),
            score_direction(answers, truth),
            score_grounding(answers, truth, eval_document()),
        )
        shuffled = answers[:]
        rng.shuffle(shuffled)
        shuffled_truth = truth[:]
        rng.shuffle(shuffled_truth)
        assert (
            score_identity(shuffled),
            score_interaction(shuffled, shuffled_truth),
            score_direction(shuffled, shuffled_truth),
            score_grounding(shuffled, shuffled_truth, eval_document()),
        ) == base
        # flipping one correct answer never raises a score
        victim = next(t for t in truth if t.existence == "yes")
        worse = [
            a
            if a.item_id != victim.item_id
            else answer(a.item_id, identity=0.0, existence="no", itype="none", direction="none")
            for a in answers
        ]
        assert score_identity(worse) <= base[0]
        assert score_interaction(worse, truth) <= base[1]
        assert score_direction(worse, truth) <= base[2]


class TestExtractor:
    def responses(self, claims, evidence_refs=("R0", "C1"), uncertainty=None):
        out = []
        for i, claim in enumerate(claims):
            evidence = (
                tuple(EvidenceRef(r, "cue") for r in evidence_refs) if i == 3 else ()
            )
            out.append(
                StructuredAnswer(claim=claim, evidence=evidence, uncertainty=uncertainty)
            )
        return out

    def test_clean_grounded_answers(self):
        responses = self.responses(
            [
                "Yes, there is a meaningful interaction between C1 and C2.",
                "The most likely interaction is touch between C1 and C2.",
                "C1 initiates the interaction toward C2.",
                "The grounding evidence for C1 and C2 is summarized in the references.",
            ]
        )
        extracted = extract_model_answer(item(), responses, {"C1", "C2"})
        assert extracted.existence == "yes"
        assert extracted.interaction_type == "touch"
        assert extracted.directionality == "C1"
        assert extracted.identity_score == 1.0
        assert extracted.evidence_refs == ("R0", "C1")
        assert not extracted.ambiguity_acknowledged

    def test_collective_claim_scores_half(self):
        responses = self.responses(
            [
                "Yes, there is a meaningful interaction between C1 and C2.",
                "They appear to be in shared attention.",
                "The interaction between C1 and C2 is mutual.",
                "The grounding evidence for C1 and C2 is summarized in the references.",
            ]
        )
        extracted = extract_model_answer(item(), responses, {"C1", "C2"})
        assert extracted.identity_score == 0.5
        assert extracted.interaction_type == "shared-attention"
        assert extracted.directionality == "mutual"

    def test_out_of_scene_reference_scores_zero(self):
        responses = self.responses(
            [
                "Yes, C7 interacts with C2.",
                "The most likely interaction is support between C7 and C2.",
                "C7 initiates the interaction toward C2.",
                "The grounding evidence for C7 and C2 is summarized in the references.",
            ]
        )
        extracted = extract_model_answer(item(), responses, {"C1", "C2"})
        assert extracted.identity_score == 0.0

    def test_swapped_pair_scores_zero(self):
        assert (
            grade_identity(["C3 supports C4."], {"C1", "C2", "C3", "C4"}, ("C1", "C2")) == 0.0
        )

    def test_ambiguity_acknowledged_via_uncertainty(self):
        responses = self.responses(
            [
                "The interaction between C1 and C2 is ambiguous.",
                "The most likely interaction is shared attention between C1 and C2.",
                "No one initiates a directed interaction between C1 and C2.",
                "The grounding evidence for C1 and C2 is summarized in the references.",
            ],
            uncertainty="The cues point both ways.",
        )
        extracted = extract_model_answer(item(), responses, {"C1", "C2"})
        assert extracted.existence == "ambiguous"
        assert extracted.ambiguity_acknowledged


def write_eval_fixture(tmp_path):
    (tmp_path / "scenes").mkdir()
    (tmp_path / "annotations").mkdir()
    (tmp_path / "scenes" / "s1.md").write_text(eval_document(), encoding="utf-8")
    annotations = {
        "schema": "eval-annotations/v1",
        "items": [
            {
                "item_id": "s1-i1",
                "pair": ["C1", "C2"],
                "existence": "yes",
                "type": "touch",
                "directionality": "C1",
                "evidence": ["R0", "C1", "C2"],
            },
            {
                "item_id": "s1-i2",
                "pair": ["C1", "O1"],
                "existence": "ambiguous",
                "type": "shared-attention",
                "directionality": "none",
                "evidence": ["R0", "O1"],
            },
        ],
    }
    (tmp_path / "annotations" / "s1.json").write_text(json.dumps(annotations), encoding="utf-8")
    manifest = {
        "schema": "eval-manifest/v1",
        "scenes": [
            {
                "scene_id": "s1",
                "image_ref": "s1",
                "document": "scenes/s1.md",
                "annotations": "annotations/s1.json",
            }
        ],
    }
    manifest_path = tmp_path / "manifest.json"
    manifest_path.write_text(json.dumps(manifest), encoding="utf-8")
    return manifest_path


def scripted_gateway():
    answers = {
        "grounded": {
            "s1": {
                "C1--C2": {
                    "existence": "yes",
                    "type": "touch",
                    "direction": "C1",
                    "evidence_refs": ["R0", "C1", "C2"],
                },
                "C1--O1": {
                    "existence": "ambiguous",
                    "type": "shared-attention",
                    "direction": "none",
                    "evidence_refs": ["R0", "O1"],
                    "ack": True,
                },
            }
        },
        "baseline": {
            "s1": {
                "C1--C2": {
                    "existence": "yes",
                    "type": "support",
                    "direction": "C2",
                    "evidence_refs": ["C1"],
                    "identity_texture": "collective",
                },
                "C1--O1": {
                    "existence": "no",
                    "type": "none",
                    "direction": "none",
                    "evidence_refs": ["C1"],
                },
            }
        },
    }
    return MockGateway(MockScript(answers=answers))


class TestRunProtocol:
    def test_grounded_scripted_run(self, tmp_path):
        manifest = write_eval_fixture(tmp_path)
        report = run_protocol(manifest, scripted_gateway(), "grounded")
        assert report.n == 2
        assert report.s_identity == 1.0
        assert report.interaction_accuracy == 1.0
        assert report.direction_accuracy == 1.0
        assert report.s_ground == 1.0

    def test_baseline_scripted_run_scores_lower(self, tmp_path):
        manifest = write_eval_fixture(tmp_path)
        report = run_protocol(manifest, scripted_gateway(), "baseline")
        assert report.s_identity == 0.75  # one collective item
        assert report.interaction_accuracy == 0.0  # wrong type; ambiguity missed
        assert report.direction_accuracy == 0.0
        assert report.s_conflict == 0.0

    def test_baseline_never_transmits_document(self, tmp_path):
        manifest = write_eval_fixture(tmp_path)
        gateway = scripted_gateway()
        run_protocol(manifest, gateway, "baseline")
        document = eval_document()
        marker = document.splitlines()[3]  # a content line unique to the document
        for entry in gateway.request_log:
            assert marker not in entry.body
        assert len(gateway.request_log) == 8  # 2 items x 4 questions

    def test_grounded_condition_sends_document(self, tmp_path):
        manifest = write_eval_fixture(tmp_path)
        gateway = scripted_gateway()
        run_protocol(manifest, gateway, "grounded")
        marker = eval_document().splitlines()[3]
        assert all(marker in entry.body for entry in gateway.request_log)

    def test_gateway_failure_excludes_item(self, tmp_path):
        manifest = write_eval_fixture(tmp_path)

        class FlakyGateway(MockGateway):
            def interpret(self, req):
                if "O1" in req.question:
                    from mirage.gateway import GatewayError

                    raise GatewayError("boom")
                return super().interpret(req)

        report = run_protocol(manifest, FlakyGateway(), "grounded")
        assert report.n == 1
        assert len(report.excluded) == 1

    def test_empty_manifest_rejected(self, tmp_path):
        bad = tmp_path / "manifest.json"
        bad.write_text(json.dumps({"schema": "eval-manifest/v1", "scenes": []}))
        with pytest.raises(ValueError):
            load_manifest(bad)

    def test_missing_annotation_file_named(self, tmp_path):
        manifest = tmp_path / "manifest.json"
        manifest.write_text(
            json.dumps(
                {
                    "schema": "eval-manifest/v1",
                    "scenes": [
                        {
                            "scene_id": "s1",
                            "document": "scenes/s1.md",
                            "annotations": "annotations/missing.json",
                        }
                    ],
                }
            )
        )
        (tmp_path / "scenes").mkdir()
        (tmp_path / "scenes" / "s1.md").write_text(eval_document(), encoding="utf-8")
        with pytest.raises(FileNotFoundError) as err:
            load_manifest(manifest)
        assert "missing.json" in str(err.value)


def test_report_markdown_shape():
    from mirage.evaluation import ScoreReport

    report = ScoreReport(
        condition="grounded",
        method="grounded pipeline",
        n=10,
        s_identity=0.9166666,
        interaction_accuracy=0.94,
        direction_accuracy=0.92,
        s_evidence=0.92,
        s_conflict=0.84,
        s_ground=0.88,
    )
    text = report_markdown([report])
    assert "| Method | Identity | Interaction | Direction | Grounding |" in text
    assert "| grounded pipeline | 0.92 | 0.94 | 0.92 | 0.88 |" in text
