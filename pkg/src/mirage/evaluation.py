"""Evaluation protocol: annotations, metrics, and the question runner.

Four metrics are produced per condition: identity stability (mean of
per-item scores in {1, 0.5, 0}), interaction accuracy (existence and type
jointly correct), direction accuracy (initiator labels over items whose
ground truth confirms an interaction), and a grounding-aware score that
averages evidence validity with ambiguity acknowledgment. All scoring
runs in exact rational arithmetic; floats appear only in reports.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from .document import parse as parse_document
from .gateway import (
    GatewayError,
    InterpretationRequest,
    Q_DIRECTION,
    Q_EVIDENCE,
    Q_EXISTENCE,
    Q_TYPE,
    StructuredAnswer,
)

MANIFEST_SCHEMA = "eval-manifest/v1"
ANNOTATIONS_SCHEMA = "eval-annotations/v1"
REPORT_SCHEMA = "score-report/v1"

EXISTENCE_VALUES = ("yes", "no", "ambiguous")
INTERACTION_TYPES = ("support", "guidance", "shared-attention", "touch", "pointing", "none")
CONDITIONS = ("baseline", "grounded")

IDENTITY_SCORES = (1.0, 0.5, 0.0)

_CHAR_REF = re.compile(r"\b(C\d+)\b")
_COLLECTIVE = re.compile(r"\bthey\b|\bthem\b|both figures|the figures|the group|the pair")


@dataclass(frozen=True)
class EvaluationItem:
    item_id: str
    scene_id: str
    pair: tuple[str, str]
    existence: str
    interaction_type: str
    directionality: str  # initiator id | "mutual" | "none"
    evidence_refs: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.existence not in EXISTENCE_VALUES:
            raise ValueError(f"{self.item_id}: unknown existence {self.existence!r}")
        if self.interaction_type not in INTERACTION_TYPES:
            raise ValueError(f"{self.item_id}: unknown type {self.interaction_type!r}")
        if self.existence == "no" and (
            self.interaction_type != "none" or self.directionality != "none"
        ):
            raise ValueError(
                f"{self.item_id}: existence 'no' requires type and directionality 'none'"
            )


@dataclass(frozen=True)
class ModelAnswer:
    item_id: str
    identity_score: float
    existence: str
    interaction_type: str
    directionality: str
    evidence_refs: tuple[str, ...] = ()
    ambiguity_acknowledged: bool = False

    def __post_init__(self) -> None:
        if self.identity_score not in IDENTITY_SCORES:
            raise ValueError(f"identity score must be 1, 0.5 or 0: {self.identity_score}")


@dataclass(frozen=True)
class ItemScore:
    item_id: str
    identity: float
    interaction_correct: bool
    direction_scored: bool
    direction_correct: bool
    evidence_fraction: float
    ambiguous_truth: bool
    acknowledged: bool


@dataclass(frozen=True)
class ScoreReport:
    condition: str
    method: str
    n: int
    s_identity: float
    interaction_accuracy: float
    direction_accuracy: float
    s_evidence: float
    s_conflict: float
    s_ground: float
    per_item: tuple[ItemScore, ...] = ()
    excluded: tuple[str, ...] = ()

    def row(self) -> tuple[float, float, float, float]:
        """Table row: identity, interaction, direction, grounding (2 dp)."""
        return (
            round(self.s_identity, 2),
            round(self.interaction_accuracy, 2),
            round(self.direction_accuracy, 2),
            round(self.s_ground, 2),
        )


def _aligned(answers: Sequence[ModelAnswer], truth: Sequence[EvaluationItem]) -> list:
    by_id = {a.item_id: a for a in answers}
    if set(by_id) != {t.item_id for t in truth}:
        raise ValueError("answers and truth cover different item sets")
    if len(by_id) != len(answers):
        raise ValueError("duplicate item ids in answers")
    return [(by_id[t.item_id], t) for t in truth]


def score_identity(answers: Sequence[ModelAnswer]) -> Fraction:
    """Mean of per-item identity scores."""
    if not answers:
        raise ValueError("identity score requires at least one answer")
    # 1.0, 0.5 and 0.0 are exact binary fractions, so this stays rational.
    return sum((Fraction(a.identity_score) for a in answers), Fraction(0)) / len(answers)


def _interaction_correct(answer: ModelAnswer, truth: EvaluationItem) -> bool:
    if truth.existence == "ambiguous":
        return answer.existence == "ambiguous" or answer.ambiguity_acknowledged
    return answer.existence == truth.existence and answer.interaction_type == truth.interaction_type


def score_interaction(
    answers: Sequence[ModelAnswer], truth: Sequence[EvaluationItem]
) -> Fraction:
    """Fraction of items with existence and type jointly correct.

    Ambiguous-truth items count as correct when the answer is ambiguous
    or the ambiguity is acknowledged.
    """
    pairs = _aligned(answers, truth)
    if not pairs:
        raise ValueError("interaction score requires at least one item")
    correct = sum(1 for a, t in pairs if _interaction_correct(a, t))
    return Fraction(correct, len(pairs))


def score_direction(
    answers: Sequence[ModelAnswer], truth: Sequence[EvaluationItem]
) -> Fraction:
    """Exact-match initiator accuracy over truth-confirmed interactions.

    Vacuously 1 when no truth item has existence "yes".
    """
    pairs = [(a, t) for a, t in _aligned(answers, truth) if t.existence == "yes"]
    if not pairs:
        return Fraction(1)
    correct = sum(1 for a, t in pairs if a.directionality == t.directionality)
    return Fraction(correct, len(pairs))


def _evidence_fraction(
    answer: ModelAnswer, truth: EvaluationItem, defined_ids: set[str]
) -> Fraction:
    if not answer.evidence_refs:
        return Fraction(0)
    truth_set = set(truth.evidence_refs)
    valid = sum(1 for r in answer.evidence_refs if r in defined_ids and r in truth_set)
    return Fraction(valid, len(answer.evidence_refs))


def score_grounding(
    answers: Sequence[ModelAnswer],
    truth: Sequence[EvaluationItem],
    document: str | Mapping[str, str],
) -> tuple[Fraction, Fraction, Fraction]:
    """Evidence validity, ambiguity acknowledgment, and their mean.

    ``document`` is either one document text or a mapping scene_id ->
    text for multi-scene item sets. An evidence ref counts when it both
    resolves in the scene document and appears in the truth cue set.
    """
    pairs = _aligned(answers, truth)
    if not pairs:
        raise ValueError("grounding score requires at least one item")
    ids_by_scene: dict[str, set[str]] = {}

    def defined_ids(scene_id: str) -> set[str]:
        if scene_id not in ids_by_scene:
            text = document if isinstance(document, str) else document[scene_id]
            ids_by_scene[scene_id] = parse_document(text).defined_ids()
        return ids_by_scene[scene_id]

    evidence = sum(
        (_evidence_fraction(a, t, defined_ids(t.scene_id)) for a, t in pairs), Fraction(0)
    ) / len(pairs)
    ambiguous = [(a, t) for a, t in pairs if t.existence == "ambiguous"]
    if ambiguous:
        conflict = Fraction(
            sum(1 for a, _ in ambiguous if a.ambiguity_acknowledged), len(ambiguous)
        )
    else:
        conflict = Fraction(1)
    ground = (evidence + conflict) / 2
    return evidence, conflict, ground


# --------------------------------------------------------------------------
# Free-text normalization into ModelAnswer


def _extract_existence(claim: str) -> str:
    lowered = claim.lower()
    if "ambiguous" in lowered or "unclear" in lowered:
        return "ambiguous"
    if lowered.startswith("no ") or "no meaningful interaction" in lowered:
        return "no"
    return "yes"


_TYPE_KEYWORDS = (
    ("shared-attention", "shared attention"),
    ("guidance", "guidance"),
    ("support", "support"),
    ("touch", "touch"),
    ("pointing", "point"),
)


def _extract_type(claim: str) -> str:
    lowered = claim.lower()
    for label, keyword in _TYPE_KEYWORDS:
        if keyword in lowered:
            return label
    return "none"


def _extract_direction(claim: str) -> str:
    lowered = claim.lower()
    if "mutual" in lowered:
        return "mutual"
    if "no one" in lowered or "none" in lowered:
        return "none"
    m = _CHAR_REF.search(claim)
    return m.group(1) if m else "none"


def grade_identity(claims: Sequence[str], allowed_ids: set[str], pair: tuple[str, str]) -> float:
    """Reference-stability rubric over the answer claims.

    0 for drift outside the scene or to swapped characters, 0.5 when a
    claim falls back to collective wording with no explicit id, 1 for
    consistently used ids. Mirrors the documented annotator rubric.
    """
    mentioned = [m for claim in claims for m in _CHAR_REF.findall(claim)]
    if any(m not in allowed_ids for m in mentioned):
        return 0.0
    pair_chars = {p for p in pair if p.startswith("C")}
    if mentioned and pair_chars and not (set(mentioned) & pair_chars):
        return 0.0  # swapped onto other characters entirely
    for claim in claims:
        if _COLLECTIVE.search(claim.lower()) and not _CHAR_REF.search(claim):
            return 0.5
    return 1.0


def extract_model_answer(
    item: EvaluationItem,
    responses: Sequence[StructuredAnswer],
    allowed_ids: set[str],
) -> ModelAnswer:
    """Normalize the four protocol responses into one scored answer."""
    if len(responses) != 4:
        raise ValueError(f"{item.item_id}: expected 4 responses, got {len(responses)}")
    existence_a, type_a, direction_a, evidence_a = responses
    claims = [r.claim for r in responses]
    acknowledged = any(r.uncertainty for r in responses) or any(
        "ambig" in c.lower() for c in claims
    )
    return ModelAnswer(
        item_id=item.item_id,
        identity_score=grade_identity(claims, allowed_ids, item.pair),
        existence=_extract_existence(existence_a.claim),
        interaction_type=_extract_type(type_a.claim),
        directionality=_extract_direction(direction_a.claim),
        evidence_refs=tuple(dict.fromkeys(e.ref for e in evidence_a.evidence)),
        ambiguity_acknowledged=acknowledged,
    )


# --------------------------------------------------------------------------
# Manifest, annotations, protocol runner


@dataclass(frozen=True)
class ManifestScene:
    scene_id: str
    image_ref: str
    document_path: Path
    annotations_path: Path


def load_manifest(path: str | Path) -> list[ManifestScene]:
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    if data.get("schema") != MANIFEST_SCHEMA:
        raise ValueError(f"{path}: expected schema {MANIFEST_SCHEMA!r}")
    scenes = data.get("scenes", [])
    if not scenes:
        raise ValueError(f"{path}: manifest lists no scenes")
    out = []
    for s in scenes:
        document_path = path.parent / s["document"]
        annotations_path = path.parent / s["annotations"]
        for p in (document_path, annotations_path):
            if not p.exists():
                raise FileNotFoundError(f"manifest references missing file: {p}")
        out.append(
            ManifestScene(
                scene_id=s["scene_id"],
                image_ref=s.get("image_ref", s["scene_id"]),
                document_path=document_path,
                annotations_path=annotations_path,
            )
        )
    return out


def load_annotations(path: str | Path, scene_id: str) -> list[EvaluationItem]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("schema") != ANNOTATIONS_SCHEMA:
        raise ValueError(f"{path}: expected schema {ANNOTATIONS_SCHEMA!r}")
    items = []
    for entry in data.get("items", []):
        items.append(
            EvaluationItem(
                item_id=entry["item_id"],
                scene_id=scene_id,
                pair=tuple(entry["pair"]),
                existence=entry["existence"],
                interaction_type=entry["type"],
                directionality=entry["directionality"],
                evidence_refs=tuple(entry.get("evidence", ())),
            )
        )
    return items


def item_questions(item: EvaluationItem) -> list[str]:
    a, b = item.pair
    return [
        Q_EXISTENCE.format(a=a, b=b),
        Q_TYPE.format(a=a, b=b),
        Q_DIRECTION.format(a=a, b=b),
        Q_EVIDENCE.format(a=a, b=b),
    ]


def run_protocol(
    manifest_path: str | Path,
    gateway,
    condition: str,
    method: Optional[str] = None,
) -> ScoreReport:
    """Ask the four-question template per item and score the answers.

    The baseline condition sends image and question only; the grounded
    condition adds the scene's document. Per-item gateway failures are
    recorded and the item is excluded from N.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}, got {condition!r}")
    scenes = load_manifest(manifest_path)
    documents: dict[str, str] = {}
    answers: list[ModelAnswer] = []
    truth: list[EvaluationItem] = []
    excluded: list[str] = []
    for scene in scenes:
        document = scene.document_path.read_text(encoding="utf-8")
        documents[scene.scene_id] = document
        allowed_ids = {
            i for i in parse_document(document).defined_ids() if i.startswith("C")
        }
        sent_document = document if condition == "grounded" else None
        for item in load_annotations(scene.annotations_path, scene.scene_id):
            try:
                responses = [
                    gateway.interpret(
                        InterpretationRequest(
                            question=q, image_ref=scene.image_ref, document=sent_document
                        )
                    )
                    for q in item_questions(item)
                ]
            except GatewayError as exc:
                excluded.append(f"{item.item_id}: {exc}")
                continue
            answers.append(extract_model_answer(item, responses, allowed_ids))
            truth.append(item)
    if not answers:
        raise ValueError("no items were scored (all excluded or manifest empty)")

    identity = score_identity(answers)
    interaction = score_interaction(answers, truth)
    direction = score_direction(answers, truth)
    evidence, conflict, ground = score_grounding(answers, truth, documents)

    truth_by_id = {t.item_id: t for t in truth}
    per_item = []
    for answer in answers:
        t = truth_by_id[answer.item_id]
        doc_ids = parse_document(documents[t.scene_id]).defined_ids()
        per_item.append(
            ItemScore(
                item_id=answer.item_id,
                identity=answer.identity_score,
                interaction_correct=_interaction_correct(answer, t),
                direction_scored=t.existence == "yes",
                direction_correct=answer.directionality == t.directionality,
                evidence_fraction=float(_evidence_fraction(answer, t, doc_ids)),
                ambiguous_truth=t.existence == "ambiguous",
                acknowledged=answer.ambiguity_acknowledged,
            )
        )

    return ScoreReport(
        condition=condition,
        method=method or ("grounded pipeline" if condition == "grounded" else "image-only baseline"),
        n=len(answers),
        s_identity=float(identity),
        interaction_accuracy=float(interaction),
        direction_accuracy=float(direction),
        s_evidence=float(evidence),
        s_conflict=float(conflict),
        s_ground=float(ground),
        per_item=tuple(per_item),
        excluded=tuple(excluded),
    )


# --------------------------------------------------------------------------
# Report output


def report_markdown(reports: Sequence[ScoreReport]) -> str:
    lines = [
        "| Method | Identity | Interaction | Direction | Grounding |",
        "| --- | --- | --- | --- | --- |",
    ]
    for report in reports:
        identity, interaction, direction, grounding = report.row()
        lines.append(
            f"| {report.method} | {identity:.2f} | {interaction:.2f} "
            f"| {direction:.2f} | {grounding:.2f} |"
        )
    return "\n".join(lines) + "\n"


def report_dict(report: ScoreReport) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "condition": report.condition,
        "method": report.method,
        "n": report.n,
        "scores": {
            "identity": report.s_identity,
            "interaction": report.interaction_accuracy,
            "direction": report.direction_accuracy,
            "evidence": report.s_evidence,
            "conflict": report.s_conflict,
            "grounding": report.s_ground,
        },
        "per_item": [
            {
                "item_id": i.item_id,
                "identity": i.identity,
                "interaction_correct": i.interaction_correct,
                "direction_scored": i.direction_scored,
                "direction_correct": i.direction_correct,
                "evidence_fraction": i.evidence_fraction,
                "ambiguous_truth": i.ambiguous_truth,
                "acknowledged": i.acknowledged,
            }
            for i in report.per_item
        ],
        "excluded": list(report.excluded),
    }


def write_reports(reports: Sequence[ScoreReport], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.md").write_text(report_markdown(reports), encoding="utf-8")
    payload = {
        "schema": REPORT_SCHEMA,
        "reports": [report_dict(r) for r in reports],
    }
    (out / "report.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return out
