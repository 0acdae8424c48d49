"""Pluggable boundary to vision-language backends.

Three capabilities cross this boundary: semantic character enrichment,
object-label filtering, and grounded interpretation over an assembled
document. A deterministic mock backend answers from the document itself
(optionally steered by a scripted-scenario file), which keeps the whole
pipeline reproducible end to end; the remote backend speaks the common
chat-completion wire shape.

Every emitted answer passes a grounding gate: evidence references that do
not resolve in the supplied document are flagged, never silently passed
through.
"""

from __future__ import annotations

import json
import random
import re
import threading
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import httpx

from . import document as docmod
from .config import GatewayConfig

DEFAULT_ALLOWLIST = ("tomb", "inscription", "staff", "drapery")

_ENTITY_REF = re.compile(r"\b([CRO]\d+)\b")

_ENRICH_SYSTEM = (
    "You describe one character in a multi-figure painting using its stable ID, "
    "local crops, and the full image. Respond with a JSON object whose keys are a "
    "subset of: role, posture, body_language, expression, object_interaction, "
    "attention_direction, pointing_target, note. Values are short phrases; use "
    "C*/O* ids for targets."
)
_FILTER_SYSTEM = (
    "You select which detected object candidates organize interaction in the scene "
    "(things figures point to, touch, or attend to). Respond with a JSON object "
    "mapping each candidate label to true or false."
)
_SCENE_SYSTEM = (
    "You summarize the global context of a multi-figure painting. Respond with a "
    "JSON object with keys setting, mood, composition, focus; values are short "
    "sentences."
)
_RELATION_SYSTEM = (
    "You summarize the relationship between one pair of figures given its geometric "
    "cues. Respond with a JSON object with keys meaning (short phrase) and "
    "interaction_type (slash-joined labels)."
)


class GatewayError(RuntimeError):
    """Transport, timeout, or protocol failure at the model boundary."""


@dataclass(frozen=True)
class LabelDecision:
    accepted: bool
    note: str = ""


@dataclass(frozen=True)
class EvidenceRef:
    ref: str
    cue: str = ""


@dataclass(frozen=True)
class StructuredAnswer:
    """Four-part grounded answer: claim, evidence, interpretation, uncertainty."""

    claim: str
    evidence: tuple[EvidenceRef, ...] = ()
    interpretation: Optional[str] = None
    uncertainty: Optional[str] = None
    ungrounded_refs: tuple[str, ...] = ()
    parse_failed: bool = False
    raw_text: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "claim": self.claim,
            "evidence": [{"ref": e.ref, "cue": e.cue} for e in self.evidence],
            "interpretation": self.interpretation,
            "uncertainty": self.uncertainty,
            "ungrounded_refs": list(self.ungrounded_refs),
            "parse_failed": self.parse_failed,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "StructuredAnswer":
        return cls(
            claim=data.get("claim", ""),
            evidence=tuple(
                EvidenceRef(ref=e["ref"], cue=e.get("cue", "")) for e in data.get("evidence", [])
            ),
            interpretation=data.get("interpretation"),
            uncertainty=data.get("uncertainty"),
            ungrounded_refs=tuple(data.get("ungrounded_refs", ())),
            parse_failed=bool(data.get("parse_failed", False)),
        )


@dataclass(frozen=True)
class InterpretationRequest:
    question: str
    image_ref: str = ""
    document: Optional[str] = None  # None for image-only (baseline) requests
    protocol: str = "interpret_v1"

    def __post_init__(self) -> None:
        if self.document is not None:
            docmod.parse(self.document)  # must conform to the document schema


@dataclass(frozen=True)
class RequestEntry:
    """Audit record of one backend call, credential-redacted."""

    kind: str
    body: str


def load_system_prompt(protocol: str = "interpret_v1") -> str:
    """The versioned interpretation prompt, byte-stable."""
    ref = resources.files("mirage").joinpath(f"resources/prompts/{protocol}.txt")
    return ref.read_text(encoding="utf-8")


def build_messages(req: InterpretationRequest) -> list[dict]:
    """Chat messages for an interpretation call (any backend)."""
    user_parts = [f"Image: {req.image_ref}"]
    if req.document is not None:
        user_parts.append("Grounding document:\n\n" + req.document)
    user_parts.append(f"Question: {req.question}")
    return [
        {"role": "system", "content": load_system_prompt(req.protocol)},
        {"role": "user", "content": "\n\n".join(user_parts)},
    ]


def ground_answer(answer: StructuredAnswer, document_text: Optional[str]) -> StructuredAnswer:
    """Flag evidence refs that do not resolve in the document."""
    if document_text is None:
        return answer
    defined = docmod.parse(document_text).defined_ids()
    missing = tuple(e.ref for e in answer.evidence if e.ref not in defined)
    return replace(answer, ungrounded_refs=missing)


# --------------------------------------------------------------------------
# Scripted scenarios


@dataclass(frozen=True)
class MockScript:
    """Scenario file steering the mock: enrichment overrides, label
    decisions, relation semantics, canned chat, and evaluation answers."""

    title: str = ""
    scene: Mapping[str, str] = field(default_factory=dict)
    objects: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)
    characters: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    relations: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    chat: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)
    answers: Mapping[str, Any] = field(default_factory=dict)
    fail: bool = False

    @classmethod
    def load(cls, path: str | Path) -> "MockScript":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if data.get("schema") != "mock-script/v1":
            raise ValueError(f"not a mock-script/v1 file: {path}")
        return cls(
            title=data.get("title", ""),
            scene=data.get("scene", {}),
            objects=data.get("objects", {}),
            characters=data.get("characters", {}),
            relations=data.get("relations", {}),
            chat={turn["question"]: turn["answer"] for turn in data.get("chat", [])},
            answers=data.get("answers", {}),
            fail=bool(data.get("fail", False)),
        )


# --------------------------------------------------------------------------
# Question templates shared with the evaluation protocol

Q_EXISTENCE = "Is there a meaningful interaction between {a} and {b}?"
Q_TYPE = "What is the most likely interaction between {a} and {b} based on the visual evidence?"
Q_DIRECTION = "Who initiates the interaction between {a} and {b}, if anyone?"
Q_EVIDENCE = "Describe the visual evidence that supports your interpretation of {a} and {b}."

_TYPE_PHRASES = {
    "support": "support",
    "guidance": "guidance",
    "shared-attention": "shared attention",
    "touch": "touch",
    "pointing": "pointing",
    "none": "no specific interaction",
}


def question_kind(question: str) -> Optional[str]:
    if question.startswith("Is there a meaningful interaction between"):
        return "existence"
    if question.startswith("What is the most likely interaction between"):
        return "type"
    if question.startswith("Who initiates the interaction between"):
        return "direction"
    if question.startswith("Describe the visual evidence"):
        return "evidence"
    return None


def question_pair(question: str) -> tuple[str, ...]:
    return tuple(dict.fromkeys(_ENTITY_REF.findall(question)))


# --------------------------------------------------------------------------
# Mock backend


class MockGateway:
    """Pure, deterministic backend: answers derive from geometry and the
    parsed document, with scripted overrides for conflict scenarios."""

    def __init__(
        self,
        script: Optional[MockScript] = None,
        allowlist: Sequence[str] = DEFAULT_ALLOWLIST,
    ):
        self.script = script or MockScript()
        self.allowlist = tuple(allowlist)
        self.request_log: list[RequestEntry] = []

    def _log(self, kind: str, body: Mapping[str, Any]) -> None:
        self.request_log.append(RequestEntry(kind, json.dumps(body, sort_keys=True)))

    def _check_up(self) -> None:
        if self.script.fail:
            raise GatewayError("mock backend scripted as unavailable")

    # -- enrichment

    def enrich_character(self, profile, crops: Mapping[str, Any], image_ref: str) -> dict:
        self._log(
            "enrich",
            {"id": profile.id, "image": image_ref, "crops": sorted(crops)},
        )
        self._check_up()
        attrs: dict[str, str] = {}
        pose = profile.pose
        if pose is not None:
            if pose.posture != "unknown":
                attrs["posture"] = pose.posture
            if pose.gaze is not None and pose.gaze.target is not None:
                attrs["attention_direction"] = pose.gaze.target
            pointing = [
                rt.target
                for rt in pose.pointing.values()
                if rt.target is not None
            ]
            if pointing:
                attrs["pointing_target"] = "/".join(sorted(set(pointing)))
                attrs["object_interaction"] = ", ".join(
                    f"points at {t}" for t in sorted(set(pointing))
                )
        attrs.setdefault(
            "role", f"figure ({profile.spatial.horizontal} {profile.spatial.vertical})"
        )
        attrs.update(self.script.characters.get(profile.id, {}))
        return attrs

    # -- object filtering

    def filter_labels(self, candidates: Sequence[str], scene_ref: str) -> dict:
        self._log("filter", {"labels": list(candidates), "scene": scene_ref})
        self._check_up()
        decisions = {}
        for label in candidates:
            scripted = self.script.objects.get(label)
            if scripted is not None:
                decisions[label] = LabelDecision(
                    accepted=bool(scripted.get("accept", False)),
                    note=scripted.get("note", ""),
                )
            else:
                norm = label.lower()
                decisions[label] = LabelDecision(
                    accepted=any(term in norm for term in self.allowlist)
                )
        return decisions

    # -- relation semantics

    def enrich_relation(
        self,
        key: str,
        pair: tuple[str, str],
        cue_kinds: Sequence[str],
        shared_objects: Sequence[str],
        image_ref: str,
    ) -> dict:
        self._log(
            "relation",
            {"key": key, "pair": list(pair), "cues": list(cue_kinds), "image": image_ref},
        )
        self._check_up()
        attrs: dict[str, str] = {}
        kinds = sorted(set(cue_kinds))
        if kinds:
            attrs["interaction_type"] = "/".join(kinds)
        if "touching" in kinds:
            attrs["meaning"] = "explicit touch interaction"
        elif shared_objects:
            attrs["meaning"] = f"joint engagement with {shared_objects[0]}"
        elif kinds:
            attrs["meaning"] = "directed attention between the pair"
        attrs.update(self.script.relations.get(key, {}))
        return attrs

    # -- scene context

    def describe_scene(
        self,
        image_ref: str,
        n_characters: int,
        object_labels: Sequence[str],
        focal: Optional[str],
    ) -> dict:
        self._log(
            "scene",
            {"image": image_ref, "characters": n_characters, "objects": list(object_labels)},
        )
        self._check_up()
        described = {
            "setting": "Scene context derived from detections only.",
            "mood": "unspecified",
            "composition": f"{n_characters} figure(s) with "
            f"{len(object_labels)} anchored object(s).",
            "focus": f"Relational cues converge on {focal}." if focal else "No dominant focus.",
        }
        described.update({k: v for k, v in self.script.scene.items() if k != "title"})
        return described

    # -- interpretation

    def interpret(self, req: InterpretationRequest) -> StructuredAnswer:
        self._log("interpret", {"messages": build_messages(req)})
        self._check_up()
        canned = self.script.chat.get(req.question)
        if canned is not None:
            answer = StructuredAnswer.from_dict(canned)
            return ground_answer(answer, req.document)

        kind = question_kind(req.question)
        if kind is not None:
            answer = self._protocol_answer(req, kind)
            if answer is not None:
                return ground_answer(answer, req.document)

        if req.document is None:
            return StructuredAnswer(
                claim="Only a general impression is available without grounding materials.",
                uncertainty="No grounding document was provided.",
            )
        return ground_answer(self._document_answer(req), req.document)

    # scripted evaluation answers: answers[condition][scene][pair key]
    def _scripted_item(self, req: InterpretationRequest) -> Optional[Mapping[str, Any]]:
        condition = "grounded" if req.document is not None else "baseline"
        by_scene = self.script.answers.get(condition, {})
        pair = question_pair(req.question)
        if len(pair) < 2:
            return None
        key = f"{pair[0]}--{pair[1]}"
        return by_scene.get(req.image_ref, {}).get(key)

    def _protocol_answer(
        self, req: InterpretationRequest, kind: str
    ) -> Optional[StructuredAnswer]:
        pair = question_pair(req.question)
        if len(pair) < 2:
            return None
        a, b = pair[0], pair[1]
        scripted = self._scripted_item(req)
        if scripted is not None:
            return _scripted_protocol_answer(a, b, kind, scripted)
        if req.document is None:
            return StructuredAnswer(
                claim=f"The relation between {a} and {b} cannot be grounded without the document.",
                uncertainty="No grounding document was provided.",
            )
        return _document_protocol_answer(docmod.parse(req.document), a, b, kind)

    def _document_answer(self, req: InterpretationRequest) -> StructuredAnswer:
        doc = docmod.parse(req.document)
        question = req.question.lower()
        mentioned = question_pair(req.question)
        defined = doc.defined_ids()
        unknown = [m for m in mentioned if m not in defined]
        if unknown:
            bad = unknown[0]
            return StructuredAnswer(
                claim=f"No grounded evidence involves {bad}.",
                evidence=(EvidenceRef(ref=bad, cue="referenced in the question"),),
                uncertainty=f"{bad} is not defined in the grounding document.",
            )
        if "touch" in question or "contact" in question:
            return _touch_answer(doc, mentioned)
        if "attention" in question or "focus" in question or "focal" in question:
            return _attention_answer(doc)
        if "point" in question or "gesture" in question:
            return _pointing_answer(doc)
        return StructuredAnswer(
            claim=(
                f"The grounding document covers {len(doc.characters)} characters, "
                f"{len(doc.objects)} objects, and {len(doc.relations)} relations."
            ),
            evidence=tuple(EvidenceRef(ref=c.id, cue="character anchor") for c in doc.characters),
        )


def _scripted_protocol_answer(
    a: str, b: str, kind: str, item: Mapping[str, Any]
) -> StructuredAnswer:
    collective = item.get("identity_texture") == "collective"
    uncertainty = (
        "The available cues support multiple readings." if item.get("ack") else None
    )
    if kind == "existence":
        existence = item.get("existence", "no")
        if existence == "yes":
            claim = f"Yes, there is a meaningful interaction between {a} and {b}."
        elif existence == "ambiguous":
            claim = f"The interaction between {a} and {b} is ambiguous."
        else:
            claim = f"No meaningful interaction between {a} and {b} is confirmed."
        return StructuredAnswer(claim=claim, uncertainty=uncertainty)
    if kind == "type":
        phrase = _TYPE_PHRASES.get(item.get("type", "none"), "no specific interaction")
        if collective:
            claim = f"They appear to be in {phrase}."
        else:
            claim = f"The most likely interaction is {phrase} between {a} and {b}."
        return StructuredAnswer(claim=claim, uncertainty=uncertainty)
    if kind == "direction":
        direction = item.get("direction", "none")
        if direction == "mutual":
            claim = f"The interaction between {a} and {b} is mutual."
        elif direction == "none":
            claim = f"No one initiates a directed interaction between {a} and {b}."
        else:
            other = b if direction == a else a
            claim = f"{direction} initiates the interaction toward {other}."
        return StructuredAnswer(claim=claim, uncertainty=uncertainty)
    refs = tuple(EvidenceRef(ref=r, cue="scripted evidence") for r in item.get("evidence_refs", ()))
    return StructuredAnswer(
        claim=f"The grounding evidence for {a} and {b} is summarized in the references.",
        evidence=refs,
        uncertainty=uncertainty,
    )


def _document_protocol_answer(
    doc: docmod.GroundingDocument, a: str, b: str, kind: str
) -> StructuredAnswer:
    relation = doc.relation_for_pair(a, b)
    cues = relation.cues if relation else ()
    refs: tuple[EvidenceRef, ...] = ()
    if relation:
        refs = (
            EvidenceRef(ref=relation.key, cue=relation.interaction),
            EvidenceRef(ref=a, cue="pair member"),
            EvidenceRef(ref=b, cue="pair member"),
        )
    if kind == "existence":
        if cues:
            claim = f"Yes, there is a meaningful interaction between {a} and {b}."
        else:
            claim = f"No meaningful interaction between {a} and {b} is confirmed."
        return StructuredAnswer(claim=claim, evidence=refs)
    if kind == "type":
        mapping = {
            "touching": "touch",
            "pointing-at": "pointing",
            "shared-attention": "shared attention",
            "gazing-at": "shared attention",
        }
        phrase = mapping.get(cues[0][0], "no specific interaction") if cues else (
            "no specific interaction"
        )
        return StructuredAnswer(
            claim=f"The most likely interaction is {phrase} between {a} and {b}.",
            evidence=refs,
        )
    if kind == "direction":
        directed = [c for c in cues if c[0] != "shared-attention"]
        if directed:
            src = directed[0][1]
            dst = directed[0][2]
            claim = f"{src} initiates the interaction toward {dst}."
        else:
            claim = f"No one initiates a directed interaction between {a} and {b}."
        return StructuredAnswer(claim=claim, evidence=refs)
    return StructuredAnswer(
        claim=f"The grounding evidence for {a} and {b} is summarized in the references.",
        evidence=refs,
    )


def _touch_answer(doc: docmod.GroundingDocument, mentioned: Sequence[str]) -> StructuredAnswer:
    char_ids = [m for m in mentioned if m.startswith("C")]
    if len(char_ids) >= 2:
        a, b = char_ids[0], char_ids[1]
        relation = doc.relation_for_pair(a, b)
        if relation is not None:
            touches = [c for c in relation.cues if c[0] == "touching"]
            if touches:
                _, src, dst = touches[0]
                return StructuredAnswer(
                    claim=f"{src} is in direct contact with {dst}.",
                    evidence=(
                        EvidenceRef(ref=relation.key, cue=relation.interaction),
                        EvidenceRef(ref=src, cue="contact source"),
                        EvidenceRef(ref=dst, cue="contact target"),
                    ),
                )
            shared = sorted(
                {dst for kind, _, dst in relation.cues if kind == "shared-attention"}
            )
            evidence = [EvidenceRef(ref=relation.key, cue=relation.interaction)]
            evidence += [EvidenceRef(ref=oid, cue="shared object anchor") for oid in shared]
            interpretation = (
                "This suggests object-mediated support rather than direct physical interaction."
                if shared
                else None
            )
            return StructuredAnswer(
                claim=f"There is no confirmed direct contact between {a} and {b}.",
                evidence=tuple(evidence),
                interpretation=interpretation,
                uncertainty="Proximity may visually suggest contact, but grounding does not confirm it.",
            )
    touches = [
        (rel.key, cue)
        for rel in doc.relations
        for cue in rel.cues
        if cue[0] == "touching"
    ]
    if touches:
        key, (_, src, dst) = touches[0]
        return StructuredAnswer(
            claim=f"{src} touches {dst} ({key}).",
            evidence=(
                EvidenceRef(ref=key, cue="touch relation"),
                EvidenceRef(ref=src, cue="contact source"),
                EvidenceRef(ref=dst, cue="contact target"),
            ),
        )
    return StructuredAnswer(claim="No touch interaction is grounded in this scene.")


def _attention_answer(doc: docmod.GroundingDocument) -> StructuredAnswer:
    counts: dict[str, int] = {}
    gazers: dict[str, list[str]] = {}
    for c in doc.characters:
        if c.gaze is None:
            continue
        m = _ENTITY_REF.search(c.gaze)
        if m:
            target = m.group(1)
            counts[target] = counts.get(target, 0) + 1
            gazers.setdefault(target, []).append(c.id)
    if not counts:
        return StructuredAnswer(claim="No attention center is grounded in this scene.")
    focal = sorted(counts, key=lambda t: (-counts[t], t))[0]
    evidence = [EvidenceRef(ref=focal, cue="attention target")]
    evidence += [EvidenceRef(ref=g, cue=f"gaze resolved to {focal}") for g in gazers[focal]]
    return StructuredAnswer(
        claim=f"Attention converges on {focal}.",
        evidence=tuple(evidence),
        interpretation=f"{len(gazers[focal])} character(s) direct their gaze toward {focal}.",
    )


def _pointing_answer(doc: docmod.GroundingDocument) -> StructuredAnswer:
    pointers = [
        (rel.key, cue)
        for rel in doc.relations
        for cue in rel.cues
        if cue[0] in ("pointing-at", "shared-attention")
    ]
    if not pointers:
        return StructuredAnswer(claim="No pointing gesture is grounded in this scene.")
    key, (kind, src, dst) = pointers[0]
    return StructuredAnswer(
        claim=f"{src} directs a gesture toward {dst} ({key}).",
        evidence=(
            EvidenceRef(ref=key, cue=kind),
            EvidenceRef(ref=src, cue="gesture source"),
            EvidenceRef(ref=dst, cue="gesture target"),
        ),
    )


# --------------------------------------------------------------------------
# Failing backend (simulates an unreachable service)


class FailingGateway:
    """Raises GatewayError on every capability; pipelines must degrade."""

    def __init__(self):
        self.request_log: list[RequestEntry] = []

    def enrich_character(self, profile, crops, image_ref):
        raise GatewayError("backend unreachable")

    def filter_labels(self, candidates, scene_ref):
        raise GatewayError("backend unreachable")

    def enrich_relation(self, key, pair, cue_kinds, shared_objects, image_ref):
        raise GatewayError("backend unreachable")

    def describe_scene(self, image_ref, n_characters, object_labels, focal):
        raise GatewayError("backend unreachable")

    def interpret(self, req):
        raise GatewayError("backend unreachable")


# --------------------------------------------------------------------------
# Remote backend


def _extract_json(text: str) -> Any:
    start = text.find("{")
    end = text.rfind("}")
    if start < 0 or end <= start:
        raise ValueError("no JSON object in response")
    return json.loads(text[start : end + 1])


def parse_answer_text(text: str) -> Optional[StructuredAnswer]:
    """Parse a numbered four-part response into a StructuredAnswer."""
    sections: dict[int, list[str]] = {}
    current: Optional[int] = None
    for line in text.splitlines():
        stripped = line.strip()
        m = re.match(r"^(\d)[.)]\s*(.*)$", stripped)
        if m and 1 <= int(m.group(1)) <= 4:
            current = int(m.group(1))
            sections[current] = [m.group(2)] if m.group(2) else []
        elif current is not None and stripped:
            sections[current].append(stripped)
    if 1 not in sections:
        return None

    # Models tend to echo the response-format headings; drop them.
    label = re.compile(
        r"^(claim|supporting evidence.*|optional.*interpretation.*|interpretation"
        r"|uncertainty.*)[:.]?$",
        re.IGNORECASE,
    )

    def joined(idx: int) -> Optional[str]:
        parts = [p for p in sections.get(idx, []) if p]
        if parts and label.match(parts[0].strip()):
            parts = parts[1:]
        return " ".join(parts) if parts else None

    claim = joined(1) or ""
    if not claim:
        return None
    evidence = []
    for part in sections.get(2, []):
        cleaned = part.lstrip("-* ").strip()
        refs = _ENTITY_REF.findall(cleaned)
        for ref in refs:
            evidence.append(EvidenceRef(ref=ref, cue=cleaned))
    return StructuredAnswer(
        claim=claim,
        evidence=tuple(evidence),
        interpretation=joined(3),
        uncertainty=joined(4),
        raw_text=text,
    )


class RemoteGateway:
    """HTTP chat-completion backend.

    Calls are bounded by a semaphore, time-limited, and retried once with
    jitter. Request bodies are logged with the credential redacted.
    """

    def __init__(self, config: GatewayConfig, client: Optional[httpx.Client] = None):
        self.config = config
        self.request_log: list[RequestEntry] = []
        self._sem = threading.BoundedSemaphore(config.max_in_flight)
        self._client = client or httpx.Client()

    def _complete(self, kind: str, messages: list[dict]) -> str:
        body = {"model": self.config.model, "messages": messages, "temperature": 0}
        self.request_log.append(RequestEntry(kind, json.dumps(body, sort_keys=True)))
        headers = {}
        credential = self.config.credential()
        if credential:
            headers["Authorization"] = f"Bearer {credential}"
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        last_error: Optional[Exception] = None
        for attempt in range(2):
            if attempt:
                time.sleep(random.uniform(0, self.config.retry_jitter_s))
            try:
                with self._sem:
                    response = self._client.post(
                        url, json=body, headers=headers, timeout=self.config.timeout_s
                    )
                response.raise_for_status()
                payload = response.json()
                content = payload["choices"][0]["message"]["content"]
                self.request_log.append(
                    RequestEntry(f"{kind}-response", json.dumps({"content": content}))
                )
                return content
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last_error = exc
        raise GatewayError(f"backend call failed after retry: {last_error}")

    def enrich_character(self, profile, crops, image_ref) -> dict:
        user = json.dumps(
            {
                "id": profile.id,
                "image": image_ref,
                "crops": {k: list(v.as_tuple()) for k, v in crops.items()},
                "location": [profile.spatial.center.x, profile.spatial.center.y],
            },
            sort_keys=True,
        )
        content = self._complete(
            "enrich",
            [{"role": "system", "content": _ENRICH_SYSTEM}, {"role": "user", "content": user}],
        )
        try:
            data = _extract_json(content)
        except ValueError as exc:
            raise GatewayError(f"unparseable enrichment response: {exc}")
        return {str(k): str(v) for k, v in data.items() if v}

    def filter_labels(self, candidates, scene_ref) -> dict:
        user = json.dumps({"labels": list(candidates), "scene": scene_ref}, sort_keys=True)
        content = self._complete(
            "filter",
            [{"role": "system", "content": _FILTER_SYSTEM}, {"role": "user", "content": user}],
        )
        try:
            data = _extract_json(content)
        except ValueError as exc:
            raise GatewayError(f"unparseable filter response: {exc}")
        return {label: LabelDecision(accepted=bool(data.get(label, False))) for label in candidates}

    def enrich_relation(self, key, pair, cue_kinds, shared_objects, image_ref) -> dict:
        user = json.dumps(
            {
                "key": key,
                "pair": list(pair),
                "cues": list(cue_kinds),
                "shared_objects": list(shared_objects),
                "image": image_ref,
            },
            sort_keys=True,
        )
        content = self._complete(
            "relation",
            [{"role": "system", "content": _RELATION_SYSTEM}, {"role": "user", "content": user}],
        )
        try:
            data = _extract_json(content)
        except ValueError as exc:
            raise GatewayError(f"unparseable relation response: {exc}")
        return {str(k): str(v) for k, v in data.items() if v}

    def describe_scene(self, image_ref, n_characters, object_labels, focal) -> dict:
        user = json.dumps(
            {
                "image": image_ref,
                "characters": n_characters,
                "objects": list(object_labels),
                "focal": focal,
            },
            sort_keys=True,
        )
        content = self._complete(
            "scene",
            [{"role": "system", "content": _SCENE_SYSTEM}, {"role": "user", "content": user}],
        )
        try:
            data = _extract_json(content)
        except ValueError as exc:
            raise GatewayError(f"unparseable scene response: {exc}")
        return {str(k): str(v) for k, v in data.items()}

    def interpret(self, req: InterpretationRequest) -> StructuredAnswer:
        messages = build_messages(req)
        content = self._complete("interpret", messages)
        answer = parse_answer_text(content)
        if answer is None:
            content = self._complete("interpret-retry", messages)
            answer = parse_answer_text(content)
        if answer is None:
            return StructuredAnswer(claim="", parse_failed=True, raw_text=content)
        return ground_answer(answer, req.document)


def make_gateway(config: GatewayConfig):
    """Construct the configured backend (mock with optional script, or remote)."""
    if config.mode == "mock":
        script = MockScript.load(config.script) if config.script else None
        return MockGateway(script=script)
    if config.mode == "remote":
        return RemoteGateway(config)
    raise ValueError(f"unknown gateway mode: {config.mode}")
