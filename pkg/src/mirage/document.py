"""Grounding document: the system's Markdown exchange format.

The document consolidates scene context, object anchors, character
states, pairwise relations, and preserved conflicts into one versioned
Markdown layout. Rendering is byte-deterministic; the parser restores the
structured form for round-trip checks and downstream consumers.

This module is self-contained on purpose: it knows nothing about the
pipeline types, only about the document model itself.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

DOCUMENT_HEADER = "# MIRAGE Grounding Document v1"

SECTION_SCENE = "[Scene Overview]"
SECTION_OBJECTS = "[Object Anchors]"
SECTION_CHARACTERS = "[Characters]"
SECTION_RELATIONS = "[Relations]"
SECTION_PRIORITIES = "[Grounding Priorities]"
SECTION_ORDER = (
    SECTION_SCENE,
    SECTION_OBJECTS,
    SECTION_CHARACTERS,
    SECTION_RELATIONS,
    SECTION_PRIORITIES,
)

PRIORITIES_V1 = (
    "use resolved posture and gaze",
    "treat geometry as supporting/conflicting evidence",
    "preserve VLM-geometry disagreement",
    "reference character, relation, and object IDs",
)

CHARACTER_FIELD_ORDER = ("role", "posture", "gaze", "actions", "note")

_ENTITY_REF = re.compile(r"\b([CRO]\d+)\b")
_CHARACTER_ID = re.compile(r"^C\d+$")
_RELATION_HEAD = re.compile(r"^(R\d+): (C\d+)--(C\d+)$")
_METRIC_LINE = re.compile(r"^dist: (\d+\.\d{3}), IoU: (\d+\.\d{3})$")
_CONFLICT_LINE = re.compile(r"^conflict: (.+?) → (.+) \(([a-z-]+)\)$")
_CUE_ITEM = re.compile(r"^([a-z-]+) \(([CO]\d+) → ([CRO]\d+)\)$")
_OBJECT_LINE = re.compile(r"^(O\d+): (\S+)(?: — (.*))?$")


class DocumentError(ValueError):
    """Malformed document content; carries a 1-based line number when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class SceneOverview:
    setting: str = ""
    mood: str = ""
    composition: str = ""
    focus: str = ""


@dataclass(frozen=True)
class ObjectEntry:
    id: str
    label: str
    note: str = ""


@dataclass(frozen=True)
class DocConflict:
    basis: str
    value: str
    attribute: str


@dataclass(frozen=True)
class CharacterBlock:
    id: str
    role: Optional[str] = None
    posture: Optional[str] = None
    gaze: Optional[str] = None
    actions: Optional[str] = None
    note: Optional[str] = None
    conflicts: tuple[DocConflict, ...] = ()


@dataclass(frozen=True)
class RelationBlock:
    key: str
    pair: tuple[str, str]
    dist: float
    iou: float
    interaction: str
    cues: tuple[tuple[str, str, str], ...] = ()  # (kind, source, target)
    meaning: Optional[str] = None
    conflicts: tuple[DocConflict, ...] = ()


@dataclass(frozen=True)
class GroundingDocument:
    title: str
    scene: SceneOverview = field(default_factory=SceneOverview)
    objects: tuple[ObjectEntry, ...] = ()
    characters: tuple[CharacterBlock, ...] = ()
    relations: tuple[RelationBlock, ...] = ()
    priorities: tuple[str, ...] = PRIORITIES_V1

    def defined_ids(self) -> set[str]:
        ids = {o.id for o in self.objects}
        ids |= {c.id for c in self.characters}
        for r in self.relations:
            ids.add(r.key)
            ids.update(r.pair)
        return ids

    def character(self, cid: str) -> Optional[CharacterBlock]:
        for c in self.characters:
            if c.id == cid:
                return c
        return None

    def relation_for_pair(self, a: str, b: str) -> Optional[RelationBlock]:
        wanted = {a, b}
        for r in self.relations:
            if set(r.pair) == wanted:
                return r
        return None


def round3(value: float) -> float:
    """Snap a metric to its 3-decimal document representation."""
    return float(f"{value:.3f}")


def referenced_ids(doc: GroundingDocument) -> Iterable[tuple[str, str]]:
    """Yield (id, context) for every entity token mentioned in free text."""
    def scan(text: Optional[str], context: str):
        if not text:
            return
        for m in _ENTITY_REF.finditer(text):
            yield (m.group(1), context)

    for attr in ("setting", "mood", "composition", "focus"):
        yield from scan(getattr(doc.scene, attr), f"scene {attr}")
    for obj in doc.objects:
        yield from scan(obj.note, f"object {obj.id} note")
    for c in doc.characters:
        for name in CHARACTER_FIELD_ORDER:
            yield from scan(getattr(c, name), f"character {c.id} {name}")
        for conflict in c.conflicts:
            yield from scan(conflict.value, f"character {c.id} conflict")
    for r in doc.relations:
        for cid in r.pair:
            yield (cid, f"relation {r.key} pair")
        yield from scan(r.interaction, f"relation {r.key} interaction")
        yield from scan(r.meaning, f"relation {r.key} meaning")
        for kind, source, target in r.cues:
            yield (source, f"relation {r.key} cue")
            yield (target, f"relation {r.key} cue")
        for conflict in r.conflicts:
            yield from scan(conflict.value, f"relation {r.key} conflict")


def validate_references(doc: GroundingDocument) -> None:
    """Reject any C*/R*/O* reference that the document does not define."""
    defined = doc.defined_ids()
    for entity_id, context in referenced_ids(doc):
        if entity_id not in defined:
            raise DocumentError(f"undefined id {entity_id} referenced in {context}")


def render(doc: GroundingDocument) -> str:
    """Serialize to the versioned Markdown layout. Deterministic bytes."""
    validate_references(doc)
    lines = [DOCUMENT_HEADER, f"Painting: {doc.title}", ""]

    lines.append(SECTION_SCENE)
    lines.append(f"- Setting: {doc.scene.setting}")
    lines.append(f"- Mood: {doc.scene.mood}")
    lines.append(f"- Composition: {doc.scene.composition}")
    lines.append(f"- Focus: {doc.scene.focus}")
    lines.append("")

    lines.append(SECTION_OBJECTS)
    for obj in doc.objects:
        suffix = f" — {obj.note}" if obj.note else ""
        lines.append(f"- {obj.id}: {obj.label}{suffix}")
    lines.append("")

    lines.append(SECTION_CHARACTERS)
    for c in doc.characters:
        lines.append("")
        lines.append(c.id)
        for name in CHARACTER_FIELD_ORDER:
            value = getattr(c, name)
            if value is not None:
                lines.append(f"- {name}: {value}")
        for conflict in c.conflicts:
            lines.append(
                f"- conflict: {conflict.basis} → {conflict.value} ({conflict.attribute})"
            )
    lines.append("")

    lines.append(SECTION_RELATIONS)
    for r in doc.relations:
        lines.append("")
        lines.append(f"{r.key}: {r.pair[0]}--{r.pair[1]}")
        lines.append(f"- dist: {r.dist:.3f}, IoU: {r.iou:.3f}")
        lines.append(f"- interaction: {r.interaction}")
        if r.cues:
            cue_text = ", ".join(f"{kind} ({src} → {dst})" for kind, src, dst in r.cues)
            lines.append(f"- cues: {cue_text}")
        if r.meaning is not None:
            lines.append(f"- meaning: {r.meaning}")
        for conflict in r.conflicts:
            lines.append(
                f"- conflict: {conflict.basis} → {conflict.value} ({conflict.attribute})"
            )
    lines.append("")

    lines.append(SECTION_PRIORITIES)
    for item in doc.priorities:
        lines.append(f"- {item}")
    lines.append("")
    return "\n".join(lines)


class _Parser:
    def __init__(self, text: str):
        self.lines = text.split("\n")
        self.pos = 0

    def error(self, message: str) -> DocumentError:
        return DocumentError(message, line=self.pos + 1)

    def current(self) -> Optional[str]:
        if self.pos < len(self.lines):
            return self.lines[self.pos]
        return None

    def advance(self) -> str:
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def skip_blank(self) -> None:
        while self.current() == "":
            self.advance()

    def expect(self, expected: str) -> None:
        line = self.current()
        if line != expected:
            raise self.error(f"expected {expected!r}, found {line!r}")
        self.advance()

    def take_field(self, prefix: str) -> str:
        line = self.current()
        if line is None or not line.startswith(prefix):
            raise self.error(f"expected a {prefix!r} line, found {line!r}")
        self.advance()
        return line[len(prefix):]

    def bullet_lines(self) -> list[str]:
        items = []
        while self.current() is not None and self.current().startswith("- "):
            items.append(self.advance()[2:])
        return items


def _parse_conflict(item: str, pos: int) -> DocConflict:
    m = _CONFLICT_LINE.match(item)
    if not m:
        raise DocumentError(f"malformed conflict line: {item!r}", line=pos)
    return DocConflict(basis=m.group(1), value=m.group(2), attribute=m.group(3))


def parse(text: str) -> GroundingDocument:
    """Parse document text back into the structured form.

    Raises DocumentError with a line number on malformed sections,
    unknown headers, or references to undefined ids.
    """
    p = _Parser(text)
    p.expect(DOCUMENT_HEADER)
    title = p.take_field("Painting: ")
    p.skip_blank()

    p.expect(SECTION_SCENE)
    scene = SceneOverview(
        setting=p.take_field("- Setting: "),
        mood=p.take_field("- Mood: "),
        composition=p.take_field("- Composition: "),
        focus=p.take_field("- Focus: "),
    )
    p.skip_blank()

    p.expect(SECTION_OBJECTS)
    objects = []
    for item in p.bullet_lines():
        m = _OBJECT_LINE.match(item)
        if not m:
            raise DocumentError(f"malformed object line: {item!r}", line=p.pos)
        objects.append(ObjectEntry(id=m.group(1), label=m.group(2), note=m.group(3) or ""))
    p.skip_blank()

    p.expect(SECTION_CHARACTERS)
    p.skip_blank()
    characters = []
    while p.current() is not None and _CHARACTER_ID.match(p.current() or ""):
        cid = p.advance()
        fields: dict[str, Optional[str]] = {}
        conflicts = []
        for item in p.bullet_lines():
            name, sep, value = item.partition(": ")
            if not sep:
                raise DocumentError(f"malformed character field: {item!r}", line=p.pos)
            if name == "conflict":
                conflicts.append(_parse_conflict(item, p.pos))
            elif name in CHARACTER_FIELD_ORDER:
                fields[name] = value
            else:
                raise DocumentError(f"unknown character field {name!r}", line=p.pos)
        characters.append(CharacterBlock(id=cid, conflicts=tuple(conflicts), **fields))
        p.skip_blank()

    p.expect(SECTION_RELATIONS)
    p.skip_blank()
    relations = []
    while p.current() is not None and _RELATION_HEAD.match(p.current() or ""):
        head = _RELATION_HEAD.match(p.advance())
        metric = _METRIC_LINE.match(p.take_field("- "))
        if not metric:
            raise DocumentError("expected a 'dist: x.xxx, IoU: x.xxx' line", line=p.pos)
        interaction = p.take_field("- interaction: ")
        cues: list[tuple[str, str, str]] = []
        meaning = None
        conflicts = []
        for item in p.bullet_lines():
            if item.startswith("cues: "):
                for cue_text in item[len("cues: "):].split(", "):
                    cm = _CUE_ITEM.match(cue_text)
                    if not cm:
                        raise DocumentError(f"malformed cue item: {cue_text!r}", line=p.pos)
                    cues.append((cm.group(1), cm.group(2), cm.group(3)))
            elif item.startswith("meaning: "):
                meaning = item[len("meaning: "):]
            elif item.startswith("conflict: "):
                conflicts.append(_parse_conflict(item, p.pos))
            else:
                raise DocumentError(f"unknown relation field: {item!r}", line=p.pos)
        relations.append(
            RelationBlock(
                key=head.group(1),
                pair=(head.group(2), head.group(3)),
                dist=float(metric.group(1)),
                iou=float(metric.group(2)),
                interaction=interaction,
                cues=tuple(cues),
                meaning=meaning,
                conflicts=tuple(conflicts),
            )
        )
        p.skip_blank()

    p.expect(SECTION_PRIORITIES)
    priorities = tuple(p.bullet_lines())
    p.skip_blank()
    if p.current() is not None:
        raise DocumentError(f"unexpected trailing content: {p.current()!r}", line=p.pos + 1)

    doc = GroundingDocument(
        title=title,
        scene=scene,
        objects=tuple(objects),
        characters=tuple(characters),
        relations=tuple(relations),
        priorities=priorities,
    )
    validate_references(doc)
    return doc
