"""Randomized scene inputs for round-trip and determinism tests."""

from __future__ import annotations

import random

from mirage.anchoring import ObjectAnchor
from mirage.assemble import build_document
from mirage.characters import SemanticAttribute
from mirage.config import RunConfig
from mirage.conflicts import ledger_for_scene
from mirage.document import GroundingDocument
from mirage.relations import build_relations

from oracles import random_box
from test_relations import make_profile

_LABELS = ("tomb", "inscription", "staff", "drapery", "urn", "scroll")
_ROLES = ("standing witness", "seated elder", "kneeling reader", "distant onlooker")
_NOTES = (
    "quiet participant in the scene",
    "drives the shared focus",
    "holds the composition's edge",
    "",
)
_POSTURES = ("standing", "seated", "kneeling", "crouching", "reclining")


def random_scene(rng: random.Random, config: RunConfig):
    """Random profiles, objects, relations, and ledger for one scene."""
    n_chars = rng.randint(0, 5)
    n_objects = rng.randint(0, 3)
    char_ids = [f"C{i}" for i in range(1, n_chars + 1)]
    objects = [
        ObjectAnchor(
            id=f"O{i}",
            label=rng.choice(_LABELS),
            box=random_box(rng, 0.05, 0.3),
            interaction_salience="accepted",
            source="semantic-filter",
            note=rng.choice(_NOTES),
        )
        for i in range(1, n_objects + 1)
    ]
    object_ids = [o.id for o in objects]
    profiles = []
    for cid in char_ids:
        other = [x for x in char_ids if x != cid] + object_ids
        gaze = rng.choice(other) if other and rng.random() < 0.6 else None
        pointing = {}
        if other and rng.random() < 0.4:
            pointing["right"] = rng.choice(other)
        profile = make_profile(
            cid,
            random_box(rng, 0.1, 0.35),
            pointing=pointing or None,
            gaze=gaze,
            posture=rng.choice(_POSTURES),
        )
        appearance = {}
        if rng.random() < 0.7:
            appearance["role"] = SemanticAttribute(rng.choice(_ROLES), "semantic")
        if rng.random() < 0.5:
            appearance["posture"] = SemanticAttribute(rng.choice(_POSTURES), "semantic")
        if gaze is not None and rng.random() < 0.5:
            semantic_gaze = rng.choice(other)
            appearance["attention_direction"] = SemanticAttribute(semantic_gaze, "semantic")
        note = rng.choice(_NOTES)
        if note:
            appearance["note"] = SemanticAttribute(note, "semantic")
        if appearance:
            profile = profile.__class__(**{**profile.__dict__, "appearance": appearance})
        profiles.append(profile)
    relations = build_relations(profiles, objects, config)
    if relations and rng.random() < 0.5:
        import dataclasses

        relations = [
            dataclasses.replace(
                r, meaning=rng.choice(("strong local grouping", "loose adjacency", None))
            )
            for r in relations
        ]
    semantics = {}
    for rec in relations:
        if rng.random() < 0.3:
            semantics[rec.key] = rng.choice(("support", "touch", "shared-attention"))
    conflicts = ledger_for_scene(profiles, relations, semantics)
    return profiles, objects, relations, conflicts


def random_document(rng: random.Random, config: RunConfig) -> GroundingDocument:
    profiles, objects, relations, conflicts = random_scene(rng, config)
    scene = {
        "setting": "A randomized test scene.",
        "mood": rng.choice(("solemn", "animated", "calm")),
        "composition": f"{len(profiles)} figures in a generated arrangement.",
        "focus": "No dominant focus." if not profiles else f"Centered on {profiles[0].id}.",
    }
    return build_document(
        title=f"Generated Scene {rng.randint(1, 9999)}",
        scene=scene,
        objects=objects,
        profiles=profiles,
        relations=relations,
        conflicts=conflicts,
        config=config,
    )
