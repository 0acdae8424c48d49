"""Exploration service: scenes, documents, relations, and grounded chat.

Scene records are immutable once grounded; chat transcripts are
append-only per scene and persisted next to the record, so a restarted
service serves byte-identical payloads.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse

from .bundle import BundleError, bundle_from_dict
from .config import RunConfig
from .gateway import GatewayError, InterpretationRequest
from .pipeline import (
    dump_json,
    ground_scene,
    record_to_dict,
    validate_record_dict,
    write_scene,
)


class SceneStore:
    """Disk-backed scene registry under ``data_dir``."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)

    def scene_dir(self, scene_id: str) -> Path:
        return self.data_dir / scene_id

    def list_scenes(self) -> list[str]:
        return sorted(p.name for p in self.data_dir.iterdir() if (p / "record.json").exists())

    def load(self, scene_id: str) -> dict:
        record_path = self.scene_dir(scene_id) / "record.json"
        if not record_path.exists():
            raise KeyError(scene_id)
        data = json.loads(record_path.read_text(encoding="utf-8"))
        validate_record_dict(data)
        return data

    def transcript_path(self, scene_id: str) -> Path:
        return self.scene_dir(scene_id) / "transcript.json"

    def load_transcript(self, scene_id: str) -> list[dict]:
        path = self.transcript_path(scene_id)
        if not path.exists():
            return []
        return json.loads(path.read_text(encoding="utf-8"))["turns"]

    def append_turn(self, scene_id: str, question: str, answer: dict) -> dict:
        turns = self.load_transcript(scene_id)
        turn = {"turn": len(turns) + 1, "question": question, "answer": answer}
        turns.append(turn)
        self.transcript_path(scene_id).write_text(
            dump_json({"schema": "chat-transcript/v1", "scene_id": scene_id, "turns": turns}),
            encoding="utf-8",
        )
        return turn


def create_app(config: RunConfig, gateway, data_dir: str | Path) -> FastAPI:
    app = FastAPI(title="mirage exploration service")
    store = SceneStore(data_dir)

    def get_record(scene_id: str) -> dict:
        try:
            return store.load(scene_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown scene: {scene_id}")

    @app.get("/scenes")
    def list_scenes() -> dict:
        return {"scenes": store.list_scenes()}

    @app.post("/scenes", status_code=201)
    async def create_scene(request: Request) -> dict:
        try:
            payload = await request.json()
        except json.JSONDecodeError:
            raise HTTPException(status_code=400, detail="request body must be JSON")
        if not isinstance(payload, dict) or "bundle" not in payload:
            raise HTTPException(status_code=400, detail="payload must carry a 'bundle' object")
        scene_id = payload.get("scene_id")
        if not scene_id or not isinstance(scene_id, str):
            raise HTTPException(status_code=400, detail="payload must carry a 'scene_id' string")
        try:
            bundle = bundle_from_dict(payload["bundle"])
        except BundleError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        record = ground_scene(bundle, config, gateway, scene_id=scene_id)
        write_scene(record, store.data_dir)
        return {"scene_id": scene_id}

    @app.get("/scenes/{scene_id}/document")
    def get_document(scene_id: str) -> PlainTextResponse:
        record = get_record(scene_id)
        return PlainTextResponse(record["document"], media_type="text/markdown")

    @app.get("/scenes/{scene_id}/relations")
    def get_relations(scene_id: str) -> dict:
        record = get_record(scene_id)
        return {"scene_id": scene_id, "relations": record["relations"]}

    @app.get("/scenes/{scene_id}/topology")
    def get_topology(scene_id: str) -> dict:
        record = get_record(scene_id)
        return {"scene_id": scene_id, "topology": record["topology"]}

    @app.get("/scenes/{scene_id}/overlay")
    def get_overlay(scene_id: str) -> JSONResponse:
        record = get_record(scene_id)
        return JSONResponse(record["overlay"])

    @app.get("/scenes/{scene_id}/conflicts")
    def get_conflicts(scene_id: str) -> dict:
        record = get_record(scene_id)
        return {"scene_id": scene_id, "conflicts": record["conflicts"]}

    @app.get("/scenes/{scene_id}/image")
    def get_image(scene_id: str):
        record = get_record(scene_id)
        ref = record["bundle"]["image"]["ref"]
        path = Path(ref)
        if not path.is_absolute():
            path = store.scene_dir(scene_id) / ref
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"image file not found: {ref}")
        return FileResponse(path)

    @app.get("/scenes/{scene_id}/transcript")
    def get_transcript(scene_id: str) -> dict:
        get_record(scene_id)  # 404 for unknown scenes
        return {"scene_id": scene_id, "turns": store.load_transcript(scene_id)}

    @app.post("/scenes/{scene_id}/chat")
    async def chat(scene_id: str, request: Request) -> dict:
        record = get_record(scene_id)
        try:
            payload = await request.json()
        except json.JSONDecodeError:
            raise HTTPException(status_code=400, detail="request body must be JSON")
        question = payload.get("question") if isinstance(payload, dict) else None
        if not question or not isinstance(question, str):
            raise HTTPException(status_code=400, detail="payload must carry a 'question' string")
        try:
            answer = gateway.interpret(
                InterpretationRequest(
                    question=question,
                    image_ref=record["bundle"]["image"]["ref"],
                    document=record["document"],
                )
            )
        except GatewayError as exc:
            raise HTTPException(status_code=502, detail=f"gateway failure: {exc}")
        turn = store.append_turn(scene_id, question, answer.to_dict())
        return turn

    return app
