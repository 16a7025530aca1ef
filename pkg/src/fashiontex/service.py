"""Session-oriented HTTP API: invert, edit, recover as an interactive loop.

Sessions live in memory (optionally mirrored to a directory). Edits are
stateless: every edit starts from the session's original inverted latent
unless the request names an explicit base entry. Recovery fine-tunes a
private generator copy per result and caches the output; shared backbones
are never written to.
"""

from __future__ import annotations

import json
import logging
from contextlib import asynccontextmanager
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import torch
from fastapi import FastAPI, HTTPException, Request, Response, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, ConfigDict

from .backbones import BackboneSet, Image, load_backbones
from .config import Config, backbone_config_hash
from .imaging import (ImageDecodeError, decode_png_base64, encode_png_base64,
                      image_from_bytes, png_bytes)
from .latent import LatentCode, apply_offsets, load_latent, save_latent
from .mapper import (ConditionError, EditCondition, FashionMapper, PromptFormatError,
                     compute_offsets, embed_condition, load_mapper, split_text)
from .recovery import fuse_guided, recover
from .training import VOCABULARY, _LOWER_TAGS, _UPPER_TAGS, new_mapper, TrainConfig

log = logging.getLogger(__name__)


@dataclass
class EditEntry:
    condition_meta: dict
    latent: LatentCode
    png: bytes
    recovered_png: bytes | None = None


@dataclass
class Session:
    id: str
    created_at: float
    original: Image
    original_png: bytes
    latent: LatentCode
    history: list[EditEntry] = field(default_factory=list)
    lock: threading.RLock = field(default_factory=threading.RLock)
    recovery_lock: threading.Lock = field(default_factory=threading.Lock)
    running: set = field(default_factory=set)


class EditRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    text: str | None = None
    text_upper: str | None = None
    text_lower: str | None = None
    patch_upper: str | None = None
    patch_lower: str | None = None
    base: int | None = None


class _State:
    def __init__(self, cfg: Config):
        self.cfg = cfg
        self.backbones: BackboneSet | None = None
        self.mapper: FashionMapper | None = None
        self.sessions: dict[str, Session] = {}
        self.sessions_lock = threading.Lock()
        self.recovery_slots = threading.Semaphore(cfg.service.recovery_parallelism)
        self.persist_dir = Path(cfg.service.persist_dir) if cfg.service.persist_dir else None

    @property
    def ready(self) -> bool:
        return self.backbones is not None and self.mapper is not None

    def load(self):
        if self.ready:
            return
        self.backbones = load_backbones(self.cfg.backbones)
        if self.cfg.service.mapper_path:
            self.mapper = load_mapper(self.cfg.service.mapper_path)
        else:
            self.mapper = new_mapper(
                TrainConfig(mapper_depth=self.cfg.training.mapper_depth,
                            seed=self.cfg.training.seed,
                            out_dir=self.cfg.training.out_dir),
                self.backbones,
            )
        self.mapper.eval()
        if self.persist_dir is not None:
            self.persist_dir.mkdir(parents=True, exist_ok=True)
            self._rehydrate()

    # -- directory persistence ------------------------------------------------

    def _session_dir(self, session_id: str) -> Path | None:
        return self.persist_dir / session_id if self.persist_dir else None

    def persist_new(self, s: Session):
        d = self._session_dir(s.id)
        if d is None:
            return
        (d / "edits").mkdir(parents=True, exist_ok=True)
        (d / "original.png").write_bytes(s.original_png)
        save_latent(s.latent, d / "inverted.wplatent")
        (d / "meta.json").write_text(json.dumps({"created_at": s.created_at}))

    def persist_edit(self, s: Session, k: int, entry: EditEntry):
        d = self._session_dir(s.id)
        if d is None:
            return
        (d / "edits" / f"{k:04d}.png").write_bytes(entry.png)
        save_latent(entry.latent, d / "edits" / f"{k:04d}.wplatent")
        (d / "edits" / f"{k:04d}.json").write_text(json.dumps(entry.condition_meta))

    def persist_recovery(self, s: Session, k: int, png: bytes):
        d = self._session_dir(s.id)
        if d is None:
            return
        (d / "edits" / f"{k:04d}.recovered.png").write_bytes(png)

    def _rehydrate(self):
        bounds = self.backbones.generator.bounds
        for d in sorted(self.persist_dir.iterdir()):
            if not d.is_dir() or not (d / "inverted.wplatent").is_file():
                continue
            try:
                meta = json.loads((d / "meta.json").read_text())
                original_png = (d / "original.png").read_bytes()
                s = Session(
                    id=d.name,
                    created_at=float(meta["created_at"]),
                    original=image_from_bytes(original_png),
                    original_png=original_png,
                    latent=load_latent(d / "inverted.wplatent", bounds=bounds),
                )
                for latent_file in sorted((d / "edits").glob("*.wplatent")):
                    k = latent_file.stem
                    entry = EditEntry(
                        condition_meta=json.loads((d / "edits" / f"{k}.json").read_text()),
                        latent=load_latent(latent_file, bounds=bounds),
                        png=(d / "edits" / f"{k}.png").read_bytes(),
                    )
                    recovered = d / "edits" / f"{k}.recovered.png"
                    if recovered.is_file():
                        entry.recovered_png = recovered.read_bytes()
                    s.history.append(entry)
                self.sessions[s.id] = s
            except (OSError, ValueError, KeyError) as exc:
                log.warning("skipping unreadable persisted session %s: %s", d, exc)


def _get_session(
    state: _State, session_id: str) -> Session:
    session = state.sessions.get(session_id)
    if session is None:
        raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
    return session


def _require_ready(state: _State):
    if not state.ready:
        raise HTTPException(status_code=503, detail="backbones not loaded")


def _parse_condition(req: EditRequest) -> tuple[EditCondition, dict]:
    text_upper, text_lower = req.text_upper, req.text_lower
    if req.text is not None:
        if text_upper is not None or text_lower is not None:
            raise HTTPException(
                status_code=422,
                detail="give either 'text' or 'text_upper'/'text_lower', not both",
            )
        try:
            text_upper, text_lower = split_text(req.text)
        except PromptFormatError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
    patches = {}
    for side, b64 in (("upper", req.patch_upper), ("lower", req.patch_lower)):
        if b64 is None:
            patches[side] = None
            continue
        try:
            patches[side] = decode_png_base64(b64)
        except ImageDecodeError as exc:
            raise HTTPException(status_code=422, detail=f"patch_{side}: {exc}") from exc
    try:
        cond = EditCondition(
            text_upper=text_upper,
            text_lower=text_lower,
            patch_upper=patches["upper"],
            patch_lower=patches["lower"],
        )
    except ConditionError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    meta = {
        "text_upper": text_upper,
        "text_lower": text_lower,
        "has_patch_upper": patches["upper"] is not None,
        "has_patch_lower": patches["lower"] is not None,
        "base": req.base,
    }
    return cond, meta


def create_app(cfg: Config | None = None, backbones: BackboneSet | None = None,
               mapper: FashionMapper | None = None) -> FastAPI:
    """The API application; injected backbones/mapper skip the startup load."""
    cfg = cfg or Config()
    state = _State(cfg)
    if backbones is not None:
        state.backbones = backbones
    if mapper is not None:
        state.mapper = mapper.eval()
        if state.backbones is not None and state.persist_dir is not None:
            state.persist_dir.mkdir(parents=True, exist_ok=True)
            state._rehydrate()

    @asynccontextmanager
    async def _lifespan(_app: FastAPI):
        state.load()
        yield

    app = FastAPI(title="fashiontex", version="1.0", lifespan=_lifespan)
    app.state.fashiontex = state
    # The browser studio may be hosted on a different origin than the API.
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.get("/healthz")
    def healthz():
        return {
            "ready": state.ready,
            "backbone_config_hash": backbone_config_hash(cfg.backbones),
        }

    @app.get("/vocabulary")
    def vocabulary():
        return {
            "upper": list(_UPPER_TAGS),
            "lower": list(_LOWER_TAGS),
            "pairs": [list(p) for p in VOCABULARY],
        }

    @app.post("/sessions", status_code=201)
    def create_session(file: UploadFile):
        _require_ready(state)
        data = file.file.read(cfg.service.max_upload_bytes + 1)
        if len(data) > cfg.service.max_upload_bytes:
            raise HTTPException(
                status_code=413,
                detail=f"upload exceeds {cfg.service.max_upload_bytes} bytes",
            )
        try:
            img = image_from_bytes(data)
        except ImageDecodeError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        try:
            latent = state.backbones.inverter.invert(img)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        with torch.no_grad():
            preview = state.backbones.generator.generate(latent)
        session = Session(
            id=uuid.uuid4().hex,
            created_at=time.time(),
            original=img,
            original_png=png_bytes(img),
            latent=latent,
        )
        with state.sessions_lock:
            state.sessions[session.id] = session
        state.persist_new(session)
        return {"session_id": session.id, "preview": encode_png_base64(preview)}

    @app.get("/sessions/{session_id}")
    def session_summary(session_id: str):
        session = _get_session(state, session_id)
        with session.lock:
            history = [
                {
                    "edit_index": k,
                    "condition": entry.condition_meta,
                    "recovered": entry.recovered_png is not None,
                }
                for k, entry in enumerate(session.history)
            ]
        return {
            "session_id": session.id,
            "created_at": session.created_at,
            "history": history,
        }

    @app.post("/sessions/{session_id}/edits")
    def create_edit(session_id: str, req: EditRequest):
        _require_ready(state)
        session = _get_session(state, session_id)
        cond, meta = _parse_condition(req)
        base_latent = session.latent
        if req.base is not None:
            with session.lock:
                if not 0 <= req.base < len(session.history):
                    raise HTTPException(
                        status_code=422,
                        detail=f"base {req.base} out of range "
                               f"(history has {len(session.history)} entries)",
                    )
                base_latent = session.history[req.base].latent
        with torch.no_grad():
            offsets = compute_offsets(
                base_latent, embed_condition(cond, state.backbones), state.mapper
            )
            w_edit = apply_offsets(base_latent, offsets)
            i_e = state.backbones.generator.generate(w_edit)
        entry = EditEntry(condition_meta=meta, latent=w_edit, png=png_bytes(i_e))
        with session.lock:
            session.history.append(entry)
            k = len(session.history) - 1
        state.persist_edit(session, k, entry)
        return {"edit_index": k, "image": encode_png_base64(i_e)}

    @app.post("/sessions/{session_id}/edits/{k}/recover")
    def recover_edit(session_id: str, k: int):
        _require_ready(state)
        session = _get_session(state, session_id)
        with session.lock:
            if not 0 <= k < len(session.history):
                raise HTTPException(status_code=404, detail=f"no edit {k} in session")
            entry = session.history[k]
            if entry.recovered_png is not None:
                return {"image": encode_png_base64(image_from_bytes(entry.recovered_png))}
            if k in session.running:
                raise HTTPException(
                    status_code=409, detail=f"recovery already running for edit {k}"
                )
            session.running.add(k)
        try:
            # One active recovery per session; a bounded number across sessions.
            with session.recovery_lock, state.recovery_slots:
                i_e = image_from_bytes(entry.png)
                i_o, _ = recover(
                    entry.latent, session.original, i_e, state.backbones, cfg.recovery
                )
            png = png_bytes(i_o)
            with session.lock:
                entry.recovered_png = png
            state.persist_recovery(session, k, png)
        finally:
            with session.lock:
                session.running.discard(k)
        return {"image": encode_png_base64(i_o)}

    return app


def run(cfg: Config | None = None):
    """Serve the app with uvicorn on the configured address."""
    import uvicorn

    cfg = cfg or Config()
    uvicorn.run(create_app(cfg), host=cfg.service.host, port=cfg.service.port,
                log_level="info")
