"""Session HTTP service: load evidence once, then answer post hoc queries.

Each session owns exactly one e-collection, built at creation. Every
membership check, error-rate switch, level change, and finalized selection
is appended to the session's audit log together with its certificate and
the collection fingerprint, so the whole decision trail can be re-verified
against the single collection that produced it. Sessions persist as JSON
files (append-only audit) when a state directory is configured.

Non-finite floats (unbounded margins, an infinite knockoff threshold) are
serialized as the strings "inf"/"-inf" so responses stay strict JSON.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import engine, procedures
from .core import (
    LossFunction,
    ValueVector,
    fdp_loss,
    indices_from_mask,
    loss_from_dict,
    loss_to_dict,
    mask_from_indices,
)
from .ecollections import collection_fingerprint
from .engine import CapExceededError

__all__ = ["create_app", "ApiError"]

_STATUS = {"bad_request": 400, "not_found": 404, "alpha_locked": 409,
           "cap_exceeded": 422}


class ApiError(Exception):
    def __init__(self, code: str, message: str):
        assert code in _STATUS
        self.code = code
        self.message = message
        super().__init__(message)


def _clean(obj):
    """Make a structure strict-JSON safe: non-finite floats to strings."""
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return "nan"
        return obj
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _entry_id(entry: dict) -> str:
    blob = json.dumps(_clean(entry), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Session:
    id: str
    method_token: str
    values: ValueVector
    created_alpha: float
    lam: Optional[float]
    alpha: float
    collection: object
    largest: int
    diagnostics: dict
    fingerprint: str
    created: str
    updated: str
    audit: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


class CreateSessionPayload(BaseModel):
    method: str
    values: list[float]
    kind: Optional[str] = None
    alpha: float = 0.05
    lam: Optional[float] = Field(default=None, alias="lambda")

    model_config = {"populate_by_name": True}


class MembershipPayload(BaseModel):
    set: list[int]
    loss: Optional[dict] = None


class SwitchLossPayload(BaseModel):
    loss: dict


class AlphaPayload(BaseModel):
    alpha: float


class FinalizePayload(BaseModel):
    set: list[int]
    loss: Optional[dict] = None
    alpha: Optional[float] = None


class SessionStore:
    """In-memory session map with optional JSON-file persistence."""

    def __init__(self, state_dir: Optional[str] = None):
        self.sessions: dict[str, Session] = {}
        self.state_dir = Path(state_dir) if state_dir else None
        self.lock = threading.Lock()
        if self.state_dir:
            self.state_dir.mkdir(parents=True, exist_ok=True)

    def _path(self, session_id: str) -> Optional[Path]:
        if self.state_dir is None:
            return None
        return self.state_dir / f"{session_id}.json"

    def persist(self, s: Session) -> None:
        path = self._path(s.id)
        if path is None:
            return
        doc = {
            "id": s.id,
            "method": s.method_token,
            "kind": s.values.kind,
            "values": list(map(float, s.values.values)),
            "created_alpha": s.created_alpha,
            "lambda": s.lam,
            "alpha": s.alpha,
            "fingerprint": s.fingerprint,
            "created": s.created,
            "updated": s.updated,
            "audit": _clean(s.audit),
        }
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, sort_keys=True, indent=1))
        os.replace(tmp, path)

    def load(self, session_id: str) -> Optional[Session]:
        path = self._path(session_id)
        if path is None or not path.exists():
            return None
        doc = json.loads(path.read_text())
        values = ValueVector(kind=doc["kind"], values=tuple(doc["values"]))
        s = _build_session(doc["method"], values, doc["created_alpha"],
                           doc["lambda"], session_id=doc["id"])
        if s.fingerprint != doc["fingerprint"]:
            raise ApiError("bad_request",
                           f"stored session {session_id} does not match its "
                           f"collection fingerprint")
        s.alpha = doc["alpha"]
        if s.alpha != s.created_alpha:
            s.largest = procedures.closed_variant(
                procedures.METHOD_SPECS[s.method_token][0], values, s.alpha,
                lam=s.lam).rejected
        s.created = doc["created"]
        s.updated = doc["updated"]
        s.audit = doc["audit"]
        return s

    def get(self, session_id: str) -> Session:
        with self.lock:
            s = self.sessions.get(session_id)
            if s is None:
                s = self.load(session_id)
                if s is not None:
                    self.sessions[session_id] = s
        if s is None:
            raise ApiError("not_found", f"no session {session_id}")
        return s

    def add(self, s: Session) -> None:
        with self.lock:
            self.sessions[s.id] = s
        self.persist(s)


def _build_session(method_token: str, values: ValueVector, alpha: float,
                   lam: Optional[float], session_id: Optional[str] = None) -> Session:
    if method_token not in procedures.METHOD_SPECS:
        raise ApiError("bad_request", f"unknown method {method_token!r}")
    name, kind, closed, needs_lambda = procedures.METHOD_SPECS[method_token]
    if not closed:
        raise ApiError("bad_request",
                       f"sessions need a closed method (got {method_token}); "
                       f"classical procedures have no collection to query")
    if values.kind != kind:
        raise ApiError("bad_request",
                       f"method {method_token} needs {kind} input, got "
                       f"{values.kind}")
    if needs_lambda and lam is None:
        raise ApiError("bad_request", f"method {method_token} needs lambda")
    result = procedures.closed_variant(name, values, alpha, lam=lam)
    now = _now()
    return Session(
        id=session_id or uuid.uuid4().hex[:12],
        method_token=method_token,
        values=values,
        created_alpha=alpha,
        lam=lam,
        alpha=alpha,
        collection=result.collection,
        largest=result.rejected,
        diagnostics=result.diagnostics,
        fingerprint=collection_fingerprint(result.collection),
        created=now,
        updated=now,
    )


def _summary(s: Session) -> dict:
    col = s.collection
    try:
        fwer_mask = engine.fwer_reject_set(col, s.alpha)
        fwer: Optional[list] = list(indices_from_mask(fwer_mask))
    except CapExceededError:
        fwer = None
    return _clean({
        "id": s.id,
        "method": procedures.METHOD_SPECS[s.method_token][0],
        "m": col.m,
        "kind": s.values.kind,
        "values": list(map(float, s.values.values)),
        "alpha": s.alpha,
        "alpha_adjustable": col.alpha_independent,
        "largest": list(indices_from_mask(s.largest)),
        "fwer_set": fwer,
        "fwer_nonempty": bool(fwer) if fwer is not None else None,
        "diagnostics": s.diagnostics,
        "fingerprint": s.fingerprint,
        "created": s.created,
        "updated": s.updated,
        "audit_length": len(s.audit),
    })


def _parse_loss(d: Optional[dict]) -> LossFunction:
    if d is None:
        return fdp_loss()
    try:
        return loss_from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ApiError("bad_request", f"bad loss descriptor: {exc}")


def _parse_set(indices: list[int], m: int) -> int:
    try:
        return mask_from_indices(indices, m)
    except ValueError as exc:
        raise ApiError("bad_request", str(exc))


def _certify(s: Session, loss: LossFunction, alpha: float, r_mask: int):
    try:
        return procedures.collection_member(s.collection, loss, alpha, r_mask)
    except CapExceededError as exc:
        raise ApiError("cap_exceeded", str(exc))


def _append_audit(store: SessionStore, s: Session, action: str,
                  loss: LossFunction, alpha: float, r_mask: int,
                  cert, binding: bool) -> dict:
    entry = {
        "seq": len(s.audit) + 1,
        "timestamp": _now(),
        "action": action,
        "loss": loss_to_dict(loss),
        "alpha": alpha,
        "set": list(indices_from_mask(r_mask)),
        "certificate": cert.to_dict(),
        "binding": binding,
        "fingerprint": s.fingerprint,
    }
    entry["certificate_id"] = _entry_id(entry)
    s.audit.append(_clean(entry))
    s.updated = entry["timestamp"]
    store.persist(s)
    return s.audit[-1]


def create_app(state_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="eclosure session service")
    store = SessionStore(state_dir)

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError):
        return JSONResponse(status_code=_STATUS[exc.code],
                            content={"code": exc.code, "message": exc.message})

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content={"code": "bad_request",
                                     "message": str(exc.errors()[:3])})

    @app.post("/sessions")
    def create_session(payload: CreateSessionPayload):
        kind = payload.kind
        if kind is None and payload.method in procedures.METHOD_SPECS:
            kind = procedures.METHOD_SPECS[payload.method][1]
        try:
            values = ValueVector(kind=kind, values=tuple(payload.values))
        except ValueError as exc:
            raise ApiError("bad_request", str(exc))
        try:
            s = _build_session(payload.method, values, payload.alpha,
                               payload.lam)
        except (ValueError, CapExceededError) as exc:
            if isinstance(exc, ApiError):
                raise
            raise ApiError("bad_request", str(exc))
        store.add(s)
        return _summary(s)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _summary(store.get(session_id))

    @app.post("/sessions/{session_id}/membership")
    def query_membership(session_id: str, payload: MembershipPayload):
        s = store.get(session_id)
        loss = _parse_loss(payload.loss)
        r_mask = _parse_set(payload.set, s.collection.m)
        cert = _certify(s, loss, s.alpha, r_mask)
        with s.lock:
            entry = _append_audit(store, s, "membership", loss, s.alpha,
                                  r_mask, cert, binding=False)
        return _clean({"certificate": cert.to_dict(),
                       "certificate_id": entry["certificate_id"],
                       "alpha": s.alpha})

    @app.post("/sessions/{session_id}/switch-loss")
    def switch_loss(session_id: str, payload: SwitchLossPayload):
        s = store.get(session_id)
        loss = _parse_loss(payload.loss)
        try:
            if loss.name == "kfwer" and loss.params.get("k") == 1:
                rejected = engine.fwer_reject_set(s.collection, s.alpha)
            else:
                rejected = engine.largest_member(s.collection, loss, s.alpha)
        except CapExceededError as exc:
            raise ApiError("cap_exceeded", str(exc))
        cert = _certify(s, loss, s.alpha, rejected)
        with s.lock:
            entry = _append_audit(store, s, "switch-loss", loss, s.alpha,
                                  rejected, cert, binding=False)
        return _clean({"loss": loss_to_dict(loss),
                       "rejected": list(indices_from_mask(rejected)),
                       "certificate": cert.to_dict(),
                       "certificate_id": entry["certificate_id"]})

    @app.post("/sessions/{session_id}/alpha")
    def set_alpha(session_id: str, payload: AlphaPayload):
        s = store.get(session_id)
        if not s.collection.alpha_independent:
            raise ApiError(
                "alpha_locked",
                "this collection bakes the level into its e-values; "
                "changing alpha would invalidate them")
        if not 0.0 < payload.alpha <= 1.0:
            raise ApiError("bad_request",
                           f"alpha must lie in (0, 1], got {payload.alpha}")
        name = procedures.METHOD_SPECS[s.method_token][0]
        with s.lock:
            result = procedures.closed_variant(name, s.values, payload.alpha,
                                               lam=s.lam)
            if collection_fingerprint(result.collection) != s.fingerprint:
                raise ApiError("bad_request",
                               "level change altered the collection; refusing")
            s.alpha = payload.alpha
            s.largest = result.rejected
            s.diagnostics = result.diagnostics
            cert = _certify(s, fdp_loss(), s.alpha, s.largest)
            _append_audit(store, s, "set-alpha", fdp_loss(), s.alpha,
                          s.largest, cert, binding=False)
        return _summary(s)

    @app.post("/sessions/{session_id}/finalize")
    def finalize(session_id: str, payload: FinalizePayload):
        s = store.get(session_id)
        loss = _parse_loss(payload.loss)
        alpha = payload.alpha if payload.alpha is not None else s.alpha
        if not 0.0 < alpha <= 1.0:
            raise ApiError("bad_request", f"alpha must lie in (0, 1], got {alpha}")
        if alpha != s.alpha and not s.collection.alpha_independent:
            raise ApiError(
                "alpha_locked",
                "finalize at a different level needs an alpha-independent "
                "collection")
        r_mask = _parse_set(payload.set, s.collection.m)
        with s.lock:
            prior = [(loss_from_dict(e["loss"]), e["alpha"],
                      mask_from_indices(e["set"], s.collection.m))
                     for e in s.audit if e["binding"]]
            steps = prior + [(loss, alpha, r_mask)]
            certs = [_certify(s, l, a, r) for l, a, r in steps]
            accepted = all(c.member for c in certs)
            cert = certs[-1]
            action = "finalize" if accepted else "finalize-rejected"
            entry = _append_audit(store, s, action, loss, alpha, r_mask, cert,
                                  binding=accepted)
        return _clean({
            "accepted": accepted,
            "certificate": cert.to_dict(),
            "certificate_id": entry["certificate_id"],
            "audit": {"fingerprint": s.fingerprint, "entries": s.audit},
        })

    @app.get("/sessions/{session_id}/audit")
    def get_audit(session_id: str):
        s = store.get(session_id)
        passed = all(e["certificate"]["member"] for e in s.audit
                     if e["binding"])
        return _clean({"fingerprint": s.fingerprint, "passed": passed,
                       "entries": s.audit})

    @app.get("/sessions/{session_id}/bound")
    def bound(session_id: str, set: str = ""):
        s = store.get(session_id)
        try:
            indices = [int(tok) for tok in set.split(",") if tok.strip()]
        except ValueError:
            raise ApiError("bad_request",
                           f"bad set {set!r}: expected indices like 1,2,3")
        r_mask = _parse_set(indices, s.collection.m)
        try:
            d = engine.true_discovery_bound(s.collection, s.alpha, r_mask)
        except CapExceededError as exc:
            raise ApiError("cap_exceeded", str(exc))
        return {"set": sorted(indices), "alpha": s.alpha,
                "true_discovery_bound": d}

    @app.get("/sessions/{session_id}/frontier")
    def frontier(session_id: str, set: str = "", loss: str = "fdp",
                 k: Optional[int] = None, gamma: Optional[float] = None):
        s = store.get(session_id)
        if not s.collection.alpha_independent:
            raise ApiError(
                "alpha_locked",
                "this collection bakes the level into its e-values; "
                "it has no level frontier")
        try:
            indices = [int(tok) for tok in set.split(",") if tok.strip()]
        except ValueError:
            raise ApiError("bad_request",
                           f"bad set {set!r}: expected indices like 1,2,3")
        r_mask = _parse_set(indices, s.collection.m)
        descriptor: dict = {"kind": loss}
        if k is not None:
            descriptor["k"] = k
        if gamma is not None:
            descriptor["gamma"] = gamma
        loss_fn = _parse_loss(descriptor)
        try:
            crit = engine.critical_alpha(s.collection, loss_fn, r_mask)
        except CapExceededError as exc:
            raise ApiError("cap_exceeded", str(exc))
        return _clean({"set": sorted(indices), "loss": loss_to_dict(loss_fn),
                       "alpha": s.alpha, "critical_alpha": crit})

    return app
