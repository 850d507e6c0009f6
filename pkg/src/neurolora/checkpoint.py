"""JSON checkpoints.

Arrays are stored as ``{"shape": [...], "data": ["%.17g", ...]}`` so every
float64 round-trips exactly. A and W0 are never stored: they are
regenerated from their seeds and checked against stored sha256 hashes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .adapter import AdapterConfig, AdapterState, base_weight
from .gate import GateParams
from .projection import generate_projection

FORMAT = "neurolora-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed checkpoint or failed integrity check."""


def encode_array(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": ["%.17g" % v for v in a.ravel()]}


def decode_array(obj: dict) -> np.ndarray:
    try:
        data = np.array([float(v) for v in obj["data"]], dtype=np.float64)
        return data.reshape(obj["shape"])
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"bad array record: {exc}") from exc


def array_hash(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a, dtype="<f8").tobytes()).hexdigest()


def checkpoint_dict(state: AdapterState, provenance: dict | None = None) -> dict:
    c = state.config
    arrays = {"B": state.B, "B_init": state.B_init}
    if state.gate is not None:
        arrays.update(state.gate.arrays())
    if state.m_static is not None:
        arrays["m"] = state.m_static
    if state.A_dense is not None:
        arrays["A"] = state.A_dense
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": {
            "d_in": c.d_in,
            "d_out": c.d_out,
            "r": c.r,
            "k": c.k,
            "alpha": c.alpha,
            "rho": c.rho,
            "variant": c.variant,
            "d_h": c.d_h,
        },
        "projection": {**state.projection.params, "content_hash": state.projection.content_hash()},
        "base": {"seed": state.base_seed, "d_out": c.d_out, "d_in": c.d_in, "hash": array_hash(state.W0)},
        "init_seed": state.init_seed,
        "arrays": {name: encode_array(a) for name, a in sorted(arrays.items())},
        "provenance": provenance or {},
    }


def dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def save_checkpoint(path, state: AdapterState, provenance: dict | None = None) -> None:
    Path(path).write_text(dumps(checkpoint_dict(state, provenance)), encoding="utf-8")


def state_from_dict(obj: dict) -> tuple[AdapterState, dict]:
    if obj.get("format") != FORMAT:
        raise CheckpointError(f"not a {FORMAT} file")
    if obj.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {obj.get('version')}")
    try:
        config = AdapterConfig(**obj["config"])
        p = obj["projection"]
        proj = generate_projection(p["seed"], p["rho"], p["r"], p["d_in"])
        if proj.content_hash() != p["content_hash"]:
            raise CheckpointError("regenerated projection does not match its stored hash")
        base = obj["base"]
        W0 = base_weight(base["seed"], base["d_out"], base["d_in"])
        if array_hash(W0) != base["hash"]:
            raise CheckpointError("regenerated base weight does not match its stored hash")
        arrays = {name: decode_array(rec) for name, rec in obj["arrays"].items()}
        gate = None
        if config.variant == "neurolora":
            gate = GateParams(arrays["W1"], arrays["W2"], arrays["gamma"], arrays["beta"])
        state = AdapterState(
            config=config,
            projection=proj,
            B=arrays["B"],
            B_init=arrays["B_init"],
            W0=W0,
            base_seed=base["seed"],
            gate=gate,
            m_static=arrays.get("m"),
            A_dense=arrays.get("A"),
            init_seed=obj.get("init_seed"),
        )
    except KeyError as exc:
        raise CheckpointError(f"checkpoint is missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"invalid checkpoint: {exc}") from exc
    return state, obj.get("provenance", {})


def load_checkpoint(path) -> tuple[AdapterState, dict]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise CheckpointError(f"checkpoint not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    return state_from_dict(obj)
