"""Read-only-plus-decode HTTP service over a finished pipeline run.

The snapshot directory is an immutable bundle (checkpoint, params.csv,
vessels.voxl, both clustered embeddings, features.csv); it is loaded once at
startup and never mutated. Decoding runs on demand so users can explore
arbitrary latent points.

Voxel payloads reuse the VOXL record bit packing (LSB-first within each
byte, linear index x*R*R + y*R + z), base64-encoded; sections pack the R*R
central-slice bits the same way with index x*R + y.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .dbscan import read_clustered_csv
from .errors import DataError
from .pipeline import artifact_path, read_features_csv
from .vae import Vae, load_checkpoint
from .vesselgen import PARAM_FIELDS, read_params_csv
from .voxelizer import pack_record, read_voxl

MAX_INTERPOLATION_STEPS = 64


@dataclass
class SpaceSnapshot:
    """Immutable artifact bundle the service answers from."""

    model: Vae
    resolution: int
    params: dict  # id -> VesselParams
    voxels: dict  # id -> occupancy [R,R,R]
    latents: dict  # id -> np.ndarray [latent_dim]
    spaces: dict  # kind -> {"ids", "coords", "labels"}

    @property
    def latent_dim(self) -> int:
        return self.model.config.latent_dim


def load_snapshot(snapshot_dir) -> SpaceSnapshot:
    snapshot_dir = Path(snapshot_dir)
    if not snapshot_dir.is_dir():
        raise DataError(f"snapshot directory not found: {snapshot_dir}")
    model = load_checkpoint(artifact_path(snapshot_dir, "checkpoint"))
    ids, vessels = read_params_csv(artifact_path(snapshot_dir, "params"))
    grids = read_voxl(artifact_path(snapshot_dir, "voxels"))
    if len(grids) != len(ids):
        raise DataError("params.csv and vessels.voxl disagree on vessel count")
    feat_ids, feats = read_features_csv(artifact_path(snapshot_dir, "features"))
    spaces = {}
    for kind in ("parametric", "feature"):
        sids, coords, labels = read_clustered_csv(
            artifact_path(snapshot_dir, f"{kind}_clustered")
        )
        spaces[kind] = {"ids": sids, "coords": coords, "labels": labels}
    subset = set(int(i) for i in feat_ids)
    for kind, space in spaces.items():
        if set(int(i) for i in space["ids"]) != subset:
            raise DataError(
                f"{kind} embedding covers different ids than features.csv"
            )
    if feats.shape[1] != model.config.latent_dim:
        raise DataError(
            f"features.csv width {feats.shape[1]} does not match the "
            f"checkpoint latent dim {model.config.latent_dim}"
        )
    return SpaceSnapshot(
        model=model,
        resolution=grids[0].resolution,
        params={int(i): v for i, v in zip(ids, vessels)},
        voxels={int(i): g.occupancy for i, g in enumerate(grids)},
        latents={int(i): row for i, row in zip(feat_ids, feats)},
        spaces=spaces,
    )


def pack_section(occupancy: np.ndarray, resolution: int) -> str:
    """Central slice z = R//2 bit-packed (index x*R + y) and base64-encoded."""
    mid = resolution // 2
    bits = occupancy[:, :, mid].astype(np.uint8).ravel()
    return base64.b64encode(
        np.packbits(bits, bitorder="little").tobytes()
    ).decode("ascii")


def _decode_payload(snapshot: SpaceSnapshot, z: np.ndarray, threshold: float) -> dict:
    probs = snapshot.model.decode(z[None, :], mode="eval")[0, 0]
    occ = (probs >= threshold).astype(np.uint8)
    return {
        "resolution": snapshot.resolution,
        "voxels": base64.b64encode(pack_record(occ)).decode("ascii"),
        "occupied_count": int(occ.sum()),
        "section": pack_section(occ, snapshot.resolution),
    }


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(snapshot_dir) -> FastAPI:
    snapshot = load_snapshot(snapshot_dir)
    app = FastAPI(title="vesselspace explorer")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],  # local tool, no authentication
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.snapshot = snapshot

    @app.get("/api/spaces")
    def spaces():
        out = []
        for kind in ("parametric", "feature"):
            space = snapshot.spaces[kind]
            points = [
                {
                    "id": int(i),
                    "x": float(x),
                    "y": float(y),
                    "cluster": int(c),
                }
                for i, (x, y), c in zip(
                    space["ids"], space["coords"], space["labels"]
                )
            ]
            out.append({"kind": kind, "points": points})
        return {"spaces": out}

    @app.get("/api/vessel/{vessel_id}")
    def vessel(vessel_id: int):
        if vessel_id not in snapshot.latents:
            return _error(404, f"unknown vessel id {vessel_id}")
        p = snapshot.params[vessel_id]
        occ = snapshot.voxels[vessel_id]
        clusters = {}
        for kind, space in snapshot.spaces.items():
            row = np.flatnonzero(space["ids"] == vessel_id)
            clusters[kind] = int(space["labels"][row[0]])
        return {
            "id": vessel_id,
            "params": {f: float(getattr(p, f)) for f in PARAM_FIELDS},
            "latent": [float(v) for v in snapshot.latents[vessel_id]],
            "section": pack_section(occ, snapshot.resolution),
            "occupied_count": int(occ.sum()),
            "clusters": clusters,
        }

    @app.post("/api/decode")
    def decode(body: dict):
        z = body.get("z")
        threshold = float(body.get("threshold", 0.5))
        if not isinstance(z, list) or len(z) != snapshot.latent_dim:
            return _error(
                400,
                f"z must be a list of {snapshot.latent_dim} reals, "
                f"got length {len(z) if isinstance(z, list) else 'n/a'}",
            )
        try:
            arr = np.asarray(z, dtype=np.float64)
        except (TypeError, ValueError):
            return _error(400, "z must contain only real numbers")
        if not np.all(np.isfinite(arr)):
            return _error(400, "z contains nonfinite values")
        return _decode_payload(snapshot, arr, threshold)

    @app.post("/api/interpolate")
    def interpolate(body: dict):
        try:
            id_a = int(body["id_a"])
            id_b = int(body["id_b"])
            steps = int(body.get("steps", 8))
        except (KeyError, TypeError, ValueError):
            return _error(400, "body must carry id_a, id_b, and integer steps")
        if not 2 <= steps <= MAX_INTERPOLATION_STEPS:
            return _error(
                400, f"steps must lie in [2, {MAX_INTERPOLATION_STEPS}], got {steps}"
            )
        for vid in (id_a, id_b):
            if vid not in snapshot.latents:
                return _error(404, f"unknown vessel id {vid}")
        za = snapshot.latents[id_a]
        zb = snapshot.latents[id_b]
        alphas = np.linspace(0.0, 1.0, steps)
        zs = np.stack([(1.0 - a) * za + a * zb for a in alphas])
        probs = snapshot.model.decode(zs, mode="eval")[:, 0]
        occ = (probs >= 0.5).astype(np.uint8)
        return {
            "resolution": snapshot.resolution,
            "steps": [
                {
                    "alpha": float(a),
                    "section": pack_section(occ[i], snapshot.resolution),
                    "occupied_count": int(occ[i].sum()),
                }
                for i, a in enumerate(alphas)
            ],
        }

    return app


def serve(snapshot_dir, host: str = "127.0.0.1", port: int = 8080) -> None:
    import uvicorn

    uvicorn.run(create_app(snapshot_dir), host=host, port=port)
