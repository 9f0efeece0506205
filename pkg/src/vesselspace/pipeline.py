"""Pipeline stages over file artifacts, with presets and provenance sidecars.

Every stage reads its documented inputs, writes its documented outputs under
one output directory, and drops a `<stage>.sidecar.json` recording the full
effective configuration, the seed, and input/output hashes. Re-running a
stage from its sidecar (`replay`) reproduces byte-identical outputs.

Presets:
  paper  15,000 vessels, R=32, full channels, 240 epochs - the publication
         scale (hours of CPU training; not used by the test suite)
  desk   2,000 vessels, R=32, half channels - tractable on a workstation
  ci     64 vessels, R=16, tiny channels - minutes end to end
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, dbscan, metrics, spacemap, tsne
from . import vae as vae_mod
from .errors import ConfigurationError, DataError
from .vesselgen import (
    ParamRanges,
    generate_dataset,
    params_to_matrix,
    read_params_csv,
    write_params_csv,
)
from .voxelizer import read_voxl, section_slice, voxelize, write_voxl

ARTIFACTS = {
    "params": "params.csv",
    "voxels": "vessels.voxl",
    "checkpoint": "model.vaec",
    "losses": "losses.csv",
    "features": "features.csv",
    "parametric_embedding": "parametric_embedding.csv",
    "feature_embedding": "feature_embedding.csv",
    "parametric_clustered": "parametric_clustered.csv",
    "feature_clustered": "feature_clustered.csv",
    "parametric_map": "parametric_clustered.svg",
    "feature_map": "feature_clustered.svg",
    "compare_map": "compare_maps.svg",
    "report": "compare_report.json",
}

STAGE_ORDER = (
    "gen", "voxelize", "train", "encode", "embed", "cluster", "render", "compare",
)


@dataclass(frozen=True)
class PipelineConfig:
    preset: str = "desk"
    seed: int = 0
    count: int = 2000
    resolution: int = 32
    explore_subset: str = "test"  # "test": held-out split; "all": every vessel
    ranges: ParamRanges = field(default_factory=ParamRanges)
    vae: vae_mod.VaeConfig = field(default_factory=vae_mod.VaeConfig)
    train: vae_mod.TrainConfig = field(default_factory=vae_mod.TrainConfig)
    tsne_parametric: tsne.TsneConfig = field(default_factory=tsne.TsneConfig)
    tsne_feature: tsne.TsneConfig = field(
        default_factory=lambda: tsne.TsneConfig(
            perplexity=50.0, learning_rate=700.0, iterations=3000
        )
    )
    dbscan_parametric: dbscan.DbscanConfig | None = None  # None: data-driven eps
    dbscan_feature: dbscan.DbscanConfig | None = None
    dbscan_min_pts: int = 8
    trust_k: int = 12
    neighbor_k: int = 5
    canvas_size: int = 1200
    glyph_size: float = 24.0
    decode_threshold: float = 0.5

    def __post_init__(self):
        if self.explore_subset not in ("test", "all"):
            raise ConfigurationError(
                f"explore_subset must be 'test' or 'all', got {self.explore_subset!r}"
            )
        if self.count < 1:
            raise ConfigurationError("count must be >= 1")
        if self.resolution != self.vae.resolution:
            raise ConfigurationError(
                f"pipeline resolution {self.resolution} conflicts with model "
                f"resolution {self.vae.resolution}"
            )

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "seed": self.seed,
            "count": self.count,
            "resolution": self.resolution,
            "explore_subset": self.explore_subset,
            "ranges": self.ranges.to_dict(),
            "vae": self.vae.to_dict(),
            "train": self.train.to_dict(),
            "tsne_parametric": self.tsne_parametric.to_dict(),
            "tsne_feature": self.tsne_feature.to_dict(),
            "dbscan_parametric": (
                self.dbscan_parametric.to_dict() if self.dbscan_parametric else None
            ),
            "dbscan_feature": (
                self.dbscan_feature.to_dict() if self.dbscan_feature else None
            ),
            "dbscan_min_pts": self.dbscan_min_pts,
            "trust_k": self.trust_k,
            "neighbor_k": self.neighbor_k,
            "canvas_size": self.canvas_size,
            "glyph_size": self.glyph_size,
            "decode_threshold": self.decode_threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        d["ranges"] = ParamRanges.from_dict(d["ranges"])
        d["vae"] = vae_mod.VaeConfig.from_dict(d["vae"])
        d["train"] = vae_mod.TrainConfig.from_dict(d["train"])
        d["tsne_parametric"] = tsne.TsneConfig.from_dict(d["tsne_parametric"])
        d["tsne_feature"] = tsne.TsneConfig.from_dict(d["tsne_feature"])
        for key in ("dbscan_parametric", "dbscan_feature"):
            if d.get(key) is not None:
                d[key] = dbscan.DbscanConfig.from_dict(d[key])
        return cls(**d)


def preset_config(name: str, seed: int = 0) -> PipelineConfig:
    """Fully pinned configuration for one of the documented presets."""
    if name == "paper":
        enc, dec = vae_mod.PAPER_CHANNELS
        return PipelineConfig(
            preset="paper",
            seed=seed,
            count=15000,
            resolution=32,
            explore_subset="test",
            vae=vae_mod.VaeConfig(
                resolution=32, latent_dim=128, encoder_channels=enc, decoder_channels=dec
            ),
            train=vae_mod.TrainConfig(
                batch_size=32, epochs=240, learning_rate=5e-5, kld_weight=1.0,
                split_fraction=0.8, patience=20, seed=seed,
            ),
            tsne_parametric=tsne.TsneConfig(
                perplexity=30.0, learning_rate=200.0, iterations=1000, seed=seed
            ),
            tsne_feature=tsne.TsneConfig(
                perplexity=50.0, learning_rate=700.0, iterations=3000, seed=seed
            ),
            canvas_size=1600,
            glyph_size=20.0,
        )
    if name == "desk":
        enc, dec = vae_mod.DESK_CHANNELS
        return PipelineConfig(
            preset="desk",
            seed=seed,
            count=2000,
            resolution=32,
            explore_subset="test",
            vae=vae_mod.VaeConfig(
                resolution=32, latent_dim=128, encoder_channels=enc, decoder_channels=dec
            ),
            train=vae_mod.TrainConfig(
                batch_size=32, epochs=24, learning_rate=1e-3, kld_weight=1.0,
                split_fraction=0.8, patience=20, seed=seed,
            ),
            tsne_parametric=tsne.TsneConfig(
                perplexity=30.0, learning_rate=200.0, iterations=1000, seed=seed
            ),
            tsne_feature=tsne.TsneConfig(
                perplexity=50.0, learning_rate=700.0, iterations=3000, seed=seed
            ),
            canvas_size=1200,
            glyph_size=28.0,
        )
    if name == "ci":
        enc, dec = vae_mod.TINY_CHANNELS
        return PipelineConfig(
            preset="ci",
            seed=seed,
            count=64,
            resolution=16,
            explore_subset="all",
            vae=vae_mod.VaeConfig(
                resolution=16, latent_dim=16, encoder_channels=enc, decoder_channels=dec
            ),
            train=vae_mod.TrainConfig(
                batch_size=16, epochs=8, learning_rate=2e-3, kld_weight=1.0,
                split_fraction=0.8, patience=20, seed=seed,
            ),
            tsne_parametric=tsne.TsneConfig(
                perplexity=8.0, learning_rate=100.0, iterations=300, seed=seed
            ),
            tsne_feature=tsne.TsneConfig(
                perplexity=8.0, learning_rate=100.0, iterations=300, seed=seed
            ),
            canvas_size=640,
            glyph_size=40.0,
        )
    raise ConfigurationError(f"unknown preset {name!r} (expected paper, desk, or ci)")


def load_config(path, preset: str | None = None, seed: int | None = None) -> PipelineConfig:
    """Config file (JSON, PipelineConfig schema) over preset defaults."""
    base = preset_config(preset, seed or 0) if preset else None
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if base is not None:
        merged = base.to_dict()
        merged.update(raw)
        raw = merged
    if seed is not None:
        raw["seed"] = seed
        raw.setdefault("train", {})
        raw["train"]["seed"] = seed
        for key in ("tsne_parametric", "tsne_feature"):
            if key in raw:
                raw[key]["seed"] = seed
    return PipelineConfig.from_dict(raw)


# --- artifact paths and provenance ------------------------------------------


def artifact_path(out_dir, name: str) -> Path:
    return Path(out_dir) / ARTIFACTS[name]


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _require(out_dir, name: str) -> Path:
    path = artifact_path(out_dir, name)
    if not path.exists():
        raise DataError(
            f"stage input missing: {path} (expected {ARTIFACTS[name]!r}; "
            f"run the producing stage first)"
        )
    return path


def _write_sidecar(out_dir, stage: str, config: PipelineConfig,
                   inputs: list[str], outputs: list[str]) -> None:
    sidecar = {
        "stage": stage,
        "seed": config.seed,
        "package_version": __version__,
        "config": config.to_dict(),
        "inputs": {
            name: _sha256(artifact_path(out_dir, name)) for name in inputs
        },
        "outputs": [ARTIFACTS[name] for name in outputs],
    }
    path = Path(out_dir) / f"{stage}.sidecar.json"
    path.write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def replay(sidecar_path) -> list[Path]:
    """Re-run a stage exactly as its sidecar records, in the same directory."""
    sidecar_path = Path(sidecar_path)
    meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
    config = PipelineConfig.from_dict(meta["config"])
    return run_stage(meta["stage"], config, sidecar_path.parent)


# --- stages ------------------------------------------------------------------


def stage_gen(config: PipelineConfig, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vessels = generate_dataset(config.count, config.seed, config.ranges)
    path = artifact_path(out_dir, "params")
    write_params_csv(path, vessels)
    _write_sidecar(out_dir, "gen", config, [], ["params"])
    return [path]


def stage_voxelize(config: PipelineConfig, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    _, vessels = read_params_csv(_require(out_dir, "params"))
    grids = [voxelize(p, config.resolution) for p in vessels]
    path = artifact_path(out_dir, "voxels")
    write_voxl(path, grids)
    _write_sidecar(out_dir, "voxelize", config, ["params"], ["voxels"])
    return [path]


def stage_train(config: PipelineConfig, out_dir, progress=None) -> list[Path]:
    out_dir = Path(out_dir)
    voxl_path = _require(out_dir, "voxels")
    grids = read_voxl(voxl_path)
    if grids[0].resolution != config.vae.resolution:
        raise ConfigurationError(
            f"voxel resolution {grids[0].resolution} conflicts with model "
            f"resolution {config.vae.resolution}"
        )
    data = np.stack([g.occupancy for g in grids])
    model, history = vae_mod.train(data, config.train, config.vae, progress=progress)
    ckpt = artifact_path(out_dir, "checkpoint")
    vae_mod.save_checkpoint(model, ckpt)
    losses = artifact_path(out_dir, "losses")
    vae_mod.write_losses_csv(losses, history)
    _write_sidecar(out_dir, "train", config, ["voxels"], ["checkpoint", "losses"])
    return [ckpt, losses]


def explore_ids(config: PipelineConfig) -> np.ndarray:
    """Vessel ids of the exploration subset, ascending."""
    if config.explore_subset == "all":
        return np.arange(config.count, dtype=np.int64)
    _, val_idx = vae_mod.split_indices(
        config.count, config.train.split_fraction, config.train.seed
    )
    return np.sort(val_idx).astype(np.int64)


def stage_encode(config: PipelineConfig, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    model = vae_mod.load_checkpoint(_require(out_dir, "checkpoint"))
    grids = read_voxl(_require(out_dir, "voxels"))
    if model.config.resolution != grids[0].resolution:
        raise ConfigurationError(
            f"checkpoint resolution {model.config.resolution} conflicts with "
            f"voxel resolution {grids[0].resolution}"
        )
    ids = explore_ids(config)
    data = np.stack([grids[int(i)].occupancy for i in ids])
    feats = model.extract_features(data)
    path = artifact_path(out_dir, "features")
    header = ["id"] + [f"f{j}" for j in range(feats.shape[1])]
    lines = [",".join(header)]
    for vid, row in zip(ids, feats):
        lines.append(",".join([str(int(vid))] + [f"{v:.9g}" for v in row]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_sidecar(out_dir, "encode", config, ["checkpoint", "voxels"], ["features"])
    return [path]


def read_features_csv(path):
    """Returns (ids, matrix [N, latent])."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"features file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("id,f0"):
        raise DataError(f"{path}: unexpected features header")
    ids, rows = [], []
    for line in lines[1:]:
        cells = line.split(",")
        ids.append(int(cells[0]))
        rows.append([float(v) for v in cells[1:]])
    return np.array(ids, dtype=np.int64), np.array(rows, dtype=np.float64)


def stage_embed(config: PipelineConfig, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    ids_all, vessels = read_params_csv(_require(out_dir, "params"))
    feat_ids, feats = read_features_csv(_require(out_dir, "features"))
    subset = {int(i) for i in feat_ids}
    rows = [r for r, vid in enumerate(ids_all) if int(vid) in subset]
    param_matrix = params_to_matrix([vessels[r] for r in rows])
    param_ids = ids_all[rows]
    if not np.array_equal(np.sort(param_ids), np.sort(feat_ids)):
        raise DataError("params.csv and features.csv cover different vessel ids")
    # parameters are min-max scaled per column; features are used raw
    scaled = tsne.minmax_scale_columns(param_matrix)
    emb_param = tsne.run(scaled, config.tsne_parametric, ids=param_ids)
    emb_feat = tsne.run(feats, config.tsne_feature, ids=feat_ids)
    p_path = artifact_path(out_dir, "parametric_embedding")
    f_path = artifact_path(out_dir, "feature_embedding")
    tsne.write_embedding_csv(p_path, emb_param)
    tsne.write_embedding_csv(f_path, emb_feat)
    _write_sidecar(
        out_dir, "embed", config, ["params", "features"],
        ["parametric_embedding", "feature_embedding"],
    )
    return [p_path, f_path]


def _cluster_one(embedding_path, cfg, min_pts):
    emb = tsne.read_embedding_csv(embedding_path)
    if cfg is None:
        cfg = dbscan.DbscanConfig(
            eps=dbscan.default_eps(emb.coords), min_pts=min_pts
        )
    labels = dbscan.dbscan(emb.coords, cfg)
    return emb, labels, cfg


def stage_cluster(config: PipelineConfig, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    outputs = []
    for space, cfg in (
        ("parametric", config.dbscan_parametric),
        ("feature", config.dbscan_feature),
    ):
        emb, labels, _ = _cluster_one(
            _require(out_dir, f"{space}_embedding"), cfg, config.dbscan_min_pts
        )
        path = artifact_path(out_dir, f"{space}_clustered")
        dbscan.write_clustered_csv(path, emb.ids, emb.coords, labels.labels)
        outputs.append(path)
    _write_sidecar(
        out_dir, "cluster", config,
        ["parametric_embedding", "feature_embedding"],
        ["parametric_clustered", "feature_clustered"],
    )
    return outputs


def _load_space_map(config, out_dir, space, glyph_cache):
    ids, coords, labels = dbscan.read_clustered_csv(
        _require(out_dir, f"{space}_clustered")
    )
    emb = tsne.Embedding2D(ids=ids, coords=coords)
    glyphs = {int(i): glyph_cache[int(i)] for i in ids}
    return spacemap.SpaceMap(
        embedding=emb,
        glyphs=glyphs,
        labels=labels,
        canvas_size=config.canvas_size,
        glyph_size=config.glyph_size,
    )


def _section_glyphs(out_dir) -> dict:
    grids = read_voxl(_require(out_dir, "voxels"))
    return {i: section_slice(g) for i, g in enumerate(grids)}


def stage_render(config: PipelineConfig, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    glyphs = _section_glyphs(out_dir)
    outputs = []
    maps = {}
    for space in ("parametric", "feature"):
        smap = _load_space_map(config, out_dir, space, glyphs)
        maps[space] = smap
        path = artifact_path(out_dir, f"{space}_map")
        path.write_text(spacemap.render_svg(smap), encoding="utf-8")
        outputs.append(path)
    compare_path = artifact_path(out_dir, "compare_map")
    compare_path.write_text(
        spacemap.compose_compare(
            maps["parametric"], maps["feature"],
            ("parametric design space", "feature design space"),
        ),
        encoding="utf-8",
    )
    outputs.append(compare_path)
    _write_sidecar(
        out_dir, "render", config,
        ["parametric_clustered", "feature_clustered", "voxels"],
        ["parametric_map", "feature_map", "compare_map"],
    )
    return outputs


def stage_compare(config: PipelineConfig, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    ids_all, vessels = read_params_csv(_require(out_dir, "params"))
    feat_ids, feats = read_features_csv(_require(out_dir, "features"))
    grids = read_voxl(_require(out_dir, "voxels"))
    voxels = {i: g.occupancy for i, g in enumerate(grids)}
    spaces = {}
    for space in ("parametric", "feature"):
        ids, coords, labels = dbscan.read_clustered_csv(
            _require(out_dir, f"{space}_clustered")
        )
        if space == "parametric":
            by_id = {int(v): vessels[r] for r, v in enumerate(ids_all)}
            source = tsne.minmax_scale_columns(
                params_to_matrix([by_id[int(i)] for i in ids])
            )
        else:
            feat_by_id = {int(v): feats[r] for r, v in enumerate(feat_ids)}
            source = np.stack([feat_by_id[int(i)] for i in ids])
        spaces[space] = metrics.SpaceMetrics(
            kind=space,
            cluster_count=int(labels.max() + 1) if labels.size else 0,
            noise_fraction=float(np.mean(labels == dbscan.NOISE)),
            trustworthiness=metrics.trustworthiness(source, coords, config.trust_k),
            mean_neighbor_iou=metrics.neighbor_iou(
                coords, ids, voxels, config.neighbor_k
            ),
        )
    report = metrics.build_report(spaces["parametric"], spaces["feature"])
    path = artifact_path(out_dir, "report")
    path.write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    _write_sidecar(
        out_dir, "compare", config,
        ["params", "features", "voxels", "parametric_clustered", "feature_clustered"],
        ["report"],
    )
    return [path]


_STAGES = {
    "gen": stage_gen,
    "voxelize": stage_voxelize,
    "train": stage_train,
    "encode": stage_encode,
    "embed": stage_embed,
    "cluster": stage_cluster,
    "render": stage_render,
    "compare": stage_compare,
}


def run_stage(stage: str, config: PipelineConfig, out_dir, progress=None) -> list[Path]:
    if stage not in _STAGES:
        raise ConfigurationError(f"unknown stage {stage!r}")
    if stage == "train":
        return stage_train(config, out_dir, progress=progress)
    return _STAGES[stage](config, out_dir)


def run_all(config: PipelineConfig, out_dir, progress=None) -> dict:
    """Chain every stage; returns stage -> list of written paths."""
    written = {}
    for stage in STAGE_ORDER:
        written[stage] = run_stage(stage, config, out_dir, progress=progress)
    return written
