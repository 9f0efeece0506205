import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from vesselspace.cli import main as cli_main
from vesselspace.dbscan import read_clustered_csv
from vesselspace.pipeline import (
    ARTIFACTS,
    PipelineConfig,
    artifact_path,
    explore_ids,
    load_config,
    preset_config,
    read_features_csv,
    replay,
    run_stage,
)
from vesselspace.tsne import read_embedding_csv
from vesselspace.vae import load_checkpoint
from vesselspace.vesselgen import read_params_csv
from vesselspace.voxelizer import read_voxl

from conftest import micro_config


class TestPresets:
    def test_paper_preset_pins(self):
        cfg = preset_config("paper", seed=9)
        assert cfg.count == 15000
        assert cfg.resolution == 32
        assert cfg.vae.latent_dim == 128
        assert cfg.train.batch_size == 32
        assert cfg.train.epochs == 240
        assert cfg.train.split_fraction == 0.8
        assert (cfg.tsne_parametric.perplexity, cfg.tsne_parametric.learning_rate,
                cfg.tsne_parametric.iterations) == (30.0, 200.0, 1000)
        assert (cfg.tsne_feature.perplexity, cfg.tsne_feature.learning_rate,
                cfg.tsne_feature.iterations) == (50.0, 700.0, 3000)

    def test_desk_and_ci_pins(self):
        desk = preset_config("desk")
        assert desk.count == 2000
        assert desk.vae.encoder_channels == (1, 16, 32, 64, 128)
        assert desk.train.epochs >= 20
        ci = preset_config("ci")
        assert ci.count == 64
        assert ci.resolution == 16
        assert ci.explore_subset == "all"

    def test_presets_are_total(self):
        # every preset round-trips through its dict form with no gaps
        for name in ("paper", "desk", "ci"):
            cfg = preset_config(name, seed=3)
            back = PipelineConfig.from_dict(cfg.to_dict())
            assert back == cfg

    def test_resolution_conflict_rejected(self):
        from vesselspace import vae
        from vesselspace.errors import ConfigurationError

        with pytest.raises(ConfigurationError):
            PipelineConfig(resolution=16, vae=vae.VaeConfig())

    def test_config_file_overrides(self, tmp_path):
        path = tmp_path / "config.json"
        base = preset_config("ci", seed=1).to_dict()
        base["count"] = 48
        path.write_text(json.dumps(base))
        cfg = load_config(path, seed=5)
        assert cfg.count == 48
        assert cfg.seed == 5
        assert cfg.train.seed == 5


class TestArtifacts:
    def test_all_artifacts_exist_and_parse(self, micro_run):
        config, out_dir = micro_run
        for name in ARTIFACTS:
            assert artifact_path(out_dir, name).exists(), name
        ids, vessels = read_params_csv(artifact_path(out_dir, "params"))
        assert len(vessels) == 40
        grids = read_voxl(artifact_path(out_dir, "voxels"))
        assert len(grids) == 40
        assert grids[0].resolution == 16
        model = load_checkpoint(artifact_path(out_dir, "checkpoint"))
        assert model.config.latent_dim == 16
        fids, feats = read_features_csv(artifact_path(out_dir, "features"))
        assert feats.shape == (40, 16)
        for space in ("parametric", "feature"):
            emb = read_embedding_csv(artifact_path(out_dir, f"{space}_embedding"))
            assert emb.coords.shape == (40, 2)
            cids, coords, labels = read_clustered_csv(
                artifact_path(out_dir, f"{space}_clustered")
            )
            assert sorted(cids) == sorted(fids)
            assert np.all(labels >= -1)
        report = json.loads(artifact_path(out_dir, "report").read_text())
        assert set(report) == {"parametric", "feature", "deltas", "warnings"}
        for kind in ("parametric", "feature"):
            for metric in ("noise_fraction", "trustworthiness", "mean_neighbor_iou"):
                assert 0.0 <= report[kind][metric] <= 1.0

    def test_losses_history_matches_epochs(self, micro_run):
        config, out_dir = micro_run
        lines = artifact_path(out_dir, "losses").read_text().splitlines()
        assert len(lines) - 1 == config.train.epochs

    def test_svgs_well_formed(self, micro_run):
        import xml.etree.ElementTree as ET

        _, out_dir = micro_run
        for name in ("parametric_map", "feature_map", "compare_map"):
            root = ET.fromstring(artifact_path(out_dir, name).read_text())
            assert root.tag.endswith("svg")

    def test_explore_subset_modes(self):
        cfg = micro_config()
        assert np.array_equal(explore_ids(cfg), np.arange(40))
        from dataclasses import replace

        cfg_test = replace(cfg, explore_subset="test")
        ids = explore_ids(cfg_test)
        assert len(ids) == 8  # 20% of 40
        assert np.all(np.diff(ids) > 0)


class TestProvenance:
    @pytest.mark.parametrize(
        "stage",
        ["gen", "voxelize", "train", "encode", "embed", "cluster", "render", "compare"],
    )
    def test_replay_is_byte_identical(self, micro_run, stage):
        _, out_dir = micro_run
        sidecar = Path(out_dir) / f"{stage}.sidecar.json"
        assert sidecar.exists()
        meta = json.loads(sidecar.read_text())
        outputs = [Path(out_dir) / rel for rel in meta["outputs"]]
        before = {p: p.read_bytes() for p in outputs}
        replay(sidecar)
        for p, blob in before.items():
            assert p.read_bytes() == blob, f"{stage} replay changed {p.name}"

    def test_sidecar_records_config_and_hashes(self, micro_run):
        config, out_dir = micro_run
        meta = json.loads((Path(out_dir) / "embed.sidecar.json").read_text())
        assert meta["seed"] == config.seed
        assert meta["config"]["count"] == 40
        assert set(meta["inputs"]) == {"params", "features"}
        for digest in meta["inputs"].values():
            assert len(digest) == 64


class TestCli:
    def test_gen_stage_via_cli(self, tmp_path):
        out = tmp_path / "run"
        code = cli_main(
            ["vessel", "gen", "--preset", "ci", "--seed", "2", "--out", str(out)]
        )
        assert code == 0
        ids, vessels = read_params_csv(out / "params.csv")
        assert len(vessels) == 64

    def test_missing_input_exits_3(self, tmp_path, capsys):
        code = cli_main(["space", "embed", "--preset", "ci", "--out", str(tmp_path)])
        assert code == 3
        assert "params.csv" in capsys.readouterr().err

    def test_config_conflict_exits_2(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert cli_main(["vessel", "gen", "--preset", "ci", "--out", str(out)]) == 0
        assert cli_main(["vessel", "voxelize", "--preset", "ci", "--out", str(out)]) == 0
        # desk preset expects R=32 voxels; the run holds R=16
        code = cli_main(["vae", "train", "--preset", "desk", "--out", str(out)])
        assert code == 2
        assert "resolution" in capsys.readouterr().err

    def test_compare_requires_both_embeddings(self, micro_run, tmp_path):
        _, out_dir = micro_run
        partial = tmp_path / "partial"
        partial.mkdir()
        for name in ("params", "voxels", "features", "parametric_clustered"):
            shutil.copy(artifact_path(out_dir, name), partial / ARTIFACTS[name])
        code = cli_main(["space", "compare", "--preset", "ci", "--out", str(partial)])
        assert code == 3
