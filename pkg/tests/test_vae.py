import numpy as np
import pytest

from vesselspace.errors import (
    ConfigurationError,
    DataError,
    DimensionError,
    NumericError,
)
from vesselspace.vae import (
    TINY_CHANNELS,
    LossBreakdown,
    TrainConfig,
    Vae,
    VaeConfig,
    load_checkpoint,
    reparameterize,
    save_checkpoint,
    split_indices,
    train,
    write_losses_csv,
)
from vesselspace.vesselgen import generate_dataset
from vesselspace.voxelizer import voxelize


def tiny_config(latent=16):
    return VaeConfig(
        resolution=16,
        latent_dim=latent,
        encoder_channels=TINY_CHANNELS[0],
        decoder_channels=TINY_CHANNELS[1],
    )


@pytest.fixture(scope="module")
def tiny_model():
    return Vae.build(tiny_config(), seed=7)


@pytest.fixture(scope="module")
def tiny_grids():
    params = generate_dataset(6, seed=21)
    return np.stack([voxelize(p, 16).occupancy for p in params]).astype(np.float64)


class TestBuild:
    def test_default_config_shapes(self):
        cfg = VaeConfig()
        model = Vae.build(cfg, seed=0)
        x = np.zeros((2, 1, 32, 32, 32))
        x[:, :, 2:10, 2:10, 2:10] = 1.0
        mu, logvar, _ = model.encode_forward(x, training=False)
        assert mu.shape == (2, 128)
        assert logvar.shape == (2, 128)
        # weight ladder matches the documented channel progression
        assert model.params["enc0.conv.w"].shape == (32, 1, 4, 4, 4)
        assert model.params["enc3.conv.w"].shape == (256, 128, 4, 4, 4)
        assert model.params["fc_mu.w"].shape == (128, 256 * 8)
        assert model.params["dec0.tconv.w"].shape == (256, 128, 4, 4, 4)

    def test_decode_encode_roundtrip_shape_and_range(self, tiny_model, tiny_grids):
        out = tiny_model.encode(tiny_grids[:3], mode="eval")
        probs = tiny_model.decode(out.mu, mode="eval")
        assert probs.shape == (3, 1, 16, 16, 16)
        assert np.all((probs > 0) & (probs < 1))

    def test_equal_seeds_bitwise_equal_weights(self):
        a = Vae.build(tiny_config(), seed=3)
        b = Vae.build(tiny_config(), seed=3)
        for k in a.params:
            assert np.array_equal(a.params[k], b.params[k]), k

    def test_inconsistent_ladder_rejected(self):
        with pytest.raises(ConfigurationError):
            VaeConfig(encoder_channels=(1, 8, 16), decoder_channels=(32, 16, 8))
        with pytest.raises(ConfigurationError):
            VaeConfig(resolution=24)  # not divisible by 2^4

    def test_layer_specs_cover_architecture(self, tiny_model):
        kinds = [s.kind for s in tiny_model.layer_specs()]
        assert kinds.count("conv3d") == 5  # 4 blocks + head
        assert kinds.count("conv_transpose3d") == 4
        assert kinds[-1] == "sigmoid"


class TestEncode:
    def test_eval_mode_batch_independence(self, tiny_model, tiny_grids):
        alone = tiny_model.encode(tiny_grids[:1], mode="eval").mu
        batched = tiny_model.encode(tiny_grids[:4], mode="eval").mu
        assert np.allclose(alone[0], batched[0], atol=1e-9)

    def test_identical_inputs_identical_rows(self, tiny_model, tiny_grids):
        pair = np.stack([tiny_grids[0], tiny_grids[0], tiny_grids[1]])
        mu = tiny_model.encode(pair, mode="eval").mu
        assert np.array_equal(mu[0], mu[1])

    def test_wrong_resolution_rejected(self, tiny_model):
        with pytest.raises(DimensionError):
            tiny_model.encode(np.zeros((1, 1, 8, 8, 8)), mode="eval")

    def test_finite_mu(self, tiny_model, tiny_grids):
        mu = tiny_model.encode(tiny_grids, mode="eval").mu
        assert np.all(np.isfinite(mu))
        assert mu.shape == (6, 16)


class TestReparameterize:
    def test_vanishing_noise_limit(self, tiny_model, tiny_grids):
        out = tiny_model.encode(tiny_grids[:2], mode="eval")
        out.logvar = np.full_like(out.logvar, -50.0)
        z = reparameterize(out, seed=0)
        assert np.allclose(z, out.mu, atol=1e-9)

    def test_moments(self):
        from vesselspace.vae import EncoderOutput

        B, L = 100, 100  # 10^4 samples
        out = EncoderOutput(mu=np.zeros((B, L)), logvar=np.zeros((B, L)))
        z = reparameterize(out, seed=123)
        assert abs(z.mean()) < 0.05
        assert abs(z.var() - 1.0) < 0.05

    def test_equal_seeds_equal_draws(self, tiny_model, tiny_grids):
        out = tiny_model.encode(tiny_grids[:2], mode="eval")
        assert np.array_equal(reparameterize(out, 9), reparameterize(out, 9))


class TestDecode:
    def test_zero_latent_valid_grid(self, tiny_model):
        probs = tiny_model.decode(np.zeros((1, 16)))
        assert np.all(np.isfinite(probs))
        assert np.all((probs > 0) & (probs < 1))

    def test_wrong_latent_size(self, tiny_model):
        with pytest.raises(DimensionError):
            tiny_model.decode(np.zeros((1, 17)))

    def test_nonfinite_latent(self, tiny_model):
        z = np.zeros((1, 16))
        z[0, 3] = np.nan
        with pytest.raises(NumericError):
            tiny_model.decode(z)


class TestSplit:
    def test_paper_scale_split(self):
        train_idx, val_idx = split_indices(15000, 0.8, seed=0)
        assert len(train_idx) == 12000
        assert len(val_idx) == 3000
        assert len(np.intersect1d(train_idx, val_idx)) == 0
        assert len(np.union1d(train_idx, val_idx)) == 15000

    def test_deterministic(self):
        a = split_indices(100, 0.8, seed=5)
        b = split_indices(100, 0.8, seed=5)
        assert np.array_equal(a[0], b[0])


@pytest.fixture(scope="module")
def small_run():
    params = generate_dataset(48, seed=33)
    grids = np.stack([voxelize(p, 16).occupancy for p in params])
    cfg = TrainConfig(
        batch_size=8, epochs=3, learning_rate=1e-3, split_fraction=0.75,
        patience=10, seed=4,
    )
    return train(grids, cfg, tiny_config())


class TestTrain:

    def test_history_identity_and_progress(self, small_run):
        model, history = small_run
        assert len(history) == 3
        for h in history:
            assert h.train_total == pytest.approx(h.train_recon + h.train_kld, abs=1e-9)
            assert h.val_total == pytest.approx(h.val_recon + h.val_kld, abs=1e-9)
            assert np.isfinite(h.train_total)
        assert model.metadata["train_size"] == 36
        assert model.metadata["val_size"] == 12

    def test_too_small_dataset_rejected(self):
        grids = np.zeros((10, 16, 16, 16), dtype=np.uint8)
        with pytest.raises(ConfigurationError):
            train(grids, TrainConfig(batch_size=8, epochs=1), tiny_config())

    def test_resolution_conflict_rejected(self):
        grids = np.zeros((64, 8, 8, 8), dtype=np.uint8)
        with pytest.raises(ConfigurationError):
            train(grids, TrainConfig(batch_size=8, epochs=1), tiny_config())

    def test_losses_csv(self, small_run, tmp_path):
        _, history = small_run
        path = tmp_path / "losses.csv"
        write_losses_csv(path, history)
        lines = path.read_text().splitlines()
        assert lines[0] == LossBreakdown.CSV_HEADER
        assert len(lines) == 4


class TestCheckpoint:
    def test_roundtrip_outputs_close(self, tmp_path, tiny_model, tiny_grids):
        path = tmp_path / "model.vaec"
        save_checkpoint(tiny_model, path)
        back = load_checkpoint(path)
        z = tiny_model.encode(tiny_grids[:2], mode="eval").mu
        a = tiny_model.decode(z)
        b = back.decode(back.encode(tiny_grids[:2], mode="eval").mu)
        denom = np.maximum(np.abs(a), 1e-6)
        assert np.max(np.abs(a - b) / denom) <= 1e-5

    def test_roundtrip_bit_exact(self, tmp_path, tiny_model):
        p1 = tmp_path / "m1.vaec"
        p2 = tmp_path / "m2.vaec"
        save_checkpoint(tiny_model, p1)
        save_checkpoint(load_checkpoint(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_corrupted_magic(self, tmp_path, tiny_model):
        path = tmp_path / "bad.vaec"
        save_checkpoint(tiny_model, path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        path.write_bytes(bytes(raw))
        with pytest.raises(DataError):
            load_checkpoint(path)

    def test_truncated_file(self, tmp_path, tiny_model):
        path = tmp_path / "short.vaec"
        save_checkpoint(tiny_model, path)
        path.write_bytes(path.read_bytes()[:-100])
        with pytest.raises(DataError):
            load_checkpoint(path)

    def test_config_mismatch(self, tmp_path, tiny_model):
        path = tmp_path / "m.vaec"
        save_checkpoint(tiny_model, path)
        with pytest.raises(ConfigurationError):
            load_checkpoint(path, expect_config=VaeConfig())


class TestExtractFeatures:
    def test_shape_and_permutation(self, tiny_model, tiny_grids):
        feats = tiny_model.extract_features(tiny_grids, batch_size=4)
        assert feats.shape == (6, 16)
        perm = np.array([3, 1, 5, 0, 2, 4])
        feats_perm = tiny_model.extract_features(tiny_grids[perm], batch_size=3)
        assert np.allclose(feats_perm, feats[perm], atol=1e-9)

    def test_duplicates(self, tiny_model, tiny_grids):
        doubled = np.concatenate([tiny_grids[:2], tiny_grids[:2]])
        feats = tiny_model.extract_features(doubled)
        assert np.array_equal(feats[:2], feats[2:])
