import pytest

from vesselspace import tsne, vae
from vesselspace.pipeline import PipelineConfig, run_all


def micro_config(seed=11):
    """Smallest full-pipeline configuration that still exercises every stage."""
    enc, dec = vae.TINY_CHANNELS
    return PipelineConfig(
        preset="ci",
        seed=seed,
        count=40,
        resolution=16,
        explore_subset="all",
        vae=vae.VaeConfig(
            resolution=16, latent_dim=16, encoder_channels=enc, decoder_channels=dec
        ),
        train=vae.TrainConfig(
            batch_size=8, epochs=2, learning_rate=1e-3, kld_weight=1.0,
            split_fraction=0.8, patience=10, seed=seed,
        ),
        tsne_parametric=tsne.TsneConfig(
            perplexity=6.0, learning_rate=100.0, iterations=80, seed=seed
        ),
        tsne_feature=tsne.TsneConfig(
            perplexity=6.0, learning_rate=100.0, iterations=80, seed=seed
        ),
        canvas_size=640,
        glyph_size=40.0,
    )


@pytest.fixture(scope="session")
def micro_run(tmp_path_factory):
    """One finished micro-scale pipeline run shared across test modules."""
    out_dir = tmp_path_factory.mktemp("micro_run")
    config = micro_config()
    run_all(config, out_dir)
    return config, out_dir
