"""Train a tiny voxel VAE end to end and reconstruct held-out vessels.

Uses the ci-scale configuration (R=16, small channel ladder) so the demo
finishes in about a minute on a laptop; the desk and paper presets follow
the same path at larger scale.
"""

import numpy as np

from vesselspace.vae import (
    TINY_CHANNELS,
    TrainConfig,
    VaeConfig,
    load_checkpoint,
    reparameterize,
    save_checkpoint,
    split_indices,
    train,
)
from vesselspace.vesselgen import generate_dataset
from vesselspace.voxelizer import voxelize

vessels = generate_dataset(count=96, seed=5)
grids = np.stack([voxelize(p, 16).occupancy for p in vessels])

model_config = VaeConfig(
    resolution=16,
    latent_dim=16,
    encoder_channels=TINY_CHANNELS[0],
    decoder_channels=TINY_CHANNELS[1],
)
train_config = TrainConfig(
    batch_size=16, epochs=12, learning_rate=2e-3, split_fraction=0.8, seed=5
)

model, history = train(
    grids, train_config, model_config,
    progress=lambda h: print(
        f"epoch {h.epoch:2d}: train {h.train_total:8.1f}  val {h.val_total:8.1f}"
    ),
)

_, val_idx = split_indices(len(grids), 0.8, 5)
print(f"\nheld-out reconstruction IoU: {model.reconstruction_iou(grids[val_idx]):.3f}")

# latent features are the encoder means; sampling adds calibrated noise
out = model.encode(grids[val_idx][:4], mode="eval")
z_sampled = reparameterize(out, seed=0)
print("latent mean shape:", out.mu.shape, "| sampled latent shape:", z_sampled.shape)

save_checkpoint(model, "demo_model.vaec")
reloaded = load_checkpoint("demo_model.vaec")
print("checkpoint round-trip OK:", reloaded.config == model.config)
