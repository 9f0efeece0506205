"""Project a design space to 2-D with exact t-SNE and cluster it with DBSCAN.

Demonstrated on the 5-D parameter vectors directly; the same functions run on
128-D VAE features in the full pipeline.
"""

import numpy as np

from vesselspace.dbscan import DbscanConfig, dbscan, default_eps
from vesselspace.tsne import TsneConfig, affinities, kl_objective, minmax_scale_columns, run
from vesselspace.vesselgen import generate_dataset, params_to_matrix

vessels = generate_dataset(count=200, seed=9)
X = minmax_scale_columns(params_to_matrix(vessels))

config = TsneConfig(perplexity=20.0, learning_rate=150.0, iterations=400, seed=9)
embedding = run(X, config)
print("embedding shape:", embedding.coords.shape)

P = affinities(X, config.perplexity).P
print(f"final KL objective: {kl_objective(P, embedding.coords):.3f}")

eps = default_eps(embedding.coords)
labels = dbscan(embedding.coords, DbscanConfig(eps=eps, min_pts=8))
print(f"eps={eps:.3f} -> {labels.n_clusters} clusters, "
      f"{labels.noise_fraction():.1%} noise")
for c in range(labels.n_clusters):
    print(f"  cluster {c}: {int(np.sum(labels.labels == c))} vessels")
