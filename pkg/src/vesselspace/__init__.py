"""Parametric vs. learned-feature design-space exploration for revolved vessels.

The package builds the full comparison pipeline: synthesize a parametric
vessel dataset, voxelize it, train a voxel VAE from scratch, project both the
parameter space and the learned feature space to 2D with exact t-SNE, cluster
the embeddings with DBSCAN, render glyph maps, quantify neighborhood
coherence, and serve an interactive explorer.
"""

__version__ = "0.1.0"
