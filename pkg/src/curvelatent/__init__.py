"""Latent-space compression of electricity market supply/demand curves.

Curves are preprocessed into a fixed-grid price matrix, reduced to a 2d/3d
latent space by PCA, kernel PCA, UMAP or an autoencoder, reconstructed, and
optionally repaired with isotonic regression so they stay monotone.
"""

__version__ = "0.1.0"
