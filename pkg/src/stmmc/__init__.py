"""stMMC: multi-modal spatial clustering for spatial transcriptomics.

The package is organized as one module per pipeline stage:

- :mod:`stmmc.ingest` -- tabular loaders for expression / coordinates /
  image features, plus a patch-statistics fallback feature extractor
- :mod:`stmmc.preprocess` -- highly-variable-gene selection, library-size
  normalization, PCA
- :mod:`stmmc.graph` -- KNN graphs, adjacency normalization, feature
  corruption, community representations
- :mod:`stmmc.tensor_core` -- dense parameters with hand-derived gradients
  (GCN layer, bilinear discriminator) and Adam
- :mod:`stmmc.mpga` -- the two-branch graph autoencoder and its losses
- :mod:`stmmc.trainer` -- the full-graph training loop
- :mod:`stmmc.clusterer` -- seeded EM Gaussian mixture and neighbor-majority
  label smoothing
- :mod:`stmmc.metrics` -- ARI / NMI
- :mod:`stmmc.synthgen` -- seeded synthetic datasets with planted domains
- :mod:`stmmc.cli` -- the ``stmmc`` command-line entry point

Submodules are intentionally not imported here so that the CLI can cap BLAS
threads via ``STMMC_THREADS`` before numpy is loaded.
"""

__version__ = "0.1.0"
