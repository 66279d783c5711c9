"""sparsect: sparse-view parallel-beam CT reconstruction toolkit.

Three reconstruction regimes over a common projector pair (Joseph forward /
exact adjoint): direct filtered back projection, regularized iterative
inversion (Haar-wavelet ISTA/FISTA and TV-ADMM), and a residual multiscale
CNN applied to sparse-view FBP images.  A certification harness checks
numerically that the normal operator acts as a convolution.
"""

__version__ = "0.1.0"
