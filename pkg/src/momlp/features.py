"""Kernel feature maps for covariates.

Each covariate z is replaced by the vector (kappa(z, z_1), ..., kappa(z, z_T))
of kernel values against the training covariates.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .margin import TrainingSample

KERNELS = ("linear", "polynomial", "rbf")


@dataclass(frozen=True)
class KernelSpec:
    """linear: z1.z2; polynomial: (z1.z2 / gamma + 1)^degree; rbf: exp(-||z1 - z2||^2 / gamma)."""

    kind: str = "linear"
    gamma: float = 1.0
    degree: int = 2

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")


def gram_matrix(spec: KernelSpec, Z1, Z2=None) -> np.ndarray:
    """Kernel matrix K[a, b] = kappa(Z1[a], Z2[b]); Z2 defaults to Z1."""
    Z1 = np.atleast_2d(np.asarray(Z1, dtype=float))
    Z2 = Z1 if Z2 is None else np.atleast_2d(np.asarray(Z2, dtype=float))
    if Z1.shape[1] != Z2.shape[1]:
        raise ValueError(f"covariate dimensions differ: {Z1.shape[1]} vs {Z2.shape[1]}")
    if spec.kind == "rbf":
        return np.exp(-cdist(Z1, Z2, "sqeuclidean") / spec.gamma)
    # row by row, so a row never depends on the rest of the batch
    G = np.stack([Z2 @ z for z in Z1])
    if spec.kind == "polynomial":
        return (G / spec.gamma + 1.0) ** spec.degree
    return G


def kernel_eval(spec: KernelSpec, z1, z2) -> float:
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if z1.shape != z2.shape:
        raise ValueError("z1 and z2 have different dimensions")
    return float(gram_matrix(spec, z1[None, :], z2[None, :])[0, 0])


class KernelTransformer:
    """Maps z to its kernel values against stored training covariates.

    With ``normalize`` every output is divided by the largest training-row
    norm, so transformed training covariates satisfy ||z|| <= 1.  An explicit
    ``scale`` (e.g. restored from a saved model) overrides that choice.
    """

    def __init__(self, spec: KernelSpec, Z_train, normalize: bool = True, scale: Optional[float] = None):
        self.spec = spec
        self.Z_train = np.array(Z_train, dtype=float)
        self.Z_train.setflags(write=False)
        G = gram_matrix(spec, self.Z_train)
        if scale is not None:
            self.scale = float(scale)
        else:
            self.scale = float(np.linalg.norm(G, axis=1).max()) if normalize else 1.0
        if self.scale <= 0.0:
            self.scale = 1.0
        self.train_features = G / self.scale

    @property
    def dim(self) -> int:
        return self.Z_train.shape[0]

    def transform(self, Z) -> np.ndarray:
        """Features for a batch (rows) or a single covariate vector."""
        Z = np.asarray(Z, dtype=float)
        single = Z.ndim == 1
        F = gram_matrix(self.spec, Z[None, :] if single else Z, self.Z_train) / self.scale
        return F[0] if single else F


def kernelize_dataset(
    train: Sequence[TrainingSample], spec: KernelSpec, normalize: bool = True
) -> Tuple[List[TrainingSample], KernelTransformer]:
    """Replace each training covariate by its T-dimensional kernel feature."""
    if not train:
        raise ValueError("empty training set")
    tf = KernelTransformer(spec, np.stack([s.z for s in train]), normalize)
    return [s.with_z(f) for s, f in zip(train, tf.train_features)], tf


def kernelize_samples(samples: Sequence[TrainingSample], tf: KernelTransformer) -> List[TrainingSample]:
    """Apply a fitted transformer to further samples (e.g. a test set)."""
    if not samples:
        return []
    F = tf.transform(np.stack([s.z for s in samples]))
    return [s.with_z(f) for s, f in zip(samples, F)]
