"""Linear readout: extended states, regularised least squares, argmax decisions.

Shapes follow the column convention of the closed-form solve: a design
matrix ``Z`` is ``z_dim x M`` (one column per time step) and targets
``Y`` are ``n_classes x M``, giving ``W_out = Y Z^T (Z Z^T + gamma^2 I)^-1``.
Time-major helpers (``extended_rows``, ``RidgeAccumulator.add``) take the
transposed ``M x z_dim`` layout that ``run_sequence`` produces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, EmptyInputError, NumericalError, ShapeError

# Cholesky pivots this small (relative, squared) mean Z Z^T is numerically singular
_SINGULAR_PIVOT = 1e-13


@dataclass(frozen=True)
class RidgeConfig:
    gamma: float = 1e-4

    def __post_init__(self):
        if not self.gamma >= 0.0:
            raise ConfigError(f"ridge gamma must be nonnegative, got {self.gamma}")


@dataclass(frozen=True)
class ReadoutWeights:
    W_out: np.ndarray

    def __post_init__(self):
        W = np.array(self.W_out, dtype=np.float64, ndmin=2)
        if not np.all(np.isfinite(W)):
            raise NumericalError("readout weights contain non-finite entries")
        W.setflags(write=False)
        object.__setattr__(self, "W_out", W)

    @property
    def n_classes(self) -> int:
        return self.W_out.shape[0]

    @property
    def z_dim(self) -> int:
        return self.W_out.shape[1]

    def to_csv(self, path) -> None:
        """One row per class, full float precision."""
        np.savetxt(path, self.W_out, delimiter=",", fmt="%.17g")


def assemble_extended(u, states) -> np.ndarray:
    """``z = [u; x1; ...; xl]`` for a single time step."""
    return np.concatenate([np.ravel(u), *[np.ravel(x) for x in states]])


def extended_rows(inputs, states) -> np.ndarray:
    """Row-wise extended states ``[u(t), x(t)]`` for a whole sequence (``M x z_dim``)."""
    inputs = np.asarray(inputs, dtype=float)
    states = np.asarray(states, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[:, None]
    if inputs.shape[0] != states.shape[0]:
        raise ShapeError(f"{inputs.shape[0]} input rows vs {states.shape[0]} state rows")
    return np.hstack([inputs, states])


def one_hot(labels, n_classes: int) -> np.ndarray:
    """``n_classes x M`` target matrix with a single 1 per column."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ShapeError(f"labels must lie in [0, {n_classes}), got range [{labels.min()}, {labels.max()}]")
    Y = np.zeros((n_classes, labels.size))
    Y[labels, np.arange(labels.size)] = 1.0
    return Y


def _solve(zz: np.ndarray, yz: np.ndarray, gamma: float) -> np.ndarray:
    d = zz.shape[0]
    A = zz + (gamma * gamma) * np.eye(d)
    try:
        c, lower = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
        piv = np.diag(c) ** 2
        singular = gamma == 0.0 and piv.min() <= _SINGULAR_PIVOT * piv.max()
    except np.linalg.LinAlgError:
        c, singular = None, True
    if singular:
        if gamma > 0.0:
            raise NumericalError("Cholesky factorisation failed on a regularised system")
        # minimum-norm least squares: Y Z^T pinv(Z Z^T) = Y pinv(Z)
        return yz @ scipy.linalg.pinvh(zz)
    return scipy.linalg.cho_solve((c, lower), yz.T, check_finite=False).T


def fit_ridge(Z, Y, cfg: RidgeConfig | float = RidgeConfig()) -> ReadoutWeights:
    """Closed-form ridge readout from a ``z_dim x M`` design and ``n_classes x M`` targets.

    Solved through a Cholesky factorisation of ``Z Z^T + gamma^2 I``.
    With ``gamma == 0`` and a singular ``Z Z^T`` the result falls back to
    the minimum-norm least-squares (pseudoinverse) solution.
    """
    gamma = cfg.gamma if isinstance(cfg, RidgeConfig) else RidgeConfig(float(cfg)).gamma
    Z = np.asarray(Z, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[None, :]
    if Z.ndim != 2 or Z.shape[1] < 1:
        raise EmptyInputError("fit_ridge needs a 2-D design with at least one column")
    if Y.shape[1] != Z.shape[1]:
        raise ShapeError(f"Z has {Z.shape[1]} columns, Y has {Y.shape[1]}")
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(Y))):
        raise NumericalError("fit_ridge received non-finite values")
    return ReadoutWeights(_solve(Z @ Z.T, Y @ Z.T, gamma))


class RidgeAccumulator:
    """Streaming sufficient statistics ``Z Z^T`` and ``Y Z^T``.

    Memory is ``O(z_dim^2)`` regardless of how many frames are added.
    Accumulators built on separate workers combine with ``merge``; merge
    them in a fixed order for bitwise reproducible solutions.
    """

    def __init__(self, z_dim: int, n_out: int):
        self.zz = np.zeros((z_dim, z_dim))
        self.yz = np.zeros((n_out, z_dim))
        self.count = 0

    def add(self, rows, targets) -> None:
        """Add ``M x z_dim`` extended-state rows with ``n_out x M`` targets."""
        rows = np.asarray(rows, dtype=float)
        targets = np.asarray(targets, dtype=float)
        if rows.shape[1] != self.zz.shape[0] or targets.shape != (self.yz.shape[0], rows.shape[0]):
            raise ShapeError(
                f"rows {rows.shape} / targets {targets.shape} do not fit accumulator "
                f"(z_dim={self.zz.shape[0]}, n_out={self.yz.shape[0]})"
            )
        if not (np.all(np.isfinite(rows)) and np.all(np.isfinite(targets))):
            raise NumericalError("non-finite values added to ridge accumulator")
        self.zz += rows.T @ rows
        self.yz += targets @ rows
        self.count += rows.shape[0]

    def merge(self, other: "RidgeAccumulator") -> "RidgeAccumulator":
        if other.zz.shape != self.zz.shape or other.yz.shape != self.yz.shape:
            raise ShapeError("cannot merge accumulators of different shapes")
        self.zz += other.zz
        self.yz += other.yz
        self.count += other.count
        return self

    def solve(self, cfg: RidgeConfig | float = RidgeConfig()) -> ReadoutWeights:
        if self.count == 0:
            raise EmptyInputError("no frames accumulated")
        gamma = cfg.gamma if isinstance(cfg, RidgeConfig) else RidgeConfig(float(cfg)).gamma
        return ReadoutWeights(_solve(self.zz, self.yz, gamma))


def predict(w: ReadoutWeights, z) -> np.ndarray:
    """Scores ``W_out z`` (identity output activation); ``z`` may be a vector or ``z_dim x M``."""
    z = np.asarray(z, dtype=float)
    if z.shape[0] != w.z_dim:
        raise ShapeError(f"extended state has dimension {z.shape[0]}, readout expects {w.z_dim}")
    return w.W_out @ z


def classify(y) -> int | np.ndarray:
    """Argmax class; ties go to the lowest index.  Column-wise for a matrix."""
    y = np.asarray(y)
    if y.size == 0:
        raise EmptyInputError("cannot classify an empty score vector")
    if y.ndim == 1:
        return int(np.argmax(y))
    return np.argmax(y, axis=0)
