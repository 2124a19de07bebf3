"""High-fidelity training data and the affine map onto ``[-1, 1]^d``."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


def scale_points(x, bounds) -> np.ndarray:
    bounds = np.asarray(bounds, dtype=float)
    lo, hi = bounds[:, 0], bounds[:, 1]
    return 2.0 * (np.asarray(x, dtype=float) - lo) / (hi - lo) - 1.0


def unscale_points(z, bounds) -> np.ndarray:
    bounds = np.asarray(bounds, dtype=float)
    lo, hi = bounds[:, 0], bounds[:, 1]
    return lo + 0.5 * (np.asarray(z, dtype=float) + 1.0) * (hi - lo)


@dataclass(frozen=True)
class Dataset:
    """HF inputs in original units, their responses, and per-dimension bounds.

    Instances are immutable; :meth:`with_point` returns an extended copy.
    """

    X: np.ndarray
    y: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        bounds = np.array(self.bounds, dtype=float).reshape(-1, 2)
        X = np.array(self.X, dtype=float).reshape(-1, bounds.shape[0])
        y = np.array(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} responses")
        if np.any(bounds[:, 1] <= bounds[:, 0]):
            raise ValueError("every bound must satisfy lo < hi")
        for arr in (X, y, bounds):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "bounds", bounds)

    @classmethod
    def from_scaled(cls, z, y) -> "Dataset":
        """Dataset whose original units already are the scaled domain."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return cls(z, y, np.tile([-1.0, 1.0], (z.shape[1], 1)))

    @property
    def d(self) -> int:
        return self.bounds.shape[0]

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def X_scaled(self) -> np.ndarray:
        return scale_points(self.X, self.bounds)

    def scale(self, x) -> np.ndarray:
        return scale_points(x, self.bounds)

    def unscale(self, z) -> np.ndarray:
        return unscale_points(z, self.bounds)

    def with_point(self, x, y) -> "Dataset":
        x = np.asarray(x, dtype=float).reshape(1, self.d)
        return Dataset(np.vstack([self.X, x]), np.append(self.y, float(y)), self.bounds)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.X, self.y, self.bounds):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()
