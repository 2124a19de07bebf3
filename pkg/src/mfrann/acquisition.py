"""Expected Improvement for minimization under normal and Student-t predictives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import InvalidDofError, QuadratureFailure
from .numerics import normal_cdf, normal_pdf, t_cdf, t_pdf


@dataclass(frozen=True)
class Incumbent:
    """Best HF observation so far."""

    f_min: float
    x_min: np.ndarray


def _scalar_or_array(out, *inputs):
    if all(np.ndim(v) == 0 for v in inputs):
        return float(out)
    return out


def ei_gaussian(mu, sigma, f_min):
    """``(f_min - mu) Phi(z) + sigma phi(z)`` with ``z = (f_min - mu) / sigma``.

    Where ``sigma == 0`` the deterministic limit ``max(f_min - mu, 0)`` is used.
    """
    mu_a, sigma_a = np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float)
    if np.any(sigma_a < 0):
        raise ValueError("sigma must be non-negative")
    gain = np.asarray(f_min, dtype=float) - mu_a
    safe = np.where(sigma_a > 0, sigma_a, 1.0)
    z = gain / safe
    ei = gain * normal_cdf(z) + safe * normal_pdf(z)
    ei = np.where(sigma_a > 0, np.maximum(ei, 0.0), np.maximum(gain, 0.0))
    return _scalar_or_array(ei, mu, sigma, f_min)


def ei_t(mu, scale, dof, f_min):
    """Vectorized Student-t EI.

    ``(f_min - mu) Phi_t(z) + nu / (nu - 1) (1 + z^2 / nu) scale phi_t(z)``;
    zero scale gives ``max(f_min - mu, 0)``.
    """
    dof_a = np.asarray(dof, dtype=float)
    if np.any(~(dof_a > 1)):
        raise InvalidDofError(f"Student-t EI needs more than 1 degree of freedom, got {dof}")
    mu_a, scale_a = np.asarray(mu, dtype=float), np.asarray(scale, dtype=float)
    if np.any(scale_a < 0):
        raise ValueError("scale must be non-negative")
    gain = np.asarray(f_min, dtype=float) - mu_a
    safe = np.where(scale_a > 0, scale_a, 1.0)
    z = gain / safe
    spread = dof_a / (dof_a - 1.0) * (1.0 + z**2 / dof_a) * safe * t_pdf(z, dof_a)
    ei = gain * t_cdf(z, dof_a) + spread
    ei = np.where(scale_a > 0, np.maximum(ei, 0.0), np.maximum(gain, 0.0))
    return _scalar_or_array(ei, mu, scale, dof, f_min)


def ei_student_t(pred, f_min: float) -> float:
    """EI of a :class:`~mfrann.ensemble.TPrediction`."""
    return ei_t(pred.mean, pred.scale, pred.dof, f_min)


def ei_numeric_oracle(
    pdf: Callable[[float], float],
    f_min: float,
    support: tuple[float, float] = (-np.inf, np.inf),
    breakpoints: Sequence[float] = (),
    tol: float = 1e-10,
) -> float:
    """Integrate ``pdf(y) * max(f_min - y, 0)`` by adaptive quadrature.

    The integral runs over ``support`` clipped at ``f_min``.  Interior
    ``breakpoints`` (modes, kinks, support edges of the density) split the
    range so the quadrature resolves narrow peaks.  Intended for tests.
    """
    lo, hi = float(support[0]), min(float(support[1]), float(f_min))
    if hi <= lo:
        return 0.0
    cuts = sorted({float(b) for b in breakpoints if lo < b < hi})
    edges = [lo, *cuts, hi]
    total, err = 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        value, abserr = integrate.quad(
            lambda y: pdf(y) * (f_min - y), a, b, epsabs=tol, epsrel=1e-12, limit=500
        )
        total += value
        err += abserr
    if not np.isfinite(total) or err > max(1e3 * tol, 1e-9 * abs(total)):
        raise QuadratureFailure(f"EI quadrature error estimate {err:.3g} exceeds tolerance")
    return total
