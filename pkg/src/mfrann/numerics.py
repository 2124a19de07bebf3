"""Dense regression solvers and the scalar distributions used by acquisition.

Everything here is a pure function of its inputs.  The distribution helpers
accept scalars or arrays and return the same kind.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import (
    DegenerateTruthsError,
    EmptyInputError,
    InvalidDofError,
    NonFiniteError,
)

DEFAULT_RCOND = 1e-10

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class RegressionSolution:
    """Fitted linear weights with the statistics used for stability filtering.

    Attributes
    ----------
    weights : ndarray of shape (n_features,)
    max_abs_weight : float
        ``max(|weights|)``.
    residual_nrmse : float
        NRMSE of ``design @ weights`` against the targets.  When the targets
        are all identical the NRMSE denominator vanishes and the plain RMS
        residual is stored instead.
    """

    weights: np.ndarray
    max_abs_weight: float
    residual_nrmse: float


def _check_system(design, targets):
    design = np.asarray(design, dtype=float)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    if design.ndim != 2 or design.shape[0] == 0 or design.shape[1] == 0:
        raise EmptyInputError(f"design must be a non-empty 2-D matrix, got shape {design.shape}")
    if design.shape[0] != targets.shape[0]:
        raise ValueError(
            f"design has {design.shape[0]} rows but {targets.shape[0]} targets were given"
        )
    if not np.all(np.isfinite(design)) or not np.all(np.isfinite(targets)):
        raise NonFiniteError("design or targets contain non-finite values")
    return design, targets


def _solution(design, targets, weights):
    fitted = design @ weights
    try:
        fit_error = nrmse(fitted, targets) if targets.size >= 2 else None
    except DegenerateTruthsError:
        fit_error = None
    if fit_error is None:
        fit_error = float(np.sqrt(np.mean((fitted - targets) ** 2)))
    return RegressionSolution(
        weights=weights,
        max_abs_weight=float(np.max(np.abs(weights))),
        residual_nrmse=fit_error,
    )


def pinv_solve(design, targets, rcond: float = DEFAULT_RCOND) -> RegressionSolution:
    """Minimum-norm least squares through a truncated SVD.

    Singular values below ``rcond * sigma_max`` are treated as zero, so
    numerically null directions of the design never receive weight.

    Parameters
    ----------
    design : array_like of shape (n, m)
    targets : array_like of shape (n,)
    rcond : float
        Relative cutoff in (0, 1).
    """
    if not 0.0 < rcond < 1.0:
        raise ValueError(f"rcond must lie in (0, 1), got {rcond}")
    design, targets = _check_system(design, targets)
    u, s, vt = np.linalg.svd(design, full_matrices=False)
    keep = s >= rcond * s[0]
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    weights = vt.T @ (s_inv * (u.T @ targets))
    return _solution(design, targets, weights)


def ridge_solve(design, targets, lam: float) -> RegressionSolution:
    """Solve ``argmin ||design w - targets||^2 + lam ||w||^2``.

    Uses the SVD filter factors ``s / (s^2 + lam)``; with ``lam == 0`` this is
    the minimum-norm least-squares solution.
    """
    if lam < 0:
        raise ValueError(f"ridge penalty must be non-negative, got {lam}")
    design, targets = _check_system(design, targets)
    u, s, vt = np.linalg.svd(design, full_matrices=False)
    denom = s**2 + lam
    with np.errstate(divide="ignore", invalid="ignore"):
        filt = np.where(denom > 0, s / denom, 0.0)
    if lam == 0:
        filt[s < DEFAULT_RCOND * s[0]] = 0.0
    weights = vt.T @ (filt * (u.T @ targets))
    return _solution(design, targets, weights)


def nrmse(predictions, truths) -> float:
    """Root of squared error over squared deviation of the truths from their mean."""
    predictions = np.asarray(predictions, dtype=float).reshape(-1)
    truths = np.asarray(truths, dtype=float).reshape(-1)
    if predictions.shape != truths.shape:
        raise ValueError("predictions and truths must have equal length")
    if truths.size < 2:
        raise DegenerateTruthsError("NRMSE needs at least two reference values")
    spread = np.sum((truths.mean() - truths) ** 2)
    if spread == 0.0:
        raise DegenerateTruthsError("all reference values are identical")
    return float(np.sqrt(np.sum((predictions - truths) ** 2) / spread))


def _as_output(value, like):
    if np.ndim(like) == 0:
        return float(value)
    return value


def normal_pdf(z):
    z_arr = np.asarray(z, dtype=float)
    return _as_output(_INV_SQRT_2PI * np.exp(-0.5 * z_arr**2), z)


def normal_cdf(z):
    z_arr = np.asarray(z, dtype=float)
    return _as_output(special.ndtr(z_arr), z)


def _check_dof(nu):
    nu_arr = np.asarray(nu, dtype=float)
    if np.any(~(nu_arr > 0)):
        raise InvalidDofError(f"degrees of freedom must be positive, got {nu}")
    return nu_arr


def t_pdf(z, nu):
    """Density of the standard Student-t distribution with ``nu`` dof."""
    nu_arr = _check_dof(nu)
    z_arr = np.asarray(z, dtype=float)
    log_norm = (
        special.gammaln(0.5 * (nu_arr + 1.0))
        - special.gammaln(0.5 * nu_arr)
        - 0.5 * np.log(nu_arr * np.pi)
    )
    log_kernel = -0.5 * (nu_arr + 1.0) * np.log1p(z_arr**2 / nu_arr)
    out = np.exp(log_norm + log_kernel)
    if np.ndim(z) == 0 and np.ndim(nu) == 0:
        return float(out)
    return out


def t_cdf(z, nu):
    """CDF of the standard Student-t distribution via the regularized incomplete beta."""
    nu_arr = _check_dof(nu)
    z_arr = np.asarray(z, dtype=float)
    tail = 0.5 * special.betainc(0.5 * nu_arr, 0.5, nu_arr / (nu_arr + z_arr**2))
    out = np.where(z_arr < 0, tail, 1.0 - tail)
    if np.ndim(z) == 0 and np.ndim(nu) == 0:
        return float(out)
    return out


def t_ppf(q, nu):
    """Quantile of the standard Student-t distribution."""
    nu_arr = _check_dof(nu)
    out = special.stdtrit(nu_arr, np.asarray(q, dtype=float))
    if np.ndim(q) == 0 and np.ndim(nu) == 0:
        return float(out)
    return out
