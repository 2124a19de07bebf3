"""Single-fidelity ordinary kriging and the EGO loop built on it.

The correlation is squared exponential, ``exp(-sum_j theta_j (x_j - x'_j)^2)``,
with a constant mean.  ``theta`` maximizes the concentrated log-likelihood
over ``log10 theta`` with bounded multistart L-BFGS-B; the mean and process
variance then follow in closed form from generalized least squares.  A
nugget is added to the diagonal only (exact coincidence), so predictions at
training inputs reproduce the data and have zero variance.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import linalg, optimize

from .acquisition import ei_gaussian
from .adaptive import Acquisition, AdaptiveSettings, RunState, lhs_design, run_loop
from .benchmarks import BenchmarkProblem
from .data import Dataset, unscale_points
from .errors import InsufficientDataError, NonFiniteError, SingularCorrelation
from .network import Emulator

KERNEL = "squared_exponential"
TREND = "constant"


@dataclass(frozen=True)
class GprSettings:
    """Hyperparameter search and conditioning controls."""

    theta_bounds: tuple[float, float] = (1e-3, 1e3)
    n_starts: int = 10
    nugget: float = 1e-10
    max_nugget: float = 1e-4
    nugget_factor: float = 10.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.theta_bounds
        if not 0 < lo < hi:
            raise ValueError("theta_bounds must satisfy 0 < lo < hi")
        if self.n_starts < 1:
            raise ValueError("n_starts must be positive")
        if not 0 < self.nugget <= self.max_nugget or self.nugget_factor <= 1:
            raise ValueError("invalid nugget ladder")


@dataclass(frozen=True)
class GprModel:
    X_train: np.ndarray
    y_train: np.ndarray
    theta: np.ndarray
    sigma2: float
    mu_hat: float
    nugget: float
    cholesky_factor: np.ndarray
    log_likelihood: float
    start_log_likelihoods: tuple[float, ...] = ()

    @cached_property
    def _solved(self):
        return _gls(self.cholesky_factor, self.y_train)


def correlation(A: np.ndarray, B: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Squared-exponential correlation between the rows of ``A`` and ``B``."""
    diff = A[:, None, :] - B[None, :, :]
    return np.exp(-np.einsum("ijk,k->ij", diff * diff, theta))


def _cholesky(R: np.ndarray, settings: GprSettings) -> tuple[np.ndarray, float] | None:
    nugget = settings.nugget
    eye = np.eye(R.shape[0])
    while nugget <= settings.max_nugget * (1 + 1e-12):
        try:
            return linalg.cholesky(R + nugget * eye, lower=True), nugget
        except linalg.LinAlgError:
            nugget *= settings.nugget_factor
    return None


def _gls(L: np.ndarray, y: np.ndarray):
    ones = np.ones_like(y)
    rinv_1 = linalg.cho_solve((L, True), ones)
    rinv_y = linalg.cho_solve((L, True), y)
    mu = float(ones @ rinv_y / (ones @ rinv_1))
    resid = y - mu
    alpha = linalg.cho_solve((L, True), resid)
    sigma2 = max(float(resid @ alpha) / y.size, 0.0)
    return mu, sigma2, alpha, rinv_1


def _concentrated(X, y, log_theta, settings):
    """``(log-likelihood, L, nugget)``; ``-inf`` if no nugget makes R positive definite."""
    theta = 10.0 ** np.asarray(log_theta)
    factor = _cholesky(correlation(X, X, theta), settings)
    if factor is None:
        return -np.inf, None, None
    L, nugget = factor
    _, sigma2, _, _ = _gls(L, y)
    n = y.size
    log_det = 2.0 * np.log(np.diag(L)).sum()
    # constant y gives sigma2 = 0; floor it so the likelihood stays finite
    ll = -0.5 * n * np.log(max(sigma2, 1e-300)) - 0.5 * log_det
    return float(ll), L, nugget


def _start_points(d: int, settings: GprSettings) -> np.ndarray:
    lo, hi = np.log10(settings.theta_bounds)
    unit = 0.5 * (lhs_design(settings.n_starts, d, settings.seed) + 1.0)
    return lo + (hi - lo) * unit


def gpr_fit(X, y, settings: GprSettings = GprSettings()) -> GprModel:
    """Fit ordinary kriging to ``(X, y)``.

    Raises
    ------
    SingularCorrelation
        If the correlation matrix is not positive definite at the largest
        nugget for every hyperparameter tried.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.size:
        raise ValueError("X and y lengths differ")
    if y.size < 2 or np.unique(X, axis=0).shape[0] < 2:
        raise InsufficientDataError("kriging needs at least two distinct points")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFiniteError("training data contain non-finite values")

    d = X.shape[1]
    bounds = [tuple(np.log10(settings.theta_bounds))] * d

    def objective(log_theta):
        ll = _concentrated(X, y, log_theta, settings)[0]
        return -ll if np.isfinite(ll) else 1e300

    best, start_lls = None, []
    for x0 in _start_points(d, settings):
        ll0 = _concentrated(X, y, x0, settings)[0]
        start_lls.append(ll0)
        candidates = [(ll0, x0)]
        res = optimize.minimize(objective, x0, method="L-BFGS-B", bounds=bounds)
        ll1 = _concentrated(X, y, res.x, settings)[0]
        candidates.append((ll1, res.x))
        for ll, x in candidates:
            if np.isfinite(ll) and (best is None or ll > best[0]):
                best = (ll, np.array(x, dtype=float))
    if best is None:
        raise SingularCorrelation(
            f"correlation matrix is singular even with nugget {settings.max_nugget:g}"
        )
    ll, log_theta = best
    _, L, nugget = _concentrated(X, y, log_theta, settings)
    mu, sigma2, _, _ = _gls(L, y)
    return GprModel(
        X_train=X,
        y_train=y,
        theta=10.0**log_theta,
        sigma2=sigma2,
        mu_hat=mu,
        nugget=nugget,
        cholesky_factor=L,
        log_likelihood=ll,
        start_log_likelihoods=tuple(start_lls),
    )


def gpr_predict(model: GprModel, x) -> tuple:
    """Kriging mean and standard deviation at one point or a batch of points.

    The variance includes the term for estimating the constant mean.
    """
    x_arr = np.asarray(x, dtype=float)
    single = x_arr.ndim == 1
    Z = np.atleast_2d(x_arr)
    _, _, alpha, rinv_1 = model._solved
    r = correlation(Z, model.X_train, model.theta)
    # the nugget belongs to exact self-correlation only
    same = np.all(Z[:, None, :] == model.X_train[None, :, :], axis=2)
    r = r + model.nugget * same
    mean = model.mu_hat + r @ alpha
    L = model.cholesky_factor
    v = linalg.solve_triangular(L, r.T, lower=True)
    ones_rinv_1 = float(np.sum(rinv_1))
    u = 1.0 - r @ rinv_1
    var = model.sigma2 * (1.0 + model.nugget - np.sum(v * v, axis=0) + u * u / ones_rinv_1)
    sd = np.sqrt(np.maximum(var, 0.0))
    if single:
        return float(mean[0]), float(sd[0])
    return mean, sd


class KrigingSurrogate:
    """HF-only kriging refitted each iteration, scored with Gaussian EI."""

    name = "kriging"

    def __init__(self, settings: GprSettings = GprSettings()):
        self.settings = settings

    def fit(self, data: Dataset, iteration: int) -> GprModel:
        return gpr_fit(data.X_scaled, data.y, self.settings)

    def acquisition(self, model: GprModel, f_min: float) -> Acquisition:
        def ei(z):
            mean, sd = gpr_predict(model, np.atleast_2d(z))
            return ei_gaussian(mean, sd, f_min)

        return ei

    def describe(self, model: GprModel) -> dict:
        return {
            "theta": model.theta.tolist(),
            "sigma2": model.sigma2,
            "mu_hat": model.mu_hat,
            "nugget": model.nugget,
            "log_likelihood": model.log_likelihood,
        }


def run_ego(
    problem: BenchmarkProblem,
    settings: AdaptiveSettings = AdaptiveSettings(),
    trace_path: str | Path | None = None,
    gpr_settings: GprSettings = GprSettings(),
) -> RunState:
    """Efficient global optimization with HF-only kriging; LF models are ignored."""
    header = {"kernel": KERNEL, "trend": TREND, "gpr_settings": _settings_doc(gpr_settings)}
    return run_loop(problem, settings, KrigingSurrogate(gpr_settings), trace_path, header)


def _settings_doc(settings: GprSettings) -> dict:
    return {
        "theta_bounds": list(settings.theta_bounds),
        "n_starts": settings.n_starts,
        "nugget": settings.nugget,
        "max_nugget": settings.max_nugget,
        "nugget_factor": settings.nugget_factor,
        "seed": settings.seed,
    }


def emulator_from_gpr(
    name: str,
    fn,
    bounds,
    n_samples: int,
    seed: int = 0,
    settings: GprSettings = GprSettings(),
) -> Emulator:
    """Wrap an expensive LF function as a cheap kriging emulator.

    ``fn`` is sampled at an ``n_samples`` Latin hypercube over ``bounds``
    (original units); the returned emulator takes scaled points.
    """
    bounds = np.asarray(bounds, dtype=float)
    z = lhs_design(n_samples, bounds.shape[0], seed)
    values = np.asarray(fn(unscale_points(z, bounds)), dtype=float).reshape(-1)
    model = gpr_fit(z, values, settings)
    return Emulator(name, lambda zz: gpr_predict(model, np.atleast_2d(zz))[0])


def gpr_to_dict(model: GprModel) -> dict:
    return {
        "kernel": KERNEL,
        "trend": TREND,
        "X_train": model.X_train.tolist(),
        "y_train": model.y_train.tolist(),
        "theta": model.theta.tolist(),
        "nugget": model.nugget,
        "sigma2": model.sigma2,
        "mu_hat": model.mu_hat,
        "log_likelihood": model.log_likelihood,
    }


def gpr_from_dict(doc: dict) -> GprModel:
    """Refactor the correlation matrix at the stored ``theta`` and nugget."""
    X = np.asarray(doc["X_train"], dtype=float)
    y = np.asarray(doc["y_train"], dtype=float)
    theta = np.asarray(doc["theta"], dtype=float)
    nugget = float(doc["nugget"])
    R = correlation(X, X, theta) + nugget * np.eye(X.shape[0])
    try:
        L = linalg.cholesky(R, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularCorrelation("stored kriging model is not positive definite") from exc
    mu, sigma2, _, _ = _gls(L, y)
    return GprModel(X, y, theta, sigma2, mu, nugget, L, float(doc["log_likelihood"]))
