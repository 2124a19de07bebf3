"""Adaptive sampling toward the HF minimum.

Each iteration fits a surrogate to the HF data, maximizes Expected
Improvement over the scaled box, and either samples the HF function at the
maximizer or stops when the best EI drops below
``ei_tolerance * max(1, |f_min|)``.  The ensemble loop here and the kriging
loop in :mod:`mfrann.kriging` share the same driver, :class:`RunState` and
trace format.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np
from scipy.stats import qmc

from .acquisition import Incumbent, ei_t
from .benchmarks import BenchmarkProblem
from .data import Dataset, unscale_points
from .ensemble import Ensemble, EnsembleConfig, build_ensemble

Acquisition = Callable[[np.ndarray], np.ndarray]


def lhs_design(n: int, d: int, seed: int) -> np.ndarray:
    """Latin hypercube of ``n`` points in ``[-1, 1]^d``, one per stratum per axis."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    rng = np.random.default_rng(seed)
    u = np.empty((n, d))
    for j in range(d):
        u[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return 2.0 * u - 1.0


@dataclass(frozen=True)
class AcquisitionSettings:
    """Candidate sweep followed by a local coordinate-search polish."""

    candidates_per_dim: int = 4096
    polish_starts: int = 8
    polish_evals: int = 50
    initial_step: float = 0.05
    duplicate_tol: float = 1e-6
    perturbations_per_point: int = 4
    perturbation_scale: float = 0.01
    rescore: int = 64


def _min_inf_distance(points: np.ndarray, existing: np.ndarray) -> np.ndarray:
    if existing.size == 0:
        return np.full(points.shape[0], np.inf)
    return np.abs(points[:, None, :] - existing[None, :, :]).max(axis=2).min(axis=1)


def candidate_set(existing: np.ndarray, d: int, settings: AcquisitionSettings, seed: int) -> np.ndarray:
    """Scrambled Halton points plus midpoints and jitter around the data."""
    rng = np.random.default_rng(seed)
    halton = qmc.Halton(d, scramble=True, seed=rng).random(settings.candidates_per_dim * d)
    parts = [2.0 * halton - 1.0]
    n = existing.shape[0]
    if n >= 2:
        dist = np.abs(existing[:, None, :] - existing[None, :, :]).max(axis=2)
        k = min(n - 1, 8)
        neighbours = np.argsort(dist, axis=1, kind="stable")[:, 1 : k + 1]
        pairs = {tuple(sorted((i, int(j)))) for i in range(n) for j in neighbours[i]}
        idx = np.array(sorted(pairs))
        parts.append(0.5 * (existing[idx[:, 0]] + existing[idx[:, 1]]))
    if n >= 1 and settings.perturbations_per_point:
        jitter = rng.normal(
            0.0, settings.perturbation_scale, size=(n, settings.perturbations_per_point, d)
        )
        parts.append((existing[:, None, :] + jitter).reshape(-1, d))
    return np.clip(np.vstack(parts), -1.0, 1.0)


def maximize_ei(
    acquisition: Acquisition,
    d: int,
    existing: np.ndarray,
    seed: int,
    settings: AcquisitionSettings = AcquisitionSettings(),
    screen: Acquisition | None = None,
) -> tuple[np.ndarray, float]:
    """Maximize ``acquisition`` over ``[-1, 1]^d`` away from ``existing`` points.

    Points within ``duplicate_tol`` (infinity norm) of existing samples are
    never returned.  If ``screen`` is given it ranks the candidate sweep and
    only the best ``settings.rescore`` candidates are evaluated with
    ``acquisition``; the polish and the returned value always use
    ``acquisition``.
    """
    existing = np.asarray(existing, dtype=float).reshape(-1, d)

    def guard(fn):
        def guarded(z):
            values = np.asarray(fn(z), dtype=float)
            keep = _min_inf_distance(z, existing) > settings.duplicate_tol
            return np.where(keep, values, -np.inf)

        return guarded

    exact = guard(acquisition)
    cands = candidate_set(existing, d, settings, seed)
    if screen is not None:
        rough = guard(screen)(cands)
        top = np.argsort(-rough, kind="stable")[: settings.rescore]
        top = top[np.isfinite(rough[top])]
        cands = cands[top]
    values = exact(cands)
    order = np.argsort(-values, kind="stable")
    starts = []
    for i in order:
        if not np.isfinite(values[i]):
            break
        if all(np.abs(cands[i] - cands[j]).max() > 1e-3 for j in starts):
            starts.append(i)
        if len(starts) == settings.polish_starts:
            break
    if not starts:
        raise RuntimeError("every candidate coincides with an existing sample")
    x, f = _polish(exact, cands[starts], values[starts], settings)
    best = int(np.argmax(f))
    return x[best], float(f[best])


def _polish(fn, x, f, settings):
    k, d = x.shape
    x, f = x.copy(), f.copy()
    step = np.full(k, settings.initial_step)
    directions = np.vstack([np.eye(d), -np.eye(d)])
    used = 0
    while used + 2 * d <= settings.polish_evals and np.any(step > 1e-10):
        trials = np.clip(x[:, None, :] + step[:, None, None] * directions[None], -1.0, 1.0)
        values = fn(trials.reshape(-1, d)).reshape(k, 2 * d)
        used += 2 * d
        pick = np.argmax(values, axis=1)
        top = values[np.arange(k), pick]
        better = top > f
        x[better] = trials[better, pick[better]]
        f[better] = top[better]
        step[~better] *= 0.5
    return x, f


@dataclass(frozen=True)
class HistoryEntry:
    x_added: np.ndarray
    acquisition_value: float
    f_min_after: float


@dataclass
class RunState:
    """History of an adaptive run.  Shared by the ensemble and kriging loops."""

    method: str
    problem: str
    seed: int
    dataset: Dataset
    incumbent: Incumbent
    ei_tolerance: float
    max_iterations: int
    iteration: int = 0
    history: list[HistoryEntry] = field(default_factory=list)
    converged: bool = False
    budget_exhausted: bool = False
    final_ei: float | None = None
    records: list[dict] = field(default_factory=list)
    surrogate: object = field(default=None, repr=False)

    @property
    def n_hf_samples(self) -> int:
        return self.dataset.n

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "n_hf_samples": self.n_hf_samples,
            "best_y": self.incumbent.f_min,
            "best_x": self.incumbent.x_min.tolist(),
            "converged": self.converged,
        }


@dataclass(frozen=True)
class AdaptiveSettings:
    """Loop controls.  ``None`` fields take dimension-dependent defaults."""

    n_init: int | None = None
    init_X: np.ndarray | None = None
    ei_tolerance: float = 1e-4
    max_iterations: int | None = None
    seed: int = 0
    ensemble_config: EnsembleConfig = EnsembleConfig()
    acquisition: AcquisitionSettings = AcquisitionSettings()

    def resolved_n_init(self, d: int) -> int:
        if self.n_init is not None:
            return self.n_init
        return 3 if d == 1 else max(8, 2 * d + 2)

    def resolved_max_iterations(self, d: int) -> int:
        return self.max_iterations if self.max_iterations is not None else 50 * d

    def to_dict(self) -> dict:
        return {
            "n_init": self.n_init,
            "init_X": None if self.init_X is None else np.asarray(self.init_X).tolist(),
            "ei_tolerance": _json_float(self.ei_tolerance),
            "max_iterations": self.max_iterations,
            "seed": self.seed,
            "ensemble_config": self.ensemble_config.to_dict(),
            "acquisition": dataclasses.asdict(self.acquisition),
        }


def initial_dataset(problem: BenchmarkProblem, settings: AdaptiveSettings) -> Dataset:
    """Explicit ``init_X``, else the problem's default design, else an LHS."""
    if settings.init_X is not None:
        X = np.asarray(settings.init_X, dtype=float).reshape(-1, problem.d)
    elif settings.n_init is None and problem.default_init is not None:
        X = np.asarray(problem.default_init, dtype=float)
    else:
        n = settings.resolved_n_init(problem.d)
        if n < 2:
            raise ValueError("at least two initial samples are required")
        X = unscale_points(lhs_design(n, problem.d, settings.seed), problem.bounds)
    return Dataset(X, problem.hf(X), problem.bounds)


class Surrogate(Protocol):
    """What the adaptive driver needs from a modelling method."""

    name: str

    def fit(self, data: Dataset, iteration: int): ...

    def acquisition(self, model, f_min: float) -> Acquisition: ...

    def describe(self, model) -> dict: ...


class EnsembleSurrogate:
    """Rebuilds the ensemble each iteration and carries Fourier scales forward."""

    name = "ensemble"

    def __init__(self, problem: BenchmarkProblem, settings: AdaptiveSettings):
        self.emulators = problem.emulators()
        self.config = settings.ensemble_config
        self.seed = settings.seed

    def fit(self, data: Dataset, iteration: int) -> Ensemble:
        config = dataclasses.replace(self.config, base_seed=_member_base_seed(self.seed, iteration))
        ensemble = build_ensemble(data, self.emulators, config)
        self.config = self.config.with_scales(ensemble.fourier_scales)
        return ensemble

    def acquisition(self, ensemble: Ensemble, f_min: float) -> Acquisition:
        return _ensemble_ei(ensemble, f_min)

    def screening(self, ensemble: Ensemble, f_min: float) -> Acquisition:
        return _ensemble_ei(ensemble, f_min, np.float32)

    def describe(self, ensemble: Ensemble) -> dict:
        kept = [r for r in ensemble.records if r.retained]
        return {
            "n_members": ensemble.n_members,
            "dropped": ensemble.drop_counts(),
            "fourier_scales": dict(ensemble.fourier_scales),
            "escalations": dict(ensemble.escalations),
            "max_retained_weight": max(r.max_abs_weight for r in kept),
            "max_retained_nrmse": max(r.train_nrmse for r in kept),
        }


def _ensemble_ei(ensemble: Ensemble, f_min: float, dtype=np.float64) -> Acquisition:
    def ei(z):
        mean, scale, dof = ensemble.predictive(z, dtype)
        return ei_t(mean, scale, dof, f_min)

    return ei


def _member_base_seed(seed: int, iteration: int) -> int:
    return seed * 100_000 + iteration * 100


def _iteration_seed(seed: int, iteration: int, stream: int = 0) -> int:
    return int(np.random.SeedSequence([seed, iteration, stream]).generate_state(1)[0])


def _json_float(value):
    value = float(value)
    if np.isfinite(value):
        return value
    return "inf" if value > 0 else "-inf" if value < 0 else "nan"


def _screening(surrogate, model, f_min):
    screening = getattr(surrogate, "screening", None)
    return None if screening is None else screening(model, f_min)


def _incumbent(data: Dataset) -> Incumbent:
    i = int(np.argmin(data.y))
    return Incumbent(float(data.y[i]), data.X[i].copy())


def run_loop(
    problem: BenchmarkProblem,
    settings: AdaptiveSettings,
    surrogate: Surrogate,
    trace_path: str | Path | None = None,
    header_extra: dict | None = None,
) -> RunState:
    """Fit, maximize EI, sample; until EI converges or the budget is spent."""
    data = initial_dataset(problem, settings)
    state = RunState(
        method=surrogate.name,
        problem=problem.name,
        seed=settings.seed,
        dataset=data,
        incumbent=_incumbent(data),
        ei_tolerance=settings.ei_tolerance,
        max_iterations=settings.resolved_max_iterations(problem.d),
    )
    header = {
        "type": "header",
        "method": surrogate.name,
        "problem": problem.name,
        "d": problem.d,
        "bounds": problem.bounds.tolist(),
        "seed": settings.seed,
        "settings": settings.to_dict(),
        "initial_X": data.X.tolist(),
        "initial_y": data.y.tolist(),
    }
    header.update(header_extra or {})
    sink = _TraceSink(trace_path)
    sink.write(header)
    state.records.append(header)

    while True:
        model = surrogate.fit(state.dataset, state.iteration)
        state.surrogate = model
        f_min = state.incumbent.f_min
        z_star, ei_star = maximize_ei(
            surrogate.acquisition(model, f_min),
            problem.d,
            state.dataset.X_scaled,
            _iteration_seed(settings.seed, state.iteration),
            settings.acquisition,
            screen=_screening(surrogate, model, f_min),
        )
        threshold = settings.ei_tolerance * max(1.0, abs(f_min))
        x_star = state.dataset.unscale(z_star)
        record = {
            "type": "iteration",
            "iteration": state.iteration,
            "n_samples": state.dataset.n,
            "f_min": f_min,
            "x_min": state.incumbent.x_min.tolist(),
            "ei_star": ei_star,
            "ei_threshold": _json_float(threshold),
            "x_candidate": x_star.tolist(),
            "x_added": None,
            "hf_value": None,
            "converged": False,
            "surrogate": surrogate.describe(model),
        }
        state.final_ei = ei_star
        if ei_star < threshold:
            state.converged = True
            record["converged"] = True
        elif state.iteration >= state.max_iterations:
            state.budget_exhausted = True
        else:
            y_new = float(np.asarray(problem.hf(x_star[None, :])).reshape(-1)[0])
            state.dataset = state.dataset.with_point(x_star, y_new)
            state.incumbent = _incumbent(state.dataset)
            state.history.append(HistoryEntry(x_star, ei_star, state.incumbent.f_min))
            state.iteration += 1
            record["x_added"] = x_star.tolist()
            record["hf_value"] = y_new
        sink.write(record)
        state.records.append(record)
        if state.converged or state.budget_exhausted:
            break

    footer = {"type": "summary", **state.summary(), "budget_exhausted": state.budget_exhausted}
    sink.write(footer)
    state.records.append(footer)
    sink.close()
    return state


def run_adaptive(
    problem: BenchmarkProblem,
    settings: AdaptiveSettings = AdaptiveSettings(),
    trace_path: str | Path | None = None,
) -> RunState:
    """Adaptive optimization with the emulator-embedded ensemble."""
    return run_loop(problem, settings, EnsembleSurrogate(problem, settings), trace_path)


def maximize_acquisition(
    ensemble: Ensemble,
    incumbent: Incumbent,
    existing: np.ndarray,
    seed: int,
    settings: AcquisitionSettings = AcquisitionSettings(),
) -> tuple[np.ndarray, float]:
    """Scaled-domain maximizer of the ensemble's Student-t EI."""
    d = ensemble.members[0].input_dim
    return maximize_ei(
        _ensemble_ei(ensemble, incumbent.f_min),
        d,
        existing,
        seed,
        settings,
        screen=_ensemble_ei(ensemble, incumbent.f_min, np.float32),
    )


def dumps_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, allow_nan=False)


class _TraceSink:
    def __init__(self, path):
        self._fh = None
        if path is not None:
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = path.open("w", encoding="utf-8")

    def write(self, record: dict):
        if self._fh is not None:
            self._fh.write(dumps_record(record) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
