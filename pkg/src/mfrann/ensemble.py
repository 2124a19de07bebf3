"""Ensembles of rapidly trained networks and their Student-t predictive.

Members that are numerically unstable (huge output weights) or that fail to
interpolate the training data are dropped.  When more than half of the
Fourier members of one architecture are dropped, that architecture's Fourier
scale is raised and its Fourier members are retrained.

The surviving members' predictions at a point are treated as iid normal
draws; under the uninformative normal-inverse-chi-squared prior
(``kappa0 = 0, nu0 = -1, sigma0^2 = 0``) the posterior predictive is
``t_{n-1}(mean, (1 + n) / n * s^2)``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset
from .errors import EnsembleCollapse, InsufficientDataError, NonFiniteError
from .network import (
    LARGE,
    LARGE_HIDDEN_SIZES,
    SMALL,
    ActivationKind,
    Architecture,
    E2nnModel,
    Emulator,
    ModelConfig,
    init_model,
    model_from_dict,
    model_to_dict,
    predict,
    train_last_layer,
)
from .numerics import DEFAULT_RCOND, t_ppf

WEIGHT_MAGNITUDE = "weight_magnitude"
NRMSE = "nrmse"
NON_FINITE = "non_finite"

# (activation name, multiplier on the architecture's Fourier scale)
DEFAULT_ACTIVATIONS = (("swish", None), ("fourier", 1.0), ("fourier", 1.1), ("fourier", 1.2))


@dataclass(frozen=True)
class EnsembleConfig:
    """Recipe for the ensemble and its stability filter.

    The defaults give 4 activations x 2 architectures x 2 replicates = 16
    members.  Fourier activations are given as multipliers of the
    per-architecture scale so that escalation moves all three together.
    """

    replicates_per_unique_model: int = 2
    activations: tuple = DEFAULT_ACTIVATIONS
    architectures: tuple[str, ...] = (SMALL, LARGE)
    small_fourier_scale: float = np.pi
    large_fourier_scale: float = np.pi / 2
    scale_escalation_factor: float = 1.5
    max_escalations: int = 5
    weight_tolerance: float = 100.0
    nrmse_tolerance: float = 1e-3
    min_members: int = 4
    base_seed: int = 0
    large_hidden_sizes: tuple[int, ...] = LARGE_HIDDEN_SIZES
    rcond: float = DEFAULT_RCOND
    standardize_emulators: bool = True

    def __post_init__(self):
        if self.weight_tolerance <= 0 or self.nrmse_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.scale_escalation_factor <= 1:
            raise ValueError("scale_escalation_factor must exceed 1")
        if self.min_members < 4:
            raise ValueError("at least 4 members are needed for a finite predictive variance")
        object.__setattr__(
            self, "activations", tuple((name, mult) for name, mult in self.activations)
        )
        object.__setattr__(self, "architectures", tuple(self.architectures))
        object.__setattr__(self, "large_hidden_sizes", tuple(self.large_hidden_sizes))

    @property
    def n_members(self) -> int:
        return len(self.architectures) * len(self.activations) * self.replicates_per_unique_model

    def fourier_scale(self, arch: str) -> float:
        return self.small_fourier_scale if arch == SMALL else self.large_fourier_scale

    def with_scales(self, scales: dict) -> "EnsembleConfig":
        return dataclasses.replace(
            self,
            small_fourier_scale=scales.get(SMALL, self.small_fourier_scale),
            large_fourier_scale=scales.get(LARGE, self.large_fourier_scale),
        )

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["activations"] = [list(a) for a in self.activations]
        doc["architectures"] = list(self.architectures)
        doc["large_hidden_sizes"] = list(self.large_hidden_sizes)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "EnsembleConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {k: v for k, v in doc.items() if k in known}
        if "activations" in kwargs:
            kwargs["activations"] = tuple(tuple(a) for a in kwargs["activations"])
        for key in ("architectures", "large_hidden_sizes"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class MemberSpec:
    member_id: int
    seed: int
    architecture: str
    activation_name: str
    multiplier: float | None

    @property
    def is_fourier(self) -> bool:
        return self.activation_name == "fourier"


@dataclass(frozen=True)
class MemberRecord:
    """Outcome of training one member, kept for manifests and diagnostics."""

    spec: MemberSpec
    activation: ActivationKind
    hidden_layer_sizes: tuple[int, ...]
    model: E2nnModel | None
    max_abs_weight: float
    train_nrmse: float
    reason: str | None

    @property
    def retained(self) -> bool:
        return self.reason is None


@dataclass(frozen=True)
class TPrediction:
    """Location-scale Student-t predictive at one point."""

    mean: float
    scale: float
    dof: float
    n_members: int

    def interval(self, level: float = 0.95) -> tuple[float, float]:
        half = t_ppf(0.5 + 0.5 * level, self.dof) * self.scale
        return self.mean - half, self.mean + half


@dataclass(frozen=True)
class Ensemble:
    members: tuple[E2nnModel, ...]
    records: tuple[MemberRecord, ...]
    config: EnsembleConfig
    fourier_scales: dict
    escalations: dict
    dataset_fingerprint: str
    emulators: tuple[Emulator, ...] = field(default=(), repr=False)

    @property
    def n_members(self) -> int:
        return len(self.members)

    @property
    def dropped(self) -> list[tuple[int, str]]:
        return [(r.spec.member_id, r.reason) for r in self.records if not r.retained]

    def drop_counts(self) -> dict[str, int]:
        counts = {WEIGHT_MAGNITUDE: 0, NRMSE: 0, NON_FINITE: 0}
        for _, reason in self.dropped:
            counts[reason] += 1
        return counts

    def member_predictions(self, z, dtype=np.float64) -> np.ndarray:
        """``(n_members, m)`` array of member outputs at scaled points ``z``."""
        z2 = np.atleast_2d(np.asarray(z, dtype=float))
        return np.vstack([predict(m, z2, dtype) for m in self.members])

    def predictive(self, z, dtype=np.float64) -> tuple[np.ndarray, np.ndarray, int]:
        """Vectorized posterior predictive: ``(mean, scale, dof)`` at each point."""
        mean, scale = predictive_from_samples(self.member_predictions(z, dtype))
        return mean, scale, self.n_members - 1


def member_specs(config: EnsembleConfig) -> list[MemberSpec]:
    specs = []
    for arch in config.architectures:
        for name, mult in config.activations:
            for _ in range(config.replicates_per_unique_model):
                idx = len(specs)
                specs.append(MemberSpec(idx, config.base_seed + idx, arch, name, mult))
    return specs


def _architecture(arch: str, n_train: int, config: EnsembleConfig) -> Architecture:
    if arch == SMALL:
        return Architecture.small(n_train)
    return Architecture.large(config.large_hidden_sizes)


def _activation(spec: MemberSpec, scales: dict) -> ActivationKind:
    if spec.is_fourier:
        return ActivationKind.fourier(spec.multiplier * scales[spec.architecture])
    return ActivationKind.swish()


def _train_member(spec, data, emulators, config, scales) -> MemberRecord:
    activation = _activation(spec, scales)
    arch = _architecture(spec.architecture, data.n, config)
    model_cfg = ModelConfig(
        architecture=arch,
        activation=activation,
        input_dim=data.d,
        emulators=tuple(emulators),
        standardize_emulators=config.standardize_emulators,
        rcond=config.rcond,
    )
    try:
        model = train_last_layer(init_model(model_cfg, spec.seed), data)
    except (NonFiniteError, np.linalg.LinAlgError):
        return MemberRecord(spec, activation, arch.hidden_layer_sizes, None, np.inf, np.inf, NON_FINITE)
    return _judge(spec, activation, arch, model, config)


def drop_reason(max_abs_weight: float, train_nrmse: float, config: EnsembleConfig) -> str | None:
    """Why a trained member fails the stability filter, or ``None`` if it passes.

    Weight magnitude is checked first; a member failing both checks is
    dropped either way, so the order only affects the recorded reason.
    """
    if not (np.isfinite(max_abs_weight) and np.isfinite(train_nrmse)):
        return NON_FINITE
    if max_abs_weight > config.weight_tolerance:
        return WEIGHT_MAGNITUDE
    if train_nrmse > config.nrmse_tolerance:
        return NRMSE
    return None


def _judge(spec, activation, arch, model, config) -> MemberRecord:
    reason = drop_reason(model.max_abs_weight, model.train_nrmse, config)
    return MemberRecord(
        spec,
        activation,
        arch.hidden_layer_sizes,
        model if reason is None else None,
        float(model.max_abs_weight),
        float(model.train_nrmse),
        reason,
    )


def build_ensemble(
    data: Dataset,
    emulators: Sequence[Emulator],
    config: EnsembleConfig = EnsembleConfig(),
) -> Ensemble:
    """Train, filter and, if needed, re-scale the members.

    Raises
    ------
    EnsembleCollapse
        If fewer than ``config.min_members`` members survive once the
        escalation budget is spent.
    """
    if data.n == 0:
        raise ValueError("cannot build an ensemble on an empty dataset")
    specs = member_specs(config)
    scales = {arch: config.fourier_scale(arch) for arch in config.architectures}
    escalations = {arch: 0 for arch in config.architectures}
    records = [_train_member(s, data, emulators, config, scales) for s in specs]

    for arch in config.architectures:
        fourier_ids = [s.member_id for s in specs if s.architecture == arch and s.is_fourier]
        while fourier_ids and escalations[arch] < config.max_escalations:
            n_bad = sum(not records[i].retained for i in fourier_ids)
            if 2 * n_bad <= len(fourier_ids):
                break
            scales[arch] *= config.scale_escalation_factor
            escalations[arch] += 1
            for i in fourier_ids:
                records[i] = _train_member(specs[i], data, emulators, config, scales)

    survivors = tuple(r.model for r in records if r.retained)
    if len(survivors) < config.min_members:
        dropped = [(r.spec.member_id, r.reason) for r in records if not r.retained]
        raise EnsembleCollapse(
            f"only {len(survivors)} of {len(records)} members survived stability filtering "
            f"(need {config.min_members}); Fourier scales {scales}, drops {dropped}",
            dropped,
        )
    return Ensemble(
        members=survivors,
        records=tuple(records),
        config=config,
        fourier_scales=dict(scales),
        escalations=dict(escalations),
        dataset_fingerprint=data.fingerprint(),
        emulators=tuple(emulators),
    )


def predictive_from_samples(samples) -> tuple[np.ndarray, np.ndarray]:
    """Location and scale of ``t_{n-1}(ybar, (1+n)/n s^2)`` along axis 0."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    if n < 2:
        raise InsufficientDataError("the predictive needs at least two members")
    mean = samples.mean(axis=0)
    var = np.sum((samples - mean) ** 2, axis=0) / (n - 1)
    return mean, np.sqrt((1.0 + n) / n * var)


def t_prediction(samples) -> TPrediction:
    """Posterior predictive from member predictions at a single point."""
    samples = np.asarray(samples, dtype=float).reshape(-1)
    mean, scale = predictive_from_samples(samples)
    return TPrediction(float(mean), float(scale), samples.size - 1, samples.size)


def posterior_predictive(ensemble: Ensemble, z) -> TPrediction:
    return t_prediction(ensemble.member_predictions(np.atleast_2d(z))[:, 0])


@dataclass(frozen=True)
class NormalInvChiSquared:
    """Parameters ``(mu, kappa, nu, sigma_sq)`` of a normal-inverse-chi-squared law."""

    mu: float
    kappa: float
    nu: float
    sigma_sq: float

    @classmethod
    def uninformative(cls) -> "NormalInvChiSquared":
        return cls(0.0, 0.0, -1.0, 0.0)

    def predictive(self) -> TPrediction:
        """Posterior predictive ``t_nu(mu, (1 + kappa) / kappa * sigma_sq)``."""
        if not (self.kappa > 0 and self.nu > 0):
            raise InsufficientDataError("predictive needs kappa > 0 and nu > 0")
        scale = np.sqrt((1.0 + self.kappa) / self.kappa * self.sigma_sq)
        return TPrediction(self.mu, float(scale), self.nu, int(round(self.kappa)))


def conjugate_posterior(prior: NormalInvChiSquared, data) -> NormalInvChiSquared:
    """Conjugate update of a normal-inverse-chi-squared prior with iid normal data."""
    y = np.asarray(data, dtype=float).reshape(-1)
    n = y.size
    if n < 1:
        raise InsufficientDataError("at least one observation is required")
    kappa_n = prior.kappa + n
    nu_n = prior.nu + n
    if not nu_n > 0:
        raise InsufficientDataError(
            f"{n} observation(s) cannot estimate the variance under nu0={prior.nu}"
        )
    ybar = float(y.mean())
    mu_n = (prior.kappa * prior.mu + n * ybar) / kappa_n
    sq_dev = float(np.sum((y - ybar) ** 2))
    shrink = n * prior.kappa / kappa_n * (prior.mu - ybar) ** 2
    sigma_n_sq = (prior.nu * prior.sigma_sq + sq_dev + shrink) / nu_n
    return NormalInvChiSquared(mu_n, kappa_n, nu_n, sigma_n_sq)


def manifest(ensemble: Ensemble) -> dict:
    """JSON-ready description: config, seeds, per-member status, final scales."""
    members = []
    for r in ensemble.records:
        members.append(
            {
                "id": r.spec.member_id,
                "seed": r.spec.seed,
                "architecture": r.spec.architecture,
                "hidden_layer_sizes": list(r.hidden_layer_sizes),
                "activation": r.activation.to_dict(),
                "status": "retained" if r.retained else "dropped",
                "reason": r.reason,
                "max_abs_weight": _finite_or_none(r.max_abs_weight),
                "train_nrmse": _finite_or_none(r.train_nrmse),
                "model": model_to_dict(r.model) if r.model is not None else None,
            }
        )
    return {
        "config": ensemble.config.to_dict(),
        "fourier_scales": dict(ensemble.fourier_scales),
        "escalations": dict(ensemble.escalations),
        "dataset_fingerprint": ensemble.dataset_fingerprint,
        "n_members": ensemble.n_members,
        "members": members,
    }


def _finite_or_none(value):
    return float(value) if np.isfinite(value) else None


def ensemble_from_manifest(doc: dict, emulators: Sequence[Emulator] = ()) -> Ensemble:
    """Rebuild the retained members recorded by :func:`manifest`."""
    config = EnsembleConfig.from_dict(doc["config"])
    emulators = tuple(emulators)
    records, members = [], []
    for entry in doc["members"]:
        spec = MemberSpec(
            entry["id"],
            entry["seed"],
            entry["architecture"],
            entry["activation"]["name"],
            None,
        )
        retained = entry["status"] == "retained"
        model = None
        if entry["model"] is not None:
            model = model_from_dict(entry["model"], emulators)
        if retained:
            members.append(model)
        records.append(
            MemberRecord(
                spec=spec,
                activation=ActivationKind.from_dict(entry["activation"]),
                hidden_layer_sizes=tuple(entry["hidden_layer_sizes"]),
                model=model,
                max_abs_weight=_nan_if_none(entry["max_abs_weight"]),
                train_nrmse=_nan_if_none(entry["train_nrmse"]),
                reason=entry["reason"],
            )
        )
    if len(members) < 1:
        raise ValueError("manifest has no retained members")
    return Ensemble(
        members=tuple(members),
        records=tuple(records),
        config=config,
        fourier_scales=dict(doc["fourier_scales"]),
        escalations=dict(doc["escalations"]),
        dataset_fingerprint=doc["dataset_fingerprint"],
        emulators=emulators,
    )


def _nan_if_none(value):
    return float("nan") if value is None else float(value)
