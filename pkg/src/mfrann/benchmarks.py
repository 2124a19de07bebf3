"""Analytic HF/LF test problems, addressable by name."""

from __future__ import annotations

import importlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import unscale_points
from .network import Emulator

Fn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BenchmarkProblem:
    """An HF objective on a box with optional LF functions.

    ``hf`` and every entry of ``lf_list`` take an ``(m, d)`` array in original
    units and return ``m`` values.
    """

    name: str
    d: int
    bounds: np.ndarray
    hf: Fn
    lf_list: tuple[tuple[str, Fn], ...] = ()
    known_optimum: tuple[np.ndarray, float] | None = None
    description: str = ""
    default_init: np.ndarray | None = field(default=None, repr=False)

    def emulators(self) -> tuple[Emulator, ...]:
        """LF functions wrapped to accept points of the scaled ``[-1, 1]^d`` domain."""
        bounds = self.bounds

        def wrap(fn):
            return lambda z: fn(unscale_points(z, bounds))

        return tuple(Emulator(name, wrap(fn)) for name, fn in self.lf_list)


def _col(x, j):
    return np.atleast_2d(np.asarray(x, dtype=float))[:, j]


def forrester_hf(x):
    t = _col(x, 0)
    return (6.0 * t - 2.0) ** 2 * np.sin(12.0 * t - 4.0)


def forrester_lf(x):
    t = _col(x, 0)
    return 0.5 * forrester_hf(x) + 10.0 * (t - 0.5) - 5.0


# bounded scalar minimization near the known basin; rounds to (0.7572, -6.0207)
FORRESTER_OPTIMUM_X = np.array([0.7572487585])
FORRESTER_OPTIMUM_Y = -6.0207400558


def forrester_pair() -> BenchmarkProblem:
    return BenchmarkProblem(
        name="forrester",
        d=1,
        bounds=np.array([[0.0, 1.0]]),
        hf=forrester_hf,
        lf_list=(("forrester_lf", forrester_lf),),
        known_optimum=(FORRESTER_OPTIMUM_X.copy(), FORRESTER_OPTIMUM_Y),
        description="1-D Forrester function with a linearly deviated LF model",
        default_init=np.array([[0.0], [0.5], [1.0]]),
    )


def nonstationary_hf(x):
    x1, x2 = _col(x, 0), _col(x, 1)
    return (
        np.sin(21.0 * (x1 - 0.9) ** 4) * np.cos(2.0 * (x1 - 0.9))
        + (x1 - 0.7) / 2.0
        + 2.0 * x2**2 * np.sin(x1 * x2)
    )


def nonstationary_lf(x):
    x1, x2 = _col(x, 0), _col(x, 1)
    return (nonstationary_hf(x) - 2.0 + x1 + x2) / (1.0 + 0.25 * x1 + 0.5 * x2)


# Grid oracle: 2001 x 2001 grid over the box, best cell polished with a
# bounded local search (tests/test_benchmarks.py recomputes it).  The minimum
# sits on the x2 = 0 edge.
NONSTATIONARY_OPTIMUM_X = np.array([0.2211734, 0.0])
NONSTATIONARY_OPTIMUM_Y = -0.44420103554


def nonstationary_2d_pair() -> BenchmarkProblem:
    return BenchmarkProblem(
        name="nonstationary2d",
        d=2,
        bounds=np.array([[0.05, 1.05], [0.0, 1.0]]),
        hf=nonstationary_hf,
        lf_list=(("nonstationary_lf", nonstationary_lf),),
        known_optimum=(NONSTATIONARY_OPTIMUM_X.copy(), NONSTATIONARY_OPTIMUM_Y),
        description="2-D nonstationary function with a nonlinearly deviated LF model",
    )


def _coordinate_sum(x):
    return np.atleast_2d(np.asarray(x, dtype=float)).sum(axis=1)


def linear_lf_sanity(d: int = 2) -> BenchmarkProblem:
    """HF = 2 * LF + 3 with LF the coordinate sum on ``[0, 1]^d``."""
    return BenchmarkProblem(
        name="linear_lf",
        d=d,
        bounds=np.tile([0.0, 1.0], (d, 1)),
        hf=lambda x: 2.0 * _coordinate_sum(x) + 3.0,
        lf_list=(("coordinate_sum", _coordinate_sum),),
        known_optimum=(np.zeros(d), 3.0),
        description="HF is an affine function of the embedded LF model",
    )


def high_frequency_sine() -> BenchmarkProblem:
    """``sin(40 x)`` on ``[0, 1]`` with no LF information."""
    return BenchmarkProblem(
        name="sine40",
        d=1,
        bounds=np.array([[0.0, 1.0]]),
        hf=lambda x: np.sin(40.0 * _col(x, 0)),
        description="high-frequency target that destabilizes low-frequency fits",
    )


PROBLEMS: dict[str, Callable[[], BenchmarkProblem]] = {
    "forrester": forrester_pair,
    "nonstationary2d": nonstationary_2d_pair,
    "linear_lf": linear_lf_sanity,
    "sine40": high_frequency_sine,
}


def get_problem(name: str) -> BenchmarkProblem:
    """Look up a registered problem, or import ``package.module:factory``."""
    if name in PROBLEMS:
        return PROBLEMS[name]()
    if ":" in name:
        module_name, attr = name.split(":", 1)
        factory = getattr(importlib.import_module(module_name), attr)
        problem = factory()
        if not isinstance(problem, BenchmarkProblem):
            raise TypeError(f"{name} did not return a BenchmarkProblem")
        return problem
    raise KeyError(f"unknown problem {name!r}; available: {', '.join(sorted(PROBLEMS))}")
