"""The two-parent sum network: X, Y ~ U[0,1] independent, Z = X + Y + N(0, 0.01).

Three scenarios are run: no evidence, X = 1.0, and Z = 2.0. Each is compared
with a closed-form or densely integrated reference built from the exact
uniform priors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fitting import (
    FitConfig,
    FitReport,
    Uniform,
    _norm_cdf,
    triangle_convolved,
    uniform_convolved,
    uniform_grid_fit,
)
from .gaussian_core import GaussianMixture, mixture_eval, mixture_moments
from .network import LinearCPD, Network, NodeSpec, build_network
from .propagation import DEFAULT_OPTIONS, InferenceOptions, InferenceResult, propagate

NOISE_VARIANCE = 0.01
N_PRIOR_COMPONENTS = 20
PLOT_GRID = (-0.25, 2.25, 501)
POSTERIOR_GRID = (-0.25, 1.25, 2001)


def prior_fit(n_components: int = N_PRIOR_COMPONENTS) -> FitReport:
    return uniform_grid_fit(Uniform(0.0, 1.0), FitConfig(n_components, (0.0, 1.0)))


def build_sum_network(prior: GaussianMixture | None = None) -> Network:
    prior = prior if prior is not None else prior_fit().mixture
    return build_network([
        NodeSpec("X", (), prior),
        NodeSpec("Y", (), prior),
        NodeSpec("Z", ("X", "Y"), LinearCPD((1.0, 1.0), NOISE_VARIANCE)),
    ])


def grid(spec: tuple[float, float, int]) -> np.ndarray:
    lo, hi, n = spec
    return np.linspace(lo, hi, n)


def l1_on_grid(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.trapezoid(np.abs(a - b), x))


def posterior_given_sum(x: np.ndarray, z: float = 2.0, noise_variance: float = NOISE_VARIANCE,
                        n_y: int = 2001) -> np.ndarray:
    """Density of X given X + Y + noise = z under exact U[0,1] priors.

    The y-integral is done by trapezoid on ``n_y`` points; the result is
    normalized on ``x`` by trapezoid.
    """
    y = np.linspace(0.0, 1.0, n_y)
    s2 = noise_variance
    inside = (x >= 0.0) & (x <= 1.0)
    lik = np.exp(-0.5 * (z - x[:, None] - y[None, :]) ** 2 / s2) / math.sqrt(2 * math.pi * s2)
    dens = np.where(inside, np.trapezoid(lik, y, axis=1), 0.0)
    return dens / np.trapezoid(dens, x)


def posterior_given_sum_closed(x: np.ndarray, z: float = 2.0,
                               noise_variance: float = NOISE_VARIANCE) -> np.ndarray:
    s = math.sqrt(noise_variance)
    inside = (x >= 0.0) & (x <= 1.0)
    dens = np.where(inside, _norm_cdf((z - x) / s) - _norm_cdf((z - 1.0 - x) / s), 0.0)
    return dens / np.trapezoid(dens, x)


@dataclass
class ExampleResult:
    prior: FitReport
    no_evidence: InferenceResult
    x_observed: InferenceResult
    z_observed: InferenceResult
    metrics: dict[str, float | bool] = field(default_factory=dict)


def run_example(options: InferenceOptions = DEFAULT_OPTIONS) -> ExampleResult:
    fit = prior_fit()
    net = build_sum_network(fit.mixture)
    r0 = propagate(net, {}, options)
    r1 = propagate(net, {"X": 1.0}, options)
    r2 = propagate(net, {"Z": 2.0}, options)

    xs = grid(PLOT_GRID)
    z0 = mixture_eval(r0["Z"], xs)
    z1 = mixture_eval(r1["Z"], xs)
    xp = grid(POSTERIOR_GRID)
    bx = mixture_eval(r2["X"], xp)
    mean, var = mixture_moments(r2["X"])
    metrics = {
        "prior_l1": fit.l1_error,
        "z_no_evidence_l1": l1_on_grid(xs, z0, triangle_convolved(xs, NOISE_VARIANCE)),
        "z_given_x1_l1": l1_on_grid(xs, z1, uniform_convolved(xs, 1.0, 2.0, NOISE_VARIANCE)),
        "y_given_x1_is_prior": r1["Y"] == fit.mixture,
        "x_given_z2_mean": mean,
        "x_given_z2_sd": math.sqrt(var),
        "x_given_z2_l1": l1_on_grid(xp, bx, posterior_given_sum(xp)),
    }
    return ExampleResult(fit, r0, r1, r2, metrics)


def _write_curves(path: Path, xs: np.ndarray, curves: dict[str, np.ndarray]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "x", "density"])
        for node, ys in curves.items():
            for x, y in zip(xs, ys):
                w.writerow([node, format(float(x), ".17g"), format(float(y), ".17g")])


def write_figures(result: ExampleResult, out_dir: str | Path) -> list[Path]:
    """One CSV per figure-equivalent, all on the shared plotting grid."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    xs = grid(PLOT_GRID)
    prior = result.prior.mixture
    files = {
        "fig3_prior_xy.csv": {"X": prior(xs), "Y": prior(xs), "exact": Uniform(0, 1)(xs)},
        "fig4_z_no_evidence.csv": {"Z": result.no_evidence["Z"](xs),
                                   "exact": triangle_convolved(xs, NOISE_VARIANCE)},
        "fig5_z_given_x1.csv": {"Z": result.x_observed["Z"](xs),
                                "exact": uniform_convolved(xs, 1.0, 2.0, NOISE_VARIANCE)},
        "fig6_xy_given_z2.csv": {"X": result.z_observed["X"](xs), "Y": result.z_observed["Y"](xs),
                                 "exact": posterior_given_sum(xs)},
    }
    written = []
    for name, curves in files.items():
        _write_curves(out / name, xs, curves)
        written.append(out / name)
    return written
