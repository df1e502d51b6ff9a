"""Gaussian-sum approximations of densities and conditional densities.

Three tools:

* ``uniform_grid_fit``: equally weighted, equally spaced, equal-width
  components over a finite support;
* ``gradient_refine``: projected gradient descent on the component weights
  (means and variances frozen) against a discretized L2 objective;
* ``fit_conditional``: a tensor-grid mixture CPD for x = g(u) + noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import erf

from .errors import FitDiverged, InvalidFunction, InvalidTarget, UnsupportedArity
from .gaussian_core import GaussianMixture, mixture_eval, quadrature_envelope
from .network import ConditionalMixtureCPD

# Spacing multiple c (sigma = c * spacing) at which 20 equal components fit
# Uniform(0, 1) with L1 error 0.09, narrow-side root; see match_spacing_multiple.
# The wide-side root (c ~ 1.1646) blurs the support edges and distorts
# posteriors that pile up against an edge.
PRIOR_SPACING_MULTIPLE = 0.37935345537474


# --------------------------------------------------------------------------
# targets

class Uniform:
    def __init__(self, lo: float, hi: float):
        if not hi > lo:
            raise InvalidTarget(f"uniform needs lo < hi, got [{lo}, {hi}]")
        self.lo, self.hi = float(lo), float(hi)

    @property
    def support(self) -> tuple[float, float]:
        return self.lo, self.hi

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.lo) & (x <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def __repr__(self):
        return f"Uniform({self.lo}, {self.hi})"


class Triangular:
    def __init__(self, lo: float, mode: float, hi: float):
        if not (lo <= mode <= hi and hi > lo):
            raise InvalidTarget(f"triangular needs lo <= mode <= hi, got ({lo}, {mode}, {hi})")
        self.lo, self.mode, self.hi = float(lo), float(mode), float(hi)

    @property
    def support(self) -> tuple[float, float]:
        return self.lo, self.hi

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lo, c, hi = self.lo, self.mode, self.hi
        peak = 2.0 / (hi - lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(c > lo, peak * (x - lo) / (c - lo), peak)
            down = np.where(hi > c, peak * (hi - x) / (hi - c), peak)
        y = np.where(x < c, up, down)
        return np.where((x >= lo) & (x <= hi), np.clip(y, 0.0, None), 0.0)

    def __repr__(self):
        return f"Triangular({self.lo}, {self.mode}, {self.hi})"


class Tabulated:
    """Piecewise-linear density through (x, y) points, zero outside, trapezoid-normalized."""

    def __init__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise InvalidTarget("a tabulated target needs at least two (x, density) points")
        if np.any(np.diff(x) <= 0):
            raise InvalidTarget("tabulated grid must be strictly increasing")
        if np.any(y < 0) or not np.all(np.isfinite(y)):
            raise InvalidTarget("tabulated densities must be finite and nonnegative")
        area = np.trapezoid(y, x)
        if area <= 0:
            raise InvalidTarget("tabulated density has zero area")
        self.x, self.y = x, y / area

    @property
    def support(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.x, self.y, left=0.0, right=0.0)


class GaussianMixtureTarget:
    def __init__(self, mixture: GaussianMixture):
        if mixture.has_dirac:
            raise InvalidTarget("target mixtures cannot contain Dirac components")
        self.mixture = GaussianMixture(mixture.weights / mixture.total_weight(), mixture.means,
                                       mixture.variances, normalized=True)

    @property
    def support(self) -> tuple[float, float]:
        return quadrature_envelope(self.mixture, n_sigma=5.0)

    def __call__(self, x):
        return mixture_eval(self.mixture, x)


TargetDensity = Union[Uniform, Triangular, Tabulated, GaussianMixtureTarget]


# --------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class Shared:
    variance: float

    def __post_init__(self):
        if not (math.isfinite(self.variance) and self.variance > 0):
            raise ValueError(f"shared variance must be positive, got {self.variance!r}")

    def variance_for(self, spacing: float) -> float:
        return self.variance


@dataclass(frozen=True)
class SpacingMultiple:
    c: float

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValueError(f"spacing multiple must be positive, got {self.c!r}")

    def variance_for(self, spacing: float) -> float:
        return (self.c * spacing) ** 2


VarianceRule = Union[Shared, SpacingMultiple]


@dataclass(frozen=True)
class FitConfig:
    n_components: int
    support: tuple[float, float]
    variance_rule: VarianceRule = SpacingMultiple(PRIOR_SPACING_MULTIPLE)
    refine_steps: int = 0
    step_size: float = 0.02
    quadrature_points: int = 2001

    def __post_init__(self):
        lo, hi = self.support
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError(f"support must be a finite interval with lo < hi, got {self.support!r}")
        if self.n_components < 1:
            raise ValueError("n_components must be positive")
        if self.refine_steps < 0 or self.step_size <= 0 or self.quadrature_points < 2:
            raise ValueError("invalid refinement or quadrature settings")
        rule = self.variance_rule
        if isinstance(rule, Shared) and not rule.variance > 0:
            raise ValueError("shared variance must be positive")
        if isinstance(rule, SpacingMultiple) and not rule.c > 0:
            raise ValueError("spacing multiple must be positive")

    @property
    def spacing(self) -> float:
        return (self.support[1] - self.support[0]) / self.n_components

    @property
    def variance(self) -> float:
        return self.variance_rule.variance_for(self.spacing)

    def error_support(self) -> tuple[float, float]:
        sigma = math.sqrt(self.variance)
        return self.support[0] - 5.0 * sigma, self.support[1] + 5.0 * sigma


@dataclass(frozen=True)
class FitReport:
    mixture: GaussianMixture
    l1_error: float
    l2_error: float
    iterations_used: int
    support: tuple[float, float]
    n_points: int
    objective_history: tuple[float, ...] = ()
    best_iteration: int = 0


# --------------------------------------------------------------------------
# errors and objective

def fit_error(mixture: GaussianMixture, target: Callable, support: tuple[float, float] | None = None,
              n_points: int = 2001) -> tuple[float, float]:
    """(L1, L2) distance between ``mixture`` and ``target`` by composite trapezoid.

    Without ``support``, integrates over the union of the target's support and
    the mixture's 10-sigma envelope.
    """
    if support is None:
        lo, hi = quadrature_envelope(mixture)
        if hasattr(target, "support"):
            lo, hi = min(lo, target.support[0]), max(hi, target.support[1])
        support = (lo, hi)
    lo, hi = support
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi) or n_points < 2:
        raise ValueError("need a finite support and at least two points")
    x = np.linspace(lo, hi, n_points)
    r = mixture_eval(mixture, x) - np.asarray(target(x), dtype=float)
    return float(np.trapezoid(np.abs(r), x)), float(math.sqrt(np.trapezoid(r * r, x)))


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    q = np.empty_like(x)
    dx = np.diff(x)
    q[0], q[-1] = dx[0] / 2, dx[-1] / 2
    q[1:-1] = (dx[:-1] + dx[1:]) / 2
    return q


def basis_matrix(x: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """Columns are unit-weight component densities evaluated on ``x``."""
    return np.exp(-0.5 * (x[:, None] - means) ** 2 / variances) / np.sqrt(2 * np.pi * variances)


def l2_objective(weights, basis, target_values, quad_weights) -> tuple[float, np.ndarray]:
    """Discretized sum (m - t)^2 dx and its gradient with respect to the weights."""
    r = basis @ weights - target_values
    qr = quad_weights * r
    return float(r @ qr), 2.0 * (basis.T @ qr)


def _project(w: np.ndarray) -> np.ndarray:
    w = np.clip(w, 0.0, None)
    s = w.sum()
    if s <= 0 or not math.isfinite(s):
        raise FitDiverged("projection removed every weight")
    return w / s


# --------------------------------------------------------------------------
# fitting

def grid_mixture(config: FitConfig) -> GaussianMixture:
    lo, _ = config.support
    h = config.spacing
    M = config.n_components
    means = lo + (np.arange(1, M + 1) - 0.5) * h
    return GaussianMixture(np.full(M, 1.0 / M), means, np.full(M, config.variance), normalized=True)


def uniform_grid_fit(target: TargetDensity, config: FitConfig) -> FitReport:
    """Equal-weight, equally spaced components, optionally refined by gradient descent."""
    initial = grid_mixture(config)
    if config.refine_steps > 0:
        return gradient_refine(initial, target, config)
    support = config.error_support()
    l1, l2 = fit_error(initial, target, support, config.quadrature_points)
    return FitReport(initial, l1, l2, 0, support, config.quadrature_points)


def gradient_refine(initial: GaussianMixture, target: TargetDensity, config: FitConfig) -> FitReport:
    """Projected gradient descent on mixture weights against the L2 objective.

    Each step moves against the gradient, clips weights at zero and
    renormalizes them to sum 1. A step that raises the objective is retried
    with half the step size, up to 30 times; after that the descent stops.
    It also stops once an accepted step improves the objective by < 1e-12.

    L2 is only a surrogate for the reported L1 error, and the L2 optimum can
    have a slightly larger L1 error than the starting point. The L1 error of
    every accepted iterate is therefore tracked, and the iterate with the
    smallest one is returned (``best_iteration``; 0 is the initial mixture).
    """
    if initial.has_dirac:
        raise InvalidTarget("cannot refine a mixture holding Dirac components")
    sd = float(np.sqrt(initial.variances.max()))
    lo = min(config.support[0], float(initial.means.min())) - 5.0 * sd
    hi = max(config.support[1], float(initial.means.max())) + 5.0 * sd
    x = np.linspace(lo, hi, config.quadrature_points)
    q = _trapezoid_weights(x)
    basis = basis_matrix(x, initial.means, initial.variances)
    t = np.asarray(target(x), dtype=float)

    def l1_of(weights):
        return float(q @ np.abs(basis @ weights - t))

    w = initial.weights.astype(float)
    obj, grad = l2_objective(w, basis, t, q)
    if not math.isfinite(obj):
        raise FitDiverged("initial objective is not finite")
    history = [obj]
    best_w, best_l1, best_it = w, l1_of(w), 0
    step = config.step_size
    used = 0
    for _ in range(config.refine_steps):
        accepted = False
        for _ in range(31):
            cand = _project(w - step * grad)
            cobj, cgrad = l2_objective(cand, basis, t, q)
            if not math.isfinite(cobj):
                raise FitDiverged("objective became non-finite")
            if cobj <= obj:
                accepted = True
                break
            step /= 2
        if not accepted:
            break
        improvement = obj - cobj
        w, obj, grad = cand, cobj, cgrad
        history.append(obj)
        used += 1
        cl1 = l1_of(w)
        if cl1 < best_l1:
            best_w, best_l1, best_it = w, cl1, used
        if improvement < 1e-12:
            break

    mixture = initial if best_it == 0 else GaussianMixture(best_w, initial.means, initial.variances,
                                                            normalized=True)
    support = (lo, hi)
    l1, l2 = fit_error(mixture, target, support, config.quadrature_points)
    return FitReport(mixture, l1, l2, used, support, config.quadrature_points, tuple(history), best_it)


def _grid_l1(target: TargetDensity, M: int, c: float, support, n_points: int) -> float:
    return uniform_grid_fit(target, FitConfig(M, support, SpacingMultiple(c),
                                              quadrature_points=n_points)).l1_error


def calibrate_spacing_multiple(target: TargetDensity, n_components: int,
                               support: tuple[float, float] | None = None,
                               bounds: tuple[float, float] = (0.1, 3.0),
                               n_points: int = 2001) -> float:
    """Spacing multiple minimizing the L1 error of the grid fit (bounded line search)."""
    support = support or target.support
    res = minimize_scalar(lambda c: _grid_l1(target, n_components, c, support, n_points),
                          bounds=bounds, method="bounded", options={"xatol": 1e-8})
    return float(res.x)


def match_spacing_multiple(target: TargetDensity, n_components: int, l1_target: float,
                           support: tuple[float, float] | None = None, side: str = "narrow",
                           bounds: tuple[float, float] = (0.1, 5.0), n_points: int = 2001) -> float:
    """Spacing multiple whose grid fit has L1 error ``l1_target``.

    The error is smallest at an intermediate c and grows on both sides (ripple
    for narrow components, blurred edges for wide ones), so there are two
    roots; ``side`` picks the one below ("narrow") or above ("wide") the
    minimizer.
    """
    support = support or target.support
    c_min = calibrate_spacing_multiple(target, n_components, support, n_points=n_points)
    f = lambda c: _grid_l1(target, n_components, c, support, n_points) - l1_target
    if f(c_min) > 0:
        raise ValueError(f"no spacing multiple reaches L1 {l1_target}; best is {f(c_min) + l1_target}")
    if side == "narrow":
        lo, hi = bounds[0], c_min
    elif side == "wide":
        lo, hi = c_min, bounds[1]
    else:
        raise ValueError(f"side must be 'narrow' or 'wide', got {side!r}")
    if f(lo) * f(hi) > 0:
        raise ValueError(f"L1 {l1_target} is not bracketed on the {side} side within {bounds}")
    return float(brentq(f, lo, hi, xtol=1e-13))


def fit_conditional(g: Callable[..., float], noise_variance: float,
                    parent_supports: Sequence[tuple[float, float]], grid_sizes: Sequence[int],
                    variance_rule: VarianceRule = SpacingMultiple(PRIOR_SPACING_MULTIPLE)
                    ) -> ConditionalMixtureCPD:
    """Tensor-grid mixture CPD for x = g(u_1, .., u_n) + N(0, noise_variance).

    Component j sits at grid cell centre u^(j): parent factors N(u_i; rule(h_i),
    u^(j)_i), child factor N(x; noise_variance, g(u^(j))), weight proportional
    to the cell volume. ``variance_rule`` sets the parent-factor widths.
    """
    n = len(parent_supports)
    if n not in (1, 2):
        raise UnsupportedArity(f"nonlinear CPD fitting supports 1 or 2 parents, got {n}")
    if len(grid_sizes) != n:
        raise ValueError("need one grid size per parent")
    if not noise_variance > 0:
        raise ValueError("noise variance must be positive")
    axes, spacings = [], []
    for (lo, hi), k in zip(parent_supports, grid_sizes):
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi) or k < 1:
            raise ValueError(f"bad parent support {lo, hi} or grid size {k}")
        h = (hi - lo) / k
        axes.append(lo + (np.arange(k) + 0.5) * h)
        spacings.append(h)
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.reshape(-1) for m in mesh], axis=1)
    child_means = np.array([g(*p) for p in points], dtype=float)
    if not np.all(np.isfinite(child_means)):
        raise InvalidFunction("g returned a non-finite value on the parent grid")
    M = points.shape[0]
    weights = np.full(M, float(np.prod(spacings)))
    weights /= weights.sum()
    parent_vars = np.tile([variance_rule.variance_for(h) for h in spacings], (M, 1))
    return ConditionalMixtureCPD(weights, child_means, np.full(M, float(noise_variance)),
                                 points, parent_vars)


# --------------------------------------------------------------------------
# closed-form reference densities used by the worked example and its checks

def _norm_cdf(z):
    return 0.5 * (1.0 + erf(np.asarray(z) / math.sqrt(2.0)))


def uniform_convolved(x, lo: float, hi: float, noise_variance: float):
    """Density of U[lo, hi] + N(0, noise_variance)."""
    s = math.sqrt(noise_variance)
    x = np.asarray(x, dtype=float)
    return (_norm_cdf((x - lo) / s) - _norm_cdf((x - hi) / s)) / (hi - lo)


def triangle_convolved(x, noise_variance: float):
    """Density of U[0,1] + U[0,1] + N(0, noise_variance).

    The triangle is ramp(x) - 2 ramp(x-1) + ramp(x-2); a ramp smoothed by the
    Gaussian is x Phi(x/s) + s^2 phi(x).
    """
    s = math.sqrt(noise_variance)
    x = np.asarray(x, dtype=float)

    def smooth_ramp(t):
        return t * _norm_cdf(t / s) + s * np.exp(-0.5 * (t / s) ** 2) / math.sqrt(2 * math.pi)

    return smooth_ramp(x) - 2.0 * smooth_ramp(x - 1.0) + smooth_ramp(x - 2.0)
