"""Closed-form arithmetic on weighted Gaussians and finite Gaussian mixtures.

A component ``w * N(x; var, mean)`` with ``var == 0`` is a Dirac impulse at
``mean``. Diracs are never evaluated pointwise; products and overlaps with a
Dirac use the sifting property instead.

Weight products are formed in the log domain (see ``_log_product_terms`` and
``from_log_weights``) so that long chains of small Gaussian evaluations do not
underflow before normalization.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DegenerateOverlap,
    DiracEvaluation,
    DiracOnGrid,
    EmptyMixture,
    InvalidComponent,
    InvalidVariance,
    NormalizationFailure,
    NotNormalized,
    ZeroProduct,
)

LOG_2PI = math.log(2.0 * math.pi)
NORMALIZED_TOL = 1e-12


class DegenerateProductWarning(RuntimeWarning):
    """Product of two coincident Diracs; the result carries weight 0."""


@dataclass(frozen=True)
class WeightedGaussian:
    weight: float
    mean: float
    variance: float

    def __post_init__(self):
        for name in ("weight", "mean", "variance"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidComponent(f"{name} must be finite, got {getattr(self, name)!r}")
        if self.weight < 0:
            raise InvalidComponent(f"weight must be nonnegative, got {self.weight!r}")
        if self.variance < 0:
            raise InvalidVariance(f"variance must be nonnegative, got {self.variance!r}")

    @property
    def is_dirac(self) -> bool:
        return self.variance == 0.0


def eval_gaussian(x, mean: float, variance: float):
    """Density of N(mean, variance) at ``x`` (scalar or array)."""
    if variance < 0:
        raise InvalidVariance(f"variance must be nonnegative, got {variance!r}")
    if variance == 0:
        raise DiracEvaluation("cannot evaluate a Dirac component pointwise")
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * (x - mean) ** 2 / variance) / math.sqrt(2.0 * math.pi * variance)
    return float(out) if out.ndim == 0 else out


def log_gauss(x, mean, variance):
    """Vectorized log N(x; variance, mean); ``variance`` must be positive."""
    x = np.asarray(x, dtype=float)
    variance = np.asarray(variance, dtype=float)
    # an overflowing square is a density of exactly zero, i.e. log -inf
    with np.errstate(over="ignore"):
        return -0.5 * (LOG_2PI + np.log(variance)) - 0.5 * (x - mean) ** 2 / variance


def log_overlap(mean_a, var_a, mean_b, var_b):
    """log of the integral of N(u; var_a, mean_a) * N(u; var_b, mean_b) over u.

    Broadcasts; raises DegenerateOverlap when both variances are zero.
    """
    s = np.asarray(var_a, dtype=float) + np.asarray(var_b, dtype=float)
    if np.any(s == 0):
        raise DegenerateOverlap("overlap of two Dirac components is undefined")
    return log_gauss(mean_a, mean_b, s)


def product_pair(a: WeightedGaussian, b: WeightedGaussian) -> WeightedGaussian:
    """Product of two weighted Gaussians as a single weighted Gaussian.

    The returned weight folds in both input weights and the overlap constant
    N(mu_a; var_a + var_b, mu_b).
    """
    s = a.variance + b.variance
    if s == 0:
        if a.mean != b.mean:
            raise ZeroProduct(f"Diracs at {a.mean} and {b.mean} have empty product")
        warnings.warn("product of coincident Diracs", DegenerateProductWarning, stacklevel=2)
        return WeightedGaussian(0.0, a.mean, 0.0)
    if a.variance == 0:
        return WeightedGaussian(a.weight * b.weight * eval_gaussian(a.mean, b.mean, b.variance), a.mean, 0.0)
    if b.variance == 0:
        return WeightedGaussian(a.weight * b.weight * eval_gaussian(b.mean, a.mean, a.variance), b.mean, 0.0)
    var = a.variance * b.variance / s
    mean = (a.mean * b.variance + b.mean * a.variance) / s
    return WeightedGaussian(a.weight * b.weight * eval_gaussian(a.mean, b.mean, s), mean, var)


def overlap_scale(a: WeightedGaussian, b: WeightedGaussian) -> float:
    """w_a * w_b * N(mu_a; var_a + var_b, mu_b), the integral of the product."""
    s = a.variance + b.variance
    if s == 0:
        raise DegenerateOverlap("overlap of two Dirac components is undefined")
    return a.weight * b.weight * eval_gaussian(a.mean, b.mean, s)


class GaussianMixture:
    """Immutable finite weighted sum of (possibly Dirac) Gaussians.

    Components are stored as three read-only float arrays. Equality is
    structural and bitwise, which is what the propagation tests rely on when
    checking that a belief is *exactly* a prior.
    """

    __slots__ = ("_w", "_m", "_v", "normalized")

    def __init__(self, weights, means, variances, normalized: bool = False):
        w = np.array(weights, dtype=float).reshape(-1)
        m = np.array(means, dtype=float).reshape(-1)
        v = np.array(variances, dtype=float).reshape(-1)
        if not (w.shape == m.shape == v.shape):
            raise InvalidComponent("weights, means and variances must have equal length")
        if w.size == 0:
            raise EmptyMixture("a mixture needs at least one component")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
            raise InvalidComponent("mixture parameters must be finite")
        if np.any(w < 0):
            raise InvalidComponent("mixture weights must be nonnegative")
        if np.any(v < 0):
            raise InvalidVariance("mixture variances must be nonnegative")
        if normalized and abs(w.sum() - 1.0) > NORMALIZED_TOL:
            raise NotNormalized(f"weights sum to {w.sum()!r}, not 1")
        for arr in (w, m, v):
            arr.flags.writeable = False
        self._w, self._m, self._v = w, m, v
        self.normalized = bool(normalized)

    @classmethod
    def from_components(cls, components: Iterable[WeightedGaussian], normalized: bool = False):
        comps = list(components)
        return cls([c.weight for c in comps], [c.mean for c in comps],
                   [c.variance for c in comps], normalized=normalized)

    @classmethod
    def single(cls, mean: float, variance: float, weight: float = 1.0) -> "GaussianMixture":
        return cls([weight], [mean], [variance], normalized=(weight == 1.0))

    @classmethod
    def dirac(cls, x0: float) -> "GaussianMixture":
        return cls([1.0], [x0], [0.0], normalized=True)

    @property
    def weights(self) -> np.ndarray:
        return self._w

    @property
    def means(self) -> np.ndarray:
        return self._m

    @property
    def variances(self) -> np.ndarray:
        return self._v

    @property
    def components(self) -> tuple[WeightedGaussian, ...]:
        return tuple(WeightedGaussian(float(w), float(m), float(v))
                     for w, m, v in zip(self._w, self._m, self._v))

    @property
    def has_dirac(self) -> bool:
        return bool(np.any(self._v == 0))

    @property
    def is_dirac(self) -> bool:
        """True for a single unit-weight Dirac impulse."""
        return len(self) == 1 and self._v[0] == 0

    def total_weight(self) -> float:
        return float(self._w.sum())

    def __len__(self):
        return self._w.size

    def __call__(self, x):
        return mixture_eval(self, x)

    def __eq__(self, other):
        if not isinstance(other, GaussianMixture):
            return NotImplemented
        return (self.normalized == other.normalized
                and np.array_equal(self._w, other._w)
                and np.array_equal(self._m, other._m)
                and np.array_equal(self._v, other._v))

    __hash__ = None

    def __repr__(self):
        body = ", ".join(f"{w:.6g}*N({v:.6g}, {m:.6g})" for w, m, v in zip(self._w, self._m, self._v))
        return f"GaussianMixture([{body}], normalized={self.normalized})"


def mixture_eval(m: GaussianMixture, x):
    """Pointwise density of ``m``; ``x`` may be a scalar or an array."""
    if m.has_dirac:
        raise DiracOnGrid("mixture holds Dirac components")
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1)
    # chunk so that wide mixtures on long grids stay within memory
    out = np.empty(flat.size)
    step = max(1, 2_000_000 // max(len(m), 1))
    for s in range(0, flat.size, step):
        xs = flat[s:s + step, None]
        out[s:s + step] = np.exp(log_gauss(xs, m.means, m.variances)) @ m.weights
    out = out.reshape(x.shape)
    return float(out) if out.ndim == 0 else out


def mixture_eval_grid(m: GaussianMixture, grid: Sequence[float]) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        return np.empty(0)
    return mixture_eval(m, grid)


def from_log_weights(log_w, means, variances, mode: str = "normalize") -> GaussianMixture:
    """Build a mixture from log weights.

    ``mode="normalize"`` scales weights to sum to 1, ``mode="max"`` scales the
    largest weight to 1 (the convention for likelihood messages).
    Components whose weight underflows to exactly 0 are kept; callers prune.
    """
    log_w = np.asarray(log_w, dtype=float)
    finite = log_w[np.isfinite(log_w)]
    if finite.size == 0 or np.any(np.isnan(log_w)) or np.any(log_w == np.inf):
        raise NormalizationFailure("no component has positive finite weight")
    if mode == "normalize":
        shift = logsumexp(finite)
    elif mode == "max":
        shift = finite.max()
    else:
        raise ValueError(f"unknown mode {mode!r}")
    w = np.exp(log_w - shift)
    if mode == "normalize":
        w = w / w.sum()
    return GaussianMixture(w, means, variances, normalized=(mode == "normalize"))


def _log_product_terms(a: GaussianMixture, b: GaussianMixture):
    """Pairwise products of components of ``a`` and ``b`` in log-weight form.

    Returns flat (log_weight, mean, variance) arrays ordered with ``a``'s index
    varying slowest. Dirac-Dirac pairs are dropped (different points) or given
    weight 0 (same point).
    """
    va, vb = a.variances[:, None], b.variances[None, :]
    ma, mb = a.means[:, None], b.means[None, :]
    s = va + vb
    both = s == 0
    safe_s = np.where(both, 1.0, s)
    with np.errstate(divide="ignore"):
        log_w = np.log(a.weights)[:, None] + np.log(b.weights)[None, :] + log_gauss(ma, mb, safe_s)
    var = va * vb / safe_s
    mean = (ma * vb + mb * va) / safe_s
    # sifting: the product collapses exactly onto the Dirac location
    mean = np.where((va == 0) & ~both, ma, mean)
    mean = np.where((vb == 0) & ~both, mb, mean)
    var = np.where(both, 0.0, var)
    keep = np.ones(s.shape, dtype=bool)
    if np.any(both):
        coincide = both & (ma == mb)
        keep = ~both | coincide
        if np.any(coincide):
            warnings.warn("product of coincident Diracs", DegenerateProductWarning, stacklevel=3)
        log_w = np.where(coincide, -np.inf, log_w)
        mean = np.where(both, np.broadcast_to(ma, s.shape), mean)
    keep = keep.reshape(-1)
    return log_w.reshape(-1)[keep], mean.reshape(-1)[keep], var.reshape(-1)[keep]


def mixture_product(a: GaussianMixture, b: GaussianMixture) -> GaussianMixture:
    """Pointwise product of two mixtures as an (|a|*|b|)-component mixture."""
    log_w, mean, var = _log_product_terms(a, b)
    if log_w.size == 0:
        raise EmptyMixture("every pairwise product vanished")
    return GaussianMixture(np.exp(log_w), mean, var)


def mixture_normalize(m: GaussianMixture) -> GaussianMixture:
    total = m.weights.sum()
    if not math.isfinite(total) or total <= 0:
        raise NormalizationFailure(f"cannot normalize total weight {total!r}")
    return GaussianMixture(m.weights / total, m.means, m.variances, normalized=True)


def mixture_moments(m: GaussianMixture) -> tuple[float, float]:
    """Mean and variance of a normalized mixture (Diracs allowed)."""
    if abs(m.total_weight() - 1.0) > 1e-9:
        raise NotNormalized("normalize the mixture before taking moments")
    w = m.weights
    mean = float(w @ m.means)
    second = float(w @ (m.variances + m.means ** 2))
    return mean, max(second - mean * mean, 0.0)


# --------------------------------------------------------------------------
# reduction

@dataclass(frozen=True)
class ReductionPolicy:
    prune_epsilon: float = 0.0
    max_components: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.prune_epsilon < 1.0:
            raise ValueError("prune_epsilon must lie in [0, 1)")
        if self.max_components is not None and self.max_components < 1:
            raise ValueError("max_components must be positive")

    @property
    def is_identity(self) -> bool:
        return self.prune_epsilon == 0.0 and self.max_components is None


IDENTITY_REDUCTION = ReductionPolicy()
DEFAULT_REDUCTION = ReductionPolicy(prune_epsilon=1e-9, max_components=512)

# above this size candidate merges are restricted to neighbours in mean order
FULL_PAIRWISE_LIMIT = 256


@dataclass(frozen=True)
class ReductionReport:
    mixture: GaussianMixture
    n_before: int
    n_after: int
    l1_change: float | None  # None when Diracs make the L1 norm undefined


def _merge(w1, m1, v1, w2, m2, v2):
    w = w1 + w2
    a, b = w1 / w, w2 / w
    mean = a * m1 + b * m2
    var = a * v1 + b * v2 + a * b * (m1 - m2) ** 2
    return w, mean, var


def _pair_distance(m1, v1, m2, v2):
    """|mu_1 - mu_2| scaled by the pooled standard deviation."""
    m1, v1, m2, v2 = map(np.asarray, (m1, v1, m2, v2))
    d = np.abs(m1 - m2)
    pooled = np.sqrt(0.5 * (v1 + v2))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = d / pooled
    return np.where(pooled == 0, np.where(d == 0, 0.0, np.inf), out)


def _merge_adjacent(w, m, v, target):
    """Greedy merging restricted to neighbours in mean order.

    A merged mean lies between its two parents, so the order never changes;
    a linked list plus a lazily invalidated heap gives O(n log n).
    """
    order = np.argsort(m, kind="stable")
    w, m, v = [float(a) for a in w[order]], [float(a) for a in m[order]], [float(a) for a in v[order]]
    n = len(w)
    nxt = list(range(1, n)) + [-1]
    prv = [-1] + list(range(n - 1))
    alive = [True] * n
    version = [0] * n

    def key(i):
        j = nxt[i]
        return float(_pair_distance(m[i], v[i], m[j], v[j]))

    heap = [(key(i), i, 0, 0) for i in range(n - 1)]
    heapq.heapify(heap)
    count = n
    while count > target and heap:
        d, i, vi, vj = heapq.heappop(heap)
        j = nxt[i] if alive[i] else -1
        if j < 0 or version[i] != vi or version[j] != vj:
            continue
        w[i], m[i], v[i] = _merge(w[i], m[i], v[i], w[j], m[j], v[j])
        alive[j] = False
        nxt[i] = nxt[j]
        if nxt[j] >= 0:
            prv[nxt[j]] = i
        version[i] += 1
        count -= 1
        if prv[i] >= 0:
            p = prv[i]
            heapq.heappush(heap, (key(p), p, version[p], version[i]))
        if nxt[i] >= 0:
            heapq.heappush(heap, (key(i), i, version[i], version[nxt[i]]))
    idx = [i for i in range(n) if alive[i]]
    return np.array([w[i] for i in idx]), np.array([m[i] for i in idx]), np.array([v[i] for i in idx])


def _merge_pairwise(w, m, v, target):
    w, m, v = w.copy(), m.copy(), v.copy()
    n = w.size
    dist = _pair_distance(m[:, None], v[:, None], m[None, :], v[None, :])
    dist[np.tril_indices(n)] = np.inf
    while w.size > target:
        # row-major argmin picks the lexicographically first (i, j) on ties
        flat = int(np.argmin(dist))
        i, j = divmod(flat, w.size)
        w[i], m[i], v[i] = _merge(w[i], m[i], v[i], w[j], m[j], v[j])
        w, m, v = np.delete(w, j), np.delete(m, j), np.delete(v, j)
        dist = np.delete(np.delete(dist, j, axis=0), j, axis=1)
        row = _pair_distance(m[i], v[i], m, v)
        dist[i, :] = np.where(np.arange(w.size) > i, row, np.inf)
        dist[:i, i] = row[:i]
    return w, m, v


def _l1_between(a: GaussianMixture, b: GaussianMixture, n_points: int = 4001) -> float | None:
    if a.has_dirac or b.has_dirac:
        return None
    lo, hi = quadrature_envelope(a, b)
    x = np.linspace(lo, hi, n_points)
    return float(np.trapezoid(np.abs(a(x) - b(x)), x))


def reduce_with_report(m: GaussianMixture, policy: ReductionPolicy,
                       measure_change: bool = True) -> ReductionReport:
    """Prune, then greedily moment-match merge, then renormalize.

    The input is returned as-is (same object) when the policy leaves every
    component in place.
    """
    n0 = len(m)
    total = m.total_weight()
    if total <= 0 or not math.isfinite(total):
        raise NormalizationFailure("cannot reduce a mixture with no weight")
    w, mu, var = m.weights / total, m.means, m.variances
    keep = w >= policy.prune_epsilon
    if not keep.any():
        keep = w == w.max()
    pruned = not keep.all()
    w, mu, var = w[keep], mu[keep], var[keep]
    limit = policy.max_components
    merged = limit is not None and w.size > limit
    if not pruned and not merged:
        return ReductionReport(m, n0, n0, 0.0)
    if merged:
        if w.size > FULL_PAIRWISE_LIMIT:
            w, mu, var = _merge_adjacent(w, mu, var, max(limit, FULL_PAIRWISE_LIMIT))
        if w.size > limit:
            w, mu, var = _merge_pairwise(w, mu, var, limit)
    out = GaussianMixture(w / w.sum(), mu, var, normalized=True)
    change = _l1_between(mixture_normalize(m), out) if measure_change else None
    return ReductionReport(out, n0, len(out), change)


def mixture_reduce(m: GaussianMixture, policy: ReductionPolicy) -> GaussianMixture:
    if policy.is_identity:
        return m
    return reduce_with_report(m, policy, measure_change=False).mixture


# --------------------------------------------------------------------------
# quadrature helpers

def quadrature_envelope(*mixtures: GaussianMixture, n_sigma: float = 10.0) -> tuple[float, float]:
    """Union of mean +/- n_sigma*sd intervals over every component."""
    lo, hi = math.inf, -math.inf
    for m in mixtures:
        sd = np.sqrt(m.variances)
        lo = min(lo, float(np.min(m.means - n_sigma * sd)))
        hi = max(hi, float(np.max(m.means + n_sigma * sd)))
    return lo, hi


def mixture_l1_distance(m: GaussianMixture, target: Callable[[np.ndarray], np.ndarray],
                        support: tuple[float, float], n_points: int) -> float:
    """Composite-trapezoid estimate of the integral of |m - target| over ``support``."""
    if m.has_dirac:
        raise DiracOnGrid("L1 distance is undefined for Dirac components")
    lo, hi = support
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise ValueError(f"support must be a finite interval, got {support!r}")
    if n_points < 2:
        raise ValueError("need at least two quadrature points")
    x = np.linspace(lo, hi, n_points)
    return float(np.trapezoid(np.abs(m(x) - np.asarray(target(x), dtype=float)), x))
