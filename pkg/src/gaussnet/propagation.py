"""Sum-product message passing over polytrees of Gaussian-sum densities.

Messages:

* pi messages, parent -> child: normalized mixtures f(u | evidence above), or
  a unit Dirac when the parent is instantiated;
* lambda messages, child -> parent: either ``VACUOUS`` (the constant 1) or a
  mixture scaled so its largest weight is 1. Any positive rescaling of a
  likelihood is absorbed when the receiving belief is normalized.

All weight arithmetic that multiplies Gaussian evaluations runs on log
weights and is exponentiated only once the result is normalized.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .errors import (
    ContradictoryEvidence,
    EmptyLikelihood,
    EmptyMixture,
    NormalizationFailure,
    ZeroProduct,
)
from .gaussian_core import (
    DEFAULT_REDUCTION,
    GaussianMixture,
    ReductionPolicy,
    _log_product_terms,
    from_log_weights,
    log_overlap,
    mixture_reduce,
)
from .network import ConditionalMixtureCPD, LinearCPD, Network, check_evidence


class Vacuous:
    """The constant likelihood 1: no evidence on that side of the edge."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "VACUOUS"

    def __reduce__(self):
        return (Vacuous, ())


VACUOUS = Vacuous()
Likelihood = Union[Vacuous, GaussianMixture]


def is_vacuous(lam) -> bool:
    return lam is VACUOUS


@dataclass(frozen=True)
class InferenceOptions:
    reduction: ReductionPolicy = DEFAULT_REDUCTION


DEFAULT_OPTIONS = InferenceOptions()
EXACT_OPTIONS = InferenceOptions(ReductionPolicy())


# --------------------------------------------------------------------------
# local rules

def _scale_max(m: GaussianMixture) -> GaussianMixture:
    return GaussianMixture(m.weights / m.weights.max(), m.means, m.variances)


def _reduce_likelihood(m: GaussianMixture, policy: ReductionPolicy) -> GaussianMixture:
    if policy.is_identity:
        return m
    r = mixture_reduce(m, policy)
    return m if r is m else _scale_max(r)


def _collapse_dirac(m: GaussianMixture) -> GaussianMixture:
    # sifting with one Dirac leaves every term at the same point
    if len(m) > 1 and np.all(m.variances == 0) and np.all(m.means == m.means[0]):
        return GaussianMixture.dirac(float(m.means[0]))
    return m


def combine_lambda(messages: Iterable[Likelihood],
                   policy: ReductionPolicy = DEFAULT_REDUCTION) -> Likelihood:
    """Product of the children's likelihoods; vacuous factors drop out."""
    informative = [m for m in messages if not is_vacuous(m)]
    if not informative:
        return VACUOUS
    if len(informative) == 1:
        return informative[0]
    acc = informative[0]
    for nxt in informative[1:]:
        log_w, mean, var = _log_product_terms(acc, nxt)
        try:
            acc = from_log_weights(log_w, mean, var, mode="max")
        except NormalizationFailure as exc:
            raise EmptyLikelihood("children's likelihoods have no common support") from exc
        acc = _reduce_likelihood(_collapse_dirac(acc), policy)
    return acc


def _log_factor_sums(means, variances, pi: GaussianMixture) -> np.ndarray:
    """log sum_k alpha_k N(means[j]; variances[j] + s_k, m_k) for each j."""
    with np.errstate(divide="ignore"):
        log_alpha = np.log(pi.weights)
    terms = log_alpha[None, :] + log_overlap(means[:, None], variances[:, None],
                                              pi.means[None, :], pi.variances[None, :])
    return logsumexp(terms, axis=1)


def pi_log_weights(cpd: ConditionalMixtureCPD, parent_pis: Sequence[GaussianMixture]) -> np.ndarray:
    """Log of the per-component weights of pi(x) for a mixture CPD.

    Factorized form: log c_j + sum_i log sum_k alpha^i_k * overlap(parent
    factor i of j, component k of pi_i).
    """
    if len(parent_pis) != cpd.n_parents:
        raise ValueError(f"expected {cpd.n_parents} parent messages, got {len(parent_pis)}")
    with np.errstate(divide="ignore"):
        out = np.log(cpd.weights).copy()
    for i, pi in enumerate(parent_pis):
        out += _log_factor_sums(cpd.parent_means[:, i], cpd.parent_variances[:, i], pi)
    return out


def compute_pi_mixture(cpd: ConditionalMixtureCPD, parent_pis: Sequence[GaussianMixture],
                       policy: ReductionPolicy = DEFAULT_REDUCTION) -> GaussianMixture:
    log_w = pi_log_weights(cpd, parent_pis)
    m = from_log_weights(log_w, cpd.child_means, cpd.child_variances)
    return mixture_reduce(m, policy)


def _tuple_grid(mixtures: Sequence[GaussianMixture], coeffs: Sequence[float]):
    """Enumerate component tuples of independent mixtures scaled by ``coeffs``.

    Returns flat (log weight, sum of b*mean, sum of b^2*var) arrays with the
    first mixture's index varying slowest.
    """
    log_w = np.zeros(())
    mean = np.zeros(())
    var = np.zeros(())
    for m, b in zip(mixtures, coeffs):
        with np.errstate(divide="ignore"):
            lw = np.log(m.weights)
        log_w = np.add.outer(log_w, lw)
        mean = np.add.outer(mean, b * m.means)
        var = np.add.outer(var, b * b * m.variances)
    return log_w.reshape(-1), mean.reshape(-1), var.reshape(-1)


def compute_pi_linear(cpd: LinearCPD, parent_pis: Sequence[GaussianMixture],
                      policy: ReductionPolicy = DEFAULT_REDUCTION) -> GaussianMixture:
    """pi(x) for x = sum b_i u_i + noise with mixture-valued parent messages."""
    if len(parent_pis) != cpd.n_parents:
        raise ValueError(f"expected {cpd.n_parents} parent messages, got {len(parent_pis)}")
    log_w, mean, var = _tuple_grid(parent_pis, cpd.coefficients)
    m = from_log_weights(log_w, mean, cpd.noise_variance + var)
    return mixture_reduce(m, policy)


def compute_belief(pi: GaussianMixture, lam: Likelihood,
                   policy: ReductionPolicy = DEFAULT_REDUCTION) -> GaussianMixture:
    """Normalized product pi(x) * lambda(x)."""
    if is_vacuous(lam):
        return pi
    log_w, mean, var = _log_product_terms(pi, lam)
    try:
        m = from_log_weights(log_w, mean, var)
    except NormalizationFailure as exc:
        raise EmptyLikelihood("belief has no support under the likelihood") from exc
    return mixture_reduce(_collapse_dirac(m), policy)


def pi_message_to_child(pi: GaussianMixture, other_child_lambdas: Iterable[Likelihood],
                        policy: ReductionPolicy = DEFAULT_REDUCTION) -> GaussianMixture:
    """Message to one child: the belief with that child's likelihood left out.

    ``other_child_lambdas`` are the messages from every *other* child.
    """
    return compute_belief(pi, combine_lambda(other_child_lambdas, policy), policy)


def lambda_log_weights(cpd: ConditionalMixtureCPD, lam: GaussianMixture,
                       other_parent_pis: Sequence[GaussianMixture], target: int) -> np.ndarray:
    """Log of the per-component weights of the lambda message to parent ``target``."""
    n = cpd.n_parents
    if len(other_parent_pis) != n - 1:
        raise ValueError(f"expected {n - 1} co-parent messages, got {len(other_parent_pis)}")
    with np.errstate(divide="ignore"):
        out = np.log(cpd.weights).copy()
    out += _log_factor_sums(cpd.child_means, cpd.child_variances, lam)
    others = [k for k in range(n) if k != target]
    for k, pi in zip(others, other_parent_pis):
        out += _log_factor_sums(cpd.parent_means[:, k], cpd.parent_variances[:, k], pi)
    return out


def lambda_message_to_parent_mixture(cpd: ConditionalMixtureCPD, combined_lambda: Likelihood,
                                     other_parent_pis: Sequence[GaussianMixture], target: int,
                                     policy: ReductionPolicy = DEFAULT_REDUCTION) -> Likelihood:
    if is_vacuous(combined_lambda):
        return VACUOUS
    log_w = lambda_log_weights(cpd, combined_lambda, other_parent_pis, target)
    try:
        m = from_log_weights(log_w, cpd.parent_means[:, target], cpd.parent_variances[:, target],
                             mode="max")
    except NormalizationFailure as exc:
        raise EmptyLikelihood("likelihood to parent vanished") from exc
    return _reduce_likelihood(m, policy)


def lambda_message_to_parent_linear(cpd: LinearCPD, combined_lambda: Likelihood,
                                    other_parent_pis: Sequence[GaussianMixture], target: int,
                                    policy: ReductionPolicy = DEFAULT_REDUCTION) -> Likelihood:
    """Likelihood of parent ``target`` for x = sum b_k u_k + noise.

    For every (lambda component, co-parent components) tuple: weight
    alpha/|b_i| * prod alpha^k, variance (noise + s_lam + sum b_k^2 s_k)/b_i^2,
    mean (m_lam - sum b_k m_k)/b_i.
    """
    if is_vacuous(combined_lambda):
        return VACUOUS
    n = cpd.n_parents
    if len(other_parent_pis) != n - 1:
        raise ValueError(f"expected {n - 1} co-parent messages, got {len(other_parent_pis)}")
    b = cpd.coefficients[target]
    others = [cpd.coefficients[k] for k in range(n) if k != target]
    # the likelihood enters with coefficient 1, co-parents with -b_k
    log_w, mean, var = _tuple_grid([combined_lambda, *other_parent_pis], [1.0, *(-c for c in others)])
    log_w = log_w - np.log(abs(b))
    try:
        m = from_log_weights(log_w, mean / b, (cpd.noise_variance + var) / (b * b), mode="max")
    except NormalizationFailure as exc:
        raise EmptyLikelihood("likelihood to parent vanished") from exc
    return _reduce_likelihood(m, policy)


# --------------------------------------------------------------------------
# full sweep

@dataclass
class EdgeMessages:
    pi: dict[tuple[str, str], GaussianMixture] = field(default_factory=dict)  # (parent, child)
    lam: dict[tuple[str, str], Likelihood] = field(default_factory=dict)  # (child, parent)


@dataclass
class InferenceResult:
    beliefs: dict[str, GaussianMixture]
    messages: EdgeMessages
    diagnostics: dict[str, tuple[int, int]]  # node -> (components before, after reduction)
    evidence: dict[str, float]

    def __getitem__(self, node: str) -> GaussianMixture:
        return self.beliefs[node]


class _Sweep:
    def __init__(self, net: Network, evidence: dict[str, float], policy: ReductionPolicy):
        self.net = net
        self.evidence = evidence
        self.policy = policy
        self.msgs = EdgeMessages()
        self._pi_cache: dict[str, GaussianMixture] = {}

    def node_pi(self, x: str) -> GaussianMixture:
        if x in self._pi_cache:
            return self._pi_cache[x]
        spec = self.net.nodes[x]
        if spec.is_root:
            out = spec.model
        else:
            pis = [self.msgs.pi[(u, x)] for u in spec.parents]
            if isinstance(spec.model, LinearCPD):
                out = compute_pi_linear(spec.model, pis, self.policy)
            else:
                out = compute_pi_mixture(spec.model, pis, self.policy)
        self._pi_cache[x] = out
        return out

    def node_lambda(self, x: str, exclude: str | None = None) -> Likelihood:
        if x in self.evidence:
            return GaussianMixture.dirac(self.evidence[x])
        msgs = [self.msgs.lam[(y, x)] for y in self.net.children[x] if y != exclude]
        return combine_lambda(msgs, self.policy)

    def send(self, x: str, to: str) -> None:
        try:
            if to in self.net.children[x]:
                self.msgs.pi[(x, to)] = self._pi_to_child(x, to)
            else:
                self.msgs.lam[(x, to)] = self._lambda_to_parent(x, to)
        except (EmptyLikelihood, EmptyMixture, NormalizationFailure, ZeroProduct) as exc:
            raise ContradictoryEvidence(f"evidence is contradictory at node {x!r}: {exc}", x) from exc

    def _pi_to_child(self, x: str, child: str) -> GaussianMixture:
        if x in self.evidence:
            return GaussianMixture.dirac(self.evidence[x])
        return compute_belief(self.node_pi(x), self.node_lambda(x, exclude=child), self.policy)

    def _lambda_to_parent(self, x: str, parent: str) -> Likelihood:
        lam = self.node_lambda(x)
        if is_vacuous(lam):
            return VACUOUS
        spec = self.net.nodes[x]
        i = spec.parents.index(parent)
        others = [self.msgs.pi[(u, x)] for u in spec.parents if u != parent]
        if isinstance(spec.model, LinearCPD):
            return lambda_message_to_parent_linear(spec.model, lam, others, i, self.policy)
        return lambda_message_to_parent_mixture(spec.model, lam, others, i, self.policy)

    def run(self, pivot: str) -> None:
        order, tree_parent = [pivot], {pivot: None}
        queue = deque([pivot])
        while queue:
            n = queue.popleft()
            for nb in self.net.neighbours(n):
                if nb not in tree_parent:
                    tree_parent[nb] = n
                    order.append(nb)
                    queue.append(nb)
        for n in reversed(order[1:]):
            self.send(n, tree_parent[n])
        for n in order:
            for nb in self.net.neighbours(n):
                if tree_parent.get(nb) == n:
                    self.send(n, nb)

    def belief(self, x: str) -> tuple[GaussianMixture, tuple[int, int]]:
        if x in self.evidence:
            return GaussianMixture.dirac(self.evidence[x]), (1, 1)
        pi = self.node_pi(x)
        try:
            lam = self.node_lambda(x)
            if is_vacuous(lam):
                return pi, (len(pi), len(pi))
            n_raw = len(pi) * len(lam)
            bel = compute_belief(pi, lam, self.policy)
        except (EmptyLikelihood, EmptyMixture, NormalizationFailure, ZeroProduct) as exc:
            raise ContradictoryEvidence(f"evidence is contradictory at node {x!r}: {exc}", x) from exc
        return bel, (n_raw, len(bel))


def propagate(net: Network, evidence: Mapping[str, float] | None = None,
              options: InferenceOptions = DEFAULT_OPTIONS,
              pivots: Iterable[str] | None = None) -> InferenceResult:
    """Beliefs for every node given point evidence.

    Each connected component is swept twice from a pivot node: a collect pass
    toward the pivot, then a distribute pass away from it, so every edge
    message is computed exactly once. The pivot defaults to the component's
    lowest node id; ``pivots`` may override it per component.
    """
    ev = check_evidence(net, evidence or {})
    preferred = list(pivots or [])
    sweep = _Sweep(net, ev, options.reduction)
    for comp in net.components():
        members = set(comp)
        pivot = next((p for p in preferred if p in members), comp[0])
        sweep.run(pivot)
    beliefs, diagnostics = {}, {}
    for x in net.nodes:
        beliefs[x], diagnostics[x] = sweep.belief(x)
    return InferenceResult(beliefs, sweep.msgs, diagnostics, ev)
