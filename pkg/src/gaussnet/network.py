"""Polytree structure and the two conditional-density representations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import (
    ArityMismatch,
    DirectedCycle,
    DuplicateNodeId,
    InvalidComponent,
    InvalidVariance,
    NetworkError,
    NotNormalized,
    PriorWithParents,
    RootWithoutPrior,
    UndirectedCycle,
    UnknownNode,
    UnknownParent,
)
from .gaussian_core import GaussianMixture, NORMALIZED_TOL


class ConditionalMixtureCPD:
    """f(x | u_1..u_n) ~ sum_j c_j N(x; cv_j, cm_j) prod_i N(u_i; pv_ji, pm_ji).

    Every factor has its own variance; the shared-variance form is the case
    ``child_variances[j] == parent_variances[j, i]`` for all ``i``.
    """

    __slots__ = ("weights", "child_means", "child_variances", "parent_means", "parent_variances")

    def __init__(self, weights, child_means, child_variances, parent_means, parent_variances):
        w = np.array(weights, dtype=float).reshape(-1)
        cm = np.array(child_means, dtype=float).reshape(-1)
        cv = np.array(child_variances, dtype=float).reshape(-1)
        pm = np.array(parent_means, dtype=float)
        pv = np.array(parent_variances, dtype=float)
        M = w.size
        if M == 0:
            raise InvalidComponent("a mixture CPD needs at least one component")
        if pm.ndim == 1:
            pm = pm.reshape(M, -1)
        if pv.ndim == 1:
            pv = pv.reshape(M, -1)
        if cm.shape != (M,) or cv.shape != (M,) or pm.shape != pv.shape or pm.shape[0] != M:
            raise InvalidComponent("inconsistent mixture CPD array shapes")
        arrays = (w, cm, cv, pm, pv)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise InvalidComponent("mixture CPD parameters must be finite")
        if np.any(w < 0):
            raise InvalidComponent("mixture CPD weights must be nonnegative")
        if np.any(cv <= 0) or np.any(pv <= 0):
            raise InvalidVariance("mixture CPD variances must be positive")
        for a in arrays:
            a.flags.writeable = False
        self.weights, self.child_means, self.child_variances = w, cm, cv
        self.parent_means, self.parent_variances = pm, pv

    @classmethod
    def shared_variance(cls, weights, child_means, parent_means, variances):
        """The one-variance-per-component form: every factor of component j uses variances[j]."""
        var = np.asarray(variances, dtype=float).reshape(-1)
        pm = np.asarray(parent_means, dtype=float).reshape(var.size, -1)
        return cls(weights, child_means, var, pm, np.repeat(var[:, None], pm.shape[1], axis=1))

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def n_parents(self) -> int:
        return self.parent_means.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ConditionalMixtureCPD):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in self.__slots__)

    __hash__ = None

    def __repr__(self):
        return f"ConditionalMixtureCPD(M={self.n_components}, n={self.n_parents})"


@dataclass(frozen=True)
class LinearCPD:
    """x = sum_i b_i u_i + w,  w ~ N(0, noise_variance)."""

    coefficients: tuple[float, ...]
    noise_variance: float

    def __post_init__(self):
        coeffs = tuple(float(b) for b in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if any(b == 0 or not math.isfinite(b) for b in coeffs):
            raise InvalidComponent("linear coefficients must be finite and nonzero")
        if not (math.isfinite(self.noise_variance) and self.noise_variance > 0):
            raise InvalidVariance("noise variance must be positive")

    @property
    def n_parents(self) -> int:
        return len(self.coefficients)


Model = Union[GaussianMixture, ConditionalMixtureCPD, LinearCPD]


@dataclass(frozen=True)
class NodeSpec:
    id: str
    parents: tuple[str, ...] = ()
    model: Model = None

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        if not isinstance(self.id, str) or not self.id:
            raise NetworkError("node id must be a nonempty string")

    @property
    def is_root(self) -> bool:
        return not self.parents


@dataclass(frozen=True)
class Network:
    nodes: dict[str, NodeSpec]
    children: dict[str, tuple[str, ...]] = field(compare=False)

    @property
    def ids(self) -> list[str]:
        return list(self.nodes)

    def parents(self, node: str) -> tuple[str, ...]:
        return self.nodes[node].parents

    def neighbours(self, node: str) -> tuple[str, ...]:
        return self.nodes[node].parents + self.children[node]

    @property
    def edges(self) -> list[tuple[str, str]]:
        return [(p, n) for n, spec in self.nodes.items() for p in spec.parents]

    def components(self) -> list[list[str]]:
        """Connected components of the undirected skeleton, each sorted by id."""
        seen: set[str] = set()
        out = []
        for start in sorted(self.nodes):
            if start in seen:
                continue
            stack, comp = [start], []
            seen.add(start)
            while stack:
                n = stack.pop()
                comp.append(n)
                for nb in self.neighbours(n):
                    if nb not in seen:
                        seen.add(nb)
                        stack.append(nb)
            out.append(sorted(comp))
        return out

    def descendants(self, node: str) -> set[str]:
        out: set[str] = set()
        stack = list(self.children[node])
        while stack:
            n = stack.pop()
            if n not in out:
                out.add(n)
                stack.extend(self.children[n])
        return out


def _check_model(spec: NodeSpec) -> None:
    model = spec.model
    if spec.is_root:
        if not isinstance(model, GaussianMixture):
            raise RootWithoutPrior(f"root node {spec.id!r} needs a prior mixture", spec.id)
        if model.has_dirac:
            raise InvalidVariance(f"prior of {spec.id!r} has a zero-variance component")
        if abs(model.total_weight() - 1.0) > NORMALIZED_TOL:
            raise NotNormalized(f"prior of {spec.id!r} sums to {model.total_weight()!r}")
        return
    if isinstance(model, GaussianMixture):
        raise PriorWithParents(f"node {spec.id!r} has parents but a prior model", spec.id)
    if isinstance(model, (ConditionalMixtureCPD, LinearCPD)):
        if model.n_parents != len(spec.parents):
            raise ArityMismatch(
                f"node {spec.id!r}: CPD takes {model.n_parents} parents, node lists {len(spec.parents)}",
                spec.id)
        return
    raise NetworkError(f"node {spec.id!r} has no usable model", spec.id)


def validate_polytree(net: Network) -> None:
    """Raise unless directed edges are acyclic and the skeleton is a forest."""
    indeg = {n: len(set(s.parents)) for n, s in net.nodes.items()}
    ready = sorted(n for n, d in indeg.items() if d == 0)
    visited = 0
    while ready:
        n = ready.pop()
        visited += 1
        for c in set(net.children[n]):
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    if visited != len(net.nodes):
        stuck = sorted(n for n, d in indeg.items() if d > 0)
        raise DirectedCycle(f"directed cycle through {stuck[0]!r}", stuck[0])

    parent = {n: n for n in net.nodes}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for p, c in net.edges:
        rp, rc = find(p), find(c)
        if rp == rc:
            raise UndirectedCycle(f"more than one path connects {p!r} and {c!r}", c)
        parent[rp] = rc


def build_network(specs: Sequence[NodeSpec]) -> Network:
    if not specs:
        raise NetworkError("a network needs at least one node")
    nodes: dict[str, NodeSpec] = {}
    for spec in specs:
        if spec.id in nodes:
            raise DuplicateNodeId(f"duplicate node id {spec.id!r}", spec.id)
        nodes[spec.id] = spec
    children: dict[str, list[str]] = {n: [] for n in nodes}
    for spec in specs:
        if spec.id in spec.parents:
            raise DirectedCycle(f"node {spec.id!r} lists itself as a parent", spec.id)
        if len(set(spec.parents)) != len(spec.parents):
            raise UndirectedCycle(f"node {spec.id!r} lists a parent twice", spec.id)
        for p in spec.parents:
            if p not in nodes:
                raise UnknownParent(f"node {spec.id!r} names unknown parent {p!r}", spec.id)
            children[p].append(spec.id)
        _check_model(spec)
    net = Network(nodes, {n: tuple(c) for n, c in children.items()})
    validate_polytree(net)
    return net


def check_evidence(net: Network, evidence: Mapping[str, float]) -> dict[str, float]:
    out = {}
    for node, value in evidence.items():
        if node not in net.nodes:
            raise UnknownNode(f"evidence names unknown node {node!r}", node)
        value = float(value)
        if not math.isfinite(value):
            raise NetworkError(f"evidence for {node!r} is not finite", node)
        out[node] = value
    return out
