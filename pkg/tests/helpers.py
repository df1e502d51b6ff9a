"""Random instance generators and brute-force oracles shared by the tests.

The oracles here never touch the Gaussian-product algebra under test: they
discretize densities on grids and integrate by trapezoid or scipy.quad.
"""

from __future__ import annotations

import itertools
import math
import string

import numpy as np
from scipy import integrate

from gaussnet.gaussian_core import GaussianMixture, eval_gaussian
from gaussnet.network import ConditionalMixtureCPD, LinearCPD, NodeSpec, build_network


def npdf(x, mean, var):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2 * np.pi * var)


def random_mixture(rng, k=None, mean_range=(-1.5, 1.5), var_range=(0.3, 1.5)):
    k = k or int(rng.integers(1, 4))
    w = rng.dirichlet(np.ones(k))
    return GaussianMixture(w / w.sum(), rng.uniform(*mean_range, k), rng.uniform(*var_range, k),
                           normalized=True)


def random_mixture_cpd(rng, n_parents, k=None, var_range=(0.3, 1.5)):
    k = k or int(rng.integers(1, 4))
    return ConditionalMixtureCPD(rng.dirichlet(np.ones(k)), rng.uniform(-1.5, 1.5, k),
                                 rng.uniform(*var_range, k),
                                 rng.uniform(-1.5, 1.5, (k, n_parents)),
                                 rng.uniform(*var_range, (k, n_parents)))


def random_linear_cpd(rng, n_parents):
    signs = rng.choice([-1.0, 1.0], n_parents)
    return LinearCPD(tuple(signs * rng.uniform(0.5, 1.5, n_parents)), float(rng.uniform(0.3, 1.0)))


def random_polytree(rng, n_nodes, mixture_cpd_prob=0.5, max_linear_parents=2):
    """Random tree skeleton with random edge orientations (always a polytree)."""
    names = list(string.ascii_uppercase[:n_nodes])
    parents = {n: [] for n in names}
    for k in range(1, n_nodes):
        other = names[int(rng.integers(0, k))]
        if rng.random() < 0.5:
            parents[names[k]].append(other)
        else:
            parents[other].append(names[k])
    specs = []
    for n in names:
        ps = parents[n]
        if not ps:
            model = random_mixture(rng)
        elif len(ps) > max_linear_parents or rng.random() < mixture_cpd_prob:
            model = random_mixture_cpd(rng, len(ps))
        else:
            model = random_linear_cpd(rng, len(ps))
        specs.append(NodeSpec(n, tuple(ps), model))
    return build_network(specs)


def topological(net):
    done, order = set(), []
    while len(order) < len(net.nodes):
        for n, spec in net.nodes.items():
            if n not in done and all(p in done for p in spec.parents):
                done.add(n)
                order.append(n)
    return order


def ancestral_sample(net, rng):
    """One joint draw; mixture CPDs are sampled as f(x|u) renormalized in x."""
    values = {}
    for n in topological(net):
        spec = net.nodes[n]
        model = spec.model
        u = np.array([values[p] for p in spec.parents])
        if isinstance(model, GaussianMixture):
            j = rng.choice(len(model), p=model.weights)
            values[n] = rng.normal(model.means[j], math.sqrt(model.variances[j]))
        elif isinstance(model, LinearCPD):
            values[n] = rng.normal(float(np.dot(model.coefficients, u)), math.sqrt(model.noise_variance))
        else:
            w = model.weights * np.prod(npdf(u, model.parent_means, model.parent_variances), axis=1)
            j = rng.choice(model.n_components, p=w / w.sum())
            values[n] = rng.normal(model.child_means[j], math.sqrt(model.child_variances[j]))
    return values


def evidence_covers_mixture_cpds(net, evidence):
    """True when every mixture-CPD node has evidence at itself or below it.

    Only then is the propagated result exact sum-product on the product of
    the given factors: elsewhere a separable mixture CPD is not a proper conditional,
    and the vacuous-likelihood shortcut assumes it is.
    """
    for n, spec in net.nodes.items():
        if isinstance(spec.model, ConditionalMixtureCPD):
            if n not in evidence and not (net.descendants(n) & set(evidence)):
                return False
    return True


def trapezoid_weights(x):
    q = np.empty_like(x)
    dx = np.diff(x)
    q[0], q[-1] = dx[0] / 2, dx[-1] / 2
    q[1:-1] = (dx[:-1] + dx[1:]) / 2
    return q


def _factor_operands(net, grids, letters, comp_letters):
    ops, subs = [], []
    for n, spec in net.nodes.items():
        model = spec.model
        x = grids[n]
        if isinstance(model, GaussianMixture):
            ops.append(npdf(x[:, None], model.means, model.variances) @ model.weights)
            subs.append(letters[n])
        elif isinstance(model, LinearCPD):
            mean = np.zeros(())
            for p, b in zip(spec.parents, model.coefficients):
                mean = np.add.outer(mean, b * grids[p])
            ops.append(npdf(x.reshape((-1,) + (1,) * mean.ndim), mean, model.noise_variance))
            subs.append(letters[n] + "".join(letters[p] for p in spec.parents))
        else:
            j = comp_letters[n]
            ops.append(model.weights[:, None] * npdf(x[None, :], model.child_means[:, None],
                                                     model.child_variances[:, None]))
            subs.append(j + letters[n])
            for i, p in enumerate(spec.parents):
                ops.append(npdf(grids[p][None, :], model.parent_means[:, i][:, None],
                                model.parent_variances[:, i][:, None]))
                subs.append(j + letters[p])
    return ops, subs


def joint_marginal(net, evidence, query, query_grid, integration_grid):
    """Marginal density of ``query`` given point evidence, by brute-force quadrature.

    Every factor is tabulated on grids (evidence nodes pinned to their value)
    and the product is summed with trapezoid weights via einsum.
    """
    names = list(net.nodes)
    letters = {n: string.ascii_lowercase[k] for k, n in enumerate(names)}
    comp_letters = {n: string.ascii_uppercase[k] for k, n in enumerate(names)}
    q_int = trapezoid_weights(integration_grid)

    def contract(query_on_grid):
        grids, weight_ops, weight_subs = {}, [], []
        for n in names:
            if n in evidence:
                grids[n] = np.array([evidence[n]])
            elif n == query and query_on_grid:
                grids[n] = np.asarray(query_grid, dtype=float)
            else:
                grids[n] = integration_grid
                weight_ops.append(q_int)
                weight_subs.append(letters[n])
        ops, subs = _factor_operands(net, grids, letters, comp_letters)
        out = letters[query] if query_on_grid else ""
        expr = ",".join(subs + weight_subs) + "->" + out
        return np.einsum(expr, *ops, *weight_ops, optimize="greedy")

    marginal = contract(True)
    if query in evidence:
        raise ValueError("query is an evidence node")
    return marginal / contract(False)


def quad_product(a_mean, a_var, b_mean, b_var):
    f = lambda u: npdf(u, a_mean, a_var) * npdf(u, b_mean, b_var)
    lo = min(a_mean - 12 * math.sqrt(a_var), b_mean - 12 * math.sqrt(b_var))
    hi = max(a_mean + 12 * math.sqrt(a_var), b_mean + 12 * math.sqrt(b_var))
    val, _ = integrate.quad(f, lo, hi, points=[a_mean, b_mean], epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def nested_gamma(cpd, parent_pis):
    """pi(x) component weights by the unfactorized sum over every parent-component tuple."""
    out = np.zeros(cpd.n_components)
    ranges = [range(len(p)) for p in parent_pis]
    for j in range(cpd.n_components):
        total = 0.0
        for ks in itertools.product(*ranges):
            term = 1.0
            for i, (pi, k) in enumerate(zip(parent_pis, ks)):
                term *= pi.weights[k] * eval_gaussian(cpd.parent_means[j, i],
                                                      pi.means[k],
                                                      cpd.parent_variances[j, i] + pi.variances[k])
            total += term
        out[j] = cpd.weights[j] * total
    return out


def nested_psi(cpd, lam, other_pis, target):
    """Likelihood-message component weights by the unfactorized nested sum."""
    others = [k for k in range(cpd.n_parents) if k != target]
    out = np.zeros(cpd.n_components)
    ranges = [range(len(lam))] + [range(len(p)) for p in other_pis]
    for j in range(cpd.n_components):
        total = 0.0
        for idx in itertools.product(*ranges):
            j0, ks = idx[0], idx[1:]
            term = lam.weights[j0] * eval_gaussian(lam.means[j0], cpd.child_means[j],
                                                   cpd.child_variances[j] + lam.variances[j0])
            for k, pi, kk in zip(others, other_pis, ks):
                term *= pi.weights[kk] * eval_gaussian(cpd.parent_means[j, k], pi.means[kk],
                                                       cpd.parent_variances[j, k] + pi.variances[kk])
            total += term
        out[j] = cpd.weights[j] * total
    return out
