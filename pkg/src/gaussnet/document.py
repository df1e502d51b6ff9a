"""JSON network documents.

Layout::

    {"nodes": [
      {"id": "X", "prior": [{"w": 0.5, "mean": 0.0, "var": 1.0}, ...]},
      {"id": "Z", "parents": ["X", "Y"], "linear_cpd": {"coeffs": [1, 1], "noise_var": 0.01}},
      {"id": "W", "parents": ["Z"],
       "mixture_cpd": [{"w": 1, "child_mean": 0, "child_var": 1,
                        "parents": [{"mean": 0, "var": 1}]}]}
    ]}

Numbers are written with 17 significant digits so that a parse/serialize
round trip is exact.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import DocumentError, GaussNetError
from .gaussian_core import NORMALIZED_TOL, GaussianMixture
from .network import ConditionalMixtureCPD, LinearCPD, Network, NodeSpec, build_network

MODEL_KEYS = ("prior", "linear_cpd", "mixture_cpd")


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DocumentError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _field(obj: dict, key: str, where: str):
    if not isinstance(obj, dict):
        raise DocumentError(f"{where}: expected an object")
    if key not in obj:
        raise DocumentError(f"{where}: missing field {key!r}")
    return obj[key]


def parse_prior(items: Any, where: str) -> GaussianMixture:
    if not isinstance(items, list) or not items:
        raise DocumentError(f"{where}: prior must be a nonempty array")
    w, m, v = [], [], []
    for k, item in enumerate(items):
        at = f"{where}[{k}]"
        w.append(_number(_field(item, "w", at), at + ".w"))
        m.append(_number(_field(item, "mean", at), at + ".mean"))
        v.append(_number(_field(item, "var", at), at + ".var"))
    total = sum(w)
    if total > 0 and abs(total - 1.0) > NORMALIZED_TOL:
        if abs(total - 1.0) > 1e-6:
            raise DocumentError(f"{where}: prior weights sum to {total!r}, expected 1")
        w = [x / total for x in w]
    try:
        return GaussianMixture(w, m, v, normalized=True)
    except GaussNetError as exc:
        raise DocumentError(f"{where}: {exc}") from exc


def _parse_node(obj: Any, index: int) -> NodeSpec:
    where = f"nodes[{index}]"
    node_id = _field(obj, "id", where)
    if not isinstance(node_id, str) or not node_id:
        raise DocumentError(f"{where}: id must be a nonempty string")
    where = f"node {node_id!r}"
    parents = obj.get("parents", [])
    if not isinstance(parents, list) or not all(isinstance(p, str) for p in parents):
        raise DocumentError(f"{where}: parents must be an array of node ids")
    present = [k for k in MODEL_KEYS if k in obj]
    if len(present) != 1:
        raise DocumentError(f"{where}: expected exactly one of {', '.join(MODEL_KEYS)}")
    key = present[0]
    body = obj[key]
    try:
        if key == "prior":
            model = parse_prior(body, where)
        elif key == "linear_cpd":
            coeffs = _field(body, "coeffs", where)
            if not isinstance(coeffs, list):
                raise DocumentError(f"{where}: coeffs must be an array")
            model = LinearCPD(tuple(_number(c, where + ".coeffs") for c in coeffs),
                              _number(_field(body, "noise_var", where), where + ".noise_var"))
        else:
            if not isinstance(body, list) or not body:
                raise DocumentError(f"{where}: mixture_cpd must be a nonempty array")
            w, cm, cv, pm, pv = [], [], [], [], []
            for k, comp in enumerate(body):
                at = f"{where}.mixture_cpd[{k}]"
                w.append(_number(_field(comp, "w", at), at))
                cm.append(_number(_field(comp, "child_mean", at), at))
                cv.append(_number(_field(comp, "child_var", at), at))
                factors = _field(comp, "parents", at)
                if not isinstance(factors, list) or len(factors) != len(parents):
                    raise DocumentError(f"{at}: needs one parent factor per parent ({len(parents)})")
                pm.append([_number(_field(f, "mean", at), at) for f in factors])
                pv.append([_number(_field(f, "var", at), at) for f in factors])
            model = ConditionalMixtureCPD(w, cm, cv, np.array(pm).reshape(len(w), len(parents)),
                                          np.array(pv).reshape(len(w), len(parents)))
    except DocumentError:
        raise
    except GaussNetError as exc:
        raise DocumentError(f"{where}: {exc}") from exc
    return NodeSpec(node_id, tuple(parents), model)


def parse_document(text: str) -> list[NodeSpec]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from exc
    nodes = _field(doc, "nodes", "document")
    if not isinstance(nodes, list) or not nodes:
        raise DocumentError("document: 'nodes' must be a nonempty array")
    return [_parse_node(obj, k) for k, obj in enumerate(nodes)]


def load_network(path: str | Path) -> Network:
    text = Path(path).read_text(encoding="utf-8")
    return build_network(parse_document(text))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def prior_to_json(m: GaussianMixture) -> str:
    return "[" + ", ".join(
        f'{{"w": {_fmt(w)}, "mean": {_fmt(mu)}, "var": {_fmt(v)}}}'
        for w, mu, v in zip(m.weights, m.means, m.variances)) + "]"


def _node_to_json(spec: NodeSpec) -> str:
    parts = [f'"id": {json.dumps(spec.id)}']
    if spec.parents:
        parts.append('"parents": [' + ", ".join(json.dumps(p) for p in spec.parents) + "]")
    model = spec.model
    if isinstance(model, GaussianMixture):
        parts.append('"prior": ' + prior_to_json(model))
    elif isinstance(model, LinearCPD):
        coeffs = ", ".join(_fmt(b) for b in model.coefficients)
        parts.append(f'"linear_cpd": {{"coeffs": [{coeffs}], "noise_var": {_fmt(model.noise_variance)}}}')
    else:
        comps = []
        for j in range(model.n_components):
            factors = ", ".join(
                f'{{"mean": {_fmt(model.parent_means[j, i])}, "var": {_fmt(model.parent_variances[j, i])}}}'
                for i in range(model.n_parents))
            comps.append(
                f'{{"w": {_fmt(model.weights[j])}, "child_mean": {_fmt(model.child_means[j])}, '
                f'"child_var": {_fmt(model.child_variances[j])}, "parents": [{factors}]}}')
        parts.append('"mixture_cpd": [\n      ' + ",\n      ".join(comps) + "]")
    return "{" + ", ".join(parts) + "}"


def serialize(network: Network | Sequence[NodeSpec]) -> str:
    specs = list(network.nodes.values()) if isinstance(network, Network) else list(network)
    body = ",\n    ".join(_node_to_json(s) for s in specs)
    return '{\n  "nodes": [\n    ' + body + "\n  ]\n}\n"
