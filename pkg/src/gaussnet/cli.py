"""Command-line front end.

Exit codes: 0 success, 2 input or validation error, 3 contradictory evidence.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import example
from .document import load_network, prior_to_json
from .errors import ContradictoryEvidence, GaussNetError, InvalidTarget
from .fitting import (
    PRIOR_SPACING_MULTIPLE,
    FitConfig,
    GaussianMixtureTarget,
    Shared,
    SpacingMultiple,
    Tabulated,
    Triangular,
    Uniform,
    uniform_grid_fit,
)
from .gaussian_core import GaussianMixture, ReductionPolicy, mixture_moments
from .propagation import InferenceOptions, propagate

EXIT_OK, EXIT_INPUT, EXIT_CONTRADICTION = 0, 2, 3
AUTO_GRID_POINTS = 401


class UsageError(Exception):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def parse_grid(text: str) -> tuple[float, float, int]:
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise UsageError(f"grid must look like lo:hi:n_points, got {text!r}") from None
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo or n < 1:
        raise UsageError(f"bad grid {text!r}")
    return lo, hi, n


def parse_interval(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(p) for p in text.split(":"))
    except ValueError:
        raise UsageError(f"interval must look like lo:hi, got {text!r}") from None
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise UsageError(f"bad interval {text!r}")
    return lo, hi


def parse_evidence(items: list[str]) -> dict[str, float]:
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise UsageError(f"evidence must look like NODE=value, got {item!r}")
        try:
            v = float(value)
        except ValueError:
            raise UsageError(f"evidence value for {name!r} is not a number: {value!r}") from None
        if not math.isfinite(v):
            raise UsageError(f"evidence value for {name!r} must be finite")
        if name in out:
            raise UsageError(f"evidence for {name!r} given twice")
        out[name] = v
    return out


def parse_target(text: str):
    """``uniform:lo:hi``, ``triangular:lo:mode:hi``, ``gaussian:mean:var`` or ``tabulated:FILE``."""
    kind, _, rest = text.partition(":")
    if kind == "tabulated":
        try:
            data = np.loadtxt(rest, delimiter=",", ndmin=2)
        except (OSError, ValueError) as exc:
            raise InvalidTarget(f"cannot read tabulated target {rest!r}: {exc}") from exc
        if data.shape[1] != 2:
            raise InvalidTarget("tabulated target needs two columns: x, density")
        return Tabulated(data[:, 0], data[:, 1])
    try:
        args = [float(p) for p in rest.split(":")] if rest else []
    except ValueError:
        raise InvalidTarget(f"bad target parameters in {text!r}") from None
    if kind == "uniform" and len(args) == 2:
        return Uniform(*args)
    if kind == "triangular" and len(args) == 3:
        return Triangular(*args)
    if kind == "gaussian" and len(args) == 2:
        if not args[1] > 0:
            raise InvalidTarget("gaussian target needs a positive variance")
        return GaussianMixtureTarget(GaussianMixture.single(args[0], args[1]))
    raise InvalidTarget(f"unrecognised target {text!r}")


def _belief_grid(m: GaussianMixture, spec) -> np.ndarray:
    if spec is not None:
        return np.linspace(*spec)
    mean, var = mixture_moments(m)
    sd = math.sqrt(var)
    return np.linspace(mean - 5 * sd, mean + 5 * sd, AUTO_GRID_POINTS)


# --------------------------------------------------------------------------
# commands

def cmd_validate(args) -> int:
    net = load_network(args.file)
    print(f"{len(net.nodes)} nodes, {len(net.edges)} edges, polytree: ok")
    return EXIT_OK


def cmd_infer(args) -> int:
    net = load_network(args.file)
    evidence = parse_evidence(args.evidence or [])
    queries = args.query or list(net.nodes)
    for q in queries:
        if q not in net.nodes:
            raise UsageError(f"unknown query node {q!r}")
    grid_spec = parse_grid(args.grid) if args.grid else None
    policy = ReductionPolicy(args.prune_eps, args.max_components)
    result = propagate(net, evidence, InferenceOptions(policy))

    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["node", "x", "density"])
    for q in queries:
        bel = result.beliefs[q]
        if bel.is_dirac:
            out.writerow([q, _fmt(bel.means[0]), "DIRAC"])
        else:
            xs = _belief_grid(bel, grid_spec)
            for x, y in zip(xs, bel(xs)):
                out.writerow([q, _fmt(x), _fmt(y)])
        mean, var = mixture_moments(bel)
        print(f"{q}: mean={mean:.10g} variance={var:.10g} components={len(bel)}", file=sys.stderr)
    return EXIT_OK


def cmd_fit(args) -> int:
    target = parse_target(args.target)
    support = parse_interval(args.support) if args.support else target.support
    if args.var is not None:
        rule = Shared(args.var)
    elif args.spacing is not None:
        rule = SpacingMultiple(args.spacing)
    elif isinstance(target, GaussianMixtureTarget) and len(target.mixture) == 1:
        # a single-Gaussian target is matched by its own width
        rule = Shared(float(target.mixture.variances[0]))
    else:
        rule = SpacingMultiple(PRIOR_SPACING_MULTIPLE)
    try:
        config = FitConfig(args.M, support, rule, refine_steps=args.refine, step_size=args.step)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = uniform_grid_fit(target, config)
    print('{"prior": ' + prior_to_json(report.mixture) + "}")
    print()
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["l1", "l2", "iterations"])
    out.writerow([_fmt(report.l1_error), _fmt(report.l2_error), report.iterations_used])
    return EXIT_OK


def cmd_example(args) -> int:
    result = example.run_example()
    files = example.write_figures(result, args.out)
    m = result.metrics
    checks = [
        ("1 prior fit L1 in [0.07, 0.11]", m["prior_l1"], 0.07 <= m["prior_l1"] <= 0.11),
        ("2 Z no evidence L1 <= 0.15", m["z_no_evidence_l1"], m["z_no_evidence_l1"] <= 0.15),
        ("3 Z given X=1 L1 <= 0.15", m["z_given_x1_l1"], m["z_given_x1_l1"] <= 0.15),
        ("3 Y given X=1 equals prior", m["y_given_x1_is_prior"], bool(m["y_given_x1_is_prior"])),
        ("4 X given Z=2 mean >= 0.9", m["x_given_z2_mean"], m["x_given_z2_mean"] >= 0.9),
        ("4 X given Z=2 sd <= 0.15", m["x_given_z2_sd"], m["x_given_z2_sd"] <= 0.15),
        ("4 X given Z=2 L1 <= 0.2", m["x_given_z2_l1"], m["x_given_z2_l1"] <= 0.2),
    ]
    for f in files:
        print(f"wrote {f}")
    for name, value, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gaussnet",
                                description="Continuous polytree Bayesian networks with Gaussian sums")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a network document")
    v.add_argument("file")
    v.set_defaults(func=cmd_validate)

    i = sub.add_parser("infer", help="propagate evidence and print beliefs as CSV")
    i.add_argument("file")
    i.add_argument("--evidence", action="append", metavar="NODE=VALUE")
    i.add_argument("--query", action="append", metavar="NODE")
    i.add_argument("--grid", metavar="LO:HI:N")
    i.add_argument("--prune-eps", type=float, default=1e-9)
    i.add_argument("--max-components", type=int, default=512)
    i.set_defaults(func=cmd_infer)

    f = sub.add_parser("fit", help="fit a Gaussian sum to a density")
    f.add_argument("--target", required=True, metavar="SPEC")
    f.add_argument("--M", type=int, required=True)
    f.add_argument("--support", metavar="LO:HI")
    f.add_argument("--refine", type=int, default=0, metavar="STEPS")
    f.add_argument("--step", type=float, default=0.02)
    width = f.add_mutually_exclusive_group()
    width.add_argument("--var", type=float, help="shared component variance")
    width.add_argument("--spacing", type=float, help="component sd as a multiple of the spacing")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("example", help="run the two-parent sum network scenarios")
    e.add_argument("--out", default="example_out")
    e.set_defaults(func=cmd_example)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ContradictoryEvidence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRADICTION
    except (GaussNetError, UsageError, ValueError, OSError) as exc:
        node = getattr(exc, "node", None)
        label = type(exc).__name__
        where = f" [node {node}]" if node else ""
        print(f"error: {label}{where}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
