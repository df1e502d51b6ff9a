import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from gaussnet.cli import main
from gaussnet.document import parse_document, serialize
from gaussnet.errors import DocumentError
from gaussnet.example import PLOT_GRID, build_sum_network, prior_fit
from gaussnet.fitting import triangle_convolved, uniform_convolved
from gaussnet.network import build_network

from helpers import random_polytree


@pytest.fixture(scope="module")
def sum_doc(tmp_path_factory):
    path = tmp_path_factory.mktemp("docs") / "sum.json"
    path.write_text(serialize(build_sum_network(prior_fit().mixture)))
    return path


def write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


# --- document round trip ------------------------------------------------------------

@pytest.mark.parametrize("seed", range(8))
def test_round_trip_random_networks(seed):
    net = random_polytree(np.random.default_rng(seed), 6)
    again = build_network(parse_document(serialize(net)))
    assert again == net
    assert serialize(again) == serialize(net)


def test_round_trip_sum_network(sum_doc):
    net = build_network(parse_document(sum_doc.read_text()))
    assert net == build_sum_network(prior_fit().mixture)


def test_malformed_json_has_location():
    with pytest.raises(DocumentError) as info:
        parse_document('{"nodes": [\n  {"id": "A", "prior": [{"w": 1, "mean": 0.5.3, "var": 1}]}]}')
    assert info.value.line == 2 and info.value.column is not None


@pytest.mark.parametrize("doc", [
    {"nodes": []},
    {"nodes": [{"id": "A"}]},
    {"nodes": [{"id": "A", "prior": [{"w": 1, "mean": 0, "var": 1}], "linear_cpd": {}}]},
    {"nodes": [{"id": "A", "prior": [{"w": "1", "mean": 0, "var": 1}]}]},
    {"nodes": [{"id": "A", "prior": [{"w": 0.5, "mean": 0, "var": 1}]}]},
    {"nodes": [{"id": "A", "prior": [{"w": 1, "mean": 0, "var": -1}]}]},
    {"nodes": [{"id": "A", "prior": [{"w": 1, "mean": 0, "var": 1}]},
               {"id": "B", "parents": ["A"], "mixture_cpd": [{"w": 1, "child_mean": 0, "child_var": 1,
                                                             "parents": []}]}]},
])
def test_bad_documents_rejected(doc):
    with pytest.raises(DocumentError):
        parse_document(json.dumps(doc))


# --- validate -------------------------------------------------------------------------

def test_validate_ok(capsys, sum_doc):
    code, out, _ = run(capsys, "validate", sum_doc)
    assert code == 0 and out.strip() == "3 nodes, 2 edges, polytree: ok"


def test_validate_diamond(capsys, tmp_path):
    prior = [{"w": 1, "mean": 0, "var": 1}]
    lin = {"coeffs": [1], "noise_var": 1}
    doc = {"nodes": [{"id": "A", "prior": prior},
                     {"id": "B", "parents": ["A"], "linear_cpd": lin},
                     {"id": "C", "parents": ["A"], "linear_cpd": lin},
                     {"id": "D", "parents": ["B", "C"], "linear_cpd": {"coeffs": [1, 1], "noise_var": 1}}]}
    code, _, err = run(capsys, "validate", write(tmp_path, "d.json", doc))
    assert code == 2 and "UndirectedCycle" in err and "node D" in err


def test_validate_malformed_number(capsys, tmp_path):
    path = write(tmp_path, "bad.json", '{"nodes": [{"id": "A", "prior": [{"w": 1, "mean": 1e, "var": 1}]}]}')
    code, _, err = run(capsys, "validate", path)
    assert code == 2 and "line 1" in err and "column" in err


def test_validate_missing_file(capsys, tmp_path):
    code, _, _ = run(capsys, "validate", tmp_path / "nope.json")
    assert code == 2


# --- infer ------------------------------------------------------------------------------

def test_infer_no_evidence_triangle(capsys, sum_doc):
    code, out, err = run(capsys, "infer", sum_doc, "--query", "Z", "--grid", "0:2:401")
    assert code == 0
    table = rows(out)
    assert table[0] == ["node", "x", "density"] and len(table) == 402
    x = np.array([float(r[1]) for r in table[1:]])
    y = np.array([float(r[2]) for r in table[1:]])
    assert abs(x[np.argmax(y)] - 1.0) <= 0.05
    assert y.max() == pytest.approx(1.0, abs=0.1)
    assert np.max(np.abs(y - triangle_convolved(x, 0.01))) <= 0.15
    assert err.startswith("Z: mean=")


def test_infer_evidence_x_plateau(capsys, sum_doc):
    code, out, _ = run(capsys, "infer", sum_doc, "--evidence", "X=1.0", "--query", "Z",
                       "--grid", "0.5:2.5:401")
    assert code == 0
    table = rows(out)[1:]
    x = np.array([float(r[1]) for r in table])
    y = np.array([float(r[2]) for r in table])
    # the noise (sd 0.1) rounds the edges of U[1, 2]; the exact density is
    # about 0.69 at 1.05, so the flat part is checked away from the edges
    inside = (x > 1.3) & (x < 1.7)
    assert np.all(np.abs(y[inside] - 1.0) <= 0.05)
    assert np.max(np.abs(y - uniform_convolved(x, 1, 2, 0.01))) <= 0.05


def test_infer_evidence_z_posterior(capsys, sum_doc):
    code, _, err = run(capsys, "infer", sum_doc, "--evidence", "Z=2.0", "--query", "X")
    assert code == 0
    fields = dict(part.split("=") for part in err.split()[1:3])
    assert float(fields["mean"]) >= 0.9
    assert float(fields["variance"]) ** 0.5 <= 0.15


def test_infer_evidence_node_query_is_dirac(capsys, sum_doc):
    code, out, _ = run(capsys, "infer", sum_doc, "--evidence", "X=0.25", "--query", "X")
    assert code == 0 and rows(out) == [["node", "x", "density"], ["X", "0.25", "DIRAC"]]


def test_infer_is_deterministic(capsys, sum_doc):
    argv = ("infer", sum_doc, "--evidence", "Z=1.3", "--grid=-0.5:2.5:101")
    first = run(capsys, *argv)
    second = run(capsys, *argv)
    assert first == second


def test_infer_exit_codes(capsys, sum_doc):
    assert run(capsys, "infer", sum_doc, "--query", "Q")[0] == 2
    assert run(capsys, "infer", sum_doc, "--evidence", "Q=1")[0] == 2
    assert run(capsys, "infer", sum_doc, "--evidence", "X=abc")[0] == 2
    assert run(capsys, "infer", sum_doc, "--grid", "0:1")[0] == 2
    code, _, err = run(capsys, "infer", sum_doc, "--evidence", "Z=1e200")
    assert code == 3 and "contradictory" in err


def test_infer_reduction_flags(capsys, sum_doc):
    code, _, err = run(capsys, "infer", sum_doc, "--query", "Z", "--max-components", "50",
                       "--grid", "0:2:11")
    assert code == 0 and "components=50" in err


# --- fit --------------------------------------------------------------------------------

def fit_output(out):
    fragment, _, table = out.partition("\n\n")
    prior = json.loads(fragment)["prior"]
    (l1, l2, iters), = [tuple(r) for r in rows(table)[1:]]
    return prior, float(l1), float(l2), int(iters)


def test_fit_uniform(capsys):
    code, out, _ = run(capsys, "fit", "--target", "uniform:0:1", "--M", "20")
    assert code == 0
    prior, l1, _, iters = fit_output(out)
    assert len(prior) == 20 and iters == 0
    assert 0.07 <= l1 <= 0.11
    code, out, _ = run(capsys, "fit", "--target", "uniform:0:1", "--M", "40")
    assert fit_output(out)[1] < l1


def test_fit_gaussian_exact(capsys):
    code, out, _ = run(capsys, "fit", "--M", "1", "--target", "gaussian:0:1")
    assert code == 0 and fit_output(out)[1] <= 1e-8


def test_fit_output_is_pasteable_prior(capsys, tmp_path):
    _, out, _ = run(capsys, "fit", "--target", "triangular:0:1:2", "--M", "12", "--refine", "20")
    prior, _, _, iters = fit_output(out)
    assert iters > 0
    path = write(tmp_path, "p.json", {"nodes": [{"id": "T", "prior": prior}]})
    assert run(capsys, "validate", path)[0] == 0


def test_fit_tabulated(capsys, tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("0,0\n1,2\n2,0\n")
    code, out, _ = run(capsys, "fit", "--target", f"tabulated:{path}", "--M", "10")
    raw = fit_output(out)[1]
    # equal weights cannot follow a triangle; refining the weights can
    code, out, _ = run(capsys, "fit", "--target", f"tabulated:{path}", "--M", "10", "--refine", "500")
    refined = fit_output(out)[1]
    assert code == 0 and refined < 0.15 < raw


@pytest.mark.parametrize("target", ["uniform:1:0", "gaussian:0:-1", "weird:1", "uniform:a:b",
                                    "tabulated:/nonexistent.csv"])
def test_fit_invalid_target(capsys, target):
    code, _, err = run(capsys, "fit", "--target", target, "--M", "5")
    assert code == 2 and "error" in err


def test_fit_bad_width(capsys):
    assert run(capsys, "fit", "--target", "uniform:0:1", "--M", "5", "--var", "0")[0] == 2
    assert run(capsys, "fit", "--target", "uniform:0:1", "--M", "0")[0] == 2


# --- example -----------------------------------------------------------------------------

def test_example_writes_figures(capsys, tmp_path):
    code, out, _ = run(capsys, "example", "--out", tmp_path)
    assert code == 0
    lines = out.splitlines()
    status = [ln for ln in lines if ln.startswith(("PASS", "FAIL"))]
    assert len(status) == 7 and all(ln.startswith("PASS") for ln in status)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["fig3_prior_xy.csv", "fig4_z_no_evidence.csv", "fig5_z_given_x1.csv",
                     "fig6_xy_given_z2.csv"]
    fig4 = rows((tmp_path / "fig4_z_no_evidence.csv").read_text())
    assert fig4[0] == ["node", "x", "density"]
    labels = [r[0] for r in fig4[1:]]
    assert labels.count("Z") == PLOT_GRID[2] and labels.count("exact") == PLOT_GRID[2]


def test_module_entry_point(sum_doc):
    proc = subprocess.run([sys.executable, "-m", "gaussnet", "validate", str(sum_doc)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "polytree: ok" in proc.stdout
