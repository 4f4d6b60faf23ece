import hashlib
import json
import math
import subprocess
import sys

import pytest

from dpprovision import cli
from dpprovision.cost_model import CostCurve, LogNormal, dc_vcg

FIVE_CSV = "id,bit,gamma,eta,income\n" + "".join(
    f"{i},{i % 2},{g},0.5,100\n" for i, g in enumerate([1, 2, 3, 4, 5]))
LOGNORMAL = {"kind": "lognormal", "params": {"mu": 0.0, "sigma": 1.0}}


@pytest.fixture
def files(tmp_path):
    pop = tmp_path / "five.csv"
    pop.write_text(FIVE_CSV)
    model = tmp_path / "model.json"
    model.write_text(json.dumps(LOGNORMAL))
    return tmp_path, pop, model


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_manifest(out):
    return json.loads(out.with_name(out.name + ".manifest.json").read_text())


def test_example_table(capsys):
    assert run("example") == 0
    text = capsys.readouterr().out
    for token in ("14.0129", "0.92864", "69.9146", "3.9965", "0.74978", "18/18"):
        assert token in text


def test_example_json(tmp_path):
    out = tmp_path / "ex.json"
    assert run("example", "--format", "json", "--out", out) == 0
    report = json.loads(out.read_text())
    assert report["passed"]


def test_publish_fixture(files):
    tmp, pop, _ = files
    out = tmp / "pub.json"
    assert run("publish", "--population", pop, "--alpha", 0.4, "--beta", 1 / 3,
               "--seed", 5, "--out", out) == 0
    rep = json.loads(out.read_text())
    eps = (0.5 + math.log(3)) / 2.0
    assert rep["outcome"]["selected_ids"] == [0, 1, 2, 3]
    assert rep["outcome"]["epsilon"] == pytest.approx(eps, rel=1e-15)
    assert rep["outcome"]["total_cost"] == pytest.approx(20 * eps, rel=1e-14)
    assert rep["true_statistic"] == 0.4
    assert rep["certificates"]["dp_epsilon"] == rep["outcome"]["epsilon"]
    assert rep["certificates"]["individually_rational"]
    assert rep["statistic"]["seed"] == 5
    assert rep["error"] == pytest.approx(rep["statistic"]["value"] - 0.4)


def test_publish_is_reproducible(files):
    tmp, pop, _ = files
    outs = [tmp / "a.json", tmp / "b.json"]
    for out in outs:
        assert run("publish", "--population", pop, "--alpha", 0.4, "--beta", 1 / 3,
                   "--mechanism", "lindahl", "--seed", 9, "--out", out) == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()
    digests = [read_manifest(o)["outputs"][0]["sha256"] for o in outs]
    assert digests[0] == digests[1] == hashlib.sha256(outs[0].read_bytes()).hexdigest()


def test_publish_domain_error(files, capsys):
    _, pop, _ = files
    code = run("publish", "--population", pop, "--alpha", 0.4, "--beta", 0.5, "--seed", 1)
    assert code == cli.EXIT_DOMAIN
    assert "0.377541" in capsys.readouterr().err


def test_seed_is_mandatory_for_publish(files):
    _, pop, _ = files
    assert run("publish", "--population", pop, "--alpha", 0.4, "--beta", 1 / 3) == cli.EXIT_USAGE


def test_auction_threshold_error(files):
    _, pop, _ = files
    assert run("auction", "--population", pop, "--alpha", 0.05, "--beta", 0.05) == cli.EXIT_THRESHOLD


def test_fairquery_budget(files, tmp_path):
    _, pop, _ = files
    out = tmp_path / "fq.json"
    assert run("auction", "--population", pop, "--mechanism", "fairquery", "--budget", 16,
               "--beta", 1 / 3, "--out", out) == 0
    assert json.loads(out.read_text())["total_cost"] == 6.0
    assert run("auction", "--population", pop, "--mechanism", "fairquery", "--budget", 0.1,
               "--beta", 1 / 3) == cli.EXIT_BUDGET


def test_parse_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,bit,gamma,eta,income\n0,0,1,1,1\n1,0,-1,1,1\n")
    assert run("auction", "--population", bad, "--alpha", 0.4, "--beta", 0.1) == cli.EXIT_PARSE


def test_model_error(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text('{"kind": "cauchy"}')
    assert run("cost-sweep", "--model", bad, "--n", 10, "--beta", 0.1,
               "--grid", "0.5") == cli.EXIT_MODEL


def test_cost_sweep(files):
    tmp, _, model = files
    out = tmp / "sweep.csv"
    assert run("cost-sweep", "--model", model, "--n", 1000, "--beta", 0.1,
               "--grid", "0.05:0.95:0.05", "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "I,C_vcg,C_lindahl,dC_vcg,dC_lindahl,soc,ordered"
    assert len(lines) == 20
    assert all(line.endswith(",1") for line in lines[1:])


def test_cost_sweep_boundary(files):
    _, _, model = files
    assert run("cost-sweep", "--model", model, "--n", 1000, "--beta", 0.1,
               "--grid", "0.5,1.0") == cli.EXIT_DOMAIN


def test_cost_sweep_empirical_warning(tmp_path):
    pop = tmp_path / "pop.csv"
    assert run("gen-pop", "--n", 400, "--seed", 3, "--out", pop) == 0
    out = tmp_path / "sweep.csv"
    assert run("cost-sweep", "--population", pop, "--beta", 0.1, "--grid", "0.3,0.6",
               "--out", out) == 0
    assert any("QuantileDerivativeWarning" in w for w in read_manifest(out)["warnings"])


def equilibrium(model, tmp, eta_bar, eta_sum):
    out = tmp / "eq.json"
    code = run("equilibrium", "--model", model, "--n", 1000, "--beta", 1 / 3,
               "--eta-bar", repr(eta_bar), "--eta-sum", repr(eta_sum), "--out", out)
    return code, json.loads(out.read_text())


def test_equilibrium_canonical(files):
    tmp, _, model = files
    curve = CostCurve(LogNormal(0, 1), 1000, 1 / 3)
    code, rep = equilibrium(model, tmp, dc_vcg(curve, 0.5), dc_vcg(curve, 0.9))
    assert code == 0 and rep["ordering_holds"]
    assert rep["i_vcg"] == pytest.approx(0.5, abs=1e-9)
    assert rep["i_pareto"] == pytest.approx(0.9, abs=1e-9)


def test_equilibrium_single_consumer(files):
    tmp, _, model = files
    eta = dc_vcg(CostCurve(LogNormal(0, 1), 1000, 1 / 3), 0.5)
    code, rep = equilibrium(model, tmp, eta, eta)
    assert code == 0
    assert rep["i_pareto"] == pytest.approx(rep["i_vcg"], abs=1e-8)


def test_equilibrium_zero_provision(files):
    tmp, _, model = files
    code, rep = equilibrium(model, tmp, 1e-6, 1e-3)
    assert code == cli.EXIT_NO_BRACKET
    assert rep["tags"]["vcg"] == "zero provision"


def test_verify_suite(tmp_path):
    out = tmp_path / "v.json"
    assert run("verify", "--suite", "derivatives", "--seed", 0, "--out", out) == 0
    assert json.loads(out.read_text())["passed"]


def test_config_supplies_defaults(files):
    tmp, pop, _ = files
    cfg = tmp / "cfg.json"
    cfg.write_text(json.dumps({"population": str(pop), "alpha": 0.4, "beta": 1 / 3, "seed": 5}))
    a, b = tmp / "a.json", tmp / "b.json"
    assert run("publish", "--config", cfg, "--out", a) == 0
    assert run("publish", "--population", pop, "--alpha", 0.4, "--beta", 1 / 3, "--seed", 5,
               "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_pop_config(tmp_path):
    cfg = tmp_path / "pop.json"
    cfg.write_text(json.dumps({"n": 50, "seed": 2, "bit_prevalence": 0.0}))
    out = tmp_path / "pop.csv"
    assert run("gen-pop", "--config", cfg, "--out", out) == 0
    rows = out.read_text().splitlines()[1:]
    assert len(rows) == 50 and all(r.split(",")[1] == "0" for r in rows)
    assert read_manifest(out)["config"]["population_config"]["bit_prevalence"] == 0.0


def test_manifest_on_stderr_without_out(files, capsys):
    _, pop, _ = files
    assert run("auction", "--population", pop, "--alpha", 0.4, "--beta", 1 / 3) == 0
    captured = capsys.readouterr()
    manifest = json.loads(captured.err.strip().splitlines()[-1])
    assert manifest["outputs"][0]["sha256"] == hashlib.sha256(captured.out.encode()).hexdigest()
    assert manifest["generator_id"] == "numpy.random.PCG64"


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        run("no-such-command")
    assert info.value.code == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dpprovision", "example"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "14.0129" in proc.stdout


def test_missing_input_file(tmp_path):
    assert run("auction", "--population", tmp_path / "absent.csv", "--alpha", 0.4,
               "--beta", 0.1) == cli.EXIT_IO
