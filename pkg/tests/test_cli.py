import json

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from mckvlab.cli import main
from mckvlab.config import ConfigError, ExperimentConfig

BASE = {
    "seed": 11,
    "problem": {
        "kind": "mckv",
        "d": 1,
        "K": 2,
        "T": 0.2,
        "phi": {"type": "decay", "zeta": 3.0, "amplitude": 0.3},
        "W0": {"type": "random", "amplitude": 0.3, "decay": 1.0, "seed": 5},
    },
    "solver": {"n": 32, "M": 48},
    "constants": {"alpha": 2.0, "beta": 6.0, "zeta": 3.0, "w": 20.0},
    "inference": {"N": 30, "noise_std": 0.05},
    "surrogate": {"r": 1.0, "c1_hat": 2.0},
    "sampler": {"gamma": 1.0e-4, "n_steps": 80, "burn_in": 20},
}


def _write(tmp_path, overrides=None, name="exp.yaml"):
    cfg = json.loads(json.dumps(BASE))
    for path, value in (overrides or {}).items():
        node = cfg
        keys = path.split(".")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return p


# ---------------------------------------------------------------------------
# config layer


def test_config_defaults_and_hash_stable(tmp_path):
    p = _write(tmp_path)
    c1 = ExperimentConfig.from_file(p)
    c2 = ExperimentConfig.from_file(p)
    assert c1.content_hash() == c2.content_hash()
    assert c1["solver"]["scheme"] == "if-heun"
    derived = c1.derived()
    assert derived["D"] == 4
    assert derived["delta_N"] == pytest.approx(30 ** (-3.0 / 7.0))


def test_config_rejects_unknown_keys(tmp_path):
    p = _write(tmp_path, {"problem.bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(p)


def test_config_rejects_bad_values(tmp_path):
    for overrides in ({"problem.K": 40}, {"solver.n": 7},
                      {"solver.scheme": "rk9"}, {"inference.N": 0},
                      {"sampler.thin": 0}):
        p = _write(tmp_path, overrides)
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(p)


def test_strict_mode_scales_surrogate_radius(tmp_path):
    p = _write(tmp_path, {"mode": "strict", "constants.w": 39.5})
    cfg = ExperimentConfig.from_file(p)
    r = cfg.surrogate_radius(4)
    assert r == pytest.approx(1.0 * 4.0 ** (-39.5))


# ---------------------------------------------------------------------------
# commands


def test_simulate_writes_artifacts_and_reproducible_hash(tmp_path):
    runner = CliRunner()
    p = _write(tmp_path)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    for out in (out1, out2):
        res = runner.invoke(main, ["simulate", "--config", str(p),
                                   "--out", str(out)])
        assert res.exit_code == 0, res.output
        assert (out / "trajectory" / "manifest.json").exists()
    m1 = json.loads((out1 / "manifest.json").read_text())
    m2 = json.loads((out2 / "manifest.json").read_text())
    assert m1["config_hash"] == m2["config_hash"]
    t1 = (out1 / "trajectory" / "node_00.csv").read_text()
    t2 = (out2 / "trajectory" / "node_00.csv").read_text()
    assert t1 == t2


def test_simulate_heat_limit_records_deviation(tmp_path):
    runner = CliRunner()
    p = _write(tmp_path, {"problem.W0.type": "zero"})
    out = tmp_path / "heat"
    res = runner.invoke(main, ["simulate", "--config", str(p), "--out", str(out)])
    assert res.exit_code == 0, res.output
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["heat_limit_max_rel_dev"] < 1e-10


def test_simulate_flags_uniform_state(tmp_path):
    runner = CliRunner()
    p = _write(tmp_path, {"problem.phi.type": "uniform"})
    out = tmp_path / "uni"
    res = runner.invoke(main, ["simulate", "--config", str(p), "--out", str(out)])
    assert res.exit_code == 0, res.output
    manifest = json.loads((out / "manifest.json").read_text())
    assert any("non-identifiable" in f for f in manifest["flags"])


def test_simulate_rd_kind(tmp_path):
    runner = CliRunner()
    p = _write(tmp_path, {"problem.kind": "rd"})
    out = tmp_path / "rd"
    res = runner.invoke(main, ["simulate", "--config", str(p), "--out", str(out)])
    assert res.exit_code == 0, res.output


def test_invalid_config_exits_one(tmp_path):
    runner = CliRunner()
    p = _write(tmp_path, {"problem.kind": "wave"})
    res = runner.invoke(main, ["simulate", "--config", str(p)])
    assert res.exit_code == 1


def test_missing_config_exits_one(tmp_path):
    runner = CliRunner()
    res = runner.invoke(main, ["simulate", "--config", str(tmp_path / "nope.yaml")])
    assert res.exit_code == 1


def test_blowup_exits_three(tmp_path):
    runner = CliRunner()
    p = _write(tmp_path, {"problem.W0.amplitude": 2000.0, "solver.M": 8})
    res = runner.invoke(main, ["simulate", "--config", str(p),
                               "--out", str(tmp_path / "bang")])
    assert res.exit_code == 3


def test_verify_gradients_suite_passes(tmp_path):
    runner = CliRunner()
    p = _write(tmp_path)
    out = tmp_path / "ver"
    res = runner.invoke(main, ["verify", "--config", str(p), "--out", str(out),
                               "--suite", "gradients"])
    assert res.exit_code == 0, res.output
    report = json.loads((out / "verify_report.json").read_text())
    assert report["suites"]["all_passed"] is True
    assert all(rec["passed"] for rec in report["suites"]["gradients"])


def test_verify_stability_uniform_reports_zero_sigma(tmp_path):
    runner = CliRunner()
    p = _write(tmp_path, {"problem.phi.type": "uniform"})
    out = tmp_path / "vuni"
    res = runner.invoke(main, ["verify", "--config", str(p), "--out", str(out),
                               "--suite", "stability"])
    assert res.exit_code == 0, res.output
    report = json.loads((out / "verify_report.json").read_text())
    names = {rec["name"]: rec for rec in report["suites"]["stability"]}
    assert names["sigma_min_uniform_zero"]["measured"] <= 1e-12


def test_verify_failure_exits_two(tmp_path, monkeypatch):
    import mckvlab.checks as checks

    def broken_suite(config):
        return [{"name": "always_fails", "passed": False, "measured": 1.0,
                 "tolerance": 0.0}]

    monkeypatch.setitem(checks.SUITES, "gradients", broken_suite)
    runner = CliRunner()
    p = _write(tmp_path)
    res = runner.invoke(main, ["verify", "--config", str(p),
                               "--out", str(tmp_path / "vf"),
                               "--suite", "gradients"])
    assert res.exit_code == 2


def test_gradcheck_alias(tmp_path):
    runner = CliRunner()
    p = _write(tmp_path)
    res = runner.invoke(main, ["gradcheck", "--config", str(p),
                               "--out", str(tmp_path / "gc")])
    assert res.exit_code == 0, res.output


def test_stability_command_writes_report(tmp_path):
    runner = CliRunner()
    p = _write(tmp_path)
    out = tmp_path / "st"
    res = runner.invoke(main, ["stability", "--config", str(p), "--out", str(out)])
    assert res.exit_code == 0, res.output
    report = json.loads((out / "stability_report.json").read_text())
    for key in ("sigma_min", "decon_margin", "lipschitz_ratio",
                "pseudo_lin_residual"):
        assert key in report["report"]


def test_sample_command(tmp_path):
    runner = CliRunner()
    p = _write(tmp_path)
    out = tmp_path / "sa"
    res = runner.invoke(main, ["sample", "--config", str(p), "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert (out / "chain.csv").exists()
    manifest = json.loads((out / "sample_manifest.json").read_text())
    assert manifest["n_kept"] == 60


def test_recover_command_report(tmp_path):
    runner = CliRunner()
    p = _write(tmp_path)
    out = tmp_path / "rec"
    res = runner.invoke(main, ["recover", "--config", str(p), "--out", str(out)])
    assert res.exit_code == 0, res.output
    report = json.loads((out / "recover_report.json").read_text())
    assert report["oracle_initialiser"] is True
    assert report["assumption_checks"]["warm_start_ok"] is True
    assert np.isfinite(report["recovery_error_l2"])
    assert (out / "chain.csv").exists() and (out / "dataset.csv").exists()


def test_recover_uniform_phi_flags_non_identifiable(tmp_path):
    runner = CliRunner()
    p = _write(tmp_path, {"problem.phi.type": "uniform",
                          "sampler.n_steps": 40, "sampler.burn_in": 10})
    out = tmp_path / "recuni"
    res = runner.invoke(main, ["recover", "--config", str(p), "--out", str(out)])
    assert res.exit_code == 0, res.output
    report = json.loads((out / "recover_report.json").read_text())
    assert any("non-identifiable" in w for w in report["warnings"])


def test_recover_strict_mode_warns_tiny_radius(tmp_path):
    runner = CliRunner()
    p = _write(tmp_path, {
        "mode": "strict",
        "constants": {"alpha": 78.0, "beta": 6.0, "zeta": 6.55, "w": 39.5},
        "inference": {"N": 30, "noise_std": 0.05, "alpha": 2.0},
        "sampler": {"gamma": 1.0e-4, "n_steps": 40, "burn_in": 10},
    })
    out = tmp_path / "strict"
    res = runner.invoke(main, ["recover", "--config", str(p), "--out", str(out)])
    assert res.exit_code == 0, res.output
    report = json.loads((out / "recover_report.json").read_text())
    checks = report["constants_report"]["checks"]
    assert checks["beta_even_ge"] and checks["alpha_window"]
    assert checks["zeta_window"] and checks["w_window"]
    assert any("astronomically small" in w for w in report["warnings"])


def test_seed_override_changes_hash(tmp_path):
    p = _write(tmp_path)
    c1 = ExperimentConfig.from_file(p)
    runner = CliRunner()
    out = tmp_path / "seeded"
    res = runner.invoke(main, ["simulate", "--config", str(p), "--out", str(out),
                               "--seed", "99"])
    assert res.exit_code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 99
    assert manifest["config_hash"] != c1.content_hash()
