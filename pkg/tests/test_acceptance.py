"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line
with its runtime (run with -s to see the lines, e.g.
`pytest tests/test_acceptance.py -v -s`).

Criteria 1-9 gate the build at the stated tolerances; criterion 10 is
exploratory and reports findings without failing the suite.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from ssblab.config import ExperimentConfig
from ssblab.experiments import EXPERIMENTS, run_experiment
from ssblab.nn import (
    Dataset,
    Network,
    NetworkSpec,
    hessian_spectrum,
    loss_gradient,
    train,
)


@contextmanager
def criterion(number, description, budget_s):
    start = time.time()
    outcome = {"pass": False}
    try:
        yield outcome
        outcome["pass"] = True
    finally:
        elapsed = time.time() - start
        status = "PASS" if outcome["pass"] else "FAIL"
        print(f"ACCEPTANCE {number}: {status} - {description} ({elapsed:.1f}s)")
    assert elapsed < budget_s, f"criterion {number} exceeded {budget_s}s budget"


def run(experiment, params, seed, out_dir):
    cfg = ExperimentConfig(experiment, params, seed, None)
    return run_experiment(cfg, out_dir_override=out_dir)


def read_rows(out_dir):
    import csv

    with open(out_dir / "results.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def test_criterion_1_bifurcation(tmp_path):
    with criterion(1, "minimizer norm bifurcation at the critical learning rate", 10):
        out = tmp_path / "bif"
        summary = run(
            "bifurcation_sweep",
            {"mu_sq": 1.0, "lam": 4.0, "n_points": 50},
            seed=1,
            out_dir=out,
        )
        assert summary["eta_c"] == pytest.approx(1.0, abs=1e-12)
        rows = read_rows(out)
        assert len(rows) == 50
        for row in rows:
            eta = float(row["eta"])
            expected = np.sqrt(max(0.0, 1.0 / 4.0 - eta**2 / 4.0))
            assert abs(float(row["analytic_norm"]) - expected) < 1e-12
            assert abs(float(row["numeric_norm"]) - expected) < 1e-5
        assert summary["max_abs_err"] < 1e-5


def test_criterion_2_goldstone_spectrum(tmp_path):
    with criterion(2, "D-1 flat Hessian directions at the broken-phase minimum", 5):
        out = tmp_path / "gs"
        run(
            "goldstone_spectrum",
            {"mu_sq": 1.0, "lam": 4.0, "eta": 0.0, "dims": [2, 5, 10], "zero_tol": 1e-8},
            seed=2,
            out_dir=out,
        )
        rows = read_rows(out)
        assert [int(r["dim"]) for r in rows] == [2, 5, 10]
        for row in rows:
            dim = int(row["dim"])
            radial_expected = float(row["radial_expected"])  # 2|m^2|
            assert int(row["n_zero_modes"]) == dim - 1
            assert float(row["max_flat_abs_eig"]) < 1e-8 * radial_expected
            assert float(row["radial_abs_err"]) < 1e-8


def test_criterion_3_kg_dispersion(tmp_path):
    with criterion(3, "lattice dispersion of real-time oscillation frequencies", 60):
        summary = run(
            "kg_dispersion",
            {"m_sq": 1.0, "modes": [0, 1, 2, 3, 4, 5]},
            seed=None,
            out_dir=tmp_path / "kg",
        )
        assert summary["max_rel_err_lat"] < 0.01

        wave = run(
            "kg_dispersion",
            {"m_sq": 0.0, "modes": [1], "n_record": 8192},
            seed=None,
            out_dir=tmp_path / "kg0",
        )
        assert wave["max_rel_err_lat"] < 0.02


def test_criterion_4_free_field_propagator(tmp_path):
    with criterion(4, "free-field mode variances and Euclidean decay rates", 300):
        summary = run("langevin_propagator", {}, seed=42, out_dir=tmp_path / "lp")
        assert summary["max_variance_rel_err"] < 0.10
        assert summary["max_decay_rel_err"] < 0.05
        rows = read_rows(tmp_path / "lp")
        assert sum(r["record"] == "mode_variance" for r in rows) == 5
        assert sum(r["record"] == "decay_rate" for r in rows) == 5


def test_criterion_5_goldstone_ratio_divergence(tmp_path):
    with criterion(5, "tangential/radial correlator ratio grows as the flat mass vanishes", 300):
        ratios = {}
        for i, m_pi_sq in enumerate((0.1, 0.01)):
            summary = run(
                "goldstone_ratio_sweep",
                {"mode": "fixed_masses", "m_sigma_sq": 1.0, "m_pi_sq": m_pi_sq},
                seed=11 + i,
                out_dir=tmp_path / f"gr{i}",
            )
            assert summary["rel_err"] < 0.15
            ratios[m_pi_sq] = summary["ratio_measured"]
        assert ratios[0.01] > ratios[0.1]


def test_criterion_6_symmetry_theorems(tmp_path):
    with criterion(6, "layer symmetry theorems on random networks", 30):
        out = tmp_path / "sym"
        summary = run("symmetry_audit", {}, seed=5, out_dir=out)
        rows = {r["check"]: r for r in read_rows(out)}
        assert float(rows["permutation_covariance_max_dev"]["value"]) < 1e-10
        assert rows["rotation_relu_counterexample_found"]["value"] == "1"
        assert float(rows["affine_collapse_max_dev"]["value"]) < 1e-9
        assert float(rows["adjacent_invariant_max_dev"]["value"]) < 1e-10
        assert float(rows["skip_two_units_median_dev"]["value"]) > 0.1
        assert summary["all_passed"]


def test_criterion_7_memorization(tmp_path):
    with criterion(7, "zero training error on random labels", 120):
        summary = run("memorization", {}, seed=3, out_dir=tmp_path / "mem")
        assert summary["final_train_error"] == 0.0
        assert 0 <= summary["first_zero_error_step"] <= 10_000
        assert not summary["diverged"]


def test_criterion_8_gradient_correctness(tmp_path):
    with criterion(8, "backprop vs finite differences; identity-Hessian toy", 120):
        from ssblab.nn import _forward_batch, _loss_and_delta

        rng = np.random.default_rng(88)
        kinds = ["relu", "sigmoid", "identity"]
        checked = 0
        while checked < 100:
            nl = tuple(rng.choice(kinds, size=2))
            net = Network.initialize(
                NetworkSpec((3, 4, 2), nl, False, seed=int(rng.integers(1e6)))
            )
            X = rng.standard_normal((4, 3))
            loss = "mse" if rng.random() < 0.5 else "cross_entropy"
            y = rng.standard_normal((4, 2)) if loss == "mse" else rng.integers(0, 2, 4)
            data = Dataset(X, y)
            _, pres, _ = _forward_batch(net, X)
            if any(k == "relu" and np.min(np.abs(p)) < 1e-3 for k, p in zip(nl, pres)):
                continue
            _, grads = loss_gradient(net, data, loss)
            flat = np.concatenate([g.ravel() for g in grads])
            fd = np.empty_like(flat)
            h = 1e-6
            pos = 0
            for w in net.weights:
                for idx in np.ndindex(*w.shape):
                    orig = w[idx]
                    w[idx] = orig + h
                    lp = _loss_and_delta(net, X, y, loss)[0]
                    w[idx] = orig - h
                    lm = _loss_and_delta(net, X, y, loss)[0]
                    w[idx] = orig
                    fd[pos] = (lp - lm) / (2 * h)
                    pos += 1
            assert np.max(np.abs(flat - fd)) / max(np.max(np.abs(fd)), 1e-6) < 1e-5
            checked += 1

        # quadratic toy: loss Hessian is exactly the identity
        d, d_out = 3, 2
        X = np.concatenate([np.sqrt(d) * np.eye(d), -np.sqrt(d) * np.eye(d)])
        toy = Dataset(X, np.zeros((2 * d, d_out)))
        net = Network.initialize(NetworkSpec((d, d_out), "identity", False, seed=1))
        report = hessian_spectrum(net, toy, "mse")
        assert np.max(np.abs(report.eigenvalues - 1.0)) < 1e-6


QUICK_CONFIGS = {
    "bifurcation_sweep": {"n_points": 5},
    "goldstone_spectrum": {"dims": [2, 3]},
    "kg_dispersion": {"n_record": 512, "modes": [1, 2]},
    "langevin_propagator": {
        "n_space": 8, "n_time": 8, "a_time": 1.0, "burn_in": 100,
        "n_samples": 60, "thin": 2, "n_variance_modes": 3, "decay_modes": [1],
        "decay_max_lag": 3,
    },
    "goldstone_ratio_sweep": {
        "n_space": 8, "n_time": 8, "burn_in": 100, "n_samples": 60, "thin": 2,
        "jackknife_blocks": 5,
    },
    "symmetry_audit": {"n_nets": 5},
    "memorization": {"n_samples": 16, "input_dim": 4, "widths": [16], "steps": 150,
                     "batch": 16},
    "gradient_variance": {"n_samples": 16, "input_dim": 4, "widths": [16], "steps": 100,
                          "batch": 8},
    "shattered": {"depth": 8, "width": 8, "n_seeds": 3, "n_path": 64},
    "freeze_out": {"n_samples": 16, "input_dim": 4, "widths": [16], "steps": 300,
                   "batch": 16},
}


def test_criterion_9_determinism(tmp_path):
    with criterion(9, "identical seeds give byte-identical CSV artifacts", 300):
        assert set(QUICK_CONFIGS) == set(EXPERIMENTS)
        for name, params in QUICK_CONFIGS.items():
            out_a = tmp_path / name / "a"
            out_b = tmp_path / name / "b"
            run(name, params, seed=7, out_dir=out_a)
            run(name, params, seed=7, out_dir=out_b)
            a = (out_a / "results.csv").read_bytes()
            b = (out_b / "results.csv").read_bytes()
            assert a == b, f"{name}: results.csv differs between identical runs"
            for extra in ("spectrum.csv", "trace.csv"):
                pa, pb = out_a / extra, out_b / extra
                if pa.exists():
                    assert pa.read_bytes() == pb.read_bytes(), f"{name}: {extra} differs"


def test_criterion_10_exploratory_findings(tmp_path):
    """Reported, not gated: qualitative claims are printed as findings."""
    start = time.time()

    # (a) flat-direction fraction of the loss Hessian before vs after
    # memorizing random labels
    rng = np.random.default_rng(100)
    X = rng.normal(size=(32, 8))
    labels = rng.integers(0, 2, 32)
    data = Dataset(X, labels)
    net = Network.initialize(NetworkSpec((8, 24, 24, 2), "relu", False, seed=10))
    before = hessian_spectrum(net, data, "cross_entropy")
    trace = train(net, data, "cross_entropy", eta=0.1, steps=3000, batch=32,
                  seed=0, spectra=False)
    trained = Network(net.spec, trace.final_weights)
    after = hessian_spectrum(trained, data, "cross_entropy")
    converged = trace.records[-1].train_error == 0.0
    grew = after.near_zero_fraction > before.near_zero_fraction
    print(
        f"ACCEPTANCE 10a: {'CONFIRMED' if (converged and grew) else 'FINDING'} - "
        f"near-zero Hessian fraction {before.near_zero_fraction:.3f} -> "
        f"{after.near_zero_fraction:.3f} after memorization "
        f"(train error {trace.records[-1].train_error})"
    )

    # (b) gradient whiteness: plain vs residual across 100 paired seeds
    summary = run("shattered", {"n_seeds": 100}, seed=0, out_dir=tmp_path / "sh")
    frac = summary["frac_plain_gt_residual"]
    print(
        f"ACCEPTANCE 10b: {'CONFIRMED' if frac >= 0.9 else 'FINDING'} - "
        f"plain net whiter than residual on {frac:.0%} of 100 paired seeds "
        f"(median {summary['median_plain']:.3f} vs {summary['median_residual']:.3f})"
    )
    print(f"ACCEPTANCE 10: PASS - exploratory findings reported ({time.time()-start:.1f}s)")
