"""Named, config-driven experiments with CSV/JSON artifacts.

Every experiment is deterministic for a fixed seed: reruns produce
byte-identical results.csv files. Child seeds for internal repetition
derive from the config seed by fixed offsets. Floats are printed with
17 significant digits.
"""

from __future__ import annotations

import csv
import json
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, ExperimentConfig, Param, validate_params
from .correlation import (
    goldstone_ratio,
    lowest_spacetime_modes,
    mode_variances,
    spectrum_from_euclidean,
    spectrum_from_trajectory,
    write_spectrum_csv,
)
from .groups import (
    affine_collapse,
    apply,
    commutes_with,
    Nonlinearity,
    random_affine,
    random_permutation,
    rotation_2d,
)
from .lattice import FieldConfig, Lattice, k_lat, kg_trajectory, langevin_sample
from .nn import (
    Dataset,
    Network,
    NetworkSpec,
    adjacent_invariant_check,
    covariance_check,
    freeze_out_report,
    gradient_variance_profile,
    shattered_gradient_profile,
    skip_across_units_deviation,
    train,
    write_spectra_json,
    write_trace_csv,
)
from .potential import (
    PotentialParams,
    SSBDecomposition,
    critical_eta,
    decompose,
    mass_squared,
    minimizer_norm,
    numeric_minimize,
    potential_hessian,
)

OUT_DIR_ENV = "SSBLAB_OUT_DIR"


@dataclass(frozen=True)
class ExperimentDef:
    name: str
    description: str
    validates: str
    schema: dict
    stochastic: bool
    runner: callable


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float) or isinstance(value, np.floating):
        return f"{float(value):.17g}"
    return str(value)


def write_rows_csv(rows: list, path) -> None:
    """RFC-4180 CSV with a mandatory header; column set is the union of
    row keys in first-appearance order."""
    columns: list = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) if c in row else "" for c in columns])


# ---------------------------------------------------------------- runners


def _run_bifurcation(params, seed, out_dir):
    p0 = PotentialParams(params["mu_sq"], params["lam"], 0.0, params["dim"])
    eta_c = critical_eta(p0)
    if params["eta"] is not None:
        etas = np.array([params["eta"]])
    else:
        eta_max = params["eta_max"] if params["eta_max"] is not None else 2.0 * eta_c
        etas = np.linspace(params["eta_min"], eta_max, params["n_points"])
    rng = np.random.default_rng(seed)
    rows = []
    for eta in etas:
        p = PotentialParams(params["mu_sq"], params["lam"], float(eta), params["dim"])
        w0 = params["w0_scale"] * rng.standard_normal(params["dim"])
        res = numeric_minimize(p, w0, max_iters=params["max_iters"], gtol=params["gtol"])
        analytic = minimizer_norm(p)
        numeric = float(np.linalg.norm(res.w_min))
        rows.append(
            {
                "eta": float(eta),
                "m_sq": mass_squared(p),
                "analytic_norm": analytic,
                "numeric_norm": numeric,
                "abs_err": abs(numeric - analytic),
                "converged": res.converged,
                "iters": res.iters,
            }
        )
    max_err = max(r["abs_err"] for r in rows)
    summary = {"max_abs_err": max_err, "eta_c": eta_c}
    if len(rows) == 1:
        summary.update(
            {
                "analytic_norm": rows[0]["analytic_norm"],
                "numeric_norm": rows[0]["numeric_norm"],
            }
        )
    return rows, summary


def _run_goldstone_spectrum(params, seed, out_dir):
    rng = np.random.default_rng(seed)
    rows = []
    for dim in params["dims"]:
        p = PotentialParams(params["mu_sq"], params["lam"], params["eta"], int(dim))
        m_sq = mass_squared(p)
        res = numeric_minimize(p, 0.01 * rng.standard_normal(int(dim)), gtol=1e-10)
        eigs = np.sort(np.abs(np.linalg.eigvalsh(potential_hessian(p, res.w_min))))
        sigma_expected = 2.0 * abs(m_sq)
        tol = params["zero_tol"] * sigma_expected
        n_zero = int(np.sum(eigs < tol))
        rows.append(
            {
                "dim": int(dim),
                "m_sq": m_sq,
                "vev_analytic": minimizer_norm(p),
                "vev_numeric": float(np.linalg.norm(res.w_min)),
                "n_zero_modes": n_zero,
                "expected_zero_modes": int(dim) - 1,
                "max_flat_abs_eig": float(eigs[: int(dim) - 1].max()) if dim > 1 else 0.0,
                "radial_eig": float(eigs[-1]),
                "radial_expected": sigma_expected,
                "radial_abs_err": abs(float(eigs[-1]) - sigma_expected),
            }
        )
    ok = all(r["n_zero_modes"] == r["expected_zero_modes"] for r in rows)
    return rows, {
        "all_counts_match": ok,
        "max_radial_abs_err": max(r["radial_abs_err"] for r in rows),
    }


def _run_kg_dispersion(params, seed, out_dir):
    n = params["n_space"]
    a_space = params["a_space"]
    if params["domain_length"] is not None:
        a_space = params["domain_length"] / n
    a_time = params["a_time"]
    lat = Lattice(n, params["n_record"], 1, a_space, a_time)
    m_sq = params["m_sq"]
    p = PotentialParams.from_mass_sq(m_sq, max(params["lam"], 1e-12), 1)

    # modes evolve independently at lam = 0, so one superposed run
    # serves every requested mode
    x = np.arange(n)
    w0 = np.zeros(n)
    for q in params["modes"]:
        w0 += params["amplitude"] * np.cos(2.0 * np.pi * q * x / n)
    traj = kg_trajectory(lat, p, w0)
    spectrum = spectrum_from_trajectory(traj, m_sq, params["modes"])
    write_spectrum_csv(spectrum, Path(out_dir) / "spectrum.csv")

    rows = []
    for mode in spectrum.modes:
        q = mode.k_index
        k_cont = 2.0 * np.pi * q / (n * a_space)
        omega_lat = float(np.sqrt(m_sq + mode.k_lat**2))
        omega_cont = float(np.sqrt(m_sq + k_cont**2))
        rows.append(
            {
                "mode": q,
                "k_lat": mode.k_lat,
                "k_continuum": k_cont,
                "omega_fitted": mode.fitted_omega,
                "omega_lat": omega_lat,
                "omega_continuum": omega_cont,
                "rel_err_lat": abs(mode.fitted_omega - omega_lat) / omega_lat,
                "rel_err_continuum": abs(mode.fitted_omega - omega_cont) / omega_cont,
                "fit_residual": mode.fit_residual,
            }
        )
    return rows, {
        "max_rel_err_lat": max(r["rel_err_lat"] for r in rows),
        "max_rel_err_continuum": max(r["rel_err_continuum"] for r in rows),
    }


def _run_langevin_propagator(params, seed, out_dir):
    lat = Lattice(params["n_space"], params["n_time"], 1, params["a_space"], params["a_time"])
    m_sq = params["m_sq"]
    p = PotentialParams.from_mass_sq(m_sq, max(params["lam"], 1e-12), 1)
    samples = langevin_sample(
        lat,
        p,
        step=params["step"],
        burn_in=params["burn_in"],
        n_samples=params["n_samples"],
        thin=params["thin"],
        seed=seed,
    )

    rows = []
    ks, var = mode_variances(samples)
    for idx in lowest_spacetime_modes(lat, params["n_variance_modes"]):
        predicted = 1.0 / (float(ks[idx]) + m_sq)
        measured = float(var[idx])
        rows.append(
            {
                "record": "mode_variance",
                "q_time": idx[0],
                "q_space": idx[1],
                "k_lat_sq": float(ks[idx]),
                "predicted": predicted,
                "measured": measured,
                "rel_err": abs(measured - predicted) / predicted,
            }
        )

    spectrum = spectrum_from_euclidean(
        samples, m_sq, params["decay_modes"], max_lag=params["decay_max_lag"]
    )
    write_spectrum_csv(spectrum, Path(out_dir) / "spectrum.csv")
    for mode in spectrum.modes:
        omega0 = float(np.sqrt(m_sq + mode.k_lat**2))
        rows.append(
            {
                "record": "decay_rate",
                "q_space": mode.k_index,
                "k_lat_sq": mode.k_lat**2,
                "predicted": omega0,
                "measured": mode.fitted_omega,
                "rel_err": abs(mode.fitted_omega - omega0) / omega0,
            }
        )
    var_errs = [r["rel_err"] for r in rows if r["record"] == "mode_variance"]
    decay_errs = [r["rel_err"] for r in rows if r["record"] == "decay_rate"]
    return rows, {
        "max_variance_rel_err": max(var_errs),
        "max_decay_rel_err": max(decay_errs),
    }


def _broken_phase_ensemble(lat, decomp, m_sigma_sq, m_pi_sq, params, seed):
    """Quadratic-order ensemble around the broken vacuum: independent free
    radial/tangential fields embedded along the decomposition directions."""
    p_sigma = PotentialParams.from_mass_sq(m_sigma_sq, 1e-12, 1)
    p_pi = PotentialParams.from_mass_sq(m_pi_sq, 1e-12, 1)
    common = dict(burn_in=params["burn_in"], n_samples=params["n_samples"], thin=params["thin"])
    sig = langevin_sample(lat, p_sigma, step=params["step_sigma"], seed=seed, **common)
    pi = langevin_sample(lat, p_pi, step=params["step_pi"], seed=seed + 1, **common)
    out = []
    for s, g in zip(sig, pi):
        vals = (decomp.vev + s.values)[..., None] * decomp.sigma_mode
        vals += g.values[..., None] * decomp.pi_modes[0]
        out.append(FieldConfig(lat, vals))
    return out


def _run_goldstone_ratio(params, seed, out_dir):
    lat = Lattice(params["n_space"], params["n_time"], 1, 1.0, 1.0)
    rng = np.random.default_rng(seed)
    eta = ""
    if params["mode"] == "thermal":
        p2 = PotentialParams(params["mu_sq"], params["lam"], params["eta"], 2)
        if mass_squared(p2) >= 0:
            raise ConfigError(
                f"eta={params['eta']:g} is not below the critical learning rate",
                key_path="params.eta",
            )
        direction = rng.standard_normal(2)
        direction /= np.linalg.norm(direction)
        decomp = decompose(p2, minimizer_norm(p2) * direction)
        m_sigma_sq, m_pi_sq = decomp.mass_sigma_sq, decomp.mass_pi_sq
        eta = params["eta"]
        if m_pi_sq == 0.0:
            m_pi_sq = params["pi_mass_floor"]
    else:
        m_sigma_sq, m_pi_sq = params["m_sigma_sq"], params["m_pi_sq"]
        direction = rng.standard_normal(2)
        direction /= np.linalg.norm(direction)
        sigma_dir = direction
        pi_dir = np.array([-direction[1], direction[0]])
        decomp = SSBDecomposition(
            vev=1.0,
            sigma_mode=sigma_dir,
            pi_modes=pi_dir[None, :],
            mass_sigma_sq=m_sigma_sq,
            mass_pi_sq=m_pi_sq,
        )

    samples = _broken_phase_ensemble(lat, decomp, m_sigma_sq, m_pi_sq, params, seed + 10)
    k_index = params["k_index"]
    ratio = goldstone_ratio(samples, decomp, k_index=k_index)

    # jackknife over sample blocks
    n_blocks = min(params["jackknife_blocks"], len(samples))
    block = len(samples) // n_blocks
    jack = []
    for b in range(n_blocks):
        subset = samples[: b * block] + samples[(b + 1) * block :]
        jack.append(goldstone_ratio(subset, decomp, k_index=k_index))
    jack = np.asarray(jack)
    jack_std = float(np.sqrt((n_blocks - 1) * np.mean((jack - jack.mean()) ** 2)))

    k_sq = float(k_lat(k_index, lat.n_space, lat.a_space) ** 2)
    analytic = (k_sq + m_sigma_sq) / (k_sq + m_pi_sq)
    row = {
        "eta": eta,
        "m_sigma_sq": m_sigma_sq,
        "m_pi_sq": m_pi_sq,
        "k_lat_sq": k_sq,
        "ratio_measured": ratio,
        "ratio_analytic": analytic,
        "rel_err": abs(ratio - analytic) / analytic,
        "jackknife_std": jack_std,
    }
    return [row], {
        "ratio_measured": ratio,
        "ratio_analytic": analytic,
        "rel_err": row["rel_err"],
        "jackknife_std": jack_std,
    }


def _run_symmetry_audit(params, seed, out_dir):
    rng = np.random.default_rng(seed)
    d = params["dim"]
    n_nets = params["n_nets"]
    rows = []

    devs = []
    for i in range(n_nets):
        net = Network.initialize(NetworkSpec((d, d, d), "relu", False, seed=seed + i))
        q = random_permutation(d, rng)
        devs.append(covariance_check(net, q, rng.standard_normal(d)).deviation)
    rows.append(
        {"check": "permutation_covariance_max_dev", "value": max(devs),
         "threshold": 1e-10, "passed": max(devs) < 1e-10}
    )

    counter = commutes_with(
        rotation_2d(np.pi / 4), Nonlinearity("relu"), trials=params["trials"], tol=1e-9,
        seed=seed,
    )
    rows.append(
        {"check": "rotation_relu_counterexample_found", "value": float(counter is not None),
         "threshold": 1.0, "passed": counter is not None}
    )

    worst = 0.0
    for _ in range(10):
        layers = [random_affine(d, rng, scale=0.7) for _ in range(params["collapse_layers"])]
        collapsed = affine_collapse(layers)
        for _ in range(10):
            x = rng.standard_normal(d)
            y = x
            for q in layers:
                y = apply(q, y)
            worst = max(worst, float(np.max(np.abs(apply(collapsed, x) - y))))
    rows.append(
        {"check": "affine_collapse_max_dev", "value": worst,
         "threshold": 1e-9, "passed": worst < 1e-9}
    )

    adj = []
    for i in range(n_nets):
        net = Network.initialize(NetworkSpec((d, d, d), "relu", False, seed=seed + 5000 + i))
        adj.append(
            adjacent_invariant_check(net, random_permutation(d, rng), rng.standard_normal(d))
        )
    rows.append(
        {"check": "adjacent_invariant_max_dev", "value": max(adj),
         "threshold": 1e-10, "passed": max(adj) < 1e-10}
    )

    skips = []
    for i in range(n_nets):
        net = Network.initialize(NetworkSpec((d, d, d), "relu", False, seed=seed + 9000 + i))
        skips.append(
            skip_across_units_deviation(
                net, random_permutation(d, rng), random_permutation(d, rng),
                rng.standard_normal(d),
            )
        )
    med = float(np.median(skips))
    rows.append(
        {"check": "skip_two_units_median_dev", "value": med,
         "threshold": 0.1, "passed": med > 0.1}
    )

    return rows, {
        "all_passed": all(r["passed"] for r in rows),
        "skip_two_units_median_dev": med,
    }


def _memorization_dataset(params, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(params["n_samples"], params["input_dim"]))
    labels = rng.integers(0, params["n_classes"], params["n_samples"])
    return Dataset(X, labels)


def _memorization_net(params, seed):
    dims = (params["input_dim"], *params["widths"], params["n_classes"])
    return Network.initialize(NetworkSpec(dims, "relu", False, seed=seed + 1,
                                          init_scale=params["init_scale"]))


def _run_memorization(params, seed, out_dir):
    data = _memorization_dataset(params, seed)
    net = _memorization_net(params, seed)
    trace = train(
        net, data, "cross_entropy", eta=params["eta"], steps=params["steps"],
        batch=params["batch"], seed=seed + 2, spectra=params["spectra"],
    )
    write_trace_csv(trace, Path(out_dir) / "trace.csv")
    if any(c.spectrum is not None for c in trace.checkpoints):
        write_spectra_json(trace, Path(out_dir) / "spectra.json")

    errors = [r.train_error for r in trace.records]
    first_zero = next((r.step for r in trace.records if r.train_error == 0.0), None)
    stride = max(1, len(trace.records) // 50)
    rows = [
        {
            "step": r.step,
            "loss": r.loss,
            "train_error": r.train_error,
            "grad_var_samples": float(
                np.dot(r.grad_var_samples, trace.layer_param_counts)
                / sum(trace.layer_param_counts)
            ),
        }
        for r in trace.records[::stride]
    ]
    return rows, {
        "final_train_error": errors[-1],
        "first_zero_error_step": -1 if first_zero is None else first_zero,
        "diverged": trace.diverged,
    }


def _run_gradient_variance(params, seed, out_dir):
    data = _memorization_dataset(params, seed)
    net = _memorization_net(params, seed)
    trace = train(
        net, data, "cross_entropy", eta=params["eta"], steps=params["steps"],
        batch=params["batch"], seed=seed + 2, spectra=False,
    )
    write_trace_csv(trace, Path(out_dir) / "trace.csv")
    prof = gradient_variance_profile(trace)
    rows = [
        {"step": int(s), "grad_var_samples": float(v), "ratio": float(r)}
        for s, v, r in zip(prof.steps, prof.grad_var_samples, prof.ratio)
    ]
    return rows, {
        "max_ratio": float(np.max(prof.ratio)),
        "final_ratio": float(prof.ratio[-1]),
    }


def _run_shattered(params, seed, out_dir):
    width, depth = params["width"], params["depth"]
    dims = (width,) * (depth + 1)
    x = np.ones(width)
    rows = []
    for i in range(params["n_seeds"]):
        net_seed = seed + i
        plain = Network.initialize(NetworkSpec(dims, "relu", False, seed=net_seed))
        resid = Network.initialize(NetworkSpec(dims, "relu", True, seed=net_seed))
        w_plain = shattered_gradient_profile(plain, x, n_points=params["n_path"]).whiteness
        w_resid = shattered_gradient_profile(resid, x, n_points=params["n_path"]).whiteness
        rows.append(
            {
                "seed": net_seed,
                "whiteness_plain": w_plain,
                "whiteness_residual": w_resid,
                "plain_gt_residual": w_plain > w_resid,
            }
        )
    frac = float(np.mean([r["plain_gt_residual"] for r in rows]))
    return rows, {
        "frac_plain_gt_residual": frac,
        "median_plain": float(np.median([r["whiteness_plain"] for r in rows])),
        "median_residual": float(np.median([r["whiteness_residual"] for r in rows])),
    }


def _run_freeze_out(params, seed, out_dir):
    data = _memorization_dataset(params, seed)
    net = _memorization_net(params, seed)
    trace = train(
        net, data, "cross_entropy", eta=params["eta"], steps=params["steps"],
        batch=params["batch"], seed=seed + 2, spectra=False,
    )
    report = freeze_out_report(trace)
    rows = []
    pos = 0
    for layer, count in enumerate(trace.layer_param_counts):
        layer_drift = report.drift[pos : pos + count]
        in_layer = np.sum((report.frozen_set >= pos) & (report.frozen_set < pos + count))
        rows.append(
            {
                "layer": layer,
                "n_weights": count,
                "n_frozen": int(in_layer),
                "median_drift": float(np.median(layer_drift)),
                "max_drift": float(layer_drift.max()),
            }
        )
        pos += count
    return rows, {
        "frozen_total": int(report.frozen_set.size),
        "frozen_fraction": float(report.frozen_set.size / len(report.drift)),
        "final_train_error": trace.records[-1].train_error,
        "drift_threshold": report.threshold,
    }


# ------------------------------------------------------------- registry


def _lattice_schema(n_space=64, n_time=64, a_time=0.5):
    return {
        "n_space": Param(int, n_space, "sites per spatial axis"),
        "n_time": Param(int, n_time, "time slices"),
        "a_space": Param(float, 1.0, "spatial lattice spacing"),
        "a_time": Param(float, a_time, "time spacing"),
    }


def _training_schema():
    return {
        "n_samples": Param(int, 64, "dataset size"),
        "input_dim": Param(int, 16, "feature dimension"),
        "n_classes": Param(int, 2, "label count"),
        "widths": Param(list, [64, 64], "hidden layer widths"),
        "eta": Param(float, 0.1, "learning rate"),
        "steps": Param(int, 10_000, "SGD steps"),
        "batch": Param(int, 64, "minibatch size"),
        "init_scale": Param(float, 1.0, "init std multiplier"),
    }


EXPERIMENTS: dict = {}


def _register(name, description, validates, schema, stochastic, runner):
    EXPERIMENTS[name] = ExperimentDef(name, description, validates, schema, stochastic, runner)


_register(
    "bifurcation_sweep",
    "numeric minimizer norm across the critical learning rate",
    "minimum bifurcation at eta_c: |w*| = sqrt(max(0, mu^2/lam - eta^2/4))",
    {
        "mu_sq": Param(float, 1.0, "quadratic coupling"),
        "lam": Param(float, 4.0, "quartic coupling"),
        "dim": Param(int, 5, "field components"),
        "eta": Param((float, type(None)), None, "single point instead of a sweep"),
        "eta_min": Param(float, 0.0, "sweep start"),
        "eta_max": Param((float, type(None)), None, "sweep end (default 2*eta_c)"),
        "n_points": Param(int, 50, "sweep points"),
        "w0_scale": Param(float, 0.01, "random start scale"),
        "max_iters": Param(int, 100_000, "descent iteration cap"),
        "gtol": Param(float, 1e-10, "gradient sup-norm tolerance"),
    },
    True,
    _run_bifurcation,
)

_register(
    "goldstone_spectrum",
    "flat directions of the Hessian at the broken-phase minimum",
    "D-1 zero eigenvalues and one radial eigenvalue 2|m^2| after breaking O(D)",
    {
        "mu_sq": Param(float, 1.0, "quadratic coupling"),
        "lam": Param(float, 4.0, "quartic coupling"),
        "eta": Param(float, 0.0, "learning rate"),
        "dims": Param(list, [2, 5, 10], "field dimensions to check"),
        "zero_tol": Param(float, 1e-8, "zero-eigenvalue threshold, relative"),
    },
    True,
    _run_goldstone_spectrum,
)

_register(
    "kg_dispersion",
    "real-time oscillation frequencies of lattice modes",
    "wave-equation dispersion omega = sqrt(m^2 + k_lat^2), massless limit omega = |k_lat|",
    {
        "n_space": Param(int, 64, "sites per spatial axis"),
        "a_space": Param(float, 1.0, "spatial spacing"),
        "domain_length": Param((float, type(None)), None, "fix L and derive a_space = L/n"),
        "a_time": Param(float, 0.2, "leapfrog step"),
        "m_sq": Param(float, 1.0, "mass squared"),
        "lam": Param(float, 0.0, "quartic coupling (0: modes decouple)"),
        "modes": Param(list, [0, 1, 2, 3, 4, 5], "mode indices to fit"),
        "n_record": Param(int, 4096, "recorded slices"),
        "amplitude": Param(float, 1.0, "initial mode amplitude"),
    },
    False,
    _run_kg_dispersion,
)

_register(
    "langevin_propagator",
    "free-field sampling: mode variances and Euclidean decay rates",
    "two-point function 1/(k_lat^2 + m^2); decay rate omega_0 under Wick rotation",
    {
        **_lattice_schema(),
        "m_sq": Param(float, 1.0, "mass squared"),
        "lam": Param(float, 0.0, "quartic coupling"),
        "step": Param(float, 0.01, "Langevin step"),
        "burn_in": Param(int, 5000, "updates before sampling"),
        "n_samples": Param(int, 2000, "stored configurations"),
        "thin": Param(int, 50, "updates between samples"),
        "n_variance_modes": Param(int, 5, "lowest modes checked for variance"),
        "decay_modes": Param(list, [1, 2, 3, 4, 5], "spatial modes for decay fits"),
        "decay_max_lag": Param(int, 6, "decay fit window"),
    },
    True,
    _run_langevin_propagator,
)

_register(
    "goldstone_ratio_sweep",
    "tangential/radial correlator power ratio in the broken phase",
    "ratio (k^2+m_sigma^2)/(k^2+m_pi^2), diverging as the tangential mass vanishes",
    {
        "mode": Param(str, "fixed_masses", "mass source", choices=("fixed_masses", "thermal")),
        "m_sigma_sq": Param(float, 1.0, "radial mass squared (fixed_masses)"),
        "m_pi_sq": Param(float, 0.01, "tangential mass squared (fixed_masses)"),
        "mu_sq": Param(float, 1.0, "quadratic coupling (thermal)"),
        "lam": Param(float, 1.0, "quartic coupling (thermal)"),
        "eta": Param(float, 0.5, "learning rate (thermal)"),
        "pi_mass_floor": Param(float, 1e-4, "tangential mass floor at eta = 0"),
        "n_space": Param(int, 32, "sites per spatial axis"),
        "n_time": Param(int, 32, "time slices"),
        "step_sigma": Param(float, 0.02, "Langevin step, radial chain"),
        "step_pi": Param(float, 0.05, "Langevin step, tangential chain"),
        "burn_in": Param(int, 4000, "updates before sampling"),
        "n_samples": Param(int, 2000, "stored configurations per chain"),
        "thin": Param(int, 100, "updates between samples"),
        "k_index": Param(int, 1, "spatial mode for the power ratio"),
        "jackknife_blocks": Param(int, 20, "blocks for the error estimate"),
    },
    True,
    _run_goldstone_ratio,
)

_register(
    "symmetry_audit",
    "layer symmetry theorems on random networks",
    "permutation covariance, remnant-symmetry failure for rotations, affine collapse, "
    "adjacent-layer invariant, skip-across-units violation",
    {
        "dim": Param(int, 6, "feature dimension"),
        "n_nets": Param(int, 100, "random nets per check"),
        "trials": Param(int, 100, "counterexample search budget"),
        "collapse_layers": Param(int, 10, "affine stack depth"),
    },
    True,
    _run_symmetry_audit,
)

_register(
    "memorization",
    "overparameterized net fits random labels to zero training error",
    "zero-eigenvalue (flat) directions make random-label fitting possible at desk scale",
    {**_training_schema(), "spectra": Param(bool, False, "attach Hessian spectra when affordable")},
    True,
    _run_memorization,
)

_register(
    "gradient_variance",
    "across-sample gradient variance over training",
    "late-training growth of gradient variance (measured, not asserted)",
    _training_schema(),
    True,
    _run_gradient_variance,
)

_register(
    "shattered",
    "input-gradient whiteness: plain vs residual nets",
    "gradient decorrelation with depth, reduced by residual connections",
    {
        "depth": Param(int, 24, "layers"),
        "width": Param(int, 32, "layer width"),
        "n_path": Param(int, 256, "points on the input path"),
        "n_seeds": Param(int, 100, "paired random nets"),
    },
    True,
    _run_shattered,
)

_register(
    "freeze_out",
    "weights that stop moving late in training",
    "a static weight subset after convergence (drift thresholds over checkpoints)",
    {**_training_schema()},
    True,
    _run_freeze_out,
)


# ------------------------------------------------------------ execution


def resolve_out_dir(config: ExperimentConfig, override=None) -> Path:
    if override is not None:
        return Path(override)
    if config.out_dir is not None:
        return config.out_dir
    env = os.environ.get(OUT_DIR_ENV)
    base = Path(env) if env else Path("results")
    return base / config.experiment


def run_experiment(config: ExperimentConfig, out_dir_override=None) -> dict:
    """Validate, run, and write results.csv + meta.json. Returns the summary."""
    if config.experiment not in EXPERIMENTS:
        raise ConfigError(
            f"unknown experiment {config.experiment!r}", key_path="experiment"
        )
    exp = EXPERIMENTS[config.experiment]
    params = validate_params(exp.name, config.params, exp.schema)
    if exp.stochastic and config.seed is None:
        raise ConfigError(
            f"experiment {exp.name!r} is stochastic: 'seed' is required", key_path="seed"
        )
    seed = 0 if config.seed is None else config.seed

    out_dir = resolve_out_dir(config, out_dir_override)
    out_dir.mkdir(parents=True, exist_ok=True)

    start = time.time()
    rows, summary = exp.runner(params, seed, out_dir)
    wall = time.time() - start

    write_rows_csv(rows, out_dir / "results.csv")
    meta = {
        "experiment": exp.name,
        "seed": config.seed,
        "params": params,
        "summary": summary,
        "out_dir": str(out_dir),
        "versions": {
            "ssblab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "wall_time_s": wall,
    }
    with open(out_dir / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
    return summary


def _axis_key(axis: str, schema: dict) -> str:
    key = axis.removeprefix("params.")
    if key not in schema:
        raise ConfigError(f"sweep axis {axis!r} not in schema", key_path=axis)
    return key


def _sweep_point(args):
    (config, out_dir) = args
    try:
        summary = run_experiment(config, out_dir_override=out_dir)
        return ("ok", summary)
    except Exception as exc:  # noqa: BLE001 - the summary row records it
        return ("failed", {"error": f"{type(exc).__name__}: {exc}"})


def run_sweep(
    base: ExperimentConfig,
    axis: str,
    values: list,
    out_dir_override=None,
    workers: int = 1,
) -> tuple:
    """One isolated run per axis value, plus a one-row-per-value summary CSV.

    Child seeds derive as base seed + index; each point computes in its
    own subdirectory. Returns (summary rows, any-failure flag).
    """
    if base.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {base.experiment!r}", key_path="experiment")
    exp = EXPERIMENTS[base.experiment]
    key = _axis_key(axis, exp.schema)
    if not values:
        raise ConfigError("sweep needs a nonempty list of values", key_path=axis)

    sweep_dir = resolve_out_dir(base, out_dir_override)
    sweep_dir.mkdir(parents=True, exist_ok=True)

    jobs = []
    for i, value in enumerate(values):
        params = dict(base.params)
        params[key] = value
        child = ExperimentConfig(
            experiment=base.experiment,
            params=params,
            seed=None if base.seed is None else base.seed + i,
            out_dir=None,
        )
        jobs.append((child, sweep_dir / f"point_{i:03d}"))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(job) for job in jobs]

    rows = []
    any_failed = False
    for i, (value, (status, summary)) in enumerate(zip(values, results)):
        any_failed |= status != "ok"
        row = {"index": i, key: value, "status": status}
        row.update(summary)
        rows.append(row)
    write_rows_csv(rows, sweep_dir / "summary.csv")
    return rows, any_failed


def list_experiments() -> list:
    """Stable-ordered experiment table: name, description, what it validates."""
    return [
        {"name": exp.name, "description": exp.description, "validates": exp.validates}
        for exp in EXPERIMENTS.values()
    ]
