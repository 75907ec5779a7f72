"""Analytic propagators and numerical correlator estimation.

The free two-point function at squared mass m^2 is 1/(omega^2 - k^2 - m^2)
in frequency space and (i/(2 omega_0)) exp(-i omega_0 t) in time, with
omega_0 = sqrt(k^2 + m^2). Real-time lattice runs reproduce the
oscillation at the lattice dispersion frequency; Euclidean ensembles
reproduce the Wick-rotated exponential decay at the same omega_0.
Lattice momenta (2/a) sin(k a / 2) stand in for continuum k throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .lattice import FieldConfig, Lattice, k_lat, spacetime_k_lat_sq
from .potential import SSBDecomposition

MIN_CORRELATOR_SAMPLES = 30
MIN_FIT_LENGTH = 16


class PropagatorPoleError(ValueError):
    """Evaluation exactly on the propagator pole."""


class GoldstoneDivergenceError(ValueError):
    """Amplitude diverges: omega_0 -> 0 as both k and the mass vanish."""


class FlatSeriesError(ValueError):
    """A constant series has no defined dominant frequency."""


@dataclass
class FrequencyFit:
    omega: float
    residual: float


@dataclass
class ModeFit:
    k_index: int
    k_lat: float
    amplitude_series: np.ndarray
    fitted_omega: float
    fit_residual: float

    @property
    def amplitude0(self) -> float:
        return float(np.abs(self.amplitude_series[0]))


@dataclass
class CorrelationSpectrum:
    """Per-mode fits next to the analytic prediction sqrt(k_lat^2 + m^2)."""

    modes: list
    mass_sq_used: float

    def __post_init__(self):
        ks = [m.k_lat for m in self.modes]
        if any(k < 0 for k in ks) or any(b < a for a, b in zip(ks, ks[1:])):
            raise ValueError("mode k values must be nonnegative and sorted")
        if any(m.fit_residual < 0 for m in self.modes):
            raise ValueError("fit residuals must be nonnegative")

    def predicted_omega(self, mode: ModeFit) -> float:
        return float(np.sqrt(mode.k_lat**2 + self.mass_sq_used))


def analytic_propagator_freq(omega: float, k: float, m_sq: float) -> float:
    """Frequency-space free propagator 1/(omega^2 - k^2 - m^2)."""
    den = omega * omega - k * k - m_sq
    scale = max(omega * omega, abs(k * k + m_sq), 1.0)
    if abs(den) <= 1e-12 * scale:
        pole = np.sqrt(max(k * k + m_sq, 0.0))
        raise PropagatorPoleError(f"on the pole at omega = {pole:g}")
    return 1.0 / den


def analytic_propagator_time(t: float, k: float, m_sq: float) -> complex:
    """Time-domain free propagator (i / (2 omega_0)) exp(-i omega_0 t)."""
    w0_sq = k * k + m_sq
    if w0_sq <= 0.0:
        raise GoldstoneDivergenceError(
            f"omega_0^2 = {w0_sq:g} <= 0: amplitude diverges (massless long-wavelength limit)"
        )
    w0 = np.sqrt(w0_sq)
    return (1j / (2.0 * w0)) * np.exp(-1j * w0 * t)


def _spatial_mode_series(config: FieldConfig, k_index) -> np.ndarray:
    """Complex amplitude of one spatial Fourier mode on every time slice."""
    lat = config.lattice
    if config.n_components != 1:
        raise ValueError("spatial mode series is defined for scalar fields")
    axes = tuple(range(1, 1 + lat.n_dims_space))
    f = np.fft.fftn(config.values, axes=axes)
    idx = (slice(None),) + ((k_index,) + (0,) * (lat.n_dims_space - 1)
                            if np.isscalar(k_index) else tuple(k_index))
    return f[idx]


def measure_correlator(samples: list, k_index: int) -> np.ndarray:
    """Ensemble- and translation-averaged mode correlator C(dt, k).

    Fourier-transforms each time slice in space, then averages
    conj(w(k,t)) w(k,t+dt) over time translations and over the sample
    list (in list order; the estimate is permutation invariant up to
    floating-point reduction order). Periodic time axes average
    circularly; open axes use all in-range pairs.
    """
    if len(samples) < MIN_CORRELATOR_SAMPLES:
        raise ValueError(
            f"need at least {MIN_CORRELATOR_SAMPLES} samples, got {len(samples)}"
        )
    lat = samples[0].lattice
    if not (0 <= k_index < lat.n_space):
        raise ValueError(f"k_index {k_index} outside lattice modes")
    n_t = lat.n_time
    acc = np.zeros(n_t, dtype=complex)
    if lat.time_boundary == "periodic":
        for s in samples:
            x = _spatial_mode_series(s, k_index)
            ft = np.fft.fft(x)
            acc += np.fft.ifft(np.abs(ft) ** 2) / n_t
        return acc / len(samples)
    counts = n_t - np.arange(n_t)
    for s in samples:
        x = _spatial_mode_series(s, k_index)
        pad = np.zeros(2 * n_t, dtype=complex)
        pad[:n_t] = x
        fp = np.fft.fft(pad)
        r = np.fft.ifft(np.conj(fp) * fp)[:n_t]
        acc += r / counts
    return acc / len(samples)


def fit_frequency(series, dt: float) -> FrequencyFit:
    """Dominant frequency of a (real or complex) series.

    Locates the DFT magnitude peak of the demeaned, Hann-windowed
    series, interpolates with a log-magnitude parabola on the
    neighboring bins, then refines by maximizing the windowed DTFT
    power inside the bracketing bins. The residual is one minus the
    fraction of (non-DC) power inside the peak's three-bin window and
    its mirror image. Resolution degrades for tones below about two
    DFT bins.
    """
    x = np.asarray(series, dtype=complex)
    if x.size < MIN_FIT_LENGTH:
        raise ValueError(f"series length {x.size} < {MIN_FIT_LENGTH}")
    if not np.all(np.isfinite(x)):
        raise ValueError("series must be finite")
    if np.all(x == x[0]):
        raise FlatSeriesError("constant series: no dominant frequency")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    n = x.size
    window = np.hanning(n)
    xw = (x - x.mean()) * window
    spec = np.fft.fft(xw)
    mag = np.abs(spec)
    k = 1 + int(np.argmax(mag[1:]))

    logm = np.log(mag + 1e-300)
    a, b, c = logm[(k - 1) % n], logm[k], logm[(k + 1) % n]
    denom = a - 2.0 * b + c
    kb = k + (0.5 * (a - c) / denom if denom != 0.0 else 0.0)

    tgrid = np.arange(n)

    def neg_power(q):
        phase = np.exp(-2j * np.pi * q * tgrid / n)
        return -abs(np.dot(xw, phase)) ** 2

    res = minimize_scalar(
        neg_power, bounds=(k - 1.0, k + 1.0), method="bounded",
        options={"xatol": 1e-10},
    )
    if np.isfinite(res.x) and neg_power(res.x) <= neg_power(kb):
        kb = float(res.x)
    if kb > n / 2:
        kb -= n
    omega = abs(2.0 * np.pi * kb / (n * dt))

    power = mag**2
    total = float(power[1:].sum())
    peak_bins = {(k + d) % n for d in (-1, 0, 1)} | {(-k + d) % n for d in (-1, 0, 1)}
    peak_bins.discard(0)
    peak = float(sum(power[b] for b in peak_bins))
    residual = max(0.0, 1.0 - peak / total) if total > 0 else 0.0
    return FrequencyFit(omega=omega, residual=residual)


def fit_decay_rate(series, dt: float, max_lag: int = 8) -> tuple[float, float]:
    """Exponential decay rate of a correlator by log-linear least squares.

    Fits log|C| over lags 0..max_lag (truncated at the first
    nonpositive value). Returns (rate, normalized rms residual).
    """
    c = np.asarray(series)
    c = np.real(c)
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    stop = min(max_lag + 1, c.size)
    pos = c[:stop] > 0
    if not pos.all():
        stop = int(np.argmin(pos))
    if stop < 3:
        raise ValueError("too few positive correlator values to fit a decay")
    t = np.arange(stop) * dt
    y = np.log(c[:stop])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    return -float(slope), float(np.sqrt(np.mean(resid**2)) / max(abs(y).max(), 1e-300))


def mode_variances(samples: list) -> tuple[np.ndarray, np.ndarray]:
    """Volume-normalized spacetime mode variances of a scalar ensemble.

    Returns (k_lat_sq, variance), both shaped like the lattice grid.
    For a free field the expected variance is 1/(k_lat^2 + m^2).
    """
    lat = samples[0].lattice
    arr = np.stack([s.values for s in samples])
    axes = tuple(range(1, 1 + len(lat.shape)))
    f = np.fft.fftn(arr, axes=axes)
    var = (np.abs(f) ** 2).mean(axis=0) * lat.cell_volume / lat.n_sites
    return spacetime_k_lat_sq(lat), var


def lowest_spacetime_modes(lattice: Lattice, count: int) -> list:
    """Canonical (q_t, q_x, ...) index tuples of the lowest-|k| modes.

    Conjugate partners q and N-q carry identical information for real
    fields; only representatives with q <= N/2 on every axis appear.
    """
    ks = spacetime_k_lat_sq(lattice)
    halves = tuple(n // 2 for n in lattice.shape)
    reps = [
        (float(ks[idx]), idx)
        for idx in np.ndindex(*lattice.shape)
        if all(q <= h for q, h in zip(idx, halves))
    ]
    reps.sort(key=lambda t: (t[0], t[1]))
    return [idx for _, idx in reps[:count]]


def goldstone_ratio(samples: list, decomp: SSBDecomposition, k_index: int = 1) -> float:
    """Tangential-to-radial correlator power at the lowest spatial mode.

    Projects vector-valued broken-phase samples onto the pi and sigma
    directions and compares the zero-temporal-frequency propagator
    power of the two at spatial mode k_index, matching the free-field
    prediction (k^2 + m_sigma^2)/(k^2 + m_pi^2). Grows without bound as
    the tangential mass vanishes.
    """
    if decomp.vev <= 0.0:
        raise ValueError("goldstone_ratio needs a broken-phase decomposition")
    lat = samples[0].lattice
    dim = decomp.sigma_mode.size
    if samples[0].n_components != dim:
        raise ValueError(
            f"samples have {samples[0].n_components} components, decomposition {dim}"
        )
    if not (1 <= k_index < lat.n_space):
        raise ValueError("k_index must be a nonzero lattice mode")

    axes = tuple(range(1 + lat.n_dims_space))  # time plus space
    idx = (0,) + (k_index,) + (0,) * (lat.n_dims_space - 1)
    p_sigma = 0.0
    p_pi = 0.0
    for s in samples:
        sigma = s.values @ decomp.sigma_mode
        p_sigma += abs(np.fft.fftn(sigma, axes=axes)[idx]) ** 2
        for pi_dir in decomp.pi_modes:
            pi = s.values @ pi_dir
            p_pi += abs(np.fft.fftn(pi, axes=axes)[idx]) ** 2
    p_sigma /= len(samples)
    p_pi /= len(samples) * max(1, decomp.pi_modes.shape[0])
    if p_sigma == 0.0:
        raise ValueError("zero radial power: degenerate ensemble")
    return p_pi / p_sigma


def spectrum_from_trajectory(traj: FieldConfig, m_sq: float, k_indices) -> CorrelationSpectrum:
    """Oscillation-frequency spectrum of a recorded real-time run."""
    lat = traj.lattice
    modes = []
    for q in sorted(k_indices):
        series = _spatial_mode_series(traj, q)
        fitted = fit_frequency(series, lat.a_time)
        modes.append(
            ModeFit(
                k_index=int(q),
                k_lat=float(k_lat(q, lat.n_space, lat.a_space)),
                amplitude_series=series,
                fitted_omega=fitted.omega,
                fit_residual=fitted.residual,
            )
        )
    return CorrelationSpectrum(modes=modes, mass_sq_used=float(m_sq))


def spectrum_from_euclidean(
    samples: list, m_sq: float, k_indices, max_lag: int = 8
) -> CorrelationSpectrum:
    """Decay-rate spectrum of a Euclidean ensemble."""
    lat = samples[0].lattice
    modes = []
    for q in sorted(k_indices):
        series = measure_correlator(samples, q)
        rate, resid = fit_decay_rate(series, lat.a_time, max_lag=max_lag)
        modes.append(
            ModeFit(
                k_index=int(q),
                k_lat=float(k_lat(q, lat.n_space, lat.a_space)),
                amplitude_series=series,
                fitted_omega=rate,
                fit_residual=resid,
            )
        )
    return CorrelationSpectrum(modes=modes, mass_sq_used=float(m_sq))


def write_spectrum_csv(spectrum: CorrelationSpectrum, path) -> None:
    """Spectrum export: one row per mode, floats at 17 significant digits."""
    lines = ["k_index,k_lat,fitted_omega,predicted_omega,residual,amplitude0"]
    for m in spectrum.modes:
        vals = (m.k_lat, m.fitted_omega, spectrum.predicted_omega(m), m.fit_residual, m.amplitude0)
        lines.append(f"{m.k_index}," + ",".join(f"{v:.17g}" for v in vals))
    with open(path, "w", newline="") as fh:
        fh.write("\r\n".join(lines) + "\r\n")
