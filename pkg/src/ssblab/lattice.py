"""Scalar (or O(n)-vector) field on a rectangular sample-space x layer lattice.

Axis 0 of a configuration indexes layer slices (the "time" axis); the
remaining axes are periodic sample-space directions. Vector-valued
sites carry a trailing component axis. Two dynamics act on the same
data:

* Euclidean: the all-plus action S drives Euler-Maruyama (Langevin)
  sampling of exp(-S), fully periodic in every axis.
* Real time: leapfrog integration of the nonlinear wave equation
  w_tt = lap(w) - m^2 w - lambda |w|^2 w, where every layer slice is an
  independent spatial field and the integrator time step is the lattice
  layer spacing.

The two pictures are related by Wick rotation: the oscillation
frequency of a real-time mode and the Euclidean decay rate of the same
mode both equal omega_0 = sqrt(k_lat^2 + m^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .potential import PotentialParams, mass_squared


class CFLViolationError(ValueError):
    """Lattice spacings violate a_time <= a_space."""


class LangevinDivergenceError(RuntimeError):
    """Langevin chain kept overflowing after repeated step halvings."""


@dataclass(frozen=True)
class Lattice:
    """Rectangular lattice geometry and boundary conditions.

    time_boundary is 'periodic' for Euclidean sampling or 'open' for
    recorded real-time trajectories (fixed initial slice, free final
    slice). Sample-space axes are always periodic.
    """

    n_space: int = 64
    n_time: int = 64
    n_dims_space: int = 1
    a_space: float = 1.0
    a_time: float = 0.5
    time_boundary: str = "periodic"

    def __post_init__(self):
        if self.n_space < 4 or self.n_time < 4:
            raise ValueError("lattice needs at least 4 sites per axis")
        if not 1 <= self.n_dims_space <= 3:
            raise ValueError("n_dims_space must be 1, 2 or 3")
        if not (self.a_space > 0.0 and self.a_time > 0.0):
            raise ValueError("spacings must be positive")
        if self.a_time > self.a_space:
            raise CFLViolationError(
                f"a_time={self.a_time:g} > a_space={self.a_space:g}"
            )
        if self.time_boundary not in ("periodic", "open"):
            raise ValueError("time_boundary must be 'periodic' or 'open'")

    @property
    def shape(self) -> tuple:
        return (self.n_time,) + (self.n_space,) * self.n_dims_space

    @property
    def n_sites(self) -> int:
        return self.n_time * self.n_space**self.n_dims_space

    @property
    def cell_volume(self) -> float:
        return self.a_time * self.a_space**self.n_dims_space


@dataclass
class FieldConfig:
    """Field values (and, for real-time states, conjugate momenta).

    values has shape lattice.shape for a scalar field, or
    lattice.shape + (n_components,) for a vector-valued field.
    """

    lattice: Lattice
    values: np.ndarray
    momenta: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        base = self.lattice.shape
        if self.values.shape != base and not (
            self.values.ndim == len(base) + 1 and self.values.shape[:-1] == base
        ):
            raise ValueError(
                f"values shape {self.values.shape} incompatible with lattice {base}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        if self.momenta is not None:
            self.momenta = np.asarray(self.momenta, dtype=float)
            if self.momenta.shape != self.values.shape:
                raise ValueError("momenta must match values in shape")
            if not np.all(np.isfinite(self.momenta)):
                raise ValueError("momenta must be finite")

    @property
    def n_components(self) -> int:
        return 1 if self.values.ndim == len(self.lattice.shape) else self.values.shape[-1]

    @classmethod
    def zeros(cls, lattice: Lattice, n_components: int = 1, with_momenta: bool = False):
        shape = lattice.shape if n_components == 1 else lattice.shape + (n_components,)
        mom = np.zeros(shape) if with_momenta else None
        return cls(lattice, np.zeros(shape), mom)


def _comp_view(values: np.ndarray, lattice: Lattice) -> np.ndarray:
    """View with an explicit trailing component axis (no copy for scalars)."""
    if values.ndim == len(lattice.shape):
        return values[..., None]
    return values


def _check_params(f: FieldConfig, p: PotentialParams):
    if p.dim != f.n_components:
        raise ValueError(
            f"potential dim {p.dim} does not match field components {f.n_components}"
        )


def k_lat(q, n: int, a: float):
    """Lattice momentum (2/a) sin(pi q / n) of integer mode q."""
    return (2.0 / a) * np.abs(np.sin(np.pi * np.asarray(q, dtype=float) / n))


def spatial_k_lat_sq(lattice: Lattice) -> np.ndarray:
    """Squared lattice momentum on the spatial FFT grid."""
    axes = []
    for _ in range(lattice.n_dims_space):
        q = np.arange(lattice.n_space)
        axes.append(k_lat(q, lattice.n_space, lattice.a_space) ** 2)
    out = np.zeros((lattice.n_space,) * lattice.n_dims_space)
    for ax, ksq in enumerate(axes):
        shape = [1] * lattice.n_dims_space
        shape[ax] = lattice.n_space
        out = out + ksq.reshape(shape)
    return out


def spacetime_k_lat_sq(lattice: Lattice) -> np.ndarray:
    """Squared lattice momentum on the full (time x space) FFT grid."""
    qt = np.arange(lattice.n_time)
    kt_sq = k_lat(qt, lattice.n_time, lattice.a_time) ** 2
    shape = [lattice.n_time] + [1] * lattice.n_dims_space
    return kt_sq.reshape(shape) + spatial_k_lat_sq(lattice)[None, ...]


def euclidean_action(f: FieldConfig, p: PotentialParams) -> float:
    """Forward-difference discretization of the all-plus action.

    Sum over sites of cell_volume * [ 1/2 (d_t w)^2 + 1/2 (d_z w)^2
    + m^2/2 |w|^2 + lambda/4 |w|^4 ]. Spatial links wrap; time links
    wrap only for a periodic time boundary.
    """
    _check_params(f, p)
    if not np.all(np.isfinite(f.values)):
        raise ValueError("field values must be finite")
    lat = f.lattice
    w = _comp_view(f.values, lat)
    m_sq = mass_squared(p)
    return _euclidean_action_raw(w, lat, m_sq, p.lam)


def _euclidean_action_raw(w: np.ndarray, lat: Lattice, m_sq: float, lam: float) -> float:
    grad_sum = 0.0
    diff_t = (np.roll(w, -1, axis=0) - w) / lat.a_time
    if lat.time_boundary == "open":
        diff_t = diff_t[:-1]
    grad_sum += 0.5 * float(np.sum(diff_t**2))
    for ax in range(1, 1 + lat.n_dims_space):
        diff = (np.roll(w, -1, axis=ax) - w) / lat.a_space
        grad_sum += 0.5 * float(np.sum(diff**2))

    r2 = np.sum(w**2, axis=-1)
    pot_sum = float(np.sum(0.5 * m_sq * r2 + 0.25 * lam * r2**2))
    return lat.cell_volume * (grad_sum + pot_sum)


def action_gradient(f: FieldConfig, p: PotentialParams) -> np.ndarray:
    """Per-site derivative dS/dw, same shape as f.values."""
    _check_params(f, p)
    lat = f.lattice
    w = _comp_view(f.values, lat)
    grad = _action_gradient_raw(w, lat, mass_squared(p), p.lam)
    return grad.reshape(f.values.shape)


def _action_gradient_raw(w: np.ndarray, lat: Lattice, m_sq: float, lam: float) -> np.ndarray:
    r2 = np.sum(w**2, axis=-1, keepdims=True)
    grad = (m_sq + lam * r2) * w

    fwd = (np.roll(w, -1, axis=0) - w) / lat.a_time**2
    bwd = (w - np.roll(w, 1, axis=0)) / lat.a_time**2
    if lat.time_boundary == "open":
        fwd[-1] = 0.0
        bwd[0] = 0.0
    grad += bwd - fwd
    for ax in range(1, 1 + lat.n_dims_space):
        fwd = (np.roll(w, -1, axis=ax) - w) / lat.a_space**2
        bwd = (w - np.roll(w, 1, axis=ax)) / lat.a_space**2
        grad += bwd - fwd

    grad *= lat.cell_volume
    return grad


def _spatial_laplacian(w: np.ndarray, lat: Lattice) -> np.ndarray:
    lap = np.zeros_like(w)
    for ax in range(1, 1 + lat.n_dims_space):
        lap += (np.roll(w, -1, axis=ax) + np.roll(w, 1, axis=ax) - 2.0 * w) / lat.a_space**2
    return lap


def _force(w: np.ndarray, lat: Lattice, m_sq: float, lam: float) -> np.ndarray:
    r2 = np.sum(w**2, axis=-1, keepdims=True)
    return _spatial_laplacian(w, lat) - (m_sq + lam * r2) * w


def _leapfrog(w: np.ndarray, pi: np.ndarray, lat: Lattice, m_sq: float, lam: float,
              steps: int, h: float):
    """Kick-drift-kick in place on arrays of shape (batch, *spatial, comp)."""
    pi += 0.5 * h * _force(w, lat, m_sq, lam)
    for n in range(steps):
        w += h * pi
        force = _force(w, lat, m_sq, lam)
        pi += h * force if n < steps - 1 else 0.5 * h * force


def kg_evolve(f: FieldConfig, p: PotentialParams, steps: int) -> FieldConfig:
    """Leapfrog (kick-drift-kick) integration of the real-time field.

    Each layer slice evolves as an independent spatial field; the step
    size is the lattice layer spacing a_time. Exactly time reversible:
    negating momenta and evolving the same number of steps returns the
    initial state up to roundoff.
    """
    _check_params(f, p)
    if f.momenta is None:
        raise ValueError("real-time evolution needs initialized momenta")
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    lat = f.lattice
    w = _comp_view(f.values, lat).copy()
    pi = _comp_view(f.momenta, lat).copy()
    if steps > 0:
        _leapfrog(w, pi, lat, mass_squared(p), p.lam, steps, lat.a_time)
    return FieldConfig(lat, w.reshape(f.values.shape), pi.reshape(f.values.shape))


def kg_trajectory(
    lattice: Lattice,
    p: PotentialParams,
    initial_values: np.ndarray,
    initial_momenta: np.ndarray | None = None,
    record_every: int = 1,
) -> FieldConfig:
    """Record a real-time run as a trajectory configuration.

    Evolves a single spatial slice and stores one slice per lattice
    time index (slice 0 is the initial condition, consecutive slices
    record_every leapfrog steps apart). The result carries an open time
    boundary, no momenta, and a time spacing of record_every * a_time;
    its time axis is genuine evolution time.
    """
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    traj_lat = Lattice(
        lattice.n_space,
        lattice.n_time,
        lattice.n_dims_space,
        lattice.a_space,
        lattice.a_time * record_every,
        time_boundary="open",
    )
    w0 = np.asarray(initial_values, dtype=float)
    spatial = (lattice.n_space,) * lattice.n_dims_space
    if w0.shape != spatial and not (w0.ndim == len(spatial) + 1 and w0.shape[:-1] == spatial):
        raise ValueError(f"initial slice shape {w0.shape} incompatible with {spatial}")
    pi0 = np.zeros_like(w0) if initial_momenta is None else np.asarray(initial_momenta, float)

    scalar = w0.shape == spatial
    # work on a single-slice batch: shape (1, *spatial, comp)
    w = w0[None, ...].copy()
    pi = pi0[None, ...].copy()
    if scalar:
        w = w[..., None]
        pi = pi[..., None]
    m_sq = mass_squared(p)
    out = np.empty((lattice.n_time,) + w0.shape)
    out[0] = w0
    for i in range(1, lattice.n_time):
        _leapfrog(w, pi, lattice, m_sq, p.lam, record_every, lattice.a_time)
        out[i] = w[0, ..., 0] if scalar else w[0]
    return FieldConfig(traj_lat, out, None)


def total_energy(f: FieldConfig, p: PotentialParams) -> float:
    """Real-time energy: sum over sites of 1/2 pi^2 + 1/2 (d_z w)^2 + V(w),
    weighted by the spatial cell volume a_space^d."""
    _check_params(f, p)
    if f.momenta is None:
        raise ValueError("total_energy needs momenta")
    lat = f.lattice
    w = _comp_view(f.values, lat)
    pi = _comp_view(f.momenta, lat)
    m_sq = mass_squared(p)

    kin = 0.5 * float(np.sum(pi**2))
    grad = 0.0
    for ax in range(1, 1 + lat.n_dims_space):
        diff = (np.roll(w, -1, axis=ax) - w) / lat.a_space
        grad += 0.5 * float(np.sum(diff**2))
    r2 = np.sum(w**2, axis=-1)
    pot = float(np.sum(0.5 * m_sq * r2 + 0.25 * p.lam * r2**2))
    return lat.a_space**lat.n_dims_space * (kin + grad + pot)


def langevin_sample(
    lattice: Lattice,
    p: PotentialParams,
    step: float = 1e-3,
    burn_in: int = 10_000,
    n_samples: int = 100,
    thin: int = 10,
    seed: int = 0,
    max_halvings: int = 10,
) -> list[FieldConfig]:
    """Euler-Maruyama chain targeting exp(-S), thinned after burn-in.

    Update: w <- w - step * dS/dw + sqrt(2 step) * xi with unit-normal
    xi per site. When an update overflows (non-finite drift or
    step*|drift| beyond 1e6) the step is halved and the same noise
    reused, keeping the chain deterministic for a fixed seed; more than
    `max_halvings` halvings aborts with diagnostics.

    Parameters
    ----------
    lattice : Lattice
        Geometry; the time boundary should be periodic for sampling.
    p : PotentialParams
        Couplings; p.dim sets the number of field components per site.
    step, burn_in, n_samples, thin, seed
        Chain controls. The returned list holds n_samples configs
        spaced `thin` updates apart, starting after `burn_in` updates.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    if n_samples < 1 or thin < 1 or burn_in < 0:
        raise ValueError("invalid chain controls")
    rng = np.random.default_rng(seed)
    shape = lattice.shape if p.dim == 1 else lattice.shape + (p.dim,)
    w = np.zeros(shape)
    m_sq = mass_squared(p)

    halvings = 0
    samples: list[FieldConfig] = []
    total = burn_in + n_samples * thin
    for it in range(total):
        drift = -_action_gradient_raw(_comp_view(w, lattice), lattice, m_sq, p.lam).reshape(shape)
        xi = rng.standard_normal(shape)
        while True:
            ok = np.all(np.isfinite(drift)) and step * float(np.max(np.abs(drift))) <= 1e6
            if ok:
                w_new = w + step * drift + np.sqrt(2.0 * step) * xi
                ok = np.all(np.isfinite(w_new))
            if ok:
                break
            halvings += 1
            if halvings > max_halvings:
                raise LangevinDivergenceError(
                    f"chain diverged at update {it}: step={step:g}, "
                    f"max|drift|={np.max(np.abs(drift)) if np.all(np.isfinite(drift)) else np.inf:g}"
                )
            step *= 0.5
        w = w_new
        if it >= burn_in and (it - burn_in) % thin == thin - 1:
            samples.append(FieldConfig(lattice, w.copy()))
    return samples


def save_field(f: FieldConfig, path) -> None:
    """Write a scalar config: one ASCII header line
    'n_time n_space n_dims_space a_space a_time' then raw little-endian
    float64 values in C order. Momenta and vector fields are not stored."""
    if f.n_components != 1:
        raise ValueError("serialization supports scalar fields only")
    lat = f.lattice
    header = f"{lat.n_time} {lat.n_space} {lat.n_dims_space} {lat.a_space!r} {lat.a_time!r}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(f.values.astype("<f8").tobytes(order="C"))


def load_field(path, time_boundary: str = "periodic") -> FieldConfig:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        n_time, n_space, n_dims = int(header[0]), int(header[1]), int(header[2])
        a_space, a_time = float(header[3]), float(header[4])
        lat = Lattice(n_space, n_time, n_dims, a_space, a_time, time_boundary)
        data = np.frombuffer(fh.read(), dtype="<f8").astype(float)
    return FieldConfig(lat, data.reshape(lat.shape))
