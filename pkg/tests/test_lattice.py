import numpy as np
import pytest

from ssblab.lattice import (
    CFLViolationError,
    FieldConfig,
    LangevinDivergenceError,
    Lattice,
    euclidean_action,
    action_gradient,
    k_lat,
    kg_evolve,
    kg_trajectory,
    langevin_sample,
    load_field,
    save_field,
    spacetime_k_lat_sq,
    total_energy,
)
from ssblab.potential import PotentialParams


def free_params(m_sq=1.0, dim=1):
    return PotentialParams.from_mass_sq(m_sq, lam=1e-12, dim=dim)


def quartic_params(m_sq, lam, dim=1):
    return PotentialParams.from_mass_sq(m_sq, lam=lam, dim=dim)


def naive_action(values, lat, m_sq, lam):
    """Independent pure-python reference for the forward-difference action."""
    shape = lat.shape
    total = 0.0
    spacings = (lat.a_time,) + (lat.a_space,) * lat.n_dims_space
    for idx in np.ndindex(*shape):
        w = values[idx]
        for ax, a in enumerate(spacings):
            nxt = list(idx)
            nxt[ax] += 1
            if nxt[ax] == shape[ax]:
                if ax == 0 and lat.time_boundary == "open":
                    continue
                nxt[ax] = 0
            total += 0.5 * ((values[tuple(nxt)] - w) / a) ** 2
        total += 0.5 * m_sq * w**2 + 0.25 * lam * w**4
    return lat.cell_volume * total


class TestLatticeValidation:
    def test_cfl_rejected(self):
        with pytest.raises(CFLViolationError):
            Lattice(8, 8, 1, a_space=0.5, a_time=1.0)

    def test_minimum_counts(self):
        with pytest.raises(ValueError):
            Lattice(2, 8)

    def test_shape(self):
        lat = Lattice(8, 4, 2, 1.0, 1.0)
        assert lat.shape == (4, 8, 8)
        assert lat.n_sites == 256


class TestEuclideanAction:
    def test_zero_field(self):
        lat = Lattice(8, 8)
        assert euclidean_action(FieldConfig.zeros(lat), free_params()) == 0.0

    def test_constant_field_free(self):
        # gradients vanish; action = m^2/2 c^2 * lattice volume
        lat = Lattice(8, 6, 1, 1.0, 0.5)
        c = 0.7
        f = FieldConfig(lat, np.full(lat.shape, c))
        p = free_params(m_sq=2.0)
        volume = lat.n_sites * lat.cell_volume
        expected = 0.5 * 2.0 * c**2 * volume
        assert euclidean_action(f, p) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("boundary", ["periodic", "open"])
    @pytest.mark.parametrize("ndims", [1, 2])
    def test_single_site_bump_vs_naive_loop(self, boundary, ndims):
        lat = Lattice(4, 4, ndims, 1.0, 0.5, time_boundary=boundary)
        values = np.zeros(lat.shape)
        values[(1,) * (1 + ndims)] = 1.3
        f = FieldConfig(lat, values)
        m_sq, lam = 0.8, 0.6
        p = quartic_params(m_sq, lam)
        assert euclidean_action(f, p) == pytest.approx(
            naive_action(values, lat, m_sq, lam), abs=1e-12
        )

    @pytest.mark.parametrize("boundary", ["periodic", "open"])
    def test_random_config_vs_naive_loop(self, boundary):
        rng = np.random.default_rng(0)
        lat = Lattice(5, 4, 1, 0.9, 0.7, time_boundary=boundary)
        f = FieldConfig(lat, rng.standard_normal(lat.shape))
        p = quartic_params(0.5, 1.2)
        assert euclidean_action(f, p) == pytest.approx(
            naive_action(f.values, lat, 0.5, 1.2), rel=1e-12
        )

    def test_spatial_translation_invariance(self):
        rng = np.random.default_rng(1)
        lat = Lattice(8, 8)
        p = quartic_params(1.0, 0.5)
        f = FieldConfig(lat, rng.standard_normal(lat.shape))
        s0 = euclidean_action(f, p)
        for shift in (1, 3, 5):
            g = FieldConfig(lat, np.roll(f.values, shift, axis=1))
            assert abs(euclidean_action(g, p) - s0) < 1e-10

    def test_locality(self):
        # changing one site changes the action by its local stencil only
        rng = np.random.default_rng(2)
        n = 6
        lat = Lattice(n, n, a_time=1.0)
        m_sq, lam = 1.0, 0.8
        p = quartic_params(m_sq, lam)
        v = rng.standard_normal(lat.shape)
        s0 = euclidean_action(FieldConfig(lat, v), p)
        v2 = v.copy()
        t, x = 3, 4
        v2[t, x] += 0.5

        def stencil(values):
            # the five action terms that touch site (t, x)
            w = values[t, x]
            out = 0.5 * ((values[(t + 1) % n, x] - w) / lat.a_time) ** 2
            out += 0.5 * ((w - values[(t - 1) % n, x]) / lat.a_time) ** 2
            out += 0.5 * ((values[t, (x + 1) % n] - w) / lat.a_space) ** 2
            out += 0.5 * ((w - values[t, (x - 1) % n]) / lat.a_space) ** 2
            out += 0.5 * m_sq * w**2 + 0.25 * lam * w**4
            return lat.cell_volume * out

        s1 = euclidean_action(FieldConfig(lat, v2), p)
        assert abs((s1 - s0) - (stencil(v2) - stencil(v))) < 1e-12

    def test_rejects_nonfinite(self):
        lat = Lattice(4, 4)
        with pytest.raises(ValueError):
            FieldConfig(lat, np.full(lat.shape, np.inf))


class TestActionGradient:
    def test_zero_field(self):
        lat = Lattice(8, 8)
        g = action_gradient(FieldConfig.zeros(lat), free_params())
        assert np.array_equal(g, np.zeros(lat.shape))

    @pytest.mark.parametrize("boundary", ["periodic", "open"])
    def test_finite_difference_oracle(self, boundary):
        rng = np.random.default_rng(3)
        lat = Lattice(4, 4, 1, 1.0, 0.5, time_boundary=boundary)
        p = quartic_params(0.7, 1.1)
        f = FieldConfig(lat, rng.standard_normal(lat.shape))
        g = action_gradient(f, p)
        h = 1e-6
        for idx in np.ndindex(*lat.shape):
            vp = f.values.copy()
            vp[idx] += h
            vm = f.values.copy()
            vm[idx] -= h
            fd = (
                euclidean_action(FieldConfig(lat, vp), p)
                - euclidean_action(FieldConfig(lat, vm), p)
            ) / (2 * h)
            assert abs(g[idx] - fd) / max(abs(fd), 1e-3) < 1e-6

    def test_plane_wave_eigenfunction(self):
        # cos(k x - w t) is an exact eigenfunction of the lattice operator
        lat = Lattice(16, 16, 1, 1.0, 1.0)
        m_sq = 0.9
        p = free_params(m_sq)
        qx, qt = 3, 2
        t = np.arange(16)[:, None]
        x = np.arange(16)[None, :]
        values = np.cos(2 * np.pi * (qx * x / 16.0 + qt * t / 16.0))
        f = FieldConfig(lat, values)
        g = action_gradient(f, p)
        ksq = k_lat(qx, 16, 1.0) ** 2 + k_lat(qt, 16, 1.0) ** 2
        expected = lat.cell_volume * (ksq + m_sq) * values
        assert np.max(np.abs(g - expected)) < 1e-10

    def test_vector_field_gradient(self):
        rng = np.random.default_rng(4)
        lat = Lattice(4, 4)
        p = quartic_params(0.5, 0.9, dim=2)
        vals = rng.standard_normal(lat.shape + (2,))
        f = FieldConfig(lat, vals)
        g = action_gradient(f, p)
        h = 1e-6
        for idx in [(0, 0, 0), (1, 2, 1), (3, 3, 0)]:
            vp = vals.copy()
            vp[idx] += h
            vm = vals.copy()
            vm[idx] -= h
            fd = (
                euclidean_action(FieldConfig(lat, vp), p)
                - euclidean_action(FieldConfig(lat, vm), p)
            ) / (2 * h)
            assert abs(g[idx] - fd) < 1e-5


class TestKgEvolve:
    def test_zero_stays_zero(self):
        lat = Lattice(8, 4, 1, 1.0, 0.5)
        f = FieldConfig.zeros(lat, with_momenta=True)
        out = kg_evolve(f, free_params(1.0), 100)
        assert np.array_equal(out.values, f.values)
        assert np.array_equal(out.momenta, f.momenta)

    def test_needs_momenta(self):
        lat = Lattice(8, 4)
        with pytest.raises(ValueError):
            kg_evolve(FieldConfig.zeros(lat), free_params(), 1)

    def test_time_reversibility(self):
        rng = np.random.default_rng(5)
        lat = Lattice(16, 4, 1, 1.0, 0.5)
        vals = rng.standard_normal(lat.shape)
        mom = rng.standard_normal(lat.shape)
        f = FieldConfig(lat, vals.copy(), mom.copy())
        p = quartic_params(1.0, 0.3)
        fwd = kg_evolve(f, p, 500)
        back = kg_evolve(FieldConfig(lat, fwd.values, -fwd.momenta), p, 500)
        assert np.max(np.abs(back.values - vals)) < 1e-8
        assert np.max(np.abs(back.momenta + mom)) < 1e-8

    def test_energy_drift_small_step(self):
        # free field, step 0.001: relative drift < 1e-6 over 1e4 steps
        lat = Lattice(16, 4, 1, 1.0, 0.001)
        x = np.arange(16)
        vals = np.broadcast_to(np.cos(2 * np.pi * x / 16), lat.shape).copy()
        f = FieldConfig(lat, vals, np.zeros(lat.shape))
        p = free_params(1.0)
        e0 = total_energy(f, p)
        state = f
        worst = 0.0
        for _ in range(10):
            state = kg_evolve(state, p, 1000)
            worst = max(worst, abs(total_energy(state, p) - e0) / abs(e0))
        assert worst < 1e-6

    def test_single_mode_dispersion(self):
        # frequency of one spatial mode matches the lattice dispersion
        from ssblab.correlation import fit_frequency

        n, q, m_sq, h = 32, 2, 1.0, 0.1
        lat = Lattice(n, 4, 1, 1.0, h)
        x = np.arange(n)
        vals = np.broadcast_to(np.cos(2 * np.pi * q * x / n), lat.shape).copy()
        state = FieldConfig(lat, vals, np.zeros(lat.shape))
        p = free_params(m_sq)
        series = np.empty(2048)
        for i in range(series.size):
            series[i] = np.fft.fft(state.values[0])[q].real
            state = kg_evolve(state, p, 1)
        fit = fit_frequency(series, h)
        omega_lat = np.sqrt(m_sq + k_lat(q, n, 1.0) ** 2)
        assert abs(fit.omega - omega_lat) / omega_lat < 0.01

    def test_trajectory_records_time_axis(self):
        n = 16
        lat = Lattice(n, 32, 1, 1.0, 0.25)
        x = np.arange(n)
        w0 = np.cos(2 * np.pi * x / n)
        traj = kg_trajectory(lat, free_params(1.0), w0)
        assert traj.values.shape == (32, 16)
        assert traj.lattice.time_boundary == "open"
        assert np.array_equal(traj.values[0], w0)
        assert traj.momenta is None
        # slices actually evolve
        assert np.max(np.abs(traj.values[1] - w0)) > 1e-3


class TestTotalEnergy:
    def test_zero_field(self):
        lat = Lattice(8, 4)
        f = FieldConfig.zeros(lat, with_momenta=True)
        assert total_energy(f, free_params()) == 0.0

    def test_pure_momentum(self):
        lat = Lattice(8, 4, 1, 1.0, 0.5)
        c = 1.7
        f = FieldConfig(lat, np.zeros(lat.shape), np.full(lat.shape, c))
        # volume = site count x spatial cell volume
        expected = 0.5 * c**2 * lat.n_sites * lat.a_space
        assert total_energy(f, free_params()) == pytest.approx(expected, rel=1e-12)


class TestLangevin:
    def test_fixed_seed_bit_identical(self):
        lat = Lattice(8, 8, 1, 1.0, 1.0)
        p = free_params(1.0)
        kw = dict(step=0.02, burn_in=50, n_samples=5, thin=5, seed=123)
        s1 = langevin_sample(lat, p, **kw)
        s2 = langevin_sample(lat, p, **kw)
        for a, b in zip(s1, s2):
            assert np.array_equal(a.values, b.values)

    def test_free_field_mode_variances(self):
        # Gaussian free field: volume-normalized mode variance 1/(k^2+m^2),
        # checked within blocked 3-sigma error bars for the lowest modes
        from ssblab.correlation import lowest_spacetime_modes

        lat = Lattice(16, 16, 1, 1.0, 1.0)
        m_sq = 1.0
        p = free_params(m_sq)
        samples = langevin_sample(lat, p, step=0.02, burn_in=3000, n_samples=600, thin=25, seed=7)
        arr = np.stack([s.values for s in samples])
        f = np.abs(np.fft.fft2(arr)) ** 2 * lat.cell_volume / lat.n_sites
        ks = spacetime_k_lat_sq(lat)
        for idx in lowest_spacetime_modes(lat, 5):
            per_sample = f[(slice(None),) + idx]
            blocks = per_sample[: 20 * (len(per_sample) // 20)].reshape(20, -1).mean(axis=1)
            mean = float(per_sample.mean())
            err = float(blocks.std(ddof=1) / np.sqrt(len(blocks)))
            pred = 1.0 / (ks[idx] + m_sq)
            assert abs(mean - pred) < 3 * err

    def test_large_mass_shrinks_variance(self):
        # discretization bias on the stiff modes scales with step * (k^2+m^2),
        # so the step shrinks as the mass grows
        lat = Lattice(8, 8, 1, 1.0, 1.0)
        out = {}
        for m_sq in (4.0, 25.0):
            samples = langevin_sample(
                lat, free_params(m_sq), step=0.05 / m_sq, burn_in=2000,
                n_samples=400, thin=20, seed=11,
            )
            var = float(np.mean([s.values**2 for s in samples]))
            ks = spacetime_k_lat_sq(lat)
            pred = float(np.mean(1.0 / (ks + m_sq)))
            assert abs(var - pred) / pred < 0.1
            out[m_sq] = var
        assert out[25.0] < out[4.0]

    def test_divergence_reported(self):
        lat = Lattice(4, 4, 1, 1.0, 1.0)
        p = quartic_params(-1.0, 1.0)
        with pytest.raises(LangevinDivergenceError):
            langevin_sample(lat, p, step=1e6, burn_in=10, n_samples=2, thin=1, seed=0)

    def test_vector_components(self):
        lat = Lattice(6, 6, 1, 1.0, 1.0)
        p = free_params(1.0, dim=2)
        samples = langevin_sample(lat, p, step=0.02, burn_in=100, n_samples=3, thin=2, seed=1)
        assert samples[0].values.shape == lat.shape + (2,)
        assert samples[0].n_components == 2


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(9)
        lat = Lattice(8, 4, 1, 0.75, 0.5)
        f = FieldConfig(lat, rng.standard_normal(lat.shape))
        path = tmp_path / "field.dat"
        save_field(f, path)
        g = load_field(path)
        assert np.array_equal(g.values, f.values)
        assert g.lattice == lat

    def test_vector_rejected(self, tmp_path):
        lat = Lattice(4, 4)
        f = FieldConfig(lat, np.zeros(lat.shape + (2,)))
        with pytest.raises(ValueError):
            save_field(f, tmp_path / "v.dat")
