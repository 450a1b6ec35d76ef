import numpy as np
import pytest

from risnull.channel import (
    SystemConfig,
    assemble_nulling_system,
    sample_channels,
    uniform_power,
)
from risnull.nulling import alternating_projection, random_phases
from risnull.rates import (
    DIRECTIONAL_DERIVATIVE_FACTOR,
    AscentOptions,
    RateInputs,
    estimate_dof,
    euclidean_gradient,
    maximize_on_torus,
    rate_inputs_from_realization,
    rcg_maximize,
    retract,
    riemannian_gradient,
    sum_rate,
    transport,
)


def build_case(seed=0, G=2, M=2, K=2, N=16, eta=1.0, noise=1.0):
    cfg = SystemConfig(G=G, M=M, K=K, N=N, eta=eta, noise_variance=noise)
    real = sample_channels(cfg, np.random.default_rng(seed))
    alloc = uniform_power(cfg)
    return cfg, real, alloc, rate_inputs_from_realization(real, alloc, cfg)


def brute_force_sum_rate(inputs, v):
    total = 0.0
    rates = []
    for r in range(inputs.R):
        num = 0.0
        den = inputs.noise_variance
        for s in range(inputs.R):
            c = np.vdot(inputs.a[r, s], v) + inputs.b[r, s]
            power = inputs.powers[s] * abs(c) ** 2
            if s == r:
                num = power
            else:
                den += power
        rates.append(np.log2(1 + num / den))
        total += rates[-1]
    return np.array(rates), total


class TestSumRate:
    def test_matches_scalar_recomputation(self):
        _, _, _, inputs = build_case(seed=1)
        v = random_phases(inputs.N, np.random.default_rng(1))
        report = sum_rate(inputs, v)
        rates, total = brute_force_sum_rate(inputs, v)
        assert np.allclose(report.rates, rates)
        assert report.total == pytest.approx(total)

    def test_single_stream_closed_form(self):
        a = np.ones((1, 1, 4), dtype=complex) / 2.0
        inputs = RateInputs(
            a=a, b=np.zeros((1, 1), dtype=complex), powers=np.array([3.0]),
            noise_variance=0.5, streams=[(0, 0)], n_cells=1,
        )
        v = np.ones(4, dtype=complex)
        # coefficient = sum(conj(1/2) * 1) = 2, so SNR = 3*4/0.5 = 24
        report = sum_rate(inputs, v)
        assert report.total == pytest.approx(np.log2(25.0))

    def test_zero_power_means_zero_rate(self):
        _, _, alloc, inputs = build_case(seed=2)
        silent = inputs.with_powers(np.zeros(inputs.R))
        v = random_phases(inputs.N, np.random.default_rng(2))
        assert sum_rate(silent, v).total == 0.0

    def test_per_cell_split(self):
        _, _, _, inputs = build_case(seed=3)
        v = random_phases(inputs.N, np.random.default_rng(3))
        report = sum_rate(inputs, v)
        per_cell = report.per_cell(2)
        assert per_cell.shape == (2,)
        assert per_cell.sum() == pytest.approx(report.total)

    def test_offdiagonal_coefficients_match_nulling_rows(self):
        cfg, real, alloc, inputs = build_case(seed=4, N=12)
        system = assemble_nulling_system(real, alloc, cfg)
        v = random_phases(12, np.random.default_rng(4))
        lhs = system.a_matrix.conj().T @ v + system.b
        c = inputs.coefficients(v)
        off_diag = np.array(
            [c[r, s] for r in range(inputs.R) for s in range(inputs.R) if s != r]
        )
        assert np.allclose(lhs, off_diag)

    def test_nulled_phases_remove_interference(self):
        cfg, real, alloc, inputs = build_case(seed=5, N=64, eta=0.5)
        system = assemble_nulling_system(real, alloc, cfg)
        out = alternating_projection(system, np.random.default_rng(5))
        assert out.feasible
        report = sum_rate(inputs, out.v)
        c = inputs.coefficients(out.v)
        p_rx = np.abs(c) ** 2 * inputs.powers
        interference = p_rx.sum(axis=1) - np.diagonal(p_rx)
        assert np.all(interference < 1e-6 * inputs.noise_variance)
        clean = np.log2(1 + np.diagonal(p_rx) / inputs.noise_variance)
        assert report.total == pytest.approx(clean.sum(), rel=1e-6)


class TestGradient:
    def test_directional_derivative_calibration(self):
        # freezes the gradient convention: d/dt W(v + t u) == re(u^H egrad)
        rng = np.random.default_rng(6)
        for seed in range(5):
            _, _, _, inputs = build_case(seed=seed, N=24, eta=0.7)
            v = random_phases(24, rng)
            u = rng.standard_normal(24) + 1j * rng.standard_normal(24)
            g = euclidean_gradient(inputs, v)
            eps = 1e-6
            fwd = sum_rate(inputs, v + eps * u).total
            bwd = sum_rate(inputs, v - eps * u).total
            numeric = (fwd - bwd) / (2 * eps)
            analytic = DIRECTIONAL_DERIVATIVE_FACTOR * np.real(np.vdot(u, g))
            assert analytic == pytest.approx(numeric, rel=1e-5)

    def test_riemannian_gradient_is_tangent(self):
        _, _, _, inputs = build_case(seed=7)
        v = random_phases(inputs.N, np.random.default_rng(7))
        rg = riemannian_gradient(euclidean_gradient(inputs, v), v)
        assert np.allclose(np.real(rg * v.conj()), 0.0, atol=1e-12)

    def test_transport_lands_in_tangent_space(self):
        rng = np.random.default_rng(8)
        d = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        v_new = random_phases(10, rng)
        moved = transport(d, v_new)
        assert np.allclose(np.real(moved * v_new.conj()), 0.0, atol=1e-12)

    def test_retract_stays_on_torus(self):
        rng = np.random.default_rng(9)
        v = random_phases(10, rng)
        d = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        out = retract(v, 0.3, d)
        assert np.allclose(np.abs(out), 1.0)
        assert np.allclose(retract(v, 0.0, d), v)


class TestAscentEngine:
    def test_separable_linear_objective_reaches_global_max(self):
        rng = np.random.default_rng(10)
        g = rng.standard_normal(12) + 1j * rng.standard_normal(12)
        value = lambda v: float(np.real(np.vdot(g, v)))
        egrad = lambda v: g
        out = maximize_on_torus(value, egrad, random_phases(12, rng),
                                AscentOptions(rel_tol=1e-10, max_iters=2000))
        assert out.value == pytest.approx(np.abs(g).sum(), rel=1e-6)
        assert out.converged

    def test_stationary_start_terminates_immediately(self):
        v0 = random_phases(8, np.random.default_rng(11))
        out = maximize_on_torus(lambda v: 8.0, lambda v: v, v0)
        assert out.iterations == 0
        assert out.value == 8.0
        assert out.converged
        assert len(out.value_trace) == 1

    def test_trace_never_decreases(self):
        _, _, _, inputs = build_case(seed=12, N=32, eta=2.0)
        out = rcg_maximize(inputs, random_phases(32, np.random.default_rng(12)))
        assert np.all(np.diff(out.value_trace) >= 0)

    def test_improves_over_start_and_is_deterministic(self):
        _, _, _, inputs = build_case(seed=13, N=32, eta=1.0)
        v0 = random_phases(32, np.random.default_rng(13))
        w0 = sum_rate(inputs, v0).total
        a = rcg_maximize(inputs, v0)
        b = rcg_maximize(inputs, v0)
        assert a.value > w0
        assert np.array_equal(a.v, b.v)
        assert np.allclose(np.abs(a.v), 1.0)

    def test_options_validation(self):
        with pytest.raises(ValueError):
            AscentOptions(rel_tol=0.0)
        with pytest.raises(ValueError):
            AscentOptions(armijo_shrink=1.5)


def identity_link_inputs(n_cells=1, streams_per_cell=1, noise=1.0):
    """Orthogonal desired links, no cross terms: each stream is clean."""
    r = n_cells * streams_per_cell
    n = max(r, 2)
    a = np.zeros((r, r, n), dtype=complex)
    for i in range(r):
        a[i, i, i] = 1.0
    labels = [(c, k) for c in range(n_cells) for k in range(streams_per_cell)]
    return RateInputs(
        a=a, b=np.zeros((r, r), dtype=complex), powers=np.ones(r),
        noise_variance=noise, streams=labels, n_cells=n_cells,
    )


class TestDofEstimate:
    def test_clean_single_stream_has_unit_dof(self):
        inputs = identity_link_inputs()
        v = np.ones(2, dtype=complex)
        est = estimate_dof(inputs, v)
        assert est.total == pytest.approx(1.0, abs=0.01)
        assert not est.low_confidence

    def test_clean_multi_stream_counts_all(self):
        inputs = identity_link_inputs(n_cells=2, streams_per_cell=2)
        v = np.ones(4, dtype=complex)
        est = estimate_dof(inputs, v)
        assert est.per_cell == pytest.approx([2.0, 2.0], abs=0.02)
        assert est.total == pytest.approx(4.0, abs=0.04)

    def test_unremovable_interference_kills_dof(self):
        inputs = identity_link_inputs(n_cells=2, streams_per_cell=1)
        inputs.b[0, 1] = 1.0
        inputs.b[1, 0] = 1.0
        est = estimate_dof(inputs, np.ones(2, dtype=complex))
        assert est.total < 0.1

    def test_narrow_grid_flagged(self):
        inputs = identity_link_inputs()
        est = estimate_dof(inputs, np.ones(2, dtype=complex), power_grid=(1e3, 1.5e3))
        assert est.low_confidence

    def test_low_snr_grid_flagged(self):
        inputs = identity_link_inputs()
        est = estimate_dof(inputs, np.ones(2, dtype=complex), power_grid=(1.0, 1e6))
        assert est.low_confidence

    def test_bad_grid_rejected(self):
        inputs = identity_link_inputs()
        with pytest.raises(ValueError):
            estimate_dof(inputs, np.ones(2, dtype=complex), power_grid=(10.0, 10.0))

    def test_inactive_streams_contribute_nothing(self):
        inputs = identity_link_inputs(n_cells=1, streams_per_cell=2)
        silenced = inputs.with_powers(np.array([1.0, 0.0]))
        est = estimate_dof(silenced, np.ones(2, dtype=complex))
        assert est.total == pytest.approx(1.0, abs=0.01)
