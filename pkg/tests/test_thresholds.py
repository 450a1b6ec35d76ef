import math

import numpy as np
import pytest

from risnull.channel import SystemConfig, sample_channels, surrogate_system
from risnull.rates import rate_inputs_from_realization
from risnull.channel import uniform_power
from risnull.thresholds import (
    EVS_SPREAD,
    MomentReport,
    ThresholdConfig,
    _necessary_n_gordon_rejected_branch,
    antenna_collab_feasible,
    decoder_bank,
    evs_moments,
    evs_necessary_n,
    evs_necessary_n_large_eta,
    expected_gaussian_norm,
    geometry_n50,
    gordon_bounds_sphere,
    gordon_bounds_torus,
    necessary_n_gordon,
    rank_evidence,
    refined_threshold,
    round_half_up,
    sphere_necessary_n,
    sufficient_n,
    threshold_report,
    transition_eta,
    validate_gaussian_norm,
    validate_pinv_shift_norm,
    validate_sphere_projection_bounds,
    validate_torus_projection_bounds,
)


class TestClosedForms:
    @pytest.mark.parametrize(
        "L,necessary_int,sufficient_int",
        [(56, 163, 391), (90, 194, 528), (132, 222, 677)],
    )
    def test_reference_integers_at_eta_32(self, L, necessary_int, sufficient_int):
        report = threshold_report(ThresholdConfig(L=L, eta=32.0))
        assert report.n_necessary_int == necessary_int
        assert report.n_sufficient_int == sufficient_int

    def test_reference_raw_values(self):
        assert geometry_n50(56, 32.0) == pytest.approx(269.656, abs=1e-3)
        assert sphere_necessary_n(56, 32.0) == pytest.approx(148.327, abs=1e-3)
        assert sufficient_n(56, 32.0) == pytest.approx(390.985, abs=1e-3)
        assert necessary_n_gordon(56, 32.0) == pytest.approx(162.551, abs=1e-3)

    def test_zero_eta_reductions(self):
        for L in (2, 12, 56):
            assert necessary_n_gordon(L, 0.0) == 0.0
            assert sphere_necessary_n(L, 0.0) == 0.0
            assert geometry_n50(L, 0.0) == pytest.approx(L + 1)
            assert sufficient_n(L, 0.0) == pytest.approx(2 * (L + 1))
            assert evs_necessary_n(L, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_evs_zero_slack_is_sqrt_l_eta(self):
        assert evs_necessary_n(56, 10.0, c1=0.0, c2=0.0) == pytest.approx(
            math.sqrt(56) * 10.0
        )

    def test_large_eta_linear_law(self):
        assert evs_necessary_n_large_eta(56, 50.0) == pytest.approx(405.166, abs=1e-3)
        assert refined_threshold(56, 50.0) == pytest.approx(405.166, abs=1e-3)

    def test_refined_floor_and_transition(self):
        assert refined_threshold(12, 0.0) == 24.0
        assert refined_threshold(12, 2.0) == 24.0
        assert transition_eta(56) == pytest.approx(8.019, abs=1e-3)
        assert transition_eta(12) == pytest.approx(4.0484, abs=1e-3)
        # the two regimes meet exactly at the transition
        t = transition_eta(12)
        assert refined_threshold(12, t) == pytest.approx(24.0)

    def test_rejected_branch_is_diagnostic_only(self):
        val = _necessary_n_gordon_rejected_branch(56, 1.0)
        assert val > necessary_n_gordon(56, 1.0)
        with pytest.raises(ValueError, match="rejected branch"):
            _necessary_n_gordon_rejected_branch(56, 3.0)
        assert "n_rejected" not in threshold_report(ThresholdConfig(L=56, eta=1.0)).as_dict()

    @pytest.mark.parametrize("x,expected", [(0.5, 1), (1.49, 1), (2.5, 3), (162.551, 163)])
    def test_round_half_up(self, x, expected):
        assert round_half_up(x) == expected

    def test_input_validation(self):
        with pytest.raises(ValueError):
            necessary_n_gordon(0, 1.0)
        with pytest.raises(ValueError):
            geometry_n50(4, -1.0)
        with pytest.raises(ValueError, match="swallows"):
            evs_necessary_n(1, 1.0, c1=2.0)
        with pytest.raises(ValueError):
            transition_eta(1, c=-1.0)


class TestThresholdConfig:
    def test_from_system(self):
        sys_cfg = SystemConfig(G=2, M=4, K=4, N=100, eta=32.0)
        cfg = ThresholdConfig.from_system(sys_cfg)
        assert cfg.L == 56
        assert cfg.eta == 32.0

    def test_validation(self):
        with pytest.raises(ValueError):
            ThresholdConfig(L=0)
        with pytest.raises(ValueError):
            ThresholdConfig(L=4, c=-3.0)
        with pytest.raises(ValueError):
            ThresholdConfig(L=4, c1=-1.0)

    def test_report_ints_match_rounding(self):
        report = threshold_report(ThresholdConfig(L=30, eta=17.3))
        d = report.as_dict()
        for key in ("n_necessary", "n_geometry", "n_sphere_necessary", "n_sufficient",
                    "n_evs", "n_evs_large_eta", "n_refined"):
            assert d[f"{key}_int"] == round_half_up(d[key])


GRID_L = np.unique(np.round(np.logspace(np.log10(2), np.log10(200), 20)).astype(int))
GRID_ETA = np.linspace(0.0, 100.0, 20)


class TestGridProperties:
    @pytest.mark.parametrize(
        "fn",
        [
            necessary_n_gordon,
            geometry_n50,
            sphere_necessary_n,
            sufficient_n,
            lambda L, e: evs_necessary_n(L, e),
            lambda L, e: evs_necessary_n_large_eta(L, e),
            lambda L, e: refined_threshold(L, e),
        ],
        ids=["necessary", "geometry", "sphere", "sufficient", "evs", "evs_linear", "refined"],
    )
    def test_monotone_in_eta_and_l(self, fn):
        vals = np.array([[fn(int(L), float(e)) for e in GRID_ETA] for L in GRID_L])
        assert np.all(np.diff(vals, axis=1) >= -1e-9), "not monotone in eta"
        assert np.all(np.diff(vals, axis=0) >= -1e-9), "not monotone in L"

    def test_estimate_ordering_in_strong_direct_regime(self):
        # necessary <= refined <= sufficient where the linear law applies;
        # outside this band the asymptotic forms are known to cross
        ls = np.unique(np.round(np.logspace(np.log10(10), np.log10(150), 20)).astype(int))
        ratios = np.linspace(10.0, 18.0, 20)
        for L in ls:
            for r in ratios:
                eta = float(r * math.sqrt(L))
                lo = necessary_n_gordon(int(L), eta)
                mid = refined_threshold(int(L), eta)
                hi = sufficient_n(int(L), eta)
                assert lo <= mid <= hi

    def test_evs_matches_linear_form_at_strong_direct_paths(self):
        ls = np.unique(np.round(np.logspace(np.log10(56), np.log10(200), 20)).astype(int))
        ratios = np.linspace(12.0, 24.0, 20)
        for L in ls:
            for r in ratios:
                eta = float(r * math.sqrt(L))
                full = evs_necessary_n(int(L), eta)
                linear = evs_necessary_n_large_eta(
                    int(L), eta, c=-2.0 * EVS_SPREAD, c_bar=0.0
                )
                assert abs(full - linear) / linear <= 0.05


class TestMoments:
    def test_reference_values(self):
        report = evs_moments(4, 8, sigma3=2.0, sigma4=1.0)
        assert report.mean_b_sum == pytest.approx(4 * math.sqrt(math.pi), abs=1e-9)
        assert report.var_b_sum == pytest.approx(16 - 4 * math.pi, abs=1e-9)
        assert report.mean_row_sum == pytest.approx(8 * (math.sqrt(math.pi) / 2) * 2.0)
        assert report.var_row_sum == pytest.approx(8 * (1 - math.pi / 4) * 4.0)

    def test_monte_carlo_agreement(self):
        L, N, s3, s4 = 4, 8, 2.0, 1.0
        rng = np.random.default_rng(0)
        b_sums = np.empty(4000)
        row_sums = np.empty(4000)
        for t in range(4000):
            system = surrogate_system(L, N, s3, s4, rng)
            b_sums[t] = np.abs(system.b).sum()
            row_sums[t] = np.abs(system.a_matrix.sum(axis=1)).sum()
        report = evs_moments(L, N, s3, s4)
        assert np.mean(b_sums) == pytest.approx(report.mean_b_sum, rel=0.02)
        assert np.var(b_sums) == pytest.approx(report.var_b_sum, rel=0.15)
        assert np.mean(row_sums) == pytest.approx(report.mean_row_sum, rel=0.02)
        assert np.var(row_sums) == pytest.approx(report.var_row_sum, rel=0.15)


class TestExtremeNormBounds:
    def test_torus_bracket_formula(self):
        lo, hi = gordon_bounds_torus(100, 4, sigma=1.0)
        assert lo == pytest.approx(16.4551, abs=1e-3)
        assert hi == pytest.approx(23.5449, abs=1e-3)

    def test_torus_lower_clamps_at_zero(self):
        lo, _ = gordon_bounds_torus(2, 16)
        assert lo == 0.0

    def test_sphere_bracket_formula(self):
        lo, hi = gordon_bounds_sphere(100, 4, sigma=0.5)
        assert lo == pytest.approx(0.5 * 2 * 8.0)
        assert hi == pytest.approx(0.5 * 2 * 12.0)

    def test_torus_validator_passes_small_case(self):
        report = validate_torus_projection_bounds(2, 4, 1.0, trials=40,
                                                  rng=np.random.default_rng(1))
        assert report.passed_lower and report.passed_upper
        assert report.mean_min <= report.mean_max
        assert report.lower_bound == 0.0

    def test_sphere_validator_exact_min_is_zero_when_wide(self):
        report = validate_sphere_projection_bounds(2, 8, 1.0, trials=50,
                                                   rng=np.random.default_rng(2))
        assert report.mean_min == 0.0
        assert report.passed

    def test_sphere_validator_tall_case(self):
        report = validate_sphere_projection_bounds(12, 4, 1.0, trials=60,
                                                   rng=np.random.default_rng(3))
        assert report.passed
        assert report.mean_min > 0


class TestNormValidators:
    def test_exact_gaussian_norm_small_l(self):
        assert expected_gaussian_norm(1) == pytest.approx(math.sqrt(math.pi) / 2)

    def test_exact_tracks_asymptotic(self):
        # relative gap is about 1/(8L)
        for L in (25, 100, 400):
            gap = 1 - expected_gaussian_norm(L) / math.sqrt(L)
            assert gap == pytest.approx(1 / (8 * L), rel=0.05)

    def test_gaussian_norm_validator(self):
        report = validate_gaussian_norm(100, 2.0, trials=4000,
                                        rng=np.random.default_rng(4))
        assert report.passed
        assert report.mean == pytest.approx(20.0, rel=0.01)

    def test_gaussian_norm_validator_small_l(self):
        report = validate_gaussian_norm(4, 1.0, trials=3000,
                                        rng=np.random.default_rng(5))
        assert report.passed

    def test_pinv_shift_bound_value_and_pass(self):
        report = validate_pinv_shift_norm(10, 100, 1.0, trials=400,
                                          rng=np.random.default_rng(6))
        assert report.bound == pytest.approx(math.sqrt(10.0 / 89.0), abs=1e-9)
        assert report.passed
        assert report.mean < 0.34

    def test_pinv_shift_needs_headroom(self):
        with pytest.raises(ValueError, match="N > L"):
            validate_pinv_shift_norm(10, 11, 1.0, 10, np.random.default_rng(7))


class TestAntennaCollaboration:
    @pytest.mark.parametrize(
        "g,m,k,expected",
        [(2, 4, 2, True), (2, 3, 2, False), (1, 1, 1, True), (3, 9, 3, True), (3, 8, 3, False)],
    )
    def test_spot_checks(self, g, m, k, expected):
        assert antenna_collab_feasible(g, m, k) is expected

    def test_validation(self):
        with pytest.raises(ValueError):
            antenna_collab_feasible(0, 1, 1)


class TestRankEvidence:
    def test_decoder_bank_shapes(self):
        cfg = SystemConfig(G=3, M=2, K=4, N=6, eta=1.0)
        real = sample_channels(cfg, np.random.default_rng(8))
        v = np.exp(1j * np.linspace(0, 3, 6))
        bank = decoder_bank(real, v, cfg)
        assert len(bank.desired) == 3
        assert bank.desired[0].shape == (2, 4)
        assert bank.cross[0].shape == (2, 8)

    def test_desired_matches_rate_coefficients(self):
        cfg = SystemConfig(G=2, M=2, K=2, N=10, eta=0.5)
        real = sample_channels(cfg, np.random.default_rng(9))
        alloc = uniform_power(cfg)
        inputs = rate_inputs_from_realization(real, alloc, cfg)
        v = np.exp(1j * np.linspace(0, 4, 10))
        bank = decoder_bank(real, v, cfg)
        c = inputs.coefficients(v)
        for r, (cell, user) in enumerate(inputs.streams):
            k_pos = user  # first-M activation keeps user index == antenna slot
            assert bank.desired[cell][k_pos, user] == pytest.approx(c[r, r], rel=1e-12)

    def test_generic_ranks_hold(self):
        cfg = SystemConfig(G=2, M=4, K=4, N=8, eta=1.0)
        report = rank_evidence(cfg, trials=20, rng=np.random.default_rng(10))
        assert report.expected_desired == 4
        assert report.expected_cross == 4
        assert report.violations == 0
        assert report.passed

    def test_single_cell_has_no_cross_terms(self):
        cfg = SystemConfig(G=1, M=2, K=2, N=6, eta=1.0)
        report = rank_evidence(cfg, trials=5, rng=np.random.default_rng(11))
        assert report.expected_cross == 0
        assert report.violations == 0
