"""Closed-form element-count thresholds and their statistical validators.

How many surface elements ``N`` make the ``L`` interference equations
solvable with unit-modulus phases? Several estimates, all driven by the
direct-to-cascade strength ratio ``eta``:

* ``necessary_n_gordon``: below this the torus provably cannot reach the
  solution set on average (Gaussian-width / escape-through-a-mesh argument
  on the torus).
* ``geometry_n50`` and ``sphere_necessary_n``: the N where the relaxed
  sphere's radius matches the affine set's typical offset, and the
  sphere-level necessary count; ``sufficient_n`` reflects the first around
  the second to get an empirically safe upper estimate.
* ``evs_necessary_n``: a sharper necessary estimate from extreme-value
  statistics of the per-equation magnitude sums, with slack knobs
  ``c1``/``c2`` in units of the fluctuation scale.
* ``refined_threshold``: the large-``eta`` linear law ``(sqrt(L)+c)*eta + L``
  floored at ``2L``, the small-``eta`` requirement; ``transition_eta`` is
  where the two regimes meet.

Validity note: the ordering gordon <= refined <= sufficient holds in the
experimentally relevant band (roughly ``L >= 8`` with ``eta`` between 10 and
20 times ``sqrt(L)``); outside it the asymptotic forms cross and no ordering
is claimed.

The ``validate_*`` functions check the probabilistic ingredients by Monte
Carlo, always with the inequality in the safe direction: optimizer-found
minima can only overestimate the true minimum and found maxima underestimate
the true maximum, so comparing them against lower/upper bounds respectively
never passes by luck of a bad search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, SystemConfig, cascade, sample_channels
from .numerics import DEFAULT_RANK_TOL, least_norm_solve, numerical_rank, sample_complex_gaussian
from .rates import AscentOptions, maximize_on_torus

SQRT_PI = math.sqrt(math.pi)

# Fluctuation scale of |CN(0,1)| magnitudes: sqrt(4/pi - 1) in units of the mean.
EVS_SPREAD = math.sqrt(4.0 / math.pi - 1.0)


def _check_l_eta(L: int, eta: float) -> None:
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if eta < 0:
        raise ValueError(f"eta must be nonnegative, got {eta}")


def necessary_n_gordon(L: int, eta: float) -> float:
    """Element count below which the torus cannot meet the solution set.

    Mean-width argument: the torus escapes an ``L``-codimension affine set
    offset by the direct paths only while N stays below this value.
    """
    _check_l_eta(L, eta)
    root_l = math.sqrt(L)
    return ((-root_l + math.sqrt(L + 2.0 * SQRT_PI * root_l * eta)) / SQRT_PI) ** 2


def _necessary_n_gordon_rejected_branch(L: int, eta: float) -> float:
    """Other root of the same quadratic; kept for diagnosis only.

    This branch would claim escape for *large* N, which contradicts the
    simulations (more elements always help), so it never enters reports.
    Only defined while ``L >= 4*pi*eta^2``.
    """
    _check_l_eta(L, eta)
    root_l = math.sqrt(L)
    inner = L - 2.0 * SQRT_PI * root_l * eta
    if inner < 0:
        raise ValueError("rejected branch undefined: needs L >= 4*pi*eta^2")
    return ((root_l + math.sqrt(inner)) / SQRT_PI) ** 2


def geometry_n50(L: int, eta: float) -> float:
    """N where the relaxed sphere's radius equals the affine offset's mean.

    Empirically tracks the 50% feasibility point of the sphere relaxation;
    reflecting it around :func:`sphere_necessary_n` gives the sufficient
    estimate.
    """
    _check_l_eta(L, eta)
    return 0.5 * (L + 1.0 + math.sqrt((L + 1.0) ** 2 + 4.0 * L * eta**2))


def sphere_necessary_n(L: int, eta: float) -> float:
    """Sphere-relaxation analogue of :func:`necessary_n_gordon`."""
    _check_l_eta(L, eta)
    root_l = math.sqrt(L)
    return ((-root_l + math.sqrt(L + 4.0 * root_l * eta)) / 2.0) ** 2


def sufficient_n(L: int, eta: float) -> float:
    """Element count above which solving succeeds in practice.

    Point-reflection of the sphere's necessary count through its 50% point:
    ``2 * geometry_n50 - sphere_necessary_n``.
    """
    return 2.0 * geometry_n50(L, eta) - sphere_necessary_n(L, eta)


def evs_necessary_n(L: int, eta: float, c1: float = 2.0, c2: float = 2.0) -> float:
    """Necessary count from extreme-value statistics of magnitude sums.

    ``c1`` and ``c2`` are nonnegative slack multiples of the fluctuation
    scale on the equation-sum and element-sum sides; zero slack reduces to
    ``sqrt(L) * eta``.
    """
    _check_l_eta(L, eta)
    if c1 < 0 or c2 < 0:
        raise ValueError("c1 and c2 must be nonnegative")
    s = math.sqrt(L) - c1 * EVS_SPREAD
    if s <= 0:
        raise ValueError(f"slack c1={c1} swallows sqrt(L) for L={L}")
    half_c2d = 0.5 * c2 * EVS_SPREAD
    return (
        2.0 * half_c2d**2
        + s * eta
        - half_c2d * math.sqrt((c2 * EVS_SPREAD) ** 2 + 4.0 * s * eta)
    )


def evs_necessary_n_large_eta(L: int, eta: float, c: float = -0.5, c_bar: float | None = None) -> float:
    """Linear large-``eta`` form of the extreme-value condition.

    ``(sqrt(L) + c) * eta + c_bar`` with the empirical intercept ``c_bar``
    defaulting to ``L``.
    """
    _check_l_eta(L, eta)
    if c_bar is None:
        c_bar = float(L)
    return (math.sqrt(L) + c) * eta + c_bar


def refined_threshold(L: int, eta: float, c: float = -0.5) -> float:
    """Practical feasibility boundary across both regimes.

    Large ``eta``: the linear law with intercept ``L``. Small ``eta``: never
    below ``2L`` (each complex equation consumes two real element degrees of
    freedom).
    """
    return max(2.0 * L, evs_necessary_n_large_eta(L, eta, c=c))


def transition_eta(L: int, c: float = -0.5) -> float:
    """Ratio where the linear law crosses the ``2L`` floor."""
    _check_l_eta(L, 0.0)
    denom = math.sqrt(L) + c
    if denom <= 0:
        raise ValueError(f"offset c={c} must keep sqrt(L) + c positive")
    return L / denom


def round_half_up(x: float) -> int:
    """Deterministic rounding for reported element counts (0.5 rounds up)."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ThresholdConfig:
    """Inputs for one threshold report.

    ``L`` may come directly or via ``from_system`` (stream-pair count).
    ``c`` is the large-eta slope offset; ``c1``/``c2`` the extreme-value
    slack multiples; ``c_bar`` the linear intercept (defaults to ``L``).
    """

    L: int
    eta: float = 0.0
    c: float = -0.5
    c1: float = 2.0
    c2: float = 2.0
    c_bar: float | None = None

    def __post_init__(self):
        _check_l_eta(self.L, self.eta)
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must be nonnegative")
        if math.sqrt(self.L) + self.c <= 0:
            raise ValueError("c must keep sqrt(L) + c positive")

    @classmethod
    def from_system(cls, config: SystemConfig, **kw) -> "ThresholdConfig":
        return cls(L=config.L, eta=float(config.eta), **kw)


@dataclass(frozen=True)
class ThresholdReport:
    """All threshold estimates for one (L, eta), raw and rounded."""

    L: int
    eta: float
    n_necessary: float
    n_geometry: float
    n_sphere_necessary: float
    n_sufficient: float
    n_evs: float
    n_evs_large_eta: float
    n_refined: float
    eta_transition: float
    n_necessary_int: int
    n_geometry_int: int
    n_sphere_necessary_int: int
    n_sufficient_int: int
    n_evs_int: int
    n_evs_large_eta_int: int
    n_refined_int: int

    def as_dict(self) -> dict:
        return {
            "L": self.L,
            "eta": self.eta,
            "n_necessary": self.n_necessary,
            "n_geometry": self.n_geometry,
            "n_sphere_necessary": self.n_sphere_necessary,
            "n_sufficient": self.n_sufficient,
            "n_evs": self.n_evs,
            "n_evs_large_eta": self.n_evs_large_eta,
            "n_refined": self.n_refined,
            "eta_transition": self.eta_transition,
            "n_necessary_int": self.n_necessary_int,
            "n_geometry_int": self.n_geometry_int,
            "n_sphere_necessary_int": self.n_sphere_necessary_int,
            "n_sufficient_int": self.n_sufficient_int,
            "n_evs_int": self.n_evs_int,
            "n_evs_large_eta_int": self.n_evs_large_eta_int,
            "n_refined_int": self.n_refined_int,
        }


def threshold_report(cfg: ThresholdConfig) -> ThresholdReport:
    vals = {
        "n_necessary": necessary_n_gordon(cfg.L, cfg.eta),
        "n_geometry": geometry_n50(cfg.L, cfg.eta),
        "n_sphere_necessary": sphere_necessary_n(cfg.L, cfg.eta),
        "n_sufficient": sufficient_n(cfg.L, cfg.eta),
        "n_evs": evs_necessary_n(cfg.L, cfg.eta, cfg.c1, cfg.c2),
        "n_evs_large_eta": evs_necessary_n_large_eta(cfg.L, cfg.eta, cfg.c, cfg.c_bar),
        "n_refined": refined_threshold(cfg.L, cfg.eta, cfg.c),
    }
    ints = {f"{k}_int": round_half_up(v) for k, v in vals.items()}
    return ThresholdReport(
        L=cfg.L,
        eta=cfg.eta,
        eta_transition=transition_eta(cfg.L, cfg.c),
        **vals,
        **ints,
    )


@dataclass(frozen=True)
class MomentReport:
    """First and second moments of the system's magnitude sums.

    ``b_sum`` refers to ``sum_i |b_i|`` over the L offsets; ``row_sum`` to
    ``sum_n |sum_i a_ni|``, the per-element sums of equation coefficients.
    """

    mean_b_sum: float
    var_b_sum: float
    mean_row_sum: float
    var_row_sum: float


def evs_moments(L: int, N: int, sigma3: float, sigma4: float) -> MomentReport:
    """Closed-form moments used by the extreme-value threshold argument."""
    _check_l_eta(L, 0.0)
    if N < 1:
        raise ValueError("N must be >= 1")
    half_sqrt_pi = SQRT_PI / 2.0
    one_minus = 1.0 - math.pi / 4.0
    return MomentReport(
        mean_b_sum=L * half_sqrt_pi * sigma3,
        var_b_sum=L * one_minus * sigma3**2,
        mean_row_sum=N * half_sqrt_pi * math.sqrt(L) * sigma4,
        var_row_sum=N * one_minus * L * sigma4**2,
    )


def gordon_bounds_torus(L: int, N: int, sigma: float = 1.0) -> tuple[float, float]:
    """Expected extreme values of ``|G x|`` over the unit-modulus set.

    ``G`` is ``L x N`` with i.i.d. CN(0, sigma^2) entries. Returns
    (lower bound on E min, upper bound on E max); the lower is clamped at 0.
    The gap reflects the torus's mean width ``(sqrt(pi)/2) * sqrt(N)``.
    """
    root = sigma * math.sqrt(N)
    width = (SQRT_PI / 2.0) * math.sqrt(N)
    return max(0.0, root * (math.sqrt(L) - width)), root * (math.sqrt(L) + width)


def gordon_bounds_sphere(L: int, N: int, sigma: float = 1.0) -> tuple[float, float]:
    """Same extremes over the sphere of radius ``sqrt(N)`` (width ``sqrt(N)``)."""
    root = sigma * math.sqrt(N)
    width = math.sqrt(N)
    return max(0.0, root * (math.sqrt(L) - width)), root * (math.sqrt(L) + width)


@dataclass
class ExtremeNormReport:
    """Monte-Carlo extremes of ``|G x|`` against the closed-form bracket."""

    lower_bound: float
    upper_bound: float
    mean_min: float
    mean_max: float
    se_min: float
    se_max: float
    trials: int
    passed_lower: bool
    passed_upper: bool

    @property
    def passed(self) -> bool:
        return self.passed_lower and self.passed_upper


def _summarize_extremes(
    mins: np.ndarray, maxs: np.ndarray, lower: float, upper: float
) -> ExtremeNormReport:
    trials = len(mins)
    se_min = float(np.std(mins, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    se_max = float(np.std(maxs, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    mean_min = float(np.mean(mins))
    mean_max = float(np.mean(maxs))
    return ExtremeNormReport(
        lower_bound=lower,
        upper_bound=upper,
        mean_min=mean_min,
        mean_max=mean_max,
        se_min=se_min,
        se_max=se_max,
        trials=trials,
        passed_lower=mean_min >= lower - se_min,
        passed_upper=mean_max <= upper + se_max,
    )


def validate_torus_projection_bounds(
    L: int,
    N: int,
    sigma: float,
    trials: int,
    rng: np.random.Generator,
    starts: int = 2,
) -> ExtremeNormReport:
    """Check the torus extreme-norm bracket by manifold search.

    The searched minimum can only sit above the true minimum and the searched
    maximum below the true maximum, so a pass is never an artifact of an
    incomplete search.
    """
    opts = AscentOptions(rel_tol=1e-9, max_iters=300)
    mins = np.empty(trials)
    maxs = np.empty(trials)
    for t in range(trials):
        g = sample_complex_gaussian(L, N, sigma**2, rng)
        q = g.conj().T @ g

        def norm_sq(v):
            return float(np.real(np.vdot(v, q @ v)))

        found_min = math.inf
        found_max = -math.inf
        for _ in range(starts):
            v0 = np.exp(1j * rng.uniform(0, 2 * np.pi, N))
            lo = maximize_on_torus(lambda v: -norm_sq(v), lambda v: -2.0 * (q @ v), v0, opts)
            hi = maximize_on_torus(norm_sq, lambda v: 2.0 * (q @ v), v0, opts)
            found_min = min(found_min, -lo.value)
            found_max = max(found_max, hi.value)
        mins[t] = math.sqrt(max(0.0, found_min))
        maxs[t] = math.sqrt(max(0.0, found_max))
    lower, upper = gordon_bounds_torus(L, N, sigma)
    return _summarize_extremes(mins, maxs, lower, upper)


def validate_sphere_projection_bounds(
    L: int,
    N: int,
    sigma: float,
    trials: int,
    rng: np.random.Generator,
) -> ExtremeNormReport:
    """Check the sphere extreme-norm bracket using exact singular values."""
    scale = math.sqrt(N)
    mins = np.empty(trials)
    maxs = np.empty(trials)
    for t in range(trials):
        g = sample_complex_gaussian(L, N, sigma**2, rng)
        s = np.linalg.svd(g, compute_uv=False)
        smin = s[-1] if N <= L else 0.0
        mins[t] = scale * smin
        maxs[t] = scale * s[0]
    lower, upper = gordon_bounds_sphere(L, N, sigma)
    return _summarize_extremes(mins, maxs, lower, upper)


@dataclass
class NormMeanReport:
    """Sample mean of ``|x|`` for Gaussian ``x`` against its references."""

    mean: float
    asymptotic: float
    exact: float
    se: float
    trials: int
    passed: bool


def expected_gaussian_norm(L: int, sigma: float = 1.0) -> float:
    """Exact E|x| for x ~ CN(0, sigma^2 I_L): sigma * Gamma(L+1/2) / Gamma(L)."""
    return sigma * math.exp(math.lgamma(L + 0.5) - math.lgamma(L))


def validate_gaussian_norm(
    L: int,
    sigma: float,
    trials: int,
    rng: np.random.Generator,
) -> NormMeanReport:
    """Concentration of ``|x|`` at ``sigma*sqrt(L)``.

    For L >= 25 the pass condition is the 1% relative band around the
    asymptote; smaller L compare against the exact mean within 3 standard
    errors.
    """
    x = sample_complex_gaussian(trials, L, sigma**2, rng)
    norms = np.linalg.norm(x, axis=1)
    mean = float(np.mean(norms))
    se = float(np.std(norms, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    asymptotic = sigma * math.sqrt(L)
    exact = expected_gaussian_norm(L, sigma)
    if L >= 25:
        passed = abs(mean - asymptotic) <= 0.01 * asymptotic
    else:
        passed = abs(mean - exact) <= 3.0 * se
    return NormMeanReport(
        mean=mean, asymptotic=asymptotic, exact=exact, se=se, trials=trials, passed=passed
    )


@dataclass
class PinvShiftReport:
    """Mean norm of the least-norm solution of ``G z = x`` vs its cap."""

    bound: float
    mean: float
    se: float
    trials: int
    passed: bool


def validate_pinv_shift_norm(
    L: int,
    N: int,
    rho: float,
    trials: int,
    rng: np.random.Generator,
    sigma: float = 1.0,
) -> PinvShiftReport:
    """Check E|G^+ x| <= sqrt(L / (N - L - 1)) * rho / sigma.

    ``G`` is ``L x N`` CN(0, sigma^2), ``x`` ~ CN(0, rho^2 I_L). Needs
    ``N > L + 1`` for the cap to exist.
    """
    if N <= L + 1:
        raise ValueError(f"need N > L + 1, got N={N}, L={L}")
    norms = np.empty(trials)
    for t in range(trials):
        g = sample_complex_gaussian(L, N, sigma**2, rng)
        x = sample_complex_gaussian(L, 1, rho**2, rng)[:, 0]
        norms[t] = np.linalg.norm(least_norm_solve(g, x).x)
    mean = float(np.mean(norms))
    se = float(np.std(norms, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    bound = math.sqrt(L / (N - L - 1.0)) * rho / sigma
    return PinvShiftReport(
        bound=bound, mean=mean, se=se, trials=trials, passed=mean <= bound + se
    )


def antenna_collab_feasible(G: int, M: int, K: int) -> bool:
    """Can receive antennas alone null all cross interference for everyone?

    Joint zero-forcing across each cell's antennas needs at least as many
    antennas as total streams: ``M >= K * G``.
    """
    if G < 1 or M < 1 or K < 1:
        raise ValueError("G, M, K must be positive")
    return M >= K * G


@dataclass
class DecoderBank:
    """Per-cell effective receive matrices under a fixed phase vector.

    ``desired[i]`` is ``M x K`` (own-cell user signatures at base station
    ``i``); ``cross[i]`` is ``M x K*(G-1)`` (all other cells' users).
    """

    desired: list[np.ndarray]
    cross: list[np.ndarray]


def decoder_bank(
    realization: ChannelRealization, v: np.ndarray, config: SystemConfig
) -> DecoderBank:
    desired = []
    cross = []
    for i in range(config.G):
        own = np.empty((config.M, config.K), dtype=np.complex128)
        for k in range(config.K):
            own[:, k] = (
                cascade(realization.h_surface_bs[i], realization.h_user_surface[i, k]) @ v
                + realization.h_user_bs[i, i, k]
            )
        others = np.empty((config.M, config.K * (config.G - 1)), dtype=np.complex128)
        col = 0
        for g in range(config.G):
            if g == i:
                continue
            for k in range(config.K):
                others[:, col] = (
                    cascade(realization.h_surface_bs[i], realization.h_user_surface[g, k]) @ v
                    + realization.h_user_bs[i, g, k]
                )
                col += 1
        desired.append(own)
        cross.append(others)
    return DecoderBank(desired=desired, cross=cross)


@dataclass
class RankEvidenceReport:
    """Observed ranks of the decode matrices across random draws.

    A violation is any cell in any trial whose desired or cross matrix rank
    differs from the generic values min(M, K) and min(M, K*(G-1)).
    """

    expected_desired: int
    expected_cross: int
    trials: int
    violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0


def rank_evidence(
    config: SystemConfig,
    trials: int,
    rng: np.random.Generator,
    tol: float = DEFAULT_RANK_TOL,
) -> RankEvidenceReport:
    """Sample channels and phases, count rank drops in the decode matrices."""
    expected_desired = min(config.M, config.K)
    expected_cross = min(config.M, config.K * (config.G - 1))
    violations = 0
    for _ in range(trials):
        real = sample_channels(config, rng)
        v = np.exp(1j * rng.uniform(0, 2 * np.pi, config.N))
        bank = decoder_bank(real, v, config)
        for i in range(config.G):
            if numerical_rank(bank.desired[i], tol) != expected_desired:
                violations += 1
            elif config.G > 1 and numerical_rank(bank.cross[i], tol) != expected_cross:
                violations += 1
    return RankEvidenceReport(
        expected_desired=expected_desired,
        expected_cross=expected_cross,
        trials=trials,
        violations=violations,
    )
