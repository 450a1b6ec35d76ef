"""System configuration, channel sampling, and nulling-system assembly.

The network has ``G`` cells. Each cell has one base station with ``M``
antennas and ``K`` single-antenna users, and all cells share one passive
reflecting surface with ``N`` elements. Three channel families exist:

* surface -> base station ``i``: an ``N x M`` matrix (entry scale ``sigma1``),
* user ``(g, k)`` -> surface: an ``N`` vector (entry scale ``sigma2``),
* user ``(g, k)`` -> base station ``i``: an ``M`` vector (entry scale
  ``sigma3``, the direct path).

A phase vector ``v`` (one unit-modulus entry per surface element) nulls all
cross-stream interference iff ``A^H v + b = 0``, where each of the
``L = G*M*(G*M - 1)`` rows corresponds to one ordered (receiver, interferer)
stream pair. This module builds that system; solving it lives elsewhere.

All sampling is circularly-symmetric complex Gaussian. The strength ratio
``eta = sigma3 / (sigma1 * sigma2)`` measures direct paths against cascaded
ones and drives every feasibility threshold downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .numerics import sample_complex_gaussian


@dataclass(frozen=True)
class SystemConfig:
    """Static description of the network and its channel statistics.

    Exactly one of ``sigma3`` / ``eta`` may be given; the other is derived
    (``eta = sigma3 / (sigma1 * sigma2)``). Giving neither means no direct
    paths (``sigma3 = 0``).

    Default scales are dimensionless (unit cascades, unit noise). Physical
    units enter through the config-file aliases handled in
    :func:`risnull.harness.config_from_dict`.
    """

    G: int
    M: int
    K: int
    N: int
    sigma1: float = 1.0
    sigma2: float = 1.0
    sigma3: float | None = None
    eta: float | None = None
    power_per_user: float = 1.0
    noise_variance: float = 1.0
    bandwidth: float = 1.0
    master_seed: int = 0

    def __post_init__(self):
        for name in ("G", "M", "K", "N"):
            val = getattr(self, name)
            if not isinstance(val, (int, np.integer)) or val < 1:
                raise ValueError(f"{name} must be a positive integer, got {val!r}")
        for name in ("sigma1", "sigma2", "power_per_user", "bandwidth"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.noise_variance <= 0:
            raise ValueError("noise_variance must be positive")
        if self.sigma3 is not None and self.eta is not None:
            raise ValueError("give sigma3 or eta, not both")
        s4 = self.sigma1 * self.sigma2
        if self.sigma3 is None and self.eta is None:
            object.__setattr__(self, "sigma3", 0.0)
            object.__setattr__(self, "eta", 0.0)
        elif self.eta is not None:
            if self.eta < 0:
                raise ValueError("eta must be nonnegative")
            object.__setattr__(self, "sigma3", self.eta * s4)
        else:
            if self.sigma3 < 0:
                raise ValueError("sigma3 must be nonnegative")
            if s4 > 0:
                object.__setattr__(self, "eta", self.sigma3 / s4)
            elif self.sigma3 == 0:
                object.__setattr__(self, "eta", 0.0)
            else:
                raise ValueError("sigma3 > 0 with a zero cascaded scale leaves eta undefined")

    @property
    def sigma4(self) -> float:
        """Scale of one cascaded (user -> surface -> base station) coefficient."""
        return self.sigma1 * self.sigma2

    @property
    def streams(self) -> int:
        return self.G * self.M

    @property
    def L(self) -> int:
        """Number of interference equations: ordered pairs of distinct streams."""
        j = self.streams
        return j * (j - 1)

    def with_updates(self, **kw) -> "SystemConfig":
        """``dataclasses.replace`` that keeps the sigma3/eta exclusivity rule.

        Plain ``replace`` would carry both stored values and trip the
        exclusivity check; here the untouched one is re-derived.
        """
        if "eta" in kw and "sigma3" not in kw:
            kw["sigma3"] = None
        elif "sigma3" in kw and "eta" not in kw:
            kw["eta"] = None
        elif "sigma3" not in kw and "eta" not in kw:
            kw["sigma3"] = self.sigma3
            kw["eta"] = None
        return replace(self, **kw)


@dataclass
class ChannelRealization:
    """One draw of every channel in the network.

    Shapes: ``h_surface_bs`` is ``(G, N, M)``, ``h_user_surface`` is
    ``(G, K, N)``, ``h_user_bs`` is ``(G, G, K, M)`` indexed as
    ``[bs_cell, user_cell, user, antenna]``.

    The ``*_links`` fields carry per-link scales when they vary (geometric
    placements); they stay ``None`` for flat statistics. ``eta_effective``
    is the measured mean direct-to-cascade ratio for geometric draws.
    """

    h_surface_bs: np.ndarray
    h_user_surface: np.ndarray
    h_user_bs: np.ndarray
    sigma1_links: np.ndarray | None = None
    sigma2_links: np.ndarray | None = None
    sigma3_links: np.ndarray | None = None
    eta_effective: float | None = None
    user_positions: np.ndarray | None = None

    @property
    def G(self) -> int:
        return self.h_surface_bs.shape[0]

    @property
    def N(self) -> int:
        return self.h_surface_bs.shape[1]

    @property
    def M(self) -> int:
        return self.h_surface_bs.shape[2]

    @property
    def K(self) -> int:
        return self.h_user_surface.shape[1]


def sample_channels(config: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
    """Draw all channels with the flat scales from ``config``."""
    G, M, K, N = config.G, config.M, config.K, config.N
    h_surface_bs = np.stack(
        [sample_complex_gaussian(N, M, config.sigma1**2, rng) for _ in range(G)]
    )
    h_user_surface = np.stack(
        [sample_complex_gaussian(K, N, config.sigma2**2, rng) for _ in range(G)]
    )
    h_user_bs = np.stack(
        [
            np.stack([sample_complex_gaussian(K, M, config.sigma3**2, rng) for _ in range(G)])
            for _ in range(G)
        ]
    )
    return ChannelRealization(
        h_surface_bs=h_surface_bs,
        h_user_surface=h_user_surface,
        h_user_bs=h_user_bs,
    )


def cascade(h_surface_bs_i: np.ndarray, h_user_surface_gk: np.ndarray) -> np.ndarray:
    """Cascaded channel of one user through the surface into one base station.

    Returns the ``M x N`` matrix ``H_i^H diag(h)``: row ``k`` gives the
    coefficients that the surface phases see on receive antenna ``k``.
    """
    h_i = np.asarray(h_surface_bs_i)
    h = np.asarray(h_user_surface_gk)
    if h_i.ndim != 2 or h.ndim != 1 or h_i.shape[0] != h.shape[0]:
        raise ValueError(
            f"shape mismatch: surface-to-bs {h_i.shape} vs user-to-surface {h.shape}"
        )
    return h_i.conj().T * h[np.newaxis, :]


@dataclass
class PowerAllocation:
    """Transmit power per user, ``(G, K)``. A zero entry deactivates the user."""

    p: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p.ndim != 2:
            raise ValueError(f"power table must be (G, K), got shape {self.p.shape}")
        if np.any(self.p < 0):
            raise ValueError("powers must be nonnegative")

    def active_sets(self) -> list[np.ndarray]:
        """Sorted indices of powered users, one array per cell."""
        return [np.flatnonzero(self.p[g] > 0) for g in range(self.p.shape[0])]


def uniform_power(
    config: SystemConfig,
    selection: str = "first",
    rng: np.random.Generator | None = None,
) -> PowerAllocation:
    """Activate ``M`` users per cell at ``power_per_user``, the rest at zero.

    ``selection="first"`` takes users ``0..M-1``; ``selection="random"`` draws
    ``M`` without replacement (requires ``rng``).
    """
    if config.K < config.M:
        raise ValueError(
            f"need at least M={config.M} users per cell to fill all antennas, have K={config.K}"
        )
    p = np.zeros((config.G, config.K))
    for g in range(config.G):
        if selection == "first":
            chosen = np.arange(config.M)
        elif selection == "random":
            if rng is None:
                raise ValueError("random selection needs an rng")
            chosen = rng.choice(config.K, size=config.M, replace=False)
        else:
            raise ValueError(f"unknown selection {selection!r}")
        p[g, chosen] = config.power_per_user
    return PowerAllocation(p)


@dataclass
class NullingSystem:
    """The linear side of the interference-nulling feasibility problem.

    ``a_matrix`` is ``N x L`` (one column per ordered stream pair) and ``b``
    has length ``L``; a phase vector ``v`` nulls all interference iff
    ``a_matrix^H v + b = 0``. ``row_index`` records the
    (receiver cell, receiver user, interferer cell, interferer user) tuple
    behind each row; it is empty for surrogate draws. ``sigma3`` / ``sigma4``
    are the RMS per-entry scales of ``b`` and of the columns, kept so solvers
    can normalize residuals.
    """

    a_matrix: np.ndarray
    b: np.ndarray
    row_index: list[tuple[int, int, int, int]] = field(default_factory=list)
    sigma3: float = 0.0
    sigma4: float = 1.0

    def __post_init__(self):
        self.a_matrix = np.asarray(self.a_matrix, dtype=np.complex128)
        self.b = np.asarray(self.b, dtype=np.complex128)
        if self.a_matrix.ndim != 2 or self.b.ndim != 1:
            raise ValueError("a_matrix must be 2-d and b 1-d")
        if self.a_matrix.shape[1] != self.b.shape[0]:
            raise ValueError(
                f"a_matrix has {self.a_matrix.shape[1]} columns but b has {self.b.shape[0]} entries"
            )
        if self.row_index and len(self.row_index) != self.b.shape[0]:
            raise ValueError("row_index length must match b")

    @property
    def N(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def L(self) -> int:
        return self.a_matrix.shape[1]


def assemble_nulling_system(
    realization: ChannelRealization,
    powers: PowerAllocation,
    config: SystemConfig,
) -> NullingSystem:
    """Stack every cross-stream interference equation into one system.

    Rows run lexicographically over (receiver cell ``i``, receiver user ``k``,
    interferer cell ``g``, interferer user ``j``) with the same-stream pair
    ``(i, k) == (g, j)`` skipped. The receiver's antenna index is the user's
    position within its cell's active set. Requires exactly ``M`` active
    users per cell.
    """
    G, M, K, N = config.G, config.M, config.K, config.N
    if realization.h_surface_bs.shape != (G, N, M):
        raise ValueError(
            f"realization shape {realization.h_surface_bs.shape} does not match config (G,N,M)=({G},{N},{M})"
        )
    if realization.h_user_surface.shape != (G, K, N):
        raise ValueError("user-to-surface channels do not match config")
    if powers.p.shape != (G, K):
        raise ValueError("power table does not match config")
    active = powers.active_sets()
    for g, users in enumerate(active):
        if len(users) != M:
            raise ValueError(
                f"cell {g} has {len(users)} active users, need exactly M={M}"
            )

    per_link = realization.sigma1_links is not None
    L = G * M * (G * M - 1)
    a_matrix = np.empty((N, L), dtype=np.complex128)
    b = np.empty(L, dtype=np.complex128)
    row_index: list[tuple[int, int, int, int]] = []
    s3_sq = 0.0
    s4_sq = 0.0
    col = 0
    for i in range(G):
        for k_pos, k_user in enumerate(active[i]):
            for g in range(G):
                for j_user in active[g]:
                    if g == i and j_user == k_user:
                        continue
                    a_matrix[:, col] = (
                        realization.h_user_surface[g, j_user].conj()
                        * realization.h_surface_bs[i][:, k_pos]
                    )
                    b[col] = realization.h_user_bs[i, g, j_user, k_pos]
                    row_index.append((i, int(k_user), g, int(j_user)))
                    if per_link:
                        s4_sq += (
                            realization.sigma1_links[i]
                            * realization.sigma2_links[g, j_user]
                        ) ** 2
                        s3_sq += realization.sigma3_links[i, g, j_user] ** 2
                    col += 1
    assert col == L
    if per_link:
        sigma3 = float(np.sqrt(s3_sq / L))
        sigma4 = float(np.sqrt(s4_sq / L))
    else:
        sigma3, sigma4 = config.sigma3, config.sigma4
    return NullingSystem(a_matrix=a_matrix, b=b, row_index=row_index, sigma3=sigma3, sigma4=sigma4)


def surrogate_system(
    L: int,
    N: int,
    sigma3: float,
    sigma4: float,
    rng: np.random.Generator,
) -> NullingSystem:
    """Gaussian stand-in for an assembled system.

    Columns and offsets are drawn i.i.d. at the given scales, matching the
    marginal statistics of a real assembly but dropping the cross-row
    dependence. Useful for isolating solver behavior from channel structure.
    """
    if L < 0 or N < 1:
        raise ValueError(f"need L >= 0 and N >= 1, got L={L}, N={N}")
    a_matrix = sample_complex_gaussian(N, L, sigma4**2, rng)
    b = sample_complex_gaussian(L, 1, sigma3**2, rng)[:, 0]
    return NullingSystem(a_matrix=a_matrix, b=b, sigma3=sigma3, sigma4=sigma4)


@dataclass(frozen=True)
class GeometryScenario:
    """Physical layout for distance-based channel scales.

    Per-link variance is ``t0 * d^-alpha`` with ``alpha_reflect`` on both
    surface legs and ``alpha_direct`` on the direct user-to-BS path. Users
    drop uniformly in an axis-aligned box per cell at height ``user_z``.
    """

    ris_position: np.ndarray
    bs_positions: np.ndarray
    user_x_ranges: np.ndarray
    user_y_ranges: np.ndarray
    user_z: float
    t0: float = 1e-3
    alpha_reflect: float = 2.0
    alpha_direct: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "ris_position", np.asarray(self.ris_position, dtype=float))
        object.__setattr__(self, "bs_positions", np.asarray(self.bs_positions, dtype=float))
        object.__setattr__(self, "user_x_ranges", np.asarray(self.user_x_ranges, dtype=float))
        object.__setattr__(self, "user_y_ranges", np.asarray(self.user_y_ranges, dtype=float))
        if self.ris_position.shape != (3,):
            raise ValueError("ris_position must be a 3-vector")
        if self.bs_positions.ndim != 2 or self.bs_positions.shape[1] != 3:
            raise ValueError("bs_positions must be (G, 3)")
        g = self.bs_positions.shape[0]
        if self.user_x_ranges.shape != (g, 2) or self.user_y_ranges.shape != (g, 2):
            raise ValueError("user ranges must be (G, 2)")
        if self.t0 <= 0:
            raise ValueError("t0 must be positive")

    @property
    def G(self) -> int:
        return self.bs_positions.shape[0]

    @classmethod
    def two_cell_default(cls) -> "GeometryScenario":
        """Two neighboring cells sharing a surface at the origin.

        Base stations sit at (15, 15, 0) and (40, 15, 0) meters; users drop in
        [5, 25] x [-25, -5] and [30, 50] x [-25, -5] at height -20. Pathloss
        is -30 dB at unit distance, exponent 2 on reflected legs and 4 on the
        direct one. The mean direct-to-cascade ratio over placements is ~32
        (near cell ~15, far cell ~49).
        """
        return cls(
            ris_position=np.zeros(3),
            bs_positions=np.array([[15.0, 15.0, 0.0], [40.0, 15.0, 0.0]]),
            user_x_ranges=np.array([[5.0, 25.0], [30.0, 50.0]]),
            user_y_ranges=np.array([[-25.0, -5.0], [-25.0, -5.0]]),
            user_z=-20.0,
        )


def sample_user_positions(
    scenario: GeometryScenario,
    config: SystemConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Uniform user drops, shape ``(G, K, 3)``."""
    if scenario.G != config.G:
        raise ValueError(f"scenario has {scenario.G} cells, config has {config.G}")
    pos = np.empty((config.G, config.K, 3))
    for g in range(config.G):
        pos[g, :, 0] = rng.uniform(*scenario.user_x_ranges[g], size=config.K)
        pos[g, :, 1] = rng.uniform(*scenario.user_y_ranges[g], size=config.K)
        pos[g, :, 2] = scenario.user_z
    return pos


def link_scales(
    scenario: GeometryScenario, positions: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-link amplitude scales from distances.

    Returns ``(sigma1_links, sigma2_links, sigma3_links)`` with shapes
    ``(G,)``, ``(G, K)``, and ``(G, G, K)`` (the last indexed
    [bs_cell, user_cell, user]).
    """
    d_rb = np.linalg.norm(scenario.bs_positions - scenario.ris_position, axis=1)
    d_ur = np.linalg.norm(positions - scenario.ris_position, axis=2)
    # distance from every user to every BS: (bs_cell, user_cell, user)
    d_ub = np.linalg.norm(
        positions[np.newaxis, :, :, :] - scenario.bs_positions[:, np.newaxis, np.newaxis, :],
        axis=3,
    )
    sigma1 = np.sqrt(scenario.t0 * d_rb**-scenario.alpha_reflect)
    sigma2 = np.sqrt(scenario.t0 * d_ur**-scenario.alpha_reflect)
    sigma3 = np.sqrt(scenario.t0 * d_ub**-scenario.alpha_direct)
    return sigma1, sigma2, sigma3


def direct_to_cascade_ratios(
    scenario: GeometryScenario, positions: np.ndarray
) -> np.ndarray:
    """Per-user ratio of direct-path scale to own-cell cascade scale, ``(G, K)``."""
    sigma1, sigma2, sigma3 = link_scales(scenario, positions)
    own = np.arange(scenario.G)
    return sigma3[own, own] / (sigma1[:, np.newaxis] * sigma2)


def sample_geometric(
    scenario: GeometryScenario,
    config: SystemConfig,
    rng: np.random.Generator,
) -> ChannelRealization:
    """Draw channels with distance-dependent scales from one user placement.

    ``config.sigma1/2/3`` are ignored here; scales come from the layout. The
    realization records per-link scales and the measured mean
    direct-to-cascade ratio (``eta_effective``).
    """
    G, M, K, N = config.G, config.M, config.K, config.N
    positions = sample_user_positions(scenario, config, rng)
    sigma1, sigma2, sigma3 = link_scales(scenario, positions)

    h_surface_bs = np.stack(
        [sample_complex_gaussian(N, M, sigma1[i] ** 2, rng) for i in range(G)]
    )
    h_user_surface = np.empty((G, K, N), dtype=np.complex128)
    for g in range(G):
        for k in range(K):
            h_user_surface[g, k] = sample_complex_gaussian(1, N, sigma2[g, k] ** 2, rng)[0]
    h_user_bs = np.empty((G, G, K, M), dtype=np.complex128)
    for i in range(G):
        for g in range(G):
            for k in range(K):
                h_user_bs[i, g, k] = sample_complex_gaussian(1, M, sigma3[i, g, k] ** 2, rng)[0]

    eta_eff = float(np.mean(direct_to_cascade_ratios(scenario, positions)))
    return ChannelRealization(
        h_surface_bs=h_surface_bs,
        h_user_surface=h_user_surface,
        h_user_bs=h_user_bs,
        sigma1_links=sigma1,
        sigma2_links=sigma2,
        sigma3_links=sigma3,
        eta_effective=eta_eff,
        user_positions=positions,
    )
