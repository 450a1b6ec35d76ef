"""Sum-rate evaluation and maximization over the phase torus.

Rates follow the usual treat-interference-as-noise form: stream ``r`` decodes
with SINR ``p_r |c_rr|^2 / (sum_{s != r} p_s |c_rs|^2 + noise)`` where
``c_rs = a_rs^H v + b_rs`` is the effective coefficient from source ``s``
into receiver ``r`` under phase vector ``v``.

The maximizer is conjugate gradient on the product-of-circles manifold:
project the Euclidean gradient onto the tangent space, take Polak-Ribiere
(nonnegative variant) directions with the same projection used as vector
transport, retract by elementwise normalization, and pick steps by Armijo
backtracking. The Euclidean gradient uses the 2*d/d(conj v) convention, so
the directional derivative along a tangent ``u`` is exactly
``re(u^H egrad)``; ``DIRECTIONAL_DERIVATIVE_FACTOR`` records that unit
calibration and a test pins it.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import ChannelRealization, PowerAllocation, SystemConfig
from .nulling import project_torus

LN2 = float(np.log(2.0))

# Measured by the finite-difference calibration test: re(u^H egrad) equals the
# directional derivative with no extra scaling under this gradient convention.
DIRECTIONAL_DERIVATIVE_FACTOR = 1.0


@dataclass
class RateInputs:
    """Effective-coefficient description of all streams.

    ``a`` has shape (R, S, N), ``b`` (R, S), ``powers`` (S,), with R == S:
    every active stream is both a receiver (row) and a source (column), in
    lexicographic (cell, user) order, and the desired link of stream ``r``
    is the diagonal entry (r, r).
    """

    a: np.ndarray
    b: np.ndarray
    powers: np.ndarray
    noise_variance: float
    streams: list[tuple[int, int]]
    n_cells: int

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.complex128)
        self.b = np.asarray(self.b, dtype=np.complex128)
        self.powers = np.asarray(self.powers, dtype=float)
        r = self.a.shape[0]
        if self.a.ndim != 3 or self.a.shape[1] != r:
            raise ValueError(f"a must be (R, R, N), got {self.a.shape}")
        if self.b.shape != (r, r):
            raise ValueError(f"b must be (R, R), got {self.b.shape}")
        if self.powers.shape != (r,):
            raise ValueError("powers must have one entry per stream")
        if np.any(self.powers < 0):
            raise ValueError("powers must be nonnegative")
        if self.noise_variance <= 0:
            raise ValueError("noise_variance must be positive")
        if len(self.streams) != r:
            raise ValueError("streams must label every row")

    @property
    def R(self) -> int:
        return self.a.shape[0]

    @property
    def N(self) -> int:
        return self.a.shape[2]

    def coefficients(self, v: np.ndarray) -> np.ndarray:
        """Effective coefficient matrix ``c_rs = a_rs^H v + b_rs``."""
        return np.einsum("rsn,n->rs", self.a.conj(), v) + self.b

    def with_powers(self, powers: np.ndarray) -> "RateInputs":
        return dataclasses.replace(self, powers=np.asarray(powers, dtype=float))


def rate_inputs_from_realization(
    realization: ChannelRealization,
    powers: PowerAllocation,
    config: SystemConfig,
) -> RateInputs:
    """Collect per-stream coefficients in the same order the nulling rows use."""
    active = powers.active_sets()
    for g, users in enumerate(active):
        if len(users) != config.M:
            raise ValueError(f"cell {g} has {len(users)} active users, need M={config.M}")
    streams = [
        (i, int(k)) for i in range(config.G) for k in active[i]
    ]
    r_count = len(streams)
    a = np.empty((r_count, r_count, config.N), dtype=np.complex128)
    b = np.empty((r_count, r_count), dtype=np.complex128)
    p = np.empty(r_count)
    positions = {
        (i, int(k)): pos for i in range(config.G) for pos, k in enumerate(active[i])
    }
    for r, (i, k_user) in enumerate(streams):
        k_pos = positions[(i, k_user)]
        for s, (g, j_user) in enumerate(streams):
            a[r, s] = (
                realization.h_user_surface[g, j_user].conj()
                * realization.h_surface_bs[i][:, k_pos]
            )
            b[r, s] = realization.h_user_bs[i, g, j_user, k_pos]
    for s, (g, j_user) in enumerate(streams):
        p[s] = powers.p[g, j_user]
    return RateInputs(
        a=a, b=b, powers=p, noise_variance=config.noise_variance,
        streams=streams, n_cells=config.G,
    )


@dataclass
class RateReport:
    """Per-stream rates (bits/s/Hz) and their sum."""

    rates: np.ndarray
    streams: list[tuple[int, int]]
    total: float

    def per_cell(self, n_cells: int) -> np.ndarray:
        out = np.zeros(n_cells)
        for rate, (cell, _) in zip(self.rates, self.streams):
            out[cell] += rate
        return out


def _signal_powers(inputs: RateInputs, v: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    c = inputs.coefficients(v)
    p_rx = np.abs(c) ** 2 * inputs.powers[np.newaxis, :]
    desired = np.diagonal(p_rx).copy()
    total = p_rx.sum(axis=1) + inputs.noise_variance
    return c, desired, total


def sum_rate(inputs: RateInputs, v: np.ndarray) -> RateReport:
    """Achievable rates under phases ``v``, interference treated as noise."""
    _, desired, total = _signal_powers(inputs, v)
    rates = np.log2(total) - np.log2(total - desired)
    return RateReport(rates=rates, streams=inputs.streams, total=float(rates.sum()))


def euclidean_gradient(inputs: RateInputs, v: np.ndarray) -> np.ndarray:
    """Gradient of the sum rate in the 2*d/d(conj v) convention."""
    c, desired, total = _signal_powers(inputs, v)
    t = inputs.powers[np.newaxis, :] * c
    numer_tot = np.einsum("rs,rsn->rn", t, inputs.a)
    idx = np.arange(inputs.R)
    numer_int = numer_tot - np.diagonal(t)[:, np.newaxis] * inputs.a[idx, idx]
    denom_int = total - desired
    grad = (numer_tot / total[:, np.newaxis]) - (numer_int / denom_int[:, np.newaxis])
    return (2.0 / LN2) * grad.sum(axis=0)


def riemannian_gradient(egrad: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Project a Euclidean gradient onto the torus tangent space at ``v``."""
    return egrad - np.real(egrad * v.conj()) * v


def transport(direction: np.ndarray, v_new: np.ndarray) -> np.ndarray:
    """Move a tangent vector to the tangent space at ``v_new`` (projection)."""
    return direction - np.real(direction * v_new.conj()) * v_new


def retract(v: np.ndarray, step: float, direction: np.ndarray) -> np.ndarray:
    """Step along ``direction`` and renormalize back onto the torus."""
    return project_torus(v + step * direction)


@dataclass(frozen=True)
class AscentOptions:
    """Stopping and line-search parameters for the torus ascent."""

    rel_tol: float = 1e-3
    max_iters: int = 500
    armijo_initial: float = 1.0
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4
    armijo_max_backtracks: int = 30
    grad_tol: float = 1e-12

    def __post_init__(self):
        if self.rel_tol <= 0 or self.max_iters < 1:
            raise ValueError("rel_tol must be > 0 and max_iters >= 1")
        if not (0 < self.armijo_shrink < 1) or self.armijo_initial <= 0:
            raise ValueError("bad line-search parameters")


@dataclass
class AscentResult:
    v: np.ndarray
    value: float
    iterations: int
    value_trace: np.ndarray
    converged: bool
    grad_norm: float


def _inner(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.real(np.vdot(x, y)))


def maximize_on_torus(
    value_fn: Callable[[np.ndarray], float],
    egrad_fn: Callable[[np.ndarray], np.ndarray],
    v0: np.ndarray,
    opts: AscentOptions | None = None,
) -> AscentResult:
    """Conjugate-gradient ascent of ``value_fn`` over unit-modulus vectors.

    The trace of objective values is non-decreasing: a step is only taken
    when it passes the Armijo sufficient-increase test. Stops on relative
    objective stall, vanishing projected gradient, a failed line search, or
    the iteration cap.
    """
    opts = opts or AscentOptions()
    v = project_torus(np.asarray(v0, dtype=np.complex128))
    w = float(value_fn(v))
    rgrad = riemannian_gradient(np.asarray(egrad_fn(v)), v)
    direction = rgrad.copy()
    trace = [w]
    converged = False
    iterations = 0

    for _ in range(opts.max_iters):
        gnorm_sq = _inner(rgrad, rgrad)
        if np.sqrt(gnorm_sq) <= opts.grad_tol:
            converged = True
            break
        iterations += 1
        slope = _inner(rgrad, direction)
        if slope <= 0:
            # direction has gone uphill-less; fall back to steepest ascent
            direction = rgrad
            slope = gnorm_sq
        step = opts.armijo_initial
        accepted = False
        for _ in range(opts.armijo_max_backtracks):
            v_trial = retract(v, step, direction)
            w_trial = float(value_fn(v_trial))
            if w_trial >= w + opts.armijo_slope * step * slope:
                accepted = True
                break
            step *= opts.armijo_shrink
        if not accepted:
            # no productive step at any scale: numerically stationary
            converged = True
            break
        rgrad_new = riemannian_gradient(np.asarray(egrad_fn(v_trial)), v_trial)
        beta = max(
            0.0,
            _inner(rgrad_new, rgrad_new - transport(rgrad, v_trial)) / gnorm_sq,
        )
        direction = rgrad_new + beta * transport(direction, v_trial)
        w_prev, v, w, rgrad = w, v_trial, float(w_trial), rgrad_new
        trace.append(w)
        if abs(w - w_prev) <= opts.rel_tol * max(abs(w_prev), 1e-12):
            converged = True
            break

    return AscentResult(
        v=v,
        value=w,
        iterations=iterations,
        value_trace=np.asarray(trace),
        converged=converged,
        grad_norm=float(np.linalg.norm(rgrad)),
    )


def rcg_maximize(
    inputs: RateInputs,
    v0: np.ndarray,
    opts: AscentOptions | None = None,
) -> AscentResult:
    """Maximize the sum rate over phases, starting from ``v0``."""
    return maximize_on_torus(
        lambda v: sum_rate(inputs, v).total,
        lambda v: euclidean_gradient(inputs, v),
        v0,
        opts,
    )


@dataclass
class DofEstimate:
    """Finite-power slope estimate of degrees of freedom.

    ``low_confidence`` is set when the power grid cannot separate the
    high-power slope (levels too close, or the lower level leaves some
    stream outside the high-SNR regime).
    """

    per_cell: np.ndarray
    total: float
    low_confidence: bool
    power_grid: tuple[float, float]


def estimate_dof(
    inputs: RateInputs,
    v: np.ndarray,
    power_grid: tuple[float, float] | None = None,
) -> DofEstimate:
    """Per-cell DoF from rate growth between two transmit-power levels.

    Every active stream's power is set to each grid level in turn; the DoF of
    a stream is its rate increase divided by the SNR increase in bits
    (``log2(P2/P1)``, since the desired gain is power-independent).
    """
    if power_grid is None:
        power_grid = (1e3 * inputs.noise_variance, 1e6 * inputs.noise_variance)
    p1, p2 = power_grid
    if not (0 < p1 < p2):
        raise ValueError(f"power grid must satisfy 0 < P1 < P2, got {power_grid}")
    active = inputs.powers > 0
    denom_bits = np.log2(p2 / p1)

    rates = []
    for level in (p1, p2):
        scaled = np.where(active, level, 0.0)
        rates.append(sum_rate(inputs.with_powers(scaled), v).rates)
    dof_per_stream = (rates[1] - rates[0]) / denom_bits

    c = inputs.coefficients(v)
    gains = np.abs(np.diagonal(c)) ** 2
    snr_low = gains * p1 / inputs.noise_variance
    shaky = bool(denom_bits < 1.0) or bool(
        np.any(active & (gains > 0) & (snr_low < 10.0))
    )

    per_cell = np.zeros(inputs.n_cells)
    for d, (cell, _) in zip(dof_per_stream, inputs.streams):
        per_cell[cell] += d
    return DofEstimate(
        per_cell=per_cell,
        total=float(per_cell.sum()),
        low_confidence=shaky,
        power_grid=(float(p1), float(p2)),
    )
