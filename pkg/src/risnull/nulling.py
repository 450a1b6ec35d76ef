"""Phase-vector search by alternating projection.

The feasible phase vectors form the intersection of two sets in C^N: the
affine solution set of ``a_matrix^H v + b = 0`` and the torus of unit-modulus
vectors. The solver alternates exact projections onto the two sets. Distances
to the affine set are non-increasing along the iteration, but the scheme can
stall at a local geometry, so it restarts from fresh random phases a few
times before giving up.

Residuals are reported both raw and normalized by the expected magnitude of
``a_matrix^H v + b`` at a random phase vector, ``sigma4*sqrt(N*L) +
sigma3*sqrt(L)``, so that feasibility calls are scale-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import NullingSystem
from .numerics import DEFAULT_RANK_TOL


def project_torus(v: np.ndarray) -> np.ndarray:
    """Nearest unit-modulus vector: normalize each entry, zeros map to 1."""
    v = np.asarray(v, dtype=np.complex128)
    mag = np.abs(v)
    out = np.ones_like(v)
    nz = mag > 0
    out[nz] = v[nz] / mag[nz]
    return out


class AffineProjector:
    """Exact orthogonal projector onto ``{v : a_matrix^H v + b = 0}``.

    Factors ``a_matrix^H`` once (thin SVD) and reuses it for every projection;
    no inverse is ever formed. With rank-deficient systems the projector
    targets the least-squares solution set instead and ``rank_deficient``
    is set so callers can interpret residuals accordingly.
    """

    def __init__(self, system: NullingSystem, tol: float = DEFAULT_RANK_TOL):
        self.system = system
        m = system.a_matrix.conj().T  # L x N
        if system.L == 0:
            self.rank = 0
            self.rank_deficient = False
            self._u = self._vh = self._s = None
            return
        u, s, vh = np.linalg.svd(m, full_matrices=False)
        cutoff = tol * s[0] if s[0] > 0 else np.inf
        self.rank = int(np.count_nonzero(s > cutoff))
        self.rank_deficient = self.rank < min(m.shape)
        self._u = u[:, : self.rank]
        self._s = s[: self.rank]
        self._vh = vh[: self.rank]

    def residual_vector(self, v: np.ndarray) -> np.ndarray:
        if self.system.L == 0:
            return np.zeros(0, dtype=np.complex128)
        return self.system.a_matrix.conj().T @ v + self.system.b

    def apply_pinv(self, r: np.ndarray) -> np.ndarray:
        """Minimum-norm preimage of ``r`` under ``a_matrix^H``."""
        if self.rank == 0:
            return np.zeros(self.system.N, dtype=np.complex128)
        return self._vh.conj().T @ ((self._u.conj().T @ r) / self._s)

    def project(self, v: np.ndarray, r: np.ndarray | None = None) -> np.ndarray:
        """Project ``v`` onto the solution set; ``r`` may pass a precomputed residual."""
        if r is None:
            r = self.residual_vector(v)
        return v - self.apply_pinv(r)


def project_affine(v: np.ndarray, system: NullingSystem) -> np.ndarray:
    """One-shot affine projection (builds a throwaway factorization)."""
    return AffineProjector(system).project(v)


def residual_scale(system: NullingSystem) -> float:
    """Expected residual magnitude at a random phase vector; 1.0 if degenerate."""
    scale = system.sigma4 * np.sqrt(system.N * system.L) + system.sigma3 * np.sqrt(system.L)
    return float(scale) if scale > 0 else 1.0


def residual(system: NullingSystem, v: np.ndarray) -> float:
    """Euclidean norm of ``a_matrix^H v + b``."""
    if system.L == 0:
        return 0.0
    return float(np.linalg.norm(system.a_matrix.conj().T @ v + system.b))


@dataclass(frozen=True)
class ApOptions:
    """Stopping rules for the alternating-projection solver."""

    eps_feas: float = 1e-5
    max_iters: int = 2000
    restarts: int = 3

    def __post_init__(self):
        if self.eps_feas <= 0 or self.max_iters < 1 or self.restarts < 1:
            raise ValueError("eps_feas must be > 0, max_iters and restarts >= 1")


@dataclass
class SolveOutcome:
    """Result of one solve: best phase vector found and how it was judged.

    ``feasible`` is exactly ``normalized_residual <= eps_feas`` for the
    options used. ``iterations`` counts projection rounds in the returned
    restart; ``distance_trace`` holds the per-round distances to the affine
    set (non-increasing by construction).
    """

    v: np.ndarray
    residual: float
    normalized_residual: float
    iterations: int
    feasible: bool
    rank_deficient: bool = False
    restarts_used: int = 1
    distance_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))


def random_phases(n: int, rng: np.random.Generator) -> np.ndarray:
    return np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, n))


def alternating_projection(
    system: NullingSystem,
    rng: np.random.Generator,
    opts: ApOptions | None = None,
) -> SolveOutcome:
    """Search for a unit-modulus solution of ``a_matrix^H v + b = 0``.

    Starts from random phases and alternates affine and torus projections
    until the normalized residual drops below ``eps_feas`` or the iteration
    budget runs out; then restarts. Returns the best restart's outcome.
    """
    opts = opts or ApOptions()
    projector = AffineProjector(system)
    scale = residual_scale(system)

    if system.L == 0:
        v = random_phases(system.N, rng)
        return SolveOutcome(
            v=v, residual=0.0, normalized_residual=0.0, iterations=0, feasible=True
        )

    best: SolveOutcome | None = None
    for attempt in range(opts.restarts):
        v = random_phases(system.N, rng)
        dists: list[float] = []
        nr = float(np.linalg.norm(projector.residual_vector(v))) / scale
        iters = 0
        while nr > opts.eps_feas and iters < opts.max_iters:
            v_affine = projector.project(v)
            dists.append(float(np.linalg.norm(v - v_affine)))
            v = project_torus(v_affine)
            nr = float(np.linalg.norm(projector.residual_vector(v))) / scale
            iters += 1
        outcome = SolveOutcome(
            v=v,
            residual=nr * scale,
            normalized_residual=nr,
            iterations=iters,
            feasible=nr <= opts.eps_feas,
            rank_deficient=projector.rank_deficient,
            restarts_used=attempt + 1,
            distance_trace=np.asarray(dists),
        )
        if outcome.feasible:
            return outcome
        if best is None or outcome.normalized_residual < best.normalized_residual:
            best = outcome
    return best
