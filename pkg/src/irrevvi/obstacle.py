"""Upper-obstacle problem ``min J(z) over z <= psi`` as a linear complementarity problem.

With ``Kc = K_sigma + c*M`` and ``b = M g`` the optimality system is, node by node,

    z <= psi,   lam := g - M^{-1} Kc z >= 0,   lam * (psi - z) = 0.

Note the orientation: the constraint is an *upper* bound and the elliptic
residual is bounded *above* by ``g``, so projected relaxation uses ``min``
where the textbook lower-obstacle solver uses ``max``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .mesh_ops import DiscreteOperators, SolverError, _check_field, pointwise_min
from .reports import Report

PSOR = "psor"
PDAS = "pdas"
BRUTEFORCE = "bruteforce"
BRUTEFORCE_MAX_N = 15


@dataclass
class ObstacleProblem:
    psi: np.ndarray
    g: np.ndarray
    ops: DiscreteOperators
    extra_mass: float = 0.0

    def __post_init__(self):
        self.psi = _check_field(self.ops, self.psi, "psi").copy()
        self.g = _check_field(self.ops, self.g, "g").copy()
        if not (np.all(np.isfinite(self.psi)) and np.all(np.isfinite(self.g))):
            raise ValueError("obstacle and forcing must be finite")
        if self.extra_mass < 0:
            raise ValueError("extra_mass must be non-negative")

    @property
    def matrix(self):
        return self.ops.operator(self.extra_mass)

    @property
    def rhs(self) -> np.ndarray:
        return self.ops.mass * self.g

    def residual(self, z: np.ndarray) -> np.ndarray:
        """Nodal ``-Lap z + sigma z + c z``."""
        return (self.matrix @ z) / self.ops.mass

    def multiplier(self, z: np.ndarray) -> np.ndarray:
        return self.g - self.residual(z)

    def energy(self, z: np.ndarray) -> float:
        return float(0.5 * z @ (self.matrix @ z) - self.rhs @ z)


@dataclass
class SolverConfig:
    method: str = PDAS
    omega: float = 1.5
    tol: float = 1e-10
    max_iter: int | None = None  # default max(100 * n, 10000)
    record_energy: bool = False


@dataclass
class ObstacleSolution:
    z: np.ndarray
    multiplier: np.ndarray
    iterations: int
    comp_residual: float
    method: str
    warm_start_clipped: bool = False
    fallback: bool = False
    energy_history: list[float] = field(default_factory=list)

    @property
    def active(self) -> np.ndarray:
        """Nodes with a multiplier above roundoff."""
        scale = max(1.0, float(np.max(np.abs(self.multiplier), initial=0.0)))
        return self.multiplier > 1e-9 * scale


def complementarity_residual(prob: ObstacleProblem, z: np.ndarray) -> float:
    """Natural LCP merit ``max |min(psi - z, lam)|`` combined with primal/dual violations."""
    z = _check_field(prob.ops, z, "z")
    gap = prob.psi - z
    lam = prob.multiplier(z)
    natural = np.max(np.abs(np.minimum(gap, lam)), initial=0.0)
    primal = np.max(-gap, initial=0.0)
    dual = np.max(-lam, initial=0.0)
    return float(max(natural, primal, dual))


def _initial_guess(prob: ObstacleProblem, warm_start):
    if warm_start is None:
        return np.minimum(np.zeros(prob.ops.n), prob.psi), False, False
    z = _check_field(prob.ops, warm_start, "warm_start").copy()
    clipped = bool(np.any(z > prob.psi))
    if clipped:
        z = np.minimum(z, prob.psi)
    return z, clipped, True


def _psor(prob: ObstacleProblem, z: np.ndarray, omega: float, tol: float, max_iter: int,
          record_energy: bool):
    mat = prob.matrix
    indptr = mat.indptr.tolist()
    indices = mat.indices.tolist()
    data = mat.data.tolist()
    diag = mat.diagonal().tolist()
    b = prob.rhs.tolist()
    psi = prob.psi.tolist()
    zl = z.tolist()
    n = len(zl)
    history = [prob.energy(z)] if record_energy else []
    res = complementarity_residual(prob, z)
    sweeps = 0
    while res > tol:
        if sweeps >= max_iter:
            raise SolverError(f"PSOR: merit residual {res:.3e} > {tol:.1e} after {sweeps} sweeps",
                              residual=res, iterations=sweeps)
        for i in range(n):
            s = b[i]
            for p in range(indptr[i], indptr[i + 1]):
                s -= data[p] * zl[indices[p]]
            zi = zl[i] + omega * s / diag[i]
            zl[i] = zi if zi < psi[i] else psi[i]
        sweeps += 1
        z = np.array(zl)
        res = complementarity_residual(prob, z)
        if record_energy:
            history.append(prob.energy(z))
    return z, sweeps, res, history


def _reduced_solve(prob: ObstacleProblem, active: np.ndarray) -> np.ndarray:
    z = prob.psi.copy()
    inactive = ~active
    if inactive.any():
        mat = prob.matrix
        K_II = mat[inactive][:, inactive].tocsc()
        rhs = prob.rhs[inactive]
        if active.any():
            rhs = rhs - mat[inactive][:, active] @ prob.psi[active]
        sol = spla.spsolve(K_II, rhs)
        z[inactive] = np.atleast_1d(sol)
    return z


def _pdas(prob: ObstacleProblem, z0: np.ndarray, have_warm: bool, tol: float, max_iter: int):
    """Primal-dual active set iteration; returns None on cycling so the caller can fall back."""
    ops = prob.ops
    mat = prob.matrix
    penalty = mat.diagonal() / ops.mass
    # roundoff scale of lam at each node; ties within it count as active
    slack = 1e3 * np.finfo(float).eps * (abs(mat) @ np.abs(prob.psi) / ops.mass + np.abs(prob.g))
    active = (z0 == prob.psi) if have_warm else np.zeros(ops.n, dtype=bool)
    seen = {active.tobytes()}
    for it in range(1, max_iter + 1):
        z = _reduced_solve(prob, active)
        lam = np.zeros(ops.n)
        lam[active] = prob.multiplier(z)[active]
        new_active = lam + penalty * (z - prob.psi) >= -slack
        if np.array_equal(new_active, active):
            return z, it
        key = new_active.tobytes()
        if key in seen:
            return None, it
        seen.add(key)
        active = new_active
    raise SolverError(f"PDAS: no converged active set after {max_iter} iterations",
                      residual=complementarity_residual(prob, z), iterations=max_iter)


def solve(prob: ObstacleProblem, cfg: SolverConfig | None = None,
          warm_start: np.ndarray | None = None) -> ObstacleSolution:
    cfg = cfg or SolverConfig()
    n = prob.ops.n
    max_iter = cfg.max_iter if cfg.max_iter is not None else max(100 * n, 10000)
    z, clipped, have_warm = _initial_guess(prob, warm_start)
    method = cfg.method.lower()
    fallback = False
    history: list[float] = []

    if method == PDAS:
        zp, iters = _pdas(prob, z, have_warm, cfg.tol, max_iter)
        if zp is None:
            # cannot happen for M-matrices; kept as a guard
            fallback = True
            zp, sweeps, _, history = _psor(prob, z, 1.0, cfg.tol, max_iter, cfg.record_energy)
            iters += sweeps
        z = zp
    elif method == PSOR:
        if not 0.0 < cfg.omega < 2.0:
            raise ValueError(f"PSOR needs omega in (0, 2), got {cfg.omega}")
        z, iters, _, history = _psor(prob, z, cfg.omega, cfg.tol, max_iter, cfg.record_energy)
    elif method == BRUTEFORCE:
        return solve_bruteforce(prob)
    else:
        raise ValueError(f"unknown method {cfg.method!r}")

    res = complementarity_residual(prob, z)
    if res > cfg.tol:
        raise SolverError(f"{method}: merit residual {res:.3e} exceeds tol {cfg.tol:.1e}",
                          residual=res, iterations=iters)
    return ObstacleSolution(z, prob.multiplier(z), iters, res, method, clipped, fallback, history)


def solve_bruteforce(prob: ObstacleProblem) -> ObstacleSolution:
    """Enumerate all 2^n active sets; independent reference for small problems."""
    n = prob.ops.n
    if n > BRUTEFORCE_MAX_N:
        raise ValueError(f"bruteforce limited to n <= {BRUTEFORCE_MAX_N}, got {n}")
    K = prob.matrix.toarray()
    b = prob.rhs
    psi = prob.psi
    mass = prob.ops.mass
    tol_p = 1e-11 * (1.0 + np.max(np.abs(psi)))
    tol_d = 1e-9 * (1.0 + np.max(np.abs(prob.g)))
    for code in range(2 ** n):
        active = np.array([(code >> i) & 1 for i in range(n)], dtype=bool)
        inactive = ~active
        z = psi.copy()
        if inactive.any():
            rhs = b[inactive] - K[np.ix_(inactive, active)] @ psi[active]
            z[inactive] = np.linalg.solve(K[np.ix_(inactive, inactive)], rhs)
            if np.any(z[inactive] > psi[inactive] + tol_p):
                continue
        lam = (b - K @ z) / mass
        if np.any(lam[active] < -tol_d):
            continue
        return ObstacleSolution(z, prob.multiplier(z), code + 1,
                                complementarity_residual(prob, z), BRUTEFORCE)
    raise RuntimeError("no active set satisfies the LCP; the assembled operator is not an M-matrix")


def check_lewy_stampacchia(prob: ObstacleProblem, sol: ObstacleSolution | np.ndarray,
                           tol: float = 1e-9) -> Report:
    """``g ^ rho(psi) <= rho(z) <= g`` node by node."""
    z = sol.z if isinstance(sol, ObstacleSolution) else np.asarray(sol, dtype=float)
    rho_z = prob.residual(z)
    lower = pointwise_min(prob.g, prob.residual(prob.psi))
    lower_margin = float(np.min(rho_z - lower))
    upper_margin = float(np.min(prob.g - rho_z))
    rep = Report("lewy_stampacchia")
    rep.add("lower_bound", lower_margin >= -tol, lower_margin, -tol)
    rep.add("upper_bound", upper_margin >= -tol, upper_margin, -tol)
    return rep


def check_comparison(p1: ObstacleProblem, p2: ObstacleProblem, cfg: SolverConfig | None = None,
                     tol: float = 1e-10) -> Report:
    if p1.ops is not p2.ops or p1.extra_mass != p2.extra_mass:
        raise ValueError("comparison needs both problems on the same operators")
    if np.any(p1.psi > p2.psi) or np.any(p1.g > p2.g):
        raise ValueError("comparison hypothesis violated: need psi1 <= psi2 and g1 <= g2")
    s1 = solve(p1, cfg)
    s2 = solve(p2, cfg)
    margin = float(np.min(s2.z - s1.z))
    rep = Report("comparison")
    rep.add("ordered", margin >= -tol, margin, -tol)
    rep.data.update(z1=s1.z, z2=s2.z)
    return rep
