"""Minimum-norm wire tension distribution.

Solves, each control tick,

    minimize ||f||^2   subject to   tau_ref = -G(q)^T f,   f >= f_min

with an active-set iteration over the 6 bound constraints: the equality-
constrained least-norm subproblem with bound-active wires clamped to f_min
is solved through its KKT system; violated bounds are added, bounds with
negative multipliers are dropped, and the loop terminates when primal and
dual feasible. With the reference anchor layout the feasible set is never
empty inside the admissible joint box (the null space of G^T contains a
strictly positive tension vector), so the relaxed fallback only triggers
for out-of-envelope geometry; it then minimizes the torque residual first
and picks the least-norm tension on the residual-optimal set, flagging the
solution as degraded.
"""

from dataclasses import dataclass
import numpy as np
from scipy.optimize import lsq_linear

from .wires import WireGeometry, reference_geometry

DEFAULT_TENSION_FLOOR = 8.0
# hardware limit of the wire modules; logged when exceeded, never enforced
MAX_TENSION = 230.0

_PRIMAL_TOL = 1e-10
_DUAL_TOL = 1e-9
_RESIDUAL_TOL = 1e-9


class RankDeficient(ValueError):
    """G(q) lost rank: joint configuration outside the admissible box."""


@dataclass
class TensionSolution:
    f_ref: np.ndarray
    residual_torque: np.ndarray
    degraded: bool
    active_set: frozenset
    iterations: int
    used_enumeration: bool = False

    @property
    def over_tension(self):
        return bool(np.any(self.f_ref > MAX_TENSION))


def _kkt_candidate(G, tau, f_min, active):
    """Least-norm f with f[active] clamped, equality enforced on the rest.

    Returns (f, lam, consistent). lam is the min-norm equality multiplier;
    consistent is False when the clamped system cannot satisfy the torque
    equality. The min-norm multiplier matters: with fewer than 3 free wires
    S is singular and a plain solve produces garbage duals.
    """
    n = G.shape[0]
    free = [i for i in range(n) if i not in active]
    act = [i for i in range(n) if i in active]
    f = np.full(n, f_min, dtype=float)
    rhs = tau + (G[act].T @ f[act] if act else 0.0)
    scale = max(1.0, float(np.abs(rhs).max()))
    if not free:
        return f, np.zeros(3), bool(np.max(np.abs(rhs)) < 1e-8 * scale)
    Gf = G[free]
    S = Gf.T @ Gf
    lam = None
    if len(free) >= 3:
        try:
            lam = np.linalg.solve(S, 2.0 * rhs)
            if np.max(np.abs(S @ lam - 2.0 * rhs)) > 1e-9 * scale:
                lam = None
        except np.linalg.LinAlgError:
            lam = None
    if lam is None:
        lam, *_ = np.linalg.lstsq(S, 2.0 * rhs, rcond=None)
        if np.max(np.abs(S @ lam - 2.0 * rhs)) > 1e-8 * scale:
            return f, lam, False
    f[free] = -Gf @ lam / 2.0
    return f, lam, True


def _enumerate_exact(G, tau, f_min):
    """Exact solve by scanning all bound-active subsets (2^n, n = 6)."""
    n = G.shape[0]
    best_f, best_obj, best_active = None, np.inf, frozenset()
    for mask in range(1 << n):
        active = frozenset(i for i in range(n) if mask & (1 << i))
        f, _, consistent = _kkt_candidate(G, tau, f_min, active)
        if not consistent:
            continue
        if np.any(f < f_min - 1e-9):
            continue
        if np.max(np.abs(tau + G.T @ f)) > 1e-7 * max(1.0, np.abs(tau).max()):
            continue
        obj = f @ f
        if obj < best_obj - 1e-12:
            best_obj, best_f, best_active = obj, f, active
    return best_f, best_active


def solve_min_norm_tensions(G, tau, f_min, warm_start=None, max_iter=64):
    """Active-set solve; returns (f, active_set, iterations, used_enumeration)
    or (None, ...) when no feasible tension vector exists."""
    G = np.asarray(G, dtype=float)
    tau = np.asarray(tau, dtype=float)
    n = G.shape[0]
    active = set(warm_start) if warm_start is not None else set()
    visited = set()
    bland = False  # switch to Bland's anti-cycling rule on a repeated set
    it = 0

    while it < max_iter:
        it += 1
        key = frozenset(active)
        if key in visited:
            if bland:
                break  # still cycling; settle exactly below
            bland = True
            visited.clear()
            active = set()
            continue
        visited.add(key)
        f, lam, consistent = _kkt_candidate(G, tau, f_min, active)
        if not consistent:
            # clamped system over-constrained; retry cold, then enumerate
            if active:
                active = set()
                continue
            break
        free_mask = np.ones(n, dtype=bool)
        for i in active:
            free_mask[i] = False
        viol = np.where(free_mask & (f < f_min - _PRIMAL_TOL))[0]
        if viol.size:
            active.add(int(viol[0] if bland else viol[np.argmin(f[viol])]))
            continue
        if active:
            order = sorted(active)
            mu = 2.0 * f_min + G[order] @ lam
            neg = np.where(mu < -_DUAL_TOL)[0]
            if neg.size:
                active.remove(order[int(neg[0] if bland else np.argmin(mu))])
                continue
        f = np.maximum(f, f_min)  # exact bound feasibility
        return f, frozenset(active), it, False

    f, active = _enumerate_exact(G, tau, f_min)
    if f is None:
        return None, frozenset(), max_iter, True
    return np.maximum(f, f_min), active, max_iter, True


def _relaxed_solution(G, tau, f_min):
    """Two-stage fallback: min ||tau + G^T f|| first, then min ||f|| on the
    residual-optimal set."""
    res = lsq_linear(G.T, -tau, bounds=(f_min, np.inf))
    achieved = G.T @ res.x
    f, active, iters, used_enum = solve_min_norm_tensions(G, -achieved, f_min)
    if f is None:  # pathological geometry; return the stage-1 point
        f, active, used_enum = np.maximum(res.x, f_min), frozenset(), True
        iters = 0
    return f, active, iters, used_enum


def distribute_tensions(q, tau_ref, f_min=DEFAULT_TENSION_FLOOR,
                        geometry: WireGeometry | None = None,
                        warm_start=None) -> TensionSolution:
    """Minimum-internal-force tension vector realizing tau_ref at joint q."""
    if f_min < 0.0:
        raise ValueError("tension floor must be non-negative")
    geometry = geometry or reference_geometry()
    tau_ref = np.asarray(tau_ref, dtype=float)
    G = geometry.muscle_jacobian(q)
    sv = np.linalg.svd(G, compute_uv=False)
    if sv[2] < 1e-9:
        raise RankDeficient(f"rank(G) < 3 at q={np.asarray(q)!r}")

    f, active, iters, used_enum = solve_min_norm_tensions(
        G, tau_ref, f_min, warm_start=warm_start)
    if f is not None:
        residual = tau_ref + G.T @ f
        if np.max(np.abs(residual)) < _RESIDUAL_TOL * max(1.0, np.abs(tau_ref).max()):
            return TensionSolution(f, residual, False, active, iters, used_enum)

    f, active, iters, used_enum = _relaxed_solution(G, tau_ref, f_min)
    return TensionSolution(f, tau_ref + G.T @ f, True, active, iters, used_enum)


def feasible_wrench_check(q, tau, f_min=DEFAULT_TENSION_FLOOR,
                          geometry: WireGeometry | None = None) -> bool:
    """True iff some f >= f_min realizes tau exactly at q."""
    try:
        return not distribute_tensions(q, tau, f_min, geometry).degraded
    except RankDeficient:
        return False


class ActionConverter:
    """Per-environment converter with warm-started active sets."""

    def __init__(self, geometry: WireGeometry | None = None,
                 f_min: float = DEFAULT_TENSION_FLOOR):
        self.geometry = geometry or reference_geometry()
        self.f_min = f_min
        self._warm = None

    def reset(self):
        self._warm = None

    def convert(self, q, tau_ref) -> TensionSolution:
        sol = distribute_tensions(q, tau_ref, self.f_min, self.geometry,
                                  warm_start=self._warm)
        self._warm = sol.active_set
        return sol
