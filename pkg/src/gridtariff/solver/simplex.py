"""Bounded-variable primal simplex with dual certificates.

Two-phase revised simplex over the equality system [A | I]x = b obtained by
slack augmentation.  Nonbasic variables rest on a finite bound (or at zero if
free); an explicit dense basis inverse is maintained with product-form updates
and periodic refactorization.  Dantzig pricing switches to Bland's rule after
a run of degenerate steps, which guarantees termination.

A ``Workspace`` holds the standardized arrays and can be reused across solves
of the same constraint matrix with different objectives or variable bounds
(branch-and-bound nodes); every solve still starts from the slack crash
basis.

Multiplier convention (minimization): binding ">=" rows have nonnegative
multipliers, binding "<=" rows nonpositive ones, equalities are free, and the
dual objective y'b plus bound contributions equals the primal optimum.  For
maximization problems the returned multipliers are negated so the analogous
signs hold.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .core import GE, LE, LinearProgram, LpSolution, SolverError, Status

_BASIC = 0
_AT_LB = 1
_AT_UB = 2
_FREE_NB = 3
_FIXED = 4

_PIVOT_TOL = 1e-7
_RC_TOL = 1e-9
_DEGEN_RUN = 40
_REFACTOR_EVERY = 120
_DENSE_CACHE_LIMIT = 6_000_000      # entries of A kept dense for fast refactor


class Workspace:
    """Standardized arrays for one constraint matrix, reusable across solves."""

    def __init__(self, lp: LinearProgram):
        lp.validate()
        m, n = lp.n_rows, lp.n_vars
        self.m, self.n_struct = m, n
        slack_lb = np.zeros(m)
        slack_ub = np.zeros(m)
        for i, sense in enumerate(lp.sense):
            if sense == LE:
                slack_lb[i], slack_ub[i] = 0.0, np.inf
            elif sense == GE:
                slack_lb[i], slack_ub[i] = -np.inf, 0.0
        self.slack_lb, self.slack_ub = slack_lb, slack_ub
        self.base_lower = lp.lower.copy()
        self.base_upper = lp.upper.copy()
        self.a = sp.hstack([lp.a_rows, sp.eye(m, format="csc")], format="csc")
        self.a_struct = lp.a_rows.tocsc()
        self.b = lp.rhs.copy()
        n_tot = n + m
        self.a_dense = self.a.toarray() if m * n_tot <= _DENSE_CACHE_LIMIT else None

    def bounds(self, lower: np.ndarray | None, upper: np.ndarray | None
               ) -> tuple[np.ndarray, np.ndarray]:
        lo = self.base_lower if lower is None else np.asarray(lower, dtype=float)
        up = self.base_upper if upper is None else np.asarray(upper, dtype=float)
        return (np.concatenate([lo, self.slack_lb]),
                np.concatenate([up, self.slack_ub]))


def solve_lp(lp: LinearProgram, max_iters: int | None = None) -> LpSolution:
    """Solve an LP, returning primal values, row multipliers and reduced costs."""
    ws = Workspace(lp)
    return solve_with_workspace(ws, lp.obj, lp.maximize, max_iters=max_iters)


def solve_with_workspace(ws: Workspace, obj: np.ndarray, maximize: bool,
                         lower: np.ndarray | None = None,
                         upper: np.ndarray | None = None,
                         max_iters: int | None = None) -> LpSolution:
    lb, ub = ws.bounds(lower, upper)
    if np.any(lb > ub + 1e-12):
        return LpSolution(Status.INFEASIBLE, None, None, None, None)
    sim = _Simplex(ws, lb, ub)
    feasible = sim.phase1()
    if not feasible:
        return LpSolution(Status.INFEASIBLE, None, None, None, None,
                          iterations=sim.iterations, farkas=sim.multipliers())
    c = np.zeros(ws.n_struct + ws.m)
    c[: ws.n_struct] = -obj if maximize else obj
    status = sim.phase2(c, max_iters)
    if status is Status.UNBOUNDED:
        return LpSolution(Status.UNBOUNDED, None, None, None, None,
                          iterations=sim.iterations)
    x = sim.x[: ws.n_struct].copy()
    y = sim.multipliers()
    rc = np.asarray(c[: ws.n_struct] - ws.a_struct.T @ y).ravel()
    obj_val = float(np.dot(obj, x))
    if maximize:
        y, rc = -y, -rc
    return LpSolution(Status.OPTIMAL, x, y, rc, obj_val, iterations=sim.iterations)


class _Simplex:
    def __init__(self, ws: Workspace, lb: np.ndarray, ub: np.ndarray):
        self.ws = ws
        self.iterations = 0
        m = ws.m
        n_tot = ws.n_struct + m
        self.n_tot = n_tot

        # Nonbasic starting point: nearest finite bound, or 0 for free vars.
        x = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
        status = np.full(n_tot, _AT_LB, dtype=np.int8)
        status[~np.isfinite(lb) & np.isfinite(ub)] = _AT_UB
        status[~np.isfinite(lb) & ~np.isfinite(ub)] = _FREE_NB
        status[lb == ub] = _FIXED

        # Slack-first crash basis; rows whose slack cannot absorb the residual
        # get an artificial column instead.
        resid = ws.b - ws.a_struct @ x[: ws.n_struct]
        basis = np.empty(m, dtype=np.int64)
        art_rows: list[int] = []
        art_signs: list[float] = []
        art_vals: list[float] = []
        for i in range(m):
            s_idx = ws.n_struct + i
            r = resid[i]
            if lb[s_idx] - 1e-12 <= r <= ub[s_idx] + 1e-12:
                basis[i] = s_idx
                x[s_idx] = r
                status[s_idx] = _BASIC
            else:
                s_val = float(np.clip(r, lb[s_idx], ub[s_idx]))
                x[s_idx] = s_val
                gap = r - s_val
                basis[i] = n_tot + len(art_rows)
                art_rows.append(i)
                art_signs.append(1.0 if gap >= 0 else -1.0)
                art_vals.append(abs(gap))

        self.n_art = len(art_rows)
        if self.n_art:
            art_mat = sp.coo_matrix(
                (art_signs, (art_rows, range(self.n_art))),
                shape=(m, self.n_art)).tocsc()
            self.a = sp.hstack([ws.a, art_mat], format="csc")
            self.a_dense = (np.hstack([ws.a_dense, art_mat.toarray()])
                            if ws.a_dense is not None else None)
            self.lb = np.concatenate([lb, np.zeros(self.n_art)])
            self.ub = np.concatenate([ub, np.full(self.n_art, np.inf)])
            x = np.concatenate([x, np.asarray(art_vals)])
            status = np.concatenate([status,
                                     np.full(self.n_art, _BASIC, dtype=np.int8)])
        else:
            self.a = ws.a
            self.a_dense = ws.a_dense
            self.lb = lb
            self.ub = ub
        self.x = x
        self.vstat = status
        self.basis = basis
        self.c = np.zeros(self.a.shape[1])
        self.binv: np.ndarray | None = None
        self._refactor()
        self._bland = False
        self._degen_run = 0

    # -- basis linear algebra --------------------------------------------

    def _basis_matrix(self) -> np.ndarray:
        if self.a_dense is not None:
            return self.a_dense[:, self.basis]
        return self.a[:, self.basis].toarray()

    def _refactor(self) -> None:
        m = self.ws.m
        bmat = self._basis_matrix()
        try:
            self.binv = np.linalg.inv(bmat)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular basis during refactorization: {exc}") from exc
        resid = np.abs(bmat @ self.binv - np.eye(m)).max() if m else 0.0
        if not np.isfinite(resid) or resid > 1e-6:
            raise SolverError(
                f"numerical breakdown: basis inverse residual {resid:.2e}")
        # recompute basic values from the nonbasic point to shed update drift
        x_nb = self.x.copy()
        x_nb[self.basis] = 0.0
        self.x[self.basis] = self.binv @ (self.ws.b - self.a @ x_nb)
        self._since_refactor = 0

    def _col(self, j: int) -> np.ndarray:
        a = self.a
        start, end = a.indptr[j], a.indptr[j + 1]
        idx = a.indices[start:end]
        if len(idx) == 0:
            return np.zeros(self.ws.m)
        return self.binv[:, idx] @ a.data[start:end]

    def multipliers(self) -> np.ndarray:
        return self.c[self.basis] @ self.binv

    # -- phases -------------------------------------------------------------

    def phase1(self) -> bool:
        if self.n_art == 0:
            return True
        self.c[:] = 0.0
        self.c[self.n_tot:] = 1.0
        status = self._iterate(None)
        if status is Status.UNBOUNDED:   # phase-1 objective is bounded below by 0
            raise SolverError("phase-1 reported unbounded")
        obj = float(self.c @ self.x)
        if obj > 1e-7 * (1.0 + np.abs(self.ws.b).max(initial=0.0)):
            return False
        self._purge_artificials()
        return True

    def _purge_artificials(self) -> None:
        # pivot basic artificials out where a usable column exists; leftover
        # rows are redundant and keep a fixed artificial at zero
        for pos in range(self.ws.m):
            j = self.basis[pos]
            if j < self.n_tot:
                continue
            row = np.asarray(self.binv[pos] @ self.a).ravel()
            candidates = np.flatnonzero(np.abs(row[: self.n_tot]) > 1e-7)
            for cand in candidates:
                if self.vstat[cand] != _BASIC and self.lb[cand] != self.ub[cand]:
                    w = self._col(int(cand))
                    self._pivot(int(cand), pos, w, t=0.0, direction=1.0,
                                to_upper=False)
                    break
        for j in range(self.n_tot, self.a.shape[1]):
            self.lb[j] = self.ub[j] = 0.0
            if self.vstat[j] != _BASIC:
                self.vstat[j] = _FIXED
                self.x[j] = 0.0

    def phase2(self, cost: np.ndarray, max_iters: int | None) -> Status:
        self.c[:] = 0.0
        self.c[: len(cost)] = cost
        if self.n_art:
            self._refactor()
        return self._iterate(max_iters)

    # -- core loop ------------------------------------------------------------

    def _iterate(self, max_iters: int | None) -> Status:
        limit = max_iters or (80 * (self.ws.m + self.n_tot) + 2000)
        for _ in range(limit):
            self.iterations += 1
            y = self.multipliers()
            rc = np.asarray(self.c - self.a.T @ y).ravel()

            at_lb = (self.vstat == _AT_LB) & (rc < -_RC_TOL)
            at_ub = (self.vstat == _AT_UB) & (rc > _RC_TOL)
            free = (self.vstat == _FREE_NB) & (np.abs(rc) > _RC_TOL)
            eligible = np.flatnonzero(at_lb | at_ub | free)
            if eligible.size == 0:
                return Status.OPTIMAL

            if self._bland:
                j = int(eligible[0])
            else:
                j = int(eligible[np.argmax(np.abs(rc[eligible]))])
            direction = 1.0 if (self.vstat[j] == _AT_LB
                                or (self.vstat[j] == _FREE_NB and rc[j] < 0)) else -1.0

            w = self._col(j)
            xb = self.x[self.basis]
            lb_b = self.lb[self.basis]
            ub_b = self.ub[self.basis]
            step = direction * w

            t_best = self.ub[j] - self.lb[j]   # bound-flip distance (may be inf)
            leave_pos = -1
            to_upper = False
            dec = step > _PIVOT_TOL
            inc = step < -_PIVOT_TOL
            with np.errstate(divide="ignore", invalid="ignore"):
                t_dec = np.where(dec, (xb - lb_b) / np.where(dec, step, 1.0), np.inf)
                t_inc = np.where(inc, (ub_b - xb) / np.where(inc, -step, 1.0), np.inf)
            t_rows = np.minimum(t_dec, t_inc)
            t_rows[~np.isfinite(t_rows)] = np.inf
            if t_rows.size:
                if self._bland:
                    tmin = t_rows.min()
                    ties = np.flatnonzero(t_rows <= tmin + 1e-12)
                    pos = int(ties[np.argmin(self.basis[ties])])
                else:
                    pos = int(np.argmin(t_rows))
                if t_rows[pos] < t_best:
                    t_best = float(t_rows[pos])
                    leave_pos = pos
                    to_upper = bool(t_inc[pos] <= t_dec[pos])

            if not np.isfinite(t_best):
                return Status.UNBOUNDED
            t_best = max(t_best, 0.0)

            if leave_pos >= 0 and abs(w[leave_pos]) < 10 * _PIVOT_TOL \
                    and self._since_refactor > 0:
                # suspicious pivot on stale factors: refresh and redo the step
                self._refactor()
                continue

            if t_best <= 1e-12:
                self._degen_run += 1
                if self._degen_run > _DEGEN_RUN:
                    self._bland = True
            else:
                self._degen_run = 0

            if leave_pos < 0:
                # entering variable flips to its opposite bound
                self.x[self.basis] = xb - t_best * step
                self.x[j] += direction * t_best
                self.vstat[j] = _AT_UB if direction > 0 else _AT_LB
                continue

            self._pivot(j, leave_pos, w, t_best, direction, to_upper)
            if self._since_refactor >= _REFACTOR_EVERY:
                self._refactor()
        raise SolverError("simplex iteration limit exceeded")

    def _pivot(self, j: int, pos: int, w: np.ndarray, t: float,
               direction: float, to_upper: bool) -> None:
        leaving = self.basis[pos]
        self.x[self.basis] = self.x[self.basis] - direction * t * w
        self.x[j] += direction * t
        self.x[leaving] = self.ub[leaving] if to_upper else self.lb[leaving]
        if self.lb[leaving] == self.ub[leaving]:
            self.vstat[leaving] = _FIXED
        else:
            self.vstat[leaving] = _AT_UB if to_upper else _AT_LB
        self.vstat[j] = _BASIC
        self.basis[pos] = j

        piv = w[pos]
        if abs(piv) < _PIVOT_TOL:
            self._refactor()
            return
        row = self.binv[pos] / piv
        self.binv -= np.outer(w, row)
        self.binv[pos] = row
        self._since_refactor += 1
