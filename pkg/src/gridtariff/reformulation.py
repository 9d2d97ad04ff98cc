"""Single-level MILP reformulation of the pricing problem.

For fixed prices the operator's problem is an LP, so it can be replaced by
its optimality system: primal feasibility, multiplier feasibility (price
variables enter those rows linearly) and pairwise complementarity between
every inequality slack or variable and its multiplier.  Each pair gets a
binary switch ``a <= M_a * delta``, ``b <= M_b * (1 - delta)``.  Strong
duality then lets the bilinear revenue terms in the supplier objective be
replaced by the multiplier objective minus the price-independent cost terms,
which is what the MILP maximizes.

Primal-side M values are structural bounds implied by the constraints, so a
pair value hitting them never truncates the optimum; multiplier-side M values
default to a large scalar and are escalated when the post-solve audit flags
them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .follower import (FollowerDuals, FollowerSolution, FollowerSystem,
                       build_follower_lp, build_follower_system,
                       extract_solution, leader_profit, solve_follower)
from .model import Instance, validate
from .solver import (EQ, GE, LE, LinearProgram, LpBuilder, MilpModel,
                     MilpResult, SolveOptions, Status, get_backend,
                     verify_milp_solution)

DEFAULT_DUAL_M = 1e5


class BilevelInfeasible(RuntimeError):
    """The single-level model is infeasible: bad instance or M too small."""


class ExtractionMismatch(RuntimeError):
    """Strong-duality objective and direct profit evaluation disagree."""


@dataclass(frozen=True)
class Pair:
    """One complementarity pair: a primal quantity and its multiplier."""

    kind: str                  # "row" (inequality slack) or "var" (nonnegativity)
    ref: int                   # row index or column index in the follower system


@dataclass
class MpccSystem:
    system: FollowerSystem
    pairs: list[Pair]
    cols: list                 # per system var: [(row, coef)] transpose
    row_sign: np.ndarray       # +1 for >=/= rows, -1 for <= rows
    var_upper: np.ndarray      # structural upper bounds of primal columns

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)


@dataclass
class BigMConfig:
    primal: np.ndarray
    dual: np.ndarray
    dual_structural: np.ndarray
    default_dual: float = DEFAULT_DUAL_M

    def __post_init__(self) -> None:
        if np.any(self.primal < 0) or np.any(self.dual <= 0):
            raise ValueError("big-M values must be positive")

    def escalate(self, factor: float = 2.0) -> "BigMConfig":
        dual = np.where(self.dual_structural, self.dual, self.dual * factor)
        return BigMConfig(self.primal.copy(), dual, self.dual_structural.copy(),
                          self.default_dual * factor)


@dataclass
class AuditFlag:
    pair: int
    side: str                  # "primal" | "dual"
    value: float
    limit: float
    structural: bool


@dataclass
class AuditReport:
    flags: list[AuditFlag]
    max_primal: float
    max_dual: float

    @property
    def risky(self) -> list[AuditFlag]:
        return [f for f in self.flags if not f.structural]

    @property
    def clean(self) -> bool:
        return not self.risky


@dataclass
class BilevelSolution:
    prices: np.ndarray
    follower: FollowerSolution
    duals: FollowerDuals
    binaries: np.ndarray
    leader_objective: float
    follower_objective: float
    mip_gap: float
    status: Status
    audit: AuditReport | None = None
    retries: int = 0
    pair_values: tuple[np.ndarray, np.ndarray] | None = None
    milp: MilpResult | None = None


# -- construction ------------------------------------------------------------


def build_mpcc(instance: Instance, system: FollowerSystem | None = None) -> MpccSystem:
    """Pair every inequality row and nonnegative column with its multiplier."""
    system = system or build_follower_system(instance)
    n_vars = system.n_vars
    cols: list[list] = [[] for _ in range(n_vars)]
    row_sign = np.ones(len(system.rows))
    pairs: list[Pair] = []
    for i, (tag, terms, sense, rhs) in enumerate(system.rows):
        if sense == LE:
            row_sign[i] = -1.0
        for j, coef in terms:
            cols[j].append((i, coef))
        if sense != EQ:
            pairs.append(Pair("row", i))
    pairs.extend(Pair("var", j) for j in range(n_vars))
    upper = _structural_upper_bounds(system)
    return MpccSystem(system, pairs, cols, row_sign, upper)


def _structural_upper_bounds(system: FollowerSystem) -> np.ndarray:
    inst = system.instance
    bat = inst.battery
    charge_cap = max(0.0, (2.0 * bat.max_level - bat.discharge_eff * bat.min_level)
                     / bat.charge_eff)
    dg = inst.tree.dg_matrix()
    upper = np.empty(system.n_vars)
    for j, tag in enumerate(system.var_tags):
        fam = tag[0]
        if fam in ("x", "xb"):
            upper[j] = inst.devices[tag[2]].max_power
        elif fam == "lam":
            upper[j] = min(inst.devices[tag[2]].max_power, dg[tag[1], tag[3]])
        elif fam == "sd":
            upper[j] = min(inst.devices[tag[2]].max_power, bat.max_level)
        elif fam in ("xs", "xbs"):
            upper[j] = charge_cap
        elif fam == "lams":
            upper[j] = min(charge_cap, dg[tag[1], tag[2]])
        else:                                   # battery state
            upper[j] = max(bat.max_level, bat.initial)
    return upper


def dual_m_scale(system: FollowerSystem) -> float:
    """Magnitude headroom for multipliers: worst objective coefficient at the
    competitor tariff, amplified by the battery round-trip losses."""
    inst = system.instance
    comp = inst.prices.competitor
    worst_c = float(np.abs(system.c0).max(initial=0.0))
    linked = system.price_slot >= 0
    if linked.any():
        worst_c = max(worst_c, float((np.abs(system.c0[linked])
                                      + system.price_prob[linked]
                                      * comp[system.price_slot[linked]]).max()))
    rho = inst.battery.charge_eff * inst.battery.discharge_eff
    return max(1.0, worst_c) / max(rho, 1e-2)


def default_big_m(mpcc: MpccSystem, default_dual: float | None = None) -> BigMConfig:
    """Structural primal bounds; scaled (audited, escalatable) multiplier bounds."""
    system = mpcc.system
    inst = system.instance
    bat = inst.battery
    if default_dual is None:
        default_dual = min(DEFAULT_DUAL_M, 1e3 * dual_m_scale(system))
    primal = np.empty(mpcc.n_pairs)
    for k, pair in enumerate(mpcc.pairs):
        if pair.kind == "var":
            primal[k] = mpcc.var_upper[pair.ref]
            continue
        tag, terms, sense, rhs = system.rows[pair.ref]
        fam = tag[0]
        if fam == "demand_min":
            dev = inst.devices[tag[2]]
            primal[k] = len(dev.window) * dev.max_power - dev.energy_demand
        elif fam == "power_cap":
            primal[k] = inst.devices[tag[2]].max_power
        elif fam in ("batt_floor", "batt_ceiling"):
            primal[k] = bat.max_level - bat.min_level
        elif fam == "draw_cap":
            primal[k] = max(bat.max_level, bat.initial)
        elif fam == "dg_cap":
            primal[k] = rhs
        else:
            raise ValueError(f"unexpected inequality family {fam!r}")
    dual = np.full(mpcc.n_pairs, float(default_dual))
    structural = np.zeros(mpcc.n_pairs, dtype=bool)
    return BigMConfig(primal, dual, structural, default_dual)


@dataclass
class _MilpLayout:
    n_slots: int
    primal_off: int
    dual_off: int
    delta_off: int


def _linearize(mpcc: MpccSystem, config: BigMConfig,
               pinned_prices: dict[int, float] | None = None
               ) -> tuple[MilpModel, _MilpLayout]:
    system = mpcc.system
    inst = system.instance
    n_slots = inst.n_slots
    comp = inst.prices.competitor
    supply = inst.prices.supply_cost
    builder = LpBuilder(maximize=True)

    for h in range(n_slots):
        lo, up = 0.0, float(comp[h])
        if pinned_prices and h in pinned_prices:
            v = float(pinned_prices[h])
            if not (-1e-9 <= v <= comp[h] + 1e-9):
                raise ValueError(f"pinned price {v} at slot {h} outside [0, {comp[h]}]")
            lo = up = min(max(v, 0.0), float(comp[h]))
        builder.add_var(("p", h), lo, up, obj=0.0)

    primal_off = builder.n_vars
    obj_primal = -system.c0.copy()
    obj_primal[system.leader_cols] -= system.leader_prob * supply[system.leader_slot]
    for j, tag in enumerate(system.var_tags):
        builder.add_var(("pv",) + tag, 0.0, float(mpcc.var_upper[j]),
                        obj=float(obj_primal[j]))

    dual_off = builder.n_vars
    for i, (tag, terms, sense, rhs) in enumerate(system.rows):
        lo = -np.inf if sense == EQ else 0.0
        builder.add_var(("d", i), lo, np.inf,
                        obj=float(mpcc.row_sign[i] * rhs))

    delta_off = builder.n_vars
    for k in range(mpcc.n_pairs):
        builder.add_var(("delta", k), 0.0, 1.0, obj=0.0)

    # primal feasibility
    for tag, terms, sense, rhs in system.rows:
        builder.add_row(("primal",) + tag,
                        [(primal_off + j, c) for j, c in terms], sense, rhs)

    # multiplier feasibility: sum sgn_i a_ij d_i - gamma_j p_slot <= c0_j
    for j in range(system.n_vars):
        terms = [(dual_off + i, mpcc.row_sign[i] * coef) for i, coef in mpcc.cols[j]]
        if system.price_slot[j] >= 0:
            terms.append((int(system.price_slot[j]), -float(system.price_prob[j])))
        builder.add_row(("dual",) + system.var_tags[j], terms, LE,
                        float(system.c0[j]))

    # complementarity switches
    for k, pair in enumerate(mpcc.pairs):
        mp, md = float(config.primal[k]), float(config.dual[k])
        dk = delta_off + k
        if pair.kind == "row":
            i = pair.ref
            tag, terms, sense, rhs = system.rows[i]
            shifted = [(primal_off + j, c if sense == GE else -c) for j, c in terms]
            shifted.append((dk, -mp))
            builder.add_row(("comp_p", k), shifted, LE,
                            float(rhs if sense == GE else -rhs))
            builder.add_row(("comp_d", k), [(dual_off + i, 1.0), (dk, md)], LE, md)
        else:
            j = pair.ref
            builder.add_row(("comp_p", k), [(primal_off + j, 1.0), (dk, -mp)],
                            LE, 0.0)
            terms = [(dual_off + i, -mpcc.row_sign[i] * coef)
                     for i, coef in mpcc.cols[j]]
            if system.price_slot[j] >= 0:
                terms.append((int(system.price_slot[j]), float(system.price_prob[j])))
            terms.append((dk, md))
            builder.add_row(("comp_d", k), terms, LE, md - float(system.c0[j]))

    lp = builder.build()
    binaries = np.arange(delta_off, delta_off + mpcc.n_pairs, dtype=np.int64)
    return MilpModel(lp, binaries), _MilpLayout(n_slots, primal_off, dual_off,
                                                delta_off)


def linearize(mpcc: MpccSystem, config: BigMConfig,
              pinned_prices: dict[int, float] | None = None) -> MilpModel:
    """Big-M MILP for the single-level pricing problem (maximization)."""
    model, _ = _linearize(mpcc, config, pinned_prices)
    return model


# -- extraction and audit ------------------------------------------------------


def _pair_values(mpcc: MpccSystem, primal: np.ndarray, dual: np.ndarray,
                 prices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    system = mpcc.system
    pv = np.empty(mpcc.n_pairs)
    dv = np.empty(mpcc.n_pairs)
    for k, pair in enumerate(mpcc.pairs):
        if pair.kind == "row":
            tag, terms, sense, rhs = system.rows[pair.ref]
            lhs = sum(coef * primal[j] for j, coef in terms)
            pv[k] = (lhs - rhs) if sense == GE else (rhs - lhs)
            dv[k] = dual[pair.ref]
        else:
            j = pair.ref
            pv[k] = primal[j]
            expr = sum(mpcc.row_sign[i] * coef * dual[i] for i, coef in mpcc.cols[j])
            cj = system.c0[j]
            if system.price_slot[j] >= 0:
                cj += system.price_prob[j] * prices[system.price_slot[j]]
            dv[k] = cj - expr
    return pv, dv


def extract_bilevel(mpcc: MpccSystem, layout: _MilpLayout, result: MilpResult,
                    tol: float = 1e-5) -> BilevelSolution:
    system = mpcc.system
    inst = system.instance
    x = result.x
    prices = x[: layout.n_slots].copy()
    primal = x[layout.primal_off: layout.primal_off + system.n_vars]
    dual = x[layout.dual_off: layout.dual_off + len(system.rows)]
    binaries = x[layout.delta_off: layout.delta_off + mpcc.n_pairs]

    follower_obj = float(system.objective(prices) @ primal)
    fsol = extract_solution(system, primal, follower_obj)
    profit = leader_profit(inst, prices, fsol)
    model_obj = float(result.objective)
    if abs(model_obj - profit) > tol * (1.0 + abs(model_obj)):
        raise ExtractionMismatch(
            f"strong-duality objective {model_obj} vs direct profit {profit}")

    by_family: dict = {}
    for (tag, _, sense, _), d in zip(system.rows, dual):
        by_family.setdefault(tag[0], {})[tag[1:]] = float(d)
    duals = FollowerDuals(by_family, dual.copy(),
                          [tag for tag, _, _, _ in system.rows])
    pv, dv = _pair_values(mpcc, primal, dual, prices)
    return BilevelSolution(
        prices=prices, follower=fsol, duals=duals, binaries=binaries.copy(),
        leader_objective=profit, follower_objective=follower_obj,
        mip_gap=float(result.rel_gap), status=result.status,
        pair_values=(pv, dv), milp=result)


def audit_big_m(solution: BilevelSolution, config: BigMConfig,
                margin: float = 1e-6) -> AuditReport:
    """Flag pair sides at or beyond (1 - margin) of their M."""
    pv, dv = solution.pair_values
    flags: list[AuditFlag] = []
    for k in range(len(pv)):
        if config.primal[k] > 0 and pv[k] >= (1.0 - margin) * config.primal[k]:
            flags.append(AuditFlag(k, "primal", float(pv[k]),
                                   float(config.primal[k]), True))
        if dv[k] >= (1.0 - margin) * config.dual[k]:
            flags.append(AuditFlag(k, "dual", float(dv[k]),
                                   float(config.dual[k]),
                                   bool(config.dual_structural[k])))
    return AuditReport(flags, float(pv.max(initial=0.0)), float(dv.max(initial=0.0)))


# -- solve --------------------------------------------------------------------


def _priming_points(mpcc: MpccSystem, layout: _MilpLayout, model: MilpModel,
                    pinned_prices: dict[int, float] | None,
                    backend: str | None) -> list[np.ndarray]:
    """Feasible MILP points from operator optima at heuristic price profiles.

    An optimal primal/multiplier pair at any in-bounds price profile is a
    feasible point of the single-level model once its complementarity pattern
    is written into the switches; the competitor profile in particular makes
    the dominance bound hold from the first node.
    """
    system = mpcc.system
    inst = system.instance
    comp = inst.prices.competitor
    supply = inst.prices.supply_cost
    profiles = [comp.copy(),
                np.minimum(comp, np.maximum(0.0, 0.5 * (comp + supply)))]
    points = []
    for prof in profiles:
        if pinned_prices:
            prof = prof.copy()
            for h, v in pinned_prices.items():
                prof[h] = v
        lp = build_follower_lp(inst, prof, system)
        try:
            sol, _, duals = solve_follower(lp, backend=backend, system=system)
        except RuntimeError:
            continue
        d_pos = duals.raw * mpcc.row_sign          # paper-positive multipliers
        pv, dv = _pair_values(mpcc, sol.x, d_pos, prof)
        delta = (pv > 1e-7).astype(float)
        conflict = (pv > 1e-7) & (dv > 1e-7)
        if conflict.any():
            continue
        full = np.zeros(model.lp.n_vars)
        full[: layout.n_slots] = prof
        full[layout.primal_off: layout.primal_off + system.n_vars] = sol.x
        full[layout.dual_off: layout.dual_off + len(system.rows)] = d_pos
        full[layout.delta_off: layout.delta_off + mpcc.n_pairs] = delta
        if not verify_milp_solution(model, full, tol=1e-6):
            points.append(full)
    return points


def _polish_incumbent(solver, model: MilpModel, layout: _MilpLayout,
                      mpcc: MpccSystem, result: MilpResult) -> MilpResult | None:
    """Re-solve with switches fixed at their rounded values, then pick the
    minimal-multiplier point among the alternate optima.

    The first LP removes any slack that MIP tolerances scaled by big-M rows
    let through; the second minimizes total multiplier magnitude (free
    equality multipliers included, via absolute-value splits) at the optimal
    objective, so degenerate multipliers do not ride their M and trip the
    audit.  Returns None when even the fixed-switch LP is infeasible, i.e.
    the incumbent was an artifact of solver tolerances.
    """
    import scipy.sparse as sp

    lp = model.lp
    binaries = model.binary_idx
    rounded = np.round(result.x[binaries])
    lo = lp.lower.copy()
    up = lp.upper.copy()
    lo[binaries] = rounded
    up[binaries] = rounded
    fixed = lp.with_bounds(lo, up)
    s1 = solver.solve_lp(fixed)
    if s1.status is not Status.OPTIMAL:
        return None
    fstar = float(s1.objective)
    x_best = s1.x

    n = lp.n_vars
    shrink = np.zeros(n)
    eq_rows = []
    for i, (_, _, sense, _) in enumerate(mpcc.system.rows):
        if sense == EQ:
            eq_rows.append(layout.dual_off + i)
        else:
            shrink[layout.dual_off + i] = 1.0
    n_aux = len(eq_rows)
    hold_sense = GE if lp.maximize else LE

    def shrink_lp(hold_rhs: float) -> LinearProgram:
        base = sp.vstack([fixed.a_rows, sp.csr_matrix(lp.obj.reshape(1, -1))],
                         format="csr")
        sense2 = np.append(fixed.sense, hold_sense)
        rhs2 = np.append(fixed.rhs, hold_rhs)
        obj2, lower2, upper2 = shrink, fixed.lower, fixed.upper
        if n_aux:
            # aux_i >= |d_eq_i| rows: aux - d >= 0 and aux + d >= 0
            rows_i = np.repeat(np.arange(2 * n_aux), 2)
            cols = np.empty(4 * n_aux, dtype=np.int64)
            vals = np.empty(4 * n_aux)
            for k, col in enumerate(eq_rows):
                cols[4 * k: 4 * k + 4] = [n + k, col, n + k, col]
                vals[4 * k: 4 * k + 4] = [1.0, -1.0, 1.0, 1.0]
            abs_block = sp.coo_matrix((vals, (rows_i, cols)),
                                      shape=(2 * n_aux, n + n_aux)).tocsr()
            base = sp.hstack([base, sp.csr_matrix((base.shape[0], n_aux))],
                             format="csr")
            base = sp.vstack([base, abs_block], format="csr")
            sense2 = np.append(sense2, np.full(2 * n_aux, GE, dtype=object))
            rhs2 = np.append(rhs2, np.zeros(2 * n_aux))
            obj2 = np.concatenate([shrink, np.ones(n_aux)])
            lower2 = np.concatenate([fixed.lower, np.zeros(n_aux)])
            upper2 = np.concatenate([fixed.upper, np.full(n_aux, np.inf)])
        return LinearProgram(n_vars=base.shape[1], obj=obj2, lower=lower2,
                             upper=upper2, a_rows=base, sense=sense2, rhs=rhs2,
                             maximize=False)

    s2 = solver.solve_lp(shrink_lp(fstar))      # hold the optimum exactly
    if s2.status is not Status.OPTIMAL:
        slack = (-1 if lp.maximize else 1) * 1e-9 * (1.0 + abs(fstar))
        s2 = solver.solve_lp(shrink_lp(fstar + slack))
    if s2.status is Status.OPTIMAL:
        x_best = s2.x[:n]
    obj = float(lp.obj @ x_best)
    gap = abs(obj - result.bound) / max(1.0, abs(obj)) \
        if np.isfinite(result.bound) else result.rel_gap
    return MilpResult(result.status, x_best, obj, result.bound, gap,
                      result.nodes, result.log)


def solve_bilevel(instance: Instance, config: BigMConfig | None = None,
                  opts: SolveOptions | None = None, *,
                  backend: str | None = None,
                  pinned_prices: dict[int, float] | None = None,
                  prime: bool = True, max_retries: int = 3) -> BilevelSolution:
    """Optimistic pricing optimum via the big-M MILP, with audited M escalation."""
    report = validate(instance)
    if not report.ok:
        raise ValueError(f"invalid instance: {[v.code for v in report]}")
    opts = opts or SolveOptions()
    system = build_follower_system(instance)
    mpcc = build_mpcc(instance, system)
    cfg = config or default_big_m(mpcc)

    solver = get_backend(backend)
    best: BilevelSolution | None = None
    deadline = time.monotonic() + opts.time_limit   # budget covers all retries
    for attempt in range(max_retries + 1):
        remaining = deadline - time.monotonic()
        if remaining <= 0.5 and attempt > 0:
            if best is not None:
                return best
            raise BilevelInfeasible(
                f"time budget exhausted after {attempt} attempts")
        attempt_opts = replace(opts, time_limit=max(remaining, 0.5))
        model, layout = _linearize(mpcc, cfg, pinned_prices)
        warm = _priming_points(mpcc, layout, model, pinned_prices, backend) \
            if prime else []
        result = solver.solve_milp(model, attempt_opts, initial_solutions=warm)
        if result.status is Status.INFEASIBLE:
            # undersized multiplier caps can choke the whole system; larger M
            # only enlarges it, so escalation is the right reflex here too
            if attempt < max_retries and not cfg.dual_structural.all():
                cfg = cfg.escalate()
                continue
            raise BilevelInfeasible(
                "single-level model infeasible: inconsistent instance or"
                " undersized M")
        if result.x is None:
            raise BilevelInfeasible(
                f"no incumbent within limits (status {result.status})")
        polished = _polish_incumbent(solver, model, layout, mpcc, result)
        solution = None
        if polished is not None:
            try:
                solution = extract_bilevel(mpcc, layout, polished)
            except ExtractionMismatch:
                solution = None
        if solution is not None:
            solution.retries = attempt
            solution.audit = audit_big_m(solution, cfg)
            # enlarging M only enlarges the feasible set, so a retry that does
            # not improve the objective added nothing: keep the earlier result
            if best is not None and solution.leader_objective \
                    <= best.leader_objective + 1e-9 * (1 + abs(best.leader_objective)):
                return best
            if solution.audit.clean or attempt == max_retries:
                return solution
            best = solution
        elif best is not None:
            return best                        # retry produced only artifacts
        elif attempt == max_retries:
            raise BilevelInfeasible(
                "no tolerance-exact incumbent recoverable; consider a tighter"
                " backend or larger explicit big-M values")
        cfg = cfg.escalate()
    return best if best is not None else _unreachable()


def _unreachable() -> BilevelSolution:
    raise RuntimeError("unreachable")
