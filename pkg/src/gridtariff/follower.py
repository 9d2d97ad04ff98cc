"""The operator's scheduling problem for fixed leader prices.

For every scenario the operator decides, per device and slot, how much energy
to buy from the leader, buy from the competitor, take from on-site generation
or draw from the battery, plus slot-level purchases routed into storage.  One
LP covers all scenarios, with coupling equalities forcing identical decisions
while scenarios are indistinguishable.  The generated model is tagged so the
multiplier of every row can be recovered mechanically, which is what the
single-level reformulation consumes.

Variable families (per scenario ``s``): ``x`` leader purchase, ``xb``
competitor purchase, ``lam`` direct generation use, ``sd`` battery draw (all
per device/slot); ``xs``/``xbs``/``lams`` stored purchases and stored
generation per slot; ``S`` battery state over slots ``0..H+1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Instance
from .scenario import nonanticipativity_pairs
from .solver import (GE, LE, EQ, LinearProgram, LpBuilder, LpSolution,
                     SolveOptions, Status, get_backend)

DEVICE_FAMILIES = ("x", "xb", "lam", "sd")
SLOT_FAMILIES = ("xs", "xbs", "lams")
INEQ_ROW_FAMILIES = ("demand_min", "power_cap", "batt_floor", "batt_ceiling",
                     "draw_cap", "dg_cap")


class FollowerInfeasible(RuntimeError):
    pass


class FollowerUnbounded(RuntimeError):
    """Impossible under nonnegative prices; signals a model bug."""


@dataclass
class FollowerSystem:
    """Price-agnostic LP skeleton: rows, bounds-free columns, objective split.

    The objective coefficient of a column is ``c0 + prob * p[slot]`` where
    ``(slot, prob)`` is ``price_link`` (absent for columns the leader price
    does not touch).  Leader profit is ``sum prob * (p[slot] - K[slot]) * v``
    over the leader-purchase columns.
    """

    instance: Instance
    var_tags: list
    var_index: dict
    c0: np.ndarray
    price_slot: np.ndarray      # -1 where the leader price does not enter
    price_prob: np.ndarray
    rows: list                  # (tag, [(var, coef)], sense, rhs)
    leader_cols: np.ndarray     # columns sold by the leader (x and xs families)
    leader_prob: np.ndarray
    leader_slot: np.ndarray

    @property
    def n_vars(self) -> int:
        return len(self.var_tags)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def objective(self, prices: np.ndarray) -> np.ndarray:
        c = self.c0.copy()
        linked = self.price_slot >= 0
        c[linked] += self.price_prob[linked] * prices[self.price_slot[linked]]
        return c


def build_follower_system(instance: Instance) -> FollowerSystem:
    hz = instance.horizon
    n_slots = hz.n_slots
    tree = instance.tree
    probs = np.asarray(tree.probabilities, dtype=float)
    bat = instance.battery
    comp = instance.prices.competitor

    tags: list = []
    index: dict = {}
    c0: list[float] = []
    p_slot: list[int] = []
    p_prob: list[float] = []
    leader_cols: list[int] = []
    leader_prob: list[float] = []
    leader_slot: list[int] = []

    def add(tag, cost0: float, slot: int = -1, prob: float = 0.0,
            leader: bool = False) -> int:
        j = len(tags)
        index[tag] = j
        tags.append(tag)
        c0.append(cost0)
        p_slot.append(slot)
        p_prob.append(prob)
        if leader:
            leader_cols.append(j)
            leader_prob.append(prob)
            leader_slot.append(slot)
        return j

    for s, leaf in enumerate(tree.leaves):
        p = float(probs[s])
        for d, dev in enumerate(instance.devices):
            for h in dev.window.slots:
                cdh = p * dev.penalty_at(h)
                add(("x", s, d, h), cdh, slot=h, prob=p, leader=True)
                add(("xb", s, d, h), cdh + p * comp[h])
                add(("lam", s, d, h), cdh)
                add(("sd", s, d, h), cdh)
        for h in range(n_slots):
            add(("xs", s, h), 0.0, slot=h, prob=p, leader=True)
            add(("xbs", s, h), p * comp[h])
            add(("lams", s, h), 0.0)
        for h in range(n_slots + 1):
            add(("S", s, h), 0.0)

    rows: list = []
    for s, leaf in enumerate(tree.leaves):
        for d, dev in enumerate(instance.devices):
            terms = [(index[(f, s, d, h)], 1.0)
                     for h in dev.window.slots for f in DEVICE_FAMILIES]
            rows.append((("demand_min", s, d), terms, GE, dev.energy_demand))
            for h in dev.window.slots:
                terms = [(index[(f, s, d, h)], 1.0) for f in DEVICE_FAMILIES]
                rows.append((("power_cap", s, d, h), terms, LE, dev.max_power))

        rows.append((("batt_init", s), [(index[("S", s, 0)], 1.0)], EQ, bat.initial))
        for h in range(n_slots):
            terms = [(index[("S", s, h + 1)], 1.0),
                     (index[("S", s, h)], -bat.discharge_eff),
                     (index[("lams", s, h)], -bat.charge_eff),
                     (index[("xs", s, h)], -bat.charge_eff),
                     (index[("xbs", s, h)], -bat.charge_eff)]
            terms += [(index[("sd", s, d, h)], 1.0)
                      for d, dev in enumerate(instance.devices)
                      if dev.window.first <= h <= dev.window.last]
            rows.append((("batt_balance", s, h), terms, EQ, 0.0))
        for h in range(1, n_slots + 1):
            col = index[("S", s, h)]
            rows.append((("batt_floor", s, h), [(col, 1.0)], GE, bat.min_level))
            rows.append((("batt_ceiling", s, h), [(col, 1.0)], LE, bat.max_level))
        for h in range(n_slots):
            terms = [(index[("sd", s, d, h)], 1.0)
                     for d, dev in enumerate(instance.devices)
                     if dev.window.first <= h <= dev.window.last]
            terms.append((index[("S", s, h)], -1.0))
            rows.append((("draw_cap", s, h), terms, LE, 0.0))
        for h in range(n_slots):
            terms = [(index[("lams", s, h)], 1.0)]
            terms += [(index[("lam", s, d, h)], 1.0)
                      for d, dev in enumerate(instance.devices)
                      if dev.window.first <= h <= dev.window.last]
            rows.append((("dg_cap", s, h), terms, LE, float(leaf.dg_bound[h])))

    for a, b, h_max in nonanticipativity_pairs(tree):
        for h in range(h_max + 1):
            for d, dev in enumerate(instance.devices):
                if dev.window.first <= h <= dev.window.last:
                    for f in DEVICE_FAMILIES:
                        rows.append((("tie", f, d, a, b, h),
                                     [(index[(f, a, d, h)], 1.0),
                                      (index[(f, b, d, h)], -1.0)], EQ, 0.0))
            for f in SLOT_FAMILIES:
                rows.append((("tie", f, -1, a, b, h),
                             [(index[(f, a, h)], 1.0),
                              (index[(f, b, h)], -1.0)], EQ, 0.0))
            rows.append((("tie", "S", -1, a, b, h),
                         [(index[("S", a, h)], 1.0),
                          (index[("S", b, h)], -1.0)], EQ, 0.0))

    return FollowerSystem(
        instance=instance,
        var_tags=tags,
        var_index=index,
        c0=np.asarray(c0),
        price_slot=np.asarray(p_slot, dtype=np.int64),
        price_prob=np.asarray(p_prob),
        rows=rows,
        leader_cols=np.asarray(leader_cols, dtype=np.int64),
        leader_prob=np.asarray(leader_prob),
        leader_slot=np.asarray(leader_slot, dtype=np.int64),
    )


def build_follower_lp(instance: Instance, prices: np.ndarray,
                      system: FollowerSystem | None = None) -> LinearProgram:
    """Materialize the scheduling LP at fixed leader prices (minimization)."""
    prices = np.asarray(prices, dtype=float)
    if len(prices) != instance.n_slots:
        raise ValueError(f"price vector has {len(prices)} entries,"
                         f" expected {instance.n_slots}")
    system = system or build_follower_system(instance)
    builder = LpBuilder(maximize=False)
    obj = system.objective(prices)
    for tag, cost in zip(system.var_tags, obj):
        builder.add_var(tag, 0.0, np.inf, obj=float(cost))
    for tag, terms, sense, rhs in system.rows:
        builder.add_row(tag, terms, sense, rhs)
    return builder.build()


# -- solutions ---------------------------------------------------------------


@dataclass
class FollowerSolution:
    """Per-scenario schedule plus the expected generalized cost."""

    n_scenarios: int
    n_slots: int
    device_values: dict        # (family, scenario, device) -> array over window
    stored: dict               # family -> (n_scen, n_slots) array
    battery_state: np.ndarray  # (n_scen, n_slots + 1)
    objective_value: float

    def device_consumption(self, s: int, d: int) -> np.ndarray:
        return sum(self.device_values[(f, s, d)] for f in DEVICE_FAMILIES)

    def family_by_slot(self, family: str, s: int, windows: list) -> np.ndarray:
        """Aggregate a device family (x/xb/lam/sd) into a per-slot vector."""
        out = np.zeros(self.n_slots)
        for (f, ss, d), vals in self.device_values.items():
            if f == family and ss == s:
                first = windows[d].first
                out[first:first + len(vals)] += vals
        return out

    def competitor_energy_total(self) -> float:
        total = float(self.stored["xbs"].sum())
        total += sum(float(v.sum()) for key, v in self.device_values.items()
                     if key[0] == "xb")
        return total


def extract_solution(system: FollowerSystem, x: np.ndarray,
                     objective: float) -> FollowerSolution:
    inst = system.instance
    n_scen = inst.tree.n_leaves
    n_slots = inst.n_slots
    device_values: dict = {}
    stored = {f: np.zeros((n_scen, n_slots)) for f in SLOT_FAMILIES}
    battery = np.zeros((n_scen, n_slots + 1))
    for s in range(n_scen):
        for d, dev in enumerate(inst.devices):
            lo = dev.window.first
            for f in DEVICE_FAMILIES:
                vals = np.array([x[system.var_index[(f, s, d, h)]]
                                 for h in dev.window.slots])
                device_values[(f, s, d)] = vals
        for f in SLOT_FAMILIES:
            stored[f][s] = [x[system.var_index[(f, s, h)]] for h in range(n_slots)]
        battery[s] = [x[system.var_index[("S", s, h)]] for h in range(n_slots + 1)]
    return FollowerSolution(n_scen, n_slots, device_values, stored, battery,
                            float(objective))


@dataclass
class FollowerDuals:
    """Row multipliers in nonnegative convention for inequality families."""

    by_family: dict            # family -> dict(tag tail -> value)
    raw: np.ndarray            # solver multipliers, one per row
    row_tags: list

    def value(self, tag) -> float:
        return self.by_family[tag[0]][tag[1:]]


def extract_duals(system: FollowerSystem, duals: np.ndarray) -> FollowerDuals:
    by_family: dict = {}
    for (tag, _, sense, _), y in zip(system.rows, duals):
        fam = tag[0]
        value = -y if sense == LE else y
        by_family.setdefault(fam, {})[tag[1:]] = float(value)
    return FollowerDuals(by_family, np.asarray(duals),
                         [tag for tag, _, _, _ in system.rows])


def solve_follower(lp: LinearProgram, backend: str | None = None,
                   opts: SolveOptions | None = None,
                   system: FollowerSystem | None = None
                   ) -> tuple[LpSolution, FollowerSolution | None, FollowerDuals | None]:
    """Solve the scheduling LP; returns the raw solution plus typed views.

    Typed views require the tagged ``system`` the LP was built from.
    """
    sol = get_backend(backend).solve_lp(lp, opts)
    if sol.status is Status.INFEASIBLE:
        raise FollowerInfeasible("operator problem infeasible; run validate()")
    if sol.status is Status.UNBOUNDED:
        raise FollowerUnbounded("operator LP unbounded: nonpositive effective"
                                " prices or corrupted model")
    if system is None:
        return sol, None, None
    return sol, extract_solution(system, sol.x, sol.objective), \
        extract_duals(system, sol.duals)


# -- cost accounting ----------------------------------------------------------


@dataclass
class CostBreakdown:
    billing_cost: float
    inconvenience_cost: float
    generalized_cost: float
    per_scenario: list = field(default_factory=list)   # (billing, inconvenience)


def evaluate_schedule(instance: Instance, prices: np.ndarray,
                      solution: FollowerSolution) -> CostBreakdown:
    """Expected billing and inconvenience of a schedule at given prices."""
    prices = np.asarray(prices, dtype=float)
    comp = instance.prices.competitor
    probs = instance.tree.probabilities
    per_scenario = []
    billing = inconvenience = 0.0
    for s in range(solution.n_scenarios):
        bc = float(prices @ solution.stored["xs"][s]
                   + comp @ solution.stored["xbs"][s])
        ic = 0.0
        for d, dev in enumerate(instance.devices):
            win = np.fromiter(dev.window.slots, dtype=np.int64)
            x = solution.device_values[("x", s, d)]
            xb = solution.device_values[("xb", s, d)]
            bc += float(prices[win] @ x + comp[win] @ xb)
            cons = solution.device_consumption(s, d)
            ic += float(np.asarray(dev.inconvenience) @ cons)
        per_scenario.append((bc, ic))
        billing += probs[s] * bc
        inconvenience += probs[s] * ic
    return CostBreakdown(billing, inconvenience, billing + inconvenience,
                         per_scenario)


def leader_profit(instance: Instance, prices: np.ndarray,
                  solution: FollowerSolution) -> float:
    """Expected supplier profit: revenue minus spot procurement cost."""
    prices = np.asarray(prices, dtype=float)
    cost = instance.prices.supply_cost
    probs = instance.tree.probabilities
    total = 0.0
    for s in range(solution.n_scenarios):
        margin = prices - cost
        total += probs[s] * float(margin @ solution.stored["xs"][s])
        for d, dev in enumerate(instance.devices):
            win = np.fromiter(dev.window.slots, dtype=np.int64)
            total += probs[s] * float(margin[win]
                                      @ solution.device_values[("x", s, d)])
    return total


def complementarity_products(lp: LinearProgram, sol: LpSolution) -> np.ndarray:
    """|slack * multiplier| per inequality row and |value * reduced cost| per var."""
    ax = lp.a_rows @ sol.x
    out = []
    for i in range(lp.n_rows):
        if lp.sense[i] == EQ:
            continue
        slack = lp.rhs[i] - ax[i] if lp.sense[i] == LE else ax[i] - lp.rhs[i]
        out.append(abs(slack * sol.duals[i]))
    out.extend(abs((sol.x - lp.lower) * sol.reduced_costs))
    return np.asarray(out)
