"""Operator scheduling LP: primal/dual correctness and cost accounting."""

from __future__ import annotations

import numpy as np
import pytest

from gridtariff.follower import (build_follower_lp, build_follower_system,
                                 complementarity_products, evaluate_schedule,
                                 extract_solution, leader_profit,
                                 solve_follower, FollowerInfeasible)
from gridtariff.model import Battery, Device, Horizon, Instance, PriceData, TimeWindow
from gridtariff.scenario import (BaseScenario, flat_tree,
                                 indistinguishability_time, single_path_tree)
from gridtariff.solver import EQ, Status

from conftest import make_t1, random_tiny_instance


def solve_at(instance, prices):
    system = build_follower_system(instance)
    lp = build_follower_lp(instance, np.asarray(prices, dtype=float), system)
    sol, fsol, fduals = solve_follower(lp, system=system)
    return system, lp, sol, fsol, fduals


class TestBuildCounts:
    def test_t1_row_families(self):
        inst = make_t1()
        system = build_follower_system(inst)
        fams = {}
        for tag, _, _, _ in system.rows:
            fams[tag[0]] = fams.get(tag[0], 0) + 1
        assert fams["demand_min"] == 1
        assert fams["power_cap"] == 2
        assert fams["batt_init"] == 1
        assert fams["batt_balance"] == 2
        assert fams["batt_floor"] == fams["batt_ceiling"] == 2
        assert fams["draw_cap"] == fams["dg_cap"] == 2
        # 4 purchase variables per window slot + 3 stored + battery states
        assert system.n_vars == 4 * 2 + 3 * 2 + 3

    def test_two_scenarios_tie_every_slot0_family(self):
        inst = make_t1().replace(tree=flat_tree(
            [BaseScenario(0, np.array([0.0, 1.0])),
             BaseScenario(1, np.array([0.0, 2.0]))], 2))
        system = build_follower_system(inst)
        ties = [tag for tag, _, _, _ in system.rows if tag[0] == "tie"]
        assert len(ties) == 8                    # all eight families at h=0
        assert {t[1] for t in ties} == {"x", "xb", "lam", "sd",
                                        "xs", "xbs", "lams", "S"}


class TestSolveFollower:
    def test_t1_at_competitor_prices(self, t1):
        _, _, sol, fsol, _ = solve_at(t1, [3.0, 3.0])
        assert sol.objective == pytest.approx(6.0)
        np.testing.assert_allclose(fsol.device_values[("x", 0, 0)], [2.0, 0.0],
                                   atol=1e-9)

    def test_zero_prices_zero_penalty(self):
        inst = make_t1(C=(0.0, 0.0))
        _, _, sol, _, _ = solve_at(inst, [0.0, 0.0])
        assert sol.objective == pytest.approx(0.0, abs=1e-9)

    def test_free_generation_covers_demand(self):
        inst = make_t1(C=(0.0, 0.0)).replace(
            tree=single_path_tree(np.array([5.0, 5.0])))
        _, _, sol, fsol, _ = solve_at(inst, [3.0, 3.0])
        assert sol.objective == pytest.approx(0.0, abs=1e-9)
        assert fsol.device_values[("x", 0, 0)].sum() == pytest.approx(0.0, abs=1e-9)
        assert fsol.device_values[("xb", 0, 0)].sum() == pytest.approx(0.0, abs=1e-9)

    def test_infeasible_demand_raises(self):
        dev = Device("c", "a", TimeWindow(0, 0), 5.0, 1.0, (0.0,))
        inst = make_t1().replace(devices=[dev])
        system = build_follower_system(inst)
        lp = build_follower_lp(inst, np.array([3.0, 3.0]), system)
        with pytest.raises(FollowerInfeasible):
            solve_follower(lp, system=system)

    def test_price_length_checked(self, t1):
        with pytest.raises(ValueError):
            build_follower_lp(t1, np.array([3.0]))


class TestEvaluateSchedule:
    def test_zero_consumption(self, t1):
        system = build_follower_system(t1)
        fsol = extract_solution(system, np.zeros(system.n_vars), 0.0)
        costs = evaluate_schedule(t1, np.array([3.0, 3.0]), fsol)
        assert (costs.billing_cost, costs.inconvenience_cost,
                costs.generalized_cost) == (0.0, 0.0, 0.0)

    def test_t1_optimum_breakdown(self, t1):
        _, _, sol, fsol, _ = solve_at(t1, [3.0, 3.0])
        costs = evaluate_schedule(t1, np.array([3.0, 3.0]), fsol)
        assert costs.billing_cost == pytest.approx(6.0)
        assert costs.inconvenience_cost == pytest.approx(0.0, abs=1e-9)
        assert costs.generalized_cost == pytest.approx(6.0)

    def test_shifted_schedule_pays_delay(self, t1):
        system = build_follower_system(t1)
        x = np.zeros(system.n_vars)
        x[system.var_index[("x", 0, 0, 1)]] = 2.0   # everything in slot 1
        fsol = extract_solution(system, x, 0.0)
        costs = evaluate_schedule(t1, np.array([3.0, 3.0]), fsol)
        assert costs.billing_cost == pytest.approx(6.0)
        assert costs.inconvenience_cost == pytest.approx(0.2)
        assert costs.generalized_cost == pytest.approx(6.2)
        assert leader_profit(t1, np.array([3.0, 3.0]), fsol) == \
            pytest.approx(2 * (3.0 - 1.0))


class TestDuality:
    def test_strong_duality_random_draws(self):
        rng = np.random.default_rng(77)
        for k in range(50):
            inst = random_tiny_instance(
                rng, n_slots=int(rng.integers(2, 5)),
                n_devices=int(rng.integers(1, 3)),
                n_scenarios=int(rng.integers(1, 3)),
                battery=bool(rng.integers(0, 2)),
                generation=bool(rng.integers(0, 2)))
            prices = rng.uniform(0, 1, inst.n_slots) * inst.prices.competitor
            system, lp, sol, _, duals = solve_at(inst, prices)
            dual_obj = float(sol.duals @ lp.rhs)
            assert dual_obj == pytest.approx(sol.objective, rel=1e-6, abs=1e-8)
            assert complementarity_products(lp, sol).max() <= 1e-6
            # positive-sign convention for inequality multipliers
            for fam in ("demand_min", "power_cap", "batt_floor",
                        "batt_ceiling", "draw_cap", "dg_cap"):
                for v in duals.by_family.get(fam, {}).values():
                    assert v >= -1e-9

    def test_nonanticipativity_satisfied(self):
        rng = np.random.default_rng(5)
        inst = random_tiny_instance(rng, n_slots=4, n_devices=2, n_scenarios=2)
        prices = 0.7 * inst.prices.competitor
        _, _, _, fsol, _ = solve_at(inst, prices)
        leaves = inst.tree.leaves
        h_max = indistinguishability_time(leaves[0], leaves[1])
        assert h_max >= 0
        for f in ("xs", "xbs", "lams"):
            for h in range(h_max + 1):
                assert fsol.stored[f][0][h] == pytest.approx(
                    fsol.stored[f][1][h], abs=1e-9)
        for d, dev in enumerate(inst.devices):
            for h in dev.window.slots:
                if h > h_max:
                    continue
                k = h - dev.window.first
                for f in ("x", "xb", "lam", "sd"):
                    assert fsol.device_values[(f, 0, d)][k] == pytest.approx(
                        fsol.device_values[(f, 1, d)][k], abs=1e-9)

    def test_price_monotonicity(self):
        rng = np.random.default_rng(13)
        inst = random_tiny_instance(rng, n_slots=3, n_devices=2, battery=True,
                                    generation=True)
        prices = 0.5 * inst.prices.competitor
        _, _, base, _, _ = solve_at(inst, prices)
        for h in range(3):
            bumped = prices.copy()
            bumped[h] = min(bumped[h] + 0.5, inst.prices.competitor[h])
            _, _, sol, _, _ = solve_at(inst, bumped)
            assert sol.objective >= base.objective - 1e-9

    def test_free_generation_dominance(self):
        rng = np.random.default_rng(19)
        inst = random_tiny_instance(rng, n_slots=3, n_devices=2, battery=True,
                                    generation=True)
        prices = 0.6 * inst.prices.competitor
        _, _, lo, _, _ = solve_at(inst, prices)
        bigger = inst.replace(tree=single_path_tree(
            inst.tree.leaves[0].dg_bound + 1.0))
        _, _, hi, _, _ = solve_at(bigger, prices)
        assert hi.objective <= lo.objective + 1e-9

    def test_scipy_backend_agrees(self, t1):
        system = build_follower_system(t1)
        lp = build_follower_lp(t1, np.array([2.0, 2.5]), system)
        mine, _, _ = solve_follower(lp, system=system)
        other, _, _ = solve_follower(lp, backend="scipy", system=system)
        assert other.objective == pytest.approx(mine.objective, rel=1e-9)


def test_week_scale_build_and_counts():
    from gridtariff.generator import generate_week_instance
    inst = generate_week_instance(1)
    system = build_follower_system(inst)
    # single scenario: variables and rows both land in the tens of thousands
    assert 8_000 <= system.n_vars <= 60_000
    assert 3_000 <= system.n_rows <= 60_000
