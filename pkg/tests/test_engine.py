import math

import numpy as np
import pytest

from ilv.behavior import ResponseModel
from ilv.engine import (
    IlvConfig,
    RadiusSchedule,
    StoppingRule,
    net_normalized_movement,
    run_ilv,
    stopping_check,
)
from ilv.geometry import FeasibleRegion, lq_norm
from ilv.population import PointMass, PopulationSpec, Uniform


def make_config(region, initial, q=2.0, model=ResponseModel.BEST_RESPONSE,
                schedule=None, stopping=None, batch_size=1, **kw):
    return IlvConfig(
        region=region,
        initial=np.asarray(initial, dtype=float),
        q=q,
        model=model,
        schedule=schedule or RadiusSchedule(kind="harmonic", r0=0.2),
        stopping=stopping or StoppingRule(window=30, tol=1e-3, max_updates=2000),
        batch_size=batch_size,
        **kw,
    )


class TestRadiusSchedule:
    def test_harmonic(self):
        s = RadiusSchedule(kind="harmonic", r0=1.0)
        assert s.at(4) == pytest.approx(0.25)

    def test_stepped_after_decay(self):
        s = RadiusSchedule(kind="stepped", r0=1.0, decay_every=60)
        assert s.at(61) == pytest.approx(0.5)

    def test_stepped_at_boundary(self):
        s = RadiusSchedule(kind="stepped", r0=1.0, decay_every=60)
        assert s.at(60) == pytest.approx(1.0)

    def test_positive_and_nonincreasing(self):
        for s in (RadiusSchedule(kind="harmonic", r0=2.0),
                  RadiusSchedule(kind="stepped", r0=2.0, decay_every=7)):
            radii = [s.at(t) for t in range(1, 500)]
            assert all(r > 0 for r in radii)
            assert all(a >= b for a, b in zip(radii, radii[1:]))

    def test_harmonic_satisfies_step_size_conditions(self):
        # divergent sum, convergent sum of squares (checked over a long horizon)
        r = np.array([RadiusSchedule(kind="harmonic", r0=1.0).at(t)
                      for t in range(1, 200_000)])
        assert r.sum() > 12.0  # ~log(2e5), still growing
        assert (r ** 2).sum() < math.pi ** 2 / 6 + 1e-6

    def test_batched_updates_share_radius(self):
        s = RadiusSchedule(kind="stepped", r0=1.0, decay_every=60)
        # with batches of 10: six updates per decay step
        assert [s.for_update(u, 10) for u in (1, 6, 7, 12, 13)] == \
            [1.0, 1.0, 0.5, 0.5, pytest.approx(1 / 3)]

    def test_invalid(self):
        with pytest.raises(ValueError):
            RadiusSchedule(kind="harmonic", r0=0.0)
        with pytest.raises(ValueError):
            RadiusSchedule(kind="nope", r0=1.0)


class TestStopping:
    def test_all_equal(self):
        rule = StoppingRule(window=3, tol=0.1, max_updates=10)
        pts = [np.array([1.0, 2.0])] * 4
        assert stopping_check(pts, rule)

    def test_two_apart(self):
        rule = StoppingRule(window=3, tol=0.1, max_updates=10)
        pts = [np.array([0.0, 0.0]), np.array([0.2, 0.0]),
               np.array([0.0, 0.0]), np.array([0.0, 0.0])]
        assert not stopping_check(pts, rule)

    def test_within_half_tolerance(self):
        rule = StoppingRule(window=3, tol=0.1, max_updates=10)
        pts = [np.array([0.0]), np.array([0.05]), np.array([0.02]), np.array([0.04])]
        assert stopping_check(pts, rule)

    def test_invariants(self):
        with pytest.raises(ValueError):
            StoppingRule(window=1, tol=0.1, max_updates=10)
        with pytest.raises(ValueError):
            StoppingRule(window=5, tol=0.1, max_updates=4)


class TestRunIlv:
    def test_point_mass_population_is_fixed_point(self):
        spec = PopulationSpec(family="lp", seed=5, p=2.0,
                              ideal_dists=(PointMass(0.5), PointMass(0.5)))
        region = FeasibleRegion.unit_box(2)
        cfg = make_config(region, [0.5, 0.5],
                          stopping=StoppingRule(window=5, tol=1e-6, max_updates=100))
        traj = run_ilv(cfg, spec.stream())
        assert traj.terminal_status == "converged"
        assert traj.updates == 5
        for _, _, p in traj.iterates:
            np.testing.assert_allclose(p, [0.5, 0.5])

    def test_one_dim_median_convergence(self):
        # tent utilities, uniform ideals on [0,1]: converges near the median;
        # oracle = componentwise median of a large frozen sample (0.5 here)
        spec = PopulationSpec(family="decomposable", seed=6,
                              ideal_dists=(Uniform(0, 1),))
        median_oracle = float(np.median(spec.sample_ideals(100_000)))
        region = FeasibleRegion.unit_box(1)
        cfg = make_config(region, [0.05], q=math.inf,
                          stopping=StoppingRule(window=30, tol=1e-4, max_updates=4000))
        traj = run_ilv(cfg, spec.stream())
        assert abs(traj.terminal[0] - median_oracle) < 0.05

    def test_every_iterate_feasible(self):
        spec = PopulationSpec(family="lp", seed=7, p=2.0,
                              ideal_dists=(Uniform(0, 1), Uniform(0, 1)))
        region = FeasibleRegion.unit_box(2)
        cfg = make_config(region, [0.9, 0.9],
                          stopping=StoppingRule(window=10, tol=1e-5, max_updates=300))
        traj = run_ilv(cfg, spec.stream())
        for _, _, p in traj.iterates:
            assert region.contains(p, tol=1e-9)

    def test_step_norm_bounded_by_radius(self):
        for q in (1.0, 2.0, math.inf):
            spec = PopulationSpec(family="lp", seed=8, p=2.0,
                                  ideal_dists=(Uniform(0, 1), Uniform(0, 1)))
            region = FeasibleRegion.unit_box(2)
            cfg = make_config(region, [0.5, 0.5], q=q,
                              model=ResponseModel.GRADIENT_STEP, batch_size=3,
                              stopping=StoppingRule(window=10, tol=1e-7, max_updates=60))
            traj = run_ilv(cfg, spec.stream())
            pts = traj.points()
            radii = traj.radii()
            # raw responses stay in the ball; averaging cannot leave it
            for rec in traj.responses:
                r = radii[rec.update - 1]
                assert lq_norm(rec.point - pts[rec.update - 1], q) <= r + 1e-9

    def test_bit_identical_replays(self):
        spec = PopulationSpec(family="lp", seed=9, p=2.0,
                              ideal_dists=(Uniform(0, 1), Uniform(0, 1)))
        region = FeasibleRegion.unit_box(2)
        cfg = make_config(region, [0.2, 0.8], batch_size=4,
                          schedule=RadiusSchedule(kind="stepped", r0=0.2, decay_every=60),
                          stopping=StoppingRule(window=10, tol=1e-6, max_updates=80))
        a = run_ilv(cfg, spec.stream())
        b = run_ilv(cfg, spec.stream())
        assert a.updates == b.updates
        assert np.array_equal(a.points(), b.points())

    def test_batch_mean_step_matches_single_step_in_expectation(self):
        # the averaged batch movement is an unbiased single step: compare
        # Monte Carlo means within 3 standard errors
        spec = PopulationSpec(family="lp", seed=10, p=2.0,
                              ideal_dists=(Uniform(0, 1), Uniform(0, 1)))
        x = np.array([0.3, 0.7])
        r = 0.05
        stream = spec.stream(lane=(3,))
        from ilv.behavior import best_response
        steps = np.array([best_response(stream.next_voter(), x, r, 2.0).point - x
                          for _ in range(4000)])
        singles = steps.mean(axis=0)
        batches = steps.reshape(400, 10, 2).mean(axis=1).mean(axis=0)
        se = steps.std(axis=0) / math.sqrt(len(steps))
        assert np.all(np.abs(singles - batches) <= 3 * se + 1e-12)

    def test_infeasible_initial_rejected(self):
        region = FeasibleRegion.unit_box(2)
        with pytest.raises(ValueError):
            make_config(region, [2.0, 0.0])


class TestNetNormalizedMovement:
    def _traj_from_steps(self, steps, r=0.1):
        spec = PopulationSpec(family="lp", seed=1, p=2.0, ideal_dists=(PointMass(0.5),))
        region = FeasibleRegion.unit_box(1)
        cfg = make_config(region, [0.5],
                          schedule=RadiusSchedule(kind="harmonic", r0=r),
                          stopping=StoppingRule(window=2, tol=1e-12,
                                                max_updates=len(steps)))
        traj = run_ilv(cfg, spec.stream())
        # overwrite with synthetic iterates: x moves by steps[s]*r_s each update
        x = 0.5
        iterates = [(0, None, np.array([x]))]
        for t, s in enumerate(steps, start=1):
            radius = cfg.schedule.at(t)
            x += s * radius
            iterates.append((t, radius, np.array([x])))
        traj.iterates = iterates
        return traj

    def test_alternating_steps_cancel(self):
        traj = self._traj_from_steps([+1, -1, +1, -1, +1, -1])
        np.testing.assert_allclose(net_normalized_movement(traj, 6, 6), [0.0], atol=1e-12)

    def test_constant_steps_give_one(self):
        traj = self._traj_from_steps([+1] * 8)
        np.testing.assert_allclose(net_normalized_movement(traj, 8, 4), [1.0])

    def test_stationary_gives_zero(self):
        traj = self._traj_from_steps([0] * 5)
        np.testing.assert_allclose(net_normalized_movement(traj, 5, 3), [0.0])

    def test_window_bounds_checked(self):
        traj = self._traj_from_steps([+1] * 4)
        with pytest.raises(ValueError):
            net_normalized_movement(traj, 3, 4)
        with pytest.raises(ValueError):
            net_normalized_movement(traj, 9, 2)


class TestTrajectoryExport:
    def test_ndjson_and_table(self, tmp_path):
        import json
        spec = PopulationSpec(family="lp", seed=11, p=2.0,
                              ideal_dists=(Uniform(0, 1), Uniform(0, 1)))
        region = FeasibleRegion.unit_box(2)
        cfg = make_config(region, [0.5, 0.5],
                          stopping=StoppingRule(window=5, tol=1e-7, max_updates=20))
        traj = run_ilv(cfg, spec.stream())
        nd = tmp_path / "t.ndjson"
        tb = tmp_path / "t.tsv"
        traj.write_ndjson(nd)
        traj.write_table(tb)
        lines = nd.read_text().strip().split("\n")
        assert len(lines) == traj.updates + 2  # iterates + summary
        summary = json.loads(lines[-1])["summary"]
        assert summary["terminal_status"] == traj.terminal_status
        rows = tb.read_text().strip().split("\n")
        assert rows[0].split("\t") == ["t", "r", "x0", "x1"]
        assert len(rows) == traj.updates + 3  # header + iterates + summary
        assert rows[-1].startswith("# ")
        assert f"terminal_status={traj.terminal_status}" in rows[-1]
