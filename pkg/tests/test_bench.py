import dataclasses

import numpy as np
import pytest

import hpipg.bench as bench
from hpipg.bench import (
    CSV_HEADER,
    GeneratorConfig,
    SweepResult,
    emit_csv,
    format_csv,
    generate,
    kkt_condition_dense,
    read_csv,
    reference_solve,
    run_sweep,
)
from hpipg.cones import CONE_SOC, CONE_ZERO, ConeBlock, ball_set, box_set, free_set
from hpipg.errors import HpipgError, InvalidConfig, InvalidInput, OracleFailed
from hpipg.linalg import StructuredSpdMatrix
from hpipg.problem import Qcp, validate

from oracles import brute_force_box_qp
from util import FakeTimer, dense_kkt_solve, equality_qp


class TestGeneratorConfig:
    def test_default_valid(self):
        GeneratorConfig().validate()

    @pytest.mark.parametrize("field,value", [
        ("horizon", 1),
        ("state_cost", (1.0, 1.0)),
        ("state_cost", (0.0, 1.0, 1.0, 1.0)),
        ("input_cost", (1.0,)),
        ("state_halfwidth", (-1.0, 1.0, 1.0, 1.0)),
        ("input_halfwidth", (1.0, 2.0, 3.0)),
        ("terminal_scale", 0.0),
        ("dt", 0.0),
        ("initial_state", (1.0, 2.0)),
    ])
    def test_rejects(self, field, value):
        cfg = dataclasses.replace(GeneratorConfig(), **{field: value})
        with pytest.raises(InvalidConfig):
            cfg.validate()


class TestGenerate:
    def test_shapes(self):
        qcp = generate(GeneratorConfig(horizon=3))
        assert qcp.n == 16
        assert qcp.m == 8
        validate(qcp)

    def test_cost_layout(self):
        cfg = GeneratorConfig(horizon=3, terminal_scale=7.0)
        diag = np.asarray(generate(cfg).P.entries)
        q = np.array(cfg.state_cost)
        assert np.array_equal(diag[0:4], q)
        assert np.array_equal(diag[4:8], q)
        assert np.array_equal(diag[8:12], 7.0 * q)
        assert np.array_equal(diag[12:16], np.tile(cfg.input_cost, 2))

    @pytest.mark.parametrize("horizon", [3, 5, 10])
    def test_equalities_have_full_row_rank(self, horizon):
        qcp = generate(GeneratorConfig(horizon=horizon))
        assert np.linalg.matrix_rank(qcp.G) == qcp.m

    def test_dynamics_rows_annihilate_simulated_trajectories(self):
        cfg = GeneratorConfig(horizon=4, dt=0.1)
        qcp = generate(cfg)
        dt = cfg.dt
        A = np.eye(4)
        A[0, 2] = A[1, 3] = dt
        B = np.zeros((4, 2))
        B[0, 0] = B[1, 1] = 0.5 * dt * dt
        B[2, 0] = B[3, 1] = dt
        rng = np.random.default_rng(0)
        inputs = rng.uniform(-1.0, 1.0, size=(3, 2))
        states = [np.array(cfg.initial_state, dtype=float)]
        for u in inputs:
            states.append(A @ states[-1] + B @ u)
        xi = np.concatenate([np.concatenate(states), inputs.ravel()])
        assert np.allclose(qcp.G @ xi - qcp.g, 0.0, atol=1e-12)

    def test_initial_state_is_pinned(self):
        cfg = GeneratorConfig(horizon=3)
        blk = generate(cfg).set_blocks[0]
        assert np.array_equal(blk.lower, cfg.initial_state)
        assert np.array_equal(blk.upper, cfg.initial_state)


class TestReferenceSolve:
    def test_equality_only_matches_dense_solve(self):
        rng = np.random.default_rng(1)
        qcp = equality_qp(rng, 8, 3)
        xi = reference_solve(qcp)
        xi_star, _ = dense_kkt_solve(qcp)
        assert np.allclose(xi, xi_star, atol=1e-9)

    def test_clamps_at_box_bound(self):
        # unconstrained minimizer (3, 0) gets clipped to the box
        qcp = Qcp(
            P=StructuredSpdMatrix.diagonal([1.0, 1.0]),
            p=np.array([-3.0, 0.0]),
            G=np.zeros((0, 2)),
            g=np.zeros(0),
            cone_blocks=[],
            set_blocks=[box_set([-1.0, -1.0], [1.0, 1.0])],
        )
        assert np.allclose(reference_solve(qcp), [1.0, 0.0], atol=1e-12)

    def test_random_box_qps_match_brute_force(self):
        rng = np.random.default_rng(2)
        for trial in range(20):
            n = 4
            P = np.diag(rng.uniform(0.5, 3.0, n))
            p = rng.standard_normal(n)
            G = rng.standard_normal((1, n))
            g = rng.standard_normal(1) * 0.3
            lo = np.full(n, -1.0)
            up = np.full(n, 1.0)
            qcp = Qcp(
                P=StructuredSpdMatrix.diagonal(np.diag(P)),
                p=p, G=G, g=g,
                cone_blocks=[ConeBlock(CONE_ZERO, 1)],
                set_blocks=[box_set(lo, up)],
            )
            expected = brute_force_box_qp(P, p, G, g, lo, up)
            assert expected is not None
            xi = reference_solve(qcp)
            assert np.allclose(xi, expected[0], atol=1e-8), f"trial {trial}"

    def test_pinned_variables_respected(self):
        qcp = generate(GeneratorConfig(horizon=3))
        xi = reference_solve(qcp)
        assert np.allclose(xi[:4], (5.0, 5.0, 0.0, 0.0), atol=0.0)

    def test_rejects_nonzero_cones(self):
        qcp = Qcp(
            P=StructuredSpdMatrix.diagonal([1.0, 1.0, 1.0]),
            p=np.zeros(3),
            G=np.eye(3),
            g=np.zeros(3),
            cone_blocks=[ConeBlock(CONE_SOC, 3)],
            set_blocks=[free_set(3)],
        )
        with pytest.raises(InvalidInput):
            reference_solve(qcp)

    def test_rejects_ball_sets(self):
        qcp = Qcp(
            P=StructuredSpdMatrix.diagonal([1.0, 1.0]),
            p=np.zeros(2),
            G=np.zeros((0, 2)),
            g=np.zeros(0),
            cone_blocks=[],
            set_blocks=[ball_set(2, 1.0)],
        )
        with pytest.raises(InvalidInput):
            reference_solve(qcp)

    def test_rejects_large_problems(self):
        qcp = Qcp(
            P=StructuredSpdMatrix.diagonal(np.ones(2001)),
            p=np.zeros(2001),
            G=np.zeros((0, 2001)),
            g=np.zeros(0),
            cone_blocks=[],
            set_blocks=[free_set(2001)],
        )
        with pytest.raises(InvalidInput):
            reference_solve(qcp)

    def test_sweep_cap_raises(self):
        qcp = self.deadlock_instance()
        with pytest.raises(OracleFailed):
            reference_solve(qcp, max_iters=1)

    def test_fallback_breaks_simultaneous_deadlock(self):
        # the simultaneous sweep fixes both variables in one step, leaving
        # the equality row no free column; the one-at-a-time fallback must
        # still deliver the verified solution
        qcp = self.deadlock_instance()
        assert np.allclose(reference_solve(qcp), [1.0, -0.5], atol=1e-10)

    def test_feasible_start_needs_alternating_projections(self):
        # one projection of the box center onto the equality line exits the
        # box; the alternating loop must still land in the intersection
        lo = np.array([0.0, 0.0])
        up = np.array([1.0, 10.0])
        G = np.array([[3.0, -1.0]])
        g = np.array([2.0])
        c = np.clip(0.0, lo, up)
        first = c - G[0] * (G[0] @ c - g[0]) / (G[0] @ G[0])
        assert first[1] < lo[1] - 0.1
        x = bench._feasible_start(np.eye(2), G, g, lo, up, lo == up)
        assert np.all(x >= lo - 1e-9) and np.all(x <= up + 1e-9)
        assert abs(G[0] @ x - g[0]) <= 1e-9

    def test_short_stiff_horizon_is_in_oracle_reach(self):
        # terminal weights this large once tripped the absolute verification
        # gate, and the deadlock fallback needs the alternating-projection
        # start on this family
        for terminal_scale in (1e4, 1e6):
            qcp = generate(GeneratorConfig(horizon=10, terminal_scale=terminal_scale))
            xi = reference_solve(qcp)
            assert np.allclose(xi[:4], (5.0, 5.0, 0.0, 0.0), atol=0.0)
            assert np.max(np.abs(qcp.G @ xi - qcp.g)) <= 1e-8

    def test_infeasible_intersection_fails_loudly(self):
        qcp = Qcp(
            P=StructuredSpdMatrix.diagonal([1.0, 1.0]),
            p=np.zeros(2),
            G=np.array([[1.0, 1.0]]),
            g=np.array([5.0]),
            cone_blocks=[ConeBlock(CONE_ZERO, 1)],
            set_blocks=[box_set([0.0, 0.0], [1.0, 1.0])],
        )
        with pytest.raises(OracleFailed):
            reference_solve(qcp)

    @staticmethod
    def deadlock_instance():
        return Qcp(
            P=StructuredSpdMatrix.diagonal([1.0, 1.0]),
            p=np.array([-4.0, 0.0]),
            G=np.array([[1.0, 1.0]]),
            g=np.array([0.5]),
            cone_blocks=[ConeBlock(CONE_ZERO, 1)],
            set_blocks=[box_set([-1.0, -1.0], [1.0, 1.0])],
        )


class TestKktConditionDense:
    def test_matches_svd_condition_number(self):
        rng = np.random.default_rng(3)
        P = np.diag(rng.uniform(0.5, 5.0, 5))
        G = rng.standard_normal((2, 5))
        K = np.block([[P, G.T], [G, np.zeros((2, 2))]])
        assert kkt_condition_dense(P, G) == pytest.approx(
            np.linalg.cond(K, 2), rel=1e-10)

    def test_singular_matrix_reported_infinite(self):
        assert kkt_condition_dense(np.zeros((1, 1)), np.zeros((0, 1))) == np.inf


class TestRunSweep:
    def small(self, **kw):
        args = dict(
            gammas=[1.0, 100.0],
            cfg=GeneratorConfig(horizon=6),
            max_iters=30_000,
        )
        args.update(kw)
        return run_sweep(**args)

    def test_grid_complete_and_ordered(self):
        results = self.small()
        keys = [(r.gamma, r.preconditioner) for r in results]
        assert keys == [
            (1.0, "hypersphere"), (1.0, "none"), (1.0, "ruiz"),
            (100.0, "hypersphere"), (100.0, "none"), (100.0, "ruiz"),
        ]
        assert all(r.error is None for r in results)

    def test_hypersphere_cells_converge_with_spectral_columns(self):
        results = self.small(preconditioners=["hypersphere"])
        for r in results:
            assert r.converged
            assert r.iterations < 30_000
            assert r.sigma_min is not None and r.sigma_min > 0
            assert r.sigma_max >= r.sigma_min
            assert r.spi_iterations >= 1
            assert r.kappa_kkt > 1.0
            assert r.presolve_ms >= 0.0 and r.solve_ms >= 0.0

    def test_baseline_cells_have_no_shifted_spectrum(self):
        results = self.small(gammas=[1.0], preconditioners=["none", "ruiz"])
        for r in results:
            assert r.sigma_min is None
            assert r.spi_iterations is None
            assert r.sigma_max > 0

    def test_duplicate_gammas_rejected(self):
        with pytest.raises(InvalidInput):
            run_sweep(gammas=[1.0, 1.0], cfg=GeneratorConfig(horizon=3))

    def test_unknown_preconditioner_rejected(self):
        with pytest.raises(InvalidInput):
            run_sweep(gammas=[1.0], preconditioners=["jacobi"],
                      cfg=GeneratorConfig(horizon=3))

    def test_reference_failure_poisons_whole_gamma(self, monkeypatch):
        def broken(qcp, max_iters=100):
            raise OracleFailed("forced for the test")
        monkeypatch.setattr(bench, "reference_solve", broken)
        results = run_sweep(gammas=[1.0], cfg=GeneratorConfig(horizon=3))
        assert len(results) == 3
        for r in results:
            assert r.error == "reference: forced for the test"
            assert r.iterations is None

    def test_deterministic_with_injected_timer(self):
        kw = dict(gammas=[1.0], cfg=GeneratorConfig(horizon=4),
                  max_iters=20_000)
        a = format_csv(run_sweep(timer=FakeTimer(), **kw))
        b = format_csv(run_sweep(timer=FakeTimer(), **kw))
        assert a == b


class TestCsv:
    def test_empty_results_is_header_only(self):
        assert format_csv([]) == CSV_HEADER + "\n"

    def test_single_row_frozen(self):
        row = SweepResult(
            gamma=1.0, preconditioner="hypersphere", kappa_kkt=2.5,
            iterations=340, converged=True, presolve_ms=1.0, solve_ms=2.0,
            sigma_min=0.5, sigma_max=2.0, spi_iterations=17,
        )
        assert format_csv([row]) == (
            CSV_HEADER + "\n"
            "1,hypersphere,2.5,340,true,1,2,0.5,2,17\n"
        )

    def test_error_row_leaves_fields_empty(self):
        row = SweepResult(gamma=10.0, preconditioner="none", error="boom")
        assert format_csv([row]) == CSV_HEADER + "\n10,none,,,,,,,,\n"

    def test_rows_sorted_on_output(self):
        rows = [
            SweepResult(gamma=10.0, preconditioner="none"),
            SweepResult(gamma=1.0, preconditioner="ruiz"),
            SweepResult(gamma=1.0, preconditioner="hypersphere"),
        ]
        lines = format_csv(rows).strip().split("\n")[1:]
        assert [ln.split(",")[:2] for ln in lines] == [
            ["1", "hypersphere"], ["1", "ruiz"], ["10", "none"],
        ]

    def test_seventeen_digit_floats_roundtrip(self, tmp_path):
        rows = [SweepResult(gamma=1.0, preconditioner="hypersphere",
                            kappa_kkt=4.144679515102584,
                            iterations=7, converged=False,
                            presolve_ms=0.1, solve_ms=1.0 / 3.0,
                            sigma_min=2.0 ** -40, sigma_max=1e17,
                            spi_iterations=3)]
        path = tmp_path / "sweep.csv"
        emit_csv(rows, path)
        back = read_csv(path)
        assert len(back) == 1
        for field in ("gamma", "preconditioner", "kappa_kkt", "iterations",
                      "converged", "presolve_ms", "solve_ms", "sigma_min",
                      "sigma_max", "spi_iterations"):
            assert getattr(back[0], field) == getattr(rows[0], field), field

    def test_none_fields_roundtrip(self, tmp_path):
        rows = [SweepResult(gamma=2.0, preconditioner="ruiz",
                            sigma_max=3.5, iterations=12, converged=True)]
        path = tmp_path / "sweep.csv"
        emit_csv(rows, path)
        back = read_csv(path)[0]
        assert back.sigma_min is None
        assert back.spi_iterations is None
        assert back.kappa_kkt is None
        assert back.iterations == 12

    def test_read_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("gamma,name\n1,x\n")
        with pytest.raises(InvalidInput):
            read_csv(path)

    def test_read_rejects_short_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(CSV_HEADER + "\n1,none,1\n")
        with pytest.raises(InvalidInput):
            read_csv(path)

    def test_read_rejects_bad_boolean(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(CSV_HEADER + "\n1,none,,,maybe,,,,,\n")
        with pytest.raises(InvalidInput):
            read_csv(path)
