import numpy as np
import pytest

from conftest import (
    flux_oracle_dhbar,
    flux_oracle_hbar,
    pendulum_hamiltonian,
    t1_hamiltonian,
    trivial_hamiltonian,
)
from evanskam.effective import (
    EffectiveTable,
    NonconvexTableError,
    biconjugate,
    convexity_check,
    legendre_transform,
    rotation_consistency,
    sweep_P,
    write_effective_csv,
    write_legendre_csv,
)
from evanskam.evans_solver import SolverConfig
from evanskam.torus_grid import TorusGrid


def quadratic_table(step=0.1, span=3.0):
    P = np.round(np.arange(-span, span + step / 2, step), 12)
    return EffectiveTable(
        k=8.0, P_grid=P[:, None], hbar=0.5 * P**2, Q=P[:, None].copy(), converged=np.ones(P.size, bool)
    )


class TestSweep:
    def test_free_case_closed_form(self):
        grid = TorusGrid(1, 16, 16)
        tab = sweep_P(trivial_hamiltonian(), grid, 8.0, [-1.0, 0.0, 1.0])
        assert np.all(tab.converged)
        assert np.allclose(tab.hbar, [0.5, 0.0, 0.5], atol=1e-10)
        assert np.allclose(tab.Q[:, 0], [-1.0, 0.0, 1.0], atol=1e-9)

    def test_drift_case_closed_form(self):
        # hbar(P) = P^2/2 + 1/4 and Q(P) = P since the drift averages to zero
        grid = TorusGrid(1, 32, 64)
        P_vals = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])
        tab = sweep_P(t1_hamiltonian(), grid, 8.0, P_vals)
        assert np.all(tab.converged)
        assert np.max(np.abs(tab.hbar - (0.5 * P_vals**2 + 0.25))) <= 1e-8
        assert np.max(np.abs(tab.Q[:, 0] - P_vals)) <= 1e-8

    def test_pendulum_against_flux_oracle(self):
        grid = TorusGrid(1, 64, 4)
        P_vals = np.array([0.0, 1.0, 1.5, 2.0])
        tab = sweep_P(pendulum_hamiltonian(), grid, 16.0, P_vals)
        assert np.all(tab.converged)
        for P, hb, q in zip(P_vals, tab.hbar, tab.Q[:, 0]):
            assert hb == pytest.approx(flux_oracle_hbar(16.0, float(P)), abs=5e-7)
            assert q == pytest.approx(flux_oracle_dhbar(16.0, float(P)), abs=2e-5)

    def test_pendulum_p2_in_band_and_near_reference(self):
        from evanskam.mather_limits import pendulum_reference
        from evanskam.hamiltonians import FourierSpec

        grid = TorusGrid(1, 64, 8)
        tab = sweep_P(pendulum_hamiltonian(), grid, 16.0, [2.0])
        ref = pendulum_reference(FourierSpec.build(1, [((1,), 1.0, 0.0)]), 2.0)
        assert 1.0 <= tab.hbar[0] <= 0.5 * 4.0 + 1.0
        assert abs(tab.hbar[0] - ref) <= 0.15

    def test_parallel_cold_start_matches_sequential(self):
        grid = TorusGrid(1, 32, 8)
        ham = pendulum_hamiltonian()
        P_vals = [-0.6, 0.0, 0.6]
        seq = sweep_P(ham, grid, 8.0, P_vals)
        par = sweep_P(ham, grid, 8.0, P_vals, jobs=2)
        assert np.max(np.abs(seq.hbar - par.hbar)) <= 1e-8

    def test_failed_entries_flagged_sweep_continues(self):
        grid = TorusGrid(1, 32, 8)
        cfg = SolverConfig(k=16.0, max_newton=1)
        tab = sweep_P(pendulum_hamiltonian(), grid, 16.0, [0.0, 2.0], config=cfg)
        assert bool(tab.converged[0])  # P = 0 solves immediately
        assert not bool(tab.converged[1])
        assert np.all(np.isfinite(tab.hbar))

    def test_symmetry_in_momentum(self):
        # V even in x and no drift: the sweep is even in P
        grid = TorusGrid(1, 32, 8)
        tab = sweep_P(pendulum_hamiltonian(), grid, 8.0, [-1.5, 1.5])
        assert abs(tab.hbar[0] - tab.hbar[1]) <= 1e-8
        assert abs(tab.Q[0, 0] + tab.Q[1, 0]) <= 1e-7

    def test_rotation_zero_at_origin(self):
        grid = TorusGrid(1, 32, 8)
        tab = sweep_P(pendulum_hamiltonian(), grid, 8.0, [0.0])
        assert abs(tab.Q[0, 0]) <= 1e-8

    def test_monotone_rotation(self):
        grid = TorusGrid(1, 32, 8)
        tab = sweep_P(pendulum_hamiltonian(), grid, 8.0, np.arange(-2.0, 2.01, 0.5))
        assert np.all(np.diff(tab.Q[:, 0]) >= -1e-6)

    def test_d2_coarse_sweep(self):
        # row-major 2-d momentum grid on a small torus; free case closed form
        from evanskam.hamiltonians import FourierSpec, MechanicalHamiltonian

        ham = MechanicalHamiltonian(d=2, eta=(FourierSpec.zero(1),) * 2, V=FourierSpec.zero(3))
        grid = TorusGrid(2, 8, 8)
        P_pts = np.array([[a, b] for a in (-0.5, 0.5) for b in (-0.5, 0.5)])
        tab = sweep_P(ham, grid, 4.0, P_pts)
        assert np.all(tab.converged)
        assert np.allclose(tab.hbar, 0.25, atol=1e-9)
        assert np.allclose(tab.Q, P_pts, atol=1e-8)
        leg = legendre_transform(tab, np.array([[0.0, 0.0], [0.5, 0.5]]))
        assert leg.lbar.shape == (2,)


class TestConvexityCheck:
    def test_quadratic(self):
        rep = convexity_check(0.5 * np.arange(-3, 3.01, 0.1) ** 2)
        assert rep.max_violation <= 1e-12
        assert rep.min_second_difference == pytest.approx(0.01, abs=1e-12)

    def test_absolute_value_kink(self):
        P = np.arange(-2.0, 2.01, 0.5)
        rep = convexity_check(np.abs(P))
        assert rep.max_violation <= 0.0 + 1e-15
        assert rep.min_second_difference == pytest.approx(0.0, abs=1e-15)

    def test_nonconvex_detected(self):
        rep = convexity_check(np.array([0.0, 1.0, 0.0]))
        assert rep.max_violation == pytest.approx(1.0)
        assert rep.min_second_difference == pytest.approx(-2.0)

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            convexity_check([1.0, 2.0])


class TestLegendre:
    def test_self_dual_quadratic(self):
        tab = quadratic_table()
        Q = np.round(np.arange(-2.0, 2.001, 0.1), 12)
        leg = legendre_transform(tab, Q)
        assert np.max(np.abs(leg.lbar - 0.5 * Q**2)) <= 5e-3

    def test_biconjugate_recovers_interior(self):
        tab = quadratic_table()
        back = biconjugate(tab)
        interior = np.abs(tab.P_grid[:, 0]) <= 2.0  # rotation range covers |P| <= 3 slopes only partly
        assert np.max(np.abs(back[interior] - tab.hbar[interior])) <= 1e-2

    def test_drift_case_dual(self):
        # dual of P^2/2 + 1/4 is Q^2/2 - 1/4
        grid = TorusGrid(1, 32, 64)
        P_vals = np.round(np.arange(-2.0, 2.001, 0.1), 12)
        tab = sweep_P(t1_hamiltonian(), grid, 8.0, P_vals)
        Q = np.round(np.arange(-1.0, 1.001, 0.1), 12)
        leg = legendre_transform(tab, Q)
        assert np.max(np.abs(leg.lbar - (0.5 * Q**2 - 0.25))) <= 5e-3

    def test_fenchel_young_on_tables(self):
        tab = quadratic_table()
        Q = np.round(np.arange(-2.0, 2.001, 0.1), 12)
        leg = legendre_transform(tab, Q)
        gaps = tab.hbar[None, :] + leg.lbar[:, None] - leg.Q_grid @ tab.P_grid.T
        assert float(gaps.min()) >= -1e-9

    def test_nonconvex_table_rejected_with_triple(self):
        P = np.array([-1.0, 0.0, 1.0])
        tab = EffectiveTable(
            k=4.0, P_grid=P[:, None], hbar=np.array([0.0, 1.0, 0.0]), Q=P[:, None], converged=np.ones(3, bool)
        )
        with pytest.raises(NonconvexTableError) as err:
            legendre_transform(tab, [0.0])
        assert "(0, 1, 2)" in str(err.value)


class TestRotationConsistency:
    def test_free_case(self):
        tab = quadratic_table()
        disc, _ = rotation_consistency(tab)
        assert disc <= 1e-10

    def test_drift_case(self):
        grid = TorusGrid(1, 32, 64)
        P_vals = np.round(np.arange(-1.0, 1.001, 0.1), 12)
        tab = sweep_P(t1_hamiltonian(), grid, 8.0, P_vals)
        disc, _ = rotation_consistency(tab)
        assert disc <= 1e-6

    def test_pendulum_truncation_dominated(self):
        # the independent flux oracle puts the centered-difference truncation
        # near the transition at 3.5e-2 for k=16, step 0.1; away from the
        # transition band the discrepancy is at the 5e-3 level
        grid = TorusGrid(1, 64, 8)
        P_vals = np.round(np.arange(-2.0, 2.001, 0.1), 12)
        tab = sweep_P(pendulum_hamiltonian(), grid, 16.0, P_vals, config=SolverConfig(k=16.0, grad_tol=1e-10))
        disc, per_entry = rotation_consistency(tab)
        assert disc <= 5e-2
        interior_P = tab.P_grid[1:-1, 0]
        away = np.abs(np.abs(interior_P) - 4.0 / np.pi) > 0.45
        assert np.max(per_entry[away]) <= 5e-3

    def test_d1_only(self):
        tab = EffectiveTable(
            k=1.0,
            P_grid=np.zeros((4, 2)),
            hbar=np.zeros(4),
            Q=np.zeros((4, 2)),
            converged=np.ones(4, bool),
        )
        with pytest.raises(ValueError):
            rotation_consistency(tab)


class TestCsv:
    def test_effective_round_trip_values(self, tmp_path):
        tab = quadratic_table(step=0.5, span=1.0)
        path = tmp_path / "eff.csv"
        write_effective_csv(tab, path, sidecar={"note": 1})
        lines = path.read_text().splitlines()
        assert lines[0] == "P0,hbar,Q0,converged"
        assert len(lines) == 1 + len(tab)
        first = lines[1].split(",")
        assert float(first[0]) == tab.P_grid[0, 0]
        assert float(first[1]) == tab.hbar[0]
        assert (tmp_path / "eff.csv.json").exists()

    def test_legendre_csv(self, tmp_path):
        tab = quadratic_table(step=0.5, span=1.0)
        leg = legendre_transform(tab, [0.0, 0.5])
        path = tmp_path / "leg.csv"
        write_legendre_csv(leg, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "Q0,lbar"
        assert len(lines) == 3
