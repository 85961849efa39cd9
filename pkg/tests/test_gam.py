"""Tests for the finite-direction additive-model solver."""
import numpy as np
import pytest

from ridgegam import gam, rsn, sphere, weighting
from ridgegam.train import DatasetLoss

from oracles import dense_qp_oracle, synthetic_cell_weights


def tiny_instance(seed, m=1, d_out=1):
    rng = np.random.default_rng(seed)
    part = sphere.partition_circle(m)
    weights = synthetic_cell_weights(m, J=17, lo=-1.0, hi=1.0,
                                     supp=(-0.75, 0.75), seed=seed)
    X = rng.uniform(-0.6, 0.6, size=(8, 2))
    Y = rng.normal(size=(8, d_out))
    ds = DatasetLoss(X=X, Y=Y)
    return ds, part, weights


def test_solver_matches_dense_qp_oracle():
    for seed in range(20):
        m = 1 + seed % 2
        ds, part, weights = tiny_instance(seed, m=m)
        lam = float(np.random.default_rng(seed).uniform(0.05, 1.0))
        h = weights.h_pos
        sol = gam.solve_agam(ds, part, weights, lam, grid_step=h)
        r_o, phi_o = dense_qp_oracle(ds, part, weights, lam, h)
        np.testing.assert_allclose(sol.profiles.positions, r_o, atol=1e-12)
        assert np.max(np.abs(sol.profiles.phi - phi_o)) <= 1e-8


def test_solver_matches_oracle_vector_output():
    ds, part, weights = tiny_instance(100, m=2, d_out=2)
    sol = gam.solve_agam(ds, part, weights, 0.3, grid_step=weights.h_pos)
    _, phi_o = dense_qp_oracle(ds, part, weights, 0.3, weights.h_pos)
    assert np.max(np.abs(sol.profiles.phi - phi_o)) <= 1e-8


def test_iterative_path_matches_direct_path():
    ds, part, weights = tiny_instance(7, m=2)
    direct = gam.solve_agam(ds, part, weights, 0.4, grid_step=weights.h_pos)
    # force the generic convex-loss route by a fresh dataset flagged as
    # squared but solved with the L-BFGS branch via the logit... instead, use
    # the public API: cross-entropy on (0,1) labels approaches the same
    # stationary system only for identity/squared, so compare objectives of
    # random perturbations instead (optimality certificate).
    rng = np.random.default_rng(8)
    base = objective_value(direct, ds, weights, 0.4)
    for _ in range(100):
        pert = perturb_feasible(direct.profiles, weights, rng, 1e-4)
        assert objective_with_profiles(pert, direct, ds, weights, 0.4) \
            >= base - 1e-10


def objective_value(sol, ds, weights, lam):
    resid = ds.Y - sol(ds.X)
    return float(np.sum(resid ** 2)) + lam * gam.penalty_agam(sol.profiles,
                                                              weights)


def objective_with_profiles(profiles, sol, ds, weights, lam):
    cand = gam.AgamSolution(profiles=profiles, link=sol.link, objective=0.0,
                            loss=0.0, penalty=0.0)
    resid = ds.Y - cand(ds.X)
    return float(np.sum(resid ** 2)) + lam * gam.penalty_agam(profiles,
                                                              weights)


def perturb_feasible(profiles, weights, rng, scale):
    """Random perturbation respecting the boundary constraints."""
    phi = profiles.phi.copy()
    r = profiles.positions
    for c in range(profiles.m):
        lo_s, hi_s = weights.support[c]
        a = max(int(np.searchsorted(r, lo_s - 1e-12)) - 1, 0)
        b = min(int(np.searchsorted(r, hi_s + 1e-12, side="right")) - 1,
                r.size - 2)
        delta = np.zeros((r.size, phi.shape[2]))
        delta[a + 2:b + 2] = scale * rng.normal(size=(b - a, phi.shape[2]))
        # affine continuation to the right of the free band
        for j in range(b + 2, r.size):
            t = j - (b + 1)
            delta[j] = delta[b + 1] + t * (delta[b + 1] - delta[b])
        phi[c] += delta
    return gam.ProfileSet(directions=profiles.directions,
                          positions=profiles.positions, phi=phi,
                          supp=profiles.supp, lam=profiles.lam,
                          gbar_used=profiles.gbar_used, eps=profiles.eps)


def test_zero_data_gives_zero_profiles():
    ds, part, weights = tiny_instance(3, m=2)
    ds0 = DatasetLoss(X=ds.X, Y=np.zeros_like(ds.Y))
    sol = gam.solve_agam(ds0, part, weights, 0.5, grid_step=weights.h_pos)
    assert np.max(np.abs(sol.profiles.phi)) <= 1e-10
    assert sol.penalty == pytest.approx(0.0, abs=1e-18)


def test_profiles_vanish_left_and_affine_right():
    ds, part, weights = tiny_instance(5, m=1)
    sol = gam.solve_agam(ds, part, weights, 0.2, grid_step=weights.h_pos)
    r = sol.profiles.positions
    phi = sol.profiles.phi[0, :, 0]
    left = r < weights.support[0, 0] - 1e-9
    assert np.all(phi[left] == 0.0)
    # second differences vanish beyond the support
    right = np.flatnonzero(r > weights.support[0, 1] + 1e-9)
    for j in right[:-1]:
        if j + 1 < r.size and j >= 1:
            d2 = phi[j - 1] - 2 * phi[j] + phi[j + 1]
            assert abs(d2) <= 1e-9


def test_poincare_chain_on_solver_output():
    ds, part, weights = tiny_instance(9, m=2)
    sol = gam.solve_agam(ds, part, weights, 0.15, grid_step=weights.h_pos)
    r = sol.profiles.positions
    h = sol.profiles.h
    length = r[-1] - r[0]
    for c in range(part.m):
        phi = sol.profiles.phi[c]
        d1 = np.diff(phi, axis=0) / h
        d2 = np.diff(phi, 2, axis=0) / h ** 2
        sup = np.max(np.linalg.norm(phi, axis=1))
        sup1 = np.max(np.linalg.norm(d1, axis=1))
        sup2 = np.max(np.linalg.norm(d2, axis=1))
        assert sup <= length * sup1 + 1e-12
        assert sup1 <= length * sup2 + 1e-12


def test_grid_refinement_stabilizes_objective():
    ds, part, weights = tiny_instance(11, m=2)
    h = weights.h_pos
    obj = [gam.solve_agam(ds, part, weights, 0.3, grid_step=step).objective
           for step in (h, h / 2)]
    assert abs(obj[1] - obj[0]) <= 0.01 * abs(obj[0])


def test_grid_too_coarse_raises():
    ds, part, weights = tiny_instance(2, m=1)
    with pytest.raises(gam.GridTooCoarseError):
        gam.solve_agam(ds, part, weights, 0.3, grid_step=0.5)


def test_penalty_zero_profile_is_zero():
    _, part, weights = tiny_instance(4, m=2)
    r = weights.positions
    profiles = gam.ProfileSet(directions=part.centers, positions=r,
                              phi=np.zeros((2, r.size, 1)),
                              supp=weights.support, lam=1.0, gbar_used=1.0,
                              eps=weights.eps_floor())
    assert gam.penalty_agam(profiles, weights) == 0.0


def test_penalty_separable_profile_quadrature():
    # phi_s(r) = c(s) q(r) with q quadratic: curvature is exactly constant
    m = 4
    weights = synthetic_cell_weights(m, J=81, lo=-2.0, hi=2.0,
                                     supp=(-1.0, 1.0), seed=1, flat=True)
    weights.g_check[:, :] = np.where(weights.g_check > 0, 1.0, 0.0)
    part = sphere.partition_circle(m)
    r = weights.positions
    cs = np.array([1.0, 2.0, 0.5, 1.5])
    phi = np.zeros((m, r.size, 1))
    for c in range(m):
        phi[c, :, 0] = cs[c] * r ** 2
    profiles = gam.ProfileSet(directions=part.centers, positions=r,
                              phi=phi, supp=weights.support, lam=1.0,
                              gbar_used=1.0, eps=weights.eps_floor())
    # integral over supp of (2 c)^2 / 1 dr = 8 c^2, times gbar_check
    expected = weights.gbar_check * float(np.sum(8.0 * cs ** 2))
    assert gam.penalty_agam(profiles, weights) == pytest.approx(
        expected, rel=1e-3)


def test_agam_igam_round_trip():
    wg = weighting.estimate_weighting(
        rsn.InitDistribution("uniform_cube", c=1.0, seed=2), 2,
        dir_grid=32, pos_grid=96, n_samples=50_000)
    part = sphere.partition_circle(8)
    rng = np.random.default_rng(3)
    phi = rng.normal(size=(32, wg.positions.size, 1))
    family = gam.ProfileSet(directions=wg.directions, positions=wg.positions,
                            phi=phi, supp=wg.support, lam=1.0,
                            gbar_used=wg.gbar, eps=wg.eps_floor())
    cells = gam.agam_from_igam(family, part)
    lifted = gam.igam_from_agam(cells, part, part.centers)
    # lifting a discretization back at the cell centers recovers the cell
    # profile divided by the cell measure times the measure again
    np.testing.assert_allclose(lifted.phi * part.measures[:, None, None],
                               cells.phi, atol=1e-12)


def test_igam_penalty_reduces_to_two_term_sum_in_d1():
    wg = weighting.estimate_weighting(
        rsn.InitDistribution("uniform_cube", c=1.0, seed=4), 1,
        dir_grid=2, pos_grid=128, n_samples=50_000)
    rng = np.random.default_rng(5)
    phi = rng.normal(size=(2, wg.positions.size, 1))
    family = gam.ProfileSet(directions=wg.directions, positions=wg.positions,
                            phi=phi, supp=wg.support, lam=1.0,
                            gbar_used=wg.gbar, eps=wg.eps_floor())
    total = gam.penalty_igam(family, wg)
    parts = gam._penalty_tables(family, lambda c, r: wg.g_at(c, r),
                                wg.eps_floor())
    assert total == pytest.approx(wg.gbar * (parts[0] + parts[1]))


def test_solution_grad_matches_finite_differences():
    ds, part, weights = tiny_instance(13, m=2)
    sol = gam.solve_agam(ds, part, weights, 0.25, grid_step=weights.h_pos)
    rng = np.random.default_rng(14)
    h = 1e-6
    for x in rng.uniform(-0.5, 0.5, size=(5, 2)):
        g = sol.grad(x[None])[0]
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (sol((x + e)[None]) - sol((x - e)[None])) / (2 * h)
            np.testing.assert_allclose(g[:, i], fd[0], atol=1e-5)
