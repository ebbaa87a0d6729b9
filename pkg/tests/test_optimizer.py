import math

import numpy as np
import pytest
from scipy import optimize

from ncpla.analysis import bound_kernel, message_ser, tag_kernel, tag_ser
from ncpla.config import SystemConfig, db_to_linear
from ncpla.constellation import InfeasibleError, design_constellation, message_only_ser
from ncpla.optimizer import (
    alpha_floor,
    golden_section,
    scheme_from_solution,
    solve_inner,
    solve_power_allocation,
    tradeoff_curve,
)


@pytest.fixture(scope="module")
def cfg11():
    return SystemConfig(N=128, L_m=4, L_t=2, gamma_m=db_to_linear(11), gamma_tot=db_to_linear(11))


def pieces(cfg, alpha):
    """Per-row objective, power and bound terms built from analysis kernels only."""
    con = design_constellation(L_m=cfg.L_m, gamma_m=alpha * cfg.gamma_tot, sigma2=cfg.sigma2)
    L_m, L_t, N = cfg.L_m, cfg.L_t, cfg.N
    j = np.arange(1, L_t)
    obj = lambda k: (L_t - 1) / (L_m * L_t) * tag_kernel(k, N)
    pw = lambda k, a: a * np.sum(np.exp(np.outer(k, j)) - 1, axis=1) / (L_m * L_t)
    bd = lambda k: bound_kernel(k, N, con.R, L_t) / L_m
    budget = (1 - alpha) * cfg.E_tot
    K = math.log(con.R) / (L_t - 1)
    return con, obj, pw, bd, budget, K


def dual_oracle(cfg, alpha, delta, n=40001):
    # Lagrangian relaxation on a fine grid; rows decouple for fixed multipliers
    con, obj, pw, bd, budget, K = pieces(cfg, alpha)
    k = np.linspace(0, K, n)[1:-1]
    O = obj(k)
    P = [pw(k, a) for a in con.A]
    Bd = bd(k)

    def dual(x):
        lam, mu = np.exp(x)
        total = 0.0
        for i in range(cfg.L_m):
            extra = mu * Bd if i < cfg.L_m - 1 else 0.0
            total += np.min(O + lam * P[i] + extra)
        return total - lam * budget - mu * delta

    xs = [(a, b) for a in np.linspace(-8, 6, 15) for b in np.linspace(0, 20, 21)]
    x0 = max(xs, key=dual)
    res = optimize.minimize(lambda x: -dual(x), x0, method="Nelder-Mead",
                            options={"xatol": 1e-9, "fatol": 1e-14, "maxiter": 4000})
    return -res.fun


@pytest.mark.parametrize("alpha", [0.6, 0.8181, 0.95])
def test_inner_solution_matches_dual_bound(cfg11, alpha):
    sol = solve_inner(cfg11, alpha, 1e-6)
    lower = dual_oracle(cfg11, alpha, 1e-6)
    assert sol.p_et_opt >= lower - 1e-7
    assert sol.p_et_opt - lower <= 1e-4


def test_inner_solution_is_feasible_and_stationary(cfg11):
    sol = solve_inner(cfg11, 0.8, 1e-6)
    con, obj, pw, bd, budget, K = pieces(cfg11, 0.8)
    used = sum(pw(np.array([k]), a)[0] for k, a in zip(sol.k, con.A))
    assert used <= budget * (1 + 1e-9)
    assert np.sum(bd(sol.k[:-1])) <= 1e-6 * (1 + 1e-9)
    assert np.all((sol.k > 0) & (sol.k < K))
    assert sol.kkt_residual <= 1e-8
    assert sol.status == "optimal"


def test_random_feasible_points_never_beat_solver(cfg11, rng):
    alpha = 0.8
    sol = solve_inner(cfg11, alpha, 1e-6)
    con, obj, pw, bd, budget, K = pieces(cfg11, alpha)
    # the feasible set is thin near the box corner, so sample around the optimum's scale
    k = rng.uniform(0, min(K, 1.1 * sol.k.max()), size=(4000, cfg11.L_m))
    used = sum(pw(k[:, i], con.A[i]) for i in range(cfg11.L_m))
    bnd = np.sum(bd(k[:, :-1]), axis=1)
    ok = (used <= budget) & (bnd <= 1e-6)
    assert ok.sum() > 100
    vals = np.sum(obj(k[ok]), axis=1)
    assert sol.p_et_opt <= vals.min() + 1e-6


def test_alpha_floor_meets_target_with_equality(cfg11):
    a0 = alpha_floor(cfg11, 1e-6)
    assert 0 < a0 < 1
    con = design_constellation(L_m=4, gamma_m=a0 * cfg11.gamma_tot)
    assert message_only_ser(128, con) <= 1e-6 * (1 + 1e-6)
    con_lo = design_constellation(L_m=4, gamma_m=0.999 * a0 * cfg11.gamma_tot)
    # the no-tag bound is above the exact SER, so just below alpha_0 it must exceed delta
    assert con_lo.R < con.R
    with pytest.raises(InfeasibleError):
        solve_inner(cfg11, 0.99 * a0, 1e-6)


def test_unreachable_target_raises():
    cfg = SystemConfig(N=16, L_m=8, gamma_m=2.0)
    assert alpha_floor(cfg, 1e-9) == math.inf
    with pytest.raises(InfeasibleError):
        solve_power_allocation(cfg, 1e-9)


def test_all_power_to_message_is_degenerate(cfg11):
    sol = solve_inner(cfg11, 1.0, 1e-6)
    assert sol.status == "degenerate"
    assert sol.E_t_used == 0.0
    np.testing.assert_array_equal(sol.r, 1.0)


def test_power_allocation_uses_whole_budget(cfg11):
    sol = solve_power_allocation(cfg11, 1e-6)
    assert abs(sol.power_slack) <= 1e-6 * sol.E_tot
    assert sol.p_em_upper_at_opt <= 1e-6 * (1 + 1e-9)
    for a in np.linspace(max(alpha_floor(cfg11, 1e-6), 0.4), 0.99, 7):
        assert sol.p_et_opt <= solve_inner(cfg11, float(a), 1e-6).p_et_opt + 1e-9


def test_scheme_from_solution_realises_design(cfg11):
    sol = solve_power_allocation(cfg11, 1e-6)
    s = scheme_from_solution(cfg11, sol)
    assert tag_ser(s, 128)[0] == pytest.approx(sol.p_et_opt, rel=1e-10)
    assert message_ser(s, 128) <= sol.p_em_upper_at_opt
    assert s.E_m + s.E_t == pytest.approx(cfg11.E_tot, rel=1e-6)


def test_tradeoff_duplicates_and_monotone(cfg11):
    pts = tradeoff_curve(cfg11, [1e-7, 1e-6, 1e-6, 1e-5])
    assert pts[1].p_et_opt == pts[2].p_et_opt
    vals = [p.p_et_opt for p in pts]
    assert vals[0] >= vals[1] >= vals[3]
    with pytest.raises(ValueError):
        tradeoff_curve(cfg11, [])


def test_tradeoff_flags_infeasible_points():
    cfg = SystemConfig(N=128, L_m=4, L_t=2, gamma_m=db_to_linear(8))
    pts = tradeoff_curve(cfg, [1e-12, 1e-3])
    assert pts[0].status == "infeasible" and pts[0].p_et_opt is None
    assert pts[1].status == "optimal"


def test_golden_section_quadratic():
    x, fx = golden_section(lambda t: (t - 0.3) ** 2 + 1, 0.0, 1.0, tol=1e-10)
    assert x == pytest.approx(0.3, abs=1e-7)
    assert fx == pytest.approx(1.0)


def test_solution_serialises(cfg11):
    d = solve_inner(cfg11, 0.8, 1e-6).to_dict()
    assert isinstance(d["k"], list) and d["status"] == "optimal"
