"""Message-based embedding design by convex optimisation.

For a fixed message power the tag ratios ``r_i = exp(k_i)`` minimise the tag
SER subject to the remaining power budget and an upper bound on the message
SER.  The program is convex in ``k`` on the open box
``0 < k_i < ln R / (L_t - 1)`` and is solved with a log-barrier interior
point method.  An outer one-dimensional search then splits the total power
between message and tag.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .analysis import tag_kernel, u_of_k
from .config import SystemConfig
from .constellation import InfeasibleError, design_constellation, ratio_for_snr
from .embedding import build_message_based
from .special_math import solve_monotone

__all__ = [
    "OptSolution",
    "InnerProblem",
    "solve_inner",
    "solve_power_allocation",
    "alpha_floor",
    "tradeoff_curve",
    "golden_section",
    "tag_kernel_derivatives",
    "scheme_from_solution",
]

BOX_TOL = 1e-10
GAP_TOL = 1e-9


def _du_dk(k):
    k = np.asarray(k, dtype=float)
    small = np.abs(k) < 1e-3
    ks = np.where(small, 1.0, k)
    em = np.expm1(ks)
    exact = (em - ks * np.exp(ks)) / em**2
    series = -0.5 + k / 6 - k**3 / 180
    return np.where(small, series, exact)


def _kernel(k, N):
    # unchecked twin of analysis.tag_kernel for the solver's inner loop
    em = np.expm1(k)
    u = np.where(k == 0, 1.0, k / np.where(k == 0, 1.0, em))
    return special.gammaincc(N, N * (u + k)) + special.gammainc(N, N * u)


def tag_kernel_derivatives(k, N):
    """First and second derivative of ``F(k) = 1 + G(N u) - G(N v)``.

    Uses ``F'(k) = -(N u)^N e^{-N u} / (N-1)!``, which follows from
    ``v = u e^k`` and makes both terms of the chain rule collapse.
    """
    k = np.asarray(k, dtype=float)
    u = u_of_k(k)
    with np.errstate(divide="ignore"):
        log_mag = N * np.log(N * u) - N * u - math.lgamma(N)
    d1 = -np.exp(log_mag)
    d2 = d1 * N * _du_dk(k) * (1.0 - u) / u
    return d1, d2


@dataclass
class OptSolution:
    """Optimal message-based design for one power split.

    ``status`` is ``"optimal"`` or ``"degenerate"`` (no room for tags: the
    budget is zero or the reliability target is met with equality at
    ``k -> 0``).
    """

    k: np.ndarray
    r: np.ndarray
    p_et_opt: float
    p_em_upper_at_opt: float
    E_t_used: float
    kkt_residual: float
    alpha_star: float
    E_m: float
    E_tot: float
    R: float
    delta: float
    status: str = "optimal"
    iterations: int = 0
    multipliers: dict = field(default_factory=dict)

    @property
    def power_slack(self):
        return self.E_tot - self.E_m - self.E_t_used

    def to_dict(self):
        d = asdict(self)
        d["k"] = self.k.tolist()
        d["r"] = self.r.tolist()
        return d


class InnerProblem:
    """Inner convex program in ``k`` for a fixed message constellation."""

    def __init__(self, N, L_m, L_t, R, A1, budget, delta):
        self.N, self.L_m, self.L_t = int(N), int(L_m), int(L_t)
        self.R = float(R)
        self.A1 = np.asarray(A1, dtype=float)
        self.budget = float(budget)
        self.delta = float(delta)
        self.K = math.log(self.R) / (self.L_t - 1)
        self.j = np.arange(1, self.L_t)
        self._obj_scale = (self.L_t - 1) / (self.L_m * self.L_t)
        self._pow_scale = 1.0 / (self.L_m * self.L_t)

    # objective -------------------------------------------------------------
    def objective(self, k):
        return float(self._obj_scale * np.sum(_kernel(np.asarray(k, dtype=float), self.N)))

    def objective_derivs(self, k):
        d1, d2 = tag_kernel_derivatives(k, self.N)
        return self._obj_scale * d1, self._obj_scale * d2

    # power -----------------------------------------------------------------
    def power(self, k):
        e = np.exp(np.outer(k, self.j))
        return float(self._pow_scale * np.sum(self.A1 * np.sum(e - 1.0, axis=1)))

    def power_derivs(self, k):
        e = np.exp(np.outer(k, self.j))
        d1 = self._pow_scale * self.A1 * (e @ self.j)
        d2 = self._pow_scale * self.A1 * (e @ self.j**2)
        return d1, d2

    # message SER bound -----------------------------------------------------
    def _s(self, k):
        return math.log(self.R) - (self.L_t - 1) * np.asarray(k, dtype=float)

    def ser_bound(self, k):
        k = np.asarray(k, dtype=float)
        return float(np.sum(_kernel(self._s(k[:-1]), self.N)) / self.L_m)

    def ser_derivs(self, k):
        k = np.asarray(k, dtype=float)
        d1 = np.zeros_like(k)
        d2 = np.zeros_like(k)
        f1, f2 = tag_kernel_derivatives(self._s(k[:-1]), self.N)
        c = self.L_t - 1
        d1[:-1] = -c * f1 / self.L_m
        d2[:-1] = c * c * f2 / self.L_m
        return d1, d2

    # feasibility -----------------------------------------------------------
    def constraints(self, k):
        """Values of all ``c(k) <= 0`` constraints: power, SER, box (raw units)."""
        k = np.asarray(k, dtype=float)
        return np.concatenate([
            [self.power(k) - self.budget, self.ser_bound(k) - self.delta],
            BOX_TOL - k,
            k - (self.K - BOX_TOL),
        ])

    def is_strictly_feasible(self, k):
        return bool(np.all(self.constraints(k) < 0))

    def _normalized(self, k):
        """Constraints scaled to order one, with Jacobian and diagonal Hessians.

        Power and SER rows are divided by their right-hand sides so the barrier
        sees comparable curvature whatever the budget and target.
        """
        n = self.L_m
        p1, p2 = self.power_derivs(k)
        s1, s2 = self.ser_derivs(k)
        eye = np.eye(n)
        c = np.concatenate([
            [self.power(k) / self.budget - 1.0, self.ser_bound(k) / self.delta - 1.0],
            BOX_TOL - k,
            k - (self.K - BOX_TOL),
        ])
        J = np.vstack([p1 / self.budget, s1 / self.delta, -eye, eye])
        Hd = np.vstack([p2 / self.budget, s2 / self.delta, np.zeros((2 * n, n))])
        return c, J, Hd

    def _uniform_start(self):
        lo, hi = BOX_TOL, self.K - BOX_TOL
        if not hi > lo:
            return None

        def slack(c):
            kk = np.full(self.L_m, c)
            return max(self.power(kk) / self.budget - 1.0, self.ser_bound(kk) / self.delta - 1.0)

        if slack(lo) >= 0:
            return None
        if slack(hi) < 0:
            c = 0.5 * (lo + hi)
        else:
            c = 0.5 * (lo + solve_monotone(slack, lo, hi, tol=1e-15))
            if c <= lo:
                return None
        return np.full(self.L_m, c)

    # barrier method --------------------------------------------------------
    def _barrier_value(self, k, t, scale):
        if np.any(k <= BOX_TOL) or np.any(k >= self.K - BOX_TOL):
            return math.inf
        c = self.constraints(k)
        c[0] /= self.budget
        c[1] /= self.delta
        if np.any(c >= 0):
            return math.inf
        return t * self.objective(k) / scale - float(np.sum(np.log(-c)))

    def _center(self, k, t, scale, max_iter=25):
        """Damped Newton on the barrier function; returns ``(k, iters, converged)``."""
        for it in range(1, max_iter + 1):
            c, J, Hd = self._normalized(k)
            f1, f2 = self.objective_derivs(k)
            inv = -1.0 / c
            grad = t * f1 / scale + J.T @ inv
            H = np.diag(t * f2 / scale + inv @ Hd) + (J * inv[:, None] ** 2).T @ J
            try:
                L = np.linalg.cholesky(H)
                step = -np.linalg.solve(L.T, np.linalg.solve(L, grad))
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(H, grad, rcond=None)[0]
            dec2 = float(-grad @ step)
            if dec2 / 2 <= 1e-14:
                return k, it, True
            f0 = self._barrier_value(k, t, scale)
            s = 1.0
            while True:
                cand = k + s * step
                fc = self._barrier_value(cand, t, scale)
                if fc <= f0 - 0.25 * s * dec2:
                    break
                # inside the quadratic region roundoff can hide the decrease
                if s == 1.0 and dec2 < 1e-6 and math.isfinite(fc):
                    break
                s *= 0.5
                if s < 1e-12:
                    return k, it, False
            k = cand
        return k, max_iter, False

    def _polish(self, k, lam, scale, tol=1e-13, max_iter=30):
        """Newton on the KKT equalities of a guessed active set.

        The barrier leaves a ``1/t`` bias on every active constraint and can
        stop far from bounds whose multiplier is tiny.  Candidate active sets
        are the ``q`` smallest-slack constraints, ``q = 1..L_m``; the first one
        whose Newton solve gives non-negative multipliers, strict feasibility
        of the rest and a vanishing residual is kept.
        """
        c, _, _ = self._normalized(k)
        order = np.argsort(-c)
        for q in range(1, self.L_m + 1):
            out = self._polish_on(k, lam, np.sort(order[:q]), scale, tol, max_iter)
            if out is not None:
                return out
        return None

    def _polish_on(self, k, lam, active, scale, tol, max_iter):
        n = self.L_m
        x = k.copy()
        mu = lam[active].copy()
        for _ in range(max_iter):
            c, J, Hd = self._normalized(x)
            f1, f2 = self.objective_derivs(x)
            JA = J[active]
            r = np.concatenate([f1 / scale + JA.T @ mu, c[active]])
            if np.max(np.abs(r)) < tol:
                break
            KKT = np.zeros((n + active.size, n + active.size))
            KKT[:n, :n] = np.diag(f2 / scale + mu @ Hd[active])
            KKT[:n, n:] = JA.T
            KKT[n:, :n] = JA
            try:
                d = np.linalg.solve(KKT, -r)
            except np.linalg.LinAlgError:
                return None
            x = x + d[:n]
            mu = mu + d[n:]
            if not np.all(np.isfinite(x)) or np.any(x <= 0) or np.any(x >= self.K):
                return None
        c, J, _ = self._normalized(x)
        f1, _ = self.objective_derivs(x)
        station = f1 / scale + J[active].T @ mu
        inactive = np.setdiff1d(np.arange(len(c)), active)
        if (np.any(mu < 0) or np.any(c[inactive] >= 0) or np.any(np.abs(c[active]) > 1e-12)
                or np.max(np.abs(station)) > 1e-10):
            return None
        full = np.zeros(len(c))
        full[active] = mu
        res = max(float(np.max(np.abs(station))), float(np.max(np.abs(c[active]))))
        return x, full, res

    def solve(self, mu=10.0, gap_tol=GAP_TOL):
        """Barrier method followed by an active-set polish.

        Returns ``(k, kkt_residual, multipliers, newton_iterations)`` or
        ``None`` when the feasible set has empty interior.  The objective is
        divided by its value at the starting point; the barrier parameter
        ``1/t`` shrinks tenfold per outer iteration until the surrogate gap
        ``m/t`` reaches ``gap_tol`` or centring stalls on roundoff.
        Multipliers are reported in raw units.
        """
        k = self._uniform_start()
        if k is None:
            return None
        m = 2 + 2 * self.L_m
        scale = max(self.objective(k), 1e-300)
        t = 1.0
        total = 0
        while True:
            k_new, it, ok = self._center(k, t, scale)
            total += it
            if not ok and t > 1e3:
                break
            k = k_new
            if m / t <= gap_tol or total > 2000:
                break
            t *= mu
        c, _, _ = self._normalized(k)
        lam = 1.0 / (t * -c)
        res = self.kkt(k, t, scale)[0]
        polished = self._polish(k, lam, scale)
        if polished is not None and self.objective(polished[0]) <= self.objective(k) + 1e-15:
            k, lam, res = polished
        lam_raw = lam.copy()
        lam_raw[0] *= scale / self.budget
        lam_raw[1] *= scale / self.delta
        lam_raw[2:] *= scale
        return k, res, lam_raw, total

    def kkt(self, k, t, scale):
        """Stationarity and complementarity residual with barrier multipliers."""
        c, J, _ = self._normalized(k)
        lam = 1.0 / (t * -c)
        f1, _ = self.objective_derivs(k)
        station = f1 / scale + J.T @ lam
        return max(float(np.max(np.abs(station))), float(np.sum(lam * -c))), lam


def _inner_for(cfg: SystemConfig, alpha, delta):
    gamma_m = alpha * cfg.gamma_tot
    con = design_constellation(L_m=cfg.L_m, gamma_m=gamma_m, sigma2=cfg.sigma2)
    budget = (1.0 - alpha) * cfg.E_tot
    return con, InnerProblem(cfg.N, cfg.L_m, cfg.L_t, con.R, con.A, budget, delta)


def _degenerate(prob, con, cfg, alpha, delta):
    k = np.zeros(cfg.L_m)
    return OptSolution(
        k=k, r=np.ones(cfg.L_m),
        p_et_opt=prob.objective(k), p_em_upper_at_opt=prob.ser_bound(k),
        E_t_used=0.0, kkt_residual=0.0, alpha_star=float(alpha),
        E_m=con.E_m, E_tot=cfg.E_tot, R=con.R, delta=float(delta), status="degenerate",
    )


def solve_inner(cfg: SystemConfig, alpha, delta):
    """Optimal tag ratios when a fraction ``alpha`` of the power goes to the message.

    Raises
    ------
    InfeasibleError
        If the tag budget is negative, or if even a vanishing tag violates the
        message SER bound.
    """
    if not 0 < alpha <= 1 + 1e-15:
        raise InfeasibleError(f"power split must lie in (0, 1], got {alpha!r}")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    alpha = min(alpha, 1.0)
    con, prob = _inner_for(cfg, alpha, delta)
    if prob.budget < 0:
        raise InfeasibleError("negative tag power budget")
    zero = np.zeros(cfg.L_m)
    if prob.ser_bound(zero) > delta:
        raise InfeasibleError(
            f"message SER target {delta:g} unreachable at alpha={alpha:g} "
            f"(no-tag bound {prob.ser_bound(zero):.3e})"
        )
    res = prob.solve() if prob.budget > 0 else None
    if res is None:
        return _degenerate(prob, con, cfg, alpha, delta)
    k, kkt, lam, iters = res
    return OptSolution(
        k=k, r=np.exp(k),
        p_et_opt=prob.objective(k), p_em_upper_at_opt=prob.ser_bound(k),
        E_t_used=prob.power(k), kkt_residual=kkt, alpha_star=float(alpha),
        E_m=con.E_m, E_tot=cfg.E_tot, R=con.R, delta=float(delta), iterations=iters,
        multipliers={"power": float(lam[0]), "ser": float(lam[1])},
    )


def _no_tag_bound(cfg, alpha):
    R = ratio_for_snr(cfg.L_m, alpha * cfg.gamma_tot)
    s = math.log(R)
    return (cfg.L_m - 1) / cfg.L_m * float(tag_kernel(s, cfg.N))


def alpha_floor(cfg: SystemConfig, delta):
    """Smallest power split whose tag-free message SER bound meets ``delta``.

    Returns ``0.0`` when any split works and ``math.inf`` when none does.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if delta >= (cfg.L_m - 1) / cfg.L_m:
        return 0.0
    if _no_tag_bound(cfg, 1.0) > delta:
        return math.inf
    lo = 1e-12
    if _no_tag_bound(cfg, lo) <= delta:
        return 0.0
    # decreasing in alpha; compare on a log scale to resolve tiny targets
    return solve_monotone(lambda a: math.log(_no_tag_bound(cfg, a)) - math.log(delta),
                          lo, 1.0, tol=1e-12)


def golden_section(f, a, b, tol=1e-10, fa=None, fb=None):
    """Minimise a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    inv_phi = (math.sqrt(5) - 1) / 2
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    cands = [(fc, c), (fd, d)]
    if fa is not None:
        cands.append((fa, a))
    if fb is not None:
        cands.append((fb, b))
    fx, x = min(cands)
    return x, fx


def solve_power_allocation(cfg: SystemConfig, delta, n_grid=64, tol=1e-9):
    """Best split ``alpha`` of the total power between message and tag.

    A coarse grid over ``[alpha_0, 1]`` guards against multiple local minima;
    golden-section search then refines around the best grid point.
    """
    a0 = alpha_floor(cfg, delta)
    if a0 > 1:
        raise InfeasibleError(f"message SER target {delta:g} unreachable at gamma_tot")
    cache = {}

    def H(a):
        if a not in cache:
            try:
                cache[a] = solve_inner(cfg, a, delta)
            except InfeasibleError:
                cache[a] = None
        sol = cache[a]
        return math.inf if sol is None else sol.p_et_opt

    lo = max(a0, 1e-12)
    grid = np.linspace(lo, 1.0, n_grid)
    vals = [H(float(a)) for a in grid]
    best = int(np.argmin(vals))
    a = float(grid[max(best - 1, 0)])
    b = float(grid[min(best + 1, n_grid - 1)])
    x, _ = golden_section(H, a, b, tol=tol, fa=H(a), fb=H(b))
    if H(float(grid[best])) < H(x):
        x = float(grid[best])
    return cache[x]


def scheme_from_solution(cfg: SystemConfig, sol: OptSolution):
    """Embedding scheme realising an optimal design."""
    if sol.status != "optimal":
        raise InfeasibleError("a degenerate design carries no tag")
    con = design_constellation(L_m=cfg.L_m, gamma_m=sol.E_m / cfg.sigma2, sigma2=cfg.sigma2)
    return build_message_based(con, cfg.L_t, sol.r)


@dataclass
class TradeoffPoint:
    delta: float
    gamma_tot: float
    status: str
    solution: OptSolution | None = None

    @property
    def p_et_opt(self):
        return None if self.solution is None else self.solution.p_et_opt


def tradeoff_curve(cfg: SystemConfig, delta_list, n_grid=64):
    """Optimal tag SER for each message SER target; infeasible targets are flagged."""
    if len(delta_list) == 0:
        raise ValueError("empty delta list")
    out = []
    for d in delta_list:
        d = float(d)
        try:
            sol = solve_power_allocation(cfg, d, n_grid=n_grid)
            out.append(TradeoffPoint(d, cfg.gamma_tot, sol.status, sol))
        except InfeasibleError:
            out.append(TradeoffPoint(d, cfg.gamma_tot, "infeasible"))
    return out
