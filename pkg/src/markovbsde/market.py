"""The Markov-chain market: stochastic discount function, its sigma and
Gamma matrices, the short rate, stock-price curves from the dividend ODE
and pathwise consistency checks of their dynamics.
"""

from dataclasses import dataclass

import numpy as np

from .chain import ChainSpec
from .errors import (BadScheduleError, NonPositivePricesError,
                     RateBoundViolatedError, UnstableGammaError)
from .grids import StateGridFunction, uniform_grid


def _freeze_schedule(entries, shape, horizon, what):
    """Normalize a value or a list of (start, value) pairs into a frozen
    piecewise-constant schedule on [0, horizon)."""
    if entries is None:
        entries = [(0.0, np.zeros(shape))]
    try:
        arr = np.asarray(entries, dtype=float)
    except (TypeError, ValueError):
        arr = None
    if arr is not None and arr.shape == shape:
        # a bare value means a constant schedule
        entries = [(0.0, arr)]
    pieces = []
    for entry in entries:
        try:
            start, val = entry
        except (TypeError, ValueError) as exc:
            raise BadScheduleError(
                f"{what} schedule entry is not (start, value): {entry!r}") from exc
        arr = np.asarray(val, dtype=float)
        if arr.shape != shape:
            raise BadScheduleError(f"{what} piece has shape {arr.shape}, want {shape}")
        if not np.all(np.isfinite(arr)):
            raise BadScheduleError(f"{what} piece has non-finite entries")
        pieces.append((float(start), arr))
    pieces.sort(key=lambda p: p[0])
    starts = [s for s, _ in pieces]
    if abs(starts[0]) > 1e-12 or len(set(starts)) != len(starts) or starts[-1] >= horizon:
        raise BadScheduleError(f"{what} schedule must partition [0, horizon)")
    frozen = tuple((s, a.copy()) for s, a in pieces)
    for _, a in frozen:
        a.setflags(write=False)
    return frozen


def _schedule_at(schedule, t):
    starts = [s for s, _ in schedule]
    k = int(np.searchsorted(starts, t, side="right")) - 1
    return schedule[min(max(k, 0), len(schedule) - 1)][1]


def sigma_matrix(c, t=None):
    """Jump-factor matrix of the discount function: entry (i, j) is
    exp(C_ii - C_ij) - 1, with an exactly zero diagonal."""
    c = np.asarray(c, dtype=float)
    sig = np.exp(np.diag(c)[:, None] - c) - 1.0
    np.fill_diagonal(sig, 0.0)
    return sig


def gamma_matrix(a, c, d, t=None):
    """Discount-adjusted rate matrix: diagonal A_ii - D_i, off-diagonal
    A_ij exp(C_jj - C_ji)."""
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    d = np.asarray(d, dtype=float)
    gamma = a * np.exp(np.diag(c)[None, :] - c.T)
    np.fill_diagonal(gamma, np.diag(a) - d)
    return gamma


@dataclass(frozen=True)
class MarketSpec:
    """Chain plus discount data C(t), D(t) and per-stock dividend vectors."""

    chain: ChainSpec
    c_schedule: tuple
    d_schedule: tuple
    dividends: tuple
    n_stocks: int
    r_max: float = 1.0

    def c_at(self, t):
        return _schedule_at(self.c_schedule, t)

    def d_at(self, t):
        return _schedule_at(self.d_schedule, t)

    def gamma_at(self, t):
        return gamma_matrix(self.chain.generator_at(t), self.c_at(t), self.d_at(t))

    def breakpoints(self):
        pts = set(self.chain.breakpoints())
        for sched in (self.c_schedule, self.d_schedule):
            pts |= {s for s, _ in sched[1:] if 0 < s < self.chain.horizon}
        return sorted(pts)


def build_market_spec(chain, c_schedule=None, d_schedule=None, dividends=(),
                      r_max=1.0):
    """Validate and freeze the market data.

    The short rate implied by (C, D, A) must lie in [0, r_max] everywhere
    (it is piecewise constant, so checking each piece/state is exact), and
    dividends must be entrywise positive.
    """
    n = chain.n_states
    cs = _freeze_schedule(c_schedule, (n, n), chain.horizon, "C")
    ds = _freeze_schedule(d_schedule, (n,), chain.horizon, "D")
    divs = tuple(np.asarray(d, dtype=float).copy() for d in dividends)
    for j, d in enumerate(divs):
        if d.shape != (n,):
            raise BadScheduleError(f"dividend {j} must be a length-{n} vector")
        if np.any(d <= 0):
            raise BadScheduleError(f"dividend {j} must be entrywise positive")
        d.setflags(write=False)
    market = MarketSpec(chain=chain, c_schedule=cs, d_schedule=ds,
                        dividends=divs, n_stocks=len(divs), r_max=float(r_max))
    starts = sorted({0.0} | {s for s, _ in cs} | {s for s, _ in ds}
                    | set(chain.schedule_starts.tolist()))
    for t in starts:
        for i in range(n):
            r = short_rate(market, t, i)
            if r < -1e-12 or r > market.r_max + 1e-12:
                raise RateBoundViolatedError(
                    f"short rate {r:.6g} outside [0, {market.r_max}] "
                    f"at t={t:.4g}, state={i}")
    return market


def short_rate(market, t, state, strict=False):
    """r(t, i) = D_i - (sigma A)_{ii} with X frozen at state i."""
    d = market.d_at(t)
    sig = sigma_matrix(market.c_at(t))
    a = market.chain.generator_at(t)
    r = float(d[state] - sig[state, :] @ a[:, state])
    if strict and (r < 0.0 or r > market.r_max):
        raise RateBoundViolatedError(
            f"short rate {r:.6g} outside [0, {market.r_max}]")
    return r


def _sdf_log_events(market, path):
    """(time, log-increment kind) sweep data: per constant-state segment the
    D-drift rate, plus the exact jump log-factors C_ii - C_ij."""
    cuts = sorted({0.0, path.horizon}
                  | set(path.jump_times.tolist())
                  | {s for s in market.breakpoints()})
    return cuts


def sdf_path(market, path, grid_steps):
    """Discount factor along one path on a uniform grid, closed form.

    The dX integral of the exponent is a pure-jump Stieltjes sum, so the
    discount factor is exp of minus the D-drift integral times the exact
    jump factors exp(C_ii - C_ij). Starts at 1. The log is piecewise
    linear between jump/schedule events, so the grid values come from one
    vectorized interpolation.
    """
    grid = uniform_grid(path.horizon, grid_steps)
    jt = path.jump_times
    events = np.unique(np.concatenate(
        ([0.0], jt, np.asarray(market.breakpoints(), dtype=float),
         [path.horizon])))
    # log pi immediately after each event, plus the drift slope of the
    # segment starting there
    log_after = np.zeros(events.size)
    slopes = np.zeros(events.size - 1)
    acc = 0.0
    for k in range(1, events.size):
        t0, t1 = events[k - 1], events[k]
        state = path.state_at(t0)
        slope = -float(market.d_at(t0)[state])
        slopes[k - 1] = slope
        acc += slope * (t1 - t0)
        j = int(np.searchsorted(jt, t1))
        idx = None
        if j < jt.size and jt[j] == t1:
            idx = j
        elif j > 0 and jt[j - 1] == t1:
            idx = j - 1
        if idx is not None:
            old, new = int(path.states[idx]), int(path.states[idx + 1])
            c = market.c_at(t1)
            acc += c[old, old] - c[old, new]
        log_after[k] = acc
    pos = np.searchsorted(events, grid, side="right") - 1
    at_end = pos >= events.size - 1
    pos = np.minimum(pos, events.size - 2)
    log_pi = log_after[pos] + slopes[pos] * (grid - events[pos])
    log_pi[at_end] = log_after[-1]
    return np.exp(log_pi)


def terminal_sdf(market, path):
    """Exact discount factor at the horizon for one path."""
    acc = 0.0
    for t0, t1, state in path.segments():
        cuts = [t0] + [s for s in market.breakpoints() if t0 < s < t1] + [t1]
        for a, b in zip(cuts[:-1], cuts[1:]):
            acc -= market.d_at(a)[state] * (b - a)
    for idx, t in enumerate(path.jump_times):
        old, new = int(path.states[idx]), int(path.states[idx + 1])
        c = market.c_at(t)
        acc += c[old, old] - c[old, new]
    return float(np.exp(acc))


def sdf_dynamics_residual(market, path, grid_steps):
    """Integrate the discount SDE (rate drift plus the martingale term with
    exact jump handling) and compare with the closed form.

    The pure-rate factor is applied exactly per step; the compensator of
    the martingale term uses an Euler increment, so the residual decays
    linearly in the step size and vanishes when C = 0.
    """
    grid = uniform_grid(path.horizon, grid_steps)
    closed = sdf_path(market, path, grid_steps)
    cuts = sorted(set(grid.tolist()) | set(_sdf_log_events(market, path)))
    pi = 1.0
    worst = 0.0
    gi = 1
    prev = 0.0
    jt = path.jump_times
    for t in cuts:
        if t <= prev:
            continue
        state = path.state_at(prev)
        dt = t - prev
        r = short_rate(market, prev, state)
        sig = sigma_matrix(market.c_at(prev))
        a = market.chain.generator_at(prev)
        comp = float(sig[state, :] @ a[:, state])  # X' sigma A X
        pi = pi * np.exp(-r * dt) - pi * comp * dt
        j = np.searchsorted(jt, t)
        idx = None
        if j < jt.size and abs(jt[j] - t) < 1e-15:
            idx = j
        elif j > 0 and abs(jt[j - 1] - t) < 1e-15:
            idx = j - 1
        if idx is not None:
            old, new = int(path.states[idx]), int(path.states[idx + 1])
            pi += pi * sigma_matrix(market.c_at(t))[old, new]
        while gi < grid.size and grid[gi] <= t + 1e-15:
            worst = max(worst, abs(pi - closed[gi]))
            gi += 1
        prev = t
    return float(worst)


@dataclass(frozen=True)
class StockCurves:
    """Per-stock price components s_j(t) in R^N on a uniform grid."""

    grid: np.ndarray
    s: np.ndarray  # (n_stocks, K+1, N)
    price_floor: float
    price_cap: float

    @property
    def n_stocks(self):
        return self.s.shape[0]

    def curve(self, j):
        return StateGridFunction(grid=self.grid, values=self.s[j])

    def phi(self, k):
        """N x n matrix whose columns are the stock vectors at node k."""
        return self.s[:, k, :].T

    def phi_all(self):
        """(K+1, N, n) stack of the phi matrices."""
        return np.transpose(self.s, (1, 2, 0))


def stock_curves(market, horizon_extension=None, steps=1000):
    """Solve the dividend ODE ds/dt + Gamma' s = -delta backward.

    Seeded at an extended horizon with the stationary solution of the final
    piece, -(Gamma')^{-1} delta, then integrated down onto [0, T] with RK4.
    For time-homogeneous data the seed is the exact solution. Gamma' must
    be stable (all eigenvalue real parts negative) and the resulting prices
    strictly positive on [0, T].
    """
    chain = market.chain
    horizon = chain.horizon
    if horizon_extension is None:
        horizon_extension = 10.0 * horizon
    gamma_end = market.gamma_at(horizon).T
    eig = np.linalg.eigvals(gamma_end)
    if np.any(eig.real >= -1e-12):
        raise UnstableGammaError(
            f"Gamma' eigenvalue real parts {np.sort(eig.real)} not all negative")
    grid = uniform_grid(horizon, steps)
    dt = grid[1] - grid[0]
    n_ext = int(np.ceil(horizon_extension / dt))
    breakpts = market.breakpoints()
    curves = np.empty((market.n_stocks, grid.size, chain.n_states))
    for j, delta in enumerate(market.dividends):
        delta = np.asarray(delta, dtype=float)
        s = np.linalg.solve(gamma_end, -delta)

        def step_down(t_hi, t_lo, sv):
            # split at schedule breakpoints so each RK4 sub-step sees a
            # constant Gamma (the ODE coefficients are piecewise constant)
            cuts = [t_hi] + [b for b in breakpts if t_lo < b < t_hi][::-1] + [t_lo]
            for a, b in zip(cuts[:-1], cuts[1:]):
                h = a - b
                g = market.gamma_at(min(0.5 * (a + b), horizon * (1 - 1e-15))).T
                rhs = lambda v: -g @ v - delta
                k1 = rhs(sv)
                k2 = rhs(sv - 0.5 * h * k1)
                k3 = rhs(sv - 0.5 * h * k2)
                k4 = rhs(sv - h * k3)
                sv = sv - (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            return sv

        t = horizon + n_ext * dt
        for _ in range(n_ext):
            s = step_down(t, t - dt, s)
            t -= dt
        curves[j, -1] = s
        for k in range(grid.size - 2, -1, -1):
            s = step_down(grid[k + 1], grid[k], s)
            curves[j, k] = s
    lo, hi = float(curves.min()), float(curves.max())
    if lo <= 0.0:
        raise NonPositivePricesError(f"stock component hit {lo:.6g} <= 0")
    return StockCurves(grid=grid, s=curves, price_floor=lo, price_cap=hi)


def stock_sde_residual(market, curves, path, grid_steps):
    """Integrate the stock dynamics (drift, dividends and the martingale
    term with exact jump handling) along the path and compare with the
    direct evaluation s(t)'X_t. Max over stocks and grid nodes."""
    grid = uniform_grid(path.horizon, grid_steps)
    worst = 0.0
    jt = path.jump_times
    for j in range(curves.n_stocks):
        curve = curves.curve(j)
        delta = np.asarray(market.dividends[j], dtype=float)
        s_price = curve.interp(0.0)[path.state_at(0.0)]
        cuts = sorted(set(grid.tolist()) | set(jt.tolist())
                      | set(market.breakpoints()))
        gi = 1
        prev = 0.0
        val = s_price
        for t in cuts:
            if t <= prev:
                continue
            dt = t - prev
            state = path.state_at(prev)
            a = market.chain.generator_at(prev)
            gamma = market.gamma_at(prev)
            s_vec = curve.interp(prev)
            drift = float(((a.T - gamma.T) @ s_vec)[state] - delta[state])
            comp = float(s_vec @ a[:, state])
            val += (drift - comp) * dt
            jdx = np.searchsorted(jt, t)
            idx = None
            if jdx < jt.size and abs(jt[jdx] - t) < 1e-15:
                idx = jdx
            elif jdx > 0 and abs(jt[jdx - 1] - t) < 1e-15:
                idx = jdx - 1
            if idx is not None:
                old, new = int(path.states[idx]), int(path.states[idx + 1])
                sv = curve.interp(t)
                val += float(sv[new] - sv[old])
            while gi < grid.size and grid[gi] <= t + 1e-15:
                direct = curve.interp(grid[gi])[path.state_at(grid[gi])]
                worst = max(worst, abs(val - direct))
                gi += 1
            prev = t
    return float(worst)


def curves_to_csv_rows(curves):
    """(time, stock, state, price) rows."""
    rows = []
    for k, t in enumerate(curves.grid):
        for j in range(curves.n_stocks):
            for i in range(curves.s.shape[2]):
                rows.append((float(t), j, i, float(curves.s[j, k, i])))
    return rows
