"""BSDEs driven by the chain martingale, solved by exact reduction to a
coupled backward ODE system.

With a Markovian driver and terminal condition, writing Y_t = y(t)'X_t and
taking the canonical integrand Z_t = y(t) turns the backward equation into

    dy_i/dt = -(A'(t) y(t))_i - f(t, i, y_i(t), y(t)),   y(T) = terminal,

because the jump of Y at a transition i -> j is exactly y_j - y_i = Z'dX.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .chain import check_contraction
from .errors import (ContractionViolatedError, NonFiniteError,
                     PreconditionUnmetError)
from .grids import StateGridFunction, uniform_grid


@dataclass(frozen=True)
class MarkovDriver:
    """Driver f(t, state, y, z) with its Lipschitz constants.

    ``lipschitz_y`` bounds the y-increment, ``lipschitz_z`` the increment
    against the quadratic-variation seminorm.
    """

    evaluate: callable
    lipschitz_y: float = 0.0
    lipschitz_z: float = 0.0


@dataclass(frozen=True)
class BsdeSolution:
    """Backward solution on a uniform grid; Y_t = y'X_t, Z_t = y(t)."""

    y: StateGridFunction
    scheme: str
    steps: int

    @property
    def grid(self):
        return self.y.grid

    @property
    def values(self):
        return self.y.values


def zero_driver():
    return MarkovDriver(evaluate=lambda t, i, y, z: 0.0)


def discount_driver(rate):
    """f = -rate * y, the constant-rate discounting driver."""
    r = float(rate)
    return MarkovDriver(evaluate=lambda t, i, y, z: -r * y, lipschitz_y=abs(r))


def _scalar_implicit(f, t, i, b, dt, zref, lip_hint):
    """Solve v = b + dt * f(t, i, v, zref) for v.

    Newton with a secant slope, bisection fallback. The implicit part is
    only the local v-dependence; the z argument stays frozen at zref.
    """
    def phi(v):
        return v - b - dt * f(t, i, v, zref)

    v = b + dt * f(t, i, b, zref)
    for _ in range(50):
        r0 = phi(v)
        if abs(r0) <= 1e-14 * (1.0 + abs(v)):
            return v
        h = 1e-7 * (1.0 + abs(v))
        slope = (phi(v + h) - r0) / h
        if slope <= 1e-12:
            break
        step = r0 / slope
        v -= step
        if abs(step) <= 1e-15 * (1.0 + abs(v)):
            return v
    # bracket and bisect
    span = max(1.0, abs(b)) * (1.0 + dt * lip_hint)
    lo, hi = b - span, b + span
    for _ in range(200):
        if phi(lo) <= 0 <= phi(hi):
            break
        lo -= span
        hi += span
        span *= 2.0
    else:
        raise NonFiniteError("implicit step failed to bracket a root")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if phi(mid) <= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * (1.0 + abs(mid)):
            break
    return 0.5 * (lo + hi)


def _segment_cuts(spec, t0, t1):
    cuts = [t1] + [s for s in spec.breakpoints() if t0 < s < t1][::-1] + [t0]
    return cuts  # decreasing in time


def _rk4_step(spec, driver, t_hi, t_lo, y):
    """One backward RK4 sweep from t_hi down to t_lo, split at schedule
    breakpoints so each sub-step sees a constant generator."""
    n = y.size

    def rhs(t, yv, a):
        out = np.empty(n)
        at_y = a.T @ yv
        for i in range(n):
            out[i] = -at_y[i] - driver.evaluate(t, i, yv[i], yv)
        return out

    cuts = _segment_cuts(spec, t_lo, t_hi)
    for a_t, b_t in zip(cuts[:-1], cuts[1:]):
        h = b_t - a_t  # negative
        gen = spec.generator_at(0.5 * (a_t + b_t))
        k1 = rhs(a_t, y, gen)
        k2 = rhs(a_t + 0.5 * h, y + 0.5 * h * k1, gen)
        k3 = rhs(a_t + 0.5 * h, y + 0.5 * h * k2, gen)
        k4 = rhs(b_t, y + h * k3, gen)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def _implicit_step(spec, driver, t_hi, t_lo, y):
    cuts = _segment_cuts(spec, t_lo, t_hi)
    n = y.size
    lip = driver.lipschitz_y + driver.lipschitz_z + 1.0
    for a_t, b_t in zip(cuts[:-1], cuts[1:]):
        dt = a_t - b_t
        gen = spec.generator_at(0.5 * (a_t + b_t))
        b = y + dt * (gen.T @ y)
        new = np.empty(n)
        for i in range(n):
            new[i] = _scalar_implicit(driver.evaluate, b_t, i, b[i], dt, y, lip)
        y = new
    return y


def solve_bsde(spec, driver, terminal, steps, scheme="explicit_rk4",
               strict_contraction=False):
    """Integrate the backward state-space reduction on a uniform grid.

    scheme is "explicit_rk4" (default) or "implicit_euler". The terminal
    node is the given vector exactly; no integration touches it.
    """
    terminal = np.asarray(terminal, dtype=float)
    if terminal.shape != (spec.n_states,):
        raise ValueError("terminal condition must be a length-N vector")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if scheme not in ("explicit_rk4", "implicit_euler"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if driver.lipschitz_z > 0:
        report = check_contraction(spec, driver.lipschitz_z, grid_steps=16)
        if not report["holds"]:
            msg = (f"z-Lipschitz contraction fails, margin "
                   f"{report['worst_margin']:.3g} at {report['worst_time_state']}")
            if strict_contraction:
                raise ContractionViolatedError(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)

    grid = uniform_grid(spec.horizon, steps)
    values = np.empty((steps + 1, spec.n_states))
    values[-1] = terminal
    step_fn = _rk4_step if scheme == "explicit_rk4" else _implicit_step
    for k in range(steps - 1, -1, -1):
        values[k] = step_fn(spec, driver, grid[k + 1], grid[k], values[k + 1])
        if not np.all(np.isfinite(values[k])):
            raise NonFiniteError(f"driver blow-up at t={grid[k]:.6g}")
    return BsdeSolution(y=StateGridFunction(grid=grid, values=values),
                        scheme=scheme, steps=int(steps))


def _node_derivatives(spec, driver, sol):
    """dy/dt at each grid node from the reduced ODE right-hand side."""
    grid, vals = sol.grid, sol.values
    n = vals.shape[1]
    d = np.empty_like(vals)
    for k, t in enumerate(grid):
        a = spec.generator_at(min(t, spec.horizon * (1 - 1e-15)))
        at_y = a.T @ vals[k]
        for i in range(n):
            d[k, i] = -at_y[i] - driver.evaluate(t, i, vals[k, i], vals[k])
    return d


class _HermiteCurve:
    """Cubic Hermite interpolant of the grid values using ODE derivatives."""

    def __init__(self, sol, deriv):
        self.grid = sol.grid
        self.vals = sol.values
        self.deriv = deriv
        self.dt = sol.y.step

    def __call__(self, t):
        g = self.grid
        if t <= g[0]:
            return self.vals[0]
        if t >= g[-1]:
            return self.vals[-1]
        k = min(int((t - g[0]) / self.dt), g.size - 2)
        s = (t - g[k]) / self.dt
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return (h00 * self.vals[k] + h10 * self.dt * self.deriv[k]
                + h01 * self.vals[k + 1] + h11 * self.dt * self.deriv[k + 1])


def pathwise_residual(solution, path, spec, driver, terminal):
    """Max discrepancy, over grid nodes, between both sides of the backward
    equation evaluated along one realized path.

    The stochastic integral uses exact jump increments y_j - y_i minus the
    compensator integral of y'A X; time integrals use Hermite-Simpson
    quadrature so the residual tracks the scheme error.
    """
    terminal = np.asarray(terminal, dtype=float)
    grid = solution.grid
    vals = solution.values
    deriv = _node_derivatives(spec, driver, solution)
    curve = _HermiteCurve(solution, deriv)

    def f_at(t, i):
        y = curve(t)
        return driver.evaluate(t, i, y[i], y)

    def comp_at(t, i):
        a = spec.generator_at(min(t, spec.horizon * (1 - 1e-15)))
        return float(curve(t) @ a[:, i])

    def simpson(fn, a, b, i):
        return (b - a) / 6.0 * (fn(a, i) + 4.0 * fn(0.5 * (a + b), i) + fn(b, i))

    xi_term = float(terminal[path.state_at(spec.horizon)])
    # accumulate integrals backward from T
    f_int = 0.0
    m_int = 0.0
    worst = 0.0
    breakpts = spec.breakpoints()
    for k in range(grid.size - 1, -1, -1):
        y_here = float(vals[k, path.state_at(grid[k])]) if k > 0 else \
            float(vals[0, path.states[0]])
        rhs = xi_term + f_int - m_int
        worst = max(worst, abs(y_here - rhs))
        if k == 0:
            break
        a_t, b_t = grid[k - 1], grid[k]
        cuts = sorted({a_t, b_t}
                      | {t for t in path.jump_times if a_t < t < b_t}
                      | {t for t in breakpts if a_t < t < b_t})
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            state = path.state_at(lo)
            f_int += simpson(f_at, lo, hi, state)
            m_int -= simpson(comp_at, lo, hi, state)
        for t in path.jump_times:
            if a_t < t <= b_t:
                idx = int(np.searchsorted(path.jump_times, t))
                old, new = int(path.states[idx]), int(path.states[idx + 1])
                yj = curve(t)
                m_int += float(yj[new] - yj[old])
    return float(worst)


def comparison_check(spec, driver1, terminal1, driver2, terminal2, steps,
                     rng_seed=0, n_probe=64):
    """Order two BSDE solutions: terminal1 <= terminal2 and f1 <= f2 must
    give y1 <= y2 everywhere (up to 1e-9).

    The driver ordering is spot-checked on random (t, state, y, z)
    quadruples; driver1 must satisfy the contraction condition.
    """
    t1 = np.asarray(terminal1, dtype=float)
    t2 = np.asarray(terminal2, dtype=float)
    if np.any(t1 > t2 + 1e-12):
        raise PreconditionUnmetError("terminal conditions are not ordered")
    rng = np.random.default_rng(rng_seed)
    for _ in range(n_probe):
        t = rng.uniform(0.0, spec.horizon)
        i = int(rng.integers(spec.n_states))
        y = rng.normal(scale=2.0)
        z = rng.normal(scale=2.0, size=spec.n_states)
        if driver1.evaluate(t, i, y, z) > driver2.evaluate(t, i, y, z) + 1e-12:
            raise PreconditionUnmetError(
                f"driver ordering fails at t={t:.4g}, state={i}")
    if driver1.lipschitz_z > 0:
        report = check_contraction(spec, driver1.lipschitz_z, grid_steps=16)
        if not report["holds"]:
            raise ContractionViolatedError(
                f"driver1 violates the contraction condition, margin "
                f"{report['worst_margin']:.3g}")
    sol1 = solve_bsde(spec, driver1, t1, steps)
    sol2 = solve_bsde(spec, driver2, t2, steps)
    gap = sol1.values - sol2.values
    max_violation = float(gap.max())
    return {"holds": bool(max_violation <= 1e-9),
            "max_violation": max_violation}


def solution_to_csv_rows(solution):
    """(time, state, y_value) rows."""
    rows = []
    for k, t in enumerate(solution.grid):
        for i in range(solution.values.shape[1]):
            rows.append((float(t), i, float(solution.values[k, i])))
    return rows
