"""Reflected BSDEs: direct reflected backward scheme, the penalization
sequence, the Skorokhod flatness check and a dynamic-programming optimal
stopping oracle.

The reflected scheme and the stopping recursion are deliberately the same
formula arrived at from two directions (constraint reflection vs optimal
stopping); both entry points are kept and must agree to machine precision.
"""

from dataclasses import dataclass, field

import numpy as np

from .bsde import MarkovDriver, solve_bsde
from .errors import NoConvergenceError, NonFiniteError, ObstacleIncompatibleError
from .grids import StateGridFunction, sample_on_grid, uniform_grid


@dataclass(frozen=True)
class Obstacle:
    """Lower barrier g(t, state), continuous in t per state."""

    g: callable
    terminal_compatible: bool = True

    def sample(self, grid, n_states):
        vals = sample_on_grid(self.g, grid, n_states)
        if not np.all(np.isfinite(vals)):
            raise NonFiniteError("obstacle produced non-finite values")
        return vals


def constant_obstacle(level):
    c = float(level)
    return Obstacle(g=lambda t, i: c)


@dataclass(frozen=True)
class RbsdeSolution:
    """Triple (value, canonical integrand, reflection) on a uniform grid.

    ``k`` holds the cumulative per-state reflection with k(0) = 0;
    ``step_pushes[j]`` is the push applied over [t_j, t_{j+1}).
    """

    v: StateGridFunction
    z: StateGridFunction
    k: StateGridFunction
    step_pushes: np.ndarray
    penalization_trace: list = field(default_factory=list)

    @property
    def grid(self):
        return self.v.grid

    @property
    def values(self):
        return self.v.values


def _check_terminal(terminal, obstacle_vals_T):
    if np.any(obstacle_vals_T > terminal + 1e-9):
        raise ObstacleIncompatibleError(
            "obstacle exceeds the terminal condition at the horizon")


def _reflected_sweep(spec, driver, terminal, obstacle_vals, grid):
    """Shared backward recursion: explicit predictor then projection on the
    obstacle. Returns (values, per-step pushes)."""
    n = spec.n_states
    steps = grid.size - 1
    dt = grid[1] - grid[0]
    vals = np.empty((steps + 1, n))
    pushes = np.zeros((steps, n))
    vals[-1] = terminal
    for k in range(steps - 1, -1, -1):
        t = grid[k]
        a = spec.generator_at(t)
        y_next = vals[k + 1]
        at_y = a.T @ y_next
        pred = np.empty(n)
        for i in range(n):
            pred[i] = y_next[i] + dt * (at_y[i]
                                        + driver.evaluate(t, i, y_next[i], y_next))
        vals[k] = np.maximum(obstacle_vals[k], pred)
        pushes[k] = vals[k] - pred
        if not np.all(np.isfinite(vals[k])):
            raise NonFiniteError(f"reflected sweep blew up at t={t:.6g}")
    return vals, pushes


def _assemble(grid, vals, pushes, trace=None):
    # k(t_m) accumulates the pushes applied on steps fully inside [0, t_m]
    steps, n = pushes.shape
    k_vals = np.zeros((steps + 1, n))
    k_vals[1:] = np.cumsum(pushes, axis=0)
    sg = lambda a: StateGridFunction(grid=grid, values=a)
    return RbsdeSolution(v=sg(vals), z=sg(vals.copy()), k=sg(k_vals),
                         step_pushes=pushes, penalization_trace=list(trace or []))


def solve_reflected(spec, driver, terminal, obstacle, steps):
    """Direct reflected backward scheme.

    Per step: explicit predictor for the unconstrained value, then
    projection onto the obstacle; the projection excess is the reflection
    increment, accumulated so k(0) = 0 and k is nondecreasing.
    """
    terminal = np.asarray(terminal, dtype=float)
    grid = uniform_grid(spec.horizon, steps)
    obstacle_vals = obstacle.sample(grid, spec.n_states)
    if obstacle.terminal_compatible:
        _check_terminal(terminal, obstacle_vals[-1])
    vals, pushes = _reflected_sweep(spec, driver, terminal, obstacle_vals, grid)
    return _assemble(grid, vals, pushes)


def snell_oracle(spec, driver, terminal, obstacle, steps):
    """Dynamic-programming value of optimal stopping against the obstacle:
    continue one step (explicit Euler on the reduced ODE) or take g now.

    Independent derivation of the reflected value; the recursion is
    literally identical to solve_reflected and the two must agree exactly.
    """
    terminal = np.asarray(terminal, dtype=float)
    grid = uniform_grid(spec.horizon, steps)
    obstacle_vals = obstacle.sample(grid, spec.n_states)
    vals, _ = _reflected_sweep(spec, driver, terminal, obstacle_vals, grid)
    return StateGridFunction(grid=grid, values=vals)


def penalized_driver(driver, obstacle, n):
    """f + n * (v - g(t))^-, the penalty approximation of the reflection."""
    base = driver.evaluate
    g = obstacle.g
    n = float(n)

    def evaluate(t, i, y, z):
        return base(t, i, y, z) + n * max(g(t, i) - y, 0.0)

    return MarkovDriver(evaluate=evaluate,
                        lipschitz_y=driver.lipschitz_y + n,
                        lipschitz_z=driver.lipschitz_z)


def solve_penalized(spec, driver, terminal, obstacle, n, steps,
                    scheme=None):
    """Solve the penalized BSDE for penalty level n.

    Implicit Euler is forced whenever n * dt >= 1: the penalty makes the
    reduced system stiff and the explicit scheme unstable.
    """
    if n < 1:
        raise ValueError("penalty level must be >= 1")
    dt = spec.horizon / steps
    if scheme is None:
        scheme = "implicit_euler" if n * dt >= 1.0 else "explicit_rk4"
    elif scheme == "explicit_rk4" and n * dt >= 1.0:
        scheme = "implicit_euler"
    return solve_bsde(spec, penalized_driver(driver, obstacle, n),
                      np.asarray(terminal, dtype=float), steps, scheme=scheme)


def penalization_limit(spec, driver, terminal, obstacle, steps, tol,
                       n_start=None, n_cap=2 ** 20):
    """Double the penalty until successive solutions move less than tol in
    sup norm; reconstruct the reflection by quadrature of the penalty term.

    Every level uses implicit Euler so the whole family shares one scheme:
    mixing schemes across the stiffness threshold would break the monotone
    decay of the successive distances. The doubling starts at n of order
    1/dt by default; below that the penalty is too weak for the distance
    sequence to have entered its decaying O(1/n) tail.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    terminal = np.asarray(terminal, dtype=float)
    grid = uniform_grid(spec.horizon, steps)
    obstacle_vals = obstacle.sample(grid, spec.n_states)
    trace = []
    if n_start is None:
        n_start = max(4, int(np.ceil(steps / spec.horizon)))
    n = int(n_start)
    prev = solve_penalized(spec, driver, terminal, obstacle, n, steps,
                           scheme="implicit_euler")
    while True:
        n *= 2
        if n > n_cap:
            raise NoConvergenceError(
                f"penalty cap {n_cap} reached without tol {tol}", trace=trace)
        cur = solve_penalized(spec, driver, terminal, obstacle, n, steps,
                              scheme="implicit_euler")
        dist = float(np.abs(cur.values - prev.values).max())
        trace.append((n, dist))
        prev = cur
        if dist < tol:
            break
    vals = prev.values
    # k^n density is n (v^n - g)^-; trapezoid per step
    density = n * np.maximum(obstacle_vals - vals, 0.0)
    pushes = 0.5 * (density[:-1] + density[1:]) * (grid[1] - grid[0])
    return _assemble(grid, vals, pushes, trace=trace)


def skorokhod_integral(solution, obstacle):
    """Trapezoidal evaluation of int (v - g) dk per state, maximized over
    states. Near zero exactly when the reflection only acts on contact.
    """
    grid = solution.grid
    n = solution.values.shape[1]
    gap = solution.values - obstacle.sample(grid, n)
    avg = 0.5 * (gap[:-1] + gap[1:])
    per_state = np.abs(np.sum(avg * solution.step_pushes, axis=0))
    return float(per_state.max())


def optimal_stop_time(solution, obstacle, path):
    """First grid time along the path at which the value touches the
    obstacle; horizon if it never does."""
    grid = solution.grid
    states = path.states_at(grid)
    g_vals = obstacle.sample(grid, solution.values.shape[1])
    idx = np.arange(grid.size)
    touching = solution.values[idx, states] <= g_vals[idx, states] + 1e-9
    hits = np.nonzero(touching)[0]
    return float(grid[hits[0]]) if hits.size else float(grid[-1])


def rbsde_to_csv_rows(solution):
    """(time, state, v, z, k) rows."""
    rows = []
    for k, t in enumerate(solution.grid):
        for i in range(solution.values.shape[1]):
            rows.append((float(t), i, float(solution.v.values[k, i]),
                         float(solution.z.values[k, i]),
                         float(solution.k.values[k, i])))
    return rows
