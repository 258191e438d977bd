"""Finite-state Markov chain core: generator schedules, simulation,
martingale decomposition, the quadratic-variation matrix calculus and the
pseudoinverse-based contraction check.

Convention: rate matrices act on indicator columns, dX = A X dt + dM, so
A[i, j] is the rate of jumping j -> i and every column of A sums to zero.
Most textbooks use the transposed (row) convention; everything in this
package is written in the column convention.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BadScheduleError, BadStateError, NonGeneratorError

_GEN_TOL = 1e-12


@dataclass(frozen=True)
class ChainSpec:
    """A finite-state chain on [0, horizon] with a piecewise-constant
    generator schedule.

    ``schedule`` is a tuple of (start_time, matrix) pairs covering
    [0, horizon]: piece k applies on [start_k, start_{k+1}).
    """

    n_states: int
    schedule: tuple
    initial_state: int
    horizon: float

    def generator_at(self, t):
        """Generator in force at time t (right-continuous pieces)."""
        starts = [s for s, _ in self.schedule]
        k = int(np.searchsorted(starts, t, side="right")) - 1
        k = min(max(k, 0), len(self.schedule) - 1)
        return self.schedule[k][1]

    @property
    def schedule_starts(self):
        return np.array([s for s, _ in self.schedule])

    def breakpoints(self):
        """Interior schedule boundaries, strictly inside (0, horizon)."""
        return [s for s, _ in self.schedule[1:] if 0.0 < s < self.horizon]


@dataclass(frozen=True)
class ChainPath:
    """One realized trajectory: jump times in (0, T] and visited states."""

    jump_times: np.ndarray
    states: np.ndarray
    horizon: float
    seed: int

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        st = np.asarray(self.states, dtype=int)
        if st.size != jt.size + 1:
            raise ValueError("states must have one more entry than jump_times")
        if jt.size and (np.any(np.diff(jt) <= 0) or jt[0] <= 0 or jt[-1] > self.horizon):
            raise ValueError("jump times must be strictly increasing in (0, T]")
        if np.any(st[1:] == st[:-1]):
            raise ValueError("self-jumps are not representable")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "states", st)

    @property
    def n_jumps(self):
        return self.jump_times.size

    def state_at(self, t):
        """State occupied at time t (right-continuous)."""
        return int(self.states[np.searchsorted(self.jump_times, t, side="right")])

    def states_at(self, times):
        """Vectorized state_at."""
        return self.states[np.searchsorted(self.jump_times, times, side="right")]

    def segments(self):
        """Constant-state segments as (t0, t1, state) triples covering [0, T]."""
        edges = np.concatenate(([0.0], self.jump_times, [self.horizon]))
        return [
            (edges[k], edges[k + 1], int(self.states[k]))
            for k in range(self.states.size)
            if edges[k + 1] > edges[k]
        ]


@dataclass(frozen=True)
class PsiMatrix:
    """Quadratic-variation density at (time, state): d<X,X> = Psi dt."""

    matrix: np.ndarray
    state: int
    time: float


def _validate_generator(a, n_states):
    a = np.asarray(a, dtype=float)
    if a.shape != (n_states, n_states):
        raise NonGeneratorError(f"generator must be {n_states}x{n_states}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonGeneratorError("generator has non-finite entries")
    off = a - np.diag(np.diag(a))
    if np.any(off < -_GEN_TOL):
        raise NonGeneratorError("negative off-diagonal rate")
    colsums = a.sum(axis=0)
    if np.any(np.abs(colsums) > _GEN_TOL * max(1.0, np.abs(a).max())):
        raise NonGeneratorError(f"columns must sum to zero, got {colsums}")
    return a


def build_chain_spec(n_states, generator_schedule, initial_state, horizon):
    """Validate and freeze a chain specification.

    ``generator_schedule`` is either a single matrix (constant generator) or
    a list of (start_time, matrix) pairs with start times partitioning
    [0, horizon).
    """
    n_states = int(n_states)
    if n_states < 1:
        raise BadStateError("need at least one state")
    horizon = float(horizon)
    if not horizon > 0:
        raise BadScheduleError("horizon must be positive")
    if not 0 <= int(initial_state) < n_states:
        raise BadStateError(f"initial state {initial_state} outside [0, {n_states})")

    sched = generator_schedule
    try:
        arr = np.asarray(sched, dtype=float)
    except (TypeError, ValueError):
        arr = None
    if arr is not None and arr.ndim == 2 and arr.shape == (n_states, n_states):
        # a bare matrix means a constant generator
        sched = [(0.0, arr)]

    pieces = []
    for entry in sched:
        try:
            start, mat = entry
        except (TypeError, ValueError) as exc:
            raise BadScheduleError(f"schedule entry {entry!r} is not (start, matrix)") from exc
        pieces.append((float(start), _validate_generator(mat, n_states)))
    if not pieces:
        raise BadScheduleError("empty generator schedule")
    pieces.sort(key=lambda p: p[0])
    starts = [s for s, _ in pieces]
    if abs(starts[0]) > _GEN_TOL:
        raise BadScheduleError("schedule must start at time 0")
    if len(set(starts)) != len(starts):
        raise BadScheduleError("overlapping schedule pieces")
    if starts[-1] >= horizon:
        raise BadScheduleError("schedule piece starts at or after the horizon")
    frozen = tuple((s, m.copy()) for s, m in pieces)
    for _, m in frozen:
        m.setflags(write=False)
    return ChainSpec(n_states=n_states, schedule=frozen, initial_state=int(initial_state),
                     horizon=horizon)


def rate_bound_m(spec):
    """Frobenius-norm bound of the generator over the whole schedule."""
    return max(float(np.sqrt(np.trace(a.T @ a))) for _, a in spec.schedule)


def simulate_path(spec, seed):
    """Draw one trajectory, exact in distribution.

    Holding times are exponential at the current diagonal rate; a holding
    time reaching a schedule boundary is resampled from the boundary on
    (memorylessness). Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    boundaries = list(spec.schedule_starts[1:]) + [spec.horizon]
    jump_times = []
    states = [spec.initial_state]
    t = 0.0
    piece = 0
    state = spec.initial_state
    while t < spec.horizon:
        a = spec.schedule[piece][1]
        rate = -a[state, state]
        end = boundaries[piece]
        if rate <= 0.0:
            hold = np.inf
        else:
            hold = rng.exponential(1.0 / rate)
        if t + hold >= end:
            t = end
            if piece + 1 < len(spec.schedule):
                piece += 1
                continue
            break
        t += hold
        probs = a[:, state].copy()
        probs[state] = 0.0
        probs /= rate
        state = int(rng.choice(spec.n_states, p=probs))
        jump_times.append(t)
        states.append(state)
    return ChainPath(jump_times=np.array(jump_times), states=np.array(states, dtype=int),
                     horizon=spec.horizon, seed=int(seed))


def _drift_integral_between(spec, t0, t1, state):
    """Exact integral of A_u e_state du over [t0, t1] (state constant)."""
    total = np.zeros(spec.n_states)
    cuts = [t0] + [s for s in spec.schedule_starts if t0 < s < t1] + [t1]
    for a, b in zip(cuts[:-1], cuts[1:]):
        gen = spec.generator_at(a)
        total += gen[:, state] * (b - a)
    return total


def martingale_path(path, spec, grid_steps):
    """Martingale part M_t = X_t - X_0 - int A_u X_u du on a uniform grid.

    The drift integral is closed form on each constant-state,
    constant-generator stretch; within-step jump times are honored exactly.
    Returns a (grid_steps+1, N) array.
    """
    grid = np.linspace(0.0, spec.horizon, int(grid_steps) + 1)
    n = spec.n_states
    out = np.zeros((grid.size, n))
    drift = np.zeros(n)
    events = sorted(set(path.jump_times.tolist()) | set(grid.tolist())
                    | {s for s in spec.schedule_starts if 0 < s < spec.horizon})
    prev = 0.0
    x0 = np.zeros(n)
    x0[spec.initial_state] = 1.0
    grid_idx = 1
    out[0] = 0.0
    for t in events:
        if t <= prev:
            continue
        state = path.state_at(prev)
        drift = drift + _drift_integral_between(spec, prev, t, state)
        prev = t
        while grid_idx < grid.size and grid[grid_idx] <= t + 1e-15:
            x = np.zeros(n)
            x[path.state_at(grid[grid_idx])] = 1.0
            out[grid_idx] = x - x0 - drift
            grid_idx += 1
    return out


def psi_matrix(spec, t, state):
    """Quadratic-variation density with X frozen at the given state."""
    if not 0 <= state < spec.n_states:
        raise BadStateError(f"state {state} outside [0, {spec.n_states})")
    a = spec.generator_at(t)
    x = np.zeros(spec.n_states)
    x[state] = 1.0
    psi = np.diag(a @ x) - np.outer(x, a[:, state]) - np.outer(a[:, state], x)
    # diag(x) A' has row `state` equal to column `state` of A; A diag(x)
    # mirrors it in the column. Written with outer products for symmetry.
    psi[state, state] = -a[state, state]
    return PsiMatrix(matrix=psi, state=int(state), time=float(t))


def seminorm_sq(c, psi):
    """Squared seminorm c' Psi c (instantaneous variance of c' dM)."""
    mat = psi.matrix if isinstance(psi, PsiMatrix) else np.asarray(psi, dtype=float)
    c = np.asarray(c, dtype=float)
    val = float(c @ mat @ c)
    return max(val, 0.0)


def pseudoinverse(q, tol=1e-10):
    """Moore-Penrose pseudoinverse of a symmetric matrix.

    Symmetric eigendecomposition; eigenvalues with magnitude at most
    tol * max|eigenvalue| are treated as exact zeros.
    """
    q = np.asarray(q, dtype=float)
    if not np.allclose(q, q.T, atol=1e-10 * max(1.0, np.abs(q).max())):
        raise ValueError("pseudoinverse expects a symmetric matrix")
    w, v = np.linalg.eigh(0.5 * (q + q.T))
    top = np.abs(w).max() if w.size else 0.0
    if top == 0.0:
        return np.zeros_like(q)
    inv = np.where(np.abs(w) > tol * top, 1.0 / np.where(w == 0.0, 1.0, w), 0.0)
    return (v * inv) @ v.T


def check_contraction(spec, lipschitz_z, grid_steps=64):
    """Evaluate the fixed-point condition l2 * ||Psi^+||_F * sqrt(6m) < 1
    at every grid node and state.

    Returns a dict with the overall verdict, the worst margin
    1 - l2 ||Psi^+|| sqrt(6m), and where it is attained.
    """
    if lipschitz_z < 0:
        raise ValueError("lipschitz_z must be nonnegative")
    m = rate_bound_m(spec)
    grid = np.linspace(0.0, spec.horizon, int(grid_steps) + 1)
    worst = np.inf
    worst_at = (0.0, 0)
    for t in grid:
        for i in range(spec.n_states):
            psi = psi_matrix(spec, t, i).matrix
            pinv = pseudoinverse(psi)
            norm = float(np.sqrt(np.trace(pinv.T @ pinv)))
            margin = 1.0 - lipschitz_z * norm * np.sqrt(6.0 * m)
            if margin < worst:
                worst = margin
                worst_at = (float(t), i)
    return {"holds": bool(worst > 0.0), "worst_margin": float(worst),
            "worst_time_state": worst_at}


def path_to_csv_rows(path):
    """(jump_index, time, state) rows, including the start point at index -1."""
    rows = [(-1, 0.0, int(path.states[0]))]
    for k, (t, s) in enumerate(zip(path.jump_times, path.states[1:])):
        rows.append((k, float(t), int(s)))
    return rows
