"""Monte Carlo estimation engine and the statistical checks tying pathwise
simulation to the analytic solvers.

Functionals receive exact jump paths, so stochastic integrals against the
chain martingale carry no time-discretization bias; only dt integrals use
quadrature. All estimates are deterministic given (seed_base, n_paths),
with path p drawn from seed_base + p.
"""

from dataclasses import dataclass

import numpy as np

from .bsde import solve_bsde
from .chain import ChainSpec, psi_matrix, seminorm_sq, simulate_path
from .errors import NonFiniteError
from .hedge import make_hedge_driver
from .market import MarketSpec, terminal_sdf


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int
    seed_base: int


def _chain_of(spec_or_market):
    if isinstance(spec_or_market, MarketSpec):
        return spec_or_market.chain
    if isinstance(spec_or_market, ChainSpec):
        return spec_or_market
    raise TypeError(f"expected ChainSpec or MarketSpec, got {type(spec_or_market)}")


def mc_estimate(spec_or_market, functional, n_paths, seed_base=0):
    """Sample mean and standard error of a path functional."""
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    chain = _chain_of(spec_or_market)
    samples = np.empty(n_paths)
    for p in range(n_paths):
        seed = seed_base + p
        val = float(functional(simulate_path(chain, seed)))
        if not np.isfinite(val):
            raise NonFiniteError(f"functional returned {val} for seed {seed}")
        samples[p] = val
    return McEstimate(mean=float(samples.mean()),
                      std_error=float(samples.std(ddof=1) / np.sqrt(n_paths)),
                      n_paths=int(n_paths), seed_base=int(seed_base))


def stochastic_integral(spec, z, path):
    """Exact pathwise int z' dM for a constant vector z: jump increments
    minus the drift compensator."""
    z = np.asarray(z, dtype=float)
    total = 0.0
    for idx in range(path.n_jumps):
        old, new = int(path.states[idx]), int(path.states[idx + 1])
        total += z[new] - z[old]
    for t0, t1, state in path.segments():
        cuts = [t0] + [s for s in spec.breakpoints() if t0 < s < t1] + [t1]
        for a, b in zip(cuts[:-1], cuts[1:]):
            gen = spec.generator_at(a)
            total -= float(z @ gen[:, state]) * (b - a)
    return total


def seminorm_time_integral(spec, z, path):
    """Exact pathwise int ||z||^2_{X_u} du for a constant vector z."""
    total = 0.0
    for t0, t1, state in path.segments():
        cuts = [t0] + [s for s in spec.breakpoints() if t0 < s < t1] + [t1]
        for a, b in zip(cuts[:-1], cuts[1:]):
            total += seminorm_sq(z, psi_matrix(spec, a, state)) * (b - a)
    return total


def isometry_check(spec, z, n_paths, seed_base=0):
    """Check E[(int z'dM)^2] against E[int ||z||^2 du] on shared paths.

    The per-path difference of the two functionals must have mean within 3
    standard errors of zero.
    """
    z = np.asarray(z, dtype=float)
    lhs = np.empty(n_paths)
    rhs = np.empty(n_paths)
    for p in range(n_paths):
        path = simulate_path(spec, seed_base + p)
        lhs[p] = stochastic_integral(spec, z, path) ** 2
        rhs[p] = seminorm_time_integral(spec, z, path)
    diff = lhs - rhs
    se = float(diff.std(ddof=1) / np.sqrt(n_paths))
    passed = abs(float(diff.mean())) <= 3.0 * se + 1e-12
    return {"lhs": float(lhs.mean()), "rhs": float(rhs.mean()),
            "diff": float(diff.mean()), "std_error": se,
            "pass": bool(passed), "n_paths": int(n_paths)}


def european_consistency(market, terminal_claim, n_paths, steps=400,
                         seed_base=0):
    """Compare the BSDE value of a terminal claim under the pricing driver
    with the Monte Carlo deflated expectation E[pi_T claim'X_T]."""
    claim = np.asarray(terminal_claim, dtype=float)
    driver = make_hedge_driver(market)
    sol = solve_bsde(market.chain, driver, claim, steps)
    bsde_value = float(sol.values[0, market.chain.initial_state])
    samples = np.empty(n_paths)
    for p in range(n_paths):
        path = simulate_path(market.chain, seed_base + p)
        samples[p] = terminal_sdf(market, path) * claim[path.state_at(path.horizon)]
    mean = float(samples.mean())
    se = float(samples.std(ddof=1) / np.sqrt(n_paths))
    passed = abs(mean - bsde_value) <= 3.0 * se + 1e-12
    return {"lhs": bsde_value, "rhs": mean, "std_error": se,
            "pass": bool(passed), "n_paths": int(n_paths)}


def report_csv_rows(named_reports):
    """(check_name, lhs, rhs, std_error, pass) rows from a dict of reports."""
    rows = []
    for name, rep in named_reports.items():
        lhs = rep.get("lhs", rep.get("solver_value", float("nan")))
        rhs = rep.get("rhs", rep.get("mc_value", float("nan")))
        rows.append((name, float(lhs), float(rhs),
                     float(rep.get("std_error", float("nan"))),
                     bool(rep["pass"])))
    return rows
