"""Monte Carlo engine and the statistical consistency checks."""

import numpy as np
import pytest

from markovbsde import (ChainPath, build_market_spec, european_consistency,
                        isometry_check, mc_estimate, simulate_path)
from markovbsde.montecarlo import (report_csv_rows, seminorm_time_integral,
                                   stochastic_integral)
from markovbsde.errors import NonFiniteError


def test_mc_estimate_is_deterministic(two_state_chain):
    a = mc_estimate(two_state_chain, lambda p: float(p.n_jumps), 500, seed_base=9)
    b = mc_estimate(two_state_chain, lambda p: float(p.n_jumps), 500, seed_base=9)
    assert a == b
    c = mc_estimate(two_state_chain, lambda p: float(p.n_jumps), 500, seed_base=10)
    assert a.mean != c.mean


def test_mc_estimate_validates_inputs(two_state_chain):
    with pytest.raises(ValueError):
        mc_estimate(two_state_chain, lambda p: 0.0, 1)
    with pytest.raises(NonFiniteError):
        mc_estimate(two_state_chain, lambda p: float("nan"), 10)
    with pytest.raises(TypeError):
        mc_estimate("not a chain", lambda p: 0.0, 10)


def test_jump_count_mean(two_state_chain):
    # rate-1 chain: jumps arrive at rate 1 regardless of state, E[N_T] = T
    est = mc_estimate(two_state_chain, lambda p: float(p.n_jumps), 20000)
    assert abs(est.mean - 1.0) <= 4.0 * est.std_error


def test_stochastic_integral_on_manual_path(two_state_chain):
    z = np.array([2.0, 5.0])
    path = ChainPath(jump_times=np.array([0.25]), states=np.array([0, 1]),
                     horizon=1.0, seed=0)
    # jump part: z_1 - z_0 = 3; compensator: int z'A X du
    # = 0.25 * z'(-1, 1) + 0.75 * z'(1, -1) = 0.25*3 + 0.75*(-3)
    expected = 3.0 - (0.25 * 3.0 + 0.75 * (-3.0))
    got = stochastic_integral(two_state_chain, z, path)
    assert got == pytest.approx(expected, abs=1e-14)


def test_seminorm_time_integral_on_manual_path(two_state_chain):
    # Psi is the same at both states: z' Psi z = (z_0 - z_1)^2
    z = np.array([2.0, 5.0])
    path = ChainPath(jump_times=np.array([0.25]), states=np.array([0, 1]),
                     horizon=1.0, seed=0)
    got = seminorm_time_integral(two_state_chain, z, path)
    assert got == pytest.approx(9.0, abs=1e-14)


def test_martingale_integral_has_zero_mean(two_state_chain):
    z = np.array([1.0, -1.0])
    est = mc_estimate(two_state_chain,
                      lambda p: stochastic_integral(two_state_chain, z, p),
                      n_paths=5000, seed_base=77)
    assert abs(est.mean) <= 4.0 * est.std_error


def test_isometry_check_passes(two_state_chain):
    rep = isometry_check(two_state_chain, np.array([1.0, 0.0]), n_paths=5000)
    assert rep["pass"]
    assert rep["rhs"] == pytest.approx(1.0, abs=1e-12)  # analytic value


def test_european_consistency_c0(market_c0):
    rep = european_consistency(market_c0, np.array([1.0, 2.0]), n_paths=5000,
                               steps=300)
    assert rep["pass"]
    assert rep["std_error"] > 0.0


def test_european_consistency_c_nonzero(two_state_chain):
    c = np.array([[0.0, 0.02], [0.03, 0.0]])
    mkt = build_market_spec(two_state_chain, c_schedule=c,
                            d_schedule=[0.05, 0.06], dividends=[[1.0, 2.0]])
    rep = european_consistency(mkt, np.array([1.0, 2.0]), n_paths=5000,
                               steps=300)
    assert rep["pass"]


def test_report_csv_rows():
    rows = report_csv_rows({
        "a": {"lhs": 1.0, "rhs": 1.1, "std_error": 0.05, "pass": True},
        "b": {"solver_value": 2.0, "mc_value": 1.9, "std_error": 0.04,
              "pass": False},
    })
    assert rows[0] == ("a", 1.0, 1.1, 0.05, True)
    assert rows[1] == ("b", 2.0, 1.9, 0.04, False)
