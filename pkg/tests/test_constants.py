import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from varifold_lab.constants import (ConstantsError, build_table, mu_lambda, solve_cone_cylinder_constants,
                                    solve_partition_constants, solve_support_constants, smallest_M)


def test_mu_lambda_examples():
    assert mu_lambda(1, 2) == pytest.approx((0.5, 2 * math.sqrt(2)), abs=1e-12)
    mu, lam = mu_lambda(2, 4)
    assert mu == 0.5 and lam == pytest.approx(4 * math.pi ** -0.25, abs=1e-12)
    assert mu_lambda(1, 1e12)[0] == pytest.approx(1.0, abs=1e-11)
    with pytest.raises(ConstantsError):
        mu_lambda(2, 2)


def test_support_constants():
    c = solve_support_constants(1, 2, 1)
    assert c["eps0"] == pytest.approx(0.2, abs=1e-9)
    assert c["eps1"] == pytest.approx(math.log(2 / math.sqrt(3)) / (2 * math.sqrt(2)), abs=1e-9)
    assert c["eps1"] == pytest.approx(0.050856, abs=1e-6)


def test_eps0_ignores_q():
    assert solve_support_constants(1, 2, 1)["eps0"] == solve_support_constants(1, 7, 1)["eps0"]


def test_partition_constants():
    assert solve_partition_constants(3, 2, 1, 2, 1, 1.0)["C0"] == 2
    assert solve_partition_constants(3, 4, 2, 4, 1, 2.0)["C0"] == pytest.approx(32)
    assert smallest_M(3, 2, 1) == 7
    assert smallest_M(10, 2, 1) == 11
    with pytest.raises(ConstantsError):
        solve_partition_constants(3, 2, 1, 2, 1, 0.0)


def test_holder_constants():
    T = build_table(1, 2, 2, 1, 1.0)
    assert T.eps3 == pytest.approx(0.12375, abs=1e-12)
    assert T.C1 == pytest.approx(2 * math.sqrt(2.5), abs=1e-9)
    assert math.exp(T.lambda_const * T.eps4) * (1 + T.eps3) <= 1.25


def _tau0_oracle(m, delta2):
    return brentq(lambda t: ((1 + t) ** 2 - 1) ** (m / 2) / (1 + t) ** m - (1 + delta2) / 2, 1e-9, 10,
                  xtol=1e-14)


def test_cone_cylinder_constants():
    c = solve_cone_cylinder_constants(1, 1, 0.5, 0.125)
    assert c["lam0"] == pytest.approx(math.sqrt(7) / 4, abs=1e-9)
    assert c["tau0"] == pytest.approx(_tau0_oracle(1, 0.5), abs=1e-9)
    assert c["tau0"] == pytest.approx(0.511858, abs=1e-6)
    assert c["lam1"] == pytest.approx(2 / (2 + math.sqrt(2)), abs=1e-9)


@pytest.mark.parametrize("m, delta2", [(1, 0.25), (2, 0.5), (3, 0.75)])
def test_tau0_matches_root_finder(m, delta2):
    assert solve_cone_cylinder_constants(m, 1, delta2, 0.125)["tau0"] == pytest.approx(
        _tau0_oracle(m, delta2), abs=1e-9)


def _eps8_oracle(T):
    """Largest eps satisfying every displayed condition, each solved separately by root finding."""
    m, Q, q, lam = T.m, T.Q, T.q, T.lambda_const
    mu, om = T.mu, T.omega
    e3 = T.eps3
    conds = [lambda x: math.exp(lam * x) - (Q + e3) / (Q + x),
             lambda x: math.exp(lam * x) - (Q + 1.5 * x) / (Q + x) * 8 * Q / (8 * Q - 1),
             lambda x: math.exp(lam * x) - Q / (Q - 0.375)]
    roots = [brentq(f, 1e-12, 1.0, xtol=1e-15) for f in conds]
    lam3p = min(T.lam2, T.eps4 / (1 + T.eps4))
    caps = [e3 / 2, T.eps4 / m, 0.25, T.eps7 * lam3p ** mu / T.C1,
            m * (T.eps7 / ((Q + 0.5) * om) ** mu) ** (1 / m)]
    return 0.99 * min(roots + caps)


def test_eps8_oracle_and_regression():
    T = build_table(1, 2, 2, 1, 1.0, eps7=0.1)
    assert T.eps8 == pytest.approx(_eps8_oracle(T), rel=1e-9)
    assert T.eps8 == pytest.approx(0.0059041, abs=1e-7)
    assert T.lam3 == pytest.approx(T.lam2 * T.lam3p, abs=1e-15)


def test_eps8_monotone_in_eps7():
    vals = [build_table(1, 2, 2, 1, 1.0, eps7=e).eps8 for e in (0.01, 0.05, 0.1, 0.2, 0.5)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_gamma_free_table_refuses_partition_constants():
    T = build_table(1, 2, 2, 1)
    assert T.eps2 is None
    with pytest.raises(ConstantsError, match="Gamma"):
        T.require("C0")


def test_determinism():
    assert build_table(1, 2, 2, 2, 1.0).dumps() == build_table(1, 2, 2, 2, 1.0).dumps()


def test_provenance_tags():
    T = build_table(1, 2, 2, 1, 1.0, eps5=0.2)
    assert T.provenance["eps5"] == "configured" and T.provenance["eps0"] == "solved"
    assert T.provenance["Gamma"] == "configured"


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 3), st.integers(1, 4), st.floats(0.2, 5.0), st.floats(0.01, 0.5))
def test_self_check_holds(m, extra_q, Q, Gamma, eps7):
    q = m + 1 + extra_q
    T = build_table(m, m + 1, q, Q, Gamma, eps7=eps7)
    assert all(row["ok"] for row in T.self_check())
