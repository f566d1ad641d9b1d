import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varifold_lab.counterexample import (Monotone, SequenceError, arch_energy, build_line_fan, build_sine_scene,
                                         exact_pow, fan_density, generate_sequence, s_of_rho, sine_growth,
                                         sine_zeros, verify_properties)
from varifold_lab.report import CONCLUSION_VIOLATED, PASS, PREMISE_VIOLATED


@pytest.fixture(scope="module")
def seq50():
    return generate_sequence(0.5, "id", "id", 50)


def test_identity_closed_form_bit_exact(seq50):
    assert seq50.exact and seq50.depth == 50
    for i, (R, P, rho) in enumerate(seq50.triples, start=1):
        assert R == Fraction(1, 2 ** (2 * (i - 1)))
        assert P == Fraction(1, 2 ** (2 * i - 1))
        assert rho == Fraction(1, 2 ** (2 * i))


def test_first_triples(seq50):
    assert seq50.triples[:2] == [(1, Fraction(1, 2), Fraction(1, 4)), (Fraction(1, 4), Fraction(1, 8), Fraction(1, 16))]


def test_properties_certified(seq50):
    rep = verify_properties(seq50)
    assert rep.status == PASS
    assert rep.data["points_needed"] == 50
    assert len(rep.data["intervals"]) == 50 and not rep.data["overlaps"]


def test_tampered_sequence_fails():
    s = generate_sequence(0.5, "id", "id", 5)
    s.triples[1] = (s.R[1], s.P[0], s.rho[1])
    rep = verify_properties(s)
    assert rep.status == PREMISE_VIOLATED
    assert any(not c.ok for c in rep.conclusions)


def _float_oracle(eps, f, finv, g, depth):
    R, P, prev, out = 1.0, 0.5, eps, []
    for i in range(1, depth + 1):
        rho = 0.5 * min([prev, finv(min(P, R - P))] + ([1.0 / (i - 1)] if i >= 2 else []))
        out.append((R, P, rho))
        R = P - f(rho)
        P = 0.5 * min(g(rho), R)
        prev = rho
    return out


def test_log_descriptors_match_oracle():
    s = generate_sequence(0.5, "log", "log", 12)
    assert not s.exact
    want = _float_oracle(0.5, math.log1p, math.expm1, math.log1p, 12)
    assert np.allclose(np.array(s.triples, dtype=float), want, rtol=1e-14, atol=0)


def test_power_descriptor_matches_oracle():
    s = generate_sequence(0.5, {"id": "power", "alpha": 2}, "id", 10)
    assert verify_properties(s).status == PASS
    want = _float_oracle(0.5, lambda t: t * t, math.sqrt, lambda t: t, 10)
    assert np.allclose(np.array(s.triples, dtype=float), want, rtol=1e-12)


def test_power_descriptor_exact_when_rational():
    s = generate_sequence(Fraction(1, 4), {"id": "power", "alpha": 2, "coef": 2}, "id", 1)
    assert s.exact and s.rho == [Fraction(1, 8)]


def test_irrational_falls_back_to_float():
    s = generate_sequence(0.5, {"id": "power", "alpha": 0.5}, "id", 8)
    assert not s.exact and "irrational values: float mode" in s.flags
    with pytest.raises(SequenceError):
        generate_sequence(0.5, {"id": "power", "alpha": 0.5}, "id", 8, exact=True)


def test_float_underflow_stops_early():
    s = generate_sequence(0.5, "id", {"id": "power", "alpha": 1.5}, 50, exact=False)
    assert s.depth < 50 and any("underflow" in fl for fl in s.flags)
    assert verify_properties(s).status == PASS


@pytest.mark.parametrize("bad", [{"id": "cubic"}, {"id": "power", "alpha": -1}])
def test_bad_descriptors(bad):
    with pytest.raises(SequenceError):
        generate_sequence(0.5, bad, "id", 3)


def test_bad_depth_and_eps():
    with pytest.raises(SequenceError):
        generate_sequence(0.5, "id", "id", 0)
    with pytest.raises(SequenceError):
        generate_sequence(0.0, "id", "id", 3)


def test_exact_pow():
    assert exact_pow(Fraction(9, 4), Fraction(1, 2)) == Fraction(3, 2)
    assert exact_pow(Fraction(2), Fraction(1, 2)) is None
    assert exact_pow(Fraction(1, 8), Fraction(2, 3)) == Fraction(1, 4)


def test_monotone_inverse_roundtrip():
    for d in ("id", "log", {"id": "power", "alpha": 3, "coef": 2}):
        m = Monotone.parse(d)
        assert m(m.inverse(0.3)) == pytest.approx(0.3, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 2.0), st.sampled_from(["id", "log", {"id": "power", "alpha": 2.0}]),
       st.sampled_from(["id", "log", {"id": "power", "alpha": 0.5}]), st.integers(1, 25))
def test_generated_sequences_satisfy_invariants(eps, f, g, depth):
    s = generate_sequence(eps, f, g, depth)
    assert s.invariant_failures() == []
    assert verify_properties(s).status == PASS


def test_s_of_rho_nesting():
    s = generate_sequence(0.5, "id", "id", 6)
    small, big = s_of_rho(s, Fraction(1, 64)), s_of_rho(s, Fraction(1, 4))
    assert set(small.points) <= set(big.points)
    assert len(big) == 6 and Fraction(1, 2) in big
    assert s_of_rho(s, Fraction(1, 10 ** 9)).depth_limited


def test_fan_density_equals_depth(seq50):
    for d in (1, 5, 12):
        info = fan_density(build_line_fan(seq50, d))
        assert info["density"] == pytest.approx(d, abs=1e-9) and info["lines"] == d


def test_sine_zeros():
    s = generate_sequence(0.5, "id", "id", 3)
    assert sine_zeros(s) == [0.0, 0.03125, 0.125, 0.5, 1.0]


def test_sine_scene_arch_energy_scales():
    s = generate_sequence(0.5, "id", "id", 3)
    e = arch_energy(build_sine_scene(s, 3), 2.0)
    assert len(e) == 8
    assert np.all(e > 0)


def test_sine_growth_strict(seq50):
    rep = sine_growth(seq50, [5, 10, 20])
    assert rep.status == PASS
    v = rep.data["seminorms"]
    assert v[0] < v[1] < v[2]


def test_sine_growth_flat_depths_fail(seq50):
    rep = sine_growth(seq50, [5, 5])
    assert rep.status == CONCLUSION_VIOLATED


def test_json_encodes_fractions():
    js = generate_sequence(0.5, "id", "id", 2).to_json()
    assert js["triples"][1]["P"] == "1/8" and js["triples"][1]["P_float"] == 0.125
