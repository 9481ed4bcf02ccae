import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qopt.schedules import GainSchedule, adaptive_perturbation, gains_at, paper_recipe

positive = st.floats(min_value=1e-3, max_value=1e4, allow_nan=False)
exponent = st.floats(min_value=0.01, max_value=1.0)

schedules = st.builds(
    GainSchedule,
    a=positive, alpha_exp=exponent, b=positive, beta_exp=exponent,
    r=positive, gamma_exp=exponent, c=positive, tau_exp=exponent,
    shift=st.integers(min_value=0, max_value=10_000),
)


def test_alpha_at_first_iteration():
    s = paper_recipe(30_000, 3)
    assert gains_at(s, 1)[0] == 2.0


def test_gamma_at_16():
    s = GainSchedule(a=2, alpha_exp=0.99, b=1, beta_exp=0.74, r=1000, gamma_exp=0.75,
                     c=1, tau_exp=0.125, shift=0)
    assert gains_at(s, 16)[2] == pytest.approx(125.0, rel=1e-14)


def test_beta_equals_kappa_at_shift():
    # at k = R the (2R)**beta factors cancel
    s = paper_recipe(300_000, 3)
    assert s.shift == 10_000
    _, beta, _, c = gains_at(s, s.shift)
    assert beta == pytest.approx(0.05, rel=1e-12)
    assert c == pytest.approx(0.5, rel=1e-12)


def test_recipe_spqo_budget():
    s = paper_recipe(300_000, 3)
    assert s.shift == 10_000
    assert s.r == 10_000
    assert (s.a, s.alpha_exp, s.gamma_exp, s.beta_exp, s.tau_exp) == (2.0, 0.99, 0.75, 0.74, 0.125)
    assert s.b == pytest.approx(0.05 * 20_000**0.74)
    assert s.c == pytest.approx(0.5 * 20_000**0.125)


def test_recipe_sdqo_budget():
    s = paper_recipe(300_000, 41, dim=20)
    # floor(3e5 / 41) = 7317 iterations, 10% rounded half up
    assert 300_000 // 41 == 7317
    assert s.shift == 732


def test_recipe_rejects_infeasible_budget():
    with pytest.raises(ValueError):
        paper_recipe(2, 3)


def test_recipe_is_theory_compliant():
    s = paper_recipe(300_000, 3)
    assert s.timescales_ordered
    assert s.theory_compliant


@pytest.mark.parametrize("field", ["a", "b", "r", "c"])
def test_nonpositive_numerator_rejected(field):
    kw = paper_recipe(3000, 3).to_dict()
    kw[field] = 0.0
    with pytest.raises(ValueError):
        GainSchedule.from_dict(kw)


def test_exponent_out_of_range_rejected():
    with pytest.raises(ValueError):
        paper_recipe(3000, 3).replace(alpha=1.2)


def test_round_trip_serialization():
    s = paper_recipe(30_000, 3)
    d = s.to_dict()
    assert set(d) == {"a", "alpha", "b", "beta", "r", "gamma", "c", "tau", "shift_R"}
    assert GainSchedule.from_dict(d) == s


def test_unknown_field_rejected():
    d = paper_recipe(30_000, 3).to_dict()
    d["eta"] = 1.0
    with pytest.raises(ValueError):
        GainSchedule.from_dict(d)


def test_k_zero_rejected():
    with pytest.raises(ValueError):
        gains_at(paper_recipe(30_000, 3), 0)


@given(schedules, st.integers(min_value=1, max_value=10**7))
def test_gains_nonincreasing(s, k):
    now, nxt = gains_at(s, k), gains_at(s, k + 1)
    assert all(b <= a for a, b in zip(now, nxt))
    assert all(a > 0 for a in now)


def test_timescale_ratios_decrease():
    s = paper_recipe(300_000, 3)
    ks = [10**2, 10**4, 10**6]
    g = [gains_at(s, k) for k in ks]
    ag = [a / gam for a, _, gam, _ in g]
    gb = [gam / b for _, b, gam, _ in g]
    assert ag[0] > ag[1] > ag[2]
    assert gb[0] > gb[1] > gb[2]


def test_vectorized_gains_match_scalar():
    s = paper_recipe(30_000, 3)
    ks = np.arange(1, 50)
    vec = gains_at(s, ks)
    for i, k in enumerate(ks):
        assert np.allclose([v[i] for v in vec], gains_at(s, int(k)), rtol=1e-15)


def test_adaptive_zero_gradient():
    assert adaptive_perturbation(0.5, np.zeros(2)) == 0.5


def test_adaptive_large_gradient():
    assert adaptive_perturbation(0.4, np.array([3.0, 4.0])) == pytest.approx(0.4 / (5 / math.sqrt(2)))
    assert adaptive_perturbation(0.4, np.array([3.0, 4.0])) == pytest.approx(0.113137, abs=1e-6)


def test_adaptive_boundary():
    assert adaptive_perturbation(0.4, np.array([1.0, 1.0])) == pytest.approx(0.4)


@given(
    st.floats(min_value=1e-4, max_value=10),
    st.lists(st.floats(min_value=-1e3, max_value=1e3), min_size=1, max_size=25),
)
def test_adaptive_round_trip(c, D):
    D = np.array(D)
    cbar = adaptive_perturbation(c, D)
    m = max(1.0, np.linalg.norm(D) / math.sqrt(D.size))
    assert cbar <= c
    assert cbar * m == pytest.approx(c, rel=1e-12)
    assert cbar * np.linalg.norm(D) <= c * math.sqrt(D.size) * (1 + 1e-12)
