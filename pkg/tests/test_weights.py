import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import doubling_sup, gevrey2_conjugate
from tfnuclear.errors import ConditionFailure, ConfigError, DomainError
from tfnuclear.weights import (WeightFunction, biconjugate_error, certify_alpha,
                               certify_gamma, check_little_o, compare_weights,
                               eval_weight, gamma_offset, log_grid, phi, young_conjugate)

# Oracle values, computed once with tests/oracles.py on the default grid
# (0 plus 512 nodes per decade on [1e-3, 1e6], restricted to 2t <= 1e6).
L_LOG_POWER_2 = 1.3776741690676806
TAIL_RATIO_LOG_POWER_1 = 1.3815511557963774e-05


def _doubling_grid():
    t = log_grid()
    return t[2 * t <= 1e6]


# eval_weight

def test_eval_log_power_at_zero():
    assert eval_weight(WeightFunction.log_power(1), 0.0) == 0.0


def test_eval_log_power_squared():
    assert eval_weight(WeightFunction.log_power(2), math.e - 1) == pytest.approx(1.0, rel=1e-15)


def test_eval_gevrey_root():
    assert eval_weight(WeightFunction.gevrey_root(2), 4.0) == pytest.approx(2.0, rel=1e-15)


def test_eval_rejects_negative_and_beyond_cap():
    w = WeightFunction.log_power(1)
    with pytest.raises(DomainError):
        eval_weight(w, -1.0)
    with pytest.raises(DomainError):
        eval_weight(w, 2e6)


def test_custom_is_piecewise_linear():
    w = WeightFunction.custom([[0, 0], [1, 2], [3, 3]])
    assert eval_weight(w, 0.5) == pytest.approx(1.0)
    assert eval_weight(w, 2.0) == pytest.approx(2.5)
    assert w.domain_cap == 3.0


@pytest.mark.parametrize("samples", [
    [[0, 1], [1, 0.5]],          # decreasing
    [[0, 0], [0, 1]],            # repeated abscissa
    [[1, 0], [2, 1]],            # does not start at 0
    [[0, 0]],                    # too short
])
def test_custom_validation(samples):
    with pytest.raises(ConfigError):
        WeightFunction.custom(samples)


def test_family_validation():
    with pytest.raises(ConfigError):
        WeightFunction.log_power(0)
    with pytest.raises(ConfigError):
        WeightFunction.gevrey_root(1.0)
    with pytest.raises(ConfigError):
        WeightFunction.from_json({"family": "cubic"})
    with pytest.raises(ConfigError):
        WeightFunction.from_json({"family": "log_power"})


def test_from_json_roundtrip():
    w = WeightFunction.from_json(json.loads('{"family": "gevrey_root", "s": 3}'))
    assert w.params == {"s": 3.0}
    w2 = WeightFunction.from_json({"family": "custom", "samples": [[0, 0], [10, 1]]})
    assert eval_weight(w2, 5.0) == pytest.approx(0.5)


# certify_alpha

def test_oracle_doubling_log_power_2_frozen():
    t = _doubling_grid()
    val = doubling_sup(lambda x: math.log1p(x) ** 2, t)
    assert val == pytest.approx(L_LOG_POWER_2, rel=1e-12)


def test_certify_alpha_log_power_1_is_one():
    t = _doubling_grid()
    assert doubling_sup(math.log1p, t) == 1.0
    w = WeightFunction.log_power(1)
    assert certify_alpha(w) == 1.0
    assert w.L == 1.0
    assert len(w.certificates["alpha"]["grid_hash"]) == 16


def test_certify_alpha_log_power_2_matches_oracle():
    w = WeightFunction.log_power(2)
    assert certify_alpha(w) == pytest.approx(L_LOG_POWER_2, rel=1e-12)


def test_certify_alpha_linear_tends_to_two():
    Ls = []
    for cap in (1e2, 1e4, 1e6):
        w = WeightFunction.from_callable(lambda t: t, domain_cap=cap)
        Ls.append(certify_alpha(w))
    assert Ls[0] < Ls[1] < Ls[2] < 2.0
    # sup 2t/(t+1) over t <= cap/2 is 2 - 2/(cap/2 + 1)
    assert Ls[-1] == pytest.approx(2 - 2 / (0.5e6 + 1), rel=1e-6)


def test_certify_alpha_failure_above_cap():
    w = WeightFunction.from_callable(lambda t: t ** 3, domain_cap=1e3)
    with pytest.raises(ConditionFailure):
        certify_alpha(w, L_cap=2.0)


# certify_gamma

def test_certify_gamma_log_power_1():
    w = WeightFunction.log_power(1)
    a, b = certify_gamma(w)
    assert b == pytest.approx(1.0, rel=1e-9)
    assert a == pytest.approx(0.0, abs=1e-9)
    assert (w.a, w.b) == (a, b)


def test_gamma_offset_gevrey_b_one():
    # oracle: sqrt(t) - log(1+t) >= 0 on the grid with the minimum 0 at t = 0
    t = log_grid()
    g = np.sqrt(t) - np.log1p(t)
    assert g.min() == 0.0
    a, trend = gamma_offset(WeightFunction.gevrey_root(2), 1.0)
    assert a == pytest.approx(0.0, abs=1e-12)
    assert trend


def test_certify_gamma_gevrey_feasible_with_b_at_least_one():
    a, b = certify_gamma(WeightFunction.gevrey_root(2))
    assert b >= 1.0
    assert np.isfinite(a)


def test_certify_gamma_loglog_fails():
    w = WeightFunction.from_callable(lambda t: np.log1p(np.log1p(t)))
    with pytest.raises(ConditionFailure) as exc:
        certify_gamma(w)
    slopes = exc.value.report["decade_slopes"]
    assert np.all(np.diff(slopes) < 0)


def test_certify_gamma_constant_zero_fails():
    with pytest.raises(ConditionFailure):
        certify_gamma(WeightFunction.custom([[0, 0], [1e6, 0]]))


# check_little_o and compare_weights

def test_little_o_log_power_passes():
    rep = check_little_o(WeightFunction.log_power(1))
    assert rep.verdict == "pass"
    assert math.log1p(1e6) / 1e6 == pytest.approx(TAIL_RATIO_LOG_POWER_1, rel=1e-14)
    assert rep.tail_ratio == pytest.approx(TAIL_RATIO_LOG_POWER_1, rel=1e-12)


def test_little_o_linear_fails():
    rep = check_little_o(WeightFunction.custom([[0, 0], [1e6, 5e5]]))
    assert rep.verdict == "fail"
    assert rep.tail_ratio == pytest.approx(0.5)


def test_little_o_gevrey_passes():
    rep = check_little_o(WeightFunction.gevrey_root(2))
    assert rep.verdict == "pass"
    assert rep.tail_ratio == pytest.approx(1e-3, rel=1e-9)


def test_little_o_slow_decay_is_inconclusive():
    # w(t)/t decreases over the last decade but is still far above eps
    rep = check_little_o(WeightFunction.gevrey_root(1.05, domain_cap=1e4))
    assert rep.verdict == "inconclusive"


def test_compare_weights_examples():
    lp1, lp2 = WeightFunction.log_power(1), WeightFunction.log_power(2)
    # log t / sqrt t is still 0.014 at 1e6, so the pass needs a longer grid
    assert compare_weights(lp1, WeightFunction.gevrey_root(2)).verdict == "inconclusive"
    far = WeightFunction.log_power(1, 1e8), WeightFunction.gevrey_root(2, 1e8)
    assert compare_weights(*far).verdict == "pass"
    assert compare_weights(lp1, lp1).verdict == "fail"
    assert compare_weights(lp2, lp1).verdict == "fail"


def test_tail_report_serializes():
    d = check_little_o(WeightFunction.log_power(1)).to_dict(points=8)
    assert d["verdict"] == "pass" and len(d["trace"]["t"]) <= 8


# Young conjugate

S_GRID = np.linspace(0.0, 60.0, 1201)


@pytest.fixture(scope="module")
def gevrey_table():
    return young_conjugate(WeightFunction.gevrey_root(2), S_GRID)


def test_young_conjugate_gevrey_closed_form(gevrey_table):
    sel = (S_GRID >= 1) & (S_GRID <= 50)
    exact = gevrey2_conjugate(S_GRID[sel])
    rel = np.abs(gevrey_table.values[sel] - exact) / np.abs(exact)
    assert rel.max() <= 1e-3


def test_young_conjugate_at_zero_is_minus_w_of_one():
    for w in (WeightFunction.log_power(1), WeightFunction.log_power(2),
              WeightFunction.gevrey_root(3)):
        tab = young_conjugate(w, np.array([0.0, 1.0]))
        assert tab.values[0] == pytest.approx(-eval_weight(w, 1.0), abs=1e-15)


def test_biconjugate_recovers_phi(gevrey_table):
    err, t = biconjugate_error(WeightFunction.gevrey_root(2), gevrey_table)
    assert err <= 1e-3
    assert t.size == 400


def test_conjugate_csv(tmp_path, gevrey_table):
    p = tmp_path / "c.csv"
    gevrey_table.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "s,phi_star,argmax_t"
    assert len(lines) == S_GRID.size + 1


def test_young_conjugate_rejects_bad_grid():
    with pytest.raises(DomainError):
        young_conjugate(WeightFunction.log_power(1), np.array([1.0, 0.5]))


def test_phi_is_w_of_exp():
    w = WeightFunction.log_power(1)
    assert phi(w, 2.0) == pytest.approx(math.log1p(math.e ** 2))


# properties

weights_strategy = st.one_of(
    st.floats(0.5, 3.0).map(lambda b: WeightFunction.log_power(b, domain_cap=1e4)),
    st.floats(1.2, 4.0).map(lambda s: WeightFunction.gevrey_root(s, domain_cap=1e4)),
)


@settings(max_examples=15, deadline=None)
@given(w=weights_strategy, seed=st.integers(0, 2 ** 16))
def test_subadditivity_bound_on_grid_pairs(w, seed):
    t = log_grid(1e4, 64)
    L = certify_alpha(w, t)
    rng = np.random.default_rng(seed)
    i, j = rng.integers(0, t.size, (2, 500))
    t1, t2 = t[i], t[j]
    keep = t1 + t2 <= 1e4
    lhs = eval_weight(w, t1[keep] + t2[keep])
    rhs = L * (eval_weight(w, t1[keep]) + eval_weight(w, t2[keep]) + 1)
    assert np.all(lhs <= rhs * (1 + 1e-12))


@settings(max_examples=10, deadline=None)
@given(w=weights_strategy)
def test_conjugate_table_invariants(w):
    s = np.linspace(0.05, 20.0, 200)
    tab = young_conjugate(w, s)
    ok = ~tab.cap_limited
    v, ss = tab.values[ok], s[ok]
    # convex, non-decreasing, and values/s non-decreasing
    slopes = np.diff(v) / np.diff(ss)
    assert np.all(np.diff(slopes) >= -1e-6 * (1 + np.abs(slopes[1:])))
    assert np.all(np.diff(v) >= -1e-12)
    q = v / ss
    assert np.all(np.diff(q) >= -1e-9 * (1 + np.abs(q[1:])))
