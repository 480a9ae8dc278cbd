import itertools
import json
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_mask import (
    CapabilityError,
    ModelParams,
    ParameterDomainError,
    Part,
    Psi2Definition,
    SupportMask,
    binomial_pmf,
    enumerate_distribution,
    evaluate,
    exact_exp_moment,
    exact_moment,
    exact_psi2_moment_norm,
    exact_psi2_norm,
    exact_tail,
    exact_tail_curve,
    psi2_upper,
    weight_table,
)


def brute_force_law(params, part):
    """Independent oracle: plain itertools sweep with exact Fraction weights,
    grouped on rounded values."""
    outcomes = {}
    p = Fraction(params.m, params.N)
    for bits in itertools.product((0, 1), repeat=params.N):
        indices = frozenset(n for n, b in enumerate(bits, start=1) if b)
        value = evaluate(SupportMask(indices), params, part)
        weight = p ** len(indices) * (1 - p) ** (params.N - len(indices))
        if part is Part.COMPLEX:
            key = (round(value.real, 7), round(value.imag, 7))
        else:
            key = round(value, 7)
        outcomes[key] = outcomes.get(key, Fraction(0)) + weight
    return {k: v for k, v in outcomes.items() if v > 0}


def dist_as_dict(dist):
    if dist.part is Part.COMPLEX:
        return {
            (round(float(v.real), 7), round(float(v.imag), 7)): float(p)
            for v, p in zip(dist.values, dist.probs)
        }
    return {round(float(v), 7): float(p) for v, p in zip(dist.values, dist.probs)}


class TestEnumerateDistribution:
    def test_three_point_law(self):
        dist = enumerate_distribution(ModelParams(2, 1, 1), Part.REAL)
        assert dist_as_dict(dist) == pytest.approx({-1.0: 0.25, 0.0: 0.5, 1.0: 0.25})

    def test_single_certain_atom(self):
        dist = enumerate_distribution(ModelParams(1, 0, 1), Part.REAL)
        assert dist_as_dict(dist) == pytest.approx({1.0: 1.0})

    def test_binomial_cross_check(self):
        params = ModelParams(8, 0, 3)
        dist = enumerate_distribution(params, Part.REAL)
        for v, p in zip(dist.values, dist.probs):
            assert p == pytest.approx(binomial_pmf(8, 3, 8, round(float(v))), abs=1e-12)

    def test_deterministic_full_mask_drops_zero_atoms(self):
        dist = enumerate_distribution(ModelParams(4, 1, 4), Part.REAL)
        assert dist.values.size == 1
        assert dist.probs[0] == pytest.approx(1.0, abs=1e-15)
        assert abs(dist.values[0]) <= 1e-12

    @pytest.mark.parametrize("part", [Part.REAL, Part.IMAG, Part.MODULUS, Part.COMPLEX])
    @pytest.mark.parametrize("N,l,m", [(5, 2, 2), (6, 1, 3), (7, 3, 6), (4, 1, 1), (8, 2, 3)])
    def test_against_brute_force(self, N, l, m, part):
        params = ModelParams(N, l, m)
        expected = brute_force_law(params, part)
        got = dist_as_dict(enumerate_distribution(params, part))
        assert set(got) == set(expected)
        for key, prob in expected.items():
            assert got[key] == pytest.approx(float(prob), abs=1e-12)

    @given(
        st.integers(min_value=1, max_value=9).flatmap(
            lambda N: st.tuples(
                st.just(N),
                st.integers(min_value=0, max_value=N - 1),
                st.integers(min_value=1, max_value=N),
            )
        )
    )
    @settings(max_examples=40, deadline=None)
    def test_normalization_and_support_bound(self, nlm):
        params = ModelParams(*nlm)
        dist = enumerate_distribution(params, Part.REAL)
        assert abs(float(dist.probs.sum()) - 1.0) <= 1e-12
        assert (dist.probs > 0).all()
        assert float(np.abs(dist.values).max()) <= params.N + 1e-9
        if dist.values.size > 1:
            assert (np.diff(dist.values) > 0).all()  # grouped values distinct

    def test_modulus_centered_mean_zero(self):
        params = ModelParams(9, 2, 4)
        assert exact_moment(params, Part.MODULUS_CENTERED, 1) == pytest.approx(0.0, abs=1e-12)

    def test_guard(self):
        with pytest.raises(CapabilityError):
            enumerate_distribution(ModelParams(25, 1, 1), Part.REAL)
        with pytest.raises(CapabilityError):
            enumerate_distribution(ModelParams(20, 1, 1), Part.REAL, max_enum_n=16)
        with pytest.raises(ParameterDomainError):
            enumerate_distribution(ModelParams(4, 1, 1), Part.REAL, max_enum_n=27)

    def test_json_serialization(self):
        params = ModelParams(3, 1, 2)
        payload = json.loads(enumerate_distribution(params, Part.REAL).to_json())
        assert payload["params"] == {"N": 3, "l": 1, "m": 2}
        assert payload["part"] == "real"
        assert {"v", "p"} == set(payload["atoms"][0])
        complex_payload = enumerate_distribution(params, Part.COMPLEX).to_json_dict()
        assert isinstance(complex_payload["atoms"][0]["v"], list)

    def test_weight_table_matches_fractions(self):
        w = weight_table(6, 2)
        for k in range(7):
            assert w[k] == float(Fraction(2, 6) ** k * Fraction(4, 6) ** (6 - k))


class TestExactMoment:
    def test_mean_zero(self):
        assert exact_moment(ModelParams(8, 1, 4), Part.REAL, 1) == pytest.approx(0.0, abs=1e-12)

    def test_second_moment(self):
        assert exact_moment(ModelParams(8, 1, 4), Part.REAL, 2) == pytest.approx(1.0, abs=1e-12)

    def test_full_mask_vanishes(self):
        assert exact_moment(ModelParams(8, 1, 8), Part.REAL, 2) == pytest.approx(0.0, abs=1e-12)

    def test_complex_part_rejected(self):
        with pytest.raises(ParameterDomainError):
            exact_moment(ModelParams(4, 1, 2), Part.COMPLEX, 1)

    def test_bad_order(self):
        with pytest.raises(ParameterDomainError):
            exact_moment(ModelParams(4, 1, 2), Part.REAL, 0)


class TestExactTail:
    def test_at_zero(self):
        assert exact_tail(ModelParams(6, 1, 3), Part.REAL, 0.0) == pytest.approx(1.0)

    def test_beyond_support(self):
        assert exact_tail(ModelParams(6, 1, 3), Part.REAL, 7.0) == 0.0

    def test_hand_enumerated_value(self):
        assert exact_tail(ModelParams(3, 1, 1), Part.REAL, 1.0) == pytest.approx(6 / 27, abs=1e-12)

    def test_threshold_tolerance_counts_boundary_atoms(self):
        # Mass sitting analytically at t must be included even though the
        # floating sums land an ulp away.
        params = ModelParams(3, 1, 1)
        assert exact_tail(params, Part.REAL, 1.0) == exact_tail(params, Part.REAL, 1.0 - 1e-13)

    def test_monotone_and_matches_curve(self):
        params = ModelParams(7, 2, 3)
        ts = np.linspace(0.0, 8.0, 40)
        curve = exact_tail_curve(params, Part.REAL, ts)
        assert (np.diff(curve) <= 1e-15).all()
        for t, v in zip(ts, curve):
            assert exact_tail(params, Part.REAL, float(t)) == pytest.approx(float(v), abs=1e-15)

    def test_negative_threshold_rejected(self):
        with pytest.raises(ParameterDomainError):
            exact_tail(ModelParams(4, 1, 2), Part.REAL, -0.5)


class TestExactExpMoment:
    def test_limit_at_large_scale(self):
        assert exact_exp_moment(ModelParams(6, 1, 3), Part.REAL, 1e9) == pytest.approx(1.0, abs=1e-12)

    def test_three_point_closed_form(self):
        value = exact_exp_moment(ModelParams(2, 1, 1), Part.REAL, 1.0)
        assert value == pytest.approx(0.5 + 0.5 * math.e, rel=1e-15)

    def test_log_space_path_matches_high_precision(self):
        params = ModelParams(2, 1, 1)
        K = 0.03  # atom exponent 1/K^2 > 700 forces the log-space path
        value = exact_exp_moment(params, Part.REAL, K)
        expected = float(0.5 + 0.5 * mpmath.e ** (1.0 / mpmath.mpf(K) ** 2))
        assert value == pytest.approx(expected, rel=1e-12)

    def test_overflow_returns_inf(self):
        assert exact_exp_moment(ModelParams(2, 1, 1), Part.REAL, 1e-3) == math.inf

    def test_strictly_decreasing_in_scale(self):
        params = ModelParams(6, 1, 2)
        ks = [0.5, 1.0, 2.0, 4.0, 8.0]
        values = [exact_exp_moment(params, Part.REAL, k) for k in ks]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_bad_scale(self):
        with pytest.raises(ParameterDomainError):
            exact_exp_moment(ModelParams(4, 1, 2), Part.REAL, 0.0)


class TestExactPsi2Norm:
    def test_zero_variable(self):
        est = exact_psi2_norm(ModelParams(4, 1, 4), Part.REAL, 1e-9)
        assert est.norm == 0.0
        assert est.definition is Psi2Definition.ORLICZ_EXP_MOMENT

    def test_three_point_closed_form(self):
        est = exact_psi2_norm(ModelParams(2, 1, 1), Part.REAL, 1e-10)
        assert abs(est.norm - 1.0 / math.sqrt(math.log(3.0))) <= 1e-9
        lo, hi = est.bracket
        assert lo <= est.norm <= hi and hi - lo <= 1e-10

    def test_root_consistency(self):
        params = ModelParams(8, 1, 4)
        tol = 1e-9
        est = exact_psi2_norm(params, Part.REAL, tol)
        at_root = exact_exp_moment(params, Part.REAL, est.norm)
        h = 1e-6 * est.norm
        slope = abs(
            exact_exp_moment(params, Part.REAL, est.norm + h)
            - exact_exp_moment(params, Part.REAL, est.norm - h)
        ) / (2 * h)
        assert abs(at_root - 2.0) <= 10 * tol * slope + 1e-12

    def test_under_closed_form_bound(self):
        params = ModelParams(8, 1, 4)
        assert exact_psi2_norm(params, Part.REAL, 1e-9).norm <= psi2_upper(8)

    def test_constant_variable_norm(self):
        # Full mask at l=0: the value is the constant N, with norm N/sqrt(ln 2).
        est = exact_psi2_norm(ModelParams(4, 0, 4), Part.REAL, 1e-10)
        assert est.norm == pytest.approx(4.0 / math.sqrt(math.log(2.0)), abs=1e-8)

    def test_bad_tol(self):
        with pytest.raises(ParameterDomainError):
            exact_psi2_norm(ModelParams(4, 1, 2), Part.REAL, 0.0)


class TestExactPsi2MomentNorm:
    def test_zero_variable(self):
        assert exact_psi2_moment_norm(ModelParams(4, 1, 4), Part.REAL).norm == 0.0

    def test_three_point_analytic_supremum(self):
        # E|X|^p = 1/2 for every p; the supremum of p^(-1/2) 2^(-1/p) sits at
        # p = 2 ln 2 with value exp(-1/2)/sqrt(2 ln 2).
        est = exact_psi2_moment_norm(ModelParams(2, 1, 1), Part.REAL)
        expected = math.exp(-0.5) / math.sqrt(2.0 * math.log(2.0))
        assert est.norm == pytest.approx(expected, rel=1e-9)
        assert est.definition is Psi2Definition.MOMENT_SUP

    def test_below_sup_norm(self):
        params = ModelParams(9, 2, 4)
        dist = enumerate_distribution(params, Part.REAL)
        sup_norm = float(np.abs(dist.values).max())
        assert exact_psi2_moment_norm(params, Part.REAL).norm <= sup_norm + 1e-9

    def test_bad_args(self):
        with pytest.raises(ParameterDomainError):
            exact_psi2_moment_norm(ModelParams(4, 1, 2), Part.REAL, p_max=0.5)
        with pytest.raises(ParameterDomainError):
            exact_psi2_moment_norm(ModelParams(4, 1, 2), Part.REAL, grid=1)
