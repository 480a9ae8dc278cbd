import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_mask import (
    FormKind,
    ModelParams,
    ParameterDomainError,
    Part,
    SupportMask,
    dft_atom,
    evaluate,
    sample_mask,
    special_form,
    trig_sums,
)


def mask(*indices):
    return SupportMask(frozenset(indices))


class TestModelParams:
    def test_valid(self):
        p = ModelParams(8, 3, 5)
        assert p.p == Fraction(5, 8)
        assert not p.is_dc and not p.is_degenerate_2l

    def test_flags(self):
        assert ModelParams(8, 0, 1).is_dc
        assert ModelParams(8, 4, 1).is_degenerate_2l

    @pytest.mark.parametrize(
        "N,l,m",
        [(0, 0, 1), (8, 8, 1), (8, -1, 1), (8, 1, 0), (8, 1, 9), (-2, 0, 1)],
    )
    def test_domain_errors(self, N, l, m):
        with pytest.raises(ParameterDomainError):
            ModelParams(N, l, m)

    def test_non_integer_rejected(self):
        with pytest.raises(ParameterDomainError):
            ModelParams(8.0, 1, 3)

    def test_p_is_exact(self):
        # 1/3 is not representable in binary floating point; the Fraction is.
        assert ModelParams(3, 1, 1).p == Fraction(1, 3)


class TestSupportMask:
    def test_word_roundtrip_small(self):
        m = mask(1, 3, 8)
        assert m.word == 0b10000101
        assert SupportMask.from_word(m.word) == m

    @given(st.integers(min_value=0, max_value=2**24 - 1))
    def test_word_roundtrip(self, word):
        assert SupportMask.from_word(word).word == word

    def test_rejects_bad_indices(self):
        with pytest.raises(ParameterDomainError):
            mask(0)
        with pytest.raises(ParameterDomainError):
            mask(-1)

    def test_iteration_sorted(self):
        assert list(mask(5, 2, 9)) == [2, 5, 9]


class TestDftAtom:
    @pytest.mark.parametrize(
        "n,l,N,expected",
        [
            (5, 0, 8, 1 + 0j),
            (1, 1, 4, -1j),
            (2, 1, 4, -1 + 0j),
        ],
    )
    def test_examples(self, n, l, N, expected):
        atom = dft_atom(n, l, N)
        assert atom == pytest.approx(expected, abs=1e-15)

    @given(
        st.integers(min_value=1, max_value=512).flatmap(
            lambda N: st.tuples(
                st.just(N),
                st.integers(min_value=0, max_value=N - 1),
                st.integers(min_value=1, max_value=N),
            )
        )
    )
    def test_unit_modulus(self, nln):
        N, l, n = nln
        assert abs(abs(dft_atom(n, l, N)) - 1.0) <= 1e-15

    def test_large_argument_reduction(self):
        # Exact mod-N reduction keeps huge n*l products accurate.
        N = 7
        assert dft_atom(7, 6, 7) == pytest.approx(1 + 0j, abs=1e-15)

    @pytest.mark.parametrize("n,l,N", [(0, 1, 4), (5, 1, 4), (1, 4, 4), (1, -1, 4)])
    def test_domain_errors(self, n, l, N):
        with pytest.raises(ParameterDomainError):
            dft_atom(n, l, N)


class TestEvaluate:
    def test_empty_mask(self):
        assert evaluate(mask(), ModelParams(8, 1, 3), Part.COMPLEX) == 0

    def test_full_mask_vanishes(self):
        params = ModelParams(8, 1, 3)
        value = evaluate(mask(*range(1, 9)), params, Part.COMPLEX)
        assert abs(value) <= 1e-12 * params.N

    def test_two_atom_hand_sum(self):
        value = evaluate(mask(1, 2), ModelParams(4, 1, 2), Part.COMPLEX)
        assert value == pytest.approx(-1 - 1j, abs=1e-15)

    def test_parts_consistent_with_complex(self):
        params = ModelParams(12, 5, 4)
        m = mask(1, 4, 7, 12)
        z = evaluate(m, params, Part.COMPLEX)
        assert evaluate(m, params, Part.REAL) == z.real
        assert evaluate(m, params, Part.IMAG) == z.imag
        assert evaluate(m, params, Part.MODULUS) == pytest.approx(abs(z), abs=1e-15)

    def test_imag_sign_convention(self):
        # Single atom at n=1, l=1, N=4 sits at -j: imaginary part is -sin.
        assert evaluate(mask(1), ModelParams(4, 1, 1), Part.IMAG) == pytest.approx(-1.0)

    def test_modulus_centered_rejected(self):
        with pytest.raises(ParameterDomainError):
            evaluate(mask(1), ModelParams(4, 1, 1), Part.MODULUS_CENTERED)

    def test_mask_outside_n_rejected(self):
        with pytest.raises(ParameterDomainError):
            evaluate(mask(9), ModelParams(8, 1, 1), Part.REAL)

    @given(
        st.integers(min_value=2, max_value=16).flatmap(
            lambda N: st.tuples(
                st.just(N),
                st.integers(min_value=0, max_value=N - 1),
                st.sets(st.integers(min_value=1, max_value=N)),
                st.sets(st.integers(min_value=1, max_value=N)),
            )
        )
    )
    def test_linearity_on_disjoint_masks(self, case):
        N, l, a, b = case
        b = b - a
        params = ModelParams(N, l, 1)
        total = evaluate(SupportMask(frozenset(a | b)), params, Part.COMPLEX)
        split = evaluate(SupportMask(frozenset(a)), params, Part.COMPLEX) + evaluate(
            SupportMask(frozenset(b)), params, Part.COMPLEX
        )
        assert abs(total - split) <= 1e-12 * N

    @given(
        st.integers(min_value=2, max_value=16).flatmap(
            lambda N: st.tuples(
                st.just(N),
                st.integers(min_value=1, max_value=N - 1),
                st.sets(st.integers(min_value=1, max_value=N)),
            )
        )
    )
    def test_conjugate_symmetry(self, case):
        N, l, indices = case
        m = SupportMask(frozenset(indices))
        z_l = evaluate(m, ModelParams(N, l, 1), Part.COMPLEX)
        z_refl = evaluate(m, ModelParams(N, N - l, 1), Part.COMPLEX)
        assert abs(z_l - z_refl.conjugate()) <= 1e-12 * N


class TestTrigSums:
    def test_identity_exhaustive(self):
        for N in range(2, 65):
            for l in range(1, N):
                cos_sum, sin_sum = trig_sums(N, l)
                if N == 2 * l:
                    assert abs(cos_sum - N) <= 1e-10 * N
                    assert abs(sin_sum) <= 1e-10 * N
                else:
                    assert abs(cos_sum) <= 1e-10 * N
                    assert abs(sin_sum) <= 1e-10 * N

    @pytest.mark.parametrize("N,l", [(8, 0), (8, 8), (8, 9), (1, 1)])
    def test_domain_errors(self, N, l):
        with pytest.raises(ParameterDomainError):
            trig_sums(N, l)


class TestSampleMask:
    def test_full_inclusion(self):
        rng = np.random.default_rng(0)
        assert sample_mask(ModelParams(10, 1, 10), rng) == mask(*range(1, 11))

    def test_single_certain_trial(self):
        rng = np.random.default_rng(0)
        assert sample_mask(ModelParams(1, 0, 1), rng) == mask(1)

    def test_inclusion_frequencies_within_six_sigma(self):
        params = ModelParams(10, 3, 3)
        draws = 20_000
        rng = np.random.default_rng(1234)
        counts = np.zeros(params.N)
        sizes = 0
        for _ in range(draws):
            s = sample_mask(params, rng)
            sizes += len(s)
            for n in s.indices:
                counts[n - 1] += 1
        p = params.m / params.N
        sigma = math.sqrt(p * (1 - p) / draws)
        freqs = counts / draws
        assert np.all(np.abs(freqs - p) <= 6 * sigma)
        # Expected support size is m.
        size_sigma = math.sqrt(params.N * p * (1 - p) / draws)
        assert abs(sizes / draws - params.m) <= 6 * size_sigma


class TestSpecialForm:
    def test_binomial(self):
        form = special_form(ModelParams(8, 0, 3))
        assert form.kind is FormKind.BINOMIAL
        assert form.trials == 8
        assert form.p == Fraction(3, 8)

    def test_difference(self):
        form = special_form(ModelParams(8, 4, 3))
        assert form.kind is FormKind.DIFFERENCE_OF_BINOMIALS
        assert form.trials == 4
        assert form.p == Fraction(3, 8)

    def test_generic(self):
        form = special_form(ModelParams(8, 1, 3))
        assert form.kind is FormKind.GENERIC
        assert form.trials is None
