import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unicdm.ideal import (
    FREE,
    GDINA_TABLE_LARGE,
    GDINA_TABLE_SMALL,
    DinaItemParams,
    GdinaItemParams,
    InvalidParameterError,
    beta_to_probs,
    check_monotone_table,
    dina_theta,
    gdina_params_from_table,
    gdina_theta,
    gdina_theta_beta,
    gnpc_constraints,
    gnpc_weight_from_mean,
    gnpc_weighted_ideal,
    ideal_dina,
    ideal_dino,
    ideal_table,
    mobius_to_beta,
    monotonicity_violations,
    read_gdina_table,
)
from unicdm.patterns import CDMError, pattern_to_index


class TestIdealResponses:
    def test_dina_examples(self):
        assert ideal_dina((1, 1, 0), (0, 0, 1)) == 0
        assert ideal_dina((1, 1, 0), (1, 1, 1)) == 1
        assert ideal_dina((1, 0), (0, 1)) == 0

    def test_dino_examples(self):
        assert ideal_dino((1, 1, 0), (1, 0, 0)) == 1
        assert ideal_dino((1, 1, 0), (0, 0, 0)) == 0
        assert ideal_dino((1, 1, 0), (0, 0, 1)) == 0

    def test_table_matches_scalar(self):
        Q = np.array([[1, 0, 1], [0, 1, 0], [1, 1, 1]])
        for model, f in (("dina", ideal_dina), ("dino", ideal_dino)):
            tab = ideal_table(Q, model)
            for m in range(8):
                pat = [(m >> k) & 1 for k in range(3)]
                for j in range(3):
                    assert tab[m, j] == f(Q[j], pat)

    @given(st.lists(st.integers(0, 1), min_size=4, max_size=4).filter(any), st.integers(0, 15))
    def test_dina_never_exceeds_dino(self, q, m):
        pat = [(m >> k) & 1 for k in range(4)]
        assert ideal_dina(q, pat) <= ideal_dino(q, pat)


class TestDinaParams:
    def test_theta(self):
        p = DinaItemParams.constant(1, 0.1, 0.3)
        assert dina_theta(p, 1) == pytest.approx(0.9)
        assert dina_theta(p, 0) == pytest.approx(0.3)

    def test_grid_point(self):
        p = DinaItemParams.constant(1, 0.1, 0.1)
        assert {round(dina_theta(p, e), 12) for e in (0, 1)} == {0.1, 0.9}

    def test_out_of_range(self):
        with pytest.raises(InvalidParameterError):
            DinaItemParams.constant(2, 1.2, 0.1)


class TestGdina:
    def test_one_attribute_item(self):
        beta = mobius_to_beta((0.2, 0.9))
        np.testing.assert_allclose(beta, (0.2, 0.7))
        assert gdina_theta_beta(beta, (1,)) == pytest.approx(0.9)
        assert gdina_theta_beta(beta, (0,)) == pytest.approx(0.2)

    def test_three_attribute_full_mastery(self):
        params = GdinaItemParams((GDINA_TABLE_SMALL[-1],))
        assert gdina_theta(params, [[1, 1, 1]], 0, (1, 1, 1)) == pytest.approx(0.9)
        assert gdina_theta(params, [[1, 1, 1]], 0, (0, 0, 0)) == pytest.approx(0.1)

    @given(st.lists(st.floats(0, 1), min_size=4, max_size=4))
    def test_mobius_round_trip(self, probs):
        np.testing.assert_allclose(beta_to_probs(mobius_to_beta(probs)), probs, atol=1e-12)

    def test_implied_probability_checked(self):
        with pytest.raises(InvalidParameterError):
            gdina_theta_beta((0.5, 0.8), (1,))

    def test_tables_monotone(self):
        assert check_monotone_table(GDINA_TABLE_SMALL)
        assert check_monotone_table(GDINA_TABLE_LARGE)
        assert not check_monotone_table(((0.5, 0.4),))

    def test_cycling_rule(self):
        Q = np.array([[1, 0], [0, 1], [1, 0], [0, 1], [1, 1]])
        params = gdina_params_from_table(Q, GDINA_TABLE_SMALL)
        singles = [tuple(p) for p in params.probs[:4]]
        assert singles == [GDINA_TABLE_SMALL[0], GDINA_TABLE_SMALL[1], GDINA_TABLE_SMALL[2], GDINA_TABLE_SMALL[0]]
        assert tuple(params.probs[4]) == GDINA_TABLE_SMALL[3]

    def test_missing_row_size(self):
        with pytest.raises(CDMError):
            gdina_params_from_table(np.array([[1, 1, 1]]), ((0.2, 0.9),))

    def test_read_table(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("0.2,0.9\n0.1,0.3,0.5,0.9\n")
        assert read_gdina_table(p) == ((0.2, 0.9), (0.1, 0.3, 0.5, 0.9))
        p.write_text("0.2,0.9,0.5\n")
        with pytest.raises(CDMError):
            read_gdina_table(p)


class TestGnpcConstraints:
    def test_example_cells(self):
        c = gnpc_constraints(np.array([[1, 1, 0]]))
        assert c.fixed[0, pattern_to_index((1, 1, 1))] == 1
        assert c.fixed[0, pattern_to_index((0, 0, 1))] == 0
        assert c.fixed[0, pattern_to_index((1, 0, 0))] == FREE

    def test_weighted_ideal(self):
        assert gnpc_weighted_ideal(0.37, 1, 1) == 1
        assert gnpc_weighted_ideal(0.2, 0, 1) == pytest.approx(0.8)
        with pytest.raises(InvalidParameterError):
            gnpc_weighted_ideal(1.5, 0, 1)

    def test_weight_reproduces_mean(self):
        w = gnpc_weight_from_mean(0.3)
        assert gnpc_weighted_ideal(w, 0, 1) == pytest.approx(0.3)


class TestMonotonicity:
    def test_clean_table(self):
        Q = np.array([[1, 0], [0, 1]])
        mu = np.where(ideal_table(Q, "dina") == 1, 0.9, 0.1)
        assert monotonicity_violations(mu, Q) == []

    def test_flags_inversion(self):
        Q = np.array([[1, 0]])
        mu = np.array([[0.1], [0.4], [0.95], [0.3]])  # pattern 3 masters item but sits below pattern 2
        v = monotonicity_violations(mu, Q)
        assert v and all(t[0] == 0 for t in v)
