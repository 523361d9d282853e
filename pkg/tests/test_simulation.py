
import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unicdm.ideal import ideal_table
from unicdm.patterns import CDMError, indices_to_patterns
from unicdm.simulation import (
    CSV_HEADER,
    AttributeDistribution,
    Cell,
    ExperimentConfig,
    ItemModel,
    format_csv,
    gen_patterns,
    gen_qmatrix,
    gen_responses,
    make_rng,
    mvn_thresholds,
    norm_ppf,
    run_experiment,
    run_replication,
)


class TestNormPpf:
    @given(st.floats(1e-12, 1 - 1e-12))
    def test_against_mpmath(self, p):
        with mpmath.workdps(50):
            want = float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1))
        assert norm_ppf(p) == pytest.approx(want, abs=1e-9)

    def test_thresholds(self):
        np.testing.assert_allclose(mvn_thresholds(3), [norm_ppf(0.25), 0.0, norm_ppf(0.75)], atol=1e-15)

    @pytest.mark.parametrize("p", [0.0, 1.0])
    def test_domain(self, p):
        with pytest.raises(Exception):
            norm_ppf(p)


class TestPatterns:
    def test_uniform_frequencies(self, rng):
        A = gen_patterns(AttributeDistribution.uniform(), 3, 100_000, rng)
        np.testing.assert_allclose(np.bincount(A, minlength=8) / A.size, 0.125, atol=0.01)

    @pytest.mark.parametrize("r", [0.4, 0.8])
    @pytest.mark.parametrize("K", [3, 5])
    def test_mvn_marginals(self, r, K):
        A = gen_patterns(AttributeDistribution.mvn(r), K, 100_000, make_rng(7, K, int(r * 10)))
        P = indices_to_patterns(A, K).mean(axis=0)
        np.testing.assert_allclose(P, 1 - np.arange(1, K + 1) / (K + 1), atol=0.01)

    def test_independent_when_r_zero(self):
        A = gen_patterns(AttributeDistribution.mvn(0.0), 3, 100_000, make_rng(8))
        C = np.corrcoef(indices_to_patterns(A, 3).T)
        assert np.all(np.abs(C[np.triu_indices(3, 1)]) < 0.02)

    def test_positive_correlation(self):
        A = gen_patterns(AttributeDistribution.mvn(0.8), 3, 50_000, make_rng(9))
        C = np.corrcoef(indices_to_patterns(A, 3).T)
        assert np.all(C[np.triu_indices(3, 1)] > 0.3)

    @pytest.mark.parametrize("r", [-0.1, 1.0])
    def test_bad_r(self, r):
        with pytest.raises(CDMError):
            AttributeDistribution.mvn(r)


class TestQGeneration:
    def test_identity_blocks(self, rng):
        Q = gen_qmatrix(3, 30, rng)
        np.testing.assert_array_equal(Q.entries[:6], np.vstack([np.eye(3)] * 2))

    @given(st.integers(1, 6), st.integers(0, 20), st.integers(0, 2**32 - 1))
    def test_rows_valid(self, K, extra, seed):
        Q = gen_qmatrix(K, 2 * K + extra, make_rng(seed))
        sums = Q.entries.sum(axis=1)
        assert sums.min() >= 1 and sums.max() <= min(K, 3)

    def test_too_few_items(self, rng):
        with pytest.raises(CDMError):
            gen_qmatrix(3, 5, rng)


class TestResponses:
    def test_noiseless(self, rng):
        Q = gen_qmatrix(3, 10, rng)
        A = np.arange(8)
        theta = ItemModel("dina", 0.0, 0.0).theta_table(Q)
        np.testing.assert_array_equal(gen_responses(A, Q, theta, rng), ideal_table(Q, "dina"))

    def test_agreement_with_ideal(self, rng):
        Q = gen_qmatrix(3, 20, rng)
        A = gen_patterns(AttributeDistribution.uniform(), 3, 5000, rng)
        X = gen_responses(A, Q, ItemModel("dina", 0.1, 0.1).theta_table(Q), rng)
        assert np.mean(X == ideal_table(Q, "dina")[A]) == pytest.approx(0.9, abs=0.01)

    def test_gdina_one_attribute_masters(self, rng):
        Q = gen_qmatrix(3, 6, rng)
        theta = ItemModel("gdina", table="small").theta_table(Q)
        A = np.full(10_000, 1)  # pattern (1,0,0): masters item 0 only
        X = gen_responses(A, Q, theta, rng)
        assert X[:, 0].mean() == pytest.approx(0.9, abs=0.01)

    def test_invalid_theta(self, rng):
        Q = gen_qmatrix(2, 4, rng)
        with pytest.raises(CDMError):
            gen_responses([0], Q, np.full((4, 4), 1.5), rng)


class TestItemModel:
    def test_labels(self):
        assert ItemModel("dina", 0.1, 0.1).noise_label == "dina:0.1"
        assert ItemModel("dina", 0.1, 0.2).noise_label == "dina:0.1/0.2"
        assert ItemModel("gdina", table="large").noise_label == "gdina:large"

    def test_unknown(self):
        with pytest.raises(CDMError):
            ItemModel("rasch")
        with pytest.raises(CDMError):
            ItemModel("gdina", table="medium")


class TestRng:
    def test_streams_reproducible_and_distinct(self):
        a = make_rng(1, 2, 3).random(4)
        np.testing.assert_array_equal(a, make_rng(1, 2, 3).random(4))
        assert not np.array_equal(a, make_rng(1, 2, 4).random(4))

    def test_cell_key_stable(self):
        c = Cell(3, 30, 50, AttributeDistribution.uniform(), ItemModel())
        assert c.key() == Cell(3, 30, 50, AttributeDistribution.uniform(), ItemModel()).key()
        assert c.key() != Cell(3, 30, 51, AttributeDistribution.uniform(), ItemModel()).key()


class TestConfig:
    def test_from_dict(self):
        cfg = ExperimentConfig.from_dict(
            {"k": [3, 5], "j": 30, "n": [30, 50], "reps": 2, "dist": [{"kind": "mvn", "r": 0.4}], "model": {"kind": "dina", "s": 0.3}}
        )
        assert len(cfg.cells()) == 4
        assert cfg.model[0].g == 0.3

    @pytest.mark.parametrize(
        "doc",
        [
            {"k": 3, "j": 30},
            {"k": 3, "j": 30, "n": 50, "color": 1},
            {"k": 3, "j": 30, "n": -5},
            {"k": 3, "j": 4, "n": 50},
            {"k": 3, "j": 30, "n": 50, "reps": 0},
            {"k": 3, "j": 30, "n": 50, "estimators": ["svm"]},
            {"k": 3, "j": 30, "n": 50, "model": {"kind": "dina", "s": "high"}},
        ],
    )
    def test_schema_errors(self, doc):
        with pytest.raises(CDMError):
            ExperimentConfig.from_dict(doc)

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{nope")
        with pytest.raises(CDMError):
            ExperimentConfig.from_json(p)


class TestExperiment:
    def _cfg(self, **kw):
        base = {"k": 3, "j": 15, "n": 40, "reps": 3, "seed": 11, "estimators": ["npc", "gnpc", "jmle", "mmle"]}
        base.update(kw)
        return ExperimentConfig.from_dict(base)

    def test_csv_shape(self):
        cfg = self._cfg(reps=1, estimators=["npc"])
        text = format_csv(run_experiment(cfg, threads=1), cfg.seed)
        lines = text.splitlines()
        assert lines[0] == "# seed=11"
        assert lines[1] == ",".join(CSV_HEADER)
        assert len(lines) == 3
        assert lines[2].startswith("3,15,40,uniform,0,dina:0.1,npc,")

    def test_deterministic_and_thread_independent(self):
        cfg = self._cfg()
        one = format_csv(run_experiment(cfg, threads=1), cfg.seed)
        assert one == format_csv(run_experiment(cfg, threads=1), cfg.seed)
        assert one == format_csv(run_experiment(cfg, threads=2), cfg.seed)

    def test_bare_names_follow_data_model(self):
        cell = Cell(3, 15, 60, AttributeDistribution.uniform(), ItemModel("gdina"))
        out = run_replication(cell, 0, 1, ["jmle", "jmle_gdina"])
        assert out["jmle"] == out["jmle_gdina"]

    def test_known_membership_helps(self):
        cell = Cell(3, 15, 100, AttributeDistribution.uniform(), ItemModel("dina", 0.3, 0.3))
        plain = run_replication(cell, 0, 5, ["cmle"])
        known = run_replication(cell, 0, 5, ["cmle"], known_membership=True)
        assert known["cmle"][0] >= plain["cmle"][0] - 0.05

    def test_failure_reported_not_raised(self, monkeypatch):
        import unicdm.simulation as sim

        def boom(*a, **k):
            raise RuntimeError("boom")

        monkeypatch.setattr(sim, "fit", boom)
        cfg = self._cfg(reps=2, estimators=["jmle"])
        (summary,) = run_experiment(cfg, threads=1)
        assert summary.reps == 0 and np.isnan(summary.mean_par)
        assert "nan" in format_csv([summary], 0)

    def test_threads_env(self, monkeypatch):
        from unicdm.simulation import default_threads

        monkeypatch.setenv("CDM_THREADS", "3")
        assert default_threads() == 3
        monkeypatch.setenv("CDM_THREADS", "x")
        with pytest.raises(CDMError):
            default_threads()


@pytest.mark.slow
def test_mmle_not_worse_than_cmle():
    """High noise, strongly correlated attributes: MMLE-DINA within 0.03 PAR of CMLE."""
    cfg = ExperimentConfig(
        k=[3], j=[50], n=[500], reps=100, seed=2021,
        dist=[AttributeDistribution.mvn(0.8)], model=[ItemModel("dina", 0.3, 0.3)], estimators=["mmle_dina", "cmle"],
    )
    par = {s.estimator: s.mean_par for s in run_experiment(cfg, threads=1)}
    assert par["mmle_dina"] >= par["cmle"] - 0.03
