import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chi2

from catestack.dataset import (DataSplit, Design, ExperimentDataset, assign_treatments,
                               load_csv, save_csv, split, treated_count)
from catestack.errors import FormatError, ParameterError


def make_dataset(n=20, d=3, p=0.5, design=Design.BERNOULLI, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = rng.normal(size=n)
    if design == Design.COMPLETELY_RANDOMIZED:
        z = assign_treatments(n, p, design, seed)
    else:
        z = (rng.random(n) < p).astype(int)
        if z.sum() in (0, n):
            z[0] = 1 - z[0]
    return ExperimentDataset(covariates=X, outcomes=y, assignments=z, treat_prob=p, design=design)


class TestAssignTreatments:
    def test_completely_randomized_sum_forced(self):
        for seed in range(5):
            z = assign_treatments(4, 0.5, Design.COMPLETELY_RANDOMIZED, seed)
            assert z.sum() == 2

    def test_small_p_rounds_to_one(self):
        for seed in range(5):
            z = assign_treatments(10, 0.1, Design.COMPLETELY_RANDOMIZED, seed)
            assert z.sum() == 1

    def test_bernoulli_binomial_concentration(self):
        n, p = 10000, 0.3
        margin = 3 * np.sqrt(n * p * (1 - p))
        sums = [assign_treatments(n, p, Design.BERNOULLI, seed).sum() for seed in range(100)]
        assert abs(sums[7] - n * p) < margin
        within = sum(abs(s - n * p) < margin for s in sums)
        assert within >= 99

    def test_invalid_parameters(self):
        with pytest.raises(ParameterError):
            assign_treatments(1, 0.5, Design.BERNOULLI, 0)
        with pytest.raises(ParameterError):
            assign_treatments(10, 0.0, Design.BERNOULLI, 0)
        with pytest.raises(ParameterError):
            assign_treatments(10, 1.0, Design.COMPLETELY_RANDOMIZED, 0)

    def test_deterministic_given_seed(self):
        a = assign_treatments(50, 0.4, Design.BERNOULLI, 123)
        b = assign_treatments(50, 0.4, Design.BERNOULLI, 123)
        assert np.array_equal(a, b)

    def test_marginal_probability_chi_square(self):
        # each unit should be treated with probability p across seeds
        n, p, seeds = 20, 0.3, 1000
        counts = np.zeros(n)
        for seed in range(seeds):
            counts += assign_treatments(n, p, Design.COMPLETELY_RANDOMIZED, seed)
        stat = np.sum((counts - seeds * p) ** 2 / (seeds * p * (1 - p)))
        assert stat < chi2.ppf(0.999, df=n)


class TestSplit:
    def test_stratified_treated_fraction(self):
        ds = make_dataset(n=100, p=0.5, design=Design.COMPLETELY_RANDOMIZED, seed=3)
        out = split(ds, alpha=0.4, seed=9)
        assert out.avg_indices.size == 40
        treated_in_avg = ds.assignments[out.avg_indices].sum()
        assert abs(treated_in_avg - 20) <= 1

    def test_bernoulli_sizes_and_disjointness(self):
        ds = make_dataset(n=10, p=0.5, seed=1)
        out = split(ds, alpha=0.3, seed=2)
        assert out.avg_indices.size == 3
        assert np.intersect1d(out.avg_indices, out.train_indices).size == 0

    def test_deterministic(self):
        ds = make_dataset(n=40, seed=5)
        a = split(ds, 0.25, seed=77)
        b = split(ds, 0.25, seed=77)
        assert np.array_equal(a.avg_indices, b.avg_indices)
        assert np.array_equal(a.train_indices, b.train_indices)

    def test_empty_side_rejected(self):
        ds = make_dataset(n=4, seed=2)
        with pytest.raises(ParameterError):
            split(ds, alpha=0.01, seed=0)
        with pytest.raises(ParameterError):
            split(ds, alpha=0.99, seed=0)

    @given(n=st.integers(6, 60), alpha=st.floats(0.15, 0.85), seed=st.integers(0, 10**6))
    def test_partition_property(self, n, alpha, seed):
        ds = make_dataset(n=n, seed=seed % 97)
        out = split(ds, alpha, seed)
        assert out.avg_indices.size == round(alpha * n)
        union = np.union1d(out.train_indices, out.avg_indices)
        assert np.array_equal(union, np.arange(n))


class TestExperimentDataset:
    def test_rejects_nonbinary_assignments(self):
        with pytest.raises(ParameterError):
            ExperimentDataset(covariates=np.zeros((3, 1)), outcomes=np.zeros(3),
                              assignments=np.array([0, 1, 2]), treat_prob=0.5,
                              design=Design.BERNOULLI)

    def test_completely_randomized_count_enforced(self):
        with pytest.raises(ParameterError):
            ExperimentDataset(covariates=np.zeros((4, 1)), outcomes=np.zeros(4),
                              assignments=np.array([1, 1, 1, 0]), treat_prob=0.5,
                              design=Design.COMPLETELY_RANDOMIZED)

    def test_treat_prob_open_interval(self):
        with pytest.raises(ParameterError):
            ExperimentDataset(covariates=np.zeros((2, 1)), outcomes=np.zeros(2),
                              assignments=np.array([0, 1]), treat_prob=1.0,
                              design=Design.BERNOULLI)

    def test_rounding_ties_to_even(self):
        assert treated_count(10, 0.25) == 2
        assert treated_count(10, 0.35) == 4

    def test_immutable_arrays(self):
        ds = make_dataset()
        with pytest.raises(ValueError):
            ds.outcomes[0] = 5.0

    def test_split_type_validates_partition(self):
        with pytest.raises(ParameterError):
            DataSplit(train_indices=np.array([0, 1]), avg_indices=np.array([1, 2]), alpha=0.5)
        with pytest.raises(ParameterError):
            DataSplit(train_indices=np.array([0, 1]), avg_indices=np.array([3]), alpha=0.5)


class TestCsvRoundTrip:
    def test_parse_small_file(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x1,x2,y,z\n0.1,0.2,1.5,1\n0.3,0.4,2.5,0\n0.5,0.6,3.5,1\n")
        (tmp_path / "d.json").write_text('{"p": 0.5, "design": "bernoulli"}')
        ds = load_csv(path)
        assert ds.n == 3 and ds.dim == 2
        assert ds.outcomes[1] == 2.5 and ds.assignments[2] == 1

    def test_nonbinary_z_names_row(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x1,y,z\n0.1,1.0,1\n0.2,2.0,2\n")
        with pytest.raises(FormatError, match="row 3"):
            load_csv(path, infer_p=True)

    def test_non_numeric_cell_names_row_and_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x1,y,z\n0.1,1.0,1\nfoo,2.0,0\n")
        with pytest.raises(FormatError, match="column 'x1', row 3"):
            load_csv(path, infer_p=True)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x1,y\n0.1,1.0\n")
        with pytest.raises(FormatError, match="missing required column 'z'"):
            load_csv(path)

    def test_round_trip_bit_exact(self, tmp_path):
        ds = make_dataset(n=17, d=4, p=0.37, seed=8)
        save_csv(ds, tmp_path / "rt.csv")
        back = load_csv(tmp_path / "rt.csv")
        assert np.array_equal(back.covariates, ds.covariates)
        assert np.array_equal(back.outcomes, ds.outcomes)
        assert np.array_equal(back.assignments, ds.assignments)
        assert back.treat_prob == ds.treat_prob and back.design == ds.design

    def test_infer_p_without_sidecar(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x1,y,z\n0.1,1.0,1\n0.2,2.0,0\n0.3,3.0,0\n0.4,4.0,0\n")
        ds = load_csv(path, infer_p=True)
        assert ds.treat_prob == 0.25
        with pytest.raises(FormatError):
            load_csv(path)
