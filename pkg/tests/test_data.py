import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from afmvc.data import (
    DatasetManifest,
    MultiViewDataset,
    load_dataset,
    make_batches,
    standardize,
    synthesize_sensitive,
    synthesize_views,
    write_dataset,
)
from afmvc.errors import BoundsError, ParseError, StructuralError


def _write(path, text):
    path.write_text(text)
    return path


@pytest.fixture
def two_views(tmp_path):
    a = _write(tmp_path / "a.csv", "1,2\n3,4\n5,6\n7,8\n")
    b = _write(tmp_path / "b.csv", "0.5\n1.5\n2.5\n3.5\n")
    s = _write(tmp_path / "s.csv", "0\n1\n0\n1\n")
    return a, b, s


class TestLoadDataset:
    def test_two_four_row_views(self, two_views):
        a, b, s = two_views
        ds = load_dataset(DatasetManifest([a, b], n_clusters=2, sensitive_path=s))
        assert ds.n_instances == 4 and ds.n_views == 2
        np.testing.assert_array_equal(ds.views[1][:, 0], [0.5, 1.5, 2.5, 3.5])

    def test_row_mismatch_is_structural(self, two_views, tmp_path):
        a, _, s = two_views
        five = _write(tmp_path / "five.csv", "1\n2\n3\n4\n5\n")
        with pytest.raises(StructuralError):
            load_dataset(DatasetManifest([a, five], n_clusters=2, sensitive_path=s))

    def test_parse_error_names_location(self, tmp_path):
        bad = _write(tmp_path / "bad.csv", "1,2\n3,x\n")
        with pytest.raises(ParseError) as info:
            load_dataset(DatasetManifest([bad], n_clusters=2, sensitive_source="synthetic"))
        assert (info.value.row, info.value.column) == (2, 2)

    def test_header_flag(self, tmp_path):
        a = _write(tmp_path / "h.csv", "f1,f2\n1,2\n3,4\n")
        ds = load_dataset(DatasetManifest([a], n_clusters=2, sensitive_source="synthetic", header=True))
        assert ds.n_instances == 2

    def test_subsample_is_seeded(self, tmp_path):
        x = np.arange(20.0).reshape(10, 2)
        p = tmp_path / "x.csv"
        np.savetxt(p, x, delimiter=",")
        m = DatasetManifest([p], n_clusters=2, sensitive_source="synthetic", subsample=3, seed=7)
        first, second = load_dataset(m), load_dataset(m)
        assert first.n_instances == 3
        np.testing.assert_array_equal(first.views[0], second.views[0])
        np.testing.assert_array_equal(first.sensitive, second.sensitive)

    def test_subsample_keeps_rows_aligned(self, tmp_path):
        n = 30
        idx = np.arange(n, dtype=float)
        np.savetxt(tmp_path / "v0.csv", np.column_stack([idx, idx]), delimiter=",")
        np.savetxt(tmp_path / "v1.csv", idx[:, None] * 10, delimiter=",")
        np.savetxt(tmp_path / "l.csv", idx[:, None], fmt="%d")
        np.savetxt(tmp_path / "s.csv", (idx % 2)[:, None], fmt="%d")
        m = DatasetManifest(
            [tmp_path / "v0.csv", tmp_path / "v1.csv"], 2, tmp_path / "l.csv", tmp_path / "s.csv", subsample=12, seed=3
        )
        ds = load_dataset(m)
        np.testing.assert_array_equal(ds.views[0][:, 0], ds.labels)
        np.testing.assert_array_equal(ds.views[1][:, 0], ds.labels * 10)
        np.testing.assert_array_equal(ds.sensitive, ds.labels % 2)

    def test_subsample_too_large(self, two_views):
        a, b, s = two_views
        with pytest.raises(BoundsError):
            load_dataset(DatasetManifest([a, b], n_clusters=2, sensitive_path=s, subsample=5))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(DatasetManifest([tmp_path / "nope.csv"], n_clusters=2, sensitive_source="synthetic"))

    def test_manifest_file_resolves_relative_paths(self, two_views, tmp_path):
        (tmp_path / "m.yaml").write_text("view_paths: [a.csv, b.csv]\nsensitive_path: s.csv\nn_clusters: 2\n")
        ds = load_dataset(DatasetManifest.from_file(tmp_path / "m.yaml"))
        assert ds.view_dims == [2, 1]

    def test_manifest_invariants(self, two_views):
        a, _, s = two_views
        with pytest.raises(BoundsError):
            DatasetManifest([a], n_clusters=1, sensitive_path=s)
        with pytest.raises(BoundsError):
            DatasetManifest([a], n_clusters=2, sensitive_source="synthetic", bernoulli_p=1.0)
        with pytest.raises(StructuralError):
            DatasetManifest([], n_clusters=2, sensitive_source="synthetic")


def test_csv_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    ds = MultiViewDataset(
        [rng.normal(size=(7, 3)) * 1e3, rng.random((7, 2)) * 1e-9],
        sensitive=rng.integers(0, 3, 7),
        labels=rng.integers(0, 4, 7),
        name="rt",
    )
    back = load_dataset(DatasetManifest.from_file(write_dataset(ds, tmp_path, n_clusters=4)))
    for x, y in zip(ds.views, back.views):
        assert np.array_equal(x, y)
    np.testing.assert_array_equal(ds.sensitive, back.sensitive)
    np.testing.assert_array_equal(ds.labels, back.labels)


class TestDatasetInvariants:
    def test_rejects_non_finite(self):
        with pytest.raises(StructuralError):
            MultiViewDataset([np.array([[np.nan]])], sensitive=[0])

    def test_rejects_ragged_views(self):
        with pytest.raises(StructuralError):
            MultiViewDataset([np.zeros((3, 1)), np.zeros((2, 1))], sensitive=[0, 1, 0])

    def test_rejects_empty(self):
        with pytest.raises(StructuralError):
            MultiViewDataset([], sensitive=[])


class TestStandardize:
    def test_two_point_column(self):
        np.testing.assert_allclose(standardize(np.array([[0.0], [2.0]]))[:, 0], [-1.0, 1.0])

    def test_constant_column_is_zero(self):
        np.testing.assert_array_equal(standardize(np.full((4, 1), 3.5)), np.zeros((4, 1)))

    @given(hnp.arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 4)), elements=st.floats(-1e3, 1e3)))
    def test_idempotent(self, x):
        once = standardize(x)
        np.testing.assert_allclose(standardize(once), once, atol=1e-9)


class TestSynthesizeViews:
    def test_zero_matrix(self):
        sig, relu = synthesize_views(np.zeros((3, 2)), ["sigmoid", "relu"])
        np.testing.assert_array_equal(sig, 0.5)
        np.testing.assert_array_equal(relu, 0.0)

    def test_standardized_column(self):
        (sig,) = synthesize_views(np.array([[-1.0], [1.0]]), ["sigmoid"])
        np.testing.assert_allclose(sig[:, 0], [0.2689414213699951, 0.7310585786300049], rtol=1e-12)

    def test_unknown_transform(self):
        with pytest.raises(StructuralError):
            synthesize_views(np.zeros((2, 2)), ["tanh"])

    @settings(max_examples=50)
    @given(hnp.arrays(np.float64, st.tuples(st.integers(1, 15), st.integers(1, 5)), elements=st.floats(-50, 50)))
    def test_shapes_and_ranges(self, x):
        sig, relu = synthesize_views(x, ["sigmoid", "relu"])
        assert sig.shape == x.shape and relu.shape == x.shape
        assert np.all((sig > 0) & (sig < 1))
        assert np.all(relu >= 0)


class TestSynthesizeSensitive:
    def test_fraction_near_half_over_many_seeds(self):
        # Hoeffding: P(|frac - 0.5| > 0.05) <= 2 exp(-2 * 1000 * 0.05**2) ~ 0.013 per seed
        fracs = np.array([synthesize_sensitive(1000, 0.5, s).mean() for s in range(100)])
        assert np.mean(np.abs(fracs - 0.5) <= 0.05) >= 0.95
        assert math.isclose(fracs.mean(), 0.5, abs_tol=0.01)

    def test_degenerate_p(self):
        assert synthesize_sensitive(10, 0.999999, 0).sum() == 10

    def test_deterministic(self):
        np.testing.assert_array_equal(synthesize_sensitive(50, 0.3, 4), synthesize_sensitive(50, 0.3, 4))

    def test_bounds(self):
        with pytest.raises(BoundsError):
            synthesize_sensitive(0, 0.5, 0)
        with pytest.raises(BoundsError):
            synthesize_sensitive(5, 0.0, 0)


class TestBatches:
    def test_chunk_sizes(self):
        plan = make_batches(5, 2, 0)
        assert [len(b) for b in plan] == [2, 2, 1]

    def test_single_batch(self):
        plan = make_batches(6, 6, 0)
        assert len(plan) == 1 and sorted(plan.batches[0]) == list(range(6))

    def test_deterministic(self):
        np.testing.assert_array_equal(make_batches(9, 4, 11).order, make_batches(9, 4, 11).order)

    @pytest.mark.parametrize("bs", [0, 6])
    def test_bounds(self, bs):
        with pytest.raises(BoundsError):
            make_batches(5, bs, 0)

    @given(st.integers(1, 200), st.data())
    def test_partition(self, n, data):
        bs = data.draw(st.integers(1, n))
        plan = make_batches(n, bs, data.draw(st.integers(0, 2**32 - 1)))
        assert len(plan) == math.ceil(n / bs)
        assert all(len(b) > 0 for b in plan)
        np.testing.assert_array_equal(np.sort(np.concatenate(plan.batches)), np.arange(n))
