import numpy as np
import pandas as pd
import pytest

from ridge_loocv.core.errors import (
    BadRankError,
    ConstantColumnError,
    DatasetFormatError,
    InvalidInputError,
    RankDeficientError,
    ZeroResponseError,
)
from ridge_loocv.services.dataset import (
    RawDataset,
    SvdForm,
    least_squares,
    load_csv,
    pcr_truncate,
    problem_hash,
    reduce_frame,
    standardize,
)
from ridge_loocv.services.loocv import loocv_loss


def test_standardize_meets_column_conditions(rng):
    """Test standardized columns are centered with sum of squares N"""
    X = rng.normal(5.0, 3.0, size=(30, 4))
    Y = rng.normal(2.0, 1.0, size=30)
    ds = standardize(RawDataset(X, Y))

    assert ds.N == 30 and ds.D == 4
    np.testing.assert_allclose(ds.X.sum(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose((ds.X ** 2).sum(axis=0), 30.0, rtol=1e-12)
    assert abs(ds.Y.sum()) < 1e-10
    np.testing.assert_allclose(ds.svd.reconstruct(), ds.X, atol=1e-10)
    ds.svd.check()


def test_standardize_rejects_constant_column(rng):
    """Test a zero-variance covariate is reported by index"""
    X = rng.standard_normal((10, 3))
    X[:, 1] = 4.2
    with pytest.raises(ConstantColumnError) as exc_info:
        standardize(RawDataset(X, rng.standard_normal(10)))
    assert exc_info.value.column == 1
    assert exc_info.value.exit_code == 2


def test_standardize_rejects_collinear_columns(rng):
    """Test duplicated covariates make the problem rank deficient"""
    X = rng.standard_normal((12, 3))
    X[:, 2] = 2.0 * X[:, 0]
    with pytest.raises(RankDeficientError):
        standardize(RawDataset(X, rng.standard_normal(12)))


@pytest.mark.parametrize("shape", [(5, 5), (5, 7), (2, 1)])
def test_raw_dataset_requires_more_points_than_features(shape):
    """Test D >= N and tiny N are rejected"""
    with pytest.raises(InvalidInputError):
        RawDataset(np.ones(shape), np.ones(shape[0]))


def test_raw_dataset_rejects_non_finite(rng):
    """Test NaN covariates are rejected"""
    X = rng.standard_normal((6, 2))
    X[3, 1] = np.nan
    with pytest.raises(InvalidInputError):
        RawDataset(X, np.zeros(6))


def test_svd_form_leverages(random_problem):
    """Test leverages sum to D and lie in [0, 1)"""
    svd, _ = random_problem
    assert svd.nu.sum() == pytest.approx(svd.D, abs=1e-10)
    assert np.all(svd.nu >= 0) and svd.nu_max < 1
    svd.check()


def test_svd_form_check_reconstructs_x(rng):
    """Test check accepts the source matrix and rejects a perturbed one"""
    X = rng.standard_normal((20, 4))
    svd = SvdForm.from_matrix(X)
    svd.check(X)

    bumped = X.copy()
    bumped[3, 2] += 1e-3 * np.linalg.norm(X)
    with pytest.raises(InvalidInputError, match="reconstruct"):
        svd.check(bumped)
    with pytest.raises(InvalidInputError):
        svd.check(X[:, :3])


def test_svd_form_rejects_zero_singular_value():
    """Test non-positive singular values are rank deficiency"""
    with pytest.raises(RankDeficientError):
        SvdForm.from_factors(np.eye(4)[:, :2], np.array([1.0, 0.0]))


def test_least_squares_residual_is_orthogonal(random_problem):
    """Test the least-squares residual lies in the null space of U^T"""
    svd, Y = random_problem
    fit = least_squares(svd, Y)
    np.testing.assert_allclose(svd.U.T @ fit.residuals, 0.0, atol=1e-12)
    np.testing.assert_allclose(fit.projections + fit.residuals, Y)
    np.testing.assert_allclose(svd.reconstruct() @ fit.theta_hat, fit.projections, atol=1e-12)


def test_problem_hash_tracks_inputs(random_problem):
    """Test the problem hash is stable and sensitive to Y"""
    svd, Y = random_problem
    assert problem_hash(svd, Y) == problem_hash(svd, Y.copy())
    assert problem_hash(svd, Y) != problem_hash(svd, Y * 2.0)


def test_reduce_frame_rescales_loss(rng):
    """Test the reduced problem has unit response norm and proportional LOOCV"""
    ds = standardize(RawDataset(rng.standard_normal((20, 3)), rng.standard_normal(20)))
    reduced = reduce_frame(ds)

    assert np.linalg.norm(reduced.Y) == pytest.approx(1.0)
    np.testing.assert_array_equal(reduced.svd.V, np.eye(3))
    scale = float(ds.Y @ ds.Y)
    for lam in (0.1, 1.0, 10.0):
        assert loocv_loss(reduced.svd, reduced.Y, lam) == pytest.approx(loocv_loss(ds.svd, ds.Y, lam) / scale,
                                                                       rel=1e-10)


def test_reduce_frame_rejects_zero_response(rng):
    """Test a zero response vector cannot be normalized"""
    X = rng.standard_normal((10, 2))
    ds = standardize(RawDataset(X, np.full(10, 3.0)))
    with pytest.raises(ZeroResponseError):
        reduce_frame(ds)


def test_pcr_truncate_keeps_leading_directions(rng):
    """Test PCR keeps the top singular directions and the responses"""
    ds = standardize(RawDataset(rng.standard_normal((30, 5)), rng.standard_normal(30)))
    truncated = pcr_truncate(ds, 2)

    assert truncated.D == 2
    np.testing.assert_allclose(truncated.svd.S, ds.svd.S[:2])
    np.testing.assert_array_equal(truncated.Y, ds.Y)
    assert truncated.feature_names == ["pc1", "pc2"]


@pytest.mark.parametrize("rank", [0, 6])
def test_pcr_truncate_rank_bounds(rng, rank):
    """Test ranks outside [1, D] are rejected"""
    ds = standardize(RawDataset(rng.standard_normal((30, 5)), rng.standard_normal(30)))
    with pytest.raises(BadRankError):
        pcr_truncate(ds, rank)


def test_load_csv_one_hot_encodes_categoricals(csv_dataset):
    """Test categorical levels become drop-first indicator columns"""
    raw = load_csv(csv_dataset, "quality")

    assert raw.N == 40
    assert raw.feature_names == ["alcohol", "acidity", "sugar", "colour_rose", "colour_white"]
    assert set(np.unique(raw.X[:, 3])) <= {0.0, 1.0}


def test_load_csv_forced_categorical(tmp_path):
    """Test a numeric column listed as categorical is one-hot encoded"""
    path = tmp_path / "small.csv"
    pd.DataFrame({
        "x": [0.1, 0.4, 0.2, 0.9, 0.5, 0.3],
        "grade": [1, 2, 3, 1, 2, 3],
        "y": [1.0, 2.0, 0.5, 1.5, 2.5, 0.0],
    }).to_csv(path, index=False)

    raw = load_csv(path, "y", categorical=["grade"])
    assert raw.feature_names == ["x", "grade_2", "grade_3"]


def test_load_csv_drops_incomplete_rows(tmp_path):
    """Test rows with missing values are dropped"""
    path = tmp_path / "gaps.csv"
    path.write_text("a,b,y\n1,2,3\n2,,4\n3,1,5\n4,5,1\n5,3,2\n")
    raw = load_csv(path, "y")
    assert raw.N == 4


def test_load_csv_missing_target(csv_dataset):
    """Test an unknown target column is a dataset format error"""
    with pytest.raises(DatasetFormatError) as exc_info:
        load_csv(csv_dataset, "price")
    assert exc_info.value.details["column"] == "price"


def test_load_csv_non_numeric_target(tmp_path):
    """Test a non-numeric response value reports its row"""
    path = tmp_path / "bad.csv"
    path.write_text("a,y\n1,2\n2,three\n3,4\n4,5\n")
    with pytest.raises(DatasetFormatError) as exc_info:
        load_csv(path, "y")
    assert exc_info.value.details["row"] == 1
    assert exc_info.value.error_code == "DATASET_FORMAT"


def test_load_csv_missing_file(tmp_path):
    """Test a missing file is a dataset format error"""
    with pytest.raises(DatasetFormatError):
        load_csv(tmp_path / "nowhere.csv", "y")
