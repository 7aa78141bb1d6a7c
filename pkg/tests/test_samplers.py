import numpy as np
import pytest

from ridge_loocv.core.errors import DegenerateDrawError, InvalidInputError
from ridge_loocv.services import samplers
from ridge_loocv.services.samplers import (
    LinearModelSpec,
    RngStream,
    SubgaussianFamily,
    degenerate_U,
    generate_responses,
    sample_null_residual,
    sample_orthonormal,
    sample_subgaussian_X,
    sample_zero_mean_orthonormal,
    spectrum_family,
)


def test_zero_mean_orthonormal_draws():
    """Test 1000 draws are orthonormal with zero column means"""
    stream = RngStream(2024)
    for i in range(1000):
        N = 8 + i % 40
        U = sample_zero_mean_orthonormal(N, 5, stream.child(i))
        assert np.max(np.abs(U.T @ U - np.eye(5))) <= 1e-10
        assert np.max(np.abs(U.sum(axis=0))) <= 1e-10
        assert np.sum(U ** 2) == pytest.approx(5.0)


def test_unconstrained_orthonormal_draw():
    """Test the unconstrained sampler is orthonormal but not centered"""
    U = sample_orthonormal(30, 4, RngStream(5))
    np.testing.assert_allclose(U.T @ U, np.eye(4), atol=1e-12)
    assert np.max(np.abs(U.sum(axis=0))) > 1e-6


@pytest.mark.parametrize("N, D", [(5, 4), (5, 5), (5, 0)])
def test_zero_mean_sampler_dimension_checks(N, D):
    """Test D must leave room for the 1-vector"""
    with pytest.raises(InvalidInputError):
        sample_zero_mean_orthonormal(N, D, RngStream(1))


def test_streams_are_reproducible():
    """Test the same (seed, path) rebuilds the same draw and siblings differ"""
    a = sample_zero_mean_orthonormal(20, 3, RngStream(9, (1, 2)))
    b = sample_zero_mean_orthonormal(20, 3, RngStream(9).child(1, 2))
    c = sample_zero_mean_orthonormal(20, 3, RngStream(9).child(1, 3))
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_stream_rejects_negative_seed():
    """Test seeds must be unsigned"""
    with pytest.raises(InvalidInputError):
        RngStream(-1)


def test_degenerate_draws_are_retried_then_reported(mocker):
    """Test persistent near-dependence ends in DegenerateDrawError"""
    mocker.patch.object(samplers, "_orthonormalize", side_effect=samplers._Degenerate())
    with pytest.raises(DegenerateDrawError) as exc_info:
        sample_zero_mean_orthonormal(10, 2, RngStream(0))
    assert exc_info.value.details["attempts"] == samplers.MAX_ATTEMPTS


def test_null_residual_is_orthogonal():
    """Test the residual direction is a unit vector orthogonal to U and to 1"""
    U = sample_zero_mean_orthonormal(15, 4, RngStream(3))
    R = sample_null_residual(U, RngStream(4), zero_mean=True)

    assert np.linalg.norm(R) == pytest.approx(1.0)
    np.testing.assert_allclose(U.T @ R, 0.0, atol=1e-12)
    assert abs(R.sum()) < 1e-12


def test_null_residual_needs_room():
    """Test a square U has no null space"""
    with pytest.raises(InvalidInputError):
        sample_null_residual(np.eye(4), RngStream(0))


def test_degenerate_U_pads_with_zero_rows():
    """Test the degenerate family keeps its mass on the first N0 rows"""
    U = degenerate_U(50, 8, 5, RngStream(6))
    assert U.shape == (50, 5)
    assert np.all(U[8:] == 0.0)
    np.testing.assert_allclose(U.T @ U, np.eye(5), atol=1e-12)
    nu = np.sum(U ** 2, axis=1)
    assert nu.max() >= 5 / 8


def test_degenerate_U_is_shared_across_N():
    """Test the top block depends only on the stream"""
    a = degenerate_U(20, 8, 3, RngStream(6, (1, 0)))
    b = degenerate_U(200, 8, 3, RngStream(6, (1, 0)))
    np.testing.assert_array_equal(a[:8], b[:8])


def test_spectrum_family():
    """Test alpha = 0 is flat and the last singular value is one"""
    np.testing.assert_array_equal(spectrum_family(0.0, 5), np.ones(5))
    S = spectrum_family(1.0, 5)
    assert S[-1] == 1.0
    np.testing.assert_allclose(S, np.exp(np.arange(1, 6) - 5.0))
    with pytest.raises(InvalidInputError):
        spectrum_family(-0.5, 5)


def test_theta_star_is_fixed_by_seed():
    """Test theta* is a unit vector determined by the seed alone"""
    a = LinearModelSpec.from_seed(5, 0.5, 42)
    b = LinearModelSpec.from_seed(5, 0.1, 42)
    assert np.linalg.norm(a.theta_star) == pytest.approx(1.0)
    np.testing.assert_array_equal(a.theta_star, b.theta_star)
    assert not np.allclose(a.theta_star, LinearModelSpec.from_seed(5, 0.5, 43).theta_star)


def test_generate_responses_noise_level():
    """Test responses are signal plus noise of the requested variance"""
    N, D = 4000, 3
    U = sample_orthonormal(N, D, RngStream(8))
    spec = LinearModelSpec.from_seed(D, 0.25, 8)
    Y = generate_responses(U, np.ones(D), spec, RngStream(9))
    noise = Y - U @ spec.theta_star
    assert np.var(noise) == pytest.approx(0.25, rel=0.1)

    centered = generate_responses(U, np.ones(D), spec, RngStream(9), recenter=True)
    assert abs(centered.sum()) < 1e-9


def test_generate_responses_checks_shapes():
    """Test mismatched dimensions are rejected"""
    spec = LinearModelSpec.from_seed(3, 0.5, 1)
    with pytest.raises(InvalidInputError):
        generate_responses(np.zeros((10, 2)), np.ones(2), spec, RngStream(1))


@pytest.mark.parametrize("family", list(SubgaussianFamily))
def test_subgaussian_entries_have_unit_variance(family):
    """Test every covariate family has mean zero and variance one"""
    X = sample_subgaussian_X(5000, 4, family, RngStream(12))
    assert X.shape == (5000, 4)
    assert abs(X.mean()) < 0.05
    assert X.var() == pytest.approx(1.0, rel=0.05)


def test_rademacher_values():
    """Test Rademacher entries are +-1"""
    X = sample_subgaussian_X(100, 3, "rademacher", RngStream(2))
    assert set(np.unique(X)) == {-1.0, 1.0}


def test_unknown_family():
    """Test an unknown covariate family is invalid input"""
    with pytest.raises(InvalidInputError):
        sample_subgaussian_X(10, 2, "cauchy", RngStream(2))
