"""Kors transform, VCG rotation and the augmentation pipeline."""

import numpy as np
import pytest

from beatssl.core.config import AugmentConfig
from beatssl.core.errors import ConfigurationError, ShapeError, ValidationError
from beatssl.vcg import (
    KORS,
    KORS_MATRIX,
    AugmentParams,
    KorsTransform,
    augment,
    augment_pair,
    draw_params,
    ecg_to_vcg,
    random_axis,
    rotate_vcg,
    vcg_to_ecg,
)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# Test Kors transform
def test_pseudo_inverse_identity():
    """Test that M M+ is the 3x3 identity."""
    assert KORS.identity_error() < 1e-10


def test_linearity(rng):
    a, b = rng.standard_normal((12, 50)), rng.standard_normal((12, 50))
    np.testing.assert_allclose(ecg_to_vcg(a + b), ecg_to_vcg(a) + ecg_to_vcg(b), atol=1e-12)
    assert not np.any(ecg_to_vcg(np.zeros((12, 7))))
    assert not np.any(vcg_to_ecg(np.zeros((3, 7))))


def test_constant_leads_give_row_sums():
    vcg = ecg_to_vcg(np.ones((12, 4)))
    np.testing.assert_allclose(vcg[:, 0], KORS_MATRIX.sum(axis=1), atol=1e-12)


def test_vcg_round_trip(rng):
    """Test ecg_to_vcg(vcg_to_ecg(v)) = v on 100 random VCGs."""
    for _ in range(100):
        v = rng.standard_normal((3, 20))
        back = ecg_to_vcg(vcg_to_ecg(v))
        assert np.linalg.norm(back - v) / np.linalg.norm(v) < 1e-9


def test_row_space_ecg_round_trip(rng):
    x = KORS.inverse @ rng.standard_normal((3, 30))
    np.testing.assert_allclose(vcg_to_ecg(ecg_to_vcg(x)), x, atol=1e-9)


def test_shape_checks():
    with pytest.raises(ShapeError):
        ecg_to_vcg(np.zeros((8, 10)))
    with pytest.raises(ShapeError):
        vcg_to_ecg(np.zeros((12, 10)))
    with pytest.raises(ShapeError):
        KorsTransform(np.zeros((3, 12)))


def test_transform_is_read_only():
    with pytest.raises(ValueError):
        KORS.forward[0, 0] = 1.0


# Test rotation
def test_rotation_examples():
    v = np.array([[1.0], [0.0], [0.0]])
    np.testing.assert_allclose(rotate_vcg(v, 0.0, [0, 0, 1]), v)
    np.testing.assert_allclose(rotate_vcg(v, 90.0, [0, 0, 1]), [[0.0], [1.0], [0.0]], atol=1e-12)


def test_rotation_preserves_column_norms(rng):
    v = rng.standard_normal((3, 100))
    for theta in (-45.0, 7.5, 180.0):
        rotated = rotate_vcg(v, theta, random_axis(rng))
        np.testing.assert_allclose(np.linalg.norm(rotated, axis=0), np.linalg.norm(v, axis=0), rtol=1e-9)


def test_rotation_rejects_non_unit_axis():
    with pytest.raises(ValidationError):
        rotate_vcg(np.zeros((3, 4)), 10.0, [0, 0, 2])


# Test augmentation
def test_identity_augmentation_is_projection(rng):
    """Test that theta=0, scale=1, sigma=0 returns the Kors-subspace projection."""
    ecg = rng.standard_normal((12, 200))
    params = AugmentParams(theta_range=(0, 0), scale_range=(1, 1), noise_sigma=0.0)
    out = augment(ecg, params, rng)
    expected = KORS.inverse @ KORS_MATRIX @ ecg
    assert np.linalg.norm(out - expected) / np.linalg.norm(expected) < 1e-9


def test_scale_multiplies_vcg_norm(rng):
    ecg = rng.standard_normal((12, 200))
    params = AugmentParams(theta_range=(-30, 30), scale_range=(1.15, 1.15), noise_sigma=0.0)
    out = augment(ecg, params, rng)
    ratio = np.linalg.norm(ecg_to_vcg(out)) / np.linalg.norm(ecg_to_vcg(ecg))
    assert ratio == pytest.approx(1.15, rel=1e-9)


def test_augmentation_is_deterministic(synthetic_records):
    ecg = synthetic_records[0].signal
    params = AugmentParams(seed=5)
    np.testing.assert_array_equal(augment(ecg, params), augment(ecg, params))
    a1, b1 = augment_pair(ecg, params, np.random.default_rng(1))
    a2, b2 = augment_pair(ecg, params, np.random.default_rng(1))
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(b1, b2)
    assert not np.array_equal(a1, b1)


def test_draws_stay_in_range(rng):
    params = AugmentParams(theta_range=(-15, 15), scale_range=(1.0, 1.2))
    for _ in range(50):
        draw = draw_params(params, rng)
        assert -15 <= draw.theta <= 15
        assert 1.0 <= draw.scale <= 1.2
        assert np.linalg.norm(draw.axis) == pytest.approx(1.0)


def test_params_validation():
    with pytest.raises(ConfigurationError):
        AugmentParams(scale_range=(0.0, 1.0))
    with pytest.raises(ConfigurationError):
        AugmentParams(theta_range=(10, -10))
    with pytest.raises(ConfigurationError):
        AugmentParams(noise_sigma=-0.1)
    params = AugmentParams.from_config(AugmentConfig(), seed=3)
    assert params.scale_range == (1.0, 1.2) and params.seed == 3
