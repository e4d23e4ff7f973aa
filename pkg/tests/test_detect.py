import numpy as np
import pytest

from panelaccess.detect import (DETECTORS, NMSE_FLOOR_DB, DetectorConfig, aud_error_prob,
                                bi_ad, cg_ad, nmse, threshold_fn, user_slice)


def test_threshold_examples():
    assert threshold_fn(0, 0.1) == 0
    assert threshold_fn(1 + 0j, 0.5) == 1
    assert threshold_fn(0.5, 0.5) == 0
    assert list(threshold_fn(np.array([0.2j, -0.7]), 0.5)) == [0, 1]
    with pytest.raises(ValueError):
        threshold_fn(1.0, -0.1)


def test_detector_config_validation():
    with pytest.raises(ValueError):
        DetectorConfig(cg_frac=1.5)
    with pytest.raises(ValueError):
        DetectorConfig(bi_eps=1.0)


def test_user_slice_layout():
    col = np.arange(12)
    s = user_slice(col, 4)
    assert s.shape == (4, 3) and list(s[:, 1]) == [4, 5, 6, 7]
    with pytest.raises(ValueError):
        user_slice(np.arange(10), 4)


def test_cg_zero_estimate():
    assert not cg_ad(np.zeros((4, 5))).active.any()


def test_cg_single_user():
    h = np.zeros((8, 5), complex)
    h[:, 2] = 1
    assert list(cg_ad(h).active) == [0, 0, 1, 0, 0]


def test_cg_eighty_percent_is_inactive():
    h = np.zeros((10, 2))
    h[:, 0] = 1
    h[:8, 1] = 1
    res = cg_ad(h)
    assert res.scores[1] == pytest.approx(0.8)
    assert list(res.active) == [1, 0]


def test_cg_scale_invariant(rng):
    h = rng.standard_normal((8, 30)) * (rng.random(30) < 0.3)
    h += 1e-4 * rng.standard_normal(h.shape)
    base = cg_ad(h).active
    for c in (1e-6, 0.3, 7.0, 1e5):
        assert np.array_equal(cg_ad(c * h).active, base)


def test_bi_examples():
    assert bi_ad(np.ones((4, 3))).active.all()
    assert not bi_ad(np.zeros((4, 3))).active.any()
    eta = np.full((10, 1), 0.1)
    eta[:6] = 0.6
    assert bi_ad(eta).active[0] == 1


def test_bi_permutation_equivariant(rng):
    eta = rng.random((8, 20))
    perm = rng.permutation(20)
    truth = (rng.random(20) < 0.5).astype(int)
    a = bi_ad(eta).active
    b = bi_ad(eta[:, perm]).active
    assert np.array_equal(a[perm], b)
    assert aud_error_prob(a, truth) == aud_error_prob(b, truth[perm])


def test_detector_table():
    assert DETECTORS["cg"] is cg_ad and DETECTORS["bi"] is bi_ad


def test_aud_error_examples(rng):
    a = np.array([1, 0, 0, 1, 0, 0, 0, 0, 0, 1])
    assert aud_error_prob(a, a) == 0
    b = a.copy()
    b[4] = 1
    assert aud_error_prob(b, a) == pytest.approx(0.1)
    assert aud_error_prob(1 - a, a) == 1
    x, y = rng.integers(0, 2, 50), rng.integers(0, 2, 50)
    assert aud_error_prob(x, y) == aud_error_prob(y, x) == np.count_nonzero(x != y) / 50
    with pytest.raises(ValueError):
        aud_error_prob([1, 0], [1])


def test_nmse_examples(rng):
    act = np.array([1, 0, 1])
    h = np.zeros((12, 2), complex)
    h[:4] = rng.standard_normal((4, 2))
    h[8:] = rng.standard_normal((4, 2))
    assert nmse(h, h, act, 4) == NMSE_FLOOR_DB
    assert nmse(np.zeros_like(h), h, act, 4) == pytest.approx(0.0)
    e = rng.standard_normal(h.shape) * (h != 0)
    e *= np.sqrt(0.01) * np.linalg.norm(h) / np.linalg.norm(e)
    assert nmse(h + e, h, act, 4) == pytest.approx(-20.0)


def test_nmse_modes(rng):
    act = np.array([1, 0])
    h = np.zeros((4, 3))
    h[:2] = rng.standard_normal((2, 3))
    est = h.copy()
    est[2:] = 1.0     # error on the inactive rows only
    assert nmse(est, h, act, 2) == NMSE_FLOOR_DB
    assert nmse(est, h, act, 2, mode="full") > NMSE_FLOOR_DB
    per = nmse(0.5 * h, h, act, 2, per_subcarrier=True)
    assert per.shape == (3,) and np.allclose(per, 10 * np.log10(0.25))


def test_nmse_errors():
    with pytest.raises(ValueError, match="zero"):
        nmse(np.ones((4, 1)), np.zeros((4, 1)), [1, 0], 2)
    with pytest.raises(ValueError):
        nmse(np.ones((4, 1)), np.ones((4, 2)), [1, 0], 2)
    with pytest.raises(ValueError):
        nmse(np.ones((4, 1)), np.ones((4, 1)), [1, 0], 2, mode="rows")
