import math

import numpy as np
import pytest
from scipy import integrate, optimize

from inrec import (DiagonalGaussian, kl_divergence, kl_divergence_bits,
                   kl_terms, log_density, prior_update, sample)
from inrec.binio import Reader, Writer
from inrec.gaussians import read_gaussian, write_gaussian


def gaussian(mean, variance):
    return DiagonalGaussian(np.asarray(mean, float), np.asarray(variance, float))


def kl_quadrature(mq, vq, mp, vp):
    """Scalar KL(q || p) by numerical integration of q * ln(q/p)."""
    def integrand(x):
        lq = -0.5 * (math.log(2 * math.pi * vq) + (x - mq) ** 2 / vq)
        lp = -0.5 * (math.log(2 * math.pi * vp) + (x - mp) ** 2 / vp)
        return math.exp(lq) * (lq - lp)
    lo, hi = mq - 12 * math.sqrt(vq), mq + 12 * math.sqrt(vq)
    value, _ = integrate.quad(integrand, lo, hi, limit=200)
    return value


def test_kl_zero_for_identical():
    q = gaussian([0.3, -1.2], [0.5, 2.0])
    assert kl_divergence(q, q) == pytest.approx(0.0, abs=1e-12)


def test_kl_unit_mean_shift():
    q, p = gaussian([1.0], [1.0]), gaussian([0.0], [1.0])
    assert kl_divergence(q, p) == pytest.approx(0.5, abs=1e-12)
    assert kl_divergence(q, p) == pytest.approx(kl_quadrature(1, 1, 0, 1), abs=1e-9)


def test_kl_shrunk_variance():
    q, p = gaussian([0.0], [0.25]), gaussian([0.0], [1.0])
    expected = 0.5 * (math.log(4.0) + 0.25 - 1.0)
    assert expected == pytest.approx(0.3181, abs=5e-5)
    assert kl_divergence(q, p) == pytest.approx(expected, abs=1e-12)
    assert kl_divergence(q, p) == pytest.approx(kl_quadrature(0, 0.25, 0, 1), abs=1e-9)


def test_kl_random_pairs_match_quadrature():
    rng = np.random.default_rng(5)
    for _ in range(10):
        mq, mp = rng.normal(size=2)
        vq, vp = np.exp(rng.normal(size=2))
        got = kl_divergence(gaussian([mq], [vq]), gaussian([mp], [vp]))
        assert got == pytest.approx(kl_quadrature(mq, vq, mp, vp), rel=1e-8, abs=1e-10)


def test_kl_sums_over_dimensions():
    rng = np.random.default_rng(6)
    q = gaussian(rng.normal(size=7), np.exp(rng.normal(size=7)))
    p = gaussian(rng.normal(size=7), np.exp(rng.normal(size=7)))
    terms = kl_terms(q, p)
    assert terms.shape == (7,)
    scalar = sum(kl_divergence(q.subset(np.array([i])), p.subset(np.array([i])))
                 for i in range(7))
    assert kl_divergence(q, p) == pytest.approx(terms.sum(), rel=1e-12)
    assert kl_divergence(q, p) == pytest.approx(scalar, rel=1e-12)
    assert kl_divergence_bits(q, p) == pytest.approx(terms.sum() / math.log(2.0), rel=1e-12)


def test_kl_nonnegative():
    rng = np.random.default_rng(7)
    for _ in range(50):
        q = gaussian(rng.normal(size=4), np.exp(rng.normal(size=4)))
        p = gaussian(rng.normal(size=4), np.exp(rng.normal(size=4)))
        assert kl_divergence(q, p) >= 0.0
        assert np.all(kl_terms(q, p) >= 0.0)


def test_kl_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        kl_divergence(gaussian([0.0], [1.0]), gaussian([0.0, 0.0], [1.0, 1.0]))


def test_nonpositive_variance_rejected():
    with pytest.raises(ValueError):
        gaussian([0.0], [0.0])
    with pytest.raises(ValueError):
        gaussian([0.0, 1.0], [1.0, -2.0])


def test_log_density_standard_normal_at_origin():
    value = log_density(gaussian([0.0], [1.0]), np.array([0.0]))
    assert value == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)
    assert value == pytest.approx(-0.9189, abs=5e-5)


def test_log_density_two_dim():
    value = log_density(gaussian([0.0, 0.0], [1.0, 1.0]), np.array([1.0, 1.0]))
    assert value == pytest.approx(-math.log(2 * math.pi) - 1.0, abs=1e-12)
    assert value == pytest.approx(-2.8379, abs=5e-5)


def test_log_density_integrates_to_one():
    g = gaussian([0.7], [0.35])
    total, _ = integrate.quad(lambda x: math.exp(log_density(g, np.array([x]))),
                              -10, 10, limit=200)
    assert total == pytest.approx(1.0, abs=1e-9)


def test_log_density_shape_mismatch_rejected():
    g = gaussian([0.1, -0.4], [0.8, 1.3])
    with pytest.raises(ValueError):
        log_density(g, np.array([1.0, 2.0, 3.0]))


def test_sample_is_seed_deterministic():
    g = gaussian([1.0, -2.0], [0.5, 3.0])
    a = sample(g, np.random.default_rng(3))
    b = sample(g, np.random.default_rng(3))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample(g, np.random.default_rng(4)))


def test_sample_moments():
    g = gaussian([2.0], [4.0])
    rng = np.random.default_rng(9)
    draws = np.array([sample(g, rng)[0] for _ in range(20000)])
    assert draws.mean() == pytest.approx(2.0, abs=0.05)
    assert draws.var() == pytest.approx(4.0, rel=0.05)


def test_sample_tiny_variance_sticks_to_mean():
    g = gaussian([5.0], [1e-30])
    assert sample(g, np.random.default_rng(0))[0] == pytest.approx(5.0, abs=1e-4)


def test_prior_update_single_member_is_fixed_point():
    q = gaussian([0.2, -1.0], [0.3, 2.5])
    out = prior_update([q])
    assert np.allclose(out.mean, q.mean)
    assert np.allclose(out.variance, q.variance)


def test_prior_update_symmetric_pair():
    out = prior_update([gaussian([-1.0], [0.5]), gaussian([1.0], [0.5])])
    assert out.mean[0] == pytest.approx(0.0, abs=1e-12)
    assert out.variance[0] == pytest.approx(1.5, abs=1e-12)


def average_kl(posteriors, mean, variance):
    p = gaussian(mean, variance)
    return float(np.mean([kl_divergence(q, p) for q in posteriors]))


def test_prior_update_minimizes_average_kl():
    rng = np.random.default_rng(12)
    posteriors = [gaussian(rng.normal(size=3), np.exp(rng.normal(size=3)))
                  for _ in range(6)]
    out = prior_update(posteriors)
    base = average_kl(posteriors, out.mean, out.variance)

    # No nearby parameter choice does better.
    for _ in range(200):
        dm = rng.normal(size=3) * 0.05
        dv = rng.normal(size=3) * 0.05
        trial = average_kl(posteriors, out.mean + dm,
                           out.variance * np.exp(dv))
        assert trial >= base - 1e-12

    # And a general-purpose optimizer lands on the same point.
    def objective(theta):
        return average_kl(posteriors, theta[:3], np.exp(theta[3:]))

    start = np.concatenate([out.mean + 0.3, np.log(out.variance) + 0.3])
    res = optimize.minimize(objective, start, method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-12,
                                     "maxiter": 20000})
    assert np.allclose(res.x[:3], out.mean, atol=1e-5)
    assert np.allclose(np.exp(res.x[3:]), out.variance, rtol=1e-4)


def test_prior_update_rejects_empty_and_mismatched():
    with pytest.raises(ValueError):
        prior_update([])
    with pytest.raises(ValueError):
        prior_update([gaussian([0.0], [1.0]), gaussian([0.0, 0.0], [1.0, 1.0])])


def test_gaussian_io_round_trip():
    g = gaussian([0.25, -3.5, 1e-9], [1e-12, 4.0, 0.125])
    w = Writer()
    write_gaussian(w, g)
    back = read_gaussian(Reader(w.getvalue()))
    assert np.array_equal(back.mean, g.mean)
    assert np.array_equal(back.variance, g.variance)
