import numpy as np
import pytest
from scipy import stats

from piggyback.errors import NonPositiveDefiniteError
from piggyback.gaussian import gaussian_box_integral, halton, lattice_box_probs


def cdf_product_oracle(mean, sigmas, lower, upper):
    """Closed-form box mass for a diagonal covariance."""
    prob = 1.0
    for mu, sd, lo, hi in zip(mean, sigmas, lower, upper):
        prob *= stats.norm.cdf(hi, mu, sd) - stats.norm.cdf(lo, mu, sd)
    return prob


def random_spd(rng, scale=1.0):
    a = rng.normal(size=(3, 3))
    return a @ a.T * scale + np.eye(3) * 0.05


def test_halton_is_fixed_and_in_unit_square():
    pts = halton(4096, 2)
    assert pts.shape == (2, 4096)
    assert np.all((pts > 0) & (pts < 1))
    assert pts[0, :4] == pytest.approx([0.5, 0.25, 0.75, 0.125])
    assert pts[1, :3] == pytest.approx([1 / 3, 2 / 3, 1 / 9])


def test_full_support_integrates_to_one():
    mean = np.array([1.0, -2.0, 3.0])
    cov = np.diag([4.0, 0.25, 9.0])
    sd = np.sqrt(np.diag(cov))
    assert gaussian_box_integral(mean, cov, mean - 12 * sd, mean + 12 * sd) == \
        pytest.approx(1.0, abs=1e-3)


def test_correlated_full_support_integrates_to_one():
    rng = np.random.default_rng(5)
    cov = random_spd(rng)
    mean = np.array([0.5, 0.5, 10.0])
    width = 12 * np.sqrt(np.diag(cov))
    assert gaussian_box_integral(mean, cov, mean - width, mean + width) == \
        pytest.approx(1.0, abs=1e-3)


def test_diagonal_cases_match_cdf_product():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        mean = rng.normal(size=3) * 5
        sd = rng.uniform(0.2, 4.0, size=3)
        lower = mean + rng.uniform(-3, 1, size=3) * sd
        upper = lower + rng.uniform(0.1, 4, size=3) * sd
        got = gaussian_box_integral(mean, np.diag(sd**2), lower, upper)
        want = cdf_product_oracle(mean, sd, lower, upper)
        assert got == pytest.approx(want, abs=1e-3)


def test_far_tail_box_is_zero():
    mean = np.zeros(3)
    cov = np.eye(3)
    assert gaussian_box_integral(mean, cov, mean + 20, mean + 21) == pytest.approx(0.0, abs=1e-6)


def test_degenerate_box_is_zero():
    assert gaussian_box_integral(np.zeros(3), np.eye(3), [0, 0, 0], [1, 1, 0]) == 0.0


def test_non_positive_definite_raises():
    cov = np.array([[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(NonPositiveDefiniteError):
        gaussian_box_integral(np.zeros(3), cov, np.zeros(3), np.ones(3))


def test_correlated_box_matches_scipy_mvn():
    # Independent implementation check: scipy's own MVN integrator.
    rng = np.random.default_rng(77)
    for _ in range(5):
        cov = random_spd(rng)
        mean = rng.normal(size=3)
        lower = mean - rng.uniform(0.5, 2.0, size=3)
        upper = mean + rng.uniform(0.5, 2.0, size=3)
        got = gaussian_box_integral(mean, cov, lower, upper)
        want = stats.multivariate_normal(mean, cov).cdf(upper, lower_limit=lower)
        assert got == pytest.approx(want, abs=2e-3)


def test_monotone_in_box_inclusion():
    rng = np.random.default_rng(9)
    for _ in range(20):
        cov = random_spd(rng)
        mean = rng.normal(size=3)
        lower = mean - rng.uniform(0.2, 2.0, size=3)
        upper = mean + rng.uniform(0.2, 2.0, size=3)
        grow = rng.uniform(0.0, 1.0, size=3)
        inner = gaussian_box_integral(mean, cov, lower, upper)
        outer = gaussian_box_integral(mean, cov, lower - grow, upper + grow)
        assert inner <= outer + 1e-3


def test_lattice_matches_single_box_calls():
    rng = np.random.default_rng(31)
    cov = random_spd(rng)
    mean = np.array([0.3, -0.2, 5.0])
    e0 = np.linspace(-1.5, 1.5, 4)
    e1 = np.linspace(-2.0, 1.0, 3)
    e2 = np.linspace(2.0, 8.0, 5)
    lattice = lattice_box_probs(mean, cov, e0, e1, e2)
    for i in range(3):
        for j in range(2):
            for k in range(4):
                single = gaussian_box_integral(
                    mean, cov,
                    [e0[i], e1[j], e2[k]],
                    [e0[i + 1], e1[j + 1], e2[k + 1]])
                assert lattice[i, j, k] == pytest.approx(single, abs=1e-12)


def test_lattice_cells_sum_to_enclosing_box():
    rng = np.random.default_rng(13)
    cov = random_spd(rng)
    mean = np.zeros(3)
    reach = 10 * float(np.sqrt(np.diag(cov).max()))
    edges = np.linspace(-reach, reach, 9)
    lattice = lattice_box_probs(mean, cov, edges, edges, edges)
    assert lattice.sum() == pytest.approx(1.0, abs=2e-3)
