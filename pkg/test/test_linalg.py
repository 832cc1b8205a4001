import numpy as np
import pytest


def test_sym_sqrt_inv():

    from apgarch.linalg import sym_sqrt_inv

    factors = sym_sqrt_inv(np.eye(2))
    assert np.allclose(factors.sqrt, np.eye(2))
    assert np.allclose(factors.inv, np.eye(2))
    assert factors.logdet == pytest.approx(0.0)

    factors = sym_sqrt_inv(np.diag([4.0, 9.0]))
    assert np.allclose(factors.sqrt, np.diag([2.0, 3.0]))
    assert np.allclose(factors.inv, np.diag([0.25, 1 / 9]))
    assert np.allclose(factors.inv_sqrt, np.diag([0.5, 1 / 3]))
    assert factors.logdet == pytest.approx(np.log(36.0))

    m = np.array([[1.0, 0.7], [0.7, 1.0]])
    factors = sym_sqrt_inv(m)
    assert np.allclose(factors.sqrt @ factors.sqrt, m, atol=1e-10)
    assert np.allclose(factors.sqrt, factors.sqrt.T)
    assert factors.inv[0, 1] == pytest.approx(-0.7 / 0.51)
    assert factors.inv[0, 0] == pytest.approx(1 / 0.51)
    assert factors.logdet == pytest.approx(np.log(0.51))
    assert np.allclose(factors.inv_sqrt @ factors.inv_sqrt, factors.inv)


def test_sym_sqrt_inv_errors():

    from apgarch.linalg import sym_sqrt_inv, NotPositiveDefiniteError

    with pytest.raises(NotPositiveDefiniteError):
        sym_sqrt_inv(np.array([[1.0, 1.0], [1.0, 1.0]]))

    with pytest.raises(NotPositiveDefiniteError) as exc:
        sym_sqrt_inv(np.diag([1.0, -1.0]))
    assert exc.value.min_eigenvalue == pytest.approx(-1.0)

    with pytest.raises(ValueError):
        sym_sqrt_inv(np.array([[1.0, 0.5], [0.2, 1.0]]))

    with pytest.raises(ValueError):
        sym_sqrt_inv(np.ones((2, 3)))


def test_sym_sqrt_inv_stack():

    from apgarch.linalg import sym_sqrt_inv, sym_sqrt_inv_stack

    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 3, 3))
    ms = x @ np.swapaxes(x, 1, 2) + np.eye(3)

    stack = sym_sqrt_inv_stack(ms)
    for k in range(5):
        single = sym_sqrt_inv(ms[k])
        assert np.allclose(stack.sqrt[k], single.sqrt)
        assert np.allclose(stack.inv[k], np.linalg.inv(ms[k]))
        assert stack.logdet[k] == pytest.approx(np.linalg.slogdet(ms[k])[1])


def test_chi2():

    from apgarch.linalg import chi2_sf, chi2_cdf, DomainError

    assert chi2_sf(0.0, 3) == 1.0
    assert chi2_sf(3.841459, 1) == pytest.approx(0.05, abs=1e-6)
    assert chi2_sf(21.026, 12) == pytest.approx(0.05, abs=1e-4)
    assert chi2_sf(1.0, 1) == pytest.approx(0.3173, abs=1e-4)
    assert chi2_cdf(5.0, 4) + chi2_sf(5.0, 4) == pytest.approx(1.0)

    # Two degrees of freedom give an exponential tail.
    assert chi2_sf(3.0, 2) == pytest.approx(np.exp(-1.5))

    with pytest.raises(DomainError):
        chi2_sf(1.0, 0)
    with pytest.raises(DomainError):
        chi2_sf(-1.0, 2)
    with pytest.raises(DomainError):
        chi2_cdf(float("nan"), 2)


def test_normal_quantile():

    from apgarch.linalg import normal_quantile, DomainError

    assert normal_quantile(0.5) == pytest.approx(0.0, abs=1e-12)
    assert normal_quantile(0.975) == pytest.approx(1.959964, abs=1e-5)
    assert normal_quantile(0.95) == pytest.approx(1.644854, abs=1e-5)
    assert normal_quantile(0.05) == pytest.approx(-1.644854, abs=1e-5)

    for p in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(DomainError):
            normal_quantile(p)


def test_rng_stream():

    from apgarch.linalg import RngStream, draw_std_normal

    a = draw_std_normal(RngStream(7, 0), 100)
    b = draw_std_normal(RngStream(7, 0), 100)
    assert np.array_equal(a, b)

    # Successive draws continue the stream.
    rng = RngStream(7, 0)
    first = draw_std_normal(rng, 50)
    second = draw_std_normal(rng, 50)
    assert np.array_equal(np.concatenate((first, second)), a)

    x = draw_std_normal(RngStream(7, 0), 100000)
    y = draw_std_normal(RngStream(7, 1), 100000)
    assert abs(np.mean(x)) < 0.02
    assert abs(np.var(x) - 1) < 0.02
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.02

    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        draw_std_normal(RngStream(0), 0)
