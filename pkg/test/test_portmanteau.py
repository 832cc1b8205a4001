import numpy as np
import pytest


def _series(values):
    from apgarch.portmanteau import DiagnosticSeries
    values = np.array(values, dtype=float)
    n = values.shape[0]
    return DiagnosticSeries(values, np.zeros((n, 4)), float(np.mean(values ** 2)), np.zeros((n, 2)))


def test_residual_diagnostics_trivial():

    from apgarch.portmanteau import diagnostics_from_residuals

    diag = diagnostics_from_residuals([[1.0, 1.0]])
    assert diag.S_hat.tolist() == [0.0]
    assert diag.s_vecs.tolist() == [[0.0, 1.0, 1.0, 0.0]]
    assert diag.kappa_hat == 0.0
    assert diag.n == 1


def test_residual_diagnostics_gaussian():

    from apgarch.portmanteau import diagnostics_from_residuals

    eta = np.random.default_rng(12).standard_normal((50000, 2))
    diag = diagnostics_from_residuals(eta)
    assert abs(np.mean(diag.S_hat)) < 0.03
    assert diag.kappa_hat == pytest.approx(4.0, abs=0.15)


def test_residual_diagnostics_fit(alt_series):

    from apgarch.experiments import dgp_preset
    from apgarch.qmle import evaluate_at
    from apgarch.portmanteau import residual_diagnostics, diagnostics_from_residuals

    order, params = dgp_preset("alt", (1.0, 1.0))
    result = evaluate_at(order, params, alt_series)
    diag = residual_diagnostics(result, 2)
    assert np.allclose(diag.S_hat, diagnostics_from_residuals(result.residuals).S_hat)

    with pytest.raises(ValueError):
        residual_diagnostics(result, 3)


def test_autocov_sum_sq():

    from apgarch.portmanteau import autocov_sum_sq, LagTooLargeError

    r, rho = autocov_sum_sq(_series([1, 1, 1, 1]), 1)
    assert r.tolist() == pytest.approx([0.75])
    assert rho.tolist() == pytest.approx([0.75])

    r, rho = autocov_sum_sq(_series([1, -1, 1, -1]), 2)
    assert r.tolist() == pytest.approx([-0.75, 0.5])

    with pytest.raises(LagTooLargeError) as exc:
        autocov_sum_sq(_series([1, 1, 1, 1]), 4)
    assert (exc.value.m, exc.value.n) == (4, 4)
    with pytest.raises(ValueError):
        autocov_sum_sq(_series([1, 1, 1, 1]), 0)


def test_autocov_sum_sq_oracle():

    from apgarch.portmanteau import autocov_sum_sq

    values = np.random.default_rng(5).standard_normal(50) ** 2 - 1
    r, rho = autocov_sum_sq(_series(values), 10)

    n = len(values)
    r0 = sum(values[t] * values[t] for t in range(n)) / n
    for h in range(1, 11):
        total = 0.0
        for t in range(h, n):
            total += values[t] * values[t - h]
        assert r[h - 1] == pytest.approx(total / n, abs=1e-12)
        assert rho[h - 1] == pytest.approx(total / n / r0, abs=1e-12)
        assert abs(rho[h - 1]) <= 1 + 1e-9


def test_assemble_d_trace_oracle(alt_series):

    from apgarch.experiments import dgp_preset
    from apgarch.qmle import evaluate_at
    from apgarch.portmanteau import residual_diagnostics, assemble_d, DMethod

    order, params = dgp_preset("alt", (1.0, 1.0))
    result = evaluate_at(order, params, alt_series)
    diag = residual_diagnostics(result, 2)
    assembly = assemble_d(order, result, diag, result.derivs, 3, DMethod.GENERAL)

    n = diag.n
    for h in range(1, 4):
        for k in (0, 3, 9, order.n_params - 1):
            total = 0.0
            for t in range(h, n):
                total += diag.S_hat[t - h] * np.trace(result.path.H_inv[t] @ result.derivs.dH[t, k])
            assert assembly.C_m_hat[h - 1, k] == pytest.approx(-total / n, abs=1e-10)

    assert assembly.m == 3
    assert assembly.Sigma_hat.shape == (order.n_params, 3)
    assert np.array_equal(assembly.D_hat, assembly.D_hat.T)
    assert assembly.asymmetry < 1e-8
    assert np.allclose(assembly.D_rho_hat, assembly.D_hat / diag.kappa_hat ** 2)
    assert assembly.condition >= 1.0


def test_assemble_d_without_estimation(alt_series):

    from apgarch.experiments import dgp_preset
    from apgarch.model import DerivStack
    from apgarch.qmle import evaluate_at
    from apgarch.portmanteau import residual_diagnostics, assemble_d, DMethod, LagTooLargeError

    order, params = dgp_preset("alt", (1.0, 1.0))
    result = evaluate_at(order, params, alt_series)
    diag = residual_diagnostics(result, 2)
    zero = DerivStack(np.zeros_like(result.derivs.dh_pow), np.zeros_like(result.derivs.dh),
                      np.zeros_like(result.derivs.dH), False)

    assembly = assemble_d(order, result, diag, zero, 1, DMethod.GENERAL)
    assert np.allclose(assembly.C_m_hat, 0.0)
    assert assembly.D_hat[0, 0] == pytest.approx(diag.kappa_hat ** 2)
    assert assembly.D_rho_hat[0, 0] == pytest.approx(1.0)

    k4 = np.mean(diag.residuals ** 4)
    assembly = assemble_d(order, result, diag, zero, 2, DMethod.LINGLI)
    assert assembly.Sigma_hat is None
    assert np.allclose(assembly.D_hat, 4 * (k4 - 1) ** 2 * np.eye(2))
    assert np.allclose(assembly.D_rho_hat, assembly.D_hat / diag.kappa_hat ** 2)

    with pytest.raises(LagTooLargeError):
        assemble_d(order, result, diag, result.derivs, diag.n, DMethod.GENERAL)
    with pytest.raises(ValueError):
        assemble_d(order, result, diag, result.derivs, 1, "other")


def test_portmanteau_scalar():

    from apgarch.portmanteau import CovarianceAssembly, DMethod, portmanteau_test

    assembly = CovarianceAssembly(np.zeros((1, 3)), None, np.array([[4.0]]), np.array([[4.0]]),
                                  DMethod.GENERAL, 2.0, 1.0, 0.0)

    report = portmanteau_test(assembly, [0.2], [0.2], 100)
    assert report.stat_r == pytest.approx(1.0)
    assert report.pvalue_r == pytest.approx(0.3173, abs=1e-4)
    assert report.bands[0][1] == pytest.approx(1.644854 * 2 / 10, abs=1e-6)
    assert report.bands[0][0] == -report.bands[0][1]
    assert not report.rejected()
    assert report.rejected(0.5)

    report = portmanteau_test(assembly, [0.0], [0.0], 100)
    assert report.stat_r == 0.0
    assert report.pvalue_r == 1.0
    assert report.pvalue_rho == 1.0

    data = report.to_dict()
    assert set(data) == {"m", "stat_r", "pvalue_r", "stat_rho", "pvalue_rho", "bands"}


def test_portmanteau_singular():

    from apgarch.portmanteau import CovarianceAssembly, DMethod, SingularDError, portmanteau_test

    assembly = CovarianceAssembly(np.zeros((2, 3)), None, np.zeros((2, 2)), np.zeros((2, 2)),
                                  DMethod.GENERAL, 0.0, float("inf"), 0.0)
    with pytest.raises(SingularDError) as exc:
        portmanteau_test(assembly, [0.1, 0.1], [0.1, 0.1], 100)
    assert exc.value.advisory is None

    assert "3(d+1)" in str(SingularDError(1e13, False))
    assert "11d+1" in str(SingularDError(1e13, True))


def test_run_tests(alt_series):

    from apgarch.experiments import dgp_preset
    from apgarch.qmle import evaluate_at
    from apgarch.portmanteau import run_tests, DMethod

    order, params = dgp_preset("alt", (1.0, 1.0))
    result = evaluate_at(order, params, alt_series)

    for method in DMethod.ALL:
        reports = run_tests(result, 6, 0.05, method)
        assert [report.m for report in reports] == list(range(1, 7))
        for report in reports:
            assert report.stat_r >= 0
            assert 0 <= report.pvalue_r <= 1
            assert 0 <= report.pvalue_rho <= 1
            assert len(report.bands) == report.m
            assert all(low == -high for low, high in report.bands)
        # Lags are shared across the maximum lags.
        assert reports[-1].r_hat[:3].tolist() == reports[2].r_hat.tolist()


def test_run_tests_permutation(alt_series):

    from apgarch.experiments import dgp_preset
    from apgarch.model import Params
    from apgarch.qmle import evaluate_at
    from apgarch.portmanteau import run_tests

    order, params = dgp_preset("alt", (1.0, 1.5))
    swap = [1, 0]

    def permute(mats):
        return mats[:, swap][:, :, swap]

    swapped = Params(params.omega[swap], permute(params.a_plus), permute(params.a_minus),
                     permute(params.b), params.rho, params.delta[swap])

    a = run_tests(evaluate_at(order, params, alt_series), 4)
    b = run_tests(evaluate_at(order, swapped, alt_series[:, swap]), 4)
    for ra, rb in zip(a, b):
        assert ra.stat_r == pytest.approx(rb.stat_r, rel=1e-6)


@pytest.mark.slow
def test_statistic_true_parameter():

    from apgarch.experiments import dgp_preset
    from apgarch.model import simulate, volatility_filter
    from apgarch.linalg import RngStream
    from apgarch.portmanteau import diagnostics_from_residuals, autocov_sum_sq
    from scipy.stats import kstest, chi2

    # Residuals filtered at the parameters that generated the data.
    order, params = dgp_preset("sym", (1.0, 1.0))
    stats = []
    for rep in range(500):
        series = simulate(order, params, 1000, 500, RngStream(2024, rep))
        path = volatility_filter(order, params, series)
        eta = np.einsum("tij,tj->ti", path.H_inv_sqrt, series)
        diag = diagnostics_from_residuals(eta)
        r, _ = autocov_sum_sq(diag, 3)
        stats.append(1000 * r @ r / diag.kappa_hat ** 2)

    assert kstest(stats, chi2(3).cdf).pvalue > 0.01


def test_chi2_tail():

    from apgarch.linalg import chi2_sf

    draws = np.random.default_rng(2024).chisquare(3, 200000)
    threshold = 7.814728
    assert chi2_sf(threshold, 3) == pytest.approx(np.mean(draws > threshold), abs=0.002)


@pytest.mark.slow
def test_general_lingli_agreement():

    from apgarch.experiments import dgp_preset
    from apgarch.model import simulate
    from apgarch.linalg import RngStream
    from apgarch.qmle import FitConfig, fit
    from apgarch.portmanteau import residual_diagnostics, assemble_d, DMethod

    order, params = dgp_preset("sym", (1.0, 1.0))
    series = simulate(order, params, 20000, 500, RngStream(31))
    result = fit(order, series, FitConfig(init_params=params))
    diag = residual_diagnostics(result, 2)

    general = assemble_d(order, result, diag, result.derivs, 3, DMethod.GENERAL).D_hat
    lingli = assemble_d(order, result, diag, result.derivs, 3, DMethod.LINGLI).D_hat
    assert np.allclose(np.diag(general), np.diag(lingli), rtol=0.1)
    assert np.allclose(general, lingli, rtol=0, atol=0.1 * np.max(np.diag(general)))
