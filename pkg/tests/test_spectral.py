import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg, signal

from oracles import direct_autocorr, direct_dtft
from stegkit import spectral
from stegkit.errors import NumericError, UsageError
from stegkit.spectral import EstimatorConfig

SMALL = EstimatorConfig(nfft=64, order=3, bt_max_lag=5)


@pytest.fixture
def x(rng):
    return rng.standard_normal(40)


def test_grid():
    s = spectral.periodogram(np.ones(4), EstimatorConfig(nfft=8))
    assert s.freqs.tolist() == [0, 0.125, 0.25, 0.375, 0.5]
    with pytest.raises(UsageError):
        spectral.periodogram(np.ones(4), EstimatorConfig(nfft=12))


def test_periodogram_matches_direct_sum(x):
    s = spectral.periodogram(x, SMALL)
    ref = np.abs(direct_dtft(x, s.freqs)) ** 2 / x.size
    assert np.allclose(s.power, ref, rtol=1e-10, atol=1e-12)


def test_periodogram_folds_long_signals(rng):
    x = rng.standard_normal(100)
    s = spectral.periodogram(x, EstimatorConfig(nfft=16))
    ref = np.abs(direct_dtft(x, s.freqs)) ** 2 / x.size
    assert np.allclose(s.power, ref)


def test_autocorrelation_matches_direct_sum(x):
    r = spectral.autocorrelation(x, 7)
    assert np.allclose(r, [direct_autocorr(x, m) for m in range(8)])


def test_blackman_tukey_matches_direct_sum(x):
    s = spectral.blackman_tukey(x, SMALL)
    m = 5
    lags = np.arange(-m, m + 1)
    w = 1 - np.abs(lags) / (m + 1)
    r = np.array([direct_autocorr(x, abs(k)) for k in lags])
    ref = np.maximum(direct_dtft(w * r, s.freqs, lags).real, 0)
    assert np.allclose(s.power, ref)
    assert s.diagnostics["max_lag"] == 5
    assert s.diagnostics["clamped"] == 0  # Bartlett window keeps BT non-negative


def test_bt_default_lag():
    assert EstimatorConfig().max_lag(1024) == 204
    assert EstimatorConfig().max_lag(3) == 1
    assert EstimatorConfig(bt_max_lag=100).max_lag(10) == 9


@pytest.mark.parametrize("p", [1, 2, 5])
def test_levinson_matches_toeplitz_solve(x, p):
    r = spectral.autocorrelation(x, p)
    a, sigma2, refl = spectral.levinson_durbin(r, p)
    ref = linalg.solve_toeplitz(r[:p], -r[1:p + 1])
    assert np.allclose(a, ref)
    assert sigma2 == pytest.approx(r[0] + np.dot(ref, r[1:p + 1]))
    assert refl[-1] == pytest.approx(a[-1])
    assert np.all(np.abs(refl) < 1)


def test_levinson_degenerate():
    with pytest.raises(NumericError):
        spectral.levinson_durbin(np.zeros(3), 2)


def test_yule_walker_recovers_ar1(rng):
    x = signal.lfilter([1], [1, -0.5], rng.standard_normal(20000))
    s = spectral.yule_walker(x, EstimatorConfig(order=1))
    assert s.diagnostics["a"][0] == pytest.approx(-0.5, abs=0.02)
    assert s.diagnostics["sigma2"] == pytest.approx(1.0, abs=0.05)


def test_ar_spectrum_formula(x):
    s = spectral.yule_walker(x, SMALL)
    a, sigma2 = s.diagnostics["a"], s.diagnostics["sigma2"]
    ref = sigma2 / np.abs(direct_dtft(np.r_[1.0, a], s.freqs)) ** 2
    assert np.allclose(s.power, ref)


def test_modcov_matches_normal_equations(x):
    p = 3
    n = x.size
    rows, rhs = [], []
    for i in range(p, n):
        rows.append([x[i - k] for k in range(1, p + 1)])
        rhs.append(-x[i])
        rows.append([x[i - p + k] for k in range(1, p + 1)])
        rhs.append(-x[i - p])
    A, b = np.array(rows), np.array(rhs)
    ref = np.linalg.solve(A.T @ A, A.T @ b)
    a, sigma2, cond = spectral.modcov_coefficients(x, p)
    assert np.allclose(a, ref)
    assert np.isfinite(cond)


def test_modcov_noiseless_sinusoid_roots():
    n = np.arange(256)
    x = np.cos(0.4 * np.pi * n + 0.3)
    a, _, _ = spectral.modcov_coefficients(x, 2)
    angles = np.sort(np.abs(np.angle(np.roots(np.r_[1.0, a]))))
    assert np.allclose(angles, [0.4 * np.pi] * 2, atol=1e-3)


def test_modcov_degenerate():
    with pytest.raises(NumericError):
        spectral.modified_covariance(np.zeros(64))


def test_capon_matches_direct_inverse(x):
    s = spectral.capon(x, SMALL)
    p1 = SMALL.order + 1
    R = linalg.toeplitz([direct_autocorr(x, m) for m in range(p1)])
    Rinv = np.linalg.inv(R)
    ref = []
    for f in s.freqs:
        e = np.exp(2j * np.pi * f * np.arange(p1))
        ref.append(p1 / np.real(np.conj(e) @ Rinv @ e))
    assert np.allclose(s.power, ref)


def test_capon_flat_for_white_noise(rng):
    x = rng.standard_normal(20000)
    s = spectral.capon(x, EstimatorConfig(order=4, nfft=64))
    assert np.allclose(s.power, 1.0, atol=0.1)


def test_capon_sinusoid_peak():
    s = spectral.capon(np.cos(0.5 * np.pi * np.arange(64)), EstimatorConfig(order=6))
    assert not s.diagnostics["loaded"]
    assert spectral.peak_frequency(s) == pytest.approx(0.25, abs=2 / 1024)


def test_capon_falls_back_to_diagonal_loading(monkeypatch, x):
    real = linalg.cho_factor
    calls = []

    def flaky(a, *args, **kw):
        calls.append(a.copy())
        if len(calls) == 1:
            raise linalg.LinAlgError("not positive definite")
        return real(a, *args, **kw)

    monkeypatch.setattr(spectral.linalg, "cho_factor", flaky)
    s = spectral.capon(x, SMALL)
    assert s.diagnostics["loaded"]
    r0 = calls[0][0, 0]
    assert np.allclose(np.diag(calls[1] - calls[0]), 1e-8 * r0)


def test_capon_singular_after_loading(monkeypatch, x):
    def broken(*a, **kw):
        raise linalg.LinAlgError("nope")

    monkeypatch.setattr(spectral.linalg, "cho_factor", broken)
    with pytest.raises(NumericError, match="diagonal loading"):
        spectral.capon(x, SMALL)


@pytest.mark.parametrize("method", spectral.METHODS)
@pytest.mark.parametrize("f0", [0.06, 0.13, 0.2, 0.31, 0.44])
def test_noiseless_peaks_within_one_bin(method, f0):
    x = np.cos(2 * np.pi * f0 * np.arange(512) + 0.7)
    s = spectral.estimate(x, method)
    assert abs(spectral.peak_frequency(s) - f0) <= 1 / 1024 + 1e-12


def test_peak_rule():
    def est(power):
        p = np.asarray(power, float)
        return spectral.SpectrumEstimate(np.arange(p.size) / 10, p, "x")

    # falling DC lobe never wins over a smaller interior peak
    assert spectral.peak_frequency(est([9, 8, 1, 3, 1])) == pytest.approx(0.3)
    # ties break to the lowest frequency
    assert spectral.peak_frequency(est([0, 5, 0, 5, 0])) == pytest.approx(0.1)
    # the top bin counts when it rises
    assert spectral.peak_frequency(est([1, 0, 0, 2])) == pytest.approx(0.3)
    with pytest.raises(NumericError):
        spectral.peak_frequency(est([3, 0, 0]))


@pytest.mark.parametrize("bad", [np.zeros(1), [1.0, np.nan, 2.0]])
def test_bad_signals(bad):
    with pytest.raises(UsageError):
        spectral.periodogram(bad)


def test_order_bounds():
    with pytest.raises(UsageError):
        spectral.yule_walker(np.ones(8), EstimatorConfig(order=4))
    with pytest.raises(UsageError):
        spectral.estimate(np.ones(8), "music")


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), method=st.sampled_from(spectral.METHODS))
def test_estimates_non_negative_and_finite(seed, method):
    x = np.random.default_rng(seed).standard_normal(128)
    s = spectral.estimate(x, method, EstimatorConfig(nfft=128))
    assert s.power.shape == (65,)
    assert np.all(s.power >= 0) and np.all(np.isfinite(s.power))


def test_csv_outputs():
    s = spectral.periodogram(np.ones(4), EstimatorConfig(nfft=4))
    lines = s.to_csv().splitlines()
    assert lines[0] == "freq,power" and len(lines) == 4
    rep = spectral.compare_variance(trials=5, n=64, max_lag=8, nfft=32)
    assert rep.to_csv().splitlines()[0] == "bin_freq,var_periodogram,var_blackman_tukey"


def test_noise_power_scaling(rng):
    noise = spectral.ar1_noise(200000, 0.9, 0.5, rng)
    assert np.var(noise) == pytest.approx(0.5, rel=0.05)
