"""Power-spectrum estimators and a tone-recovery steganalysis harness.

All estimators return power on the grid ``f_i = i / nfft``, ``i = 0..nfft/2``
(cycles per sample). AR-family spectra use the convention
``A(z) = 1 + a_1 z^-1 + ... + a_p z^-p``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.signal import lfilter

from .errors import NumericError, UsageError

METHODS = ("periodogram", "bt", "capon", "yw", "modcov")


@dataclass(frozen=True)
class EstimatorConfig:
    nfft: int = 1024
    order: int = 4
    bt_max_lag: int | None = None  # None -> floor(N / 5)
    capon_loading: float = 1e-8

    def max_lag(self, n: int) -> int:
        m = self.bt_max_lag if self.bt_max_lag is not None else n // 5
        return max(1, min(m, n - 1))


@dataclass(frozen=True)
class SpectrumEstimate:
    freqs: np.ndarray
    power: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["freq", "power"])
        for f, p in zip(self.freqs, self.power):
            writer.writerow([repr(float(f)), repr(float(p))])
        return buf.getvalue()


def _signal(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 2:
        raise UsageError(f"signal needs at least 2 samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise UsageError("signal contains non-finite values")
    return x


def _grid(nfft: int) -> np.ndarray:
    if nfft < 2 or nfft & (nfft - 1):
        raise UsageError(f"nfft must be a power of two >= 2, got {nfft}")
    return np.arange(nfft // 2 + 1) / nfft


def _dft_on_grid(seq: np.ndarray, nfft: int, start: int = 0) -> np.ndarray:
    """Exact DTFT of ``seq`` (first index ``start``) sampled at i/nfft.

    Sequences longer than nfft are folded modulo nfft first, which leaves the
    samples on the grid unchanged.
    """
    folded = np.zeros(nfft, dtype=seq.dtype)
    np.add.at(folded, (start + np.arange(seq.size)) % nfft, seq)
    return np.fft.rfft(folded) if np.isrealobj(folded) else np.fft.fft(folded)[: nfft // 2 + 1]


def autocorrelation(x, max_lag: int) -> np.ndarray:
    """Biased estimate r(m) = (1/N) sum_n x(n) x(n+m), m = 0..max_lag."""
    x = _signal(x)
    n = x.size
    if not 0 <= max_lag < n:
        raise UsageError(f"max_lag must be in 0..{n - 1}, got {max_lag}")
    size = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(x, size)
    r = np.fft.irfft(spec * np.conj(spec), size)[: max_lag + 1] / n
    return r


def periodogram(x, cfg: EstimatorConfig = EstimatorConfig()) -> SpectrumEstimate:
    x = _signal(x)
    freqs = _grid(cfg.nfft)
    spec = _dft_on_grid(x, cfg.nfft)
    return SpectrumEstimate(freqs, np.abs(spec) ** 2 / x.size, "periodogram")


def blackman_tukey(x, cfg: EstimatorConfig = EstimatorConfig()) -> SpectrumEstimate:
    """Bartlett-windowed autocorrelation transform; negatives clamped to 0."""
    x = _signal(x)
    freqs = _grid(cfg.nfft)
    m = cfg.max_lag(x.size)
    r = autocorrelation(x, m)
    w = 1.0 - np.arange(m + 1) / (m + 1)
    wr = w * r
    two_sided = np.concatenate([wr[:0:-1], wr])  # lags -m..m
    power = _dft_on_grid(two_sided, cfg.nfft, start=-m).real
    clamped = int(np.count_nonzero(power < 0))
    return SpectrumEstimate(freqs, np.maximum(power, 0.0), "bt",
                            {"max_lag": m, "clamped": clamped})


def levinson_durbin(r, order: int):
    """Solve the Yule-Walker equations for AR(order).

    Returns ``(a, sigma2, reflection)`` with ``a = [a_1..a_p]``.
    """
    r = np.asarray(r, dtype=np.float64)
    if r[0] <= 0:
        raise NumericError("degenerate signal: r(0) = 0")
    a = np.zeros(0)
    err = r[0]
    refl = np.zeros(order)
    for m in range(1, order + 1):
        acc = r[m] + np.dot(a, r[m - 1:0:-1])
        k = -acc / err
        a = np.concatenate([a + k * a[::-1], [k]])
        err *= 1.0 - k * k
        refl[m - 1] = k
        if not np.isfinite(err) or err <= 0:
            if not np.isfinite(err):
                raise NumericError(f"Levinson recursion diverged at order {m}")
            err = 0.0
            refl = refl[:m]
            a = np.concatenate([a, np.zeros(order - m)])
            break
    return a, float(err), refl


def _ar_spectrum(a: np.ndarray, sigma2: float, nfft: int, scale: float) -> np.ndarray:
    # keep a perfectly predictable signal from producing an all-zero spectrum
    sigma2 = max(sigma2, 1e-12 * scale)
    denom = np.abs(_dft_on_grid(np.concatenate([[1.0], a]), nfft)) ** 2
    with np.errstate(divide="ignore"):
        power = sigma2 / denom
    power[~np.isfinite(power)] = np.finfo(np.float64).max
    return power


def _check_order(p: int, n: int) -> None:
    if not 1 <= p < n / 2:
        raise UsageError(f"order must satisfy 1 <= p < N/2 (N={n}), got {p}")


def yule_walker(x, cfg: EstimatorConfig = EstimatorConfig()) -> SpectrumEstimate:
    x = _signal(x)
    freqs = _grid(cfg.nfft)
    _check_order(cfg.order, x.size)
    r = autocorrelation(x, cfg.order)
    a, sigma2, refl = levinson_durbin(r, cfg.order)
    power = _ar_spectrum(a, sigma2, cfg.nfft, r[0])
    return SpectrumEstimate(freqs, power, "yw",
                            {"a": a, "sigma2": sigma2, "reflection": refl})


def modcov_coefficients(x, order: int) -> tuple[np.ndarray, float, float]:
    """Forward-backward least-squares AR fit (modified covariance)."""
    x = _signal(x)
    n, p = x.size, order
    if n <= 2 * p:
        raise UsageError(f"modified covariance needs N > 2p (N={n}, p={p})")
    if not np.any(x):
        raise NumericError("degenerate signal: all samples are zero")
    idx = np.arange(p, n)
    lags = np.arange(1, p + 1)
    fwd_rows = x[idx[:, None] - lags]          # x(n-k)
    fwd_rhs = -x[idx]
    bwd_rows = x[idx[:, None] - p + lags]      # x(n-p+k)
    bwd_rhs = -x[idx - p]
    rows = np.vstack([fwd_rows, bwd_rows])
    rhs = np.concatenate([fwd_rhs, bwd_rhs])
    # Rank-deficient systems (a noiseless sinusoid with p > 2) take the
    # minimum-norm solution; only a numerically empty system is an error.
    a, _, rank, sv = np.linalg.lstsq(rows, rhs, rcond=None)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if rank == 0 or not np.all(np.isfinite(a)):
        raise NumericError(f"singular normal equations (condition estimate {cond:.3g})")
    resid = rows @ a - rhs
    sigma2 = float(resid @ resid) / (2 * (n - p))
    return a, sigma2, cond


def modified_covariance(x, cfg: EstimatorConfig = EstimatorConfig()) -> SpectrumEstimate:
    x = _signal(x)
    freqs = _grid(cfg.nfft)
    _check_order(cfg.order, x.size)
    a, sigma2, cond = modcov_coefficients(x, cfg.order)
    power = _ar_spectrum(a, sigma2, cfg.nfft, float(np.mean(x * x)))
    return SpectrumEstimate(freqs, power, "modcov", {"a": a, "sigma2": sigma2, "cond": cond})


def capon(x, cfg: EstimatorConfig = EstimatorConfig()) -> SpectrumEstimate:
    """Minimum-variance spectrum (p+1) / (e^H R^-1 e) from a Toeplitz R."""
    x = _signal(x)
    freqs = _grid(cfg.nfft)
    _check_order(cfg.order, x.size)
    r = autocorrelation(x, cfg.order)
    R = linalg.toeplitz(r)
    loaded = False
    try:
        chol = linalg.cho_factor(R)
    except linalg.LinAlgError:
        R = R + cfg.capon_loading * r[0] * np.eye(R.shape[0])
        loaded = True
        try:
            chol = linalg.cho_factor(R)
        except linalg.LinAlgError:
            raise NumericError("autocorrelation matrix singular after diagonal loading") from None
    Q = linalg.cho_solve(chol, np.eye(R.shape[0]))
    # e^H Q e = sum_d c_d e^{-j 2 pi f d}, c_d the diagonal sums of Q
    p1 = R.shape[0]
    diag = np.array([np.trace(Q, offset=d) for d in range(-(p1 - 1), p1)])
    quad = _dft_on_grid(diag, cfg.nfft, start=-(p1 - 1)).real
    if np.any(quad <= 0):
        raise NumericError("non-positive Capon denominator")
    return SpectrumEstimate(freqs, p1 / quad, "capon", {"loaded": loaded})


ESTIMATORS = {
    "periodogram": periodogram,
    "bt": blackman_tukey,
    "capon": capon,
    "yw": yule_walker,
    "modcov": modified_covariance,
}


def estimate(x, method: str, cfg: EstimatorConfig = EstimatorConfig()) -> SpectrumEstimate:
    try:
        fn = ESTIMATORS[method]
    except KeyError:
        raise UsageError(f"unknown method {method!r}; choose from {', '.join(METHODS)}") from None
    return fn(x, cfg)


def peak_frequency(s: SpectrumEstimate) -> float:
    """Frequency of the tallest spectral peak away from DC.

    Candidates are bins i >= 1 that are local maxima (no lower than either
    neighbour, bin 0 included as the left neighbour of bin 1). A lobe that
    falls away monotonically from DC therefore never wins. Ties go to the
    lowest frequency. With no local maximum, the largest non-DC bin is used.
    """
    power = np.asarray(s.power, dtype=np.float64)
    if power.size < 2 or not np.any(power[1:] > 0):
        raise NumericError("no peak: spectrum is zero away from DC")
    left = power[1:] >= power[:-1]
    right = np.append(power[1:-1] >= power[2:], True)
    cand = np.flatnonzero(left & right) + 1
    if cand.size == 0:
        cand = np.arange(1, power.size)
    best = cand[int(np.argmax(power[cand]))]
    return float(s.freqs[best])


# --- harness -----------------------------------------------------------------

def tone_in_white_noise(n: int, sigma: float, rng: np.random.Generator,
                        omega_over_pi: float = 0.4) -> np.ndarray:
    t = np.arange(n)
    return np.cos(np.pi * omega_over_pi * t) + sigma * rng.standard_normal(n)


def ar1_noise(n: int, a: float, power: float, rng: np.random.Generator,
              burn_in: int = 500) -> np.ndarray:
    """Stationary x(n) = a x(n-1) + w(n) scaled to the given variance."""
    w_sigma = np.sqrt(power * (1.0 - a * a))
    w = w_sigma * rng.standard_normal(n + burn_in)
    return lfilter([1.0], [1.0, -a], w)[burn_in:]


def tone_in_colored_noise(n: int, a: float, snr_db: float, rng: np.random.Generator,
                          omega_over_pi: float = 0.4) -> np.ndarray:
    tone = np.cos(np.pi * omega_over_pi * np.arange(n))
    noise_power = 0.5 / 10.0 ** (snr_db / 10.0)
    return tone + ar1_noise(n, a, noise_power, rng)


def recovery_rate(make_signal, method: str, target: float, tol: float,
                  trials: int = 100, seed: int = 0,
                  cfg: EstimatorConfig = EstimatorConfig()) -> int:
    """How many seeded trials put the peak within ``tol`` of ``target``.

    Trial ``i`` draws from ``default_rng(seed + i)``.
    """
    hits = 0
    for i in range(trials):
        x = make_signal(np.random.default_rng(seed + i))
        f = peak_frequency(estimate(x, method, cfg))
        hits += abs(f - target) <= tol
    return hits


@dataclass(frozen=True)
class VarianceReport:
    freqs: np.ndarray
    var_periodogram: np.ndarray
    var_blackman_tukey: np.ndarray

    @property
    def bt_lower_fraction(self) -> float:
        return float(np.mean(self.var_blackman_tukey < self.var_periodogram))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["bin_freq", "var_periodogram", "var_blackman_tukey"])
        for row in zip(self.freqs, self.var_periodogram, self.var_blackman_tukey):
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def compare_variance(trials: int = 100, n: int = 256, max_lag: int = 32,
                     nfft: int = 512, seed: int = 0) -> VarianceReport:
    """Per-bin sample variance of periodogram vs Blackman-Tukey on white noise."""
    cfg = EstimatorConfig(nfft=nfft, bt_max_lag=max_lag)
    per, bt = [], []
    for i in range(trials):
        x = np.random.default_rng(seed + i).standard_normal(n)
        per.append(periodogram(x, cfg).power)
        bt.append(blackman_tukey(x, cfg).power)
    return VarianceReport(_grid(nfft), np.var(per, axis=0, ddof=1), np.var(bt, axis=0, ddof=1))
