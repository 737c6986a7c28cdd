"""Random-walk state-space models over an estimated trend series.

The measurement variances are either supplied per wave from the first-stage
sampling covariance ("constrained" mode) or estimated as one free parameter
("free" mode).  Initialization is diffuse and handled exactly: the first
observation (first two for the stochastic-drift variant) is absorbed with
gain one and zero posterior variance and contributes no likelihood term, so
the Gaussian prediction-error likelihood runs over the remaining waves only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar, minimize
from scipy.stats import chi2, norm

from .errors import (
    DegenerateVarianceError,
    InvalidArgumentError,
    InvalidSpecError,
)
from .estimator import TrendSeries, hessian_fd

__all__ = [
    "VARIANTS",
    "FilterModel",
    "FilterOutput",
    "run_filter",
    "fit_filter",
    "FilterFit",
    "Forecast",
    "forecast",
    "bic",
    "DiagnosticsReport",
    "diagnostics",
]

VARIANTS = ("zero_drift", "const_drift", "stoch_drift")
MODES = ("constrained", "free")

LOG2PI = math.log(2.0 * math.pi)
# parameters whose log-scale estimate sinks to this floor sit on the zero boundary
_LOG_FLOOR = math.log(1e-8)


@dataclass
class FilterModel:
    """State-space variant plus its parameters.

    zero_drift    beta_k = beta_{k-1} + eta_k
    const_drift   beta_k = beta_{k-1} + nu + eta_k, nu a fixed parameter
    stoch_drift   beta_k = beta_{k-1} + nu_{k-1} + eta_k, nu_k = nu_{k-1} + xi_k;
                  2-dimensional state (beta, nu), transition [[1,1],[0,1]],
                  process covariance diag(sigma_eta^2, sigma_xi^2)
    """

    variant: str = "zero_drift"
    sigma_eta: float = 0.0
    nu: float = 0.0
    sigma_xi: float = 0.0
    mode: str = "constrained"
    sigma_eps: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidSpecError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.mode not in MODES:
            raise InvalidSpecError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.sigma_eta < 0 or self.sigma_xi < 0:
            raise InvalidSpecError("standard deviations must be nonnegative")
        if self.mode == "free" and self.sigma_eps is not None and self.sigma_eps < 0:
            raise InvalidSpecError("sigma_eps must be nonnegative")

    @property
    def n_diffuse(self) -> int:
        return 2 if self.variant == "stoch_drift" else 1

    @property
    def n_params(self) -> int:
        """Count of freely estimated parameters (constrained-mode noise not counted)."""
        count = {"zero_drift": 1, "const_drift": 2, "stoch_drift": 2}[self.variant]
        if self.mode == "free":
            count += 1
        return count

    def free_names(self) -> list:
        names = ["sigma_eta"]
        if self.variant == "const_drift":
            names.append("nu")
        elif self.variant == "stoch_drift":
            names.append("sigma_xi")
        if self.mode == "free":
            names.append("sigma_eps")
        return names


@dataclass
class FilterOutput:
    """Per-wave filter quantities; diffuse steps carry infinite prior variance."""

    prior_mean: np.ndarray
    prior_var: np.ndarray
    innovation: np.ndarray
    innovation_var: np.ndarray
    gain: np.ndarray
    post_mean: np.ndarray
    post_var: np.ndarray
    loglik: float
    n_diffuse: int
    drift_mean: np.ndarray | None = None
    final_state_cov: np.ndarray | None = None

    @property
    def std_residuals(self) -> np.ndarray:
        """Standardized innovations over the non-diffuse waves."""
        d = self.n_diffuse
        return self.innovation[d:] / np.sqrt(self.innovation_var[d:])


def _meas_var(series_len: int, series_var: np.ndarray | None, model: FilterModel) -> np.ndarray:
    if model.mode == "constrained":
        if series_var is None:
            raise InvalidArgumentError("constrained mode requires per-wave measurement variances")
        var = np.asarray(series_var, dtype=float)
        if var.shape != (series_len,):
            raise InvalidArgumentError("measurement variance length mismatch")
        if np.any(var < 0):
            raise InvalidArgumentError("measurement variances must be nonnegative")
        return var
    if model.sigma_eps is None:
        raise InvalidArgumentError("free mode requires sigma_eps")
    return np.full(series_len, model.sigma_eps**2)


def _as_series(series) -> tuple[np.ndarray, np.ndarray | None]:
    if isinstance(series, TrendSeries):
        return series.beta, series.var_diag
    beta = np.asarray(series, dtype=float)
    return beta, None


def run_filter(series, model: FilterModel, meas_var=None) -> FilterOutput:
    """Run the constrained filter over an estimated trend series.

    ``series`` is a TrendSeries (its diagonal supplies the constrained
    measurement variances) or a plain vector, in which case ``meas_var``
    supplies them.  Free mode ignores both in favor of ``model.sigma_eps``.
    """
    beta_hat, series_var = _as_series(series)
    if meas_var is not None:
        series_var = np.asarray(meas_var, dtype=float)
    T = beta_hat.size
    if T < 2:
        raise InvalidArgumentError("need at least two waves")
    h = _meas_var(T, series_var, model)
    if model.variant == "stoch_drift":
        if T < 3:
            raise InvalidArgumentError("stochastic drift needs at least three waves")
        return _run_filter_2state(beta_hat, h, model)
    return _run_filter_scalar(beta_hat, h, model)


def _run_filter_scalar(y: np.ndarray, h: np.ndarray, model: FilterModel) -> FilterOutput:
    T = y.size
    drift = model.nu if model.variant == "const_drift" else 0.0
    q = model.sigma_eta**2

    prior_mean = np.zeros(T)
    prior_var = np.zeros(T)
    innovation = np.zeros(T)
    innovation_var = np.zeros(T)
    gain = np.zeros(T)
    post_mean = np.zeros(T)
    post_var = np.zeros(T)

    # diffuse first step: gain one, posterior pinned to the observation
    prior_mean[0] = drift
    prior_var[0] = np.inf
    innovation[0] = y[0] - prior_mean[0]
    innovation_var[0] = np.inf
    gain[0] = 1.0
    post_mean[0] = y[0]
    post_var[0] = 0.0

    loglik = 0.0
    for k in range(1, T):
        prior_mean[k] = post_mean[k - 1] + drift
        prior_var[k] = post_var[k - 1] + q
        innovation[k] = y[k] - prior_mean[k]
        F = prior_var[k] + h[k]
        if F <= 0.0:
            raise DegenerateVarianceError(f"innovation variance is {F} at wave {k + 1}")
        innovation_var[k] = F
        gain[k] = prior_var[k] / F
        post_mean[k] = prior_mean[k] + gain[k] * innovation[k]
        post_var[k] = (1.0 - gain[k]) * prior_var[k]
        loglik -= 0.5 * (LOG2PI + math.log(F) + innovation[k] ** 2 / F)

    return FilterOutput(
        prior_mean, prior_var, innovation, innovation_var, gain,
        post_mean, post_var, float(loglik), n_diffuse=1,
    )


def _run_filter_2state(y: np.ndarray, h: np.ndarray, model: FilterModel) -> FilterOutput:
    T = y.size
    q = np.diag([model.sigma_eta**2, model.sigma_xi**2])
    trans = np.array([[1.0, 1.0], [0.0, 1.0]])

    prior_mean = np.zeros(T)
    prior_var = np.full(T, np.inf)
    innovation = np.zeros(T)
    innovation_var = np.full(T, np.inf)
    gain = np.zeros(T)
    post_mean = np.zeros(T)
    post_var = np.zeros(T)
    drift_mean = np.zeros(T)

    # two diffuse steps: the first two observations pin (beta, nu) exactly,
    # leaving only the transition noise accumulated between them
    innovation[0] = y[0]
    gain[0] = 1.0
    post_mean[0] = y[0]
    post_var[0] = 0.0

    m = np.array([y[1], y[1] - y[0]])
    P = np.array([[0.0, 0.0], [0.0, model.sigma_eta**2 + model.sigma_xi**2]])
    innovation[1] = y[1] - y[0]
    gain[1] = 1.0
    post_mean[1] = m[0]
    post_var[1] = P[0, 0]
    drift_mean[0] = 0.0
    drift_mean[1] = m[1]

    loglik = 0.0
    for k in range(2, T):
        m = trans @ m
        P = trans @ P @ trans.T + q
        P = 0.5 * (P + P.T)
        prior_mean[k] = m[0]
        prior_var[k] = P[0, 0]
        innovation[k] = y[k] - m[0]
        F = P[0, 0] + h[k]
        if F <= 0.0:
            raise DegenerateVarianceError(f"innovation variance is {F} at wave {k + 1}")
        innovation_var[k] = F
        K = P[:, 0] / F
        gain[k] = K[0]
        m = m + K * innovation[k]
        P = P - np.outer(K, P[0, :])
        P = 0.5 * (P + P.T)
        post_mean[k] = m[0]
        post_var[k] = P[0, 0]
        drift_mean[k] = m[1]
        loglik -= 0.5 * (LOG2PI + math.log(F) + innovation[k] ** 2 / F)

    return FilterOutput(
        prior_mean, prior_var, innovation, innovation_var, gain,
        post_mean, post_var, float(loglik), n_diffuse=2, drift_mean=drift_mean,
        final_state_cov=P.copy(),
    )


# ---------------------------------------------------------------------------
# maximum likelihood over the process parameters


@dataclass
class FilterFit:
    """Fitted filter with confidence intervals and boundary/CI flags."""

    model: FilterModel
    output: FilterOutput
    loglik: float
    converged: bool
    ci: dict = field(default_factory=dict)
    boundary: list = field(default_factory=list)
    no_ci: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def _pack_free(model: FilterModel) -> tuple[list, np.ndarray]:
    names = model.free_names()
    vals = []
    for name in names:
        v = getattr(model, name)
        if name == "nu":
            vals.append(v)
        else:
            vals.append(math.log(v) if v and v > 0 else _LOG_FLOOR)
    return names, np.asarray(vals, dtype=float)


def _unpack_free(model: FilterModel, names, x) -> FilterModel:
    kwargs = {
        "variant": model.variant,
        "mode": model.mode,
        "sigma_eta": model.sigma_eta,
        "nu": model.nu,
        "sigma_xi": model.sigma_xi,
        "sigma_eps": model.sigma_eps,
    }
    for name, v in zip(names, x):
        kwargs[name] = v if name == "nu" else math.exp(v)
    return FilterModel(**kwargs)


def fit_filter(
    series,
    variant: str = "zero_drift",
    mode: str = "constrained",
    meas_var=None,
    level: float = 0.90,
) -> FilterFit:
    """ML estimation of the process parameters by prediction-error decomposition.

    Variance parameters are optimized on the log-standard-deviation scale,
    so their confidence intervals are delta-method normal in logs and
    asymmetric on the natural scale.  Estimates that sink to the zero
    boundary are reported as 0 with a boundary flag and no interval, and a
    numerically singular information matrix suppresses intervals for the
    affected parameters.
    """
    beta_hat, series_var = _as_series(series)
    if meas_var is not None:
        series_var = np.asarray(meas_var, dtype=float)
    T = beta_hat.size
    if T < 3:
        raise InvalidArgumentError("need at least three waves to estimate parameters")

    scale = max(float(np.std(np.diff(beta_hat))), 1e-6)
    proto = FilterModel(
        variant=variant,
        mode=mode,
        sigma_eta=scale,
        nu=float(np.mean(np.diff(beta_hat))) if variant == "const_drift" else 0.0,
        sigma_xi=0.5 * scale if variant == "stoch_drift" else 0.0,
        sigma_eps=scale if mode == "free" else None,
    )
    names, x0 = _pack_free(proto)

    def nll(x) -> float:
        # clip to the representable log-sd range; the upper cap only guards
        # Nelder-Mead expansion steps from overflowing exp
        x = np.clip(np.atleast_1d(x), _LOG_FLOOR, 50.0)
        m = _unpack_free(proto, names, x)
        try:
            out = run_filter(beta_hat, m, meas_var=series_var)
        except DegenerateVarianceError:
            return 1e12
        return -out.loglik if np.isfinite(out.loglik) else 1e12

    converged = True
    hi = math.log(max(100.0 * scale, 10.0 * float(np.std(beta_hat)), 1e-3))
    if len(names) == 1:
        res = minimize_scalar(nll, bounds=(_LOG_FLOOR, hi), method="bounded",
                              options={"xatol": 1e-10})
        x_hat = np.array([res.x])
        converged = bool(res.success)
    else:
        best = None
        for jitter in (0.0, 1.0, -1.0):
            res = minimize(
                nll, x0 + jitter, method="Nelder-Mead",
                options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000},
            )
            if best is None or res.fun < best.fun:
                best = res
        res = best
        x_hat = np.asarray(res.x, dtype=float)
        converged = bool(res.success)
    x_hat = np.clip(x_hat, _LOG_FLOOR, 50.0)

    # a variance parameter sits on the zero boundary when pushing it to the
    # floor costs no likelihood: the optimizer then stopped inside a flat
    # shelf rather than at an interior optimum
    f_hat = nll(x_hat)
    boundary = []
    for i, name in enumerate(names):
        if name == "nu":
            continue
        probe = x_hat.copy()
        probe[i] = _LOG_FLOOR
        if nll(probe) <= f_hat + 1e-7 * max(1.0, abs(f_hat)):
            boundary.append(name)
            x_hat[i] = _LOG_FLOOR

    model = _unpack_free(proto, names, x_hat)
    for name in boundary:
        setattr(model, name, 0.0)
    output = run_filter(beta_hat, model, meas_var=series_var)

    ci: dict = {}
    no_ci: list = list(boundary)
    warnings: list = []
    freeidx = [i for i, name in enumerate(names) if name not in boundary]
    if freeidx:
        def ll_sub(xsub):
            x = x_hat.copy()
            x[freeidx] = xsub
            return -nll(x)

        H = hessian_fd(ll_sub, x_hat[freeidx], step=1e-4)
        info = -H
        eig = np.linalg.eigvalsh(info)
        z = norm.ppf(0.5 + level / 2.0)
        if eig.min() <= 1e-10 * max(eig.max(), 1.0):
            warnings.append("zero eigenvalue in the information matrix; intervals suppressed")
            no_ci.extend(names[i] for i in freeidx)
        else:
            cov = np.linalg.inv(info)
            for pos, i in enumerate(freeidx):
                se = math.sqrt(max(cov[pos, pos], 0.0))
                name = names[i]
                if name == "nu":
                    ci[name] = (x_hat[i] - z * se, x_hat[i] + z * se)
                else:
                    ci[name] = (math.exp(x_hat[i] - z * se), math.exp(x_hat[i] + z * se))

    return FilterFit(
        model=model,
        output=output,
        loglik=output.loglik,
        converged=converged,
        ci=ci,
        boundary=boundary,
        no_ci=sorted(set(no_ci)),
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# forecasting


@dataclass
class Forecast:
    """Multi-step forecast on the log scale with exponentiated point path."""

    horizons: np.ndarray
    mean_log: np.ndarray
    variance: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    mean_hazard_scale: np.ndarray
    level: float


def forecast(output: FilterOutput, model: FilterModel, horizon: int, level: float = 0.90) -> Forecast:
    """Forecast ``horizon`` steps past the last filtered wave."""
    if horizon < 1:
        raise InvalidArgumentError(f"horizon must be >= 1, got {horizon}")
    z = norm.ppf(0.5 + level / 2.0)
    hs = np.arange(1, horizon + 1)
    q_eta = model.sigma_eta**2

    if model.variant == "stoch_drift":
        if output.drift_mean is None or output.final_state_cov is None:
            raise InvalidArgumentError("filter output lacks the drift state")
        trans = np.array([[1.0, 1.0], [0.0, 1.0]])
        q = np.diag([q_eta, model.sigma_xi**2])
        m = np.array([output.post_mean[-1], output.drift_mean[-1]])
        P = output.final_state_cov.copy()
        mean = np.zeros(horizon)
        var = np.zeros(horizon)
        for i in range(horizon):
            m = trans @ m
            P = trans @ P @ trans.T + q
            mean[i] = m[0]
            var[i] = P[0, 0]
    else:
        drift = model.nu if model.variant == "const_drift" else 0.0
        mean = output.post_mean[-1] + drift * hs
        var = output.post_var[-1] + hs * q_eta

    lower = mean - z * np.sqrt(var)
    upper = mean + z * np.sqrt(var)
    return Forecast(hs, mean, var, lower, upper, np.exp(mean), level)


# ---------------------------------------------------------------------------
# diagnostics


def bic(loglik: float, n_params: int, n_waves: int) -> float:
    """Bayesian information criterion, -2 loglik + #params ln T."""
    return -2.0 * loglik + n_params * math.log(n_waves)


@dataclass
class DiagnosticsReport:
    loglik: float
    bic: float
    n_params: int
    ljung_box: float | None
    ljung_box_lags: int
    ljung_box_pvalue: float | None
    bowman_shenton: float | None
    bowman_shenton_pvalue: float | None
    r1: float | None
    r2: float | None
    notes: list = field(default_factory=list)


def _autocorr(x: np.ndarray, lag: int) -> float:
    xc = x - x.mean()
    denom = float(np.sum(xc**2))
    if denom == 0.0:
        return 0.0
    return float(np.sum(xc[lag:] * xc[:-lag]) / denom)


def diagnostics(output: FilterOutput, model: FilterModel, n_waves: int, lags: int = 4) -> DiagnosticsReport:
    """Model-fit report: BIC, Ljung-Box Q(m), Bowman-Shenton, r(1), r(2).

    All residual statistics use the standardized innovations over the
    non-diffuse waves.  With residuals too few for Q(lags) the statistic is
    omitted with a notice rather than extrapolated.
    """
    notes: list = []
    resid = output.std_residuals
    tp = resid.size
    value_bic = bic(output.loglik, model.n_params, n_waves)

    r1 = _autocorr(resid, 1) if tp >= 2 else None
    r2 = _autocorr(resid, 2) if tp >= 3 else None

    lb = lb_p = None
    if tp >= lags + 1:
        q = 0.0
        for tau in range(1, lags + 1):
            q += _autocorr(resid, tau) ** 2 / (tp - tau)
        lb = tp * (tp + 2) * q
        lb_p = float(chi2.sf(lb, lags))
    else:
        notes.append(f"Ljung-Box Q({lags}) omitted: only {tp} residuals")

    bs = bs_p = None
    if tp >= 3:
        xc = resid - resid.mean()
        m2 = float(np.mean(xc**2))
        if m2 == 0.0:
            bs = 0.0
            bs_p = 1.0
            notes.append("Bowman-Shenton degenerate: residuals have zero variance")
        else:
            skew = float(np.mean(xc**3)) / m2**1.5
            exkurt = float(np.mean(xc**4)) / m2**2 - 3.0
            bs = tp * (skew**2 / 6.0 + exkurt**2 / 24.0)
            bs_p = float(chi2.sf(bs, 2))
    else:
        notes.append("Bowman-Shenton omitted: too few residuals")

    return DiagnosticsReport(
        loglik=output.loglik,
        bic=value_bic,
        n_params=model.n_params,
        ljung_box=lb,
        ljung_box_lags=lags,
        ljung_box_pvalue=lb_p,
        bowman_shenton=bs,
        bowman_shenton_pvalue=bs_p,
        r1=r1,
        r2=r2,
        notes=notes,
    )
