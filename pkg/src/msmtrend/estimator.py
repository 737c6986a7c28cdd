"""Hidden-Markov likelihood, maximum-likelihood fit and trend extraction.

The observed panel is modeled as a misclassified snapshot of the latent
illness-death chain.  Individual likelihood contributions are computed by
the forward algorithm over latent states, with per-step rescaling against
underflow; this equals the nested sum over all latent paths.  Standard
errors come from the inverse observed information, estimated by central
finite differences with Richardson extrapolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .errors import (
    CurvatureError,
    DataValidationError,
    InvalidArgumentError,
    InvalidSpecError,
    NumericalError,
)
from .markov import HazardParams, ModelStructure, _expm1_ratio, spline_basis, spline_basis_matrix
from .panel import Panel, validate_panel

__all__ = [
    "param_names",
    "pack_params",
    "unpack_params",
    "misclassification_matrix",
    "forward_loglik",
    "fit_msm",
    "hessian_fd",
    "hessian_covariance",
    "EstimationResult",
    "TrendSeries",
    "extract_trend",
]

# linear predictors are clipped here during optimization; exp(30) rates are
# already far beyond any feasible region and the clip keeps exps finite
_LIN_CLIP = 30.0


def misclassification_matrix(e12: float, e21: float) -> np.ndarray:
    """Row-stochastic observation matrix E with E[r, s] = P{observed s | true r}.

    Death is reported exactly and never reported for the living, so the only
    free entries are e12 and e21.  The closed interval is allowed: an extreme
    logit visited during optimization saturates to a degenerate but valid row.
    """
    if not (0.0 <= e12 <= 1.0 and 0.0 <= e21 <= 1.0):
        raise InvalidArgumentError("misreporting probabilities must lie in [0, 1]")
    return np.array(
        [[1.0 - e12, e12, 0.0], [e21, 1.0 - e21, 0.0], [0.0, 0.0, 1.0]]
    )


def param_names(structure: ModelStructure) -> list[str]:
    """Fixed parameter ordering used by the flat vector and all reports."""
    names = [f"beta_{k}" for k in range(1, structure.n_waves + 1)]
    names += ["female_12"]
    names += [f"age_spline_12_{j}" for j in range(1, structure.n_basis + 1)]
    names += [f"age_spline_f_12_{j}" for j in range(1, structure.n_basis + 1)]
    names += ["log_q13_0", "female_13", "age_13", "trend_13"]
    names += ["log_q23_0", "female_23", "age_23", "trend_23"]
    names += ["logit_e12", "logit_e21", "logit_p2"]
    return names


def pack_params(params: HazardParams, structure: ModelStructure) -> np.ndarray:
    params.validate(structure)
    return np.concatenate(
        [
            params.beta,
            [params.female_12],
            params.age_spline_12,
            params.age_spline_f_12,
            [params.log_q13_0, params.female_13, params.age_13, params.trend_13],
            [params.log_q23_0, params.female_23, params.age_23, params.trend_23],
            [params.logit_e12, params.logit_e21, params.logit_p2],
        ]
    )


def unpack_params(gamma: np.ndarray, structure: ModelStructure) -> HazardParams:
    gamma = np.asarray(gamma, dtype=float)
    T, nb = structure.n_waves, structure.n_basis
    if gamma.size != T + 1 + 2 * nb + 11:
        raise InvalidSpecError(
            f"parameter vector has length {gamma.size}, expected {T + 1 + 2 * nb + 11}"
        )
    i = T
    beta = gamma[:T]
    female_12 = gamma[i]; i += 1
    sp = gamma[i: i + nb]; i += nb
    spf = gamma[i: i + nb]; i += nb
    rest = gamma[i:]
    return HazardParams(
        beta=beta,
        female_12=float(female_12),
        age_spline_12=sp,
        age_spline_f_12=spf,
        log_q13_0=float(rest[0]),
        female_13=float(rest[1]),
        age_13=float(rest[2]),
        trend_13=float(rest[3]),
        log_q23_0=float(rest[4]),
        female_23=float(rest[5]),
        age_23=float(rest[6]),
        trend_23=float(rest[7]),
        logit_e12=float(rest[8]),
        logit_e21=float(rest[9]),
        logit_p2=float(rest[10]),
    )


class PanelDesign:
    """Precomputed arrays for fast repeated likelihood evaluation.

    Individuals are padded to the longest observation sequence; ``active``
    masks which (individual, step) cells are real.  Covariates and spline
    bases depend only on data, so they are built once.
    """

    def __init__(self, panel: Panel, structure: ModelStructure, validate: bool = True):
        if validate:
            problems = validate_panel(panel)
            if problems:
                raise DataValidationError("; ".join(problems[:10]))
        p = panel.sort()
        self.structure = structure
        slices = list(p.individual_slices())
        if not slices:
            raise DataValidationError("panel is empty")
        self.n = len(slices)
        counts = np.array([sl.stop - sl.start for _, sl in slices])
        if not np.any(counts >= 2):
            raise DataValidationError("need at least one individual with two observations")
        self.n_transitions = int(np.sum(counts - 1))
        mmax = int(counts.max())
        self.n_steps = mmax - 1
        self.counts = counts

        self.states = np.zeros((self.n, mmax), dtype=np.int64)
        self.valid = np.zeros((self.n, mmax), dtype=bool)
        widths = np.zeros((self.n, self.n_steps))
        waves = np.ones((self.n, self.n_steps), dtype=np.int64)
        age_left = np.full((self.n, self.n_steps), structure.ref_age)
        self.female = np.zeros(self.n)
        for row, (_id, sl) in enumerate(slices):
            m = sl.stop - sl.start
            st = p.states[sl]
            if validate and st[0] == 3:
                raise DataValidationError(f"id {_id} is dead at its first observation")
            self.states[row, :m] = st
            self.valid[row, :m] = True
            self.female[row] = p.female[sl][0]
            t = p.times[sl]
            for j in range(m - 1):
                widths[row, j] = t[j + 1] - t[j]
                waves[row, j] = structure.wave_index(t[j])
                age_left[row, j] = p.ages[sl][j]
        self.widths = widths
        self.waves = waves
        # step j is real when the individual has an observation j+1
        self.active = self.valid[:, 1:]
        # centered spline design at the interval's left endpoint
        basis = spline_basis_matrix(age_left.ravel(), structure.knots) - spline_basis(
            structure.ref_age, structure.knots
        )
        self.basis = basis.reshape(self.n, self.n_steps, structure.n_basis)
        self.basis_f = self.basis * self.female[:, None, None]
        self.age_centered = age_left - structure.ref_age
        self.state_idx = np.where(self.valid, self.states - 1, 0)

    def param_scales(self) -> np.ndarray:
        """Typical regressor magnitude per parameter, used to precondition
        the optimizer; dummies, baselines and logits scale at one."""
        st = self.structure
        act = self.active

        def rms(col):
            vals = col[act]
            return max(1.0, float(np.sqrt(np.mean(vals**2))))

        scales = np.ones(st.n_waves + 2 * st.n_basis + 12)
        i = st.n_waves + 1
        for j in range(st.n_basis):
            scales[i + j] = rms(self.basis[:, :, j])
            scales[i + st.n_basis + j] = rms(self.basis_f[:, :, j])
        i += 2 * st.n_basis
        age_rms = rms(self.age_centered)
        wave_rms = rms(self.waves.astype(float))
        scales[i + 2] = age_rms
        scales[i + 3] = wave_rms
        scales[i + 6] = age_rms
        scales[i + 7] = wave_rms
        return scales

    def loglik(self, gamma: np.ndarray) -> float:
        """Total forward-algorithm log likelihood at parameter vector gamma.

        Reuses an internal transition buffer, so concurrent calls must use
        separate PanelDesign instances; the sum runs in fixed id order.
        """
        st = self.structure
        T, nb = st.n_waves, st.n_basis
        g = np.asarray(gamma, dtype=float)
        beta = g[:T]
        i = T
        female_12 = g[i]; i += 1
        w_sp = g[i: i + nb]; i += nb
        w_spf = g[i: i + nb]; i += nb
        (lq13, fem13, age13, tr13, lq23, fem23, age23, tr23, l_e12, l_e21, l_p2) = g[i:]

        lin12 = (
            beta[self.waves - 1]
            + female_12 * self.female[:, None]
            + self.basis @ w_sp
            + self.basis_f @ w_spf
        )
        lin13 = lq13 + fem13 * self.female[:, None] + age13 * self.age_centered + tr13 * self.waves
        lin23 = lq23 + fem23 * self.female[:, None] + age23 * self.age_centered + tr23 * self.waves
        q12 = np.exp(np.clip(lin12, -_LIN_CLIP, _LIN_CLIP))
        q13 = np.exp(np.clip(lin13, -_LIN_CLIP, _LIN_CLIP))
        q23 = np.exp(np.clip(lin23, -_LIN_CLIP, _LIN_CLIP))

        a = q12 + q13
        b = q23
        w = self.widths
        p11 = np.exp(-a * w)
        p22 = np.exp(-b * w)
        p12 = q12 * w * np.exp(-np.minimum(a, b) * w) * _expm1_ratio(-np.abs(a - b) * w)
        p13 = np.maximum(1.0 - p11 - p12, 0.0)
        p23 = 1.0 - p22

        if not hasattr(self, "_trans_buf"):
            self._trans_buf = np.zeros((self.n, self.n_steps, 3, 3))
            self._trans_buf[:, :, 2, 2] = 1.0
        trans = self._trans_buf
        trans[:, :, 0, 0] = p11
        trans[:, :, 0, 1] = p12
        trans[:, :, 0, 2] = p13
        trans[:, :, 1, 1] = p22
        trans[:, :, 1, 2] = p23

        emission = misclassification_matrix(float(expit(l_e12)), float(expit(l_e21)))
        p2 = expit(l_p2)
        init = np.array([1.0 - p2, p2, 0.0])

        alpha = init[None, :] * emission[:, self.state_idx[:, 0]].T
        norm = np.maximum(alpha.sum(axis=1), 1e-300)
        loglik = np.log(norm)
        alpha = alpha / norm[:, None]
        for j in range(self.n_steps):
            step = np.einsum("nx,nxy->ny", alpha, trans[:, j])
            step = step * emission[:, self.state_idx[:, j + 1]].T
            norm = np.maximum(step.sum(axis=1), 1e-300)
            act = self.active[:, j]
            loglik = loglik + np.where(act, np.log(norm), 0.0)
            alpha = np.where(act[:, None], step / norm[:, None], alpha)
        return float(loglik.sum())


def forward_loglik(panel: Panel, structure: ModelStructure, gamma, validate: bool = True) -> float:
    """Log likelihood of the observed panel at parameters ``gamma``.

    ``gamma`` may be a flat vector (see :func:`param_names`) or a
    :class:`HazardParams`.  With ``validate=False`` schema checks are
    skipped and impossible observation sequences return a floor log
    likelihood (about -690 per wave) instead of raising, so exponentiating
    gives them zero mass in law-of-total-probability sums.
    """
    if isinstance(gamma, HazardParams):
        gamma = pack_params(gamma, structure)
    design = PanelDesign(panel, structure, validate=validate)
    return design.loglik(gamma)


# ---------------------------------------------------------------------------
# numerical derivatives


def gradient_fd(fun, x, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient with per-coordinate relative steps."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        g[i] = (fun(xp) - fun(xm)) / (2 * h)
    return g


def _hessian_central(fun, x, steps) -> np.ndarray:
    n = x.size
    H = np.empty((n, n))
    f0 = fun(x)
    for i in range(n):
        hi = steps[i]
        xp = x.copy(); xp[i] += hi
        xm = x.copy(); xm[i] -= hi
        H[i, i] = (fun(xp) - 2 * f0 + fun(xm)) / hi**2
    for i in range(n):
        for j in range(i + 1, n):
            hi, hj = steps[i], steps[j]
            xpp = x.copy(); xpp[i] += hi; xpp[j] += hj
            xpm = x.copy(); xpm[i] += hi; xpm[j] -= hj
            xmp = x.copy(); xmp[i] -= hi; xmp[j] += hj
            xmm = x.copy(); xmm[i] -= hi; xmm[j] -= hj
            H[i, j] = H[j, i] = (fun(xpp) - fun(xpm) - fun(xmp) + fun(xmm)) / (4 * hi * hj)
    return H


def hessian_fd(fun, x, step: float = 1e-4, richardson: bool = True) -> np.ndarray:
    """Central-difference Hessian, optionally Richardson-extrapolated.

    Richardson combines estimates at h and h/2 as (4 H(h/2) - H(h)) / 3,
    cancelling the leading O(h^2) truncation term.
    """
    x = np.asarray(x, dtype=float)
    steps = step * np.maximum(1.0, np.abs(x))
    H1 = _hessian_central(fun, x, steps)
    if not richardson:
        return 0.5 * (H1 + H1.T)
    H2 = _hessian_central(fun, x, steps / 2)
    H = (4 * H2 - H1) / 3
    return 0.5 * (H + H.T)


def hessian_covariance(loglik_fun, gamma_hat, step: float = 1e-4, richardson: bool = True,
                       hessian: np.ndarray | None = None):
    """Covariance of an ML estimate from the inverse observed information.

    Returns (Sigma, warnings).  An eigenvalue of the information matrix
    below -1e-6 signals wrong curvature and raises; eigenvalues that are
    only numerically zero trigger a pseudo-inverse with a warning, which is
    what a variance parameter estimated on its boundary produces.  A
    precomputed ``hessian`` skips the finite differencing.
    """
    gamma_hat = np.asarray(gamma_hat, dtype=float)
    if hessian is not None:
        H = hessian
    else:
        H = hessian_fd(loglik_fun, gamma_hat, step=step, richardson=richardson)
    info = -H
    eigvals = np.linalg.eigvalsh(info)
    warnings: list[str] = []
    if eigvals.min() < -1e-6:
        raise CurvatureError(
            f"information matrix has negative eigenvalue {eigvals.min():.3e}; not a maximum"
        )
    if eigvals.min() <= 1e-10 * max(eigvals.max(), 1.0):
        warnings.append(
            f"information matrix has a numerically zero eigenvalue ({eigvals.min():.3e}); "
            "using pseudo-inverse"
        )
        sigma = np.linalg.pinv(info, hermitian=True)
    else:
        sigma = np.linalg.inv(info)
    sigma = 0.5 * (sigma + sigma.T)
    return sigma, warnings


# ---------------------------------------------------------------------------
# fitting


@dataclass
class EstimationResult:
    """Maximum-likelihood fit of the multi-state model."""

    names: list
    estimates: np.ndarray
    free: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    n_transitions: int
    cov_free: np.ndarray | None
    warnings: list = field(default_factory=list)

    @property
    def covariance(self) -> np.ndarray:
        """Full-size covariance with zero rows/columns at fixed parameters."""
        p = len(self.names)
        cov = np.zeros((p, p))
        if self.cov_free is not None:
            idx = np.flatnonzero(self.free)
            cov[np.ix_(idx, idx)] = self.cov_free
        return cov

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.diag(self.covariance), 0.0))

    def __getitem__(self, name: str) -> float:
        return float(self.estimates[self.names.index(name)])

    def to_json_dict(self) -> dict:
        return {
            "names": list(self.names),
            "estimate": self.estimates.tolist(),
            "se": self.se.tolist(),
            "free": self.free.astype(bool).tolist(),
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "n_transitions": self.n_transitions,
            "covariance": self.covariance.tolist(),
            "warnings": list(self.warnings),
        }


def _default_start(design: PanelDesign, structure: ModelStructure) -> np.ndarray:
    """Heuristic start: crude rates for levels, zeros for covariate effects."""
    states, valid = design.states, design.valid
    active = design.active
    from1 = (states[:, :-1] == 1) & active
    from2 = (states[:, :-1] == 2) & active
    w = design.widths
    py1 = float(np.sum(w[from1])) + 1e-9
    py2 = float(np.sum(w[from2])) + 1e-9
    onset = float(np.sum(from1 & (states[:, 1:] == 2)))
    death1 = float(np.sum(from1 & (states[:, 1:] == 3)))
    death2 = float(np.sum(from2 & (states[:, 1:] == 3)))
    rate12 = max(onset / py1, 1e-5)
    rate13 = max(death1 / py1, 1e-5)
    rate23 = max(death2 / py2, max(death1 / py1, 1e-5) * 2.0)
    share2 = np.clip(np.mean(states[:, 0] == 2), 1e-4, 0.5)

    params = HazardParams(
        beta=np.full(structure.n_waves, np.log(rate12)),
        age_spline_12=np.zeros(structure.n_basis),
        age_spline_f_12=np.zeros(structure.n_basis),
        log_q13_0=float(np.log(rate13)),
        log_q23_0=float(np.log(rate23)),
        logit_e12=float(np.log(0.02 / 0.98)),
        logit_e21=float(np.log(0.10 / 0.90)),
        logit_p2=float(np.log(share2 / (1 - share2))),
    )
    return pack_params(params, structure)


def fit_msm(
    panel: Panel,
    structure: ModelStructure,
    start: np.ndarray | HazardParams | None = None,
    fixed: dict | None = None,
    compute_cov: bool = True,
    maxiter: int = 500,
    polish: bool = True,
) -> EstimationResult:
    """Maximize the misclassified-panel likelihood.

    Quasi-Newton (L-BFGS-B) with a 3-point finite-difference gradient, a
    relative-likelihood stopping rule of 1e-10 and gradient tolerance 1e-6,
    followed by damped Newton polish steps using a finite-difference
    Hessian.  ``fixed`` maps parameter names to frozen values, e.g. to pin
    the misclassification at the identity.  Non-convergence is flagged on
    the result, never raised.
    """
    design = PanelDesign(panel, structure)
    names = param_names(structure)
    p = len(names)

    if start is None:
        x_full = _default_start(design, structure)
    elif isinstance(start, HazardParams):
        x_full = pack_params(start, structure)
    else:
        x_full = np.asarray(start, dtype=float).copy()
        if x_full.size != p:
            raise InvalidArgumentError(f"start vector must have length {p}")

    free = np.ones(p, dtype=bool)
    if fixed:
        for name, value in fixed.items():
            if name not in names:
                raise InvalidArgumentError(f"unknown parameter {name!r}")
            k = names.index(name)
            free[k] = False
            x_full[k] = float(value)
    idx_free = np.flatnonzero(free)
    if idx_free.size == 0:
        raise InvalidArgumentError("no free parameters")

    # optimize z = scale * gamma so every coordinate moves the likelihood at
    # a comparable rate; covariate columns with large typical magnitude would
    # otherwise give the surface a hopeless condition number
    scale = design.param_scales()[idx_free]

    def nll(z_free: np.ndarray) -> float:
        x = x_full.copy()
        x[idx_free] = z_free / scale
        value = design.loglik(x)
        if not np.isfinite(value):
            return 1e12
        return -value

    # generous box: log rates and logits beyond +-60 are numerically
    # indistinguishable from the boundary (e.g. a wave with no observed
    # events drives its dummy to -inf); the box stops runaway iterations
    res = minimize(
        nll,
        x_full[idx_free] * scale,
        method="L-BFGS-B",
        jac="2-point",
        bounds=[(-60.0, 60.0)] * idx_free.size,
        options={"maxiter": maxiter, "maxfun": 100 * maxiter, "ftol": 1e-10, "gtol": 1e-6},
    )
    z_free = res.x.copy()
    iterations = int(res.nit)
    converged = bool(res.success)
    warnings: list[str] = []

    need_hessian = polish or compute_cov
    H_nll = None
    if need_hessian:
        H_nll = hessian_fd(nll, z_free, step=1e-4, richardson=True)

    moved = np.zeros_like(z_free)
    if polish:
        # a few damped Newton steps sharpen the optimum well past what
        # finite-difference L-BFGS-B can resolve
        z_start = z_free.copy()
        for _ in range(3):
            g = gradient_fd(nll, z_free, step=1e-6)
            if np.max(np.abs(g)) < 1e-9 * max(1.0, abs(res.fun)):
                break
            try:
                delta = np.linalg.solve(H_nll, g)
            except np.linalg.LinAlgError:
                break
            f_cur = nll(z_free)
            damp = 1.0
            for _ in range(6):
                cand = z_free - damp * delta
                if nll(cand) < f_cur:
                    z_free = cand
                    break
                damp *= 0.5
            else:
                break
        moved = z_free - z_start

    x_hat = x_full.copy()
    x_hat[idx_free] = z_free / scale
    loglik_hat = design.loglik(x_hat)

    cov_free = None
    if compute_cov:
        # Hessian in the scaled coordinates (well conditioned), mapped back
        # to the natural parameterization: cov_gamma = S^{-1} cov_z S^{-1}
        def ll_z(zf):
            x = x_full.copy()
            x[idx_free] = zf / scale
            return design.loglik(x)

        try:
            # refresh the Hessian only if polish moved the optimum by a
            # non-negligible fraction of a standard error
            diag_cov = np.diag(np.linalg.pinv(H_nll, hermitian=True))
            tol_move = 0.05 * np.sqrt(np.maximum(np.abs(diag_cov), 1e-300))
            if np.any(np.abs(moved) > tol_move):
                H_nll = hessian_fd(nll, z_free, step=1e-4, richardson=True)
            cov_z, cov_warnings = hessian_covariance(ll_z, z_free, hessian=-H_nll)
            cov_free = cov_z / np.outer(scale, scale)
            warnings.extend(cov_warnings)
        except CurvatureError as exc:
            warnings.append(str(exc))
            converged = False

    if not res.success:
        warnings.append(f"optimizer message: {res.message}")

    return EstimationResult(
        names=names,
        estimates=x_hat,
        free=free,
        loglik=float(loglik_hat),
        converged=converged,
        iterations=iterations,
        n_transitions=design.n_transitions,
        cov_free=cov_free,
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# trend series


@dataclass
class TrendSeries:
    """Wave-dummy estimates with their sampling covariance block."""

    beta: np.ndarray
    cov: np.ndarray
    n_transitions: int | None = None

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        T = self.beta.size
        if self.cov.shape != (T, T):
            raise InvalidSpecError("covariance block does not match series length")
        if np.max(np.abs(self.cov - self.cov.T)) > 1e-10 * max(1.0, np.abs(self.cov).max()):
            raise InvalidSpecError("covariance block is not symmetric")
        if np.linalg.eigvalsh(0.5 * (self.cov + self.cov.T)).min() < -1e-8:
            raise InvalidSpecError("covariance block is not positive semidefinite")
        if np.any(np.diag(self.cov) <= 0):
            raise InvalidSpecError("covariance diagonal must be positive")

    @property
    def n_waves(self) -> int:
        return int(self.beta.size)

    @property
    def var_diag(self) -> np.ndarray:
        return np.diag(self.cov).copy()

    def to_json_dict(self) -> dict:
        doc = {
            "T": self.n_waves,
            "beta": self.beta.tolist(),
            "cov": self.cov.tolist(),
            "var_diag": self.var_diag.tolist(),
        }
        if self.n_transitions is not None:
            doc["n_transitions"] = int(self.n_transitions)
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TrendSeries":
        beta = np.asarray(doc["beta"], dtype=float)
        if "cov" in doc:
            cov = np.asarray(doc["cov"], dtype=float)
        elif "var_diag" in doc:
            cov = np.diag(np.asarray(doc["var_diag"], dtype=float))
        else:
            raise InvalidSpecError("trend series needs 'cov' or 'var_diag'")
        return cls(beta=beta, cov=cov, n_transitions=doc.get("n_transitions"))


def extract_trend(result: EstimationResult, structure: ModelStructure) -> TrendSeries:
    """Slice the wave-dummy block and its covariance out of a fit."""
    if not result.converged:
        raise NumericalError("cannot extract trend from a non-converged fit")
    if result.cov_free is None:
        raise NumericalError("fit was run without covariance computation")
    T = structure.n_waves
    idx = [result.names.index(f"beta_{k}") for k in range(1, T + 1)]
    if not np.all(result.free[idx]):
        raise InvalidArgumentError("wave dummies must be free to extract a trend")
    cov = result.covariance
    return TrendSeries(
        beta=result.estimates[idx],
        cov=cov[np.ix_(idx, idx)],
        n_transitions=result.n_transitions,
    )
