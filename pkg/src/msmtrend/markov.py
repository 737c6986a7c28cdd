"""Three-state illness-death intensities and interval transition probabilities.

State space: 1 = healthy, 2 = ill, 3 = dead.  Permitted transitions are
1->2, 1->3 and 2->3, so the generator is upper triangular and its interval
transition matrix has a closed form.  Log intensities are linear in
covariates: the 1->2 transition carries a natural cubic spline in age, a
female indicator, their interaction and one free dummy per wave; the two
mortality transitions are linear in age, female and the wave index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, InvalidSpecError, NumericalError

__all__ = [
    "Covariates",
    "ModelStructure",
    "HazardParams",
    "IntensityMatrix",
    "TransitionMatrix",
    "spline_basis",
    "spline_basis_matrix",
    "build_intensity",
    "transition_probability",
    "load_model_spec",
    "save_model_spec",
]

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class Covariates:
    """Individual covariates entering the transition intensities."""

    age: float
    female: int

    def __post_init__(self):
        if not (self.age > 0 and math.isfinite(self.age)):
            raise InvalidArgumentError(f"age must be positive and finite, got {self.age}")
        if self.female not in (0, 1):
            raise InvalidArgumentError(f"female must be 0 or 1, got {self.female}")


def _check_knots(knots) -> np.ndarray:
    knots = np.asarray(knots, dtype=float)
    if knots.ndim != 1 or knots.size < 3:
        raise InvalidSpecError("need at least 3 spline knots")
    if not np.all(np.diff(knots) > 0):
        raise InvalidSpecError(f"knots must be strictly increasing, got {knots.tolist()}")
    return knots


def spline_basis_matrix(ages, knots) -> np.ndarray:
    """Natural cubic spline basis, one row per age.

    For K knots k_1 < ... < k_K the basis has K-1 columns: the identity
    N_1(x) = x followed by the K-2 curvature terms

        N_{j+1}(x) = [d_j(x) - d_{K-1}(x)] / (k_K - k_1)^2,
        d_j(x) = [(x - k_j)_+^3 - (x - k_K)_+^3] / (k_K - k_j),

    which are cubic between the boundary knots, linear outside them and
    have zero second derivative at both boundaries.  The (k_K - k_1)^2
    normalization keeps the curvature columns on the scale of x itself.
    No intercept column; the caller supplies one if needed.
    """
    knots = _check_knots(knots)
    x = np.atleast_1d(np.asarray(ages, dtype=float))
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("ages must be finite")
    K = knots.size
    out = np.empty((x.size, K - 1))
    out[:, 0] = x
    norm = (knots[K - 1] - knots[0]) ** 2

    def trunc_cube(v):
        return np.maximum(v, 0.0) ** 3

    d_last = (trunc_cube(x - knots[K - 2]) - trunc_cube(x - knots[K - 1])) / (
        knots[K - 1] - knots[K - 2]
    )
    for j in range(K - 2):
        d_j = (trunc_cube(x - knots[j]) - trunc_cube(x - knots[K - 1])) / (
            knots[K - 1] - knots[j]
        )
        out[:, j + 1] = (d_j - d_last) / norm
    return out


def spline_basis(age: float, knots) -> np.ndarray:
    """Natural cubic spline basis values at a single age."""
    return spline_basis_matrix([age], knots)[0]


@dataclass(frozen=True)
class ModelStructure:
    """Fixed structure of the hazard model: knots, wave grid, centering age.

    ``wave_times`` lists the observation times (length T+1 for T intervals).
    Spline covariates enter as basis(age) - basis(ref_age) so that the wave
    dummies are interpretable as log intensities at the reference age; this
    is a pure reparameterization that also conditions the optimization.
    """

    knots: tuple
    wave_times: tuple
    ref_age: float | None = None

    def __post_init__(self):
        _check_knots(self.knots)
        wt = np.asarray(self.wave_times, dtype=float)
        if wt.size < 2 or not np.all(np.diff(wt) > 0):
            raise InvalidSpecError("wave_times must be strictly increasing, length >= 2")
        if self.ref_age is None:
            object.__setattr__(self, "ref_age", float(self.knots[len(self.knots) // 2]))
        object.__setattr__(self, "knots", tuple(float(k) for k in self.knots))
        object.__setattr__(self, "wave_times", tuple(float(t) for t in wt))

    @property
    def n_waves(self) -> int:
        """Number of intervals T (one wave dummy per interval)."""
        return len(self.wave_times) - 1

    @property
    def n_basis(self) -> int:
        return len(self.knots) - 1

    def wave_index(self, time: float) -> int:
        """1-based interval index whose left endpoint is ``time``."""
        wt = np.asarray(self.wave_times)
        j = int(np.argmin(np.abs(wt - time)))
        if abs(wt[j] - time) > 1e-9:
            raise InvalidArgumentError(f"time {time} is not on the wave grid {self.wave_times}")
        if j >= self.n_waves:
            # last wave time starts no interval; callers only ask for left endpoints
            raise InvalidArgumentError(f"time {time} is the final wave, no interval starts there")
        return j + 1


def default_structure(ages, wave_times) -> ModelStructure:
    """Structure with knots at the 10th/50th/90th age percentiles."""
    ages = np.asarray(ages, dtype=float)
    knots = np.percentile(ages, [10, 50, 90])
    if not np.all(np.diff(knots) > 0):
        raise InvalidSpecError("age distribution too degenerate for percentile knots")
    return ModelStructure(knots=tuple(knots), wave_times=tuple(wave_times))


@dataclass
class HazardParams:
    """Numeric parameters of the transition model.

    beta              wave dummies for the 1->2 transition (length T); the
                      1->2 baseline is fixed at 1 so the dummies carry the level
    female_12         female main effect on log q12
    age_spline_12     spline weights on age (length K-1)
    age_spline_f_12   spline weights on age x female (length K-1)
    log_q13_0 etc.    baseline log intensity, female, age slope and per-wave
                      linear time slope of the two mortality transitions
    logit_e12/e21     misclassification P{obs 2|true 1}, P{obs 1|true 2} (logits)
    logit_p2          initial distribution P{state 2 at first wave} (logit)
    """

    beta: np.ndarray
    female_12: float = 0.0
    age_spline_12: np.ndarray = field(default_factory=lambda: np.zeros(2))
    age_spline_f_12: np.ndarray = field(default_factory=lambda: np.zeros(2))
    log_q13_0: float = -5.0
    female_13: float = 0.0
    age_13: float = 0.0
    trend_13: float = 0.0
    log_q23_0: float = -4.0
    female_23: float = 0.0
    age_23: float = 0.0
    trend_23: float = 0.0
    logit_e12: float = -12.0
    logit_e21: float = -12.0
    logit_p2: float = -12.0

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.age_spline_12 = np.asarray(self.age_spline_12, dtype=float)
        self.age_spline_f_12 = np.asarray(self.age_spline_f_12, dtype=float)

    def validate(self, structure: ModelStructure) -> None:
        if self.beta.shape != (structure.n_waves,):
            raise InvalidSpecError(
                f"beta has length {self.beta.size}, expected {structure.n_waves}"
            )
        nb = structure.n_basis
        if self.age_spline_12.shape != (nb,) or self.age_spline_f_12.shape != (nb,):
            raise InvalidSpecError(f"spline weights must have length {nb}")
        vals = np.concatenate(
            [
                self.beta,
                self.age_spline_12,
                self.age_spline_f_12,
                [
                    self.female_12,
                    self.log_q13_0,
                    self.female_13,
                    self.age_13,
                    self.trend_13,
                    self.log_q23_0,
                    self.female_23,
                    self.age_23,
                    self.trend_23,
                    self.logit_e12,
                    self.logit_e21,
                    self.logit_p2,
                ],
            ]
        )
        if not np.all(np.isfinite(vals)):
            raise NumericalError("non-finite parameter value")


@dataclass(frozen=True)
class IntensityMatrix:
    """Validated 3x3 generator for the illness-death model."""

    matrix: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", q)
        if q.shape != (3, 3):
            raise InvalidSpecError("intensity matrix must be 3x3")
        if not np.all(np.isfinite(q)):
            raise NumericalError("non-finite intensity")
        off = q[~np.eye(3, dtype=bool)]
        if np.any(off < 0):
            raise InvalidSpecError("off-diagonal intensities must be >= 0")
        # tolerance scales with entry size: summing -(a+b), a, b leaves O(eps |q|)
        if np.any(np.abs(q.sum(axis=1)) > ROW_SUM_TOL * max(1.0, float(np.abs(q).max()))):
            raise InvalidSpecError("intensity rows must sum to 0")
        if q[1, 0] != 0.0 or q[2, 0] != 0.0 or q[2, 1] != 0.0:
            raise InvalidSpecError("reverse transitions are not permitted")

    @property
    def q12(self) -> float:
        return float(self.matrix[0, 1])

    @property
    def q13(self) -> float:
        return float(self.matrix[0, 2])

    @property
    def q23(self) -> float:
        return float(self.matrix[1, 2])


@dataclass(frozen=True)
class TransitionMatrix:
    """Validated 3x3 interval transition probability matrix."""

    matrix: np.ndarray
    width: float

    def __post_init__(self):
        p = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", p)
        if p.shape != (3, 3):
            raise InvalidSpecError("transition matrix must be 3x3")
        if np.any(p < -ROW_SUM_TOL) or np.any(p > 1 + ROW_SUM_TOL):
            raise NumericalError("transition probabilities outside [0, 1]")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise NumericalError("transition rows must sum to 1")
        if p[1, 0] != 0.0 or p[2, 0] != 0.0 or p[2, 1] != 0.0 or p[2, 2] != 1.0:
            raise NumericalError("triangular structure violated")


def _linear_predictors(structure: ModelStructure, params: HazardParams, ages, female, wave):
    """Vectorized log intensities (log q12, log q13, log q23).

    ``wave`` is the 1-based index of the interval's left endpoint.  Spline
    terms are centered at ``structure.ref_age``.
    """
    ages = np.asarray(ages, dtype=float)
    female = np.asarray(female, dtype=float)
    wave = np.asarray(wave, dtype=int)
    basis = spline_basis_matrix(ages, structure.knots) - spline_basis(
        structure.ref_age, structure.knots
    )
    lin12 = (
        params.beta[wave - 1]
        + params.female_12 * female
        + basis @ params.age_spline_12
        + (basis * female[..., None]) @ params.age_spline_f_12
    )
    age_c = ages - structure.ref_age
    lin13 = params.log_q13_0 + params.female_13 * female + params.age_13 * age_c + params.trend_13 * wave
    lin23 = params.log_q23_0 + params.female_23 * female + params.age_23 * age_c + params.trend_23 * wave
    return lin12, lin13, lin23


def build_intensity(
    structure: ModelStructure, params: HazardParams, z: Covariates, wave: int
) -> IntensityMatrix:
    """Generator matrix at covariates ``z`` during interval ``wave`` (1-based)."""
    if not 1 <= wave <= structure.n_waves:
        raise InvalidArgumentError(f"wave must be in 1..{structure.n_waves}, got {wave}")
    params.validate(structure)
    lin12, lin13, lin23 = _linear_predictors(
        structure, params, [z.age], [z.female], [wave]
    )
    q12, q13, q23 = math.exp(lin12[0]), math.exp(lin13[0]), math.exp(lin23[0])
    if not all(map(math.isfinite, (q12, q13, q23))):
        raise NumericalError("intensity overflow; check parameter scale")
    q = np.array(
        [
            [-(q12 + q13), q12, q13],
            [0.0, -q23, q23],
            [0.0, 0.0, 0.0],
        ]
    )
    return IntensityMatrix(q)


def _expm1_ratio(x):
    """(e^x - 1)/x, stable for small and zero x."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    nz = x != 0.0
    out[nz] = np.expm1(x[nz]) / x[nz]
    return out


def _transition_entries(q12, q13, q23, w):
    """Closed-form entries of exp(wQ) for the triangular generator.

    Eigenvalues are -(q12+q13), -q23 and 0.  The off-diagonal entry

        p12 = q12 (e^{-aw} - e^{-bw}) / (b - a),  a = q12+q13, b = q23,

    is evaluated as q12 * w * e^{-min(a,b)w} * expm1(-|a-b|w)/(-|a-b|w): the
    same closed form rearranged so the degenerate direction a -> b (where the
    naive difference cancels catastrophically) is exact, the a == b limit
    q12 * w * e^{-aw} is taken explicitly, and the expm1 argument is never
    positive, so nothing overflows for any intensity scale.
    """
    q12 = np.asarray(q12, dtype=float)
    q13 = np.asarray(q13, dtype=float)
    q23 = np.asarray(q23, dtype=float)
    a = q12 + q13
    b = q23
    p11 = np.exp(-a * w)
    p22 = np.exp(-b * w)
    p12 = q12 * w * np.exp(-np.minimum(a, b) * w) * _expm1_ratio(-np.abs(a - b) * w)
    p13 = 1.0 - p11 - p12
    p23 = 1.0 - p22
    return p11, p12, p13, p22, p23


def transition_probability(Q: IntensityMatrix, w: float) -> TransitionMatrix:
    """Interval transition matrix P = exp(wQ) over an interval of width ``w``."""
    if not (w > 0 and math.isfinite(w)):
        raise InvalidArgumentError(f"interval width must be positive, got {w}")
    p11, p12, p13, p22, p23 = _transition_entries(Q.q12, Q.q13, Q.q23, float(w))
    p = np.array(
        [
            [float(p11), float(p12), float(p13)],
            [0.0, float(p22), float(p23)],
            [0.0, 0.0, 1.0],
        ]
    )
    # clip roundoff at the domain edge, never more than a few ulp
    p[0] = np.clip(p[0], 0.0, 1.0)
    p[0, 0] = 1.0 - p[0, 1] - p[0, 2]
    return TransitionMatrix(p, float(w))


def params_to_dict(params: HazardParams) -> dict:
    return {
        "beta": params.beta.tolist(),
        "female_12": params.female_12,
        "age_spline_12": params.age_spline_12.tolist(),
        "age_spline_f_12": params.age_spline_f_12.tolist(),
        "log_q13_0": params.log_q13_0,
        "female_13": params.female_13,
        "age_13": params.age_13,
        "trend_13": params.trend_13,
        "log_q23_0": params.log_q23_0,
        "female_23": params.female_23,
        "age_23": params.age_23,
        "trend_23": params.trend_23,
        "logit_e12": params.logit_e12,
        "logit_e21": params.logit_e21,
        "logit_p2": params.logit_p2,
    }


def save_model_spec(path, structure: ModelStructure, params: HazardParams | None = None) -> None:
    """Write the model-spec JSON (structure plus optional parameter values)."""
    doc = {
        "knots": list(structure.knots),
        "wave_times": list(structure.wave_times),
        "ref_age": structure.ref_age,
        "transitions": {
            "1->2": "female + ncs(age) + ncs(age):female, wave dummies; baseline fixed at 1",
            "1->3": "female + age, linear wave trend",
            "2->3": "female + age, linear wave trend",
        },
    }
    if params is not None:
        params.validate(structure)
        doc["params"] = params_to_dict(params)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_model_spec(path):
    """Read a model-spec JSON; returns (structure, params_or_None)."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        structure = ModelStructure(
            knots=tuple(doc["knots"]),
            wave_times=tuple(doc["wave_times"]),
            ref_age=doc.get("ref_age"),
        )
    except KeyError as exc:
        raise InvalidSpecError(f"model spec missing field {exc}") from exc
    params = None
    if "params" in doc:
        p = dict(doc["params"])
        params = HazardParams(
            beta=np.asarray(p.pop("beta"), dtype=float),
            age_spline_12=np.asarray(p.pop("age_spline_12"), dtype=float),
            age_spline_f_12=np.asarray(p.pop("age_spline_f_12"), dtype=float),
            **p,
        )
        params.validate(structure)
    return structure, params
