from itertools import product

import numpy as np
import pytest
from scipy.special import expit

import msmtrend.estimator as est
from msmtrend.errors import DataValidationError, CurvatureError, InvalidArgumentError
from msmtrend.markov import Covariates, HazardParams, ModelStructure, build_intensity, transition_probability
from msmtrend.panel import Panel
from msmtrend.simulate import SimulationConfig, simulate_panel

from conftest import WAVE_TIMES, paperlike_params, paperlike_structure


SMALL_STRUCTURE = ModelStructure(knots=(58.0, 68.0, 80.0), wave_times=(0.0, 2.0, 4.0, 6.0))


def random_params(rng, structure) -> HazardParams:
    return HazardParams(
        beta=rng.normal(-3.0, 0.7, size=structure.n_waves),
        female_12=rng.normal(0, 0.3),
        age_spline_12=np.array([rng.normal(0, 0.05), rng.normal(0, 5e-4)]),
        age_spline_f_12=np.array([rng.normal(0, 0.02), rng.normal(0, 2e-4)]),
        log_q13_0=rng.normal(-3.0, 0.5),
        female_13=rng.normal(0, 0.3),
        age_13=rng.normal(0, 0.05),
        trend_13=rng.normal(0, 0.05),
        log_q23_0=rng.normal(-2.5, 0.5),
        female_23=rng.normal(0, 0.3),
        age_23=rng.normal(0, 0.05),
        trend_23=rng.normal(0, 0.05),
        logit_e12=rng.normal(-3.0, 0.8),
        logit_e21=rng.normal(-1.5, 0.8),
        logit_p2=rng.normal(-2.5, 0.5),
    )


def random_panel(rng, structure, n_individuals, max_obs=None) -> Panel:
    """Valid random panel: states free over {1,2,3}, truncated at death."""
    max_obs = max_obs or structure.n_waves + 1
    ids, times, states, ages, female = [], [], [], [], []
    wt = structure.wave_times
    for ident in range(n_individuals):
        m = int(rng.integers(2, max_obs + 1))
        age0 = float(rng.uniform(55.0, 80.0))
        fem = int(rng.integers(0, 2))
        seq = [int(rng.integers(1, 3))]
        for _ in range(m - 1):
            seq.append(int(rng.integers(1, 4)))
        dead = [i for i, s in enumerate(seq) if s == 3]
        if dead:
            seq = seq[: dead[0] + 1]
        for j, s in enumerate(seq):
            ids.append(ident)
            times.append(wt[j])
            states.append(s)
            ages.append(age0 + wt[j])
            female.append(fem)
    return Panel(np.array(ids), np.array(times), np.array(states), np.array(ages), np.array(female))


def enumeration_loglik(panel: Panel, structure, params: HazardParams) -> float:
    """Exhaustive latent-path likelihood, one term per path in S^m."""
    e12 = expit(params.logit_e12)
    e21 = expit(params.logit_e21)
    p2 = expit(params.logit_p2)
    emission = np.array([[1 - e12, e12, 0.0], [e21, 1 - e21, 0.0], [0.0, 0.0, 1.0]])
    init = np.array([1 - p2, p2, 0.0])
    total = 0.0
    p = panel.sort()
    for _id, sl in p.individual_slices():
        obs = p.states[sl] - 1
        t = p.times[sl]
        ages = p.ages[sl]
        fem = int(p.female[sl][0])
        m = obs.size
        mats = []
        for j in range(m - 1):
            wave = structure.wave_index(t[j])
            q = build_intensity(structure, params, Covariates(float(ages[j]), fem), wave)
            mats.append(transition_probability(q, float(t[j + 1] - t[j])).matrix)
        lik = 0.0
        for path in product(range(3), repeat=m):
            term = init[path[0]] * emission[path[0], obs[0]]
            for j in range(m - 1):
                term *= mats[j][path[j], path[j + 1]] * emission[path[j + 1], obs[j + 1]]
            lik += term
        total += np.log(lik)
    return total


# ---------------------------------------------------------------------------
# forward algorithm against the oracle


def test_forward_equals_enumeration():
    rng = np.random.default_rng(314)
    for _ in range(30):
        params = random_params(rng, SMALL_STRUCTURE)
        panel = random_panel(rng, SMALL_STRUCTURE, n_individuals=5)
        got = est.forward_loglik(panel, SMALL_STRUCTURE, params)
        want = enumeration_loglik(panel, SMALL_STRUCTURE, params)
        assert got == pytest.approx(want, abs=1e-12)


def test_param_pack_unpack_roundtrip():
    rng = np.random.default_rng(44)
    params = random_params(rng, SMALL_STRUCTURE)
    vec = est.pack_params(params, SMALL_STRUCTURE)
    assert vec.size == len(est.param_names(SMALL_STRUCTURE))
    back = est.unpack_params(vec, SMALL_STRUCTURE)
    np.testing.assert_array_equal(est.pack_params(back, SMALL_STRUCTURE), vec)


def test_misclassification_matrix_structure():
    e = est.misclassification_matrix(0.004, 0.221)
    np.testing.assert_allclose(e.sum(axis=1), 1.0, atol=1e-15)
    assert e[2, 2] == 1.0 and e[2, 0] == 0.0 and e[2, 1] == 0.0
    assert e[0, 2] == 0.0 and e[1, 2] == 0.0
    with pytest.raises(InvalidArgumentError):
        est.misclassification_matrix(1.2, 0.1)


def test_single_observation_contributes_initial_factor_only():
    # one individual with a single wave plus one normal individual: the
    # singleton adds exactly log(pi' E[:, obs]) to the likelihood
    rng = np.random.default_rng(55)
    params = random_params(rng, SMALL_STRUCTURE)
    base = Panel(np.array([1, 1]), np.array([0.0, 2.0]), np.array([1, 1]),
                 np.array([66.0, 68.0]), np.array([0, 0]))
    with_single = Panel(
        np.array([1, 1, 2]), np.array([0.0, 2.0, 0.0]), np.array([1, 1, 2]),
        np.array([66.0, 68.0, 71.0]), np.array([0, 0, 1]),
    )
    from scipy.special import expit as sig
    p2 = sig(params.logit_p2)
    emission = est.misclassification_matrix(sig(params.logit_e12), sig(params.logit_e21))
    init = np.array([1 - p2, p2, 0.0])
    extra = np.log(float(init @ emission[:, 1]))  # observed state 2
    got = est.forward_loglik(with_single, SMALL_STRUCTURE, params)
    want = est.forward_loglik(base, SMALL_STRUCTURE, params) + extra
    assert got == pytest.approx(want, abs=1e-12)


def test_single_individual_one_wave():
    # identity misclassification, one 1->1 transition: log pi_1 + log p11
    params = HazardParams(
        beta=np.full(3, -2.0),
        log_q13_0=-2.5,
        log_q23_0=-2.0,
        logit_e12=-40.0,
        logit_e21=-40.0,
        logit_p2=-1.2,
    )
    panel = Panel(np.array([1, 1]), np.array([0.0, 2.0]), np.array([1, 1]),
                  np.array([66.0, 68.0]), np.array([0, 0]))
    q = build_intensity(SMALL_STRUCTURE, params, Covariates(66.0, 0), 1)
    p11 = transition_probability(q, 2.0).matrix[0, 0]
    want = np.log(1.0 - expit(-1.2)) + np.log(p11)
    got = est.forward_loglik(panel, SMALL_STRUCTURE, params)
    assert got == pytest.approx(want, rel=1e-12)


def test_total_probability_over_observed_sequences():
    structure = ModelStructure(knots=(58.0, 68.0, 80.0), wave_times=(0.0, 2.0, 4.0))
    rng = np.random.default_rng(9)
    params = random_params(rng, structure)
    total = 0.0
    for seq in product((1, 2, 3), repeat=3):
        panel = Panel(
            np.zeros(3, dtype=int), np.array([0.0, 2.0, 4.0]), np.array(seq),
            np.array([70.0, 72.0, 74.0]), np.zeros(3, dtype=int),
        )
        ll = est.forward_loglik(panel, structure, params, validate=False)
        total += np.exp(ll)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_order_invariance():
    rng = np.random.default_rng(77)
    params = random_params(rng, SMALL_STRUCTURE)
    panel = random_panel(rng, SMALL_STRUCTURE, n_individuals=20)
    base = est.forward_loglik(panel, SMALL_STRUCTURE, params)
    perm = rng.permutation(len(panel))
    shuffled = Panel(panel.ids[perm], panel.times[perm], panel.states[perm],
                     panel.ages[perm], panel.female[perm])
    assert est.forward_loglik(shuffled, SMALL_STRUCTURE, params) == pytest.approx(base, abs=1e-10)


def test_observation_after_death_rejected():
    panel = Panel(np.array([1, 1, 1]), np.array([0.0, 2.0, 4.0]), np.array([1, 3, 1]),
                  np.array([66.0, 68.0, 70.0]), np.array([0, 0, 0]))
    params = random_params(np.random.default_rng(0), SMALL_STRUCTURE)
    with pytest.raises(DataValidationError):
        est.forward_loglik(panel, SMALL_STRUCTURE, params)


# ---------------------------------------------------------------------------
# numerical Hessian


def test_hessian_covariance_exact_for_quadratic():
    rng = np.random.default_rng(12)
    a = rng.normal(size=4)
    m = rng.normal(size=(4, 4))
    A = m @ m.T + 4 * np.eye(4)

    def loglik(x):
        d = x - a
        return -0.5 * d @ A @ d

    sigma, warnings = est.hessian_covariance(loglik, a + 0.1)
    assert not warnings
    np.testing.assert_allclose(sigma, np.linalg.inv(A), atol=1e-6)
    np.testing.assert_allclose(sigma, sigma.T)
    assert np.linalg.eigvalsh(sigma).min() > 0


def test_hessian_wrong_curvature_raises():
    with pytest.raises(CurvatureError):
        est.hessian_covariance(lambda x: 0.5 * float(x @ x), np.zeros(3))


def test_hessian_near_zero_eigenvalue_pseudo_inverse():
    def loglik(x):
        return -0.5 * x[0] ** 2  # flat in x[1]

    sigma, warnings = est.hessian_covariance(loglik, np.zeros(2))
    assert warnings and "pseudo-inverse" in warnings[0]
    assert sigma[0, 0] == pytest.approx(1.0, rel=1e-6)


def test_richardson_agrees_with_plain_central():
    rng = np.random.default_rng(3)
    a = rng.normal(size=3)

    def fun(x):
        return float(-np.sum((x - a) ** 4) - np.sum((x - a) ** 2))

    h_plain = est.hessian_fd(fun, np.zeros(3), step=1e-4, richardson=False)
    h_rich = est.hessian_fd(fun, np.zeros(3), step=1e-4, richardson=True)
    denom = np.abs(h_plain).max()
    assert np.abs(h_rich - h_plain).max() / denom < 1e-4


# ---------------------------------------------------------------------------
# fitting


def flat_death_panel(n, h, seed):
    """State 1 until death, constant hazard h, full structure."""
    structure = ModelStructure(knots=(58.0, 68.0, 80.0), wave_times=WAVE_TIMES)
    params = HazardParams(
        beta=np.full(8, -40.0),
        log_q13_0=float(np.log(h)),
        log_q23_0=-2.0,
        logit_e12=-40.0, logit_e21=-40.0, logit_p2=-40.0,
    )
    cfg = SimulationConfig(n=n, structure=structure, params=params, seed=seed)
    return structure, simulate_panel(cfg)


def test_death_only_mle_matches_closed_form():
    structure, panel = flat_death_panel(n=4000, h=0.06, seed=13)
    p = panel.sort()
    exposures = deaths = 0
    for _id, sl in p.individual_slices():
        s = p.states[sl]
        exposures += s.size - 1
        deaths += int(s[-1] == 3)
    closed_form = -np.log(1.0 - deaths / exposures) / 2.0

    fixed = {name: -40.0 for name in [f"beta_{k}" for k in range(1, 9)]}
    fixed.update({
        "female_12": 0.0, "age_spline_12_1": 0.0, "age_spline_12_2": 0.0,
        "age_spline_f_12_1": 0.0, "age_spline_f_12_2": 0.0,
        "female_13": 0.0, "age_13": 0.0, "trend_13": 0.0,
        "log_q23_0": -2.0, "female_23": 0.0, "age_23": 0.0, "trend_23": 0.0,
        "logit_e12": -40.0, "logit_e21": -40.0, "logit_p2": -40.0,
    })
    result = est.fit_msm(panel, structure, fixed=fixed)
    assert result.converged
    assert result["log_q13_0"] == pytest.approx(np.log(closed_form), abs=1e-5)


@pytest.fixture(scope="module")
def small_fit():
    structure = paperlike_structure()
    truth = paperlike_params()
    cfg = SimulationConfig(n=1500, structure=structure, params=truth, seed=7)
    panel = simulate_panel(cfg)
    result = est.fit_msm(panel, structure)
    return structure, panel, result


def test_fit_converges_and_gradient_small(small_fit):
    structure, panel, result = small_fit
    assert result.converged
    design = est.PanelDesign(panel, structure)
    grad = est.gradient_fd(design.loglik, result.estimates, step=1e-5)
    assert np.abs(grad).max() < 1e-4


def test_refit_from_optimum_is_immediate(small_fit):
    structure, panel, result = small_fit
    again = est.fit_msm(panel, structure, start=result.estimates, compute_cov=False)
    assert again.loglik == pytest.approx(result.loglik, abs=1e-10 * max(1.0, abs(result.loglik)))


def test_extract_trend_shapes(small_fit):
    structure, _, result = small_fit
    trend = est.extract_trend(result, structure)
    assert trend.beta.shape == (8,)
    assert trend.cov.shape == (8, 8)
    np.testing.assert_allclose(trend.var_diag, np.diag(trend.cov))
    assert trend.n_transitions == result.n_transitions
    idx = [result.names.index(f"beta_{k}") for k in range(1, 9)]
    np.testing.assert_array_equal(trend.beta, result.estimates[idx])


def test_trend_json_roundtrip(small_fit):
    structure, _, result = small_fit
    trend = est.extract_trend(result, structure)
    doc = trend.to_json_dict()
    back = est.TrendSeries.from_json_dict(doc)
    np.testing.assert_array_equal(back.beta, trend.beta)
    np.testing.assert_array_equal(back.cov, trend.cov)


def test_fixed_names_validated(small_fit):
    structure, panel, _ = small_fit
    with pytest.raises(InvalidArgumentError):
        est.fit_msm(panel, structure, fixed={"nope": 1.0})
