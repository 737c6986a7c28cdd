"""Synthetic interval-censored panels with misclassification.

Each individual follows the continuous-time illness-death process with
intensities held constant within a wave interval (matching the estimator's
piecewise-constant assumption), simulated by competing exponential clocks.
Only wave-time snapshots are emitted, so transitions are interval censored
and death is recorded at the next wave time.  Observed states for 1 and 2
are misreported with the model's misclassification probabilities; death is
reported exactly.

Randomness is drawn from per-individual substreams keyed by (seed, id) with
a fixed draw budget per individual, so output is independent of generation
order or chunking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InvalidArgumentError, InvalidSpecError
from .markov import HazardParams, ModelStructure, _linear_predictors
from .panel import Panel

__all__ = ["SimulationConfig", "simulate_individual_path", "apply_observation_scheme", "simulate_panel"]

_DRAWS_PER_INTERVAL = 3  # event clock, destination pick, onward clock


@dataclass(frozen=True)
class SimulationConfig:
    """Ground-truth model plus population settings for a synthetic panel."""

    n: int
    structure: ModelStructure
    params: HazardParams
    seed: int
    age_range: tuple = (52.0, 88.0)
    female_share: float = 0.55

    def __post_init__(self):
        if self.n < 1:
            raise InvalidSpecError(f"individual count must be >= 1, got {self.n}")
        lo, hi = self.age_range
        if not (0 < lo < hi):
            raise InvalidSpecError("age_range must satisfy 0 < lo < hi")
        if not 0.0 <= self.female_share <= 1.0:
            raise InvalidSpecError("female_share must lie in [0, 1]")
        self.params.validate(self.structure)


def _individual_uniforms(seed: int, ident: int, n_waves: int) -> np.ndarray:
    """Fixed-budget uniform draws for one individual.

    Layout: [age, female, initial state, path (3 per interval), report (one
    per wave)].  A fixed layout keeps results identical however generation
    is scheduled.
    """
    rng = np.random.default_rng([seed, ident])
    return rng.random(3 + _DRAWS_PER_INTERVAL * n_waves + (n_waves + 1))


def simulate_individual_path(
    structure: ModelStructure,
    params: HazardParams,
    age0: float,
    female: int,
    u: np.ndarray,
    state0: int = 1,
) -> np.ndarray:
    """Latent state at each wave time for one individual.

    ``u`` supplies the path uniforms (3 per interval).  Within interval k the
    intensities are evaluated at the interval's left endpoint (age advances
    deterministically with the wave clock) and the exit time from the current
    state is an exponential clock; a second clock covers an onward 2->3 move
    within the same interval.
    """
    T = structure.n_waves
    wt = structure.wave_times
    states = np.empty(T + 1, dtype=np.int64)
    states[0] = state0
    state = state0
    for k in range(1, T + 1):
        if state == 3:
            states[k] = 3
            continue
        t_left = wt[k - 1]
        width = wt[k] - wt[k - 1]
        lin12, lin13, lin23 = _linear_predictors(
            structure, params, [age0 + t_left], [female], [k]
        )
        q12, q13, q23 = math.exp(lin12[0]), math.exp(lin13[0]), math.exp(lin23[0])
        u1, u2, u3 = u[3 * (k - 1): 3 * k]
        if state == 1:
            total = q12 + q13
            t_event = math.inf if total == 0.0 else -math.log(1.0 - u1) / total
            if t_event >= width:
                states[k] = 1
                continue
            if u2 < q12 / total:
                # onset within the interval; may still die before the next wave
                remaining = width - t_event
                t_death = math.inf if q23 == 0.0 else -math.log(1.0 - u3) / q23
                state = 3 if t_death < remaining else 2
            else:
                state = 3
        else:  # state == 2
            t_death = math.inf if q23 == 0.0 else -math.log(1.0 - u1) / q23
            if t_death < width:
                state = 3
        states[k] = state
    return states


def apply_observation_scheme(latent: np.ndarray, e12: float, e21: float, u: np.ndarray) -> np.ndarray:
    """Misreport latent states 1 and 2; death is observed exactly."""
    observed = latent.copy()
    flip1 = (latent == 1) & (u[: latent.size] < e12)
    flip2 = (latent == 2) & (u[: latent.size] < e21)
    observed[flip1] = 2
    observed[flip2] = 1
    return observed


def _latent_paths_vectorized(config: SimulationConfig, u: np.ndarray, age0, fem, state0):
    """All individuals' latent wave states at once.

    Replays exactly the clock logic of :func:`simulate_individual_path` on
    the shared uniform layout, so the two agree element for element.
    """
    structure, params = config.structure, config.params
    T = structure.n_waves
    wt = structure.wave_times
    n = config.n
    states = np.empty((n, T + 1), dtype=np.int64)
    states[:, 0] = state0
    state = state0.copy()
    for k in range(1, T + 1):
        width = wt[k] - wt[k - 1]
        lin12, lin13, lin23 = _linear_predictors(
            structure, params, age0 + wt[k - 1], fem, np.full(n, k)
        )
        q12 = np.exp(lin12)
        q13 = np.exp(lin13)
        q23 = np.exp(lin23)
        u1 = u[:, 3 * (k - 1)]
        u2 = u[:, 3 * (k - 1) + 1]
        u3 = u[:, 3 * (k - 1) + 2]

        with np.errstate(divide="ignore"):
            total = q12 + q13
            t_event = np.where(total > 0, -np.log(1.0 - u1) / np.where(total > 0, total, 1.0), np.inf)
            t_onward = np.where(q23 > 0, -np.log(1.0 - u3) / np.where(q23 > 0, q23, 1.0), np.inf)
            t_death2 = np.where(q23 > 0, -np.log(1.0 - u1) / np.where(q23 > 0, q23, 1.0), np.inf)

        from1 = state == 1
        from2 = state == 2
        moved = from1 & (t_event < width)
        to_ill = moved & (u2 < q12 / np.maximum(total, 1e-300))
        to_dead_direct = moved & ~to_ill
        # onset inside the interval may be followed by death before the wave
        onset_then_dead = to_ill & (t_onward < width - t_event)
        die_from2 = from2 & (t_death2 < width)

        new_state = state.copy()
        new_state[to_ill] = 2
        new_state[onset_then_dead | to_dead_direct | die_from2] = 3
        state = new_state
        states[:, k] = state
    return states


def simulate_panel(config: SimulationConfig) -> Panel:
    """Generate an observed panel; deterministic given the seed."""
    structure, params = config.structure, config.params
    T = structure.n_waves
    wt = np.asarray(structure.wave_times)
    lo, hi = config.age_range
    e12 = expit(params.logit_e12)
    e21 = expit(params.logit_e21)
    p2 = expit(params.logit_p2)

    u = np.empty((config.n, 3 + _DRAWS_PER_INTERVAL * T + (T + 1)))
    for ident in range(config.n):
        u[ident] = _individual_uniforms(config.seed, ident, T)
    age0 = lo + u[:, 0] * (hi - lo)
    fem = (u[:, 1] < config.female_share).astype(np.int64)
    state0 = np.where(u[:, 2] < p2, 2, 1).astype(np.int64)

    latent = _latent_paths_vectorized(config, u[:, 3: 3 + 3 * T], age0, fem, state0)
    u_obs = u[:, 3 + 3 * T:]
    observed = latent.copy()
    observed[(latent == 1) & (u_obs < e12)] = 2
    observed[(latent == 2) & (u_obs < e21)] = 1

    # emit snapshots up to and including the first observed death
    dead_any = observed == 3
    first_dead = np.where(dead_any.any(axis=1), dead_any.argmax(axis=1), T)
    keep = np.arange(T + 1)[None, :] <= first_dead[:, None]
    rows_per = keep.sum(axis=1)

    ids = np.repeat(np.arange(config.n), rows_per)
    times = np.broadcast_to(wt, (config.n, T + 1))[keep]
    states = observed[keep]
    ages = (age0[:, None] + wt[None, :])[keep]
    female = np.repeat(fem, rows_per)
    return Panel(ids, times, states, ages, female)


def crude_incidence_rate(panel: Panel) -> float:
    """Observed 1->2 events per person-year of state-1 exposure."""
    p = panel.sort()
    events = 0
    person_years = 0.0
    for _id, sl in p.individual_slices():
        s = p.states[sl]
        t = p.times[sl]
        for j in range(s.size - 1):
            if s[j] == 1:
                person_years += t[j + 1] - t[j]
                if s[j + 1] == 2:
                    events += 1
    if person_years == 0.0:
        raise InvalidArgumentError("no state-1 exposure in panel")
    return events / person_years
