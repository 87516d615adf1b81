"""Unbiased estimation of stationary expectations from lagged coupled chains.

The time-averaged estimator over offsets k..ell with lag L combines a plain
ergodic average of h over X_k..X_ell with a bias-cancellation sum of weighted
differences h(X_t) - h(Y_{t-L}) for t in [k+L, tau-1].  The multiplicity
weight v_t counts how many offsets in [k, ell] reach index t in jumps of L.
Replacing h by point masses turns the same object into a signed measure with
atoms on the visited states, an unbiased approximation of the target that can
be integrated against any test function or subsampled.

Cost accounting: one unit per single-chain transition, two per coupled one,
giving max(L, ell + L - tau) + 2 (tau - L) units per estimator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .chains import CoupledKernel, State, TestFunction
from .rng import RngStream
from .simulate import (
    DEFAULT_TRANSITION_BUDGET,
    CoupledRun,
    map_replicates,
    run_coupled,
)

__all__ = [
    "SignedMeasure",
    "UnbiasedEstimate",
    "PilotTuning",
    "vt_weight",
    "h_kl_estimator",
    "signed_measure",
    "subsample_estimator",
    "reservoir_select",
    "UniformReservoir",
    "estimator_cost",
    "sample_unbiased",
    "pilot_tuning",
]


def vt_weight(t: int, k: int, ell: int, lag: int) -> int:
    """Multiplicity of the bias-correction term at time t.

    Counts the offsets s in [k, ell] for which some positive multiple of the
    lag lands on t, i.e. |{s in [k, ell], j >= 1 : s + j lag = t}|; zero for
    t < k + lag.
    """
    if lag < 1:
        raise ValueError("lag must be at least 1")
    if k > ell:
        raise ValueError("k must not exceed ell")
    if t < k + lag:
        return 0
    ceil_term = -((-max(lag, t - ell)) // lag)
    return (t - k) // lag - ceil_term + 1


def estimator_cost(k: int, ell: int, lag: int, tau: int) -> int:
    """Transition units consumed by one time-averaged estimator."""
    return max(lag, ell + lag - tau) + 2 * (tau - lag)


@dataclass(frozen=True)
class UnbiasedEstimate:
    """Value and cost of one time-averaged unbiased estimator of pi(h)."""

    value: np.ndarray
    cost_units: int
    k: int
    ell: int
    lag: int
    tau: int

    @property
    def scalar(self) -> float:
        return float(self.value[0])


def h_kl_estimator(run: CoupledRun, h: TestFunction, k: int, ell: int) -> UnbiasedEstimate:
    """Time-averaged unbiased estimator of pi(h) from one lagged run.

    Extends the run's single chain internally if its horizon falls short of
    ``ell``.  When the meeting happens at or before k + lag the correction sum
    is empty and the value is the plain ergodic average.
    """
    lag = run.lag
    if lag < 1:
        raise ValueError("the time-averaged estimator requires lag >= 1")
    if k > ell:
        raise ValueError("k must not exceed ell")
    run.extend_to(ell)
    x = run.x_path
    tau = run.meeting_time
    w0 = 1.0 / (ell - k + 1)

    if h.arity == 1:
        hfn = h.eval_scalar
        total = 0.0
        for t in range(k, ell + 1):
            total += hfn(x[t])
        total *= w0
        for t in range(k + lag, tau):
            total += vt_weight(t, k, ell, lag) * w0 * (hfn(x[t]) - hfn(run.y_at(t - lag)))
        value = np.array([total])
    else:
        value = np.zeros(h.arity)
        for t in range(k, ell + 1):
            value += h.eval(x[t])
        value *= w0
        for t in range(k + lag, tau):
            value += vt_weight(t, k, ell, lag) * w0 * (h.eval(x[t]) - h.eval(run.y_at(t - lag)))

    return UnbiasedEstimate(value, estimator_cost(k, ell, lag, tau), k, ell, lag, tau)


@dataclass(frozen=True)
class SignedMeasure:
    """Atoms and signed weights of an unbiased target approximation.

    Duplicate states are kept as distinct atoms.  The weights sum to one
    exactly (correction pairs cancel), and each nonzero weight has magnitude
    between 1/(ell-k+1) and (1 + (ell-k)/lag)/(ell-k+1).
    """

    atoms: list
    weights: np.ndarray
    k: int
    ell: int
    lag: int
    tau: int
    cost_units: int

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def integrate(self, h: TestFunction) -> np.ndarray:
        """Integral of h, equal to the time-averaged estimator's value."""
        if h.arity == 1:
            hfn = h.eval_scalar
            total = 0.0
            for z, w in zip(self.atoms, self.weights):
                total += w * hfn(z)
            return np.array([total])
        out = np.zeros(h.arity)
        for z, w in zip(self.atoms, self.weights):
            out += w * h.eval(z)
        return out

    def pruned(self) -> "SignedMeasure":
        """Copy without zero-weight atoms (subsampling requires nonzero weights)."""
        keep = np.nonzero(self.weights)[0]
        if len(keep) == len(self.atoms):
            return self
        return SignedMeasure(
            [self.atoms[i] for i in keep],
            self.weights[keep],
            self.k,
            self.ell,
            self.lag,
            self.tau,
            self.cost_units,
        )


def signed_measure(run: CoupledRun, k: int, ell: int) -> SignedMeasure:
    """Signed-measure form of the time-averaged estimator.

    Atom order: the ergodic block X_k..X_ell with uniform weight, then for each
    correction time t the pair (X_t, +v_t w0), (Y_{t-lag}, -v_t w0).
    Integrating any h reproduces :func:`h_kl_estimator` exactly.
    """
    lag = run.lag
    if lag < 1:
        raise ValueError("the signed measure requires lag >= 1")
    if k > ell:
        raise ValueError("k must not exceed ell")
    run.extend_to(ell)
    tau = run.meeting_time
    w0 = 1.0 / (ell - k + 1)
    atoms: list = list(run.x_path[k : ell + 1])
    weights: list[float] = [w0] * (ell - k + 1)
    for t in range(k + lag, tau):
        v = vt_weight(t, k, ell, lag) * w0
        atoms.append(run.x_path[t])
        weights.append(v)
        atoms.append(run.y_at(t - lag))
        weights.append(-v)
    return SignedMeasure(
        atoms,
        np.array(weights),
        k,
        ell,
        lag,
        tau,
        estimator_cost(k, ell, lag, tau),
    )


def subsample_estimator(
    pihat: SignedMeasure,
    h: TestFunction,
    R: int,
    xi: np.ndarray | None,
    rng: np.random.Generator | RngStream,
) -> np.ndarray:
    """Estimate pi(h) from R atoms drawn by the selection probabilities.

    Returns the mean over draws of (weight / selection probability) times
    h(atom); with uniform selection this is the mean of N * weight * h(atom).
    Conditionally on the measure the estimator is unbiased for its integral.
    """
    if R < 1:
        raise ValueError("R must be at least 1")
    if isinstance(rng, RngStream):
        rng = rng.generator()
    n = pihat.n_atoms
    if xi is None:
        xi = np.full(n, 1.0 / n)
    else:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (n,):
            raise ValueError("xi must have one probability per atom")
        if np.any(xi <= 0.0):
            raise ValueError("selection probabilities must be strictly positive")
        if abs(xi.sum() - 1.0) > 1e-9:
            raise ValueError("selection probabilities must sum to 1 within 1e-9")
    indices = _categorical(xi, R, rng)
    out = np.zeros(h.arity)
    for i in indices:
        out += (pihat.weights[i] / xi[i]) * h.eval(pihat.atoms[i])
    return out / R


def _categorical(xi: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(xi)
    cum[-1] = 1.0
    return np.searchsorted(cum, rng.random(size), side="right")


class UniformReservoir:
    """R independent single-item reservoirs over a stream of unknown length.

    Offering the n-th item replaces each slot independently with probability
    1/n, so after the stream ends every slot holds one uniform selection,
    i.i.d. across slots.  Memory stays bounded by R items.
    """

    def __init__(self, R: int, rng: np.random.Generator):
        if R < 1:
            raise ValueError("R must be at least 1")
        self._rng = rng
        self.items: list = [None] * R
        self.indices = np.full(R, -1, dtype=int)
        self.count = 0

    def offer(self, item) -> None:
        self.count += 1
        replace = self._rng.random(len(self.items)) < 1.0 / self.count
        for slot in np.nonzero(replace)[0]:
            self.items[slot] = item
            self.indices[slot] = self.count - 1


def reservoir_select(
    stream: Iterable, R: int, rng: np.random.Generator | RngStream
) -> np.ndarray:
    """R independent uniform index selections from a stream, single pass."""
    if isinstance(rng, RngStream):
        rng = rng.generator()
    reservoir = UniformReservoir(R, rng)
    for item in stream:
        reservoir.offer(item)
    if reservoir.count == 0:
        raise ValueError("cannot select from an empty stream")
    return reservoir.indices.copy()


# ---------------------------------------------------------------------------
# Replicated estimators and pilot tuning
# ---------------------------------------------------------------------------


def sample_unbiased(
    kernel: CoupledKernel,
    init_sampler: Callable[[np.random.Generator], State],
    h: TestFunction,
    k: int,
    ell: int,
    lag: int,
    n_reps: int,
    stream: RngStream,
    n_workers: int = 1,
    budget: int = DEFAULT_TRANSITION_BUDGET,
) -> list[UnbiasedEstimate]:
    """Independent replicates of the time-averaged estimator of pi(h)."""

    def one(child: RngStream) -> UnbiasedEstimate:
        rng = child.generator()
        x0 = init_sampler(rng)
        y0 = init_sampler(rng)
        run = run_coupled(kernel, x0, y0, lag, ell, rng, budget=budget)
        return h_kl_estimator(run, h, k, ell)

    return map_replicates(one, stream.children(n_reps), n_workers)


@dataclass(frozen=True)
class PilotTuning:
    """Tuning parameters recommended from a pilot meeting run."""

    k: int
    lag: int
    ell: int
    quantile: float
    n_pilot: int


def pilot_tuning(
    taus: Sequence[int],
    pilot_lag: int,
    quantile: float = 0.99,
    ell_multiple: int = 5,
) -> PilotTuning:
    """Pick (k, lag, ell) from pilot meeting times.

    k and the lag are both set to the requested quantile of the observed
    meeting times, and ell to a multiple of k, which keeps the fraction of
    discarded iterations low.
    """
    taus = np.asarray(list(taus))
    if taus.size == 0:
        raise ValueError("pilot requires at least one meeting time")
    q = int(np.ceil(np.quantile(taus, quantile)))
    k = max(q, 1)
    return PilotTuning(k=k, lag=k, ell=ell_multiple * k, quantile=quantile, n_pilot=taus.size)
