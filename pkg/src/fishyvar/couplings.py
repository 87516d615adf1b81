"""Implementable couplings that trigger exact meetings.

Building blocks: a rejection sampler for the maximal coupling of two arbitrary
distributions given log-densities and samplers, reflection-maximal couplings of
equal-covariance Normals (univariate and multivariate, with deterministic
cost), a coupled MRTH kernel sharing one acceptance uniform, and the
common-random-number + maximal-coupling construction for the Cauchy location
Gibbs sampler.  ``make_coupled_kernel`` assembles a faithful
:class:`~fishyvar.chains.CoupledKernel` for every built-in model.

All acceptance ratios are computed in log space; ties resolve as accept.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .chains import (
    Ar1Model,
    CauchyNormalModel,
    CoupledKernel,
    FiniteChainModel,
    MarkovKernel,
    ar1_step,
    finite_step,
    gibbs_conditional,
    gibbs_step,
    mrth_step,
)

__all__ = [
    "CouplingSpec",
    "MaximalCouplingCapError",
    "maximal_coupling",
    "reflection_maximal_1d",
    "reflection_maximal_nd",
    "coupled_mrth_step",
    "coupled_gibbs_step",
    "make_coupled_kernel",
    "ar1_kernel",
    "cauchy_gibbs_kernel",
    "cauchy_mrth_kernel",
    "finite_kernel",
]

DEFAULT_REJECTION_CAP = 10**7

COUPLING_KINDS = (
    "maximal-rejection",
    "reflection-maximal",
    "common-random-numbers",
    "switch-to-crn-composite",
)


class MaximalCouplingCapError(RuntimeError):
    """The rejection loop of the maximal coupling exceeded its iteration cap.

    Signals a near-singular density ratio between the two distributions.
    """


@dataclass(frozen=True)
class CouplingSpec:
    """Choice of coupling construction, selectable per model in configs."""

    kind: str = "reflection-maximal"
    parameters: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in COUPLING_KINDS:
            raise ValueError(f"unknown coupling kind {self.kind!r}; valid: {COUPLING_KINDS}")


def maximal_coupling(
    log_p: Callable,
    sample_p: Callable[[np.random.Generator], object],
    log_q: Callable,
    sample_q: Callable[[np.random.Generator], object],
    rng: np.random.Generator,
    max_rejections: int = DEFAULT_REJECTION_CAP,
) -> tuple[object, object, bool]:
    """Draw (X, Y) from a maximal coupling of two distributions.

    X is marginally p, Y marginally q, and P(X = Y) equals one minus the total
    variation distance between them.  Densities are supplied in log form and
    may be with respect to any common dominating measure (pmfs work too).

    The rejection phase has unbounded cost in principle; `max_rejections`
    turns a pathological loop into a diagnosable failure.  The bounded-variance
    variant of this sampler is a known extension point, not implemented here.
    """
    x = sample_p(rng)
    w = rng.random()
    log_w = math.log(w) if w > 0.0 else -math.inf
    if log_w <= log_q(x) - log_p(x):
        return x, x, True
    for _ in range(max_rejections):
        y = sample_q(rng)
        w = rng.random()
        log_w = math.log(w) if w > 0.0 else -math.inf
        if log_w > log_p(y) - log_q(y):
            return x, y, False
    raise MaximalCouplingCapError(
        f"maximal coupling rejection loop exceeded {max_rejections} iterations; "
        "the density ratio is likely near-singular"
    )


def reflection_maximal_1d(
    mu1: float,
    mu2: float,
    sigma: float,
    rng: np.random.Generator,
) -> tuple[float, float, bool]:
    """Reflection-maximal coupling of Normal(mu1, sigma^2) and Normal(mu2, sigma^2).

    Uses exactly one Normal and one uniform draw.  On acceptance Y = X (the
    chains meet); on rejection the residual is reflected, so
    (X - mu1) = -(Y - mu2).  Broadcasts over arrays of means.
    """
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if np.isscalar(mu1) and np.isscalar(mu2):
        z = (mu1 - mu2) / sigma
        xdot = rng.standard_normal()
        w = rng.random()
        x = mu1 + sigma * xdot
        log_w = math.log(w) if w > 0.0 else -math.inf
        if log_w <= -0.5 * (z + xdot) ** 2 + 0.5 * xdot**2:
            return x, x, True
        return x, mu2 - sigma * xdot, False
    mu1, mu2 = np.broadcast_arrays(np.asarray(mu1, float), np.asarray(mu2, float))
    z = (mu1 - mu2) / sigma
    xdot = rng.standard_normal(mu1.shape)
    w = rng.random(mu1.shape)
    x = mu1 + sigma * xdot
    with np.errstate(divide="ignore"):
        met = np.log(w) <= -0.5 * (z + xdot) ** 2 + 0.5 * xdot**2
    y = np.where(met, x, mu2 - sigma * xdot)
    return x, y, met


def reflection_maximal_nd(
    mu1: np.ndarray,
    mu2: np.ndarray,
    chol_sigma: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Reflection-maximal coupling of two Normals sharing covariance L L^T.

    The standardised difference z = L^{-1}(mu1 - mu2) drives a Householder
    reflection of the standardised draw on rejection.  In dimension one this
    consumes the same draws as :func:`reflection_maximal_1d` and returns
    identical outputs.
    """
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    chol = np.asarray(chol_sigma, dtype=float)
    if chol.ndim != 2 or chol.shape[0] != chol.shape[1]:
        raise ValueError("chol_sigma must be a square lower-triangular factor")
    if np.any(np.abs(np.diag(chol)) < 1e-300):
        raise ValueError("chol_sigma is not invertible")
    d = chol.shape[0]
    xdot = rng.standard_normal(d)
    w = rng.random()
    x = chol @ xdot + mu1
    if np.array_equal(mu1, mu2):
        return x, x.copy(), True
    z = np.linalg.solve(chol, mu1 - mu2)
    log_w = math.log(w) if w > 0.0 else -math.inf
    if log_w <= -0.5 * np.dot(z + xdot, z + xdot) + 0.5 * np.dot(xdot, xdot):
        return x, x.copy(), True
    e = z / np.linalg.norm(z)
    ydot = xdot - 2.0 * np.dot(e, xdot) * e
    return x, chol @ ydot + mu2, False


def coupled_mrth_step(
    logdensity: Callable[[float], float],
    proposal_sd: float,
    x: float,
    y: float,
    rng: np.random.Generator,
) -> tuple[float, float, bool]:
    """Coupled MRTH transition: reflection-maximal proposals, one shared uniform.

    Returns the pair of next states and whether the proposals coincided.  Equal
    inputs give identical proposals and identical accept decisions, so the
    chains stay merged.
    """
    xstar, ystar, proposals_met = reflection_maximal_1d(x, y, proposal_sd, rng)
    u = rng.random()
    log_u = math.log(u) if u > 0.0 else -math.inf
    log_x = logdensity(x)
    x_next = xstar if _accepts(log_u, logdensity(xstar) - log_x) else x
    if proposals_met and x == y:
        return x_next, x_next, True
    y_next = ystar if _accepts(log_u, logdensity(ystar) - logdensity(y)) else y
    return x_next, y_next, proposals_met


def _accepts(log_u: float, delta: float) -> bool:
    if math.isnan(delta):
        warnings.warn(
            "log-density returned NaN at proposed point; move rejected",
            RuntimeWarning,
            stacklevel=3,
        )
        return False
    return log_u <= delta


def coupled_gibbs_step(
    model: CauchyNormalModel,
    theta: float,
    theta_tilde: float,
    rng: np.random.Generator,
    max_rejections: int = DEFAULT_REJECTION_CAP,
) -> tuple[float, float]:
    """Coupled Gibbs sweep for the Cauchy location posterior.

    The auxiliary Exponential draws share uniforms through the inverse CDF;
    the location updates are joined by a maximal coupling of the two
    conditional Normals.
    """
    z = np.asarray(model.observations)
    u = rng.random(z.shape[0])
    log_u = np.log(u)
    eta = -2.0 * log_u / (1.0 + (theta - z) ** 2)
    eta_tilde = -2.0 * log_u / (1.0 + (theta_tilde - z) ** 2)
    m1, v1 = gibbs_conditional(model, eta)
    m2, v2 = gibbs_conditional(model, eta_tilde)
    if m1 == m2 and v1 == v2:
        draw = m1 + math.sqrt(v1) * rng.standard_normal()
        return draw, draw
    x, y, _ = maximal_coupling(
        lambda t: _normal_logpdf(t, m1, v1),
        lambda r: m1 + math.sqrt(v1) * r.standard_normal(),
        lambda t: _normal_logpdf(t, m2, v2),
        lambda r: m2 + math.sqrt(v2) * r.standard_normal(),
        rng,
        max_rejections=max_rejections,
    )
    return x, y


def _normal_logpdf(t: float, mean: float, var: float) -> float:
    return -0.5 * (t - mean) ** 2 / var - 0.5 * math.log(var)


# ---------------------------------------------------------------------------
# Kernel assembly per model
# ---------------------------------------------------------------------------


def ar1_kernel(model: Ar1Model, spec: CouplingSpec | None = None) -> CoupledKernel:
    """AR(1) kernel with reflection-maximal (default) or CRN coupling."""
    spec = spec or CouplingSpec("reflection-maximal")
    base = MarkovKernel(1, lambda x, rng: ar1_step(model, x, rng), label="ar1")
    phi, sigma = model.phi, model.sigma
    if spec.kind == "reflection-maximal":

        def step(x, y, rng):
            xn, yn, _ = reflection_maximal_1d(phi * x, phi * y, sigma, rng)
            return xn, yn

    elif spec.kind == "common-random-numbers":
        # Contracts |x - y| by phi each step; exact meetings only once the gap
        # underflows, so prefer reflection-maximal for estimator work.
        def step(x, y, rng):
            w = rng.standard_normal()
            return phi * x + sigma * w, phi * y + sigma * w

    else:
        raise ValueError(f"coupling kind {spec.kind!r} not available for ar1")
    return CoupledKernel(base, step)


def cauchy_gibbs_kernel(
    model: CauchyNormalModel, spec: CouplingSpec | None = None
) -> CoupledKernel:
    """Gibbs kernel for the Cauchy posterior, CRN auxiliaries + maximal update."""
    spec = spec or CouplingSpec("common-random-numbers")
    if spec.kind != "common-random-numbers":
        raise ValueError(f"coupling kind {spec.kind!r} not available for cauchy-gibbs")
    base = MarkovKernel(1, lambda t, rng: gibbs_step(model, t, rng), label="cauchy-gibbs")
    return CoupledKernel(base, lambda x, y, rng: coupled_gibbs_step(model, x, y, rng))


def cauchy_mrth_kernel(
    model: CauchyNormalModel, spec: CouplingSpec | None = None
) -> CoupledKernel:
    """MRTH kernel for the Cauchy posterior with reflection-coupled proposals."""
    spec = spec or CouplingSpec("reflection-maximal")
    if spec.kind != "reflection-maximal":
        raise ValueError(f"coupling kind {spec.kind!r} not available for cauchy-mrth")
    logdensity = model.log_density
    sd = model.mrth_proposal_sd
    base = MarkovKernel(1, lambda t, rng: mrth_step(logdensity, sd, t, rng), label="cauchy-mrth")

    def step(x, y, rng):
        xn, yn, _ = coupled_mrth_step(logdensity, sd, x, y, rng)
        return xn, yn

    return CoupledKernel(base, step)


def finite_kernel(model: FiniteChainModel, spec: CouplingSpec | None = None) -> CoupledKernel:
    """Finite-chain kernel coupled by row-wise maximal coupling (default) or CRN."""
    spec = spec or CouplingSpec("maximal-rejection")
    base = MarkovKernel(1, lambda s, rng: finite_step(model, s, rng), label="finite")
    p = model.transition_matrix
    cum = model._cumulative_rows
    if spec.kind == "maximal-rejection":
        # The rejection maximal coupling specialized to pmf rows, with the
        # same draw sequence and accept rule as `maximal_coupling` (the ratio
        # test w <= q/p becomes w * p <= q, exact for probabilities).
        def step(x, y, rng, _cap=DEFAULT_REJECTION_CAP):
            if x == y:
                nxt = finite_step(model, x, rng)
                return nxt, nxt
            row_x, row_y = p[x], p[y]
            cum_y = cum[y]
            nxt = int(cum[x].searchsorted(rng.random(), side="right"))
            if rng.random() * row_x[nxt] <= row_y[nxt]:
                return nxt, nxt
            for _ in range(_cap):
                other = int(cum_y.searchsorted(rng.random(), side="right"))
                if rng.random() * row_y[other] > row_x[other]:
                    return nxt, other
            raise MaximalCouplingCapError(
                f"maximal coupling rejection loop exceeded {_cap} iterations"
            )

    elif spec.kind == "common-random-numbers":

        def step(x, y, rng):
            u = rng.random()
            return (
                int(cum[x].searchsorted(u, side="right")),
                int(cum[y].searchsorted(u, side="right")),
            )

    else:
        raise ValueError(f"coupling kind {spec.kind!r} not available for finite chains")
    return CoupledKernel(base, step)


_FACTORIES = {
    Ar1Model: ar1_kernel,
    CauchyNormalModel: cauchy_gibbs_kernel,
    FiniteChainModel: finite_kernel,
}


def make_coupled_kernel(model, spec: CouplingSpec | None = None) -> CoupledKernel:
    """Assemble the faithful coupled kernel for a built-in model.

    For the Cauchy posterior this picks the Gibbs sampler; use
    :func:`cauchy_mrth_kernel` explicitly for the MRTH alternative.
    """
    try:
        factory = _FACTORIES[type(model)]
    except KeyError:
        raise TypeError(f"no coupled kernel factory for {type(model).__name__}") from None
    return factory(model, spec)
