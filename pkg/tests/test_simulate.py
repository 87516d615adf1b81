import numpy as np
import pytest
from scipy import stats

from fishyvar.chains import Ar1Model, CoupledKernel, FiniteChainModel, MarkovKernel
from fishyvar.couplings import ar1_kernel, finite_kernel
from fishyvar.rng import RngStream
from fishyvar.simulate import (
    TransitionBudgetError,
    run_coupled,
    sample_meetings,
)

from conftest import random_finite_chain


def _iid_rows_model(p):
    """Chain whose rows all equal p (an i.i.d. sequence)."""
    p = np.asarray(p, dtype=float)
    matrix = np.tile(p, (p.size, 1))
    return FiniteChainModel(matrix, np.zeros((p.size, 1)))


def _independent_coupling(model):
    """Reference coupling: both coordinates drawn independently."""
    cum = np.cumsum(model.transition_matrix, axis=1)

    def step(x, y, rng):
        return (
            int(np.searchsorted(cum[x], rng.random(), side="right")),
            int(np.searchsorted(cum[y], rng.random(), side="right")),
        )

    base = MarkovKernel(1, lambda s, rng: int(np.searchsorted(cum[s], rng.random(), "right")))
    return CoupledKernel(base, step)


def test_equal_start_lag_zero_is_free():
    kernel = ar1_kernel(Ar1Model(0.5))
    run = run_coupled(kernel, 1.0, 1.0, 0, 0, RngStream(0).generator())
    assert run.meeting_time == 0
    assert run.cost_units == 0


def test_meeting_time_geometric_under_independent_coupling():
    p = np.array([0.3, 0.2, 0.5])
    model = _iid_rows_model(p)
    kernel = _independent_coupling(model)
    q = float(np.sum(p**2))
    rng = RngStream(1).generator()
    n = 10**4
    taus = np.array(
        [run_coupled(kernel, 0, 1, 0, 0, rng, keep_paths=False).meeting_time for _ in range(n)]
    )
    assert taus.min() >= 1
    # chi-square against Geometric(q) with the tail binned
    k_max = int(np.quantile(taus, 0.99))
    observed = np.bincount(np.minimum(taus, k_max + 1), minlength=k_max + 2)[1:]
    probs = np.array([(1 - q) ** (k - 1) * q for k in range(1, k_max + 1)])
    probs = np.append(probs, 1.0 - probs.sum())
    assert stats.chisquare(observed, n * probs).pvalue > 1e-3


def test_ar1_meeting_times_have_geometric_tail():
    kernel = ar1_kernel(Ar1Model(0.99, 1.0))
    stream = RngStream(2)
    n = 1000
    samples = sample_meetings(kernel, lambda rng: 4.0 * rng.standard_normal(), 0, n, stream)
    taus = np.array([s.tau for s in samples])
    assert np.all(taus < np.inf)
    grid = np.arange(int(np.quantile(taus, 0.3)), int(np.quantile(taus, 0.97)))
    survival = np.array([(taus > t).mean() for t in grid])
    keep = survival > 0
    slope, intercept = np.polyfit(grid[keep], np.log(survival[keep]), 1)
    fitted = slope * grid[keep] + intercept
    resid = np.log(survival[keep]) - fitted
    r2 = 1 - resid @ resid / np.sum((np.log(survival[keep]) - np.log(survival[keep]).mean()) ** 2)
    assert slope < 0
    assert r2 > 0.9


def test_post_meeting_identity_and_warmup_costs(np_rng):
    model = random_finite_chain(np_rng)
    kernel = finite_kernel(model)
    lag = 3
    for seed in range(100):
        rng = RngStream(seed, 100).generator()
        run = run_coupled(kernel, 0, 1, lag, 40, rng)
        tau = run.meeting_time
        assert tau >= lag + 1
        for t in range(tau, run.horizon + 1):
            assert run.x_path[t] == run.y_at(t - lag)
        # Y is stored only up to the meeting; the mirror serves the rest
        assert len(run.y_path) == tau - lag + 1


def test_pure_run_cost_identity(np_rng):
    model = random_finite_chain(np_rng)
    kernel = finite_kernel(model)
    for lag in (0, 1, 5):
        for seed in range(50):
            run = run_coupled(kernel, 0, 2, lag, 0, RngStream(seed, 200).generator())
            assert run.cost_units == lag + 2 * (run.meeting_time - lag)


def test_warmup_consumes_exactly_lag_transitions():
    calls = {"single": 0, "coupled": 0}

    def base_step(x, rng):
        calls["single"] += 1
        return x + 1

    def coupled_step(x, y, rng):
        calls["coupled"] += 1
        return x + 1, x + 1  # meet immediately

    kernel = CoupledKernel(MarkovKernel(1, base_step), coupled_step)
    lag = 7
    run = run_coupled(kernel, 0, 100, lag, 0, RngStream(3).generator())
    assert calls["single"] == lag
    assert calls["coupled"] == 1
    assert run.meeting_time == lag + 1


def test_extend_to_continues_single_chain(np_rng):
    model = random_finite_chain(np_rng)
    kernel = finite_kernel(model)
    run = run_coupled(kernel, 0, 1, 2, 0, RngStream(4).generator())
    h0 = run.horizon
    cost0 = run.cost_units
    run.extend_to(h0 + 25)
    assert run.horizon == h0 + 25
    assert run.cost_units == cost0 + 25
    run.extend_to(10)  # no-op when already long enough
    assert run.horizon == h0 + 25


def test_budget_abort():
    kernel = ar1_kernel(Ar1Model(0.99, 1.0))

    def never_meet(x, y, rng):
        nxt = kernel.base.step(x, rng)
        return nxt, nxt + 1.0

    broken = CoupledKernel(kernel.base, never_meet)
    with pytest.raises(TransitionBudgetError):
        run_coupled(broken, 0.0, 5.0, 0, 0, RngStream(5).generator(), budget=1000)


def test_sample_meetings_single_rep_matches_run_coupled():
    kernel = ar1_kernel(Ar1Model(0.9))
    stream = RngStream(6)
    sample = sample_meetings(kernel, lambda rng: rng.standard_normal(), 1, 1, stream)[0]
    rng = stream.child(0).generator()
    x0 = rng.standard_normal()
    y0 = rng.standard_normal()
    run = run_coupled(kernel, x0, y0, 1, 0, rng)
    assert sample.tau == run.meeting_time
    assert sample.cost_units == run.cost_units
    assert (sample.x0, sample.y0) == (x0, y0)


def test_sample_meetings_worker_count_invariance():
    kernel = ar1_kernel(Ar1Model(0.9))
    init = lambda rng: 4.0 * rng.standard_normal()
    one = sample_meetings(kernel, init, 2, 64, RngStream(7), n_workers=1)
    eight = sample_meetings(kernel, init, 2, 64, RngStream(7), n_workers=8)
    assert [(s.tau, s.x0, s.y0) for s in one] == [(s.tau, s.x0, s.y0) for s in eight]


def test_meeting_quantiles_stabilize_across_batches():
    kernel = ar1_kernel(Ar1Model(0.5))
    init = lambda rng: 4.0 * rng.standard_normal()
    a = np.array([s.tau for s in sample_meetings(kernel, init, 0, 10**4, RngStream(8))])
    b = np.array([s.tau for s in sample_meetings(kernel, init, 0, 10**4, RngStream(9))])
    hi = int(max(a.max(), b.max()))
    grid = np.arange(hi + 1)
    cdf_a = np.searchsorted(np.sort(a), grid, side="right") / a.size
    cdf_b = np.searchsorted(np.sort(b), grid, side="right") / b.size
    assert np.abs(cdf_a - cdf_b).max() < 0.03
