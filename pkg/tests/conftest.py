"""Shared helpers: random chain factories and Monte Carlo error bars."""

from __future__ import annotations

import numpy as np
import pytest

from fishyvar.chains import FiniteChainModel


def random_finite_chain(rng: np.random.Generator, n_states: int = 4, d: int = 1) -> FiniteChainModel:
    """Random irreducible aperiodic chain with strictly positive entries."""
    p = rng.uniform(0.05, 1.0, size=(n_states, n_states))
    p /= p.sum(axis=1, keepdims=True)
    h = rng.uniform(-2.0, 2.0, size=(n_states, d))
    return FiniteChainModel(p, h)


def mc_mean_se(values) -> tuple[float, float]:
    """Monte Carlo mean and its standard error for i.i.d. replicates."""
    values = np.asarray(values, dtype=float)
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))


def batch_se(series, n_batches: int = 100) -> tuple[float, float]:
    """Mean and batch-means standard error for a correlated series."""
    series = np.asarray(series, dtype=float)
    usable = series[: series.size - series.size % n_batches]
    means = usable.reshape(n_batches, -1).mean(axis=1)
    return float(usable.mean()), float(means.std(ddof=1) / np.sqrt(n_batches))


@pytest.fixture
def np_rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
