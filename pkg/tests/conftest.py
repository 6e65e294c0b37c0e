import numpy as np
import pytest

from parhawkes import EventSequence, HawkesParams, validate_sequence


def random_instance(rng, n, m, k, away_from_kinks=False, hinge=0.05):
    """Random event sequence + parameters with sane magnitudes.

    With away_from_kinks, alpha entries are drawn clear of 0 and of the
    hinge threshold so finite differences stay on one side of every kink.
    """
    T = max(float(n) / 4.0, 1.0)
    times = np.sort(rng.uniform(0.0, T, n))
    marks = rng.integers(0, m, n)
    seq = validate_sequence(times, marks, T * 1.01, m)
    if away_from_kinks:
        low = rng.uniform(0.01, 0.04, (k, m, m))
        high = rng.uniform(hinge + 0.02, 0.3, (k, m, m))
        alpha = np.where(rng.random((k, m, m)) < 0.5, low, high)
    else:
        alpha = rng.uniform(0.02, 0.25, (k, m, m))
    params = HawkesParams(
        mu=rng.uniform(0.05, 0.3, m),
        alpha=alpha,
        gamma=rng.uniform(0.5, 2.5, k),
    )
    return seq, params


def naive_intensity_at(t, seq: EventSequence, params: HawkesParams, node: int) -> float:
    """Direct evaluation of lambda_node(t) from the definition (test oracle)."""
    total = params.mu[node]
    for tj, mj in zip(seq.times, seq.marks):
        if tj >= t:
            break
        for kk in range(params.num_kernels):
            g = params.gamma[kk]
            total += params.alpha[kk, node, mj] * g * np.exp(-g * (t - tj))
    return float(total)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_seq():
    # M=1, three unit-spaced events
    return validate_sequence([0.0, 1.0, 2.0], [0, 0, 0], 2.0, 1)


@pytest.fixture
def toy_params():
    return HawkesParams(mu=[0.1], alpha=np.full((1, 1, 1), 0.5), gamma=[1.0])
