import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swinlesion.scheduler import SchedulerState, scheduler_step, trace


def _state(**kw):
    base = dict(lr=1e-3, patience=3, factor=0.1, threshold=0.0, min_lr=1e-6)
    base.update(kw)
    return SchedulerState(**base)


def test_constant_loss_reduces_after_fifth_step():
    assert trace(_state(), [1.0] * 5) == [1e-3, 1e-3, 1e-3, 1e-3, 1e-4]


def test_repeated_plateaus_stop_at_floor():
    lrs = trace(_state(min_lr=1e-5), [1.0] * 17)
    # the first loss sets best; every further patience+1 flat steps cut once
    assert lrs[3] == 1e-3 and lrs[4] == 1e-4 and lrs[7] == 1e-4
    assert lrs[8] == 1e-5 and lrs[12] == 1e-5 and lrs[16] == 1e-5
    distinct = [lrs[0]] + [b for a, b in zip(lrs, lrs[1:]) if b != a]
    assert distinct == [1e-3, 1e-4, 1e-5]


def test_decreasing_losses_keep_lr():
    assert trace(_state(), [1.0 - 0.01 * k for k in range(30)]) == [1e-3] * 30


def test_noisy_improvement_above_threshold_keeps_lr():
    losses = [1.0, 0.9, 0.7, 0.69, 0.5, 0.45, 0.2]
    assert trace(_state(threshold=0.005), losses) == [1e-3] * len(losses)


def test_improvement_within_threshold_counts_as_plateau():
    assert trace(_state(threshold=0.1, patience=0), [1.0, 0.95]) == [1e-3, 1e-4]


def test_empty_trace():
    assert trace(_state(), []) == []


def test_state_is_immutable_and_roundtrips():
    s = _state()
    s2 = scheduler_step(s, 0.5)
    assert s.best == math.inf and s2.best == 0.5
    assert SchedulerState.from_dict(s.to_dict()) == s
    assert SchedulerState.from_dict(s2.to_dict()) == s2


def test_invalid_states():
    for kw in ({"factor": 1.0}, {"factor": 0.0}, {"patience": -1}, {"lr": 1e-7}):
        with pytest.raises(ValueError):
            _state(**kw)
    with pytest.raises(ValueError):
        scheduler_step(_state(), float("nan"))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), max_size=60), st.integers(0, 4),
       st.sampled_from([0.1, 0.5, 0.3]), st.sampled_from([0.0, 1e-4, 0.05]))
def test_trace_invariants(losses, patience, factor, threshold):
    state = _state(patience=patience, factor=factor, threshold=threshold, min_lr=1e-5)
    lrs, cuts, prev = [], [], state.lr
    for k, loss in enumerate(losses):
        state = scheduler_step(state, loss)
        assert state.counter <= state.patience
        assert state.lr >= state.min_lr
        assert state.lr <= prev
        if state.lr < prev:
            cuts.append(k)
        prev = state.lr
        lrs.append(state.lr)
    assert all(b - a >= patience + 1 for a, b in zip(cuts, cuts[1:]))
