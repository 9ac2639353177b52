import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dvlr.errors import ConfigError, DataError, InternalError
from dvlr.scheduler import (DECREASE, INCREASE, BatchOutcome, DualRateConfig, RateSchedule,
                            current_rates, export_trace, new_scheduler, read_trace_csv,
                            record_responses, select_rate, write_trace_csv)


def replay_per_example(config, seed, outcomes):
    """Feed every response one at a time; the reference the batched path must equal."""
    state = new_scheduler(config, seed)
    step = 0
    for o in outcomes:
        for _ in range(o.n_correct):
            record_responses(state, BatchOutcome(1, 0), step)
            step += 1
        for _ in range(o.n_incorrect):
            record_responses(state, BatchOutcome(0, 1), step)
            step += 1
    return state


def run_batched(config, seed, outcomes):
    state = new_scheduler(config, seed)
    for k, o in enumerate(outcomes):
        record_responses(state, o, k)
    return state


def same_end_state(a, b):
    return (a.current_eta_c == b.current_eta_c and a.current_eta_i == b.current_eta_i
            and a.count_c == b.count_c and a.count_i == b.count_i
            and a.threshold_c == b.threshold_c and a.threshold_i == b.threshold_i)


def random_case(seed):
    """A random dual config plus outcome sequence (used here and by the acceptance suite)."""
    r = np.random.default_rng(seed)

    def sched():
        eta = float(r.choice([0.001, 0.01, 0.05, 0.3]))
        if r.random() < 0.2:
            return RateSchedule.static(eta)
        lo = int(r.integers(1, 40))
        hi = lo + int(r.integers(0, 30))
        return RateSchedule.variable(eta, lo, hi, r.choice([INCREASE, DECREASE]),
                                     float(r.choice([1e-4, 1e-2, 0.3])))

    config = DualRateConfig(sched(), sched())
    size = int(r.integers(1, 64))
    outcomes = []
    for _ in range(int(r.integers(1, 60))):
        c = int(r.integers(0, size + 1))
        outcomes.append(BatchOutcome(c, size - c) if size else BatchOutcome(1, 0))
    return config, int(r.integers(0, 2**32)), outcomes


class TestSchedule:
    def test_empty_range(self):
        with pytest.raises(ConfigError):
            RateSchedule.variable(0.01, 60, 50)

    @pytest.mark.parametrize("eta", [0.0, -0.1, math.nan])
    def test_bad_initial(self, eta):
        with pytest.raises(ConfigError):
            RateSchedule.static(eta)

    def test_bad_direction(self):
        with pytest.raises(ConfigError):
            RateSchedule(0.01, "variable", 5, 6, "sideways")

    def test_signed_delta(self):
        assert RateSchedule.variable(0.01, 1, 2, INCREASE).delta == pytest.approx(1e-6, rel=1e-15)
        assert RateSchedule.variable(0.01, 1, 2, DECREASE).delta == pytest.approx(-1e-6, rel=1e-15)

    def test_outcome_needs_a_response(self):
        with pytest.raises(DataError):
            BatchOutcome(0, 0)

    def test_outcome_from_predictions(self):
        assert BatchOutcome.from_predictions([1, 2, 3, 4], [1, 0, 3, 0]) == BatchOutcome(2, 2)


class TestNewScheduler:
    def test_static_draws_nothing(self):
        state = new_scheduler(DualRateConfig.single(0.05), 7)
        before = (state.correct.rng.bit_generator.state, state.incorrect.rng.bit_generator.state)
        assert state.threshold_c is None and state.threshold_i is None
        fresh = new_scheduler(DualRateConfig.single(0.05), 7)
        assert before == (fresh.correct.rng.bit_generator.state, fresh.incorrect.rng.bit_generator.state)
        # a fresh, unused stream for the same seed: nothing was consumed
        ref = np.random.Generator(np.random.PCG64(np.random.SeedSequence(7, spawn_key=(0,))))
        assert before[0] == ref.bit_generator.state

    def test_degenerate_range(self):
        cfg = DualRateConfig(RateSchedule.variable(0.01, 50, 50), RateSchedule.static(0.01))
        assert new_scheduler(cfg, 3).threshold_c == 50

    def test_initial_rates(self):
        cfg = DualRateConfig(RateSchedule.static(0.05), RateSchedule.variable(0.01, 5, 9))
        assert current_rates(new_scheduler(cfg, 0)) == (0.05, 0.01)

    def test_draws_uniform_over_inclusive_range(self):
        # 10^4 draws over [45, 55]: every value appears, each count within 3 sigma of uniform
        s = RateSchedule.variable(0.01, 45, 55)
        cfg = DualRateConfig(s, RateSchedule.static(0.01))
        state = new_scheduler(cfg, 2024)
        draws = [state.threshold_c]
        while len(draws) < 10_000:
            record_responses(state, BatchOutcome(state.threshold_c - state.count_c, 0), len(draws))
            draws.append(state.threshold_c)
        counts = np.bincount(draws, minlength=56)[45:56]
        assert len(counts) == 11 and np.all(counts > 0)
        n, p = 10_000, 1 / 11
        sigma = math.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) < 3 * sigma)
        assert set(draws) == set(range(45, 56))


class TestSelectRate:
    cfg = DualRateConfig(RateSchedule.static(0.05), RateSchedule.static(0.01))

    @pytest.mark.parametrize("outcome,expected", [((99, 1), 0.05), ((50, 50), 0.01), ((0, 10), 0.01),
                                                  ((51, 49), 0.05), ((1, 0), 0.05)])
    def test_majority(self, outcome, expected):
        assert select_rate(new_scheduler(self.cfg, 0), BatchOutcome(*outcome)) == expected

    def test_tie_override(self):
        cfg = DualRateConfig(RateSchedule.static(0.05), RateSchedule.static(0.01), tie_rate="correct")
        assert select_rate(new_scheduler(cfg, 0), BatchOutcome(5, 5)) == 0.05

    def test_does_not_mutate(self):
        cfg = DualRateConfig(RateSchedule.variable(0.05, 3, 5), RateSchedule.variable(0.01, 3, 5))
        state = new_scheduler(cfg, 1)
        snapshot = (state.count_c, state.count_i, state.threshold_c, state.threshold_i, len(state.trace))
        select_rate(state, BatchOutcome(7, 1))
        assert snapshot == (state.count_c, state.count_i, state.threshold_c, state.threshold_i, len(state.trace))


class TestRecordResponses:
    def test_one_delta_after_200_incorrect(self):
        cfg = DualRateConfig(RateSchedule.static(0.05), RateSchedule.variable(0.01, 200, 200, INCREASE))
        state = new_scheduler(cfg, 0)
        record_responses(state, BatchOutcome(0, 199), 0)
        assert state.current_eta_i == 0.01
        record_responses(state, BatchOutcome(0, 1), 1)
        assert state.current_eta_i == pytest.approx(0.010001, rel=1e-15)
        assert state.count_i == 0

    def test_big_batch_triggers_and_carries(self):
        cfg = DualRateConfig(RateSchedule.variable(0.05, 45, 45), RateSchedule.static(0.01))
        state = new_scheduler(cfg, 0)
        record_responses(state, BatchOutcome(100, 0), 0)
        assert state.correct.triggers == 2 and state.count_c == 10
        assert 0 <= state.count_c < state.threshold_c

    def test_static_never_changes(self):
        state = new_scheduler(DualRateConfig.single(0.02), 5)
        for k in range(50):
            record_responses(state, BatchOutcome(k % 7, 3), k)
        assert all(row[1:] == (0.02, 0.02) for row in export_trace(state))

    def test_floor_clamp(self):
        # delta 0.3 * eta0 per trigger: four triggers would go negative
        cfg = DualRateConfig(RateSchedule.variable(0.01, 1, 1, DECREASE, 0.3), RateSchedule.static(0.01))
        state = new_scheduler(cfg, 0)
        for k in range(6):
            record_responses(state, BatchOutcome(1, 0), k)
            assert state.current_eta_c >= 0.0
        assert state.current_eta_c == 0.0

    def test_steps_must_increase(self):
        state = new_scheduler(DualRateConfig.single(0.02), 5)
        record_responses(state, BatchOutcome(1, 0), 3)
        with pytest.raises(InternalError):
            record_responses(state, BatchOutcome(1, 0), 3)

    def test_k_deltas_exact(self):
        s = RateSchedule.variable(0.01, 3, 7, INCREASE)
        state = new_scheduler(DualRateConfig(s, RateSchedule.static(0.1)), 9)
        for k in range(500):
            record_responses(state, BatchOutcome(4, 1), k)
        k = state.correct.triggers
        assert k > 100
        expected = 0.01
        for _ in range(k):
            expected += s.delta
        assert state.current_eta_c == expected
        assert math.isclose(state.current_eta_c, 0.01 + k * s.delta, rel_tol=1e-15 * k)


class TestReplayAndInvariants:
    @pytest.mark.parametrize("case", range(50))
    def test_batched_equals_per_example(self, case):
        cfg, seed, outcomes = random_case(case)
        assert same_end_state(run_batched(cfg, seed, outcomes), replay_per_example(cfg, seed, outcomes))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31))
    def test_counter_invariant(self, case):
        cfg, seed, outcomes = random_case(case)
        state = new_scheduler(cfg, seed)
        for k, o in enumerate(outcomes):
            record_responses(state, o, k)
            for track in (state.correct, state.incorrect):
                if track.schedule.is_variable:
                    s = track.schedule
                    assert 0 <= track.count < track.threshold
                    assert s.threshold_lo <= track.threshold <= s.threshold_hi
                assert track.eta >= 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.randoms(use_true_random=False))
    def test_permuting_batches_keeps_final_rates(self, case, rnd):
        cfg, seed, outcomes = random_case(case)
        shuffled = list(outcomes)
        rnd.shuffle(shuffled)
        a, b = run_batched(cfg, seed, outcomes), run_batched(cfg, seed, shuffled)
        assert same_end_state(a, b)

    def test_swapping_majorities_keeps_trace(self):
        # swap which batches are correct-majority while every batch keeps its own counts;
        # with two independent streams, eta_c only sees the sum of correct responses so far
        cfg = DualRateConfig(RateSchedule.variable(0.05, 10, 20), RateSchedule.variable(0.01, 10, 20))
        seq_a = [BatchOutcome(8, 2), BatchOutcome(2, 8), BatchOutcome(8, 2), BatchOutcome(2, 8)] * 20
        seq_b = [BatchOutcome(2, 8), BatchOutcome(8, 2), BatchOutcome(2, 8), BatchOutcome(8, 2)] * 20
        ta = export_trace(run_batched(cfg, 4, seq_a))
        tb = export_trace(run_batched(cfg, 4, seq_b))
        assert [r for r in ta[1::2]] == [r for r in tb[1::2]]

    def test_deterministic(self):
        cfg, seed, outcomes = random_case(123)
        assert export_trace(run_batched(cfg, seed, outcomes)) == export_trace(run_batched(cfg, seed, outcomes))


class TestTraceCsv:
    def test_round_trip(self, tmp_path):
        cfg, seed, outcomes = random_case(7)
        trace = export_trace(run_batched(cfg, seed, outcomes))
        write_trace_csv(trace, tmp_path / "t.csv")
        raw = (tmp_path / "t.csv").read_bytes()
        assert raw.startswith(b"step,eta_c,eta_i\n") and b"\r" not in raw
        assert read_trace_csv(tmp_path / "t.csv") == trace

    def test_stream_target(self):
        buf = io.StringIO()
        write_trace_csv([(0, 0.1, 0.2)], buf)
        assert buf.getvalue() == "step,eta_c,eta_i\n0,0.1,0.2\n"

    def test_bad_header(self):
        with pytest.raises(DataError):
            read_trace_csv(io.StringIO("a,b,c\n"))
