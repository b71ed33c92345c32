"""Path simulation: event grids, counting queries, stationarity checks."""

import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from countproc.lifetimes import Deterministic, EquilibriumOf, Exponential, Gamma
from countproc.processes import (
    Delayed,
    EventCapExceeded,
    Modulated,
    Plain,
    StationaryMA,
    child_rng,
    count,
    equilibrium_delay_sample,
    path_from_interarrivals,
    residual,
    simulate_path,
    spec_from_json,
    write_events_ndjson,
)
from countproc.asymptotics import path_statistics

TWO_STATE = Modulated(
    states=("a", "b"),
    kernel=((0.0, 1.0), (1.0, 0.0)),
    lifetimes={"a": Exponential(1.0), "b": Exponential(1.0 / 3.0)},
)


class TestSimulate:
    def test_deterministic_grid(self):
        p = simulate_path(Plain(Deterministic(1.0)), 3.5, 0)
        assert np.array_equal(p.events, [0, 1, 2, 3, 4])

    def test_delayed_deterministic_shift(self):
        p = simulate_path(Delayed(Deterministic(0.5), Deterministic(1.0)), 2.0, 0)
        assert np.array_equal(p.events, [0.5, 1.5, 2.5])
        assert p.delayed and p.delay == 0.5

    def test_overshoot_invariant(self):
        for seed in range(20):
            p = simulate_path(Plain(Exponential(1.0)), 7.0, seed)
            assert p.events[-1] > 7.0
            assert p.events[0] == 0.0
            assert np.all(np.diff(p.events) > 0)

    def test_deterministic_in_seed(self):
        a = simulate_path(Plain(Gamma(2, 2)), 11.0, 42)
        b = simulate_path(Plain(Gamma(2, 2)), 11.0, 42)
        assert np.array_equal(a.events, b.events)

    def test_bad_horizon(self):
        with pytest.raises(ValueError):
            simulate_path(Plain(Exponential(1.0)), 0.0, 0)

    def test_event_cap(self):
        with pytest.raises(EventCapExceeded):
            simulate_path(Plain(Exponential(1.0)), 1000.0, 0, event_cap=100)

    def test_stationary_ma_mean_gap(self):
        # the first gap already carries the stationary law: mean E[U]
        spec = StationaryMA(2, Exponential(1.0))
        first = [
            float(np.diff(simulate_path(spec, 1.0, child_rng(7, i)).events[:2])[0])
            for i in range(4000)
        ]
        se = np.std(first, ddof=1) / math.sqrt(len(first))
        assert abs(np.mean(first) - 1.0) <= 3 * se


class TestQueries:
    def test_count_examples(self):
        p = simulate_path(Plain(Deterministic(1.0)), 3.5, 0)
        assert count(p, 3.5) == 4
        assert count(p, 0.0) == 1  # the origin event counts

    def test_delayed_count_before_delay(self):
        p = simulate_path(Delayed(Deterministic(0.5), Deterministic(1.0)), 2.0, 0)
        assert count(p, 0.25) == 0

    def test_residual_examples(self):
        p = simulate_path(Plain(Deterministic(1.0)), 3.5, 0)
        assert residual(p, 0.25) == pytest.approx(0.75)
        assert residual(p, 1.0) == pytest.approx(1.0)  # at an event: next gap

    def test_out_of_range(self):
        p = simulate_path(Plain(Exponential(1.0)), 5.0, 0)
        with pytest.raises(ValueError):
            count(p, 5.5)
        with pytest.raises(ValueError):
            residual(p, -0.1)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_binary_search_equals_linear_scan(self, seed):
        p = simulate_path(Plain(Gamma(2, 2)), 15.0, seed)
        ts = np.linspace(0.0, 15.0, 1000)
        fast = count(p, ts)
        slow = np.array([int(np.sum(p.events <= t)) for t in ts])
        assert np.array_equal(fast, slow)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_elapsed_plus_residual_is_next_event(self, seed):
        p = simulate_path(Plain(Exponential(1.0)), 12.0, seed)
        ts = np.linspace(0.0, 12.0, 200)
        n = count(p, ts)
        r = residual(p, ts)
        assert np.allclose(ts + r, p.events[n], rtol=1e-13, atol=1e-13)


class TestEquilibriumDelay:
    def test_exponential_fixed_point(self):
        # the excess law of an exponential is the same exponential
        rng = np.random.default_rng(3)
        draws = np.array([equilibrium_delay_sample(Exponential(1.0), rng) for _ in range(2000)])
        draws.sort()
        cdf = 1 - np.exp(-draws)
        n = draws.size
        ks = max(
            float(np.max(np.arange(1, n + 1) / n - cdf)),
            float(np.max(cdf - np.arange(n) / n)),
        )
        assert ks < 1.95 / math.sqrt(n)

    def test_deterministic_becomes_uniform(self):
        rng = np.random.default_rng(4)
        draws = np.array([equilibrium_delay_sample(Deterministic(2.0), rng) for _ in range(2000)])
        draws.sort()
        cdf = np.clip(draws / 2.0, 0, 1)
        n = draws.size
        ks = max(
            float(np.max(np.arange(1, n + 1) / n - cdf)),
            float(np.max(cdf - np.arange(n) / n)),
        )
        assert ks < 1.95 / math.sqrt(n)

    def test_inverse_at_zero(self):
        eq = EquilibriumOf(Exponential(1.0))
        assert float(eq.inverse_cdf(np.array([0.0]))[0]) <= 1e-9

    def test_infinite_mean_rejected(self):
        from countproc.lifetimes import ParetoShifted

        with pytest.raises(ValueError):
            equilibrium_delay_sample(ParetoShifted(1.5), np.random.default_rng(0))

    def test_stationary_increments(self):
        # with an equilibrium delay the count increments are stationary
        spec = Delayed("equilibrium", Exponential(1.0))
        ts = [0.0, 1.0, 5.0, 6.0, 20.0, 21.0]
        stats = path_statistics(spec, ts, 100_000, seed=17)
        for i in range(0, 6, 2):
            inc = stats["count"][:, i + 1] - stats["count"][:, i]
            se = inc.std(ddof=1) / math.sqrt(inc.size)
            assert abs(inc.mean() - 1.0) <= 4 * se, f"window starting at {ts[i]}"


class TestModulated:
    def test_state_frequencies_match_embedded_chain(self):
        # deterministic alternation: embedded stationary law is uniform
        p = simulate_path(TWO_STATE, 2.0 * 10**5, 0)
        states = np.array(p.states[: len(p.events) - 1])
        assert len(states) > 50_000
        freq_a = np.mean(states == "a")
        tv = abs(freq_a - 0.5)
        assert tv <= 0.01

    def test_state_governs_gap(self):
        # holding means differ 1 vs 3: regression by state on one long path
        p = simulate_path(TWO_STATE, 10**5, 1)
        gaps = p.interarrivals
        states = np.array(p.states[: gaps.size])
        mean_a = gaps[states == "a"].mean()
        mean_b = gaps[states == "b"].mean()
        assert abs(mean_a - 1.0) < 0.05
        assert abs(mean_b - 3.0) < 0.1

    def test_kernel_row_sum_validated(self):
        with pytest.raises(ValueError, match="sum to 1"):
            Modulated(
                states=("a", "b"),
                kernel=((0.5, 0.4), (1.0, 0.0)),
                lifetimes={"a": Exponential(1.0), "b": Exponential(1.0)},
            )

    def test_missing_lifetime_validated(self):
        with pytest.raises(ValueError, match="missing"):
            Modulated(
                states=("a", "b"),
                kernel=((0.0, 1.0), (1.0, 0.0)),
                lifetimes={"a": Exponential(1.0)},
            )


class TestStationaryMA:
    def test_dependence_range(self):
        # gaps are (m-1)-dependent: lag-1 correlated, lag >= m uncorrelated
        m = 2
        p = simulate_path(StationaryMA(m, Exponential(1.0)), 10**5, 5)
        gaps = p.interarrivals
        n = gaps.size
        x = gaps - gaps.mean()
        denom = float(np.dot(x, x))
        for k in range(1, m + 4):
            rho = float(np.dot(x[:-k], x[k:])) / denom
            if k < m:
                assert rho > 0.3  # shared base draw: correlation 1/2 at lag 1
            else:
                assert abs(rho) <= 4.0 / math.sqrt(n)

    def test_trace_matches_window_sums(self):
        p = simulate_path(StationaryMA(3, Exponential(1.0)), 20.0, 2)
        gaps = p.interarrivals
        # consecutive gaps share trace: 3*T_{k+1} = trace_k + (new draw);
        # reconstruct new draws and check positivity
        new_draws = 3 * gaps - p.ma_trace[: gaps.size]
        assert np.all(new_draws > 0)

    def test_order_one_is_plain_renewal(self):
        p = simulate_path(StationaryMA(1, Exponential(1.0)), 10.0, 3)
        assert np.all(p.ma_trace == 0)


class TestSerialization:
    def test_spec_round_trips(self):
        specs = [
            Plain(Exponential(1.0)),
            Delayed("equilibrium", Gamma(2, 2)),
            Delayed(Deterministic(0.5), Exponential(1.0)),
            TWO_STATE,
            StationaryMA(2, Exponential(1.0)),
        ]
        for spec in specs:
            back = spec_from_json(json.loads(json.dumps(spec.to_json())))
            assert back == spec

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown process kind"):
            spec_from_json({"kind": "hawkes"})

    def test_ndjson_export(self):
        p = simulate_path(TWO_STATE, 5.0, 0)
        buf = io.StringIO()
        write_events_ndjson(p, buf)
        lines = [json.loads(line) for line in buf.getvalue().splitlines()]
        assert len(lines) == len(p.events)
        assert lines[0]["index"] == 0 and lines[0]["interarrival"] is None
        assert lines[1]["interarrival"] == pytest.approx(float(p.events[1] - p.events[0]))
        assert lines[0]["state"] in ("a", "b")

    def test_hand_path_builder(self):
        p = path_from_interarrivals([0.5, 2.0], horizon=2.0)
        assert np.allclose(p.events, [0.0, 0.5, 2.5])
        with pytest.raises(ValueError):
            path_from_interarrivals([0.5, 1.0], horizon=2.0)  # no overshoot
