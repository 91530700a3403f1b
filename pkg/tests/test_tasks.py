import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvqrc.features import FeatureScheme, default_uv_points
from cvqrc.numerics import RngStream
from cvqrc.reservoir import ReservoirConfig, init_reservoir, run_trajectory
from cvqrc.tasks import (
    IPCConfig,
    NarmaParams,
    compute_ipc,
    enumerate_delay_lists,
    gen_inputs,
    ipc_from_features,
    legendre_target,
    narma_target,
)


class TestInputs:
    def test_moments(self):
        s = gen_inputs(10**5, RngStream(0))
        assert np.all(np.abs(s) <= 1)
        assert abs(s.mean()) <= 3 * math.sqrt(1 / 3 / s.size)
        assert np.mean(s**2) == pytest.approx(1 / 3, abs=0.005)

    def test_reproducible(self):
        np.testing.assert_array_equal(gen_inputs(10, RngStream(4)), gen_inputs(10, RngStream(4)))

    def test_length(self):
        with pytest.raises(ValueError):
            gen_inputs(0, RngStream(0))


def narma_direct(s, n, a=0.3, b=0.05, g=0.0375, d=0.0, form="product"):
    """Literal evaluation of the recursion with explicit sums."""
    T = len(s)
    y = [0.0] * (T + 1)
    for k in range(n - 1, T):
        ma = sum(y[k - t] for t in range(n) if k - t >= 0)
        if form == "product":
            ma *= y[k]
        y[k + 1] = a * y[k] + b * ma + g * s[k - n + 1] * s[k] + d
    return np.array(y[1:])


class TestNarma:
    def test_zero_input(self):
        np.testing.assert_array_equal(narma_target(np.zeros(50), NarmaParams(5)), 0.0)

    def test_homogeneous(self):
        s = RngStream(1).uniform(-1, 1, 50)
        np.testing.assert_array_equal(narma_target(s, NarmaParams(3, gamma=0.0)), 0.0)

    def test_constant_input_first_values(self):
        out = narma_target(np.ones(6), NarmaParams(2))
        # y2 = g, y3 = a g + b g^2 + g (product form, window y1 + y2 = g)
        g, a, b = 0.0375, 0.3, 0.05
        assert out[0] == 0.0
        assert out[1] == pytest.approx(g)
        assert out[2] == pytest.approx(a * g + b * g * g + g)
        np.testing.assert_allclose(out, narma_direct(np.ones(6), 2), rtol=1e-14)

    @settings(max_examples=25)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 15), st.sampled_from(["product", "linear"]))
    def test_direct_oracle(self, seed, n, form):
        s = np.random.default_rng(seed).uniform(-1, 1, 120)
        params = NarmaParams(n, form=form)
        expected = narma_direct(s, n, form=form)
        if not np.all(np.isfinite(expected)):
            return
        np.testing.assert_allclose(narma_target(s, params), expected, rtol=1e-12, atol=1e-15)

    def test_causal(self):
        s = RngStream(2).uniform(-1, 1, 60)
        t = s.copy()
        t[40:] = 0.0
        np.testing.assert_array_equal(narma_target(s, NarmaParams(4))[:40], narma_target(t, NarmaParams(4))[:40])

    def test_product_form_bounded(self):
        s = RngStream(3).uniform(-1, 1, 10500)
        for n in (2, 10, 15):
            assert np.max(np.abs(narma_target(s, NarmaParams(n)))) < 1.0

    def test_linear_form_unstable_at_15(self):
        # a + n b > 1: the moving-average feedback grows geometrically
        s = RngStream(3).uniform(-1, 1, 10500)
        assert np.max(np.abs(narma_target(s, NarmaParams(14, form="linear")))) < 1.0
        assert np.max(np.abs(narma_target(s, NarmaParams(15, form="linear")))) > 1e10

    def test_params(self):
        with pytest.raises(ValueError):
            NarmaParams(0)
        with pytest.raises(ValueError):
            NarmaParams(2, form="quadratic")
        with pytest.raises(ValueError):
            narma_target(np.zeros(3), NarmaParams(5))


class TestLegendreTarget:
    def test_worked_example(self):
        s = RngStream(4).uniform(-1, 1, 30)
        out = legendre_target([1, 1, 2, 3, 3], s)
        P1 = lambda v: math.sqrt(3) * v
        P2 = lambda v: math.sqrt(5) * (3 * v * v - 1) / 2
        k = 10
        assert out[k] == pytest.approx(P2(s[k - 1]) * P1(s[k - 2]) * P2(s[k - 3]))
        assert np.all(np.isnan(out[:3]))

    def test_linear_memory(self):
        s = RngStream(5).uniform(-1, 1, 30)
        np.testing.assert_allclose(legendre_target([4], s)[4:], math.sqrt(3) * s[:-4])

    @pytest.mark.parametrize("delays", [[0], [2, 2], [0, 1], [1, 1, 1], [0, 2, 5]])
    def test_unit_second_moment(self, delays):
        s = RngStream(6).uniform(-1, 1, 10**5)
        y = legendre_target(delays, s)
        y = y[~np.isnan(y)]
        m2 = np.mean(y**2)
        se = np.std(y**2) / math.sqrt(y.size)
        assert abs(m2 - 1.0) <= 3 * se


class TestEnumeration:
    def test_degree_three_prefix(self):
        got = list(enumerate_delay_lists(3, 2))[:6]
        assert got == [(0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 1), (0, 0, 2), (0, 1, 2)]

    def test_degree_one(self):
        assert list(enumerate_delay_lists(1, 75)) == [(t,) for t in range(76)]

    @pytest.mark.parametrize("d,T", list(product([1, 2, 3], range(6))))
    def test_brute_force(self, d, T):
        brute = {tuple(sorted(c)) for c in product(range(T + 1), repeat=d)}
        got = list(enumerate_delay_lists(d, T))
        assert len(got) == len(set(got)) == len(brute) == math.comb(T + d, d)
        assert set(got) == brute
        maxima = [max(t) for t in got]
        assert maxima == sorted(maxima)

    def test_equal_only(self):
        assert list(enumerate_delay_lists(2, 3, equal_only=True)) == [(0, 0), (1, 1), (2, 2), (3, 3)]


class TestIPCConfig:
    def test_defaults(self):
        c = IPCConfig()
        assert (c.d_max, c.tau_max, c.threshold, c.patience, c.washout, c.train, c.test) == (9, 75, 1e-7, 100, 500, 8000, 2000)
        assert c.length == 10500

    @pytest.mark.parametrize("kw", [dict(d_max=10), dict(washout=10), dict(threshold=-1.0), dict(patience=0)])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            IPCConfig(**kw)


def test_ipc_of_delay_line_is_its_memory():
    # features = the last three inputs: linear capacity 3, nothing else
    s = RngStream(7).uniform(-1, 1, 3000)
    O = np.column_stack([np.ones(s.size)] + [np.roll(s, k) for k in range(3)])
    cfg = IPCConfig(d_max=3, tau_max=20, washout=50, train=2000, test=900, patience=10)
    rep = ipc_from_features(O[50:2050], O[2050:2950], s, 50, cfg)
    caps = dict(rep.task_log)
    for t in range(3):
        assert caps[(t,)] == pytest.approx(1.0, abs=1e-9)
    # the rest is finite-sample leakage of order columns / test length
    assert rep.per_degree[0] == pytest.approx(3.0, abs=0.02)
    assert rep.per_degree[1:].sum() < 0.05


def test_ipc_detects_product():
    s = RngStream(8).uniform(-1, 1, 3000)
    O = np.column_stack([np.ones(s.size), s, np.roll(s, 1), s * np.roll(s, 1)])
    cfg = IPCConfig(d_max=2, tau_max=10, washout=50, train=2000, test=900, patience=20)
    rep = ipc_from_features(O[50:2050], O[2050:2950], s, 50, cfg)
    caps = dict(rep.task_log)
    assert caps[(0, 1)] == pytest.approx(1.0, abs=1e-9)
    assert rep.total == pytest.approx(3.0, abs=0.05)


@pytest.fixture(scope="module")
def small_records():
    inst = init_reservoir(ReservoirConfig(n_modes=4, seed=1))
    return run_trajectory(inst, RngStream(1).uniform(-1, 1, 2600))


SMALL = IPCConfig(d_max=4, tau_max=40, washout=100, train=2000, test=500, patience=40)


class TestComputeIPC:
    def test_properties(self, small_records):
        scheme = FeatureScheme(uv_points=default_uv_points(4))
        rep = compute_ipc(small_records, scheme, SMALL)
        caps = np.array([c for _, c in rep.task_log])
        assert np.all((caps > SMALL.threshold) & (caps <= 1.0))
        assert rep.total <= rep.n_columns
        again = compute_ipc(small_records, scheme, SMALL)
        assert again.to_dict() == rep.to_dict()

    def test_superset_scheme(self, small_records):
        base = compute_ipc(small_records, FeatureScheme(), SMALL, ).total
        more = compute_ipc(small_records, FeatureScheme(uv_points=default_uv_points(4)), SMALL).total
        assert more >= 0.98 * base

    def test_patience_only_adds(self, small_records):
        scheme = FeatureScheme(uv_points=default_uv_points(4))
        short = compute_ipc(small_records, scheme, SMALL).total
        from dataclasses import replace

        long = compute_ipc(small_records, scheme, replace(SMALL, patience=500)).total
        assert long >= short - 1e-12

    def test_short_trajectory(self, small_records):
        with pytest.raises(ValueError):
            compute_ipc(small_records, FeatureScheme(), IPCConfig())
