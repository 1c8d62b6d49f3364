import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dhnet.scenario import (
    SampleSet,
    Scenario,
    ScenarioSet,
    TimeSeries,
    block_bootstrap,
    day_class,
    expected_scenario,
    read_series_csv,
    sample_triangular,
    triangular_supports,
    weighted_history_scenarios,
    write_series_csv,
)
from oracles import bootstrap_mismatches

WEEK = 168
# products of the week weights (0.5, 0.33, 0.17), price week major
RAW_PRODUCTS = [0.25, 0.165, 0.085, 0.165, 0.1089, 0.0561, 0.085, 0.0561, 0.0289]


def three_weeks(rng, names=("price", "heat_d1", "solar"), hours=WEEK):
    return {n: rng.normal(50, 10, (3, hours)) for n in names}


def test_nine_weighted_scenarios(rng):
    hist = three_weeks(rng)
    sset = weighted_history_scenarios(hist, ["price"], ["heat_d1", "solar"])
    assert sset.size == 9
    p = sset.probabilities
    assert abs(p.sum() - 1.0) <= 1e-9
    np.testing.assert_allclose(p, np.array(RAW_PRODUCTS) / sum(RAW_PRODUCTS), rtol=0, atol=1e-12)
    # most recent week (last row) carries weight 0.5
    for w, s in enumerate(sset.scenarios):
        k, j = divmod(w, 3)
        assert (s.price_index, s.heat_index) == (k, j)
        np.testing.assert_array_equal(s.data["price"], hist["price"][2 - k])
        # heat-flow quantities move together
        np.testing.assert_array_equal(s.data["heat_d1"], hist["heat_d1"][2 - j])
        np.testing.assert_array_equal(s.data["solar"], hist["solar"][2 - j])


def test_identical_weeks_give_identical_bundles():
    week = np.linspace(0, 1, WEEK)
    hist = {"price": np.tile(week, (3, 1)), "heat": np.tile(week * 3, (3, 1))}
    sset = weighted_history_scenarios(hist, ["price"], ["heat"])
    for s in sset.scenarios:
        np.testing.assert_array_equal(s.data["price"], week)
        np.testing.assert_array_equal(s.data["heat"], week * 3)
    assert sset.probabilities.sum() == pytest.approx(1.0, abs=1e-12)


def test_group_without_quantities_collapses(rng):
    sset = weighted_history_scenarios(three_weeks(rng, ("heat",)), [], ["heat"])
    assert sset.size == 3
    np.testing.assert_allclose(sset.probabilities, [0.5, 0.33, 0.17])


def test_static_series_and_horizon(rng):
    hist = three_weeks(rng, ("price",))
    sset = weighted_history_scenarios(hist, ["price"], [], static={"fixed": np.arange(WEEK)}, horizon=24)
    assert sset.horizon == 24
    np.testing.assert_array_equal(sset.scenarios[4 % 3].data["fixed"], np.arange(24))


def test_history_shape_is_checked(rng):
    with pytest.raises(ValueError, match="shape"):
        weighted_history_scenarios({"price": rng.normal(size=(2, 24))}, ["price"], [])


def test_bundles_must_share_horizon():
    with pytest.raises(ValueError, match="same horizon"):
        ScenarioSet("2021-01-01", [Scenario(0.5, {"a": np.zeros(3)}), Scenario(0.5, {"a": np.zeros(4)})])


@given(st.lists(st.floats(min_value=0.0, max_value=10.0), min_size=3, max_size=3).filter(lambda w: sum(w) > 1e-3))
def test_probabilities_always_sum_to_one(wts):
    hist = {"p": np.zeros((3, 4)), "h": np.ones((3, 4))}
    sset = weighted_history_scenarios(hist, ["p"], ["h"], weights=wts)
    assert abs(sset.probabilities.sum() - 1.0) <= 1e-9
    assert {len(a) for s in sset.scenarios for a in s.data.values()} == {4}


# -- expected scenario ---------------------------------------------------

def test_expected_of_two_equiprobable_scenarios():
    sset = ScenarioSet("2021-01-01", [Scenario(0.5, {"price": np.full(5, 10.0)}),
                                      Scenario(0.5, {"price": np.full(5, 30.0)})])
    ev = expected_scenario(sset)
    assert ev.size == 1 and ev.probabilities[0] == 1.0
    np.testing.assert_allclose(ev.matrix("price")[0], 20.0)


def test_expected_is_a_fixed_point_on_single_scenarios():
    sset = ScenarioSet.single({"price": [1.0, 2.0, 3.0]})
    ev = expected_scenario(sset)
    np.testing.assert_array_equal(ev.matrix("price"), sset.matrix("price"))
    np.testing.assert_array_equal(expected_scenario(ev).matrix("price"), ev.matrix("price"))


def test_expected_price_is_week_weighted_mean(rng):
    hist = three_weeks(rng)
    ev = expected_scenario(weighted_history_scenarios(hist, ["price"], ["heat_d1", "solar"]))
    # independent: the heat weights sum to one, so each price week keeps its own weight
    w = np.array([0.17, 0.33, 0.5])
    np.testing.assert_allclose(ev.matrix("price")[0], w @ hist["price"], atol=1e-9)
    np.testing.assert_allclose(ev.matrix("solar")[0], w @ hist["solar"], atol=1e-9)


# -- triangular samples --------------------------------------------------

def test_triangular_support_of_constant_history():
    lo, mode, hi = triangular_supports(np.full((3, 4), 8.0))
    np.testing.assert_allclose(lo, 0.95 * 8.0)
    np.testing.assert_allclose(mode, 8.0)
    np.testing.assert_allclose(hi, 1.05 * 8.0)


def test_triangular_support_widens_negative_ranges():
    lo, mode, hi = triangular_supports(np.array([[-10.0], [-4.0], [-2.0]]))
    assert (lo[0], mode[0], hi[0]) == pytest.approx((-10.5, -4.0, -1.9))


def test_triangular_samples_stay_in_supports(rng):
    hist = three_weeks(rng)
    hist["price"][:, :10] *= -1
    samples = sample_triangular(hist, 30, seed=7)
    assert len(samples) == 30
    for name, weeks in hist.items():
        # support built independently from the raw weeks
        low = weeks.min(0) - 0.05 * np.abs(weeks.min(0))
        high = weeks.max(0) + 0.05 * np.abs(weeks.max(0))
        for s in samples.samples:
            assert np.all(s[name] >= low - 1e-12) and np.all(s[name] <= high + 1e-12)


def test_triangular_draws_are_reproducible(rng):
    hist = three_weeks(rng)
    a = sample_triangular(hist, 5, seed=11)
    b = sample_triangular(hist, 5, seed=11)
    c = sample_triangular(hist, 5, seed=12)
    for x, y, z in zip(a.samples, b.samples, c.samples):
        assert x["price"].tobytes() == y["price"].tobytes()
        assert x["price"].tobytes() != z["price"].tobytes()


def test_triangular_sample_i_does_not_depend_on_count(rng):
    hist = three_weeks(rng)
    a = sample_triangular(hist, 3, seed=5)
    b = sample_triangular(hist, 6, seed=5)
    for i in range(3):
        np.testing.assert_array_equal(a.samples[i]["solar"], b.samples[i]["solar"])


def test_triangular_mode_is_the_likeliest_region():
    hist = {"x": np.array([[0.0] * 2000, [1.0] * 2000, [10.0] * 2000])}
    s = sample_triangular(hist, 1, seed=3).samples[0]["x"]
    # mode 1 on support [0, 10.5]: P(x <= 1) = 1/10.5
    assert np.mean(s <= 1.0) == pytest.approx(1 / 10.5, abs=0.03)


def test_triangular_clamps_heat():
    hist = {"heat": np.array([[-1.0, 2.0], [0.0, 2.0], [1.0, 2.0]]), "price": -np.ones((3, 2))}
    out = sample_triangular(hist, 20, seed=1, clamp=["heat"])
    assert all(np.all(s["heat"] >= 0) for s in out.samples)
    assert all(np.all(s["price"] < 0) for s in out.samples)


def test_count_must_be_positive(rng):
    with pytest.raises(ValueError):
        sample_triangular(three_weeks(rng), 0, seed=1)


# -- block bootstrap -----------------------------------------------------

MONDAY = pd.Timestamp("2021-01-04")


def four_weeks(rng):
    n = 4 * WEEK
    return {"price": rng.normal(50, 10, n), "heat": rng.normal(8, 1, n)}


def test_single_candidate_reproduces_history():
    hist = {"x": np.arange(48.0)}
    out = block_bootstrap(hist, MONDAY, 1, seed=0, start=MONDAY, days=1)
    np.testing.assert_array_equal(out.samples[0]["x"], np.arange(24.0))


def test_bootstrap_blocks_are_members_of_their_pool(rng):
    hist = four_weeks(rng)
    start = pd.Timestamp("2021-03-03")  # a Wednesday
    out = block_bootstrap(hist, MONDAY, 30, seed=4, start=start, days=7)
    assert out.origin.count("first-half") == 15 and out.origin.count("second-half") == 15
    assert bootstrap_mismatches(hist, MONDAY, out, start, 7) == []


def test_bootstrap_is_reproducible(rng):
    hist = four_weeks(rng)
    a = block_bootstrap(hist, MONDAY, 4, seed=9)
    b = block_bootstrap(hist, MONDAY, 4, seed=9)
    assert all(x["heat"].tobytes() == y["heat"].tobytes() for x, y in zip(a.samples, b.samples))


def test_bootstrap_needs_a_candidate_day():
    hist = {"x": np.zeros(48)}  # Monday and Tuesday only
    with pytest.raises(ValueError, match="weekend"):
        block_bootstrap(hist, MONDAY, 1, seed=0, start=pd.Timestamp("2021-01-09"), days=1)


@pytest.mark.parametrize("kwargs, fragment", [({"block_hours": 5}, "divide 24"), ({"count": 0}, "count")])
def test_bootstrap_arguments(kwargs, fragment):
    args = {"history": {"x": np.zeros(48)}, "history_start": MONDAY, "count": 1, "seed": 0}
    args.update(kwargs)
    with pytest.raises(ValueError, match=fragment):
        block_bootstrap(**args)


def test_day_class():
    assert day_class(MONDAY) == "weekday"
    assert day_class(MONDAY + pd.Timedelta(days=5)) == "weekend"


# -- files ---------------------------------------------------------------

def test_sample_set_layout(tmp_path):
    s = SampleSet("triangular", 1, MONDAY, [{"price": np.array([1.0, 2.0])}, {"price": np.array([3.0, 4.0])}])
    paths = s.write(tmp_path)
    assert [p.replace(str(tmp_path), "") for p in paths] == [
        "/samples/triangular/0/price.csv", "/samples/triangular/1/price.csv"]
    back = read_series_csv(paths[1])
    assert back.start == MONDAY and list(back.values) == [3.0, 4.0]


def test_series_csv_round_trip(tmp_path):
    ts = TimeSeries(MONDAY, np.array([0.1, -2.5, 1e-17]), "price")
    path = tmp_path / "price.csv"
    write_series_csv(path, ts)
    assert path.read_text().splitlines()[:2] == ["timestamp,value", "2021-01-04T00:00:00,0.1"]
    back = read_series_csv(path)
    assert back.values.tobytes() == ts.values.tobytes()
    assert back.label == "price"


def test_series_csv_rejects_gaps(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("timestamp,value\n2021-01-01T00:00,1\n2021-01-01T02:00,2\n")
    with pytest.raises(ValueError, match="consecutive"):
        read_series_csv(path)


def test_time_series_rejects_missing_values():
    with pytest.raises(ValueError, match="non-finite"):
        TimeSeries(MONDAY, [1.0, np.nan])


def test_weeks_before():
    ts = TimeSeries(MONDAY, np.arange(4 * WEEK, dtype=float))
    weeks = ts.weeks_before(4 * WEEK)
    assert weeks.shape == (3, WEEK) and weeks[0, 0] == WEEK
    with pytest.raises(ValueError):
        ts.weeks_before(2 * WEEK)
    assert ts.index_of(MONDAY + pd.Timedelta(hours=5)) == 5
