import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mobnet.similarity import (MetricSeries, MissingSourceError, SimilarityError, closest_pair,
                               cosine, dtw, euclidean, mape, pearson)

import oracles


def test_euclidean_examples():
    assert euclidean([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert euclidean([0, 0], [3, 4]) == 5.0
    with pytest.raises(SimilarityError):
        euclidean([np.nan], [1.0])


def test_euclidean_pairwise_deletion():
    assert euclidean([0, np.nan, 0], [3, 100, 4]) == 5.0


def test_mape_examples():
    assert mape([2.0, 5.0], [2.0, 5.0]) == 0.0
    assert mape([2], [3], mode="base-a") == 0.5
    assert mape([2], [3], mode="symmetric") == 0.4


def test_mape_skips_zero_denominators():
    val, skipped = mape([0, 2], [1, 3], mode="base-a", return_skipped=True)
    assert (val, skipped) == (0.5, 1)


def test_pearson_examples():
    a = np.array([1.0, 4.0, 2.0, 8.0])
    assert pearson(a, 2 * a + 1) == 1.0
    assert pearson(a, -a) == -1.0
    assert pearson([3, 3, 3], [1, 2, 3]) is None


def test_dtw_examples():
    assert dtw([1, 5, 2], [1, 5, 2]) == 0.0
    assert dtw([0, 0], [1]) == 2.0
    assert dtw([1, 2, 3], [1, 2, 2, 3]) == 0.0


def test_dtw_drops_missing_points():
    assert dtw([1, np.nan, 2], [1, 2]) == 0.0
    with pytest.raises(SimilarityError):
        dtw([np.nan], [1.0])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=29),
       st.lists(st.floats(0, 10), min_size=1, max_size=29))
def test_dtw_matches_oracle(a, b):
    assert dtw(a, b) == oracles.dtw(a, b)
    assert dtw(a, b) == dtw(b, a)
    assert dtw(a, a) == 0.0


def test_cosine_examples():
    assert cosine([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert cosine([1, 0], [0, 1]) == 0.0
    assert cosine([1, 2], [-1, -2]) == pytest.approx(-1.0)
    assert cosine([0, 0], [1, 1]) is None


def test_metric_series_validation():
    MetricSeries("S", "99001", "m", ("2020-02-01", "2020-02-02"), [1.0, None])
    with pytest.raises(ValueError):
        MetricSeries("S", "99001", "m", ("2020-02-02", "2020-02-01"), [1.0, 2.0])
    with pytest.raises(ValueError):
        MetricSeries("S", "99001", "m", tuple(f"d{i:02d}" for i in range(32)), [0.0] * 32)


def test_identical_pair_wins():
    s = [1.0, 2.0, 3.0]
    v = closest_pair({"S": s, "X": [5.0, 1.0, 0.0], "V": s})
    assert v.pair == "SV" and v.scores["SV"] == 0.0 and not v.tie


def test_all_identical_is_a_tie():
    s = [1.0, 2.0]
    v = closest_pair({"S": s, "X": s, "V": s})
    assert v.pair == "SV" and v.tie


def test_known_distances_pick_smallest():
    # dtw(S,V)=3, dtw(X,V)=2, dtw(S,X)=1 on single-point series
    v = closest_pair({"S": [0.0], "X": [1.0], "V": [3.0]})
    assert v.scores == {"SV": 3.0, "XV": 2.0, "SX": 1.0}
    assert v.pair == "SX"


def test_two_sources_have_no_verdict():
    v = closest_pair({"S": [1.0, 2.0], "V": [1.0, 3.0]})
    assert v.pair == "n/a" and set(v.scores) == {"SV"}


def test_missing_source_raises():
    with pytest.raises(MissingSourceError):
        closest_pair({"S": [1.0], "X": [np.nan], "V": [2.0]})


def test_cosine_max_over_rank_arrays():
    base = np.array([[1, 2, 3, 4], [4, 3, 2, 1]], dtype=float)
    other = np.array([[4, 3, 2, 1], [1, 2, 3, 4]], dtype=float)
    missing_day = base.copy()
    missing_day[1] = np.nan
    v = closest_pair({"S": base, "X": other, "V": missing_day}, method="cosine-max")
    assert v.pair == "SV" and v.scores["SV"] == pytest.approx(1.0)
    assert v.missing["V"] == 1
