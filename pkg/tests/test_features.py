import math
from collections import Counter
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from botcensus.errors import InsufficientData
from botcensus.features import (
    FEATURE_NAMES,
    N_FEATURES,
    UNICODE_BLOCKS,
    compute_features,
    fit_normalizer,
    levenshtein,
    normalize,
    string_entropy,
    unicode_group,
)
from botcensus.ingest import UserRecord

from conftest import rng_record


def record(**kwargs):
    base = dict(
        id="u1",
        created_at=datetime(2020, 1, 1, tzinfo=timezone.utc),
        snapshot_at=datetime(2020, 1, 11, tzinfo=timezone.utc),
    )
    base.update(kwargs)
    return UserRecord(**base)


def feature(vec, name):
    return vec[FEATURE_NAMES.index(name)]


# --- independent oracles -----------------------------------------------------

def entropy_oracle(s):
    n = len(s)
    if n == 0:
        return 0.0
    return -sum((c / n) * math.log2(c / n) for c in Counter(s).values())


def levenshtein_oracle(a, b):
    m, n = len(a), len(b)
    table = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        table[i][0] = i
    for j in range(n + 1):
        table[0][j] = j
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            table[i][j] = min(
                table[i - 1][j] + 1, table[i][j - 1] + 1, table[i - 1][j - 1] + cost
            )
    return table[m][n]


class TestRegistry:
    def test_length_and_split(self):
        assert len(FEATURE_NAMES) == N_FEATURES == 26
        assert len(set(FEATURE_NAMES)) == 26
        assert FEATURE_NAMES[0] == "status_count"
        assert FEATURE_NAMES[11] == "user_age_days"
        assert FEATURE_NAMES[12] == "name_digit_count"
        assert FEATURE_NAMES[25] == "name_edit_distance"


class TestComputeFeatures:
    def test_tweet_frequency(self):
        vec = compute_features(record(status_count=100))
        assert feature(vec, "tweet_frequency") == pytest.approx(10.0)

    def test_follower_friend_ratio(self):
        vec = compute_features(record(follower_count=10, friend_count=5))
        assert feature(vec, "follower_friend_ratio") == pytest.approx(2.0)

    def test_followers_growth_rate(self):
        vec = compute_features(record(follower_count=50))
        assert feature(vec, "followers_growth_rate") == pytest.approx(5.0)

    def test_zero_friend_denominator_rule(self):
        vec = compute_features(record(follower_count=7, friend_count=0))
        assert feature(vec, "follower_friend_ratio") == pytest.approx(7.0)

    def test_zero_age_floor(self):
        ts = datetime(2020, 1, 1, tzinfo=timezone.utc)
        vec = compute_features(
            record(created_at=ts, snapshot_at=ts, status_count=10)
        )
        assert feature(vec, "user_age_days") == pytest.approx(1e-3)
        assert feature(vec, "tweet_frequency") == pytest.approx(10_000.0)

    def test_boolean_encoding(self):
        vec = compute_features(record(verified=True))
        assert feature(vec, "verified") == 1.0
        assert feature(vec, "protected") == 0.0

    def test_user_id_numeric(self):
        assert feature(compute_features(record(id="u123")), "user_id_numeric") == 123.0
        assert feature(compute_features(record(id="abc")), "user_id_numeric") == 0.0

    def test_string_derived_features(self):
        vec = compute_features(
            record(
                username="Bot99",
                screen_name="spam7bot",
                description="visit https://x.test and http://y.test #deal #now",
            )
        )
        assert feature(vec, "name_digit_count") == 3.0  # 9, 9, 7
        assert feature(vec, "description_url_count") == 2.0
        assert feature(vec, "bot_word_count") == 2.0
        assert feature(vec, "hashtag_count") == 2.0
        assert feature(vec, "username_capital_letter_count") == 1.0
        assert feature(vec, "profile_text_length") == float(
            len("Bot99") + len("spam7bot")
            + len("visit https://x.test and http://y.test #deal #now")
        )
        assert feature(vec, "name_edit_distance") == float(
            levenshtein_oracle("Bot99", "spam7bot")
        )

    def test_sentiment_provider_plugs_in(self):
        vec = compute_features(record(description="great day"))
        assert feature(vec, "description_sentiment_score") == 0.0
        vec2 = compute_features(
            record(description="great day"), sentiment=lambda s: 0.75
        )
        assert feature(vec2, "description_sentiment_score") == 0.75

    def test_pure_function_bit_equal(self):
        rec = record(username="abc12", description="hi #x")
        a = compute_features(rec)
        b = compute_features(rec)
        assert np.array_equal(a, b)

    def test_random_records_finite_and_sized(self):
        rng = np.random.default_rng(0)
        for k in range(40):
            vec = compute_features(rng_record(rng, f"u{k}"))
            assert vec.shape == (26,)
            assert np.all(np.isfinite(vec))


class TestEntropy:
    def test_single_symbol(self):
        assert string_entropy("aaaa") == 0.0
        assert string_entropy("") == 0.0

    def test_two_uniform_symbols(self):
        assert string_entropy("aabb") == pytest.approx(1.0)

    def test_two_to_one_mix(self):
        expected = -((2 / 3) * math.log2(2 / 3) + (1 / 3) * math.log2(1 / 3))
        assert string_entropy("aab") == pytest.approx(expected, abs=1e-4)

    @given(st.text(max_size=30))
    def test_matches_oracle(self, s):
        assert string_entropy(s) == pytest.approx(entropy_oracle(s), abs=1e-9)

    @given(st.text(alphabet="abcd#1", max_size=20), st.randoms(use_true_random=False))
    def test_permutation_invariant(self, s, rnd):
        perm = list(s)
        rnd.shuffle(perm)
        assert string_entropy("".join(perm)) == pytest.approx(
            string_entropy(s), abs=1e-12
        )

    @given(st.text(max_size=30))
    def test_bounded_by_log_distinct(self, s):
        distinct = len(set(s))
        bound = math.log2(distinct) if distinct > 1 else 0.0
        assert string_entropy(s) <= bound + 1e-12


SHORT = st.text(alphabet="abéж", max_size=8)


class TestLevenshtein:
    def test_identity(self):
        assert levenshtein("abc", "abc") == 0

    def test_insertions_only(self):
        assert levenshtein("", "abc") == 3

    def test_kitten_sitting(self):
        assert levenshtein("kitten", "sitting") == 3
        assert levenshtein_oracle("kitten", "sitting") == 3

    @given(SHORT, SHORT)
    def test_matches_oracle(self, a, b):
        assert levenshtein(a, b) == levenshtein_oracle(a, b)

    @given(SHORT, SHORT)
    def test_symmetry(self, a, b):
        assert levenshtein(a, b) == levenshtein(b, a)

    @given(SHORT, SHORT, SHORT)
    def test_triangle_inequality(self, a, b, c):
        assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


class TestUnicodeGroup:
    def test_table_shape(self):
        assert len(UNICODE_BLOCKS) == 104
        starts = [b[0] for b in UNICODE_BLOCKS]
        assert starts == sorted(starts)
        assert all(start <= end for start, end, _name in UNICODE_BLOCKS)

    def test_empty_string(self):
        assert unicode_group("") == 0

    def test_basic_latin(self):
        assert unicode_group("abc") == 0

    def test_cyrillic_majority(self):
        # oracle: 2 chars in the Cyrillic range vs 1 Basic Latin char
        s = "aжя"
        assert unicode_group(s) == 8
        assert UNICODE_BLOCKS[8][2] == "Cyrillic"

    def test_tie_goes_to_lower_bucket(self):
        assert unicode_group("aж") == 0

    def test_catch_all_bucket(self):
        assert unicode_group("中文") == 104  # CJK is past the table

    def test_bucket_range(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            cps = rng.integers(32, 0x10000, size=5)
            s = "".join(chr(int(c)) for c in cps)
            assert 0 <= unicode_group(s) <= 104


class TestNormalizer:
    def test_constant_column_maps_to_zero(self):
        X = np.ones((5, 3))
        stats = fit_normalizer(X)
        out = normalize(X[0], stats)
        assert np.allclose(out, 0.0)

    def test_two_point_symmetry(self):
        X = np.array([[0.0], [2.0]])
        stats = fit_normalizer(X)
        assert stats.mean[0] == pytest.approx(1.0)
        assert stats.stddev[0] == pytest.approx(1.0)  # population stddev
        assert normalize(X, stats)[:, 0] == pytest.approx([-1.0, 1.0])

    def test_random_matrix_moments(self):
        rng = np.random.default_rng(3)
        X = rng.normal(2.0, 5.0, size=(100, 26))
        stats = fit_normalizer(X)
        Z = normalize(X, stats)
        # oracle: recompute the moments of the normalized columns
        assert np.all(np.abs(Z.mean(axis=0)) < 1e-9)
        assert np.all(np.abs(Z.std(axis=0) - 1.0) < 1e-9)

    def test_insufficient_data(self):
        with pytest.raises(InsufficientData):
            fit_normalizer(np.ones((1, 26)))
