"""Per-user numeric features: 12 direct metadata features followed by 14
derived features, in a fixed registry order.

The registry (FEATURE_NAMES) is the single source of truth for vector layout
and is exported in every model bundle manifest. Derived features that draw on
several profile strings aggregate them into one scalar so the vector stays
at exactly 26 entries.
"""

from __future__ import annotations

import math
import re
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InsufficientData, InvariantViolation
from .ingest import UserRecord, UserStore

# Floor for account age (days) wherever it appears as a divisor, so
# zero-age accounts yield finite rates.
MIN_USER_AGE_DAYS = 1e-3

_DIRECT_NAMES = (
    "status_count",
    "follower_count",
    "friend_count",
    "favorite_count",
    "listed_count",
    "default_profile",
    "profile_use_background_image",
    "verified",
    "user_id_numeric",
    "protected",
    "has_location",
    "user_age_days",
)
_DERIVED_NAMES = (
    "name_digit_count",
    "tweet_frequency",
    "description_url_count",
    "bot_word_count",
    "username_entropy",
    "profile_text_length",
    "followers_growth_rate",
    "friends_growth_rate",
    "hashtag_count",
    "follower_friend_ratio",
    "username_capital_letter_count",
    "name_unicode_group",
    "description_sentiment_score",
    "name_edit_distance",
)
FEATURE_NAMES: tuple[str, ...] = _DIRECT_NAMES + _DERIVED_NAMES
N_FEATURES = len(FEATURE_NAMES)

_HASHTAG_RE = re.compile(r"#(?=\S)")
_ASCII_DIGITS = set("0123456789")


def string_entropy(s: str) -> float:
    """Shannon entropy (bits) of the character distribution of s.

    Empty and single-distinct-character strings score 0; the value is bounded
    by log2 of the distinct character count.
    """
    if not s:
        return 0.0
    counts = Counter(s)
    n = len(s)
    ent = 0.0
    for c in counts.values():
        p = c / n
        ent -= p * math.log2(p)
    return max(ent, 0.0)


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over Unicode scalar values."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[-1]


# The 105-bucket grouping of characters: buckets 0..103 are the first 104
# Unicode blocks in codepoint order (start, end, name); bucket 104 catches
# every codepoint outside them (unassigned gaps, CJK, emoji, ...).
UNICODE_BLOCKS: tuple[tuple[int, int, str], ...] = (
    (0x0000, 0x007F, "Basic Latin"),
    (0x0080, 0x00FF, "Latin-1 Supplement"),
    (0x0100, 0x017F, "Latin Extended-A"),
    (0x0180, 0x024F, "Latin Extended-B"),
    (0x0250, 0x02AF, "IPA Extensions"),
    (0x02B0, 0x02FF, "Spacing Modifier Letters"),
    (0x0300, 0x036F, "Combining Diacritical Marks"),
    (0x0370, 0x03FF, "Greek and Coptic"),
    (0x0400, 0x04FF, "Cyrillic"),
    (0x0500, 0x052F, "Cyrillic Supplement"),
    (0x0530, 0x058F, "Armenian"),
    (0x0590, 0x05FF, "Hebrew"),
    (0x0600, 0x06FF, "Arabic"),
    (0x0700, 0x074F, "Syriac"),
    (0x0750, 0x077F, "Arabic Supplement"),
    (0x0780, 0x07BF, "Thaana"),
    (0x07C0, 0x07FF, "NKo"),
    (0x0800, 0x083F, "Samaritan"),
    (0x0840, 0x085F, "Mandaic"),
    (0x0860, 0x086F, "Syriac Supplement"),
    (0x08A0, 0x08FF, "Arabic Extended-A"),
    (0x0900, 0x097F, "Devanagari"),
    (0x0980, 0x09FF, "Bengali"),
    (0x0A00, 0x0A7F, "Gurmukhi"),
    (0x0A80, 0x0AFF, "Gujarati"),
    (0x0B00, 0x0B7F, "Oriya"),
    (0x0B80, 0x0BFF, "Tamil"),
    (0x0C00, 0x0C7F, "Telugu"),
    (0x0C80, 0x0CFF, "Kannada"),
    (0x0D00, 0x0D7F, "Malayalam"),
    (0x0D80, 0x0DFF, "Sinhala"),
    (0x0E00, 0x0E7F, "Thai"),
    (0x0E80, 0x0EFF, "Lao"),
    (0x0F00, 0x0FFF, "Tibetan"),
    (0x1000, 0x109F, "Myanmar"),
    (0x10A0, 0x10FF, "Georgian"),
    (0x1100, 0x11FF, "Hangul Jamo"),
    (0x1200, 0x137F, "Ethiopic"),
    (0x1380, 0x139F, "Ethiopic Supplement"),
    (0x13A0, 0x13FF, "Cherokee"),
    (0x1400, 0x167F, "Unified Canadian Aboriginal Syllabics"),
    (0x1680, 0x169F, "Ogham"),
    (0x16A0, 0x16FF, "Runic"),
    (0x1700, 0x171F, "Tagalog"),
    (0x1720, 0x173F, "Hanunoo"),
    (0x1740, 0x175F, "Buhid"),
    (0x1760, 0x177F, "Tagbanwa"),
    (0x1780, 0x17FF, "Khmer"),
    (0x1800, 0x18AF, "Mongolian"),
    (0x18B0, 0x18FF, "Unified Canadian Aboriginal Syllabics Extended"),
    (0x1900, 0x194F, "Limbu"),
    (0x1950, 0x197F, "Tai Le"),
    (0x1980, 0x19DF, "New Tai Lue"),
    (0x19E0, 0x19FF, "Khmer Symbols"),
    (0x1A00, 0x1A1F, "Buginese"),
    (0x1A20, 0x1AAF, "Tai Tham"),
    (0x1AB0, 0x1AFF, "Combining Diacritical Marks Extended"),
    (0x1B00, 0x1B7F, "Balinese"),
    (0x1B80, 0x1BBF, "Sundanese"),
    (0x1BC0, 0x1BFF, "Batak"),
    (0x1C00, 0x1C4F, "Lepcha"),
    (0x1C50, 0x1C7F, "Ol Chiki"),
    (0x1C80, 0x1C8F, "Cyrillic Extended-C"),
    (0x1C90, 0x1CBF, "Georgian Extended"),
    (0x1CC0, 0x1CCF, "Sundanese Supplement"),
    (0x1CD0, 0x1CFF, "Vedic Extensions"),
    (0x1D00, 0x1D7F, "Phonetic Extensions"),
    (0x1D80, 0x1DBF, "Phonetic Extensions Supplement"),
    (0x1DC0, 0x1DFF, "Combining Diacritical Marks Supplement"),
    (0x1E00, 0x1EFF, "Latin Extended Additional"),
    (0x1F00, 0x1FFF, "Greek Extended"),
    (0x2000, 0x206F, "General Punctuation"),
    (0x2070, 0x209F, "Superscripts and Subscripts"),
    (0x20A0, 0x20CF, "Currency Symbols"),
    (0x20D0, 0x20FF, "Combining Diacritical Marks for Symbols"),
    (0x2100, 0x214F, "Letterlike Symbols"),
    (0x2150, 0x218F, "Number Forms"),
    (0x2190, 0x21FF, "Arrows"),
    (0x2200, 0x22FF, "Mathematical Operators"),
    (0x2300, 0x23FF, "Miscellaneous Technical"),
    (0x2400, 0x243F, "Control Pictures"),
    (0x2440, 0x245F, "Optical Character Recognition"),
    (0x2460, 0x24FF, "Enclosed Alphanumerics"),
    (0x2500, 0x257F, "Box Drawing"),
    (0x2580, 0x259F, "Block Elements"),
    (0x25A0, 0x25FF, "Geometric Shapes"),
    (0x2600, 0x26FF, "Miscellaneous Symbols"),
    (0x2700, 0x27BF, "Dingbats"),
    (0x27C0, 0x27EF, "Miscellaneous Mathematical Symbols-A"),
    (0x27F0, 0x27FF, "Supplemental Arrows-A"),
    (0x2800, 0x28FF, "Braille Patterns"),
    (0x2900, 0x297F, "Supplemental Arrows-B"),
    (0x2980, 0x29FF, "Miscellaneous Mathematical Symbols-B"),
    (0x2A00, 0x2AFF, "Supplemental Mathematical Operators"),
    (0x2B00, 0x2BFF, "Miscellaneous Symbols and Arrows"),
    (0x2C00, 0x2C5F, "Glagolitic"),
    (0x2C60, 0x2C7F, "Latin Extended-C"),
    (0x2C80, 0x2CFF, "Coptic"),
    (0x2D00, 0x2D2F, "Georgian Supplement"),
    (0x2D30, 0x2D7F, "Tifinagh"),
    (0x2D80, 0x2DDF, "Ethiopic Extended"),
    (0x2DE0, 0x2DFF, "Cyrillic Extended-A"),
    (0x2E00, 0x2E7F, "Supplemental Punctuation"),
    (0x2E80, 0x2EFF, "CJK Radicals Supplement"),
)
N_UNICODE_GROUPS = len(UNICODE_BLOCKS) + 1  # +1 for the catch-all bucket
OTHER_UNICODE_GROUP = N_UNICODE_GROUPS - 1
assert N_UNICODE_GROUPS == 105

_BLOCK_STARTS = [b[0] for b in UNICODE_BLOCKS]


def _char_group(ch: str) -> int:
    cp = ord(ch)
    idx = bisect_right(_BLOCK_STARTS, cp) - 1
    if idx >= 0 and cp <= UNICODE_BLOCKS[idx][1]:
        return idx
    return OTHER_UNICODE_GROUP


def unicode_group(s: str) -> int:
    """Majority Unicode-block bucket of the characters in s, in [0, 104].

    Empty strings map to bucket 0; ties go to the lower bucket index.
    """
    if not s:
        return 0
    counts = Counter(_char_group(ch) for ch in s)
    best_bucket = 0
    best_count = -1
    for bucket in sorted(counts):
        if counts[bucket] > best_count:
            best_bucket = bucket
            best_count = counts[bucket]
    return best_bucket


def _count_digits(s: str) -> int:
    return sum(1 for ch in s if ch in _ASCII_DIGITS)


def _user_id_numeric(uid: str) -> float:
    # Numeric encoding of the account id: its ASCII digits read as an
    # integer (first 18 digits to stay comfortably finite), else 0.
    digits = "".join(ch for ch in uid if ch in _ASCII_DIGITS)[:18]
    return float(int(digits)) if digits else 0.0


def _url_count(s: str) -> int:
    return s.count("http://") + s.count("https://")


def _bot_word_count(*parts: str) -> int:
    return sum(p.lower().count("bot") for p in parts)


def _hashtag_count(*parts: str) -> int:
    return sum(len(_HASHTAG_RE.findall(p)) for p in parts)


def compute_features(
    u: UserRecord, sentiment: Callable[[str], float] | None = None
) -> np.ndarray:
    """Compute the 26-entry feature vector for one user.

    Pure and total: equal records give bit-equal vectors. ``sentiment`` is a
    pluggable scalar scorer for the description; without one the sentiment
    feature is neutral (0.0).
    """
    age = max(u.age_days, MIN_USER_AGE_DAYS)
    sent = float(sentiment(u.description)) if sentiment is not None else 0.0
    values = (
        # direct
        float(u.status_count),
        float(u.follower_count),
        float(u.friend_count),
        float(u.favorite_count),
        float(u.listed_count),
        float(u.default_profile),
        float(u.profile_use_background_image),
        float(u.verified),
        _user_id_numeric(u.id),
        float(u.protected),
        float(u.has_location),
        age,
        # derived
        float(_count_digits(u.screen_name) + _count_digits(u.username)),
        u.status_count / age,
        float(_url_count(u.description)),
        float(_bot_word_count(u.description, u.screen_name, u.username)),
        string_entropy(u.username),
        float(len(u.screen_name) + len(u.username) + len(u.description)),
        u.follower_count / age,
        u.friend_count / age,
        float(_hashtag_count(u.screen_name, u.description)),
        u.follower_count / max(u.friend_count, 1),
        float(sum(1 for ch in u.username if ch.isupper())),
        float(unicode_group(u.screen_name + u.username)),
        sent,
        float(levenshtein(u.username, u.screen_name)),
    )
    vec = np.array(values, dtype=np.float64)
    if not np.all(np.isfinite(vec)):
        bad = [FEATURE_NAMES[i] for i in np.flatnonzero(~np.isfinite(vec))]
        raise InvariantViolation(f"non-finite feature(s) {bad} for user {u.id!r}")
    return vec


def compute_feature_matrix(
    store: UserStore,
    ids: Sequence[str] | None = None,
    sentiment: Callable[[str], float] | None = None,
) -> tuple[list[str], np.ndarray]:
    """Feature matrix for the given ids (default: all, sorted)."""
    id_list = list(ids) if ids is not None else store.sorted_ids()
    if not id_list:
        return [], np.zeros((0, N_FEATURES), dtype=np.float64)
    X = np.stack([compute_features(store[uid], sentiment) for uid in id_list])
    return id_list, X


@dataclass
class FeatureStats:
    """Per-coordinate mean and population standard deviation."""

    mean: np.ndarray
    stddev: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "stddev": self.stddev.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "FeatureStats":
        stats = cls(
            mean=np.asarray(obj["mean"], dtype=np.float64),
            stddev=np.asarray(obj["stddev"], dtype=np.float64),
        )
        if np.any(stats.stddev < 0):
            raise InvariantViolation("negative stddev in feature stats")
        return stats


def fit_normalizer(X: np.ndarray | Iterable[np.ndarray]) -> FeatureStats:
    """Fit per-coordinate z-score statistics (population stddev)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InsufficientData("normalizer needs at least 2 feature vectors")
    return FeatureStats(mean=X.mean(axis=0), stddev=X.std(axis=0))


def normalize(x: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Z-score x; coordinates with zero stddev are only mean-centered."""
    x = np.asarray(x, dtype=np.float64)
    centered = x - stats.mean
    scale = np.where(stats.stddev > 0, stats.stddev, 1.0)
    return centered / scale
