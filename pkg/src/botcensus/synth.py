"""Synthetic ground-truth communities: class-conditional account generation
with a tunable separation knob, homophilous follow edges, and breadth-first
proximity resampling at target bot fractions.

The separation knob ``delta`` scales every class offset; at delta = 0 the two
classes are identically distributed (classifiers reduce to chance) and at the
default delta = 1 they are well separated but overlapping. Numeric metadata
is drawn from log-normal families with class mean shifts; profile strings and
tweets come from style pools chosen by a delta-dependent coin.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError, InfeasibleTarget
from .ingest import (
    LABEL_BOT,
    LABEL_HUMAN,
    EdgeList,
    RELATION_FOLLOWS,
    UserRecord,
    UserStore,
    write_edges,
    write_labels,
    write_users,
)

SNAPSHOT_AT = datetime(2023, 1, 1, tzinfo=timezone.utc)

_HUMAN_NAME_WORDS = (
    "alex", "sam", "maria", "jon", "lena", "chris", "dana", "mike",
    "sara", "tom", "nina", "paul", "ella", "ray", "kate", "leo",
)
_BOT_NAME_WORDS = (
    "crypto", "promo", "deals", "airdrop", "signal", "trader", "news",
    "pump", "giveaway", "offers", "winbig", "botly", "roboto", "botz",
)
_HUMAN_TWEET_TEMPLATES = (
    "had a great {a} at the {b} today",
    "really enjoying this {a} weather with {b}",
    "just finished reading about {a} and {b}",
    "dinner with {a} was lovely, then a {b}",
    "cant wait for the {a} game this weekend at the {b}",
    "my {a} keeps me busy these days, also the {b}",
    "thoughts on {a} anyone? maybe over {b}",
    "weekend plans: {a} and {b}",
)
_HUMAN_FILLS = (
    "run", "coffee", "park", "book", "garden", "match", "movie", "recipe",
    "trip", "lake", "city", "friends", "family", "music", "class", "project",
)
_BOT_TWEET_TEMPLATES = (
    "huge {a} giveaway follow and retweet to win https://promo.example/{b}",
    "dont miss this {a} deal act now https://deals.example/{b}",
    "earn {a} daily with our trading signal #crypto #{b}",
    "free {a} for the first 100 followers https://win.example/{b}",
    "limited offer {a} discount today only #{b} #sale",
)
_BOT_FILLS = (
    "bitcoin", "token", "cash", "bonus", "prize", "nft", "coins",
    "reward", "gift", "usdt",
)
_HUMAN_DESCRIPTIONS = (
    "lover of {a} and {b}, views my own",
    "{a} enthusiast, weekend {b} person",
    "living for {a}, {b}, and long walks",
    "parent, {a} fan, amateur {b} cook",
)
_BOT_DESCRIPTIONS = (
    "best {a} signals daily, join now https://promo.example/{b}",
    "official {a} deals account #{b} #offers",
    "daily {a} drops, follow for {b} rewards",
    "automated {a} alerts and {b} news feed",
)


@dataclass
class SynthConfig:
    n_users: int
    bot_fraction: float = 0.5
    seed: int = 0
    delta: float = 1.0  # class-separation knob in [0, 1.2]
    homophily: float = 0.7  # probability an edge joins same-class nodes
    mean_degree: float = 8.0  # expected in+out degree per user

    def validate(self) -> None:
        if self.n_users < 2:
            raise ConfigError(f"n_users must be >= 2, got {self.n_users}")
        if not (0.0 <= self.bot_fraction <= 1.0):
            raise ConfigError(f"bot_fraction out of [0, 1]: {self.bot_fraction}")
        if not (0.0 <= self.delta <= 1.2):
            raise ConfigError(f"delta out of [0, 1.2]: {self.delta}")
        if not (0.0 <= self.homophily <= 1.0):
            raise ConfigError(f"homophily out of [0, 1]: {self.homophily}")
        if self.mean_degree < 0:
            raise ConfigError(f"mean_degree must be >= 0: {self.mean_degree}")


def _lognormal(rng, base_log: float, shift: float, sigma: float) -> float:
    return float(np.exp(rng.normal(base_log + shift, sigma)))


def _coin(rng, p: float) -> bool:
    return bool(rng.random() < min(max(p, 0.02), 0.98))


def _pick(rng, pool):
    return pool[int(rng.integers(len(pool)))]


def _make_name(rng, bot_style: bool) -> tuple[str, str]:
    """(username, screen_name). Human names are close variants of each other;
    bot names are digit-heavy and unrelated."""
    if bot_style:
        w1, w2 = _pick(rng, _BOT_NAME_WORDS), _pick(rng, _BOT_NAME_WORDS)
        username = f"{w1}{rng.integers(10_000, 99_999_999)}"
        screen_name = f"{w2}_{rng.integers(100, 999_999)}"
    else:
        w = _pick(rng, _HUMAN_NAME_WORDS)
        suffix = str(rng.integers(0, 100)) if rng.random() < 0.4 else ""
        username = f"{w}{suffix}"
        screen_name = username.capitalize()
        if rng.random() < 0.3:
            screen_name = f"{w.capitalize()} {_pick(rng, _HUMAN_NAME_WORDS).capitalize()}"
    return username, screen_name


def _make_text(rng, p_bot_style: float, n_tweets: int) -> tuple[str, tuple[str, ...]]:
    """Description and tweets; each tweet independently draws its style, so
    per-user evidence strength varies continuously."""
    if _coin(rng, p_bot_style):
        desc_tpl, desc_fills = _pick(rng, _BOT_DESCRIPTIONS), _BOT_FILLS
    else:
        desc_tpl, desc_fills = _pick(rng, _HUMAN_DESCRIPTIONS), _HUMAN_FILLS
    description = (
        ""
        if rng.random() < 0.1
        else desc_tpl.format(a=_pick(rng, desc_fills), b=_pick(rng, desc_fills))
    )
    bot_templates = [_pick(rng, _BOT_TWEET_TEMPLATES) for _ in range(2)]
    tweets = []
    for _ in range(n_tweets):
        if _coin(rng, p_bot_style):
            tpl, fills = _pick(rng, bot_templates), _BOT_FILLS
        else:
            tpl, fills = _pick(rng, _HUMAN_TWEET_TEMPLATES), _HUMAN_FILLS
        tweets.append(tpl.format(a=_pick(rng, fills), b=_pick(rng, fills)))
    return description, tuple(tweets)


def _make_user(rng, uid: str, is_bot: bool, delta: float) -> UserRecord:
    d = delta

    age = _lognormal(rng, np.log(400.0), d * (-0.9 if is_bot else 0.7), 0.8)
    age = min(max(age, 2.0), 5000.0)
    freq = _lognormal(rng, np.log(1.5), d * (1.3 if is_bot else -0.5), 0.7)
    status = int(min(round(freq * age), 1_000_000))
    follower = int(min(_lognormal(rng, np.log(120.0), d * (-1.3 if is_bot else 1.0), 1.1), 5e6))
    friend = int(min(_lognormal(rng, np.log(150.0), d * (0.9 if is_bot else -0.1), 0.9), 5e6))
    favorite = int(min(_lognormal(rng, np.log(80.0), d * (-1.0 if is_bot else 0.8), 1.2), 5e6))
    listed = int(max(min(_lognormal(rng, np.log(3.0), d * (-0.8 if is_bot else 0.6), 1.0), 1e5) - 1.0, 0.0))

    verified = _coin(rng, 0.12 + d * (-0.115 if is_bot else 0.08))
    default_profile = _coin(rng, 0.35 + d * (0.3 if is_bot else -0.15))
    background = _coin(rng, 0.5 + d * (-0.3 if is_bot else 0.25))
    protected = _coin(rng, 0.05)
    has_location = _coin(rng, 0.45 + d * (-0.3 if is_bot else 0.25))

    p_bot_style = 0.5 + d * (0.4 if is_bot else -0.4)
    username, screen_name = _make_name(rng, _coin(rng, p_bot_style))
    n_tweets = 0 if rng.random() < 0.05 else int(rng.integers(1, 26))
    description, tweets = _make_text(rng, p_bot_style, n_tweets)

    # whole seconds so records survive the users-file round trip exactly
    created = (SNAPSHOT_AT - timedelta(days=age)).replace(microsecond=0)
    return UserRecord(
        id=uid,
        created_at=created,
        snapshot_at=SNAPSHOT_AT,
        status_count=status,
        follower_count=follower,
        friend_count=friend,
        favorite_count=favorite,
        listed_count=listed,
        default_profile=default_profile,
        profile_use_background_image=background,
        verified=verified,
        protected=protected,
        has_location=has_location,
        screen_name=screen_name,
        username=username,
        description=description,
        tweets=tweets,
        label=LABEL_BOT if is_bot else LABEL_HUMAN,
    )


def generate_community(
    cfg: SynthConfig,
) -> tuple[UserStore, EdgeList, dict[str, str]]:
    """Generate a labeled community with exactly round(n * bot_fraction) bots
    and homophilous directed follow edges. Bit-reproducible given the config.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_users
    n_bots = int(np.floor(cfg.bot_fraction * n + 0.5))
    width = max(len(str(n)), 5)
    ids = [f"u{str(i).zfill(width)}" for i in range(n)]
    bot_positions = set(rng.permutation(n)[:n_bots].tolist())

    users: dict[str, UserRecord] = {}
    labels: dict[str, str] = {}
    for i, uid in enumerate(ids):
        is_bot = i in bot_positions
        users[uid] = _make_user(rng, uid, is_bot, cfg.delta)
        labels[uid] = LABEL_BOT if is_bot else LABEL_HUMAN
    store = UserStore(users=users, provenance={uid: "synthetic" for uid in ids})

    bots = np.asarray(sorted(bot_positions), dtype=np.int64)
    humans = np.asarray(
        [i for i in range(n) if i not in bot_positions], dtype=np.int64
    )
    n_edges = int(round(n * cfg.mean_degree / 2.0))
    seen: set[tuple[int, int]] = set()
    pairs: list[tuple[str, str, str]] = []
    for _ in range(n_edges):
        for _attempt in range(64):
            src = int(rng.integers(n))
            same = rng.random() < cfg.homophily
            src_is_bot = src in bot_positions
            pool = (bots if src_is_bot else humans) if same else (
                humans if src_is_bot else bots
            )
            if pool.size == 0:
                break
            dst = int(pool[int(rng.integers(pool.size))])
            if dst != src and (src, dst) not in seen:
                seen.add((src, dst))
                pairs.append((ids[src], ids[dst], RELATION_FOLLOWS))
                break
    return store, EdgeList(edges=pairs), labels


def resample_by_proximity(
    store: UserStore,
    edges: EdgeList,
    labels: Mapping[str, str],
    target_fraction: float,
    size: int,
    seed: int,
    return_trace: bool = False,
):
    """Breadth-first community resampling steered toward a target bot count.

    Nodes are visited in BFS order from a seeded start; a visited node is
    accepted while its class is still needed, and traversal always continues
    through visited nodes, so every member joins adjacent to the visited set.
    Final bot count is exactly round(size * target_fraction).

    With return_trace=True also returns the visit trace as a list of
    (user_id, parent_id_or_None, accepted) tuples in visit order, for
    auditing the BFS expansion.
    """
    if size < 1:
        raise InfeasibleTarget(f"size must be >= 1, got {size}")
    if not (0.0 <= target_fraction <= 1.0):
        raise InfeasibleTarget(f"target fraction out of [0, 1]: {target_fraction}")
    need = {
        LABEL_BOT: int(np.floor(target_fraction * size + 0.5)),
    }
    need[LABEL_HUMAN] = size - need[LABEL_BOT]
    pool_ids = [uid for uid in store.sorted_ids() if uid in labels]
    have = {
        LABEL_BOT: sum(1 for uid in pool_ids if labels[uid] == LABEL_BOT),
        LABEL_HUMAN: sum(1 for uid in pool_ids if labels[uid] == LABEL_HUMAN),
    }
    for cls in (LABEL_BOT, LABEL_HUMAN):
        if have[cls] < need[cls]:
            raise InfeasibleTarget(
                f"pool has {have[cls]} {cls} users, target needs {need[cls]}"
            )

    neighbors: dict[str, list[str]] = {uid: [] for uid in pool_ids}
    for src, dst, _rel in edges.edges:
        if src in neighbors and dst in neighbors:
            neighbors[src].append(dst)
            neighbors[dst].append(src)
    for uid in neighbors:
        neighbors[uid] = sorted(set(neighbors[uid]))

    rng = np.random.default_rng(seed)
    unvisited = set(pool_ids)
    accepted: list[str] = []
    trace: list[tuple[str, str | None, bool]] = []
    queue: deque[tuple[str, str | None]] = deque()

    def next_start() -> str | None:
        candidates = [
            uid for uid in pool_ids if uid in unvisited and need[labels[uid]] > 0
        ]
        if not candidates:
            return None
        return candidates[int(rng.integers(len(candidates)))]

    while need[LABEL_BOT] > 0 or need[LABEL_HUMAN] > 0:
        if not queue:
            start = next_start()
            if start is None:
                raise InfeasibleTarget("pool exhausted before reaching the target")
            unvisited.discard(start)
            queue.append((start, None))
        uid, parent = queue.popleft()
        cls = labels[uid]
        take = need[cls] > 0
        if take:
            need[cls] -= 1
            accepted.append(uid)
        trace.append((uid, parent, take))
        for nb in neighbors[uid]:
            if nb in unvisited:
                unvisited.discard(nb)
                queue.append((nb, uid))
    community = store.subset(accepted)
    if return_trace:
        return community, trace
    return community


def write_community(
    out_dir: str | Path,
    store: UserStore,
    edges: EdgeList,
    labels: Mapping[str, str],
) -> dict[str, Path]:
    """Write users.jsonl / edges.csv / labels.csv in the ingest formats."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "users": out_dir / "users.jsonl",
        "edges": out_dir / "edges.csv",
        "labels": out_dir / "labels.csv",
    }
    write_users(store, paths["users"])
    write_edges(edges, paths["edges"])
    write_labels(labels, paths["labels"])
    return paths
