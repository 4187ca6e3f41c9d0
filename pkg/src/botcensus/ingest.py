"""User and edge ingestion: parse, merge, split, and perturb account stores.

File formats
------------
* users file: JSONL, one record per line, field names matching UserRecord,
  timestamps RFC 3339.
* edges file: CSV with header ``source_id,target_id,relation``.
* labels: either inline (``label`` field on the user record) or a separate
  CSV with header ``id,label``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import (
    BadFraction,
    EmptyInput,
    InsufficientData,
    InvariantViolation,
    MissingField,
    ParseError,
)

LABEL_HUMAN = "human"
LABEL_BOT = "bot"
VALID_LABELS = (LABEL_HUMAN, LABEL_BOT)

# Class indices used by every model in the package: column 0 scores the
# human class, column 1 the bot class.
CLASS_HUMAN = 0
CLASS_BOT = 1

RELATION_FOLLOWS = "follows"

_COUNT_FIELDS = (
    "status_count",
    "follower_count",
    "friend_count",
    "favorite_count",
    "listed_count",
)
_BOOL_FIELDS = (
    "default_profile",
    "profile_use_background_image",
    "verified",
    "protected",
    "has_location",
)
_STRING_FIELDS = ("screen_name", "username", "description")


@dataclass(frozen=True)
class UserRecord:
    """One account snapshot. Immutable; tweets ordered most recent first."""

    id: str
    created_at: datetime
    snapshot_at: datetime
    status_count: int = 0
    follower_count: int = 0
    friend_count: int = 0
    favorite_count: int = 0
    listed_count: int = 0
    default_profile: bool = False
    profile_use_background_image: bool = False
    verified: bool = False
    protected: bool = False
    has_location: bool = False
    screen_name: str = ""
    username: str = ""
    description: str = ""
    tweets: tuple[str, ...] = ()
    label: str | None = None

    def __post_init__(self):
        if not self.id:
            raise MissingField("record has empty id")
        for name in _COUNT_FIELDS:
            if getattr(self, name) < 0:
                raise InvariantViolation(f"{name} is negative for user {self.id!r}")
        if self.snapshot_at < self.created_at:
            raise InvariantViolation(
                f"snapshot_at precedes created_at for user {self.id!r}"
            )
        if self.label is not None and self.label not in VALID_LABELS:
            raise ParseError(f"unknown label {self.label!r} for user {self.id!r}")

    @property
    def age_days(self) -> float:
        """Account age in days at snapshot time (unfloored)."""
        return (self.snapshot_at - self.created_at).total_seconds() / 86400.0


@dataclass
class UserStore:
    """Id-keyed collection of UserRecords with per-user source provenance.

    Treated as immutable after construction; all operations return new stores,
    making concurrent reads safe.
    """

    users: dict[str, UserRecord] = field(default_factory=dict)
    provenance: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for uid, rec in self.users.items():
            if uid != rec.id:
                raise InvariantViolation(f"store key {uid!r} != record id {rec.id!r}")
            if uid not in self.provenance:
                raise InvariantViolation(f"provenance missing for user {uid!r}")

    def __len__(self) -> int:
        return len(self.users)

    def __contains__(self, uid: str) -> bool:
        return uid in self.users

    def __getitem__(self, uid: str) -> UserRecord:
        return self.users[uid]

    def sorted_ids(self) -> list[str]:
        return sorted(self.users)

    def records(self) -> Iterator[UserRecord]:
        """Records in sorted-id order (the canonical iteration order)."""
        for uid in self.sorted_ids():
            yield self.users[uid]

    def labeled_ids(self) -> list[str]:
        return [uid for uid in self.sorted_ids() if self.users[uid].label is not None]

    def subset(self, ids: Iterable[str]) -> "UserStore":
        ids = list(ids)
        return UserStore(
            users={uid: self.users[uid] for uid in ids},
            provenance={uid: self.provenance[uid] for uid in ids},
        )

    def with_labels(self, labels: Mapping[str, str]) -> "UserStore":
        """Return a copy with labels applied from an id -> label map."""
        users = dict(self.users)
        for uid, lab in labels.items():
            if uid in users:
                users[uid] = replace(users[uid], label=lab)
        return UserStore(users=users, provenance=dict(self.provenance))

    def label_array(self, ids: Iterable[str]) -> np.ndarray:
        """Integer labels (0 human, 1 bot) for the given ids; all must be labeled."""
        out = []
        for uid in ids:
            lab = self.users[uid].label
            if lab is None:
                raise InvariantViolation(f"user {uid!r} has no label")
            out.append(CLASS_BOT if lab == LABEL_BOT else CLASS_HUMAN)
        return np.asarray(out, dtype=np.int64)


@dataclass
class EdgeList:
    """Directed relation edges between user ids."""

    edges: list[tuple[str, str, str]] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for src, dst, rel in self.edges:
            if src == dst:
                raise InvariantViolation(f"self-edge on {src!r}")
            if rel != RELATION_FOLLOWS:
                raise InvariantViolation(f"unknown relation {rel!r}")
            key = (src, dst, rel)
            if key in seen:
                raise InvariantViolation(f"duplicate edge {key}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.edges)


def _parse_timestamp(value, field_name: str, line_number: int | None) -> datetime:
    if not isinstance(value, str):
        raise ParseError(f"{field_name} must be an RFC 3339 string", line_number)
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise ParseError(f"bad {field_name} timestamp {value!r}: {exc}", line_number)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def parse_user_record(line: str, line_number: int | None = None) -> UserRecord:
    """Parse one JSONL user record.

    Absent optional fields default to zero counts, false booleans, empty
    strings, and an empty tweet list; an absent label stays None.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc.msg}", line_number)
    if not isinstance(obj, dict):
        raise ParseError("record is not a JSON object", line_number)

    if "id" not in obj or obj["id"] in (None, ""):
        raise MissingField("missing id", line_number)
    uid = obj["id"]
    if not isinstance(uid, str):
        uid = str(uid)

    for ts_field in ("created_at", "snapshot_at"):
        if ts_field not in obj or obj[ts_field] in (None, ""):
            raise MissingField(f"missing {ts_field}", line_number)
    created = _parse_timestamp(obj["created_at"], "created_at", line_number)
    snapshot = _parse_timestamp(obj["snapshot_at"], "snapshot_at", line_number)

    kwargs: dict = {"id": uid, "created_at": created, "snapshot_at": snapshot}
    for name in _COUNT_FIELDS:
        raw = obj.get(name, 0)
        if raw is None:
            raw = 0
        if isinstance(raw, bool) or not isinstance(raw, int):
            raise ParseError(f"{name} must be an integer, got {raw!r}", line_number)
        kwargs[name] = raw
    for name in _BOOL_FIELDS:
        raw = obj.get(name, False)
        if raw is None:
            raw = False
        if not isinstance(raw, bool):
            raise ParseError(f"{name} must be a boolean, got {raw!r}", line_number)
        kwargs[name] = raw
    for name in _STRING_FIELDS:
        raw = obj.get(name, "")
        if raw is None:
            raw = ""
        if not isinstance(raw, str):
            raise ParseError(f"{name} must be a string, got {raw!r}", line_number)
        kwargs[name] = raw

    tweets = obj.get("tweets", [])
    if tweets is None:
        tweets = []
    if not isinstance(tweets, list) or any(not isinstance(t, str) for t in tweets):
        raise ParseError("tweets must be a list of strings", line_number)
    kwargs["tweets"] = tuple(tweets)

    label = obj.get("label")
    if label is not None and label not in VALID_LABELS:
        raise ParseError(f"unknown label {label!r}", line_number)
    kwargs["label"] = label

    return UserRecord(**kwargs)


def record_to_json(rec: UserRecord) -> str:
    """Serialize a record to one JSONL line (inverse of parse_user_record)."""
    obj = {
        "id": rec.id,
        "created_at": rec.created_at.strftime("%Y-%m-%dT%H:%M:%SZ"),
        "snapshot_at": rec.snapshot_at.strftime("%Y-%m-%dT%H:%M:%SZ"),
    }
    for name in _COUNT_FIELDS + _BOOL_FIELDS + _STRING_FIELDS:
        obj[name] = getattr(rec, name)
    obj["tweets"] = list(rec.tweets)
    if rec.label is not None:
        obj["label"] = rec.label
    return json.dumps(obj, ensure_ascii=False)


def load_users(path: str | Path, source: str | None = None) -> UserStore:
    """Load a JSONL users file into a UserStore.

    Duplicate ids within one file are an InvariantViolation (merging across
    files goes through merge_datasets instead).
    """
    path = Path(path)
    source = source if source is not None else path.name
    users: dict[str, UserRecord] = {}
    provenance: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = parse_user_record(line, line_number=lineno)
            if rec.id in users:
                raise InvariantViolation(
                    f"duplicate id {rec.id!r} in {path} (line {lineno})"
                )
            users[rec.id] = rec
            provenance[rec.id] = source
    return UserStore(users=users, provenance=provenance)


def write_users(store: UserStore, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in store.records():
            fh.write(record_to_json(rec) + "\n")


def load_edges(path: str | Path) -> EdgeList:
    path = Path(path)
    edges: list[tuple[str, str, str]] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"source_id", "target_id", "relation"}
        if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
            raise ParseError(f"edges file {path} must have header {sorted(expected)}")
        for row in reader:
            edges.append((row["source_id"], row["target_id"], row["relation"]))
    return EdgeList(edges=edges)


def write_edges(edge_list: EdgeList, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source_id", "target_id", "relation"])
        writer.writerows(edge_list.edges)


def load_labels(path: str | Path) -> dict[str, str]:
    path = Path(path)
    labels: dict[str, str] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "label"}.issubset(reader.fieldnames):
            raise ParseError(f"labels file {path} must have header id,label")
        for row in reader:
            if row["label"] not in VALID_LABELS:
                raise ParseError(f"unknown label {row['label']!r} for id {row['id']!r}")
            labels[row["id"]] = row["label"]
    return labels


def write_labels(labels: Mapping[str, str], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label"])
        for uid in sorted(labels):
            writer.writerow([uid, labels[uid]])


def merge_datasets(stores: list[UserStore]) -> UserStore:
    """Id-keyed union of stores; on collision the later store's record wins,
    and provenance records the winning source."""
    if not stores:
        raise EmptyInput("merge_datasets needs at least one store")
    users: dict[str, UserRecord] = {}
    provenance: dict[str, str] = {}
    for store in stores:
        users.update(store.users)
        provenance.update(store.provenance)
    return UserStore(users=users, provenance=provenance)


def split_train_val(
    store: UserStore, val_fraction: float, seed: int
) -> tuple[UserStore, UserStore]:
    """Deterministic stratified split of the labeled users.

    Per label class, round(val_fraction * class_size) users go to validation,
    so each split's bot fraction stays within one user of the store's.
    Unlabeled users appear in neither split.
    """
    if not (0.0 < val_fraction < 1.0):
        raise BadFraction(f"val_fraction must be in (0, 1), got {val_fraction}")
    labeled = store.labeled_ids()
    if len(labeled) < 2:
        raise InsufficientData(
            f"split needs at least 2 labeled users, found {len(labeled)}"
        )

    rng = np.random.default_rng(seed)
    val_ids: list[str] = []
    train_ids: list[str] = []
    for label in VALID_LABELS:
        ids = [uid for uid in labeled if store.users[uid].label == label]
        if not ids:
            continue
        perm = rng.permutation(len(ids))
        n_val = int(np.floor(val_fraction * len(ids) + 0.5))
        chosen = {ids[i] for i in perm[:n_val]}
        val_ids.extend(uid for uid in ids if uid in chosen)
        train_ids.extend(uid for uid in ids if uid not in chosen)
    # Guard degenerate roundings so both splits are non-empty.
    if not val_ids:
        val_ids.append(train_ids.pop())
    if not train_ids:
        train_ids.append(val_ids.pop())
    return store.subset(train_ids), store.subset(val_ids)


def apply_verified_perturbation(store: UserStore, mode: str, seed: int) -> UserStore:
    """Copy the store with the verified flag rewritten per mode.

    Modes: all_true, all_false, or random (independent fair coin per user,
    deterministic given seed, drawn in sorted-id order). No other field
    changes.
    """
    if mode not in ("all_true", "all_false", "random"):
        raise ValueError(f"unknown perturbation mode {mode!r}")
    ids = store.sorted_ids()
    if mode == "random":
        rng = np.random.default_rng(seed)
        flags = rng.random(len(ids)) < 0.5
        new_verified = dict(zip(ids, (bool(f) for f in flags)))
    else:
        value = mode == "all_true"
        new_verified = {uid: value for uid in ids}
    users = {
        uid: replace(store.users[uid], verified=new_verified[uid]) for uid in ids
    }
    return UserStore(users=users, provenance=dict(store.provenance))
