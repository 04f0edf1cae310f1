"""Interaction log parsing, skip-based labeling and per-user splitting."""

from __future__ import annotations

import csv
import enum
import io
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

INTERACTION_HEADER = ["user_id", "video_id", "playing_time", "duration", "timestamp"]
DEFAULT_THRESHOLD = 5.0


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


class InvalidField(DataError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DimMismatch(DataError):
    pass


class MissingFeature(DataError):
    pass


class UnknownId(DataError):
    pass


class InteractionClass(enum.IntEnum):
    HIGHLY_POSITIVE = 0
    LESS_POSITIVE = 1
    NEGATIVE = 2

    @property
    def short(self) -> str:
        return "HLN"[self.value]

    @classmethod
    def from_short(cls, code: str) -> "InteractionClass":
        try:
            return cls("HLN".index(code))
        except ValueError:
            raise DataError(f"unknown interaction class {code!r}") from None


H = InteractionClass.HIGHLY_POSITIVE
L = InteractionClass.LESS_POSITIVE
N = InteractionClass.NEGATIVE


@dataclass(frozen=True)
class Interaction:
    user_id: str
    video_id: str
    playing_time: float
    duration: float
    timestamp: int = 0

    def __post_init__(self):
        if not self.duration > 0:
            raise DataError(f"duration must be positive, got {self.duration}")
        if not self.playing_time >= 0:
            raise DataError(f"playing_time must be non-negative, got {self.playing_time}")


@dataclass(frozen=True, order=True)
class LabeledPair:
    user_index: int
    video_index: int
    cls: InteractionClass

    @property
    def y(self) -> int:
        return int(self.cls is H)


@dataclass
class IdMaps:
    """Opaque external ids to dense indices, assigned in first-appearance order."""

    users: dict[str, int] = field(default_factory=dict)
    videos: dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_interactions(cls, interactions: Iterable[Interaction]) -> "IdMaps":
        maps = cls()
        for it in interactions:
            maps.users.setdefault(it.user_id, len(maps.users))
            maps.videos.setdefault(it.video_id, len(maps.videos))
        return maps

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_videos(self) -> int:
        return len(self.videos)

    def user_ids(self) -> list[str]:
        return sorted(self.users, key=self.users.__getitem__)

    def video_ids(self) -> list[str]:
        return sorted(self.videos, key=self.videos.__getitem__)


@dataclass
class DatasetSplit:
    train: list[LabeledPair]
    validation: list[LabeledPair]
    test: list[LabeledPair]
    split_seed: int


@dataclass
class UserInteractionProfile:
    n_highly: int = 0
    n_less: int = 0
    n_negative: int = 0


def _as_text(stream) -> IO[str]:
    if isinstance(stream, (bytes, bytearray)):
        return io.StringIO(stream.decode("utf-8"))
    if isinstance(stream, str):
        return io.StringIO(stream)
    if isinstance(stream, io.TextIOBase):
        return stream
    return io.TextIOWrapper(stream, encoding="utf-8")


def _finite_float(text: str, line: int, name: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise InvalidField(line, f"{name} is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise InvalidField(line, f"{name} is not finite: {text!r}")
    return value


def parse_interactions(stream) -> list[Interaction]:
    """Parse an interactions CSV (bytes, str or file object).

    Line numbers in errors count the header as line 1.
    """
    reader = csv.reader(_as_text(stream))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != INTERACTION_HEADER:
        raise InvalidField(1, f"expected header {','.join(INTERACTION_HEADER)}")
    out = []
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise InvalidField(line, f"expected 5 fields, got {len(row)}")
        user_id, video_id = row[0].strip(), row[1].strip()
        if not user_id or not video_id:
            raise InvalidField(line, "empty id")
        playing = _finite_float(row[2], line, "playing_time")
        duration = _finite_float(row[3], line, "duration")
        if playing < 0:
            raise InvalidField(line, f"negative playing_time {playing}")
        if duration <= 0:
            raise InvalidField(line, f"non-positive duration {duration}")
        try:
            timestamp = int(row[4])
        except ValueError:
            raise InvalidField(line, f"timestamp is not an integer: {row[4]!r}") from None
        out.append(Interaction(user_id, video_id, playing, duration, timestamp))
    return out


def classify(interaction: Interaction, threshold: float = DEFAULT_THRESHOLD) -> InteractionClass:
    # full view is checked first so videos shorter than the threshold can be positive
    if interaction.playing_time >= interaction.duration:
        return H
    if interaction.playing_time <= threshold:
        return N
    return L


def deduplicate_and_label(
    interactions: Iterable[Interaction],
    id_maps: IdMaps,
    threshold: float = DEFAULT_THRESHOLD,
) -> list[LabeledPair]:
    """One labeled pair per distinct (user, video), sorted by (user, video).

    Any pair seen more than once is highly positive, whatever its events were.
    """
    events: dict[tuple[int, int], list[InteractionClass]] = defaultdict(list)
    for it in interactions:
        try:
            key = (id_maps.users[it.user_id], id_maps.videos[it.video_id])
        except KeyError as exc:
            raise UnknownId(f"id {exc.args[0]!r} missing from id maps") from None
        events[key].append(classify(it, threshold))
    pairs = [
        LabeledPair(u, v, H if len(classes) > 1 else classes[0])
        for (u, v), classes in events.items()
    ]
    pairs.sort()
    return pairs


def user_profiles(pairs: Iterable[LabeledPair]) -> dict[int, UserInteractionProfile]:
    profiles: dict[int, UserInteractionProfile] = defaultdict(UserInteractionProfile)
    for p in pairs:
        prof = profiles[p.user_index]
        if p.cls is H:
            prof.n_highly += 1
        elif p.cls is L:
            prof.n_less += 1
        else:
            prof.n_negative += 1
    return dict(profiles)


def split_sizes(n: int, ratios=(0.6, 0.2, 0.2)) -> tuple[int, int, int]:
    """Floor the held-out shares; the remainder trains (a single pair is train-only)."""
    n_val = math.floor(ratios[1] * n + 1e-9)
    n_test = math.floor(ratios[2] * n + 1e-9)
    return n - n_val - n_test, n_val, n_test


def split_per_user(pairs: list[LabeledPair], ratios=(0.6, 0.2, 0.2), seed: int = 0) -> DatasetSplit:
    """Shuffle each user's pairs with a per-user stream, then slice by floor sizes."""
    by_user: dict[int, list[LabeledPair]] = defaultdict(list)
    for p in pairs:
        by_user[p.user_index].append(p)
    train, val, test = [], [], []
    for u in sorted(by_user):
        items = sorted(by_user[u])
        rng = np.random.default_rng([seed, u])
        order = rng.permutation(len(items))
        shuffled = [items[i] for i in order]
        n_train, n_val, _ = split_sizes(len(items), ratios)
        # ratios[0] is implied by the other two
        train.extend(shuffled[:n_train])
        val.extend(shuffled[n_train:n_train + n_val])
        test.extend(shuffled[n_train + n_val:])
    return DatasetSplit(train, val, test, seed)


def load_features(stream, id_maps: IdMaps, d: int | None = None) -> np.ndarray:
    """Read `video_id,f0..f{d-1}` rows into a |V| x d matrix in dense video order.

    Rows for videos that do not appear in the interactions are ignored.
    """
    reader = csv.reader(_as_text(stream))
    rows: dict[int, np.ndarray] = {}
    for line, row in enumerate(reader, start=1):
        if not row:
            continue
        if line == 1 and row[0].strip() == "video_id":
            continue
        values = row[1:]
        if d is None:
            d = len(values)
        if len(values) != d:
            raise DimMismatch(f"line {line}: expected {d} feature values, got {len(values)}")
        idx = id_maps.videos.get(row[0].strip())
        if idx is None:
            continue
        rows[idx] = np.array([_finite_float(v, line, "feature") for v in values])
    missing = [vid for vid, i in id_maps.videos.items() if i not in rows]
    if missing:
        raise MissingFeature(f"{len(missing)} videos lack features, e.g. {missing[0]!r}")
    if d is None:
        d = 0
    table = np.zeros((id_maps.n_videos, d))
    for i, vec in rows.items():
        table[i] = vec
    return table


def class_histogram(pairs: Iterable[LabeledPair]) -> dict[str, int]:
    counts = Counter(p.cls.short for p in pairs)
    return {c: counts.get(c, 0) for c in "HLN"}
