"""Implicit-feedback dataset pipeline.

Turns explicit rating logs into time-sorted user sequences, applies the
rating threshold and minimum-history filters, splits users into
train/validation/test, and cuts each held-out history into a temporal
fold-in / fold-out pair. Every step is a pure function of (input, config,
seed), so two runs produce byte-identical split directories.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class ParseError(ValueError):
    """A malformed input row; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class InteractionRecord:
    user_id: str
    item_id: str
    rating: float
    timestamp: int


@dataclass(frozen=True)
class ImplicitEvent:
    """A kept interaction after binarization; the rating is dropped."""

    user_id: str
    item_id: str
    timestamp: int


@dataclass(frozen=True)
class UserSequence:
    """One user's consumed items, ascending by timestamp."""

    user_index: int
    items: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class HeldoutUser:
    """A validation/test user cut at the temporal fold boundary.

    ``fold_in + fold_out`` concatenated reproduces the full time-sorted
    history; metrics treat fold_out as the relevant set.
    """

    user_index: int
    fold_in: tuple[int, ...]
    fold_out: tuple[int, ...]

    @property
    def fold_out_set(self) -> frozenset[int]:
        return frozenset(self.fold_out)


class Vocabulary:
    """Bijection between raw item ids and dense indices."""

    def __init__(self, raw_ids: Sequence[str]):
        self._raw = list(raw_ids)
        self._index = {raw: i for i, raw in enumerate(self._raw)}
        if len(self._index) != len(self._raw):
            raise ValueError("duplicate raw ids in vocabulary")

    def __len__(self) -> int:
        return len(self._raw)

    def to_index(self, raw_id: str) -> int:
        return self._index[raw_id]

    def to_raw(self, index: int) -> str:
        return self._raw[index]

    def raw_ids(self) -> list[str]:
        return list(self._raw)

    def digest(self) -> str:
        h = hashlib.sha256()
        for i, raw in enumerate(self._raw):
            h.update(f"{raw}\t{i}\n".encode())
        return h.hexdigest()


@dataclass
class DatasetSplit:
    train: list[UserSequence]
    validation: list[HeldoutUser]
    test: list[HeldoutUser]
    vocabulary: Vocabulary
    fold_ratio: float = 0.8

    @property
    def n_items(self) -> int:
        return len(self.vocabulary)


# ---------------------------------------------------------------------------
# pipeline stages


def ingest(path: str | os.PathLike, delimiter: str = ",") -> list[InteractionRecord]:
    """Read a delimiter-separated (user, item, rating, timestamp) log.

    Malformed rows raise ParseError with the offending line number.
    """
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(delimiter)
            if len(parts) != 4:
                raise ParseError(lineno, f"expected 4 fields, got {len(parts)}")
            user, item, rating_s, ts_s = (p.strip() for p in parts)
            try:
                rating = float(rating_s)
            except ValueError:
                raise ParseError(lineno, f"bad rating {rating_s!r}") from None
            try:
                timestamp = int(ts_s)
            except ValueError:
                raise ParseError(lineno, f"bad timestamp {ts_s!r}") from None
            if timestamp < 0:
                raise ParseError(lineno, f"negative timestamp {timestamp}")
            records.append(InteractionRecord(user, item, rating, timestamp))
    return records


def binarize(records: Iterable[InteractionRecord], threshold: float = 3.0) -> list[ImplicitEvent]:
    """Keep interactions rated strictly above ``threshold``."""
    return [
        ImplicitEvent(r.user_id, r.item_id, r.timestamp)
        for r in records
        if r.rating > threshold
    ]


def build_sequences(events: Iterable[ImplicitEvent]) -> tuple[list[UserSequence], Vocabulary]:
    """Group events per user, time-sorted, and assign dense indices.

    Ordering is total and deterministic: events sort by (user, timestamp,
    raw item id); ties on timestamp break by the raw id lexicographically.
    Repeat (user, item) interactions keep the earliest occurrence only.
    User and item indices follow first appearance in that ordering.
    """
    ordered = sorted(events, key=lambda e: (e.user_id, e.timestamp, e.item_id))
    item_ids: list[str] = []
    item_index: dict[str, int] = {}
    sequences: list[UserSequence] = []
    current_user: str | None = None
    current_items: list[int] = []
    seen: set[str] = set()

    def flush() -> None:
        if current_user is not None:
            sequences.append(UserSequence(len(sequences), tuple(current_items)))

    for e in ordered:
        if e.user_id != current_user:
            flush()
            current_user = e.user_id
            current_items = []
            seen = set()
        if e.item_id in seen:
            continue
        seen.add(e.item_id)
        if e.item_id not in item_index:
            item_index[e.item_id] = len(item_ids)
            item_ids.append(e.item_id)
        current_items.append(item_index[e.item_id])
    flush()
    return sequences, Vocabulary(item_ids)


def filter_min_history(sequences: Iterable[UserSequence], min_items: int = 5) -> list[UserSequence]:
    """Drop users with fewer than ``min_items`` interactions."""
    return [s for s in sequences if len(s) >= min_items]


def split_users(
    sequences: Sequence[UserSequence],
    fractions: tuple[float, float, float],
    seed: int,
) -> tuple[list[UserSequence], list[UserSequence], list[UserSequence]]:
    """Deterministic seeded shuffle, then partition users by fraction."""
    f_train, f_val, f_test = fractions
    if min(fractions) <= 0:
        raise ValueError(f"fractions must be positive, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(sequences))
    n = len(sequences)
    # the 1e-9 nudge keeps exact fractions exact under float rounding
    b1 = int(math.floor(n * f_train + 1e-9))
    b2 = int(math.floor(n * (f_train + f_val) + 1e-9))
    parts = (order[:b1], order[b1:b2], order[b2:])
    out = []
    for idxs in parts:
        chosen = sorted((sequences[i] for i in idxs), key=lambda s: s.user_index)
        out.append(chosen)
    return out[0], out[1], out[2]


def fold_split(items: Sequence[int], ratio: float = 0.8) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Cut a history into temporal fold-in / fold-out parts.

    The cut is floor(ratio * L), clamped so both sides stay nonempty.
    """
    n = len(items)
    if n < 2:
        raise ValueError(f"fold_split needs at least 2 items, got {n}")
    cut = int(math.floor(ratio * n + 1e-9))
    cut = min(max(cut, 1), n - 1)
    return tuple(items[:cut]), tuple(items[cut:])


def make_heldout(seq: UserSequence, ratio: float = 0.8) -> HeldoutUser:
    fold_in, fold_out = fold_split(seq.items, ratio)
    return HeldoutUser(seq.user_index, fold_in, fold_out)


def default_strata_edges(max_length: int) -> list[int]:
    """Power-of-two history-length buckets: ..8, ..16, ..32, and so on."""
    edges = []
    e = 8
    while e < max_length:
        edges.append(e)
        e *= 2
    return edges


def _allocate_inverse(sizes: list[int], target: int) -> list[int]:
    """Integer allocation proportional to 1/size, capped, overflow redistributed."""
    alloc = [0] * len(sizes)
    active = [i for i, s in enumerate(sizes) if s > 0]
    remaining = target
    while remaining > 0 and active:
        weights = {i: 1.0 / sizes[i] for i in active}
        total_w = sum(weights.values())
        quotas = {i: remaining * weights[i] / total_w for i in active}
        base = {i: int(math.floor(quotas[i])) for i in active}
        leftover = remaining - sum(base.values())
        by_frac = sorted(active, key=lambda i: (-(quotas[i] - base[i]), i))
        for i in by_frac[:leftover]:
            base[i] += 1
        next_active = []
        for i in active:
            capacity = sizes[i] - alloc[i]
            take = min(base[i], capacity)
            alloc[i] += take
            remaining -= take
            if alloc[i] < sizes[i]:
                next_active.append(i)
        active = next_active
    return alloc


def stratified_subsample(
    sequences: Sequence[UserSequence],
    target: int,
    seed: int,
    strata_edges: Sequence[int] | None = None,
) -> list[UserSequence]:
    """Sample users per history-length stratum, inversely to stratum size.

    Small strata (long histories) are kept nearly whole while large strata
    are thinned. Sampling is without replacement and seeded.
    """
    if target > len(sequences):
        raise ValueError(f"target {target} exceeds population {len(sequences)}")
    if strata_edges is None:
        max_len = max((len(s) for s in sequences), default=0)
        strata_edges = default_strata_edges(max_len)
    edges = sorted(strata_edges)
    buckets: list[list[UserSequence]] = [[] for _ in range(len(edges) + 1)]
    for seq in sorted(sequences, key=lambda s: s.user_index):
        slot = sum(1 for e in edges if len(seq) > e)
        buckets[slot].append(seq)
    sizes = [len(b) for b in buckets]
    alloc = _allocate_inverse(sizes, target)
    rng = np.random.default_rng(seed)
    chosen: list[UserSequence] = []
    for bucket, n_take in zip(buckets, alloc):
        if not bucket:
            continue
        picks = rng.permutation(len(bucket))[:n_take]
        chosen.extend(bucket[i] for i in sorted(picks))
    return sorted(chosen, key=lambda s: s.user_index)


# ---------------------------------------------------------------------------
# on-disk split format


SPLIT_FILES = ("train.tsv", "validation.tsv", "test.tsv")


def _sequence_lines(seqs: Iterable[tuple[int, Sequence[int]]]) -> str:
    lines = [
        f"{user_index}\t{','.join(str(i) for i in items)}" for user_index, items in seqs
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def _write_atomic(path: str, content: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(content)
    os.replace(tmp, path)


def split_counts(split: DatasetSplit) -> dict:
    train_items = sum(len(s) for s in split.train)
    held = [(u.fold_in, u.fold_out) for u in split.validation + split.test]
    held_items = sum(len(a) + len(b) for a, b in held)
    n_users = len(split.train) + len(split.validation) + len(split.test)
    interactions = train_items + held_items
    return {
        "users": n_users,
        "items": split.n_items,
        "interactions": interactions,
        "average_length": round(interactions / n_users, 4) if n_users else 0.0,
        "train_users": len(split.train),
        "validation_users": len(split.validation),
        "test_users": len(split.test),
    }


def save_split(split: DatasetSplit, out_dir: str | os.PathLike, config: dict, seed: int,
               source_digest: str | None = None) -> None:
    """Write the split directory: sequences per split, vocabulary, manifest."""
    out = str(out_dir)
    os.makedirs(out, exist_ok=True)
    _write_atomic(
        os.path.join(out, "train.tsv"),
        _sequence_lines((s.user_index, s.items) for s in split.train),
    )
    for name, users in (("validation.tsv", split.validation), ("test.tsv", split.test)):
        _write_atomic(
            os.path.join(out, name),
            _sequence_lines((u.user_index, u.fold_in + u.fold_out) for u in users),
        )
    vocab_lines = "".join(
        f"{raw}\t{i}\n" for i, raw in enumerate(split.vocabulary.raw_ids())
    )
    _write_atomic(os.path.join(out, "vocabulary.tsv"), vocab_lines)
    manifest = {
        "format": "vaerec-split-v1",
        "seed": seed,
        "config": config,
        "fold_ratio": split.fold_ratio,
        "counts": split_counts(split),
        "vocabulary_digest": split.vocabulary.digest(),
        "source_digest": source_digest,
    }
    _write_atomic(
        os.path.join(out, "manifest.json"),
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )


def _read_sequences(path: str) -> list[tuple[int, tuple[int, ...]]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            user_s, items_s = line.split("\t")
            items = tuple(int(x) for x in items_s.split(",")) if items_s else ()
            out.append((int(user_s), items))
    return out


def load_split(split_dir: str | os.PathLike) -> tuple[DatasetSplit, dict]:
    """Read a split directory back; fold boundaries come from the manifest."""
    d = str(split_dir)
    with open(os.path.join(d, "manifest.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    raw_ids: list[str] = []
    with open(os.path.join(d, "vocabulary.tsv"), "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            raw, idx = line.split("\t")
            assert int(idx) == len(raw_ids), "vocabulary file out of order"
            raw_ids.append(raw)
    vocab = Vocabulary(raw_ids)
    ratio = manifest["fold_ratio"]
    train = [UserSequence(u, items) for u, items in _read_sequences(os.path.join(d, "train.tsv"))]
    heldout = {}
    for name in ("validation", "test"):
        heldout[name] = [
            HeldoutUser(u, *fold_split(items, ratio))
            for u, items in _read_sequences(os.path.join(d, f"{name}.tsv"))
        ]
    split = DatasetSplit(train, heldout["validation"], heldout["test"], vocab, ratio)
    return split, manifest


def file_digest(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class PipelineConfig:
    """Knobs for ``run_pipeline``, defaults matching the evaluation protocol."""

    delimiter: str = ","
    binarize_threshold: float = 3.0
    min_history: int = 5
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    fold_ratio: float = 0.8
    subsample_users: int | None = None
    strata_edges: tuple[int, ...] | None = None
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "delimiter": self.delimiter,
            "binarize_threshold": self.binarize_threshold,
            "min_history": self.min_history,
            "fractions": list(self.fractions),
            "fold_ratio": self.fold_ratio,
            "subsample_users": self.subsample_users,
            "strata_edges": list(self.strata_edges) if self.strata_edges else None,
            "seed": self.seed,
        }


def run_pipeline(ratings_path: str | os.PathLike, cfg: PipelineConfig) -> DatasetSplit:
    """ingest -> binarize -> sequences -> filter -> subsample -> split -> fold."""
    records = ingest(ratings_path, cfg.delimiter)
    events = binarize(records, cfg.binarize_threshold)
    if not events:
        raise ValueError("no interactions after binarization")
    sequences, vocab = build_sequences(events)
    sequences = filter_min_history(sequences, cfg.min_history)
    if cfg.subsample_users is not None:
        sequences = stratified_subsample(
            sequences, cfg.subsample_users, cfg.seed, cfg.strata_edges
        )
    train, val, test = split_users(sequences, cfg.fractions, cfg.seed)
    validation = [make_heldout(s, cfg.fold_ratio) for s in val]
    testing = [make_heldout(s, cfg.fold_ratio) for s in test]
    return DatasetSplit(train, validation, testing, vocab, cfg.fold_ratio)
