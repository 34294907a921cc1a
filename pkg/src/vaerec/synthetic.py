"""Synthetic sequence datasets with known structure.

Used by the experiment scripts and the acceptance suite: a cyclic
successor dataset where the next item is fully determined by the last one,
and a burst dataset where each anchor item implies its next three items in
arbitrary order.
"""

from __future__ import annotations

import numpy as np

from vaerec.data import DatasetSplit, UserSequence, Vocabulary, make_heldout


def _assemble(
    walks: list[tuple[int, ...]],
    n_train: int,
    n_val: int,
    n_test: int,
    n_items: int,
    fold_ratio: float,
) -> DatasetSplit:
    seqs = [UserSequence(u, items) for u, items in enumerate(walks)]
    train = seqs[:n_train]
    val = [make_heldout(s, fold_ratio) for s in seqs[n_train : n_train + n_val]]
    test = [make_heldout(s, fold_ratio) for s in seqs[n_train + n_val :]]
    vocab = Vocabulary([str(i) for i in range(n_items)])
    return DatasetSplit(train, val, test, vocab, fold_ratio)


def cycle_split(
    n_items: int = 50,
    n_train: int = 500,
    n_val: int = 100,
    n_test: int = 100,
    length: int = 30,
    fold_ratio: float = 0.8,
    seed: int = 0,
) -> DatasetSplit:
    """Each user walks i -> i+1 (mod n_items) from a random start."""
    rng = np.random.default_rng(seed)
    walks = []
    for _ in range(n_train + n_val + n_test):
        start = int(rng.integers(n_items))
        walks.append(tuple((start + t) % n_items for t in range(length)))
    return _assemble(walks, n_train, n_val, n_test, n_items, fold_ratio)


def burst_split(
    n_items: int = 40,
    n_train: int = 300,
    n_val: int = 60,
    n_test: int = 60,
    blocks_per_user: int = 8,
    fold_ratio: float = 0.8,
    seed: int = 0,
) -> DatasetSplit:
    """Anchor items imply their next three items in arbitrary order.

    The catalog is tiled into disjoint 4-item blocks (anchor, anchor+1,
    anchor+2, anchor+3). A user walks blocks in cyclic order from a random
    starting block; within each block the anchor comes first and its three
    followers appear shuffled. So the set of upcoming items is predictable
    while the order inside each burst is not.
    """
    if n_items % 4 != 0:
        raise ValueError("n_items must be a multiple of 4")
    n_blocks = n_items // 4
    if blocks_per_user > n_blocks:
        raise ValueError("blocks_per_user exceeds available blocks")
    rng = np.random.default_rng(seed)
    walks = []
    for _ in range(n_train + n_val + n_test):
        first = int(rng.integers(n_blocks))
        items: list[int] = []
        for step in range(blocks_per_user):
            a = 4 * ((first + step) % n_blocks)
            followers = rng.permutation([a + 1, a + 2, a + 3])
            items.append(a)
            items.extend(int(f) for f in followers)
        walks.append(tuple(items))
    return _assemble(walks, n_train, n_val, n_test, n_items, fold_ratio)
