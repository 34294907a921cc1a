"""Epoch-driven training with validation-based model selection.

Training users are shuffled per epoch from the run seed; after every epoch
the model is scored by NDCG@100 on the validation fold users, and the
parameters of the best validation epoch are the ones returned. The whole
loop is a deterministic function of (split, config), so two runs with the
same seed produce bit-identical loss trajectories.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from vaerec.autodiff import Tape
from vaerec.data import DatasetSplit, UserSequence
from vaerec.evaluation import evaluate
from vaerec.models import build_model
from vaerec.models.config import ModelConfig


class TrainingError(RuntimeError):
    """Raised when a loss goes non-finite; reports epoch and batch."""


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_ndcg100: float
    seconds: float


def _beta_for_epoch(config: ModelConfig, epoch: int) -> float:
    if config.kl_anneal_epochs > 0:
        return config.kl_weight * min(1.0, epoch / config.kl_anneal_epochs)
    return config.kl_weight


def _check_finite(value: float, batch: int) -> None:
    if not np.isfinite(value):
        raise TrainingError(f"non-finite loss at batch {batch}")


def _svae_epoch(model, train: Sequence[UserSequence], rng, beta, config) -> float:
    """One pass over shuffled users, one full-length sequence per step."""
    order = rng.permutation(len(train))
    total = 0.0
    for batch_no, idx in enumerate(order):
        items = train[idx].items
        noise = rng.standard_normal((len(items), config.latent_dim))
        with Tape() as tape:
            loss = model.loss(items, noise, beta)
        value = loss.item()
        _check_finite(value, batch_no)
        tape.backward(loss, model.store)
        model.store.adam_step(config.learning_rate, weight_decay=config.weight_decay)
        total += value
    return total / max(len(order), 1)


def _mvae_epoch(model, train: Sequence[UserSequence], rng, beta, config) -> float:
    order = rng.permutation(len(train))
    bags = np.stack([model.bag_vector(train[i].items) for i in order])
    total = 0.0
    for batch_no, lo in enumerate(range(0, len(order), config.batch_size)):
        batch = bags[lo : lo + config.batch_size]
        noise = rng.standard_normal((batch.shape[0], config.latent_dim))
        with Tape() as tape:
            loss = model.loss(batch, noise, beta)
        value = loss.item()
        _check_finite(value, batch_no)
        tape.backward(loss, model.store)
        model.store.adam_step(config.learning_rate, weight_decay=config.weight_decay)
        total += value * batch.shape[0]
    return total / max(len(order), 1)


def _rvae_triples(train: Sequence[UserSequence], n_items: int, rng) -> np.ndarray:
    """(user_row, preferred, negative) triples: one uniformly sampled
    non-consumed item per positive per epoch."""
    triples = []
    for row, seq in enumerate(train):
        consumed = set(seq.items)
        for i in seq.items:
            j = int(rng.integers(n_items))
            while j in consumed:
                j = int(rng.integers(n_items))
            triples.append((row, i, j))
    out = np.asarray(triples, dtype=np.int64)
    return out[rng.permutation(len(out))]


def _rvae_epoch(model, train: Sequence[UserSequence], rng, beta, config) -> float:
    triples = _rvae_triples(train, model.n_items, rng)
    total = 0.0
    for batch_no, lo in enumerate(range(0, len(triples), config.batch_size)):
        batch = triples[lo : lo + config.batch_size]
        noise_i = rng.standard_normal((len(batch), config.latent_dim))
        noise_j = rng.standard_normal((len(batch), config.latent_dim))
        with Tape() as tape:
            loss = model.pair_loss(
                batch[:, 0], batch[:, 1], batch[:, 2], noise_i, noise_j, beta
            )
        value = loss.item()
        _check_finite(value, batch_no)
        tape.backward(loss, model.store)
        model.store.adam_step(config.learning_rate, weight_decay=config.weight_decay)
        total += value * len(batch)
    return total / max(len(triples), 1)


_EPOCH_FNS = {"svae": _svae_epoch, "mvae": _mvae_epoch, "rvae": _rvae_epoch}


def train(
    kind: str,
    split: DatasetSplit,
    config: ModelConfig,
    callback: Callable[[EpochStats], None] | None = None,
):
    """Train a model of ``kind`` on the split; returns (model, curve).

    The returned model carries the parameters of the epoch with the best
    validation NDCG@100 (earliest on ties). With epochs=0 the initial model
    comes back untouched and the curve is empty.
    """
    if not split.train:
        raise ValueError("empty training split")
    model = build_model(kind, split.n_items, config, n_users=len(split.train))
    epoch_fn = _EPOCH_FNS[kind]
    ss = np.random.SeedSequence(config.seed)
    rng = np.random.default_rng(ss.spawn(1)[0])
    curve: list[EpochStats] = []
    best_score = -np.inf
    best_params = None
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        beta = _beta_for_epoch(config, epoch)
        try:
            train_loss = epoch_fn(model, split.train, rng, beta, config)
        except TrainingError as err:
            raise TrainingError(f"{kind} training diverged at epoch {epoch}: {err}") from None
        report = evaluate(model.rank, split.validation, n_values=(100,))
        val_score = report.metrics["NDCG@100"]
        stats = EpochStats(
            epoch=epoch,
            train_loss=train_loss,
            val_ndcg100=val_score,
            seconds=time.perf_counter() - started,
        )
        curve.append(stats)
        if callback is not None:
            callback(stats)
        if val_score > best_score:
            best_score = val_score
            best_params = model.store.snapshot()
    if best_params is not None:
        model.store.restore(best_params)
    return model, curve
