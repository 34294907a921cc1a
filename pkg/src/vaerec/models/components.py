"""Building blocks shared by the three model families.

Initialization convention: dense weights are uniform(-a, a) with
a = sqrt(6 / (fan_in + fan_out)), biases start at zero, and embedding tables
are normal(0, 0.01). Hidden layers use tanh; the Gaussian heads and the
catalog logits are left linear.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from vaerec import autodiff as ad
from vaerec.autodiff import GRUCellParams, ParameterStore, Tensor


@dataclass
class GaussianParams:
    """Diagonal Gaussian with the scale kept in the log domain."""

    mu: Tensor
    log_sigma: Tensor


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def add_dense(store: ParameterStore, name: str, fan_in: int, fan_out: int,
              rng: np.random.Generator) -> tuple[Tensor, Tensor]:
    w = store.add(f"{name}.w", glorot_uniform(rng, fan_in, fan_out))
    b = store.add(f"{name}.b", np.zeros(fan_out))
    return w, b


def add_embedding(store: ParameterStore, name: str, rows: int, dim: int,
                  rng: np.random.Generator) -> Tensor:
    return store.add(name, rng.normal(0.0, 0.01, size=(rows, dim)))


def add_gru(store: ParameterStore, prefix: str, in_dim: int, hidden: int,
            rng: np.random.Generator) -> GRUCellParams:
    def dense(gate: str, fan_in: int) -> Tensor:
        return store.add(f"{prefix}.{gate}", glorot_uniform(rng, fan_in, hidden))

    def bias(gate: str) -> Tensor:
        return store.add(f"{prefix}.{gate}", np.zeros(hidden))

    return GRUCellParams(
        w_reset=dense("w_reset", in_dim),
        u_reset=dense("u_reset", hidden),
        b_reset=bias("b_reset"),
        w_update=dense("w_update", in_dim),
        u_update=dense("u_update", hidden),
        b_update=bias("b_update"),
        w_cand=dense("w_cand", in_dim),
        u_cand=dense("u_cand", hidden),
        b_cand=bias("b_cand"),
    )


class DenseStack:
    """Dense layers with tanh between them; the last layer stays linear
    unless ``activate_last`` is set."""

    def __init__(self, store: ParameterStore, name: str, widths: Sequence[int],
                 rng: np.random.Generator, activate_last: bool = True):
        self.layers = [
            add_dense(store, f"{name}.{i}", widths[i], widths[i + 1], rng)
            for i in range(len(widths) - 1)
        ]
        self.activate_last = activate_last

    def __call__(self, x: Tensor) -> Tensor:
        for i, (w, b) in enumerate(self.layers):
            x = ad.linear(x, w, b)
            if self.activate_last or i < len(self.layers) - 1:
                x = ad.tanh(x)
        return x


class GaussianHead:
    """Two linear heads emitting mu and log sigma from a shared feature."""

    def __init__(self, store: ParameterStore, name: str, in_dim: int, latent_dim: int,
                 rng: np.random.Generator):
        self.mu = add_dense(store, f"{name}.mu", in_dim, latent_dim, rng)
        self.log_sigma = add_dense(store, f"{name}.log_sigma", in_dim, latent_dim, rng)

    def __call__(self, features: Tensor) -> GaussianParams:
        return GaussianParams(
            mu=ad.linear(features, *self.mu),
            log_sigma=ad.linear(features, *self.log_sigma),
        )


def reparameterize(g: GaussianParams, eps: np.ndarray) -> Tensor:
    """z = mu + exp(log_sigma) * eps, differentiable in mu and log_sigma."""
    noise = np.asarray(eps, dtype=np.float64)
    if noise.shape != g.mu.shape:
        raise ad.ShapeError(f"noise shape {noise.shape} vs mu shape {g.mu.shape}")
    return ad.add(g.mu, ad.mul(ad.exp(g.log_sigma), Tensor(noise)))


def kl_to_standard_normal(g: GaussianParams) -> Tensor:
    """Closed-form KL(N(mu, diag sigma^2) || N(0, I)), summed over the batch.

    Per coordinate: (sigma^2 - 1 - log sigma^2 + mu^2) / 2, which is zero
    exactly at (mu, sigma) = (0, 1) and positive everywhere else.
    """
    two_ls = ad.scale(g.log_sigma, 2.0)
    term = ad.add(
        ad.add_const(ad.exp(two_ls), -1.0),
        ad.add(ad.scale(g.log_sigma, -2.0), ad.mul(g.mu, g.mu)),
    )
    return ad.scale(ad.sum_all(term), 0.5)


def multinomial_log_likelihood(item_ids: Sequence[int], log_pi: Tensor) -> Tensor:
    """Sum of log probabilities over a multiset of item indices.

    ``log_pi`` is one log-probability row (shape [N] or [1, N]); repeated
    ids contribute with multiplicity.
    """
    n = log_pi.shape[-1]
    ids = np.asarray(item_ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        bad = ids[(ids < 0) | (ids >= n)][0]
        raise IndexError(f"item id {bad} out of range [0, {n})")
    counts = np.bincount(ids, minlength=n).astype(np.float64).reshape(log_pi.shape)
    return ad.sum_all(ad.mul(Tensor(counts), log_pi))


def counts_matrix(target_rows: Sequence[Sequence[int]], n_items: int) -> np.ndarray:
    """Row-wise multiset counts, one row per prediction step."""
    out = np.zeros((len(target_rows), n_items))
    for r, ids in enumerate(target_rows):
        for i in ids:
            if not 0 <= i < n_items:
                raise IndexError(f"item id {i} out of range [0, {n_items})")
            out[r, i] += 1.0
    return out


def rank_items(scores: np.ndarray, exclude: frozenset[int] | set[int]) -> np.ndarray:
    """Descending-score ranking over the catalog, stable on ties (so equal
    scores order by item index), with excluded items removed."""
    order = np.argsort(-scores, kind="stable")
    if not exclude:
        return order
    mask = np.ones(scores.shape[0], dtype=bool)
    mask[list(exclude)] = False
    return order[mask[order]]
