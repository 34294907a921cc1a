"""Multinomial VAE over a user's whole history.

The encoder reads the multi-hot bag of consumed items, the decoder emits a
softmax over the catalog, and the loss is KL to the standard normal prior
minus the multinomial reconstruction log-likelihood. Prediction is
noise-free: z is the posterior mean.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from vaerec import autodiff as ad
from vaerec.autodiff import ParameterStore, Tensor
from vaerec.models.components import (
    DenseStack,
    GaussianHead,
    GaussianParams,
    kl_to_standard_normal,
    rank_items,
    reparameterize,
)
from vaerec.models.config import ModelConfig


class MultinomialVAE:
    kind = "mvae"

    def __init__(self, n_items: int, config: ModelConfig, rng: np.random.Generator):
        self.n_items = n_items
        self.config = config
        self.store = ParameterStore()
        enc_widths = (n_items,) + config.encoder_widths
        self.encoder_stack = DenseStack(self.store, "encoder", enc_widths, rng)
        self.head = GaussianHead(
            self.store, "encoder.head", config.encoder_widths[-1], config.latent_dim, rng
        )
        dec_widths = (config.latent_dim,) + config.decoder_widths
        self.decoder_stack = DenseStack(self.store, "decoder", dec_widths, rng)
        self.output = DenseStack(
            self.store, "decoder.out", (config.decoder_widths[-1], n_items), rng,
            activate_last=False,
        )

    def bag_vector(self, items: Sequence[int]) -> np.ndarray:
        bag = np.zeros(self.n_items)
        for i in items:
            if not 0 <= i < self.n_items:
                raise IndexError(f"item id {i} out of range [0, {self.n_items})")
            bag[i] = 1.0
        return bag

    def encode(self, bags: np.ndarray) -> GaussianParams:
        return self.head(self.encoder_stack(Tensor(np.atleast_2d(bags))))

    def decode(self, z: Tensor) -> Tensor:
        return ad.log_softmax(self.output(self.decoder_stack(z)))

    def loss(self, bags: np.ndarray, noise: np.ndarray, beta: float) -> Tensor:
        """Mean over the batch of beta * KL - reconstruction, single noise
        sample per user."""
        bags = np.atleast_2d(bags)
        g = self.encode(bags)
        z = reparameterize(g, noise)
        log_pi = self.decode(z)
        recon = ad.sum_all(ad.mul(Tensor(bags), log_pi))
        kl = kl_to_standard_normal(g)
        return ad.scale(ad.sub(ad.scale(kl, beta), recon), 1.0 / bags.shape[0])

    def scores(self, fold_in: Sequence[int]) -> np.ndarray:
        """Catalog log-probabilities from the noise-free latent."""
        g = self.encode(self.bag_vector(fold_in))
        log_pi = self.decode(g.mu)
        return log_pi.data[0]

    def rank(self, fold_in: Sequence[int], exclude: set[int] | frozenset[int]) -> np.ndarray:
        return rank_items(self.scores(fold_in), exclude)
