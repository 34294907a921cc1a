"""Sequential VAE: a recurrent latent-variable model over item sequences.

At step t the GRU has consumed items 1..t-1 (step 1 consumes a learned
start-of-sequence embedding), a Gaussian head on the hidden state proposes
the step-t latent, and the decoder turns the latent into a softmax over the
catalog. The per-step target is either the multiset of the next k items or
a mixture over the k most recent latent states.

The recurrence is strictly causal: everything emitted at step t is
invariant to items at positions after t.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from vaerec import autodiff as ad
from vaerec.autodiff import ParameterStore, Tensor
from vaerec.models.components import (
    DenseStack,
    GaussianHead,
    GaussianParams,
    add_embedding,
    add_gru,
    counts_matrix,
    kl_to_standard_normal,
    rank_items,
    reparameterize,
)
from vaerec.models.config import ModelConfig


def next_k_targets(items: Sequence[int], t: int, k: int) -> tuple[int, ...]:
    """Items at positions t .. t+k-1 (1-based), truncated at the end."""
    if not 1 <= t <= len(items):
        raise ValueError(f"step {t} out of range for length {len(items)}")
    return tuple(items[t - 1 : t - 1 + k])


@dataclass
class StepOutputs:
    """Per-step posterior, sample, and catalog log-probabilities, stacked
    over the T steps of one sequence."""

    gaussian: GaussianParams
    z: Tensor
    log_pi: Tensor


class SequentialVAE:
    kind = "svae"

    def __init__(self, n_items: int, config: ModelConfig, rng: np.random.Generator):
        self.n_items = n_items
        self.config = config
        self.store = ParameterStore()
        emb = config.item_embedding_dim
        hid = config.gru_hidden
        self.item_embedding = add_embedding(self.store, "item_embedding", n_items, emb, rng)
        # step 1 has no previous item; it consumes this learned row instead
        self.start_embedding = add_embedding(self.store, "start_embedding", 1, emb, rng)
        self.gru = add_gru(self.store, "gru", emb, hid, rng)
        enc_widths = (hid,) + config.encoder_widths
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

    def _input_rows(self, consumed: Sequence[int]) -> Tensor:
        """Embeddings of the start token followed by ``consumed`` items."""
        if consumed:
            looked = ad.embedding_lookup(self.item_embedding, consumed)
            return ad.concat_rows([self.start_embedding, looked])
        return ad.slice_rows(self.start_embedding, 0, 1)

    def _hidden_states(self, consumed: Sequence[int]) -> list[Tensor]:
        """GRU states h_1..h_{len(consumed)+1}; h_t saw consumed[: t-1]."""
        inputs = self._input_rows(consumed)
        h = Tensor(np.zeros((1, self.config.gru_hidden)))
        states = []
        for t in range(inputs.shape[0]):
            h = ad.gru_cell(ad.slice_rows(inputs, t, t + 1), h, self.gru)
            states.append(h)
        return states

    def _encode_states(self, states: Tensor) -> GaussianParams:
        return self.head(self.encoder_stack(states))

    def decode(self, z: Tensor) -> Tensor:
        return ad.log_softmax(self.output(self.decoder_stack(z)))

    def forward(self, items: Sequence[int], noise: np.ndarray) -> StepOutputs:
        """One pass over a length-T sequence, yielding T per-step triples."""
        if len(items) == 0:
            raise ValueError("sequence must not be empty")
        states = ad.concat_rows(self._hidden_states(list(items[:-1])))
        g = self._encode_states(states)
        z = reparameterize(g, noise)
        return StepOutputs(gaussian=g, z=z, log_pi=self.decode(z))

    def loss(self, items: Sequence[int], noise: np.ndarray, beta: float,
             k: int | None = None, mode: str | None = None) -> Tensor:
        """Per-sequence loss, normalized by sequence length.

        next-k-multiset: each step's reconstruction term is the multinomial
        log-likelihood of the next k items. mixture: each observed item is
        scored against the uniform mixture of the softmaxes from its k most
        recent latent states.
        """
        k = self.config.k_horizon if k is None else k
        mode = self.config.likelihood_mode if mode is None else mode
        out = self.forward(items, noise)
        T = len(items)
        if mode == "next-k-multiset":
            targets = [next_k_targets(items, t, k) for t in range(1, T + 1)]
            counts = counts_matrix(targets, self.n_items)
            recon = ad.sum_all(ad.mul(Tensor(counts), out.log_pi))
        elif mode == "mixture":
            terms = None
            for t in range(1, T + 1):
                lo = max(1, t - k + 1)
                rows = list(range(lo - 1, t))
                cols = [items[t - 1]] * len(rows)
                window = ad.gather2d(out.log_pi, rows, cols)
                term = ad.add_const(ad.logsumexp_all(window), -np.log(len(rows)))
                terms = term if terms is None else ad.add(terms, term)
            recon = terms
        else:
            raise ValueError(f"unknown likelihood mode {mode!r}")
        kl = kl_to_standard_normal(out.gaussian)
        return ad.scale(ad.sub(ad.scale(kl, beta), recon), 1.0 / T)

    def scores(self, fold_in: Sequence[int]) -> np.ndarray:
        """Noise-free catalog log-probabilities for the step after the
        fold-in: the recurrence consumes every fold-in item, z is the
        posterior mean at that final state."""
        if len(fold_in) == 0:
            raise ValueError("fold-in must not be empty")
        last_state = self._hidden_states(list(fold_in))[-1]
        g = self._encode_states(last_state)
        log_pi = self.decode(g.mu)
        return log_pi.data[0]

    def rank(self, fold_in: Sequence[int], exclude: set[int] | frozenset[int]) -> np.ndarray:
        return rank_items(self.scores(fold_in), exclude)
