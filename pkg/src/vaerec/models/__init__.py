from vaerec.models.config import ModelConfig
from vaerec.models.mvae import MultinomialVAE
from vaerec.models.rvae import PairwiseRankingVAE
from vaerec.models.svae import SequentialVAE, next_k_targets

MODEL_KINDS = ("mvae", "rvae", "svae")


def build_model(kind: str, n_items: int, config: ModelConfig, n_users: int = 0):
    """Construct an initialized model of the given kind."""
    import numpy as np

    rng = np.random.default_rng(config.seed)
    if kind == "mvae":
        return MultinomialVAE(n_items, config, rng)
    if kind == "rvae":
        return PairwiseRankingVAE(n_items, n_users, config, rng)
    if kind == "svae":
        return SequentialVAE(n_items, config, rng)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
