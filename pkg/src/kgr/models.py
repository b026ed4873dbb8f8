"""Embedding models: configuration, state, scoring, and score gradients.

Four models share one interface. Scores are oriented so that higher means
more plausible; the translation and rotation models return negated
distances. Storage is float64 throughout:

============  ==================  ==================
model         entity rows         relation rows
============  ==================  ==================
TransE        k                   k
DistMult      k                   k
RotatE        2k (re | im)        k phase angles
ComplEx       2k (re | im)        2k (re | im)
============  ==================  ==================
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "MODELS",
    "ModelConfig",
    "ModelState",
    "entity_columns",
    "relation_columns",
    "init_model",
    "score",
    "score_batch",
    "score_grads",
]

MODELS = ("TransE", "RotatE", "DistMult", "ComplEx")


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters for one embedding model.

    Parameters
    ----------
    model : {"TransE", "RotatE", "DistMult", "ComplEx"}
    dim : int
        Embedding dimension k.
    norm : {"L1", "L2"}
        Distance norm; TransE only.
    margin : float
        Margin gamma, used by both loss modes.
    learning_rate : float
    regularization : float
        L2 penalty weight on rows touched by a batch.
    loss : {"margin", "logsigmoid"}
        Training objective. Adversarial sampling requires "logsigmoid",
        where the negative weights are defined.
    negatives_per_positive : int
    adversarial_sampling : bool
        Weight negatives by a softmax of their scores instead of uniformly.
    adversarial_temperature : float
    batch_size : int
    max_epochs : int
        One epoch is one pass over all training triples.
    seed : int
    eval_every : int
        Epochs between validation passes.
    patience : int
        Validation passes without improvement before stopping early.
    """

    model: str = "TransE"
    dim: int = 100
    norm: str = "L1"
    margin: float = 1.0
    learning_rate: float = 0.01
    regularization: float = 0.0
    loss: str = "margin"
    negatives_per_positive: int = 5
    adversarial_sampling: bool = False
    adversarial_temperature: float = 1.0
    batch_size: int = 256
    max_epochs: int = 1000
    seed: int = 0
    eval_every: int = 50
    patience: int = 5

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}, expected one of {MODELS}")
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if self.norm not in ("L1", "L2"):
            raise ConfigError(f"norm must be 'L1' or 'L2', got {self.norm!r}")
        if self.margin <= 0:
            raise ConfigError(f"margin must be > 0, got {self.margin}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.regularization < 0:
            raise ConfigError(f"regularization must be >= 0, got {self.regularization}")
        if self.loss not in ("margin", "logsigmoid"):
            raise ConfigError(f"loss must be 'margin' or 'logsigmoid', got {self.loss!r}")
        if self.negatives_per_positive < 1:
            raise ConfigError(
                f"negatives_per_positive must be >= 1, got {self.negatives_per_positive}"
            )
        if self.adversarial_sampling and self.loss != "logsigmoid":
            raise ConfigError("adversarial_sampling requires loss='logsigmoid'")
        if self.adversarial_temperature <= 0:
            raise ConfigError(
                f"adversarial_temperature must be > 0, got {self.adversarial_temperature}"
            )
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")


def entity_columns(config):
    """Number of real columns per entity row."""
    return 2 * config.dim if config.model in ("RotatE", "ComplEx") else config.dim


def relation_columns(config):
    """Number of real columns per relation row."""
    if config.model == "ComplEx":
        return 2 * config.dim
    return config.dim  # RotatE stores k phases; others k reals


@dataclass
class ModelState:
    """Trainable parameters plus the vocabulary they index.

    ``entity_emb`` has one row per entity id, ``relation_emb`` one per
    relation id; column layouts are model-dependent (see module docstring).
    ``rng_state`` holds the training stream state for resumption; None
    before any training.
    """

    config: ModelConfig
    entity_ids: tuple
    relation_ids: tuple
    entity_emb: np.ndarray
    relation_emb: np.ndarray
    epoch: int = 0
    rng_state: dict | None = None

    def copy(self):
        return replace(
            self,
            entity_emb=self.entity_emb.copy(),
            relation_emb=self.relation_emb.copy(),
        )

    @property
    def n_entities(self):
        return len(self.entity_ids)

    @property
    def n_relations(self):
        return len(self.relation_ids)


def init_model(config, entity_count, relation_count, entity_ids=None, relation_ids=None):
    """Draw a fresh state: uniform [-6/sqrt(k), 6/sqrt(k)] entries.

    Rotation phases draw uniform over [-pi, pi) instead. The draw order is
    fixed (entities, then relations) and the stream is seeded from
    ``config.seed``, so equal configs produce bitwise-identical states.

    Vocabulary id tuples are attached when given; otherwise stringified
    indices stand in so the state stays serializable.
    """
    if entity_count < 1 or relation_count < 1:
        raise ConfigError(
            f"need at least one entity and one relation, "
            f"got {entity_count} and {relation_count}"
        )
    if entity_ids is None:
        entity_ids = tuple(str(i) for i in range(entity_count))
    else:
        entity_ids = tuple(entity_ids)
        if len(entity_ids) != entity_count:
            raise ConfigError("entity_ids length disagrees with entity_count")
    if relation_ids is None:
        relation_ids = tuple(str(i) for i in range(relation_count))
    else:
        relation_ids = tuple(relation_ids)
        if len(relation_ids) != relation_count:
            raise ConfigError("relation_ids length disagrees with relation_count")

    rng = np.random.default_rng([config.seed, 0])
    bound = 6.0 / math.sqrt(config.dim)
    entity = rng.uniform(-bound, bound, (entity_count, entity_columns(config)))
    if config.model == "RotatE":
        relation = rng.uniform(-math.pi, math.pi, (relation_count, config.dim))
    else:
        relation = rng.uniform(-bound, bound, (relation_count, relation_columns(config)))
    return ModelState(
        config=config,
        entity_ids=entity_ids,
        relation_ids=relation_ids,
        entity_emb=entity,
        relation_emb=relation,
    )


def _check_indices(idx, size, what):
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= size):
        raise DataError(f"{what} index out of range [0, {size})")
    return idx


def _gather(state, h, r, t):
    h = _check_indices(h, state.n_entities, "head")
    r = _check_indices(r, state.n_relations, "relation")
    t = _check_indices(t, state.n_entities, "tail")
    return state.entity_emb[h], state.relation_emb[r], state.entity_emb[t]


def score_batch(state, h, r, t):
    """Score plausibility for aligned index arrays; higher is better."""
    eh, er, et = _gather(state, h, r, t)
    k = state.config.dim
    model = state.config.model
    if model == "TransE":
        u = eh + er - et
        if state.config.norm == "L1":
            return -np.abs(u).sum(axis=-1)
        return -np.sqrt((u * u).sum(axis=-1))
    if model == "DistMult":
        return (eh * er * et).sum(axis=-1)
    if model == "RotatE":
        c, s = np.cos(er), np.sin(er)
        hr_re = eh[..., :k] * c - eh[..., k:] * s
        hr_im = eh[..., :k] * s + eh[..., k:] * c
        p = hr_re - et[..., :k]
        q = hr_im - et[..., k:]
        return -np.sqrt(p * p + q * q).sum(axis=-1)
    # ComplEx: Re(<h, r, conj(t)>)
    h_re, h_im = eh[..., :k], eh[..., k:]
    r_re, r_im = er[..., :k], er[..., k:]
    t_re, t_im = et[..., :k], et[..., k:]
    return (
        h_re * r_re * t_re
        + h_im * r_re * t_im
        + h_re * r_im * t_im
        - h_im * r_im * t_re
    ).sum(axis=-1)


def score(state, h, r, t):
    """Score a single triple of vocabulary indices."""
    return float(score_batch(state, np.array([h]), np.array([r]), np.array([t]))[0])


def _safe_div(num, den):
    # subgradient 0 where the norm vanishes
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def score_grads(state, h, r, t):
    """Scores plus per-triple gradients of the score.

    Returns ``(scores, gh, gr, gt)`` where ``gh``/``gt`` have entity column
    layout and ``gr`` relation column layout. Non-differentiable points
    (L1 kinks, zero rotation residuals) get subgradient 0.
    """
    eh, er, et = _gather(state, h, r, t)
    k = state.config.dim
    model = state.config.model
    if model == "TransE":
        u = eh + er - et
        if state.config.norm == "L1":
            s = -np.abs(u).sum(axis=-1)
            g = -np.sign(u)
        else:
            nrm = np.sqrt((u * u).sum(axis=-1))
            s = -nrm
            g = -_safe_div(u, nrm[..., None])
        return s, g, g.copy(), -g
    if model == "DistMult":
        s = (eh * er * et).sum(axis=-1)
        return s, er * et, eh * et, eh * er
    if model == "RotatE":
        c, sn = np.cos(er), np.sin(er)
        h_re, h_im = eh[..., :k], eh[..., k:]
        hr_re = h_re * c - h_im * sn
        hr_im = h_re * sn + h_im * c
        p = hr_re - et[..., :k]
        q = hr_im - et[..., k:]
        m = np.sqrt(p * p + q * q)
        s = -m.sum(axis=-1)
        gp = -_safe_div(p, m)
        gq = -_safe_div(q, m)
        gh = np.concatenate([gp * c + gq * sn, -gp * sn + gq * c], axis=-1)
        gt = np.concatenate([-gp, -gq], axis=-1)
        gr = gp * (-hr_im) + gq * hr_re
        return s, gh, gr, gt
    # ComplEx
    h_re, h_im = eh[..., :k], eh[..., k:]
    r_re, r_im = er[..., :k], er[..., k:]
    t_re, t_im = et[..., :k], et[..., k:]
    s = (
        h_re * r_re * t_re
        + h_im * r_re * t_im
        + h_re * r_im * t_im
        - h_im * r_im * t_re
    ).sum(axis=-1)
    gh = np.concatenate(
        [r_re * t_re + r_im * t_im, r_re * t_im - r_im * t_re], axis=-1
    )
    gr = np.concatenate(
        [h_re * t_re + h_im * t_im, h_re * t_im - h_im * t_re], axis=-1
    )
    gt = np.concatenate(
        [h_re * r_re - h_im * r_im, h_im * r_re + h_re * r_im], axis=-1
    )
    return s, gh, gr, gt
