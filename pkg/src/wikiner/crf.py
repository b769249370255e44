"""Linear-chain CRF: scoring, partition, Viterbi, gradients, training.

All arithmetic is in log space (log-sum-exp); no probability-space
forward pass exists.  The model serves two roles: a standalone tagger
over sparse one-hot features, and the inference head of the neural
tagger, which feeds it a dense emission matrix.

A path y_1..y_n over emissions E scores

    start[y_1] + sum_t E[t, y_t] + sum_t T[y_{t-1}, y_t] + stop[y_n]

and P(y|E) = exp(score(y)) / Z with Z the sum over all |tags|^n paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import storage

_MODEL_MAGIC = b"WNCRFMDL"
_MODEL_VERSION = 1

# Finite stand-in for -inf so masked models keep differentiable scores.
ILLEGAL_SCORE = -1e9


def _logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    out = m.squeeze(axis) + np.log(np.sum(np.exp(a - m), axis=axis))
    return out


@dataclass
class CrfModel:
    """Transition structure plus (optionally) sparse feature weights.

    ``feature_weights`` has shape (n_features, n_tags) and is only used in
    standalone mode, where emissions are sums of active feature rows.
    """

    tags: tuple[str, ...]
    transitions: np.ndarray = field(default=None)  # (K, K): T[prev, next]
    start: np.ndarray = field(default=None)
    stop: np.ndarray = field(default=None)
    feature_names: tuple[str, ...] = ()
    feature_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        k = len(self.tags)
        if k == 0:
            raise ValueError("tag set must be non-empty")
        if self.transitions is None:
            self.transitions = np.zeros((k, k))
        if self.start is None:
            self.start = np.zeros(k)
        if self.stop is None:
            self.stop = np.zeros(k)
        if self.feature_names and self.feature_weights is None:
            self.feature_weights = np.zeros((len(self.feature_names), k))
        for name, arr, shape in (("transitions", self.transitions, (k, k)),
                                 ("start", self.start, (k,)),
                                 ("stop", self.stop, (k,))):
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")

    @property
    def n_tags(self) -> int:
        return len(self.tags)

    def tag_index(self, tag: str) -> int:
        try:
            return self.tags.index(tag)
        except ValueError:
            raise KeyError(f"unknown tag {tag!r}") from None

    def emissions(self, feature_ids: Sequence[Sequence[int]]) -> np.ndarray:
        """Emission matrix for a sentence given active feature ids per token."""
        if self.feature_weights is None:
            raise ValueError("model has no feature weights (neural mode)")
        em = np.zeros((len(feature_ids), self.n_tags))
        for t, ids in enumerate(feature_ids):
            for f in ids:
                em[t] += self.feature_weights[f]
        return em

    def apply_bio_mask(self) -> None:
        """Forbid transitions that would produce ill-formed BIO sequences."""
        for mask, arr in ((bio_transition_mask(self.tags), self.transitions),
                          (bio_start_mask(self.tags), self.start)):
            arr[~mask] = ILLEGAL_SCORE

    def save(self, path: str | Path) -> None:
        payload = {
            "tags": list(self.tags),
            "feature_names": list(self.feature_names),
            "params": storage.params_to_json({
                "transitions": self.transitions,
                "start": self.start,
                "stop": self.stop,
                **({"feature_weights": self.feature_weights}
                   if self.feature_weights is not None else {}),
            }),
        }
        storage.save_container(path, _MODEL_MAGIC, _MODEL_VERSION, payload)

    @classmethod
    def load(cls, path: str | Path) -> "CrfModel":
        _, payload = storage.load_container(path, _MODEL_MAGIC, _MODEL_VERSION)
        params = storage.params_from_json(payload["params"])
        return cls(tags=tuple(payload["tags"]),
                   transitions=params["transitions"],
                   start=params["start"],
                   stop=params["stop"],
                   feature_names=tuple(payload["feature_names"]),
                   feature_weights=params.get("feature_weights"))


def bio_transition_mask(tags: Sequence[str]) -> np.ndarray:
    """Allowed[prev, next] for BIO well-formedness: I-x only after B-x/I-x."""
    k = len(tags)
    allowed = np.ones((k, k), dtype=bool)
    for j, nxt in enumerate(tags):
        if not nxt.startswith("I-"):
            continue
        label = nxt[2:]
        for i, prev in enumerate(tags):
            allowed[i, j] = prev in (f"B-{label}", f"I-{label}")
    return allowed


def bio_start_mask(tags: Sequence[str]) -> np.ndarray:
    return np.array([not t.startswith("I-") for t in tags], dtype=bool)


def _check_emissions(em: np.ndarray, model: CrfModel) -> np.ndarray:
    em = np.asarray(em, dtype=np.float64)
    if em.ndim != 2 or em.shape[0] < 1:
        raise ValueError("emissions must be a non-empty (n, n_tags) matrix")
    if em.shape[1] != model.n_tags:
        raise ValueError(f"emissions have {em.shape[1]} tags, model has {model.n_tags}")
    return em


def log_partition(em: np.ndarray, model: CrfModel) -> float:
    """log Z via the forward recursion, equal to the log-sum over all paths."""
    em = _check_emissions(em, model)
    alpha = model.start + em[0]
    for t in range(1, em.shape[0]):
        alpha = _logsumexp(alpha[:, None] + model.transitions, axis=0) + em[t]
    return float(_logsumexp(alpha + model.stop))


def path_score(em: np.ndarray, model: CrfModel, path: Sequence[int]) -> float:
    em = _check_emissions(em, model)
    score = model.start[path[0]] + em[0, path[0]]
    for t in range(1, len(path)):
        score += model.transitions[path[t - 1], path[t]] + em[t, path[t]]
    return float(score + model.stop[path[-1]])


def viterbi(em: np.ndarray, model: CrfModel) -> tuple[list[str], float]:
    """Best-scoring tag sequence; ties go to the lowest tag index."""
    em = _check_emissions(em, model)
    n, k = em.shape
    delta = model.start + em[0]
    back = np.zeros((n, k), dtype=np.intp)
    for t in range(1, n):
        cand = delta[:, None] + model.transitions  # (prev, next)
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(k)] + em[t]
    final = delta + model.stop
    best = int(np.argmax(final))
    path = [best]
    for t in range(n - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return [model.tags[i] for i in path], float(final[best])


def forward_backward(em: np.ndarray, model: CrfModel) -> tuple[np.ndarray, np.ndarray, float]:
    """Posterior tag marginals and pairwise transition marginals.

    Returns (unary (n, K), pairwise (n-1, K, K), logZ); pairwise[t] are the
    marginals of (y_t, y_{t+1}).
    """
    em = _check_emissions(em, model)
    n, k = em.shape
    alpha = np.zeros((n, k))
    alpha[0] = model.start + em[0]
    for t in range(1, n):
        alpha[t] = _logsumexp(alpha[t - 1][:, None] + model.transitions, axis=0) + em[t]
    beta = np.zeros((n, k))
    beta[-1] = model.stop
    for t in range(n - 2, -1, -1):
        beta[t] = _logsumexp(model.transitions + em[t + 1] + beta[t + 1], axis=1)
    log_z = float(_logsumexp(alpha[-1] + model.stop))
    unary = np.exp(alpha + beta - log_z)
    pairwise = np.zeros((max(n - 1, 0), k, k))
    for t in range(n - 1):
        joint = alpha[t][:, None] + model.transitions + em[t + 1] + beta[t + 1]
        pairwise[t] = np.exp(joint - log_z)
    return unary, pairwise, log_z


@dataclass
class CrfGradients:
    loss: float
    d_emissions: np.ndarray
    d_transitions: np.ndarray
    d_start: np.ndarray
    d_stop: np.ndarray


def nll_gradient(model: CrfModel, em: np.ndarray, gold: Sequence[str]) -> CrfGradients:
    """Negative log-likelihood of the gold path and its exact gradients.

    loss = logZ - score(gold) >= 0; gradients are expected counts under the
    model minus observed counts, from one forward-backward sweep.
    """
    em = _check_emissions(em, model)
    n, k = em.shape
    if len(gold) != n:
        raise ValueError(f"gold has {len(gold)} tags for {n} tokens")
    gold_ids = [model.tag_index(t) for t in gold]
    unary, pairwise, log_z = forward_backward(em, model)
    loss = log_z - path_score(em, model, gold_ids)

    d_em = unary.copy()
    d_trans = pairwise.sum(axis=0) if n > 1 else np.zeros((k, k))
    d_start = unary[0].copy()
    d_stop = unary[-1].copy()
    d_em[np.arange(n), gold_ids] -= 1.0
    for t in range(1, n):
        d_trans[gold_ids[t - 1], gold_ids[t]] -= 1.0
    d_start[gold_ids[0]] -= 1.0
    d_stop[gold_ids[-1]] -= 1.0
    return CrfGradients(float(loss), d_em, d_trans, d_start, d_stop)


@dataclass
class CrfTrainConfig:
    epochs: int = 50
    learning_rate: float = 0.1
    l2: float = 0.0
    seed: int = 0
    shuffle: bool = True
    bio_mask: bool = False


def train_crf(
    data: Sequence[tuple[Sequence[Sequence[int]], Sequence[str]]],
    tags: Sequence[str],
    feature_names: Sequence[str],
    config: CrfTrainConfig = CrfTrainConfig(),
) -> tuple[CrfModel, list[float]]:
    """Fit a standalone sparse-feature CRF with plain SGD on the mean NLL.

    ``data`` pairs per-token active-feature-id lists with gold tag
    sequences.  Deterministic under a fixed seed; returns the model and
    the per-epoch mean loss trajectory.
    """
    if not data:
        raise ValueError("training data must be non-empty")
    model = CrfModel(tags=tuple(tags), feature_names=tuple(feature_names))
    rng = np.random.default_rng(config.seed)
    trans_mask = bio_transition_mask(model.tags) if config.bio_mask else None
    start_mask = bio_start_mask(model.tags) if config.bio_mask else None
    losses: list[float] = []
    order = np.arange(len(data))
    for _epoch in range(config.epochs):
        if config.shuffle:
            rng.shuffle(order)
        total = 0.0
        for idx in order:
            feats, gold = data[idx]
            em = model.emissions(feats)
            grads = nll_gradient(model, em, gold)
            total += grads.loss
            lr = config.learning_rate
            model.transitions -= lr * grads.d_transitions
            model.start -= lr * grads.d_start
            model.stop -= lr * grads.d_stop
            if config.l2:
                model.feature_weights *= 1.0 - lr * config.l2
            for t, ids in enumerate(feats):
                for f in ids:
                    model.feature_weights[f] -= lr * grads.d_emissions[t]
            if trans_mask is not None:
                model.transitions[~trans_mask] = ILLEGAL_SCORE
                model.start[~start_mask] = ILLEGAL_SCORE
        losses.append(total / len(data))
    if config.bio_mask:
        model.apply_bio_mask()
    return model, losses
