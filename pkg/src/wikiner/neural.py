"""Toy-scale neural sequence tagger with a CRF head.

Word representations concatenate a frozen lemma-keyed embedding, an
optional precomputed contextual embedding, a trainable character encoder
(width-3 convolution or a bidirectional recurrent encoder) and the
one-hot feature blocks; a stack of bidirectional LSTM layers with
variational input dropout feeds a linear projection whose scores the CRF
decodes.  Everything runs in float64 numpy with hand-written backward
passes, so gradients can be checked against finite differences and
training is bit-reproducible under a fixed seed.

Two tagger roles mirror the category scheme: the ``main`` model predicts
top-level categories and the ``sub`` model consumes the main model's
output as an extra one-hot block to predict subcategories.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import crf as crf_mod
from . import storage
from .corpus import SUBCATEGORIES, Token
from .features import encode_onehot

_CHECKPOINT_MAGIC = b"WNTAGMDL"
_CHECKPOINT_VERSION = 1
_VECTORS_MAGIC = b"WNCTXVEC"
_VECTORS_VERSION = 1

UNK_CHAR = "\x00"


class NeuralError(ValueError):
    pass


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# Embedding tables
# ---------------------------------------------------------------------------

class EmbeddingTable:
    """Frozen lemma-keyed word vectors; unseen lemmas fall back to a
    trainable UNK row owned by the model."""

    def __init__(self, vectors: dict[str, np.ndarray], dim: int):
        self.vectors = vectors
        self.dim = dim
        for word, vec in vectors.items():
            if vec.shape != (dim,):
                raise NeuralError(f"embedding for {word!r} has dim {vec.shape}, expected ({dim},)")

    @classmethod
    def load_text(cls, stream: Iterable[str]) -> "EmbeddingTable":
        """Parse `word v1 ... vd` lines."""
        vectors: dict[str, np.ndarray] = {}
        dim = None
        for lineno, raw in enumerate(stream, 1):
            parts = raw.rstrip("\n").split()
            if not parts:
                continue
            vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise NeuralError(f"line {lineno}: dimension {len(vec)} != {dim}")
            vectors[parts[0]] = vec
        if dim is None:
            raise NeuralError("empty embedding file")
        return cls(vectors, dim)

    def lookup(self, lemma: str) -> Optional[np.ndarray]:
        return self.vectors.get(lemma.lower())


class ContextualTable:
    """Precomputed per-token vectors keyed by (doc id, sentence, token).

    Every requested token must be covered; a miss is a hard error by
    design, since silent zeros would poison training.
    """

    def __init__(self, dim: int, vectors: dict[str, list[list[list[float]]]]):
        self.dim = dim
        self.vectors = vectors

    def lookup(self, doc_id: str, sent_idx: int, tok_idx: int) -> np.ndarray:
        try:
            vec = self.vectors[doc_id][sent_idx][tok_idx]
        except (KeyError, IndexError):
            raise NeuralError(
                f"contextual vectors do not cover doc={doc_id!r} sentence={sent_idx} token={tok_idx}"
            ) from None
        return np.asarray(vec, dtype=np.float64)

    def save(self, path: str | Path) -> None:
        storage.save_container(path, _VECTORS_MAGIC, _VECTORS_VERSION,
                               {"dim": self.dim, "vectors": self.vectors})

    @classmethod
    def load(cls, path: str | Path) -> "ContextualTable":
        _, payload = storage.load_container(path, _VECTORS_MAGIC, _VECTORS_VERSION)
        return cls(payload["dim"], payload["vectors"])


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CharEncoderConfig:
    kind: str = "conv"  # conv | birecurrent | none
    char_dim: int = 50
    conv_filters: int = 30
    conv_width: int = 3
    rnn_hidden: int = 100

    def __post_init__(self):
        if self.kind not in ("conv", "birecurrent", "none"):
            raise NeuralError(f"unknown char encoder kind {self.kind!r}")

    @property
    def output_dim(self) -> int:
        if self.kind == "conv":
            return self.conv_filters
        if self.kind == "birecurrent":
            return 2 * self.rnn_hidden
        return 0


@dataclass(frozen=True)
class TaggerConfig:
    layers: int = 3
    hidden: int = 100
    dropout: float = 0.25
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    scheme: str = "BIO"
    char_encoder: CharEncoderConfig = CharEncoderConfig()
    features: tuple[str, ...] = ()

    def __post_init__(self):
        if not (0.0 <= self.dropout < 1.0):
            raise NeuralError("dropout must be in [0, 1)")
        if self.layers < 1 or self.hidden < 1:
            raise NeuralError("layers and hidden size must be positive")


@dataclass
class Instance:
    """One sentence ready for the tagger: tokens plus extractor outputs."""

    tokens: list[Token]
    feature_labels: dict[str, list[Optional[str]]] = field(default_factory=dict)
    gold_tags: Optional[list[str]] = None
    parent_labels: Optional[list[str]] = None
    doc_id: str = "doc0"
    sent_idx: int = 0


# ---------------------------------------------------------------------------
# Character encoders
# ---------------------------------------------------------------------------

def init_char_params(cfg: CharEncoderConfig, charset: Sequence[str], rng: np.random.Generator,
                     scale: float = 0.1) -> dict[str, np.ndarray]:
    params: dict[str, np.ndarray] = {}
    if cfg.kind == "none":
        return params
    vocab = len(charset)
    params["char_emb"] = rng.uniform(-scale, scale, size=(vocab, cfg.char_dim))
    if cfg.kind == "conv":
        params["conv_w"] = rng.uniform(-scale, scale, size=(cfg.conv_width * cfg.char_dim, cfg.conv_filters))
        params["conv_b"] = rng.uniform(-scale, scale, size=(cfg.conv_filters,))
    else:
        din, h = cfg.char_dim, cfg.rnn_hidden
        for d in ("f", "b"):
            params[f"char_{d}_W"] = rng.uniform(-scale, scale, size=(4 * h, din))
            params[f"char_{d}_U"] = rng.uniform(-scale, scale, size=(4 * h, h))
            b = rng.uniform(-scale, scale, size=(4 * h,))
            b[h:2 * h] = 1.0  # forget gate bias
            params[f"char_{d}_b"] = b
    return params


def _lstm_forward(xs: np.ndarray, W: np.ndarray, U: np.ndarray, b: np.ndarray):
    n = xs.shape[0]
    h_size = U.shape[1]
    hs = np.zeros((n, h_size))
    cache = []
    h = np.zeros(h_size)
    c = np.zeros(h_size)
    for t in range(n):
        z = W @ xs[t] + U @ h + b
        i = _sigmoid(z[:h_size])
        f = _sigmoid(z[h_size:2 * h_size])
        g = np.tanh(z[2 * h_size:3 * h_size])
        o = _sigmoid(z[3 * h_size:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        cache.append((xs[t], h, c, i, f, g, o, tc))
        h, c = h_new, c_new
        hs[t] = h
    return hs, cache


def _lstm_backward(d_hs: np.ndarray, cache, W: np.ndarray, U: np.ndarray):
    n = d_hs.shape[0]
    h_size = U.shape[1]
    d_xs = np.zeros((n, W.shape[1]))
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * h_size)
    dh_next = np.zeros(h_size)
    dc_next = np.zeros(h_size)
    for t in range(n - 1, -1, -1):
        x, h_prev, c_prev, i, f, g, o, tc = cache[t]
        dh = d_hs[t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ])
        dW += np.outer(dz, x)
        dU += np.outer(dz, h_prev)
        db += dz
        d_xs[t] = W.T @ dz
        dh_next = U.T @ dz
        dc_next = dc * f
    return d_xs, dW, dU, db


def encode_chars_forward(surface: str, cfg: CharEncoderConfig, params: dict[str, np.ndarray],
                         char_index: dict[str, int]):
    """Character-level word vector; returns (vector, cache for backward)."""
    if not surface:
        raise NeuralError("cannot encode an empty surface")
    if cfg.kind == "none":
        return np.zeros(0), None
    ids = [char_index.get(ch, char_index[UNK_CHAR]) for ch in surface]
    emb = params["char_emb"][ids]  # (m, char_dim)
    if cfg.kind == "conv":
        half = cfg.conv_width // 2
        padded = np.vstack([np.zeros((half, cfg.char_dim)), emb, np.zeros((half, cfg.char_dim))])
        windows = np.stack([padded[t:t + cfg.conv_width].ravel() for t in range(len(ids))])
        act = np.tanh(windows @ params["conv_w"] + params["conv_b"])  # (m, filters)
        argmax = np.argmax(act, axis=0)
        vec = act[argmax, np.arange(cfg.conv_filters)]
        return vec, ("conv", ids, windows, act, argmax)
    hs_f, cache_f = _lstm_forward(emb, params["char_f_W"], params["char_f_U"], params["char_f_b"])
    hs_b, cache_b = _lstm_forward(emb[::-1], params["char_b_W"], params["char_b_U"], params["char_b_b"])
    vec = np.concatenate([hs_f[-1], hs_b[-1]])
    return vec, ("birnn", ids, len(ids), cache_f, cache_b)


def encode_chars_backward(d_vec: np.ndarray, cache, cfg: CharEncoderConfig,
                          params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
    if cfg.kind == "none" or cache is None:
        return
    if cache[0] == "conv":
        _, ids, windows, act, argmax = cache
        d_act = np.zeros_like(act)
        d_act[argmax, np.arange(cfg.conv_filters)] = d_vec
        d_pre = d_act * (1.0 - act * act)
        grads["conv_w"] += windows.T @ d_pre
        grads["conv_b"] += d_pre.sum(axis=0)
        d_windows = d_pre @ params["conv_w"].T  # (m, width*char_dim)
        half = cfg.conv_width // 2
        m = len(ids)
        d_padded = np.zeros((m + 2 * half, cfg.char_dim))
        for t in range(m):
            d_padded[t:t + cfg.conv_width] += d_windows[t].reshape(cfg.conv_width, cfg.char_dim)
        d_emb = d_padded[half:half + m]
        for row, cid in enumerate(ids):
            grads["char_emb"][cid] += d_emb[row]
        return
    _, ids, m, cache_f, cache_b = cache
    h = cfg.rnn_hidden
    d_hs_f = np.zeros((m, h))
    d_hs_f[-1] = d_vec[:h]
    d_hs_b = np.zeros((m, h))
    d_hs_b[-1] = d_vec[h:]
    d_emb_f, dWf, dUf, dbf = _lstm_backward(d_hs_f, cache_f, params["char_f_W"], params["char_f_U"])
    d_emb_b, dWb, dUb, dbb = _lstm_backward(d_hs_b, cache_b, params["char_b_W"], params["char_b_U"])
    grads["char_f_W"] += dWf
    grads["char_f_U"] += dUf
    grads["char_f_b"] += dbf
    grads["char_b_W"] += dWb
    grads["char_b_U"] += dUb
    grads["char_b_b"] += dbb
    d_emb = d_emb_f + d_emb_b[::-1]
    for row, cid in enumerate(ids):
        grads["char_emb"][cid] += d_emb[row]


# ---------------------------------------------------------------------------
# Recurrent stack
# ---------------------------------------------------------------------------

def init_stack_params(cfg: TaggerConfig, input_dim: int, rng: np.random.Generator,
                      scale: float = 0.1) -> dict[str, np.ndarray]:
    params: dict[str, np.ndarray] = {}
    h = cfg.hidden
    din = input_dim
    for layer in range(cfg.layers):
        for d in ("f", "b"):
            params[f"l{layer}{d}_W"] = rng.uniform(-scale, scale, size=(4 * h, din))
            params[f"l{layer}{d}_U"] = rng.uniform(-scale, scale, size=(4 * h, h))
            b = rng.uniform(-scale, scale, size=(4 * h,))
            b[h:2 * h] = 1.0
            params[f"l{layer}{d}_b"] = b
        din = 2 * h
    return params


def make_dropout_masks(cfg: TaggerConfig, input_dim: int, rng: np.random.Generator) -> list[np.ndarray]:
    """One mask per layer per sequence, shared across every position."""
    masks = []
    din = input_dim
    for _layer in range(cfg.layers):
        masks.append((rng.random(din) >= cfg.dropout).astype(np.float64))
        din = 2 * cfg.hidden
    return masks


def recurrent_stack_forward(xs: np.ndarray, cfg: TaggerConfig, params: dict[str, np.ndarray],
                            masks: Optional[list[np.ndarray]] = None, train: bool = False):
    """Stacked bidirectional pass; returns (hidden (n, 2H), cache)."""
    if xs.shape[0] < 1:
        raise NeuralError("cannot run the stack on an empty sequence")
    keep = 1.0 - cfg.dropout
    layer_caches = []
    h = xs
    for layer in range(cfg.layers):
        if train and cfg.dropout > 0.0:
            mask = masks[layer]
            h_in = h * mask / keep
        else:
            mask = None
            h_in = h
        hs_f, cache_f = _lstm_forward(h_in, params[f"l{layer}f_W"], params[f"l{layer}f_U"],
                                      params[f"l{layer}f_b"])
        hs_b_rev, cache_b = _lstm_forward(h_in[::-1], params[f"l{layer}b_W"],
                                          params[f"l{layer}b_U"], params[f"l{layer}b_b"])
        layer_caches.append((mask, cache_f, cache_b))
        h = np.concatenate([hs_f, hs_b_rev[::-1]], axis=1)
    return h, layer_caches


def recurrent_stack_backward(d_out: np.ndarray, cfg: TaggerConfig, params: dict[str, np.ndarray],
                             layer_caches, grads: dict[str, np.ndarray]) -> np.ndarray:
    keep = 1.0 - cfg.dropout
    h_size = cfg.hidden
    d_h = d_out
    for layer in range(cfg.layers - 1, -1, -1):
        mask, cache_f, cache_b = layer_caches[layer]
        d_f = d_h[:, :h_size]
        d_b = d_h[:, h_size:][::-1]
        d_in_f, dWf, dUf, dbf = _lstm_backward(d_f, cache_f, params[f"l{layer}f_W"],
                                               params[f"l{layer}f_U"])
        d_in_b, dWb, dUb, dbb = _lstm_backward(d_b, cache_b, params[f"l{layer}b_W"],
                                               params[f"l{layer}b_U"])
        grads[f"l{layer}f_W"] += dWf
        grads[f"l{layer}f_U"] += dUf
        grads[f"l{layer}f_b"] += dbf
        grads[f"l{layer}b_W"] += dWb
        grads[f"l{layer}b_U"] += dUb
        grads[f"l{layer}b_b"] += dbb
        d_h = d_in_f + d_in_b[::-1]
        if mask is not None:
            d_h = d_h * mask / keep
    return d_h


# ---------------------------------------------------------------------------
# NADAM
# ---------------------------------------------------------------------------

@dataclass
class NadamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def nadam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               state: NadamState, t: int, lr: float = 0.002, beta1: float = 0.9,
               beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Nesterov-momentum Adam update with bias correction, in place.

    theta -= lr * (beta1 * m_hat + (1 - beta1) * g / (1 - beta1^t))
             / (sqrt(v_hat) + eps)
    with m_hat = m_t / (1 - beta1^t), v_hat = v_t / (1 - beta2^t).
    """
    if t < 1:
        raise NeuralError("step counter must be >= 1")
    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NeuralError(f"non-finite gradient in {key!r}; aborting the update")
        if key not in state.m:
            state.m[key] = np.zeros_like(params[key])
            state.v[key] = np.zeros_like(params[key])
        m = state.m[key]
        v = state.v[key]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        update = lr * (beta1 * m_hat + (1.0 - beta1) * g / (1.0 - beta1 ** t))
        params[key] -= update / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# Tagger model
# ---------------------------------------------------------------------------

@dataclass
class TaggerModel:
    config: TaggerConfig
    tags: tuple[str, ...]
    feature_vocabs: dict[str, tuple[str, ...]]
    char_index: dict[str, int]
    params: dict[str, np.ndarray]
    embedding: Optional[EmbeddingTable] = None
    contextual: Optional[ContextualTable] = None
    role: str = "main"
    main_tags: tuple[str, ...] = ()

    @property
    def input_dim(self) -> int:
        dim = 0
        if self.embedding is not None:
            dim += self.embedding.dim
        if self.contextual is not None:
            dim += self.contextual.dim
        dim += self.config.char_encoder.output_dim
        for name in self.config.features:
            dim += len(self.feature_vocabs[name]) + 1
        if self.role == "sub":
            dim += len(self.main_tags) + 1
        return dim

    def crf_view(self) -> crf_mod.CrfModel:
        return crf_mod.CrfModel(tags=self.tags, transitions=self.params["trans"],
                                start=self.params["start"], stop=self.params["stop"])

    def save(self, path: str | Path) -> None:
        cfg = self.config
        payload = {
            "config": {
                "layers": cfg.layers, "hidden": cfg.hidden, "dropout": cfg.dropout,
                "epochs": cfg.epochs, "batch_size": cfg.batch_size,
                "learning_rate": cfg.learning_rate, "beta1": cfg.beta1, "beta2": cfg.beta2,
                "scheme": cfg.scheme, "features": list(cfg.features),
                "char_encoder": {
                    "kind": cfg.char_encoder.kind, "char_dim": cfg.char_encoder.char_dim,
                    "conv_filters": cfg.char_encoder.conv_filters,
                    "conv_width": cfg.char_encoder.conv_width,
                    "rnn_hidden": cfg.char_encoder.rnn_hidden,
                },
            },
            "tags": list(self.tags),
            "feature_vocabs": {k: list(v) for k, v in self.feature_vocabs.items()},
            "char_index": self.char_index,
            "role": self.role,
            "main_tags": list(self.main_tags),
            "params": storage.params_to_json(self.params),
            "embedding": (
                {"dim": self.embedding.dim,
                 "vectors": {w: v.tolist() for w, v in sorted(self.embedding.vectors.items())}}
                if self.embedding is not None else None),
        }
        storage.save_container(path, _CHECKPOINT_MAGIC, _CHECKPOINT_VERSION, payload)

    @classmethod
    def load(cls, path: str | Path, contextual: Optional[ContextualTable] = None) -> "TaggerModel":
        _, payload = storage.load_container(path, _CHECKPOINT_MAGIC, _CHECKPOINT_VERSION)
        raw_cfg = payload["config"]
        cfg = TaggerConfig(
            layers=raw_cfg["layers"], hidden=raw_cfg["hidden"], dropout=raw_cfg["dropout"],
            epochs=raw_cfg["epochs"], batch_size=raw_cfg["batch_size"],
            learning_rate=raw_cfg["learning_rate"], beta1=raw_cfg["beta1"],
            beta2=raw_cfg["beta2"], scheme=raw_cfg["scheme"],
            features=tuple(raw_cfg["features"]),
            char_encoder=CharEncoderConfig(**raw_cfg["char_encoder"]),
        )
        emb = None
        if payload.get("embedding"):
            emb = EmbeddingTable(
                {w: np.asarray(v, dtype=np.float64) for w, v in payload["embedding"]["vectors"].items()},
                payload["embedding"]["dim"])
        return cls(config=cfg, tags=tuple(payload["tags"]),
                   feature_vocabs={k: tuple(v) for k, v in payload["feature_vocabs"].items()},
                   char_index=payload["char_index"],
                   params=storage.params_from_json(payload["params"]),
                   embedding=emb, contextual=contextual,
                   role=payload["role"], main_tags=tuple(payload["main_tags"]))


def build_char_index(sentences: Iterable[Sequence[Token]]) -> dict[str, int]:
    charset = {UNK_CHAR}
    for sent in sentences:
        for tok in sent:
            charset.update(tok.surface)
    return {ch: i for i, ch in enumerate(sorted(charset))}


def init_tagger(cfg: TaggerConfig, tags: Sequence[str],
                feature_vocabs: dict[str, Sequence[str]],
                char_index: dict[str, int], seed: int,
                embedding: Optional[EmbeddingTable] = None,
                contextual: Optional[ContextualTable] = None,
                role: str = "main", main_tags: Sequence[str] = ()) -> TaggerModel:
    rng = np.random.default_rng(seed)
    model = TaggerModel(config=cfg, tags=tuple(tags),
                        feature_vocabs={k: tuple(v) for k, v in feature_vocabs.items()},
                        char_index=dict(char_index), params={}, embedding=embedding,
                        contextual=contextual, role=role, main_tags=tuple(main_tags))
    params = init_char_params(cfg.char_encoder, sorted(char_index), rng)
    params.update(init_stack_params(cfg, model.input_dim, rng))
    k = len(tags)
    params["proj_W"] = rng.uniform(-0.1, 0.1, size=(2 * cfg.hidden, k))
    params["proj_b"] = rng.uniform(-0.1, 0.1, size=(k,))
    params["trans"] = np.zeros((k, k))
    params["start"] = np.zeros(k)
    params["stop"] = np.zeros(k)
    if embedding is not None:
        params["unk"] = rng.uniform(-0.1, 0.1, size=(embedding.dim,))
    model.params = params
    return model


def build_word_vector(model: TaggerModel, inst: Instance, t: int):
    """Concatenated word representation; returns (vector, cache).

    Order: static embedding, contextual embedding, character vector,
    one-hot feature blocks in configured order, parent-label one-hot for
    the sub model.
    """
    tok = inst.tokens[t]
    pieces: list[np.ndarray] = []
    unk_slice = None
    char_cache = None
    char_slice = None
    offset = 0
    if model.embedding is not None:
        fixed = model.embedding.lookup(tok.match_lemma)
        if fixed is None:
            pieces.append(model.params["unk"])
            unk_slice = (offset, offset + model.embedding.dim)
        else:
            pieces.append(fixed)
        offset += model.embedding.dim
    if model.contextual is not None:
        vec = model.contextual.lookup(inst.doc_id, inst.sent_idx, t)
        if vec.shape != (model.contextual.dim,):
            raise NeuralError("contextual vector has the wrong dimension")
        pieces.append(vec)
        offset += model.contextual.dim
    if model.config.char_encoder.kind != "none":
        char_vec, char_cache = encode_chars_forward(tok.surface, model.config.char_encoder,
                                                    model.params, model.char_index)
        char_slice = (offset, offset + char_vec.shape[0])
        pieces.append(char_vec)
        offset += char_vec.shape[0]
    for name in model.config.features:
        labels = inst.feature_labels.get(name)
        label = labels[t] if labels is not None else None
        onehot = encode_onehot(label, model.feature_vocabs[name], source=name)
        pieces.append(np.asarray(onehot.to_array()))
        offset += onehot.dimension
    if model.role == "sub":
        if inst.parent_labels is None:
            raise NeuralError("sub model needs parent labels")
        onehot = encode_onehot(inst.parent_labels[t], model.main_tags, source="parent")
        pieces.append(np.asarray(onehot.to_array()))
        offset += onehot.dimension
    vec = np.concatenate(pieces) if pieces else np.zeros(0)
    if vec.shape[0] != model.input_dim:
        raise NeuralError(f"word vector dim {vec.shape[0]} != declared {model.input_dim}")
    return vec, (unk_slice, char_slice, char_cache)


def sentence_forward(model: TaggerModel, inst: Instance,
                     masks: Optional[list[np.ndarray]] = None, train: bool = False):
    """Word vectors -> stack -> emissions; returns (emissions, cache)."""
    n = len(inst.tokens)
    if n == 0:
        raise NeuralError("empty sentence")
    vecs = []
    word_caches = []
    for t in range(n):
        vec, cache = build_word_vector(model, inst, t)
        vecs.append(vec)
        word_caches.append(cache)
    xs = np.stack(vecs)
    hidden, stack_cache = recurrent_stack_forward(xs, model.config, model.params, masks, train)
    emissions = hidden @ model.params["proj_W"] + model.params["proj_b"]
    return emissions, (xs, hidden, stack_cache, word_caches)


def zero_grads(model: TaggerModel) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in model.params.items()}


def sentence_loss_and_grads(model: TaggerModel, inst: Instance,
                            masks: Optional[list[np.ndarray]] = None,
                            train: bool = True,
                            grads: Optional[dict[str, np.ndarray]] = None):
    """CRF NLL for one sentence plus gradients for every trainable array."""
    if inst.gold_tags is None:
        raise NeuralError("instance has no gold tags")
    emissions, (xs, hidden, stack_cache, word_caches) = sentence_forward(model, inst, masks, train)
    crf_grads = crf_mod.nll_gradient(model.crf_view(), emissions, inst.gold_tags)
    if grads is None:
        grads = zero_grads(model)
    grads["trans"] += crf_grads.d_transitions
    grads["start"] += crf_grads.d_start
    grads["stop"] += crf_grads.d_stop
    d_em = crf_grads.d_emissions
    grads["proj_W"] += hidden.T @ d_em
    grads["proj_b"] += d_em.sum(axis=0)
    d_hidden = d_em @ model.params["proj_W"].T
    d_xs = recurrent_stack_backward(d_hidden, model.config, model.params, stack_cache, grads)
    for t, (unk_slice, char_slice, char_cache) in enumerate(word_caches):
        if unk_slice is not None:
            grads["unk"] += d_xs[t, unk_slice[0]:unk_slice[1]]
        if char_slice is not None:
            encode_chars_backward(d_xs[t, char_slice[0]:char_slice[1]], char_cache,
                                  model.config.char_encoder, model.params, grads)
    return crf_grads.loss, grads


def predict_tags(model: TaggerModel, inst: Instance) -> list[str]:
    emissions, _ = sentence_forward(model, inst, masks=None, train=False)
    tags, _score = crf_mod.viterbi(emissions, model.crf_view())
    return tags


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def train_tagger(instances: Sequence[Instance], model: TaggerModel,
                 seed: int = 0, epochs: Optional[int] = None) -> list[float]:
    """Minimize mean CRF NLL with NADAM; returns the per-epoch loss trace.

    Deterministic for a fixed seed: shuffling, dropout masks and updates
    all come from one generator in a fixed order.
    """
    if not instances:
        raise NeuralError("training corpus is empty")
    cfg = model.config
    rng = np.random.default_rng(seed)
    state = NadamState()
    losses: list[float] = []
    order = np.arange(len(instances))
    step = 0
    n_epochs = cfg.epochs if epochs is None else epochs
    for _epoch in range(n_epochs):
        rng.shuffle(order)
        epoch_loss = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            grads = zero_grads(model)
            batch_loss = 0.0
            for idx in batch:
                inst = instances[idx]
                masks = make_dropout_masks(cfg, model.input_dim, rng) if cfg.dropout > 0 else None
                loss, _ = sentence_loss_and_grads(model, inst, masks=masks, train=True, grads=grads)
                batch_loss += loss
            scale = 1.0 / len(batch)
            for key in grads:
                grads[key] *= scale
            step += 1
            nadam_step(model.params, grads, state, step, lr=cfg.learning_rate,
                       beta1=cfg.beta1, beta2=cfg.beta2)
            epoch_loss += batch_loss
        losses.append(epoch_loss / len(instances))
    return losses


# ---------------------------------------------------------------------------
# Main -> subcategory cascade
# ---------------------------------------------------------------------------

_ALLOWED_SUB = {parent: set(subs) for parent, subs in SUBCATEGORIES.items()}


def mask_sub_tags(main_tags: Sequence[str], sub_tags: Sequence[str]) -> list[str]:
    """Force sub predictions outside persName/placeName spans to O and
    constrain in-span predictions to the parent's subcategory set."""
    out = []
    for mt, st in zip(main_tags, sub_tags):
        if st == "O":
            out.append("O")
            continue
        main_cat = mt.split("-", 1)[1] if mt != "O" else None
        sub_label = st.split("-", 1)[1]
        if main_cat in _ALLOWED_SUB and sub_label in _ALLOWED_SUB[main_cat]:
            out.append(st)
        else:
            out.append("O")
    # repair orphans produced by the forcing (I-x after a forced O)
    repaired = []
    open_label = None
    for tag in out:
        if tag.startswith("I-") and tag[2:] != open_label:
            tag = "B-" + tag[2:]
        open_label = tag[2:] if tag != "O" else None
        repaired.append(tag)
    return repaired


def predict_cascade(main_model: TaggerModel, sub_model: TaggerModel, inst: Instance,
                    mask: bool = True) -> tuple[list[str], list[str]]:
    """Main tags via Viterbi, then sub tags conditioned on them."""
    if sub_model.main_tags != main_model.tags:
        raise NeuralError("sub model was built against a different main tag set")
    main_tags = predict_tags(main_model, inst)
    sub_inst = replace_instance_parents(inst, main_tags)
    sub_tags = predict_tags(sub_model, sub_inst)
    if mask:
        sub_tags = mask_sub_tags(main_tags, sub_tags)
    return main_tags, sub_tags


def replace_instance_parents(inst: Instance, parent_labels: Sequence[str]) -> Instance:
    return Instance(tokens=inst.tokens, feature_labels=inst.feature_labels,
                    gold_tags=inst.gold_tags, parent_labels=list(parent_labels),
                    doc_id=inst.doc_id, sent_idx=inst.sent_idx)
