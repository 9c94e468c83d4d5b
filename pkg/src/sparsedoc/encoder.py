"""Contextual term embeddings from a small trainable transformer.

Each entity is embedded by running its sentence (truncated to a window centred
on the matched term) through a pre-layer-norm transformer encoder and averaging
the hidden states over the term's token positions.  Forward and backward passes
are written out explicitly over numpy arrays in float64 so every gradient can
be checked against finite differences.

A precomputed provider reads frozen vectors from disk instead, for setups where
embeddings come from an external encoder.
"""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import erf

from .errors import ParseError, ValidationError
from .filtering import Entity

PAD_ID = 0
UNK_ID = 1

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True, slots=True)
class EncoderConfig:
    vocab_size: int
    dim: int = 64
    layers: int = 2
    heads: int = 4
    max_len: int = 128
    ffn_dim: int = 0
    eps: float = 1e-5

    def __post_init__(self) -> None:
        if self.ffn_dim == 0:
            object.__setattr__(self, "ffn_dim", 4 * self.dim)
        if self.dim % self.heads != 0:
            raise ValidationError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.vocab_size < 2:
            raise ValidationError("vocab_size must cover PAD and UNK")


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_encoder(config: EncoderConfig, seed: int) -> dict[str, np.ndarray]:
    """Fresh parameter dict: uniform(+-0.05) embedding tables, Xavier-uniform
    projection matrices, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    d, f = config.dim, config.ffn_dim
    params: dict[str, np.ndarray] = {
        "tok_emb": rng.uniform(-0.05, 0.05, size=(config.vocab_size, d)),
        "pos_emb": rng.uniform(-0.05, 0.05, size=(config.max_len, d)),
    }
    for j in range(config.layers):
        p = f"l{j}."
        params[p + "ln1.g"] = np.ones(d)
        params[p + "ln1.b"] = np.zeros(d)
        params[p + "attn.wq"] = _xavier(rng, d, d)
        params[p + "attn.wk"] = _xavier(rng, d, d)
        params[p + "attn.wv"] = _xavier(rng, d, d)
        params[p + "attn.wo"] = _xavier(rng, d, d)
        params[p + "ln2.g"] = np.ones(d)
        params[p + "ln2.b"] = np.zeros(d)
        params[p + "ffn.w1"] = _xavier(rng, d, f)
        params[p + "ffn.b1"] = np.zeros(f)
        params[p + "ffn.w2"] = _xavier(rng, f, d)
        params[p + "ffn.b2"] = np.zeros(d)
    params["lnf.g"] = np.ones(d)
    params["lnf.b"] = np.zeros(d)
    return params


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x * _INV_SQRT2)) + x * _INV_SQRT2PI * np.exp(-0.5 * x * x)


def _softmax(scores: np.ndarray) -> np.ndarray:
    m = scores.max(axis=-1, keepdims=True)
    e = np.exp(scores - m)
    return e / e.sum(axis=-1, keepdims=True)


def _ln_forward(x: np.ndarray, g: np.ndarray, b: np.ndarray, eps: float):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv)


def _ln_backward(dy: np.ndarray, cache, g: np.ndarray, grads: dict, key: str) -> np.ndarray:
    xhat, inv = cache
    grads[key + ".g"] += (dy * xhat).sum(axis=(0, 1))
    grads[key + ".b"] += dy.sum(axis=(0, 1))
    dxhat = dy * g
    return inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )


def _attn_forward(h: np.ndarray, params: dict, p: str, config: EncoderConfig, mask: np.ndarray):
    B, L, d = h.shape
    H = config.heads
    dh = d // H

    def split(t: np.ndarray) -> np.ndarray:
        return t.reshape(B, L, H, dh).transpose(0, 2, 1, 3)

    Q = split(h @ params[p + "attn.wq"])
    K = split(h @ params[p + "attn.wk"])
    V = split(h @ params[p + "attn.wv"])
    scores = Q @ K.transpose(0, 1, 3, 2) / math.sqrt(dh)
    scores = np.where(mask[:, None, None, :], scores, -np.inf)
    A = _softmax(scores)
    concat = (A @ V).transpose(0, 2, 1, 3).reshape(B, L, d)
    out = concat @ params[p + "attn.wo"]
    return out, (h, Q, K, V, A, concat)


def _attn_backward(dout: np.ndarray, cache, params: dict, p: str, config: EncoderConfig, grads: dict) -> np.ndarray:
    h, Q, K, V, A, concat = cache
    B, L, d = h.shape
    H = config.heads
    dh = d // H

    grads[p + "attn.wo"] += np.einsum("bld,ble->de", concat, dout)
    dO = (dout @ params[p + "attn.wo"].T).reshape(B, L, H, dh).transpose(0, 2, 1, 3)
    dA = dO @ V.transpose(0, 1, 3, 2)
    dV = A.transpose(0, 1, 3, 2) @ dO
    dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True)) / math.sqrt(dh)
    dQ = dS @ K
    dK = dS.transpose(0, 1, 3, 2) @ Q

    def merge(t: np.ndarray) -> np.ndarray:
        return t.transpose(0, 2, 1, 3).reshape(B, L, d)

    dq, dk, dv = merge(dQ), merge(dK), merge(dV)
    grads[p + "attn.wq"] += np.einsum("bld,ble->de", h, dq)
    grads[p + "attn.wk"] += np.einsum("bld,ble->de", h, dk)
    grads[p + "attn.wv"] += np.einsum("bld,ble->de", h, dv)
    return dq @ params[p + "attn.wq"].T + dk @ params[p + "attn.wk"].T + dv @ params[p + "attn.wv"].T


def _ffn_forward(h2: np.ndarray, params: dict, p: str):
    u = h2 @ params[p + "ffn.w1"] + params[p + "ffn.b1"]
    a = gelu(u)
    return a @ params[p + "ffn.w2"] + params[p + "ffn.b2"], (h2, u, a)


def _ffn_backward(df: np.ndarray, cache, params: dict, p: str, grads: dict) -> np.ndarray:
    h2, u, a = cache
    grads[p + "ffn.w2"] += np.einsum("blf,bld->fd", a, df)
    grads[p + "ffn.b2"] += df.sum(axis=(0, 1))
    du = (df @ params[p + "ffn.w2"].T) * gelu_grad(u)
    grads[p + "ffn.w1"] += np.einsum("bld,blf->df", h2, du)
    grads[p + "ffn.b1"] += du.sum(axis=(0, 1))
    return du @ params[p + "ffn.w1"].T


@dataclass(slots=True)
class EncodeCache:
    ids: np.ndarray
    mask: np.ndarray
    layers: list
    lnf: tuple


def encode(params: dict, config: EncoderConfig, ids: np.ndarray, mask: np.ndarray):
    """Hidden states (batch, length, dim) for a padded id batch, plus the
    intermediates needed by encode_backward.  mask is True at real tokens."""
    B, L = ids.shape
    if L > config.max_len:
        raise ValidationError(f"sequence length {L} exceeds max_len {config.max_len}")
    x = params["tok_emb"][ids] + params["pos_emb"][:L]
    layer_caches = []
    for j in range(config.layers):
        p = f"l{j}."
        h, c_ln1 = _ln_forward(x, params[p + "ln1.g"], params[p + "ln1.b"], config.eps)
        a, c_att = _attn_forward(h, params, p, config, mask)
        x1 = x + a
        h2, c_ln2 = _ln_forward(x1, params[p + "ln2.g"], params[p + "ln2.b"], config.eps)
        f, c_ffn = _ffn_forward(h2, params, p)
        x = x1 + f
        layer_caches.append((c_ln1, c_att, c_ln2, c_ffn))
    y, c_lnf = _ln_forward(x, params["lnf.g"], params["lnf.b"], config.eps)
    return y, EncodeCache(ids=ids, mask=mask, layers=layer_caches, lnf=c_lnf)


def zero_grads(params: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def encode_backward(
    params: dict,
    config: EncoderConfig,
    cache: EncodeCache,
    dhidden: np.ndarray,
    grads: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Accumulate parameter gradients for one encode() call into grads."""
    if grads is None:
        grads = zero_grads(params)
    dx = _ln_backward(dhidden * cache.mask[:, :, None], cache.lnf, params["lnf.g"], grads, "lnf")
    for j in reversed(range(config.layers)):
        c_ln1, c_att, c_ln2, c_ffn = cache.layers[j]
        p = f"l{j}."
        dh2 = _ffn_backward(dx, c_ffn, params, p, grads)
        dx1 = dx + _ln_backward(dh2, c_ln2, params[p + "ln2.g"], grads, p + "ln2")
        da = _attn_backward(dx1, c_att, params, p, config, grads)
        dx = dx1 + _ln_backward(da, c_ln1, params[p + "ln1.g"], grads, p + "ln1")
    np.add.at(grads["tok_emb"], cache.ids, dx)
    grads["pos_emb"][: dx.shape[1]] += dx.sum(axis=0)
    return grads


# -- token vocabulary


@dataclass(frozen=True, slots=True)
class TokenVocab:
    """Normalized token -> id, ids starting at 2 (0 is PAD, 1 is UNK)."""

    index: Mapping[str, int]

    @property
    def size(self) -> int:
        return len(self.index) + 2

    def encode(self, norms: Iterable[str]) -> list[int]:
        return [self.index.get(t, UNK_ID) for t in norms]


def build_token_vocab(token_streams: Iterable[Iterable[str]], min_freq: int = 2) -> TokenVocab:
    """Vocabulary over normalized tokens seen at least min_freq times.

    Tokens are ranked by descending frequency (alphabetical among equals) so
    the id assignment is reproducible.
    """
    freq: Counter[str] = Counter()
    for stream in token_streams:
        freq.update(stream)
    kept = sorted((t for t, n in freq.items() if n >= min_freq), key=lambda t: (-freq[t], t))
    return TokenVocab(index={t: i + 2 for i, t in enumerate(kept)})


# -- entity windows


def window_truncate(n_tokens: int, span: tuple[int, int], max_len: int) -> tuple[int, int, tuple[int, int]]:
    """Window [start, end) of at most max_len tokens centred on the span.

    The window is shifted as needed so the span stays inside it and the window
    stays inside the sentence.  Returns (start, end, span relative to start).
    """
    first, last = span
    if not 0 <= first <= last < n_tokens:
        raise ValidationError(f"span {span} outside 0..{n_tokens - 1}")
    if last - first + 1 > max_len:
        raise ValidationError(f"span {span} longer than window {max_len}")
    center = (first + last) // 2
    start = center - max_len // 2
    start = min(max(start, last - max_len + 1), first)
    start = max(0, min(start, max(0, n_tokens - max_len)))
    end = min(n_tokens, start + max_len)
    return start, end, (first - start, last - start)


def entity_window(entity: Entity, max_len: int) -> tuple[list[str], tuple[int, int]]:
    norms = [t.norm for t in entity.sentence.tokens]
    start, end, span = window_truncate(len(norms), entity.token_span, max_len)
    return norms[start:end], span


def batch_windows(windows: Sequence[tuple[list[str], tuple[int, int]]], vocab: TokenVocab):
    """Pack variable-length windows into padded (ids, mask, spans) arrays."""
    if not windows:
        raise ValidationError("empty window batch")
    L = max(len(norms) for norms, _ in windows)
    ids = np.full((len(windows), L), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(windows), L), dtype=bool)
    spans = []
    for i, (norms, span) in enumerate(windows):
        encoded = vocab.encode(norms)
        ids[i, : len(encoded)] = encoded
        mask[i, : len(encoded)] = True
        spans.append(span)
    return ids, mask, spans


def encode_sentence(sentence, params: dict, config: EncoderConfig, vocab: TokenVocab) -> np.ndarray:
    """One contextual vector per sentence token (length, dim)."""
    norms = [t.norm for t in sentence.tokens]
    if not norms:
        raise ValidationError("sentence has no tokens")
    ids, mask, _ = batch_windows([(norms, (0, len(norms) - 1))], vocab)
    hidden, _ = encode(params, config, ids, mask)
    return hidden[0]


def pool_spans(hidden: np.ndarray, spans: Sequence[tuple[int, int]]) -> np.ndarray:
    """Mean hidden state over each row's span (inclusive indices)."""
    out = np.empty((hidden.shape[0], hidden.shape[2]))
    for i, (first, last) in enumerate(spans):
        out[i] = hidden[i, first : last + 1].mean(axis=0)
    return out


def pool_spans_backward(demb: np.ndarray, spans: Sequence[tuple[int, int]], hidden_shape) -> np.ndarray:
    dhidden = np.zeros(hidden_shape)
    for i, (first, last) in enumerate(spans):
        dhidden[i, first : last + 1] = demb[i] / (last - first + 1)
    return dhidden


# -- providers


@dataclass(slots=True)
class EmbedCache:
    encode_cache: EncodeCache
    spans: list[tuple[int, int]]


class TrainableEncoderProvider:
    """Entity embeddings from the in-package encoder, with gradient support."""

    trainable = True

    def __init__(
        self,
        config: EncoderConfig,
        vocab: TokenVocab,
        params: dict[str, np.ndarray] | None = None,
        seed: int = 0,
    ) -> None:
        self.config = config
        self.vocab = vocab
        self.params = params if params is not None else init_encoder(config, seed)

    @property
    def dim(self) -> int:
        return self.config.dim

    def embed_with_cache(self, entities: Sequence[Entity]) -> tuple[np.ndarray, EmbedCache]:
        windows = [entity_window(e, self.config.max_len) for e in entities]
        ids, mask, spans = batch_windows(windows, self.vocab)
        hidden, cache = encode(self.params, self.config, ids, mask)
        return pool_spans(hidden, spans), EmbedCache(encode_cache=cache, spans=spans)

    def embed(self, entities: Sequence[Entity]) -> np.ndarray:
        emb, _ = self.embed_with_cache(entities)
        return emb

    def backward(
        self,
        cache: EmbedCache,
        dembeddings: np.ndarray,
        grads: dict[str, np.ndarray] | None = None,
    ) -> dict[str, np.ndarray]:
        ids = cache.encode_cache.ids
        dhidden = pool_spans_backward(dembeddings, cache.spans, (*ids.shape, self.config.dim))
        return encode_backward(self.params, self.config, cache.encode_cache, dhidden, grads)


class PrecomputedProvider:
    """Entity embeddings looked up from a frozen id -> vector table."""

    trainable = False

    def __init__(self, vectors: Mapping[str, np.ndarray], dim: int) -> None:
        for eid, vec in vectors.items():
            if vec.shape != (dim,):
                raise ValidationError(f"vector for {eid} has shape {vec.shape}, expected ({dim},)")
        self.vectors = dict(vectors)
        self.dim = dim

    def embed(self, entities: Sequence[Entity]) -> np.ndarray:
        rows = []
        for e in entities:
            if e.entity_id not in self.vectors:
                raise ValidationError(f"no precomputed embedding for entity {e.entity_id}")
            rows.append(self.vectors[e.entity_id])
        return np.array(rows)


def save_precomputed_embeddings(path: str | Path, vectors: Mapping[str, np.ndarray]) -> None:
    """Text format: first line is the dimension, then one
    "entity_id,v1,...,vd" line per entity, sorted by id."""
    items = sorted(vectors.items())
    if not items:
        raise ValidationError("nothing to save")
    dim = len(items[0][1])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{dim}\n")
        for eid, vec in items:
            if len(vec) != dim:
                raise ValidationError(f"vector for {eid} has length {len(vec)}, expected {dim}")
            fh.write(eid + "," + ",".join(f"{float(v):.17g}" for v in vec) + "\n")


def load_precomputed_embeddings(path: str | Path) -> PrecomputedProvider:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        try:
            dim = int(header)
        except ValueError as exc:
            raise ParseError(f"{path}:1: expected integer dimension, got {header!r}") from exc
        vectors: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split(",")
            if len(parts) != dim + 1:
                raise ParseError(f"{path}:{lineno}: expected {dim + 1} fields, got {len(parts)}")
            try:
                vectors[parts[0]] = np.array([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad float: {exc}") from exc
    return PrecomputedProvider(vectors, dim)
