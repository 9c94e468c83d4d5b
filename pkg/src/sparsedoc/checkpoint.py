"""Versioned model checkpoints.

Layout: a zip container (numpy .npz) holding
  - ``meta``: a JSON string with the format version, class names, default
    label, embedding dimension, encoder config, the encoder's token
    vocabulary, and a content hash;
  - one float64 array per parameter, keyed ``head.<name>`` for the
    classification head and ``enc.<name>`` for the built-in encoder
    (``enc.*`` entries absent when the model was trained on frozen imported
    embeddings).

The content hash is a blake2b digest over the canonical metadata JSON and the
raw bytes of every array, so loads fail loudly on corruption or hand-editing.
Arrays round-trip bit-exactly through the .npy encoding.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig, TokenVocab, TrainableEncoderProvider
from .errors import ParseError, ValidationError
from .model import HeadParams

CHECKPOINT_VERSION = 1

_HEAD_KEYS = ("w_s", "b_s", "w_c", "b_c")


@dataclass(slots=True)
class Checkpoint:
    classes: tuple[str, ...]
    default_label: str
    head: HeadParams
    encoder_config: EncoderConfig | None = None
    encoder_params: dict[str, np.ndarray] | None = None
    token_vocab: TokenVocab | None = None
    version: int = CHECKPOINT_VERSION

    def __post_init__(self) -> None:
        trainable_bits = (self.encoder_config, self.encoder_params, self.token_vocab)
        if any(x is not None for x in trainable_bits) and any(x is None for x in trainable_bits):
            raise ValidationError("encoder config, params, and token vocab must be stored together")
        if self.head.classes != self.classes:
            raise ValidationError("head classes disagree with checkpoint classes")

    @property
    def trainable(self) -> bool:
        return self.encoder_params is not None

    def provider(self) -> TrainableEncoderProvider:
        if not self.trainable:
            raise ValidationError("checkpoint has no built-in encoder; supply precomputed embeddings")
        return TrainableEncoderProvider(self.encoder_config, self.token_vocab, params=self.encoder_params)


def _meta_dict(ckpt: Checkpoint) -> dict:
    enc = None
    if ckpt.encoder_config is not None:
        c = ckpt.encoder_config
        enc = {
            "vocab_size": c.vocab_size,
            "dim": c.dim,
            "layers": c.layers,
            "heads": c.heads,
            "max_len": c.max_len,
            "ffn_dim": c.ffn_dim,
            "eps": c.eps,
        }
    return {
        "version": ckpt.version,
        "classes": list(ckpt.classes),
        "default_label": ckpt.default_label,
        "dim": ckpt.head.dim,
        "encoder": enc,
        "token_vocab": dict(ckpt.token_vocab.index) if ckpt.token_vocab is not None else None,
    }


def _digest(meta: dict, arrays: dict[str, np.ndarray]) -> str:
    h = hashlib.blake2b(digest_size=16)
    h.update(json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8"))
    for key in sorted(arrays):
        arr = arrays[key]
        h.update(key.encode("utf-8"))
        h.update(str(arr.shape).encode("ascii"))
        h.update(str(arr.dtype).encode("ascii"))
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def _arrays(ckpt: Checkpoint) -> dict[str, np.ndarray]:
    arrays = {f"head.{k}": v for k, v in ckpt.head.as_dict().items()}
    if ckpt.encoder_params is not None:
        arrays.update({f"enc.{k}": v for k, v in ckpt.encoder_params.items()})
    return arrays


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    meta = _meta_dict(ckpt)
    arrays = _arrays(ckpt)
    meta["hash"] = _digest(meta, arrays)
    buf = io.BytesIO()
    np.savez(buf, meta=json.dumps(meta, sort_keys=True, ensure_ascii=False), **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        with np.load(path, allow_pickle=False) as data:
            if "meta" not in data:
                raise ParseError(f"{path}: not a checkpoint (no metadata entry)")
            meta = json.loads(str(data["meta"]))
            arrays = {k: data[k] for k in data.files if k != "meta"}
    except (OSError, ValueError, EOFError, zipfile.BadZipFile, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: cannot read checkpoint: {exc}") from exc

    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(f"{path}: checkpoint version {meta.get('version')}, expected {CHECKPOINT_VERSION}")
    stored_hash = meta.pop("hash", None)
    if stored_hash != _digest(meta, arrays):
        raise ValidationError(f"{path}: checkpoint content hash mismatch")

    classes = tuple(meta["classes"])
    head = HeadParams(classes=classes, **{k: arrays[f"head.{k}"] for k in _HEAD_KEYS})

    encoder_config = None
    encoder_params = None
    token_vocab = None
    if meta["encoder"] is not None:
        encoder_config = EncoderConfig(**meta["encoder"])
        encoder_params = {k[len("enc."):]: v for k, v in arrays.items() if k.startswith("enc.")}
        index = meta["token_vocab"]
        token_vocab = TokenVocab(index=dict(sorted(index.items(), key=lambda kv: kv[1])))

    return Checkpoint(
        classes=classes,
        default_label=meta["default_label"],
        head=head,
        encoder_config=encoder_config,
        encoder_params=encoder_params,
        token_vocab=token_vocab,
        version=meta["version"],
    )
