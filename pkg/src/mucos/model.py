"""Desk-scale sequence encoder with a softmax classification head.

Two encoders are available:

* ``mean``: masked mean of the token embeddings.
* ``attn``: one self-attention block with residual connections and a tanh
  feed-forward layer, followed by the same masked mean.

The head maps the pooled vector to ``num_classes`` logits (relations for the
relation task, entities for the tail task).  All gradients are analytic.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

ENCODERS = ("mean", "attn")
CHECKPOINT_FORMAT = 1
LOG_FLOOR = 1e-12


class CheckpointError(Exception):
    pass


class StaleTraceError(RuntimeError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    encoder: str = "mean"
    dim: int = 64
    ff_dim: int = 128
    init_scale: float = 0.05

    def __post_init__(self) -> None:
        if self.encoder not in ENCODERS:
            raise ValueError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if self.dim < 1 or self.ff_dim < 1:
            raise ValueError("dimensions must be positive")


def param_shapes(vocab_size: int, num_classes: int, cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    d, f = cfg.dim, cfg.ff_dim
    shapes: dict[str, tuple[int, ...]] = {"embed": (vocab_size, d)}
    if cfg.encoder == "attn":
        shapes.update(
            w_q=(d, d), w_k=(d, d), w_v=(d, d), w_ff1=(d, f), b_ff1=(f,), w_ff2=(f, d), b_ff2=(d,)
        )
    shapes.update(w_out=(num_classes, d), b_out=(num_classes,))
    return shapes


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def cross_entropy(probs: np.ndarray, label: int) -> float:
    """``-log probs[label]``, with the probability floored at ``LOG_FLOOR``."""
    return float(-np.log(max(float(probs[label]), LOG_FLOOR)))


@dataclass
class ForwardTrace:
    tokens: np.ndarray
    mask: np.ndarray
    probs: np.ndarray
    cache: dict
    version: int


class EncoderModel:
    def __init__(
        self,
        vocab_size: int,
        num_classes: int,
        config: EncoderConfig = EncoderConfig(),
        seed: int = 0,
        params: Optional[dict[str, np.ndarray]] = None,
    ) -> None:
        self.vocab_size = vocab_size
        self.num_classes = num_classes
        self.config = config
        self.shapes = param_shapes(vocab_size, num_classes, config)
        if params is None:
            rng = np.random.default_rng(seed)
            s = config.init_scale
            params = {name: rng.uniform(-s, s, size=shape) for name, shape in self.shapes.items()}
        else:
            check_shapes(params, self.shapes)
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.version = 0

    def mark_updated(self) -> None:
        """Call after mutating parameters; invalidates outstanding traces."""
        self.version += 1

    # -- forward ---------------------------------------------------------

    def forward(self, tokens: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
        """Class probabilities for a batch ``(B, L)`` (or a single ``(L,)`` sequence)."""
        tokens = np.asarray(tokens)
        mask = np.asarray(mask)
        single = tokens.ndim == 1
        if single:
            tokens, mask = tokens[None], mask[None]
        if tokens.ndim != 2 or tokens.shape != mask.shape:
            raise ValueError(f"token/mask shape mismatch: {tokens.shape} vs {mask.shape}")
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.vocab_size):
            raise ValueError(f"token ids outside vocabulary of size {self.vocab_size}")

        p = self.params
        m = mask.astype(np.float64)
        count = m.sum(axis=1, keepdims=True)
        if np.any(count == 0):
            raise ValueError("every sequence needs at least one unmasked token")
        x = p["embed"][tokens]
        cache: dict = {"x": x, "m": m, "count": count}
        if self.config.encoder == "attn":
            z = self._attn_forward(x, m, cache)
        else:
            z = x
        pooled = np.einsum("bl,bld->bd", m, z) / count
        logits = pooled @ p["w_out"].T + p["b_out"]
        probs = softmax(logits)
        cache["pooled"] = pooled
        trace = ForwardTrace(tokens, mask, probs, cache, self.version)
        return (probs[0] if single else probs), trace

    def _attn_forward(self, x, m, cache):
        p = self.params
        scale = 1.0 / np.sqrt(self.config.dim)
        q, k, v = x @ p["w_q"], x @ p["w_k"], x @ p["w_v"]
        scores = np.einsum("bid,bjd->bij", q, k) * scale
        scores = np.where(m[:, None, :] > 0, scores, -np.inf)
        attn = softmax(scores, axis=-1)
        h = x + attn @ v
        g = np.tanh(h @ p["w_ff1"] + p["b_ff1"])
        z = h + g @ p["w_ff2"] + p["b_ff2"]
        cache.update(q=q, k=k, v=v, attn=attn, h=h, g=g, scale=scale)
        return z

    def predict(self, tokens: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return self.forward(tokens, mask)[0]

    # -- backward --------------------------------------------------------

    def backward(self, trace: ForwardTrace, labels) -> dict[str, np.ndarray]:
        """Gradients of the batch-mean cross-entropy with respect to every parameter."""
        if trace.version != self.version:
            raise StaleTraceError("parameters changed since this trace was recorded")
        p, c = self.params, trace.cache
        labels = np.atleast_1d(np.asarray(labels))
        probs = trace.probs
        batch = probs.shape[0]
        if labels.shape != (batch,):
            raise ValueError(f"expected {batch} labels, got shape {labels.shape}")

        dlogits = probs.copy()
        dlogits[np.arange(batch), labels] -= 1.0
        dlogits /= batch
        grads = {
            "w_out": dlogits.T @ c["pooled"],
            "b_out": dlogits.sum(axis=0),
        }
        dpooled = dlogits @ p["w_out"]
        dz = (c["m"] / c["count"])[:, :, None] * dpooled[:, None, :]
        if self.config.encoder == "attn":
            dx = self._attn_backward(dz, c, grads)
        else:
            dx = dz
        g_embed = np.zeros_like(p["embed"])
        np.add.at(g_embed, trace.tokens, dx)
        grads["embed"] = g_embed
        return {name: grads[name] for name in self.shapes}

    def _attn_backward(self, dz, c, grads):
        p = self.params
        x, attn, g, h = c["x"], c["attn"], c["g"], c["h"]
        grads["w_ff2"] = np.einsum("blf,bld->fd", g, dz)
        grads["b_ff2"] = dz.sum(axis=(0, 1))
        du = (dz @ p["w_ff2"].T) * (1.0 - g * g)
        grads["w_ff1"] = np.einsum("bld,blf->df", h, du)
        grads["b_ff1"] = du.sum(axis=(0, 1))
        dh = dz + du @ p["w_ff1"].T

        dattn = dh @ np.swapaxes(c["v"], 1, 2)
        dv = np.swapaxes(attn, 1, 2) @ dh
        dscores = attn * (dattn - np.sum(dattn * attn, axis=-1, keepdims=True)) * c["scale"]
        dq = dscores @ c["k"]
        dk = np.swapaxes(dscores, 1, 2) @ c["q"]
        grads["w_q"] = np.einsum("bld,ble->de", x, dq)
        grads["w_k"] = np.einsum("bld,ble->de", x, dk)
        grads["w_v"] = np.einsum("bld,ble->de", x, dv)
        return dh + dq @ p["w_q"].T + dk @ p["w_k"].T + dv @ p["w_v"].T

    # -- persistence -----------------------------------------------------

    def save(self, path: str | Path, extra: Optional[dict] = None) -> Path:
        path = Path(path)
        meta = {
            "format": CHECKPOINT_FORMAT,
            "vocab_size": self.vocab_size,
            "num_classes": self.num_classes,
            "encoder": asdict(self.config),
            "shapes": {k: list(v) for k, v in self.shapes.items()},
            "extra": extra or {},
        }
        with path.open("wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **self.params)
        return path

    @classmethod
    def load(
        cls,
        path: str | Path,
        vocab_size: Optional[int] = None,
        num_classes: Optional[int] = None,
    ) -> tuple["EncoderModel", dict]:
        """Load a checkpoint, rejecting it if it does not fit the expected vocabulary/class count."""
        try:
            with np.load(Path(path), allow_pickle=False) as data:
                meta = json.loads(str(data["__meta__"]))
                params = {k: data[k] for k in data.files if k != "__meta__"}
        except (OSError, ValueError, KeyError) as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError(f"unsupported checkpoint format {meta.get('format')!r}")
        if vocab_size is not None and meta["vocab_size"] != vocab_size:
            raise CheckpointError(f"checkpoint vocab size {meta['vocab_size']} != dataset {vocab_size}")
        if num_classes is not None and meta["num_classes"] != num_classes:
            raise CheckpointError(f"checkpoint has {meta['num_classes']} classes, expected {num_classes}")
        model = cls(meta["vocab_size"], meta["num_classes"], EncoderConfig(**meta["encoder"]), params=params)
        return model, meta.get("extra", {})


def check_shapes(params: dict[str, np.ndarray], shapes: dict[str, tuple[int, ...]]) -> None:
    if set(params) != set(shapes):
        raise CheckpointError(f"parameter names {sorted(params)} != expected {sorted(shapes)}")
    for name, shape in shapes.items():
        if tuple(np.shape(params[name])) != tuple(shape):
            raise CheckpointError(f"{name}: shape {np.shape(params[name])} != expected {shape}")
