"""From-scratch transformer encoder forward pass with per-block map recording.

Implements the standard pre-norm encoder: patch embedding, position
embeddings, an optional class token, and L blocks of multi-head scaled
dot-product self-attention plus an MLP, all in plain numpy (float64).
For every block the trace keeps two spatial maps with the class row dropped:
the attention module's output after its projection but before the residual
addition (attn_out), and the token state right after that residual addition
(feat_resid).

No training: weights are either seeded Gaussian init or loaded from a tensor
file set, which is enough because random linear maps preserve the token
similarity structure the downstream metrics measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import mapio
from .errors import NumericError, ShapeError

LN_EPS = 1e-6
INIT_STD = 0.02


@dataclass
class ModelConfig:
    patch_size: int = 16
    embed_dim: int = 64
    heads: int = 4
    blocks: int = 4
    mlp_ratio: int = 4
    use_cls_token: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.embed_dim % self.heads != 0:
            raise ShapeError(
                f"embed_dim {self.embed_dim} not divisible by heads {self.heads}"
            )
        if self.blocks < 1:
            raise ShapeError("need at least one block")
        if self.patch_size < 1:
            raise ShapeError("patch_size must be >= 1")

    def to_dict(self) -> dict:
        return {
            "patch_size": self.patch_size, "embed_dim": self.embed_dim,
            "heads": self.heads, "blocks": self.blocks, "mlp_ratio": self.mlp_ratio,
            "use_cls_token": self.use_cls_token, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        cfg = cls(**{k: doc[k] for k in cls().to_dict() if k in doc})
        cfg.validate()
        return cfg


@dataclass
class BlockWeights:
    ln1_scale: np.ndarray
    ln1_shift: np.ndarray
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    ln2_scale: np.ndarray
    ln2_shift: np.ndarray
    w_mlp1: np.ndarray
    b_mlp1: np.ndarray
    w_mlp2: np.ndarray
    b_mlp2: np.ndarray


@dataclass
class Weights:
    patch_w: np.ndarray          # (3 * patch^2, d)
    patch_b: np.ndarray          # (d,)
    pos_embed: np.ndarray        # (N + cls, d)
    cls_embed: np.ndarray | None
    blocks: list[BlockWeights] = field(default_factory=list)

    def check(self, config: ModelConfig, num_patches: int) -> None:
        d = config.embed_dim
        expect_rows = num_patches + (1 if config.use_cls_token else 0)
        if self.patch_w.shape != (3 * config.patch_size**2, d):
            raise ShapeError(f"patch embedding shape {self.patch_w.shape} mismatch")
        if self.pos_embed.shape != (expect_rows, d):
            raise ShapeError(
                f"position embedding rows {self.pos_embed.shape[0]}, expected {expect_rows}"
            )
        if config.use_cls_token and (self.cls_embed is None or self.cls_embed.shape != (d,)):
            raise ShapeError("missing or misshaped cls embedding")
        if len(self.blocks) != config.blocks:
            raise ShapeError(f"{len(self.blocks)} block weight sets, expected {config.blocks}")
        hidden = d * config.mlp_ratio
        for i, b in enumerate(self.blocks):
            for name, arr, shape in (
                ("wq", b.wq, (d, d)), ("wk", b.wk, (d, d)), ("wv", b.wv, (d, d)),
                ("wo", b.wo, (d, d)), ("w_mlp1", b.w_mlp1, (d, hidden)),
                ("w_mlp2", b.w_mlp2, (hidden, d)),
            ):
                if arr.shape != shape:
                    raise ShapeError(f"block {i} {name} shape {arr.shape}, expected {shape}")


def init_weights(config: ModelConfig, num_patches: int) -> Weights:
    """Seeded Gaussian(0, 0.02) init; biases zero, norms identity."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    d = config.embed_dim
    hidden = d * config.mlp_ratio

    def g(*shape):
        return rng.standard_normal(shape) * INIT_STD

    rows = num_patches + (1 if config.use_cls_token else 0)
    blocks = [
        BlockWeights(
            ln1_scale=np.ones(d), ln1_shift=np.zeros(d),
            wq=g(d, d), bq=np.zeros(d), wk=g(d, d), bk=np.zeros(d),
            wv=g(d, d), bv=np.zeros(d), wo=g(d, d), bo=np.zeros(d),
            ln2_scale=np.ones(d), ln2_shift=np.zeros(d),
            w_mlp1=g(d, hidden), b_mlp1=np.zeros(hidden),
            w_mlp2=g(hidden, d), b_mlp2=np.zeros(d),
        )
        for _ in range(config.blocks)
    ]
    return Weights(
        patch_w=g(3 * config.patch_size**2, d),
        patch_b=np.zeros(d),
        pos_embed=g(rows, d),
        cls_embed=g(d) if config.use_cls_token else None,
        blocks=blocks,
    )


# -- core ops ---------------------------------------------------------------

def patchify(image: np.ndarray, patch_size: int) -> np.ndarray:
    """Split an H x W x 3 image into flattened row-major patches (N x 3p^2)."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"expected H x W x 3 image, got {image.shape}")
    h, w, _ = image.shape
    p = patch_size
    if h % p or w % p:
        raise ShapeError(f"image {h}x{w} not divisible by patch size {p}")
    gh, gw = h // p, w // p
    patches = image.reshape(gh, p, gw, p, 3).transpose(0, 2, 1, 3, 4)
    return patches.reshape(gh * gw, p * p * 3)


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray,
              return_weights: bool = False):
    """Scaled dot-product attention: rowwise softmax(QK^T / sqrt(d_k)) V.

    Softmax uses rowwise max subtraction for stability; every weight row
    sums to 1 and the output rows are convex combinations of V rows.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ShapeError("attention expects 2-D Q, K, V")
    if not (q.shape[0] == k.shape[0] == v.shape[0]):
        raise ShapeError(
            f"row counts differ: Q {q.shape[0]}, K {k.shape[0]}, V {v.shape[0]}"
        )
    if q.shape[1] != k.shape[1] or q.shape[1] < 1:
        raise ShapeError(f"Q/K width mismatch: {q.shape[1]} vs {k.shape[1]}")
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(k)) and np.all(np.isfinite(v))):
        raise NumericError("non-finite attention inputs")
    scores = q @ k.T / math.sqrt(q.shape[1])
    scores -= scores.max(axis=1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=1, keepdims=True)
    out = weights @ v
    return (out, weights) if return_weights else out


def layer_norm(x: np.ndarray, scale: np.ndarray, shift: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + LN_EPS) * scale + shift


def gelu(x: np.ndarray) -> np.ndarray:
    # tanh approximation, constants sqrt(2/pi) and 0.044715
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


def multi_head_attention(x: np.ndarray, b: BlockWeights, heads: int) -> np.ndarray:
    """Project to Q/K/V, run per-head attention, concatenate, project out."""
    d = x.shape[1]
    dk = d // heads
    q = x @ b.wq + b.bq
    k = x @ b.wk + b.bk
    v = x @ b.wv + b.bv
    parts = [
        attention(q[:, i * dk:(i + 1) * dk], k[:, i * dk:(i + 1) * dk],
                  v[:, i * dk:(i + 1) * dk])
        for i in range(heads)
    ]
    return np.concatenate(parts, axis=1) @ b.wo + b.bo


def encoder_block(tokens: np.ndarray, b: BlockWeights, heads: int):
    """Pre-norm block: x + MHSA(LN(x)), then + MLP(LN(.)).

    Returns (new_tokens, attn_out_tokens, post_attention_residual_tokens).
    """
    attn_out = multi_head_attention(layer_norm(tokens, b.ln1_scale, b.ln1_shift), b, heads)
    after_attn = tokens + attn_out
    mlp_in = layer_norm(after_attn, b.ln2_scale, b.ln2_shift)
    mlp_out = gelu(mlp_in @ b.w_mlp1 + b.b_mlp1) @ b.w_mlp2 + b.b_mlp2
    return after_attn + mlp_out, attn_out, after_attn


@dataclass
class ModelTrace:
    grid: tuple[int, int]
    attn_out: list[np.ndarray] = field(default_factory=list)   # per block, H x W x d
    feat_resid: list[np.ndarray] = field(default_factory=list)


def forward(image: np.ndarray, config: ModelConfig, weights: Weights,
            record: bool = True) -> ModelTrace:
    """Full forward pass over one image (float values in [0, 1])."""
    config.validate()
    patches = patchify(image, config.patch_size)
    n = patches.shape[0]
    gh = image.shape[0] // config.patch_size
    gw = image.shape[1] // config.patch_size
    weights.check(config, n)

    tokens = patches @ weights.patch_w + weights.patch_b
    if config.use_cls_token:
        tokens = np.vstack([weights.cls_embed[None, :], tokens])
    tokens = tokens + weights.pos_embed

    cls_rows = 1 if config.use_cls_token else 0
    trace = ModelTrace(grid=(gh, gw))
    for i, b in enumerate(weights.blocks):
        tokens, attn_out, after_attn = encoder_block(tokens, b, config.heads)
        if not np.all(np.isfinite(tokens)):
            raise NumericError(f"non-finite activations in block {i}")
        if record:
            trace.attn_out.append(
                attn_out[cls_rows:].reshape(gh, gw, config.embed_dim)
            )
            trace.feat_resid.append(
                after_attn[cls_rows:].reshape(gh, gw, config.embed_dim)
            )
    return trace


# -- weight file sets ----------------------------------------------------------

def weights_to_tensors(weights: Weights) -> dict[str, np.ndarray]:
    tensors = {
        "patch_embed.weight": weights.patch_w,
        "patch_embed.bias": weights.patch_b,
        "pos_embed": weights.pos_embed,
    }
    if weights.cls_embed is not None:
        tensors["cls_embed"] = weights.cls_embed
    for i, b in enumerate(weights.blocks):
        for name in ("ln1_scale", "ln1_shift", "wq", "bq", "wk", "bk", "wv", "bv",
                     "wo", "bo", "ln2_scale", "ln2_shift",
                     "w_mlp1", "b_mlp1", "w_mlp2", "b_mlp2"):
            tensors[f"block{i}.{name}"] = getattr(b, name)
    return tensors


def save_weights(weights: Weights, out_dir) -> None:
    mapio.save_tensors(weights_to_tensors(weights), out_dir)


def load_weights(index_path, config: ModelConfig) -> Weights:
    tensors = {k: np.asarray(v, dtype=np.float64)
               for k, v in mapio.load_tensors(index_path).items()}
    blocks = []
    for i in range(config.blocks):
        kwargs = {}
        for name in ("ln1_scale", "ln1_shift", "wq", "bq", "wk", "bk", "wv", "bv",
                     "wo", "bo", "ln2_scale", "ln2_shift",
                     "w_mlp1", "b_mlp1", "w_mlp2", "b_mlp2"):
            key = f"block{i}.{name}"
            if key not in tensors:
                raise ShapeError(f"weight set missing {key}")
            kwargs[name] = tensors[key]
        blocks.append(BlockWeights(**kwargs))
    return Weights(
        patch_w=tensors["patch_embed.weight"],
        patch_b=tensors["patch_embed.bias"],
        pos_embed=tensors["pos_embed"],
        cls_embed=tensors.get("cls_embed"),
        blocks=blocks,
    )
