"""Toy autoregressive scorer and masked preference training.

The model is deliberately small: one layer of causal self-attention over
token embeddings, a hashed point-cloud condition vector added to every
position (and standing in for the start-of-sequence input), and a linear
output head. Forward and reverse passes are written out by hand in numpy so
gradients are exact and checkable against finite differences.

The preference loss compares a policy model against a frozen reference on
ranked pairs. On the winner sequence it rewards probability mass inside the
quality mask; on the loser it penalizes mass outside it:

    loss = -log sigmoid(beta * L_pos - beta * L_neg)
    L_pos = log(|p_policy . m|_1 / |p_reference . m|_1)        on the winner
    L_neg = the same ratio with the complement mask             on the loser

where the vectors hold the per-token realized probabilities, floored at
``epsilon_prob``. With policy equal to reference both ratios vanish and the
loss is exactly ln 2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainError,
    FramingError,
    MaskEmptyError,
    NumericError,
    ParseError,
)

__all__ = [
    "ConditionEmbedding",
    "condition_embedding",
    "ToyARModel",
    "TokenProbs",
    "MDPOConfig",
    "TrainState",
    "forward",
    "next_token_distribution",
    "nll_loss",
    "masked_log_ratio",
    "mdpo_loss_from_probs",
    "mdpo_loss",
    "sgd_update",
    "pretrain_step",
    "mdpo_step",
    "generate",
    "save_checkpoint",
    "load_checkpoint",
]

SEGMENTS = ("embed", "wq", "wk", "wv", "wo", "w_out", "w_cond")
DEFAULT_EPS = 1e-8


# ---------------------------------------------------------------------------
# Condition embedding


@dataclass(frozen=True)
class ConditionEmbedding:
    """Fixed-length summary vector of a conditioning point cloud."""

    vector: tuple

    def as_array(self) -> np.ndarray:
        return np.asarray(self.vector, dtype=np.float64)

    def __len__(self):
        return len(self.vector)


def condition_embedding(points, dim: int = 32, voxels_per_axis: int = 8) -> ConditionEmbedding:
    """Hash voxel occupancy of a point cloud into a ``dim``-long vector.

    Points are clipped to [-1, 1], binned into a coarse voxel grid, and each
    occupied voxel's count lands in bucket ``voxel_id % dim``. The result is
    L2-normalized; an empty cloud gives the zero vector. Deterministic.
    """
    if dim < 1:
        raise DomainError(f"dim must be >= 1, got {dim}")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    vec = np.zeros(dim, dtype=np.float64)
    if len(pts):
        clipped = np.clip(pts, -1.0, 1.0)
        ix = np.minimum(
            ((clipped + 1.0) / 2.0 * voxels_per_axis).astype(np.int64),
            voxels_per_axis - 1,
        )
        voxel_ids = (ix[:, 0] * voxels_per_axis + ix[:, 1]) * voxels_per_axis + ix[:, 2]
        np.add.at(vec, voxel_ids % dim, 1.0)
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec = vec / norm
    return ConditionEmbedding(vector=tuple(float(v) for v in vec))


# ---------------------------------------------------------------------------
# Model


@dataclass
class ToyARModel:
    """Single-layer causal attention scorer with named parameter segments."""

    vocab_size: int
    embed_dim: int = 16
    context: int = 64
    cond_dim: int = 32
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.vocab_size < 2:
            raise DomainError("vocab_size must be >= 2")
        if not self.params:
            self.params = {k: np.zeros(s) for k, s in self.segment_shapes().items()}
        for name, shape in self.segment_shapes().items():
            arr = np.asarray(self.params.get(name), dtype=np.float64)
            if arr.shape != shape:
                raise FramingError(
                    f"segment {name!r} has shape {arr.shape}, expected {shape}"
                )
            self.params[name] = arr

    def segment_shapes(self) -> dict:
        d, v, h = self.embed_dim, self.vocab_size, self.cond_dim
        return {
            "embed": (v, d),
            "wq": (d, d),
            "wk": (d, d),
            "wv": (d, d),
            "wo": (d, d),
            "w_out": (d, v),
            "w_cond": (h, d),
        }

    @classmethod
    def init(cls, vocab_size, embed_dim=16, context=64, cond_dim=32, seed=0, scale=0.1):
        rng = np.random.default_rng(seed)
        model = cls(vocab_size, embed_dim, context, cond_dim)
        model.params = {
            k: scale * rng.standard_normal(s) for k, s in model.segment_shapes().items()
        }
        return model

    def parameter_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.segment_shapes().values())

    def copy(self) -> "ToyARModel":
        return ToyARModel(
            self.vocab_size,
            self.embed_dim,
            self.context,
            self.cond_dim,
            {k: v.copy() for k, v in self.params.items()},
        )

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in SEGMENTS])

    def with_flat(self, flat: np.ndarray) -> "ToyARModel":
        out = self.copy()
        pos = 0
        for k in SEGMENTS:
            size = self.params[k].size
            out.params[k] = flat[pos : pos + size].reshape(self.params[k].shape)
            pos += size
        return out


@dataclass
class TokenProbs:
    """Per-token realized probabilities, floored at the configured epsilon."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)

    def nll(self) -> float:
        return float(-np.log(self.probs).sum())

    def __len__(self):
        return len(self.probs)


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericError("non-finite values", where=name)


def _softmax_rows(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_cache(model: ToyARModel, tokens, cond: np.ndarray):
    """Run the network over [cond, t_1, ..., t_n]; row i scores token i+1."""
    tokens = [int(t) for t in tokens]
    for t in tokens:
        if t < 0 or t >= model.vocab_size:
            raise DomainError(f"token {t} outside vocabulary of {model.vocab_size}")
    n = len(tokens)
    if n + 1 > model.context:
        raise DomainError(
            f"sequence of {n} tokens exceeds the context of {model.context}"
        )
    cond = np.asarray(cond, dtype=np.float64).reshape(-1)
    if cond.shape != (model.cond_dim,):
        raise DomainError(
            f"condition vector has length {cond.shape[0]}, expected {model.cond_dim}"
        )
    for name in SEGMENTS:
        _check_finite(name, model.params[name])

    p = model.params
    d = model.embed_dim
    cvec = cond @ p["w_cond"]
    x = np.tile(cvec, (n + 1, 1))
    if n:
        x[1:] += p["embed"][tokens]

    q = x @ p["wq"]
    k = x @ p["wk"]
    v = x @ p["wv"]
    scores = (q @ k.T) / math.sqrt(d)
    mask = np.triu(np.ones((n + 1, n + 1), dtype=bool), k=1)
    scores = np.where(mask, -np.inf, scores)
    attn = _softmax_rows(scores)
    ctx = attn @ v
    h = x + ctx @ p["wo"]
    logits = h @ p["w_out"]
    _check_finite("logits", logits)
    soft = _softmax_rows(logits)
    return {
        "tokens": tokens,
        "cond": cond,
        "x": x,
        "q": q,
        "k": k,
        "v": v,
        "attn": attn,
        "ctx": ctx,
        "h": h,
        "soft": soft,
    }


def _realized_probs(cache, eps):
    tokens = cache["tokens"]
    if not tokens:
        return np.zeros(0), np.zeros(0, dtype=bool)
    rows = np.arange(len(tokens))
    raw = cache["soft"][rows, tokens]
    floored = raw < eps
    return np.maximum(raw, eps), floored


def forward(model: ToyARModel, tokens, cond, eps: float = DEFAULT_EPS) -> TokenProbs:
    """Probability the model assigns to each realized token, floored at eps."""
    cond = _cond_array(cond)
    cache = _forward_cache(model, tokens, cond)
    probs, _ = _realized_probs(cache, eps)
    return TokenProbs(probs)


def next_token_distribution(model: ToyARModel, tokens, cond) -> np.ndarray:
    """Distribution over the next token given the prefix."""
    cond = _cond_array(cond)
    cache = _forward_cache(model, tokens, cond)
    return cache["soft"][-1].copy()


def _cond_array(cond):
    if isinstance(cond, ConditionEmbedding):
        return cond.as_array()
    return np.asarray(cond, dtype=np.float64).reshape(-1)


def _backward(model: ToyARModel, cache, dprob):
    """Backpropagate d(loss)/d(realized probs) into parameter gradients."""
    p = model.params
    tokens = cache["tokens"]
    n = len(tokens)
    d = model.embed_dim
    soft = cache["soft"]
    grads = {k: np.zeros_like(p[k]) for k in SEGMENTS}
    if n == 0:
        return grads

    dlogits = np.zeros_like(soft)
    rows = np.arange(n)
    # d p_t / d logits = p_t * (onehot_t - soft_row)
    coeff = dprob * soft[rows, tokens]
    dlogits[rows] = -coeff[:, None] * soft[rows]
    dlogits[rows, tokens] += coeff

    h = cache["h"]
    grads["w_out"] = h.T @ dlogits
    dh = dlogits @ p["w_out"].T

    dx = dh.copy()
    dctx = dh @ p["wo"].T
    grads["wo"] = cache["ctx"].T @ dh

    attn = cache["attn"]
    v = cache["v"]
    dattn = dctx @ v.T
    dv = attn.T @ dctx

    # softmax over each row of masked scores
    dscores = attn * (dattn - (attn * dattn).sum(axis=1, keepdims=True))
    q = cache["q"]
    k = cache["k"]
    scale = 1.0 / math.sqrt(d)
    dq = dscores @ k * scale
    dk = dscores.T @ q * scale

    x = cache["x"]
    grads["wq"] = x.T @ dq
    grads["wk"] = x.T @ dk
    grads["wv"] = x.T @ dv
    dx += dq @ p["wq"].T + dk @ p["wk"].T + dv @ p["wv"].T

    np.add.at(grads["embed"], tokens, dx[1:])
    dcvec = dx.sum(axis=0)
    grads["w_cond"] = np.outer(cache["cond"], dcvec)
    for name in SEGMENTS:
        _check_finite(name, grads[name])
    return grads


# ---------------------------------------------------------------------------
# Losses


def nll_loss(model: ToyARModel, tokens, cond, eps: float = DEFAULT_EPS):
    """Negative log likelihood and its gradients for one sequence."""
    cond = _cond_array(cond)
    cache = _forward_cache(model, tokens, cond)
    probs, floored = _realized_probs(cache, eps)
    loss = float(-np.log(probs).sum())
    dprob = -1.0 / probs
    dprob[floored] = 0.0
    grads = _backward(model, cache, dprob)
    return loss, grads


def masked_log_ratio(policy_probs, reference_probs, mask_bits) -> float:
    """log of the ratio of mask-selected probability mass, policy over reference."""
    pol = np.asarray(policy_probs, dtype=np.float64)
    ref = np.asarray(reference_probs, dtype=np.float64)
    m = np.asarray(mask_bits, dtype=np.float64)
    if pol.shape != m.shape or ref.shape != m.shape:
        raise DomainError(
            f"probability and mask lengths disagree: {pol.shape}, {ref.shape}, {m.shape}"
        )
    wsum = float((pol * m).sum())
    rsum = float((ref * m).sum())
    if m.sum() == 0 or rsum == 0.0 or wsum == 0.0:
        raise MaskEmptyError("mask selects no probability mass")
    return math.log(wsum / rsum)


@dataclass(frozen=True)
class MDPOConfig:
    beta: float = 0.1
    epsilon_prob: float = DEFAULT_EPS

    def __post_init__(self):
        if self.beta <= 0:
            raise DomainError(f"beta must be positive, got {self.beta}")
        if not 0 < self.epsilon_prob < 1:
            raise DomainError(f"epsilon_prob must lie in (0, 1), got {self.epsilon_prob}")


def _softplus(z):
    # log(1 + exp(z)) without overflow
    return math.log1p(math.exp(-abs(z))) + max(z, 0.0)


def mdpo_loss_from_probs(
    win_policy,
    win_reference,
    win_mask,
    lose_policy,
    lose_reference,
    lose_mask,
    beta: float,
):
    """Preference loss from already-computed probability vectors.

    Returns (loss, margin) where margin = beta * (L_pos - L_neg).
    """
    win_mask = np.asarray(win_mask, dtype=np.float64)
    lose_mask = np.asarray(lose_mask, dtype=np.float64)
    l_pos = masked_log_ratio(win_policy, win_reference, win_mask)
    l_neg = masked_log_ratio(lose_policy, lose_reference, 1.0 - lose_mask)
    margin = beta * (l_pos - l_neg)
    return _softplus(-margin), margin


def mdpo_loss(model: ToyARModel, reference: ToyARModel, triplet, cond, cfg: MDPOConfig):
    """Preference loss, margin, and policy gradients for one training triplet.

    ``triplet`` needs win_tokens/win_mask/lose_tokens/lose_mask attributes
    (see preference.TrainingTriplet). The reference model is frozen: no
    gradients are returned for it.
    """
    cond = _cond_array(cond)
    eps = cfg.epsilon_prob

    win_cache = _forward_cache(model, triplet.win_tokens, cond)
    lose_cache = _forward_cache(model, triplet.lose_tokens, cond)
    win_pol, win_floor = _realized_probs(win_cache, eps)
    lose_pol, lose_floor = _realized_probs(lose_cache, eps)
    win_ref = forward(reference, triplet.win_tokens, cond, eps).probs
    lose_ref = forward(reference, triplet.lose_tokens, cond, eps).probs

    win_mask = np.asarray(tuple(triplet.win_mask.bits), dtype=np.float64)
    lose_bits = np.asarray(tuple(triplet.lose_mask.bits), dtype=np.float64)
    lose_comp = 1.0 - lose_bits

    loss, margin = mdpo_loss_from_probs(
        win_pol, win_ref, win_mask, lose_pol, lose_ref, lose_bits, cfg.beta
    )

    # d loss / d margin = sigmoid(margin) - 1
    dmargin = 1.0 / (1.0 + math.exp(-margin)) - 1.0
    dl_pos = dmargin * cfg.beta
    dl_neg = -dmargin * cfg.beta

    dwin = dl_pos * win_mask / float((win_pol * win_mask).sum())
    dlose = dl_neg * lose_comp / float((lose_pol * lose_comp).sum())
    dwin[win_floor] = 0.0
    dlose[lose_floor] = 0.0

    gw = _backward(model, win_cache, dwin)
    gl = _backward(model, lose_cache, dlose)
    grads = {k: gw[k] + gl[k] for k in SEGMENTS}
    return loss, margin, grads


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainState:
    model: ToyARModel
    step: int = 0


def sgd_update(model: ToyARModel, grads: dict, lr: float) -> ToyARModel:
    """One plain gradient descent step; returns a new model."""
    out = model.copy()
    for k in SEGMENTS:
        out.params[k] = model.params[k] - lr * grads[k]
    return out


def _mean_grads(grad_list):
    n = len(grad_list)
    return {k: sum(g[k] for g in grad_list) / n for k in SEGMENTS}


def pretrain_step(state: TrainState, batch, lr: float, eps: float = DEFAULT_EPS):
    """Full-batch NLL descent. ``batch`` holds (tokens, cond) pairs.

    Returns (new_state, mean_loss).
    """
    if not batch:
        raise DomainError("empty batch")
    losses = []
    grads = []
    for tokens, cond in batch:
        loss, g = nll_loss(state.model, tokens, cond, eps)
        losses.append(loss)
        grads.append(g)
    new_model = sgd_update(state.model, _mean_grads(grads), lr)
    return TrainState(new_model, state.step + 1), float(np.mean(losses))


def mdpo_step(state: TrainState, reference: ToyARModel, batch, lr: float, cfg: MDPOConfig):
    """Full-batch preference descent. ``batch`` holds (triplet, cond) pairs.

    Returns (new_state, mean_loss, mean_margin).
    """
    if not batch:
        raise DomainError("empty batch")
    losses = []
    margins = []
    grads = []
    for triplet, cond in batch:
        loss, margin, g = mdpo_loss(state.model, reference, triplet, cond, cfg)
        losses.append(loss)
        margins.append(margin)
        grads.append(g)
    new_model = sgd_update(state.model, _mean_grads(grads), lr)
    return TrainState(new_model, state.step + 1), float(np.mean(losses)), float(np.mean(margins))


def generate(
    model: ToyARModel,
    cond,
    max_tokens: int,
    seed: int,
    end_token: int | None = None,
):
    """Sample tokens autoregressively with a sliding context window."""
    if max_tokens < 0:
        raise DomainError(f"max_tokens must be >= 0, got {max_tokens}")
    cond = _cond_array(cond)
    rng = np.random.default_rng(seed)
    out = []
    window = model.context - 1
    for _ in range(max_tokens):
        tail = out[-window:] if window > 0 else []
        dist = next_token_distribution(model, tail, cond)
        tok = int(rng.choice(model.vocab_size, p=dist))
        out.append(tok)
        if end_token is not None and tok == end_token:
            break
    return out


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(model: ToyARModel, path) -> None:
    """Write the model as JSON with full float64 round-trip precision."""
    doc = {
        "arch": {
            "vocab_size": model.vocab_size,
            "embed_dim": model.embed_dim,
            "context": model.context,
            "cond_dim": model.cond_dim,
        },
        "segments": {k: model.params[k].tolist() for k in SEGMENTS},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path) -> ToyARModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ParseError(f"bad checkpoint JSON: {e}", path=path) from None
    try:
        arch = doc["arch"]
        model = ToyARModel(
            vocab_size=int(arch["vocab_size"]),
            embed_dim=int(arch["embed_dim"]),
            context=int(arch["context"]),
            cond_dim=int(arch["cond_dim"]),
            params={k: np.asarray(doc["segments"][k], dtype=np.float64) for k in SEGMENTS},
        )
    except KeyError as e:
        raise ParseError(f"checkpoint missing field {e}", path=path) from None
    return model
