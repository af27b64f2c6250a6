"""Transformer encoder with a density-matrix head, implemented directly in
numpy: batched forward pass, exact analytic backward pass, initialization.

Architecture: learned token + position embeddings, a stack of Pre-LN
encoder layers (multi-head self-attention, then a two-layer ReLU FFN, each
wrapped as x += Dropout(SubBlock(LN(x)))), no final LayerNorm.  The hidden
state at the prepended [CLS] position feeds a linear head producing 32
reals, reinterpreted as a complex 4x4 matrix A (row-major, consecutive
(real, imag) pairs).  The output density matrix is

    rho = (1 - eps) * A A^dag / Tr(A A^dag) + eps * I/4,

Hermitian, trace-1 and with eigenvalues >= eps/4 by construction.

Parameters live in a plain dict keyed by dotted names; ``param_names`` fixes
the traversal order used by checkpoints and the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure, ShapeMismatch, UnknownSymbol

LN_EPS = 1e-5
INIT_SCALE = 0.02

CLS_TOKEN = 0
TOKEN_PLUS = 1
TOKEN_MINUS = 2

# (hidden_dim, ffn_dim, num_layers) for each named size
PRESETS = {
    "20K": (32, 64, 2),
    "70K": (64, 128, 2),
    "270K": (128, 256, 2),
    "540K": (128, 256, 4),
}


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int
    ffn_dim: int
    num_layers: int
    max_seq_len: int
    num_heads: int = 4
    dropout_rate: float = 0.1
    attn_dropout_rate: float = 0.1
    epsilon_mix: float = 1e-4
    vocab_size: int = 3

    def __post_init__(self):
        if self.hidden_dim % self.num_heads:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by {self.num_heads} heads"
            )

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads


def preset_config(name: str, max_seq_len: int, **overrides) -> ModelConfig:
    d_h, d_f, n_l = PRESETS[name]
    return ModelConfig(d_h, d_f, n_l, max_seq_len, **overrides)


def tokenize(env_outcomes) -> np.ndarray:
    """[CLS] followed by one token per environment outcome: +1 -> 1, -1 -> 2."""
    tokens = [CLS_TOKEN]
    for value in env_outcomes:
        if value == 1:
            tokens.append(TOKEN_PLUS)
        elif value == -1:
            tokens.append(TOKEN_MINUS)
        else:
            raise UnknownSymbol(f"environment outcome {value!r} is not +-1")
    return np.array(tokens, dtype=np.int64)


def tokenize_batch(env_outcome_rows) -> np.ndarray:
    rows = np.asarray(env_outcome_rows, dtype=np.int64)
    if rows.ndim == 1:
        # a bare 1-d argument is one sequence; an empty list is zero of them
        rows = rows[None, :] if rows.size else rows.reshape(0, 0)
    if not np.isin(rows, (1, -1)).all():
        raise UnknownSymbol("environment outcomes must be +-1")
    out = np.empty((rows.shape[0], rows.shape[1] + 1), dtype=np.int64)
    out[:, 0] = CLS_TOKEN
    out[:, 1:] = np.where(rows == 1, TOKEN_PLUS, TOKEN_MINUS)
    return out


def param_names(config: ModelConfig) -> list[str]:
    names = ["token_embedding", "position_embedding"]
    for i in range(config.num_layers):
        p = f"layers.{i}."
        names += [p + "ln1.gain", p + "ln1.bias"]
        for proj in ("q", "k", "v", "out"):
            names += [p + f"attn.{proj}.weight", p + f"attn.{proj}.bias"]
        names += [p + "ln2.gain", p + "ln2.bias"]
        names += [p + "ffn.w1.weight", p + "ffn.w1.bias",
                  p + "ffn.w2.weight", p + "ffn.w2.bias"]
    names += ["head.weight", "head.bias"]
    return names


def is_decayable(name: str) -> bool:
    """Weight decay applies to all weights, never to biases or LayerNorm."""
    return not name.endswith("bias") and ".ln" not in name


def init_params(config: ModelConfig, rng: np.random.Generator,
                dtype=np.float64) -> dict[str, np.ndarray]:
    """Weights ~ N(0, 0.02^2); biases zero except the head bias (kept random
    so a fresh model never emits the degenerate A = 0).

    ``dtype`` selects the training precision; values are always drawn in
    float64 and cast, so float32 parameters start from the same numbers.
    """
    d, f = config.hidden_dim, config.ffn_dim
    shapes = {
        "token_embedding": (config.vocab_size, d),
        "position_embedding": (config.max_seq_len, d),
        "head.weight": (d, 32),
    }
    for i in range(config.num_layers):
        p = f"layers.{i}."
        for proj in ("q", "k", "v", "out"):
            shapes[p + f"attn.{proj}.weight"] = (d, d)
            shapes[p + f"attn.{proj}.bias"] = (d,)
        shapes[p + "ffn.w1.weight"] = (d, f)
        shapes[p + "ffn.w1.bias"] = (f,)
        shapes[p + "ffn.w2.weight"] = (f, d)
        shapes[p + "ffn.w2.bias"] = (d,)
    params = {}
    for name in param_names(config):
        if name.endswith("ln1.gain") or name.endswith("ln2.gain"):
            params[name] = np.ones(config.hidden_dim)
        elif name.endswith("ln1.bias") or name.endswith("ln2.bias"):
            params[name] = np.zeros(config.hidden_dim)
        elif name == "head.bias":
            params[name] = rng.normal(scale=INIT_SCALE, size=32)
        elif name.endswith(".bias"):
            params[name] = np.zeros(shapes[name])
        else:
            params[name] = rng.normal(scale=INIT_SCALE, size=shapes[name])
    return {k: v.astype(dtype) for k, v in params.items()}


def parameter_count(params: dict[str, np.ndarray]) -> int:
    return sum(p.size for p in params.values())


def pack_head_bias(a_matrix: np.ndarray) -> np.ndarray:
    """32 reals encoding A row-major as (real, imag) pairs."""
    flat = np.asarray(a_matrix, dtype=complex).reshape(16)
    out = np.empty(32)
    out[0::2] = flat.real
    out[1::2] = flat.imag
    return out


def constant_output_params(config: ModelConfig, a_matrix: np.ndarray | None = None,
                           rng: np.random.Generator | None = None) -> dict[str, np.ndarray]:
    """Diagnostic parameters whose output ignores the input: zero head weight,
    head bias packing A (default identity, i.e. rho = I/4 exactly)."""
    params = init_params(config, rng if rng is not None else np.random.default_rng(0))
    params["head.weight"] = np.zeros_like(params["head.weight"])
    params["head.bias"] = pack_head_bias(np.eye(4) if a_matrix is None else a_matrix)
    return params


def generate_dropout_masks(config: ModelConfig, n: int, seq_len: int,
                           rng: np.random.Generator) -> list[dict[str, np.ndarray]]:
    """Fresh inverted-dropout masks for a whole batch, one dict per layer.

    Masks are float32 arrays already scaled by 1/keep, so applying dropout is
    a single multiply.  Drawn for the full batch up front so the masks a
    record sees do not depend on how the batch is later chunked.
    """
    d, h = config.hidden_dim, config.num_heads
    masks = []
    for _ in range(config.num_layers):
        layer = {}
        for key, shape, rate in (
            ("attn", (n, h, seq_len, seq_len), config.attn_dropout_rate),
            ("res1", (n, seq_len, d), config.dropout_rate),
            ("res2", (n, seq_len, d), config.dropout_rate),
        ):
            keep = 1.0 - rate
            # floor(u + keep) is 1 with probability keep for u ~ U[0, 1)
            m = rng.random(shape, dtype=np.float32)
            m += np.float32(keep)
            np.floor(m, out=m)
            m *= np.float32(1.0 / keep)
            layer[key] = m
        masks.append(layer)
    return masks


def slice_masks(masks, start: int, stop: int):
    if masks is None:
        return None
    return [{k: v[start:stop] for k, v in layer.items()} for layer in masks]


def _layer_norm(x, gain, bias):
    mu = x.mean(-1, keepdims=True)
    xhat = x - mu
    var = np.einsum("nsd,nsd->ns", xhat, xhat)[..., None] / x.shape[-1]
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat *= inv
    h = xhat * gain
    h += bias
    return h, xhat, inv


def _qkv_weights(params, prefix):
    w = np.concatenate([params[prefix + f"attn.{p}.weight"] for p in ("q", "k", "v")], axis=1)
    b = np.concatenate([params[prefix + f"attn.{p}.bias"] for p in ("q", "k", "v")])
    return w, b


def forward_batch(params: dict, config: ModelConfig, tokens: np.ndarray, *,
                  masks=None, keep_cache: bool = False):
    """Run the encoder + head on a batch of token rows.

    ``masks`` (from :func:`generate_dropout_masks`) enables train-mode
    inverted dropout; ``None`` is eval mode.  Returns ``(rho, cache)`` with
    ``rho`` of shape (n, 4, 4); ``cache`` is None unless ``keep_cache``.
    """
    tokens = np.asarray(tokens)
    if tokens.ndim != 2:
        raise ShapeMismatch(f"tokens must be 2-d, got shape {tokens.shape}")
    n, s = tokens.shape
    if s > config.max_seq_len:
        raise ShapeMismatch(f"sequence length {s} exceeds max_seq_len {config.max_seq_len}")
    eps = config.epsilon_mix
    nh, dh = config.num_heads, config.head_dim
    scale = 1.0 / np.sqrt(dh)
    eye4 = np.eye(4, dtype=params["token_embedding"].dtype)

    x = params["token_embedding"][tokens] + params["position_embedding"][:s]
    layer_caches = []
    for i in range(config.num_layers):
        p = f"layers.{i}."
        lm = masks[i] if masks is not None else None

        h1, xhat1, inv1 = _layer_norm(x, params[p + "ln1.gain"], params[p + "ln1.bias"])
        wqkv, bqkv = _qkv_weights(params, p)
        qkv = (h1.reshape(n * s, -1) @ wqkv + bqkv).reshape(n, s, 3, nh, dh)
        # contiguous layouts so every batched matmul keeps its second operand
        # contiguous (transposed second operands hit a slow path)
        q = np.ascontiguousarray(qkv[:, :, 0].transpose(0, 2, 1, 3))
        kt = np.ascontiguousarray(qkv[:, :, 1].transpose(0, 2, 3, 1))
        v = np.ascontiguousarray(qkv[:, :, 2].transpose(0, 2, 1, 3))
        logits = q @ kt
        logits *= scale
        logits -= logits.max(-1, keepdims=True)
        np.exp(logits, out=logits)
        logits /= logits.sum(-1, keepdims=True)
        attw = logits
        attw_used = attw * lm["attn"] if lm is not None else attw
        ctx = np.ascontiguousarray((attw_used @ v).transpose(0, 2, 1, 3)).reshape(n, s, -1)
        out = ctx.reshape(n * s, -1) @ params[p + "attn.out.weight"]
        out += params[p + "attn.out.bias"]
        out = out.reshape(n, s, -1)
        if lm is not None:
            out *= lm["res1"]
        x += out

        h2, xhat2, inv2 = _layer_norm(x, params[p + "ln2.gain"], params[p + "ln2.bias"])
        z1 = h2.reshape(n * s, -1) @ params[p + "ffn.w1.weight"]
        z1 += params[p + "ffn.w1.bias"]
        f1 = np.maximum(z1, 0.0)
        f2 = f1 @ params[p + "ffn.w2.weight"]
        f2 += params[p + "ffn.w2.bias"]
        f2 = f2.reshape(n, s, -1)
        if lm is not None:
            f2 *= lm["res2"]
        x += f2

        if keep_cache:
            layer_caches.append({
                "xhat1": xhat1, "inv1": inv1, "h1": h1, "q": q, "v": v,
                "k": np.ascontiguousarray(kt.swapaxes(-1, -2)),
                "vt": np.ascontiguousarray(v.swapaxes(-1, -2)),
                "attw": attw, "ctx": ctx,
                "xhat2": xhat2, "inv2": inv2, "h2": h2, "f1": f1,
                "masks": lm,
            })

    cls = x[:, 0, :]
    raw = cls @ params["head.weight"] + params["head.bias"]
    a = (raw[:, 0::2] + 1j * raw[:, 1::2]).reshape(n, 4, 4)
    rho0 = a @ a.conj().swapaxes(-1, -2)
    tr = np.einsum("nii->n", rho0).real
    if (tr < 1e-30).any():
        bad = int(np.argmax(tr < 1e-30))
        raise NumericalFailure(f"Tr(A A^dag) below 1e-30 at batch index {bad}")
    rho_norm = rho0 / tr[:, None, None]
    rho = (1 - eps) * rho_norm + (eps / 4) * eye4

    cache = None
    if keep_cache:
        cache = {
            "tokens": tokens, "layers": layer_caches, "cls": cls,
            "a": a, "tr": tr, "rho_norm": rho_norm,
        }
    return rho, cache


def forward(params: dict, config: ModelConfig, tokens, mode: str = "eval",
            rng: np.random.Generator | None = None, keep_cache: bool = False):
    """Single-sequence convenience wrapper; train mode draws fresh masks from rng."""
    tokens = np.asarray(tokens, dtype=np.int64)[None, :]
    masks = None
    if mode == "train":
        if rng is None:
            raise ValueError("train mode needs an rng for dropout masks")
        masks = generate_dropout_masks(config, 1, tokens.shape[1], rng)
    elif mode != "eval":
        raise ValueError(f"unknown mode {mode!r}")
    rho, cache = forward_batch(params, config, tokens, masks=masks, keep_cache=keep_cache)
    return rho[0], cache


def _ln_backward(g_y, xhat, inv, gain):
    g_gain = np.einsum("nsd,nsd->d", g_y, xhat)
    g_bias = g_y.sum((0, 1))
    g_xhat = g_y * gain
    m1 = g_xhat.mean(-1, keepdims=True)
    m2 = (g_xhat * xhat).mean(-1, keepdims=True)
    g_xhat -= m1
    g_xhat -= xhat * m2
    g_xhat *= inv
    return g_xhat, g_gain, g_bias


def backward_batch(params: dict, config: ModelConfig, cache: dict,
                   g_rho: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of a real scalar loss with dL = Re Tr(g_rho . d rho).

    Every real parameter is differentiated through the eps-mix, trace
    normalization, A A^dag, head, encoder stack and embeddings; all sums run
    in fixed order so repeated calls are bit-identical.
    """
    tokens = cache["tokens"]
    n, s = tokens.shape
    g_rho = np.asarray(g_rho)
    if g_rho.shape != (n, 4, 4):
        raise ShapeMismatch(f"g_rho shape {g_rho.shape} does not match batch {n}")
    eps = config.epsilon_mix
    nh, dh = config.num_heads, config.head_dim
    d = config.hidden_dim
    scale = 1.0 / np.sqrt(dh)
    dtype = params["token_embedding"].dtype
    grads: dict[str, np.ndarray] = {}

    # head: rho -> rho_norm -> rho0 = A A^dag -> A -> raw 32-vector
    g_n = (1 - eps) * np.asarray(g_rho, dtype=cache["a"].dtype)
    proj = np.einsum("nij,nji->n", g_n, cache["rho_norm"]).real
    g0 = (g_n - proj[:, None, None] * np.eye(4, dtype=dtype)) / cache["tr"][:, None, None]
    w = (g0 + g0.conj().swapaxes(-1, -2)) @ cache["a"]
    g_raw = np.empty((n, 32), dtype=dtype)
    g_raw[:, 0::2] = w.reshape(n, 16).real
    g_raw[:, 1::2] = w.reshape(n, 16).imag
    grads["head.weight"] = cache["cls"].T @ g_raw
    grads["head.bias"] = g_raw.sum(0)

    g_x = np.zeros((n, s, d), dtype=dtype)
    g_x[:, 0, :] = g_raw @ params["head.weight"].T

    for i in reversed(range(config.num_layers)):
        p = f"layers.{i}."
        lc = cache["layers"][i]
        lm = lc["masks"]

        # FFN block: x_out = x_mid + drop(W2 relu(W1 LN2(x_mid) + b1) + b2)
        g_f2 = (g_x * lm["res2"] if lm is not None else g_x.copy()).reshape(n * s, -1)
        f1 = lc["f1"]
        grads[p + "ffn.w2.weight"] = f1.T @ g_f2
        grads[p + "ffn.w2.bias"] = g_f2.sum(0)
        g_z1 = g_f2 @ params[p + "ffn.w2.weight"].T
        g_z1 *= f1 > 0
        h2_flat = lc["h2"].reshape(n * s, -1)
        grads[p + "ffn.w1.weight"] = h2_flat.T @ g_z1
        grads[p + "ffn.w1.bias"] = g_z1.sum(0)
        g_h2 = (g_z1 @ params[p + "ffn.w1.weight"].T).reshape(n, s, -1)
        g_mid, grads[p + "ln2.gain"], grads[p + "ln2.bias"] = _ln_backward(
            g_h2, lc["xhat2"], lc["inv2"], params[p + "ln2.gain"])
        g_x += g_mid

        # attention block: x_mid = x_in + drop(Wo concat(heads) + bo)
        g_out = (g_x * lm["res1"] if lm is not None else g_x.copy()).reshape(n * s, -1)
        grads[p + "attn.out.weight"] = lc["ctx"].reshape(n * s, -1).T @ g_out
        grads[p + "attn.out.bias"] = g_out.sum(0)
        g_ctx = np.ascontiguousarray(
            (g_out @ params[p + "attn.out.weight"].T)
            .reshape(n, s, nh, dh).transpose(0, 2, 1, 3))
        if lm is not None:
            attw_used = lc["attw"] * lm["attn"]
        else:
            attw_used = lc["attw"]
        g_qkv = np.empty((3, n, nh, s, dh), dtype=dtype)
        np.matmul(attw_used.swapaxes(-1, -2), g_ctx, out=g_qkv[2])          # g_v
        g_attw = g_ctx @ lc["vt"]
        if lm is not None:
            g_attw *= lm["attn"]
        g_attw -= (g_attw * lc["attw"]).sum(-1, keepdims=True)
        g_attw *= lc["attw"]                                                # g_logits
        np.matmul(g_attw, lc["k"], out=g_qkv[0])                            # g_q
        np.matmul(g_attw.swapaxes(-1, -2), lc["q"], out=g_qkv[1])           # g_k
        g_qkv[0] *= scale
        g_qkv[1] *= scale
        g_qkv_flat = np.ascontiguousarray(
            g_qkv.transpose(1, 3, 0, 2, 4)).reshape(n * s, 3 * d)
        h1_flat = lc["h1"].reshape(n * s, -1)
        g_w_qkv = h1_flat.T @ g_qkv_flat
        g_b_qkv = g_qkv_flat.sum(0)
        for j, proj_name in enumerate(("q", "k", "v")):
            grads[p + f"attn.{proj_name}.weight"] = g_w_qkv[:, j * d:(j + 1) * d]
            grads[p + f"attn.{proj_name}.bias"] = g_b_qkv[j * d:(j + 1) * d]
        wqkv, _ = _qkv_weights(params, p)
        g_h1 = (g_qkv_flat @ wqkv.T).reshape(n, s, -1)
        g_in, grads[p + "ln1.gain"], grads[p + "ln1.bias"] = _ln_backward(
            g_h1, lc["xhat1"], lc["inv1"], params[p + "ln1.gain"])
        g_x += g_in

    g_tok = np.zeros_like(params["token_embedding"])
    for t in range(config.vocab_size):
        sel = tokens == t
        if sel.any():
            g_tok[t] = g_x[sel].sum(0)
    grads["token_embedding"] = g_tok
    g_pos = np.zeros_like(params["position_embedding"])
    g_pos[:s] = g_x.sum(0)
    grads["position_embedding"] = g_pos
    return {name: grads[name] for name in param_names(config)}
