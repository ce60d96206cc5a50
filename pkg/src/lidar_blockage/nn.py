"""Dense-tensor NN kernels with hand-written backward passes.

Tensors are plain row-major numpy arrays. Batched activations use the
channels-last layout (B, H, L, C): H is time, L the angle axis, C the
value channels. Convolutions run as an im2col matrix product, which is
the only way a single CPU core gets through training in reasonable
time; the GEMM operand is rebuilt from the stored C_out x C_in x 3 x 3
weights on every call so in-place weight updates stay safe.

Every op returns (output, cache) and has a matching *_backward taking
(cache, grad_out), exact to the forward map. Float64 everywhere is
supported so the finite-difference checker can run at full precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = float(np.sqrt(1.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass
class ConvLayer:
    """3x3 same-padding convolution, stride 1."""

    weights: np.ndarray          # (C_out, C_in, 3, 3)
    bias: np.ndarray             # (C_out,)
    padding: int = 1
    stride: int = 1

    def __post_init__(self):
        if self.weights.shape[2:] != (3, 3):
            raise ValueError("kernel must be 3x3")
        if self.padding != 1 or self.stride != 1:
            raise ValueError("only padding 1, stride 1 is supported")

    def wmat(self, dtype) -> np.ndarray:
        """Weights as a (9*C_in, C_out) GEMM operand, k-order (dy, dx, c).

        Rebuilt on every call: the copy is tiny next to the GEMM it
        feeds, and recomputing keeps in-place weight updates safe.
        """
        return np.ascontiguousarray(
            self.weights.transpose(2, 3, 1, 0).reshape(-1, self.weights.shape[0]),
            dtype=dtype)

    def wmat_back(self, dtype) -> np.ndarray:
        """Flipped weights as a (9*C_out, C_in) operand.

        The input gradient of a same-padded correlation is itself a
        same-padded correlation of grad_out with the kernel flipped in
        both spatial axes, which lets backward reuse the forward's
        im2col path instead of nine strided scatter-adds.
        """
        flipped = self.weights[:, :, ::-1, ::-1]
        return np.ascontiguousarray(
            flipped.transpose(2, 3, 0, 1).reshape(-1, self.weights.shape[1]),
            dtype=dtype)


def init_conv(c_in: int, c_out: int, rng: np.random.Generator,
              dtype=np.float32) -> ConvLayer:
    fan_in = c_in * 9
    return ConvLayer(weights=_uniform(rng, (c_out, c_in, 3, 3), fan_in, dtype),
                     bias=_uniform(rng, (c_out,), fan_in, dtype))


@dataclass
class PoolLayer:
    """Non-overlapping max pool; stride equals the kernel."""

    kernel: tuple[int, int]


@dataclass
class DenseLayer:
    weights: np.ndarray          # (out, in)
    bias: np.ndarray             # (out,)


def init_dense(n_in: int, n_out: int, rng: np.random.Generator,
               dtype=np.float32) -> DenseLayer:
    return DenseLayer(weights=_uniform(rng, (n_out, n_in), n_in, dtype),
                      bias=_uniform(rng, (n_out,), n_in, dtype))


# --- convolution ----------------------------------------------------------

def _im2col(x: np.ndarray) -> np.ndarray:
    """(B, H, W, C) -> (B, H, W, 9, C) patch tensor, k-order (dy, dx, c).

    One strided gather through sliding_window_view beats nine separate
    shifted copies by more than 2x on this memory-bound workload.
    """
    b, h, w, c = x.shape
    xp = np.zeros((b, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1:h + 1, 1:w + 1, :] = x
    view = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    return np.ascontiguousarray(
        view.transpose(0, 1, 2, 4, 5, 3)).reshape(b, h, w, 9, c)


def conv2d(layer: ConvLayer, x: np.ndarray):
    """Cross-correlate (B, H, L, C_in) -> (B, H, L, C_out)."""
    if x.ndim != 4 or x.shape[3] != layer.weights.shape[1]:
        raise ValueError(f"expected (B, H, L, {layer.weights.shape[1]}) input, "
                         f"got {x.shape}")
    b, h, w, ci = x.shape
    co = layer.weights.shape[0]
    cols = _im2col(x)
    out = cols.reshape(b * h * w, 9 * ci) @ layer.wmat(x.dtype)
    out += layer.bias.astype(x.dtype)
    return out.reshape(b, h, w, co), cols


def conv2d_backward(layer: ConvLayer, cache, grad_out: np.ndarray):
    cols = cache
    b, h, w, _, ci = cols.shape
    co = layer.weights.shape[0]
    g2 = np.ascontiguousarray(grad_out, dtype=cols.dtype).reshape(b * h * w, co)
    grad_b = g2.sum(axis=0)
    gw_mat = cols.reshape(b * h * w, 9 * ci).T @ g2           # (9*ci, co)
    grad_w = np.ascontiguousarray(
        gw_mat.reshape(3, 3, ci, co).transpose(3, 2, 0, 1))
    gcols = _im2col(grad_out.astype(cols.dtype, copy=False))
    grad_in = (gcols.reshape(b * h * w, 9 * co)
               @ layer.wmat_back(cols.dtype)).reshape(b, h, w, ci)
    return grad_in, grad_w, grad_b


# --- pointwise and pooling ------------------------------------------------

def relu(x: np.ndarray):
    out = np.maximum(x, 0)
    return out, x > 0


def relu_backward(cache, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * cache


def maxpool2d(layer: PoolLayer, x: np.ndarray):
    """Max over non-overlapping (k_h, k_w) windows; ties take the first."""
    kh, kw = layer.kernel
    b, h, w, c = x.shape
    if h % kh or w % kw:
        raise ValueError(f"spatial dims {h}x{w} not divisible by pool {kh}x{kw}")
    ho, wo = h // kh, w // kw
    r = x.reshape(b, ho, kh, wo, kw, c).transpose(0, 1, 3, 5, 2, 4)
    rr = np.ascontiguousarray(r).reshape(b, ho, wo, c, kh * kw)
    idx = rr.argmax(axis=-1)
    out = np.take_along_axis(rr, idx[..., None], axis=-1)[..., 0]
    return out, (idx, (b, h, w, c))


def maxpool2d_backward(layer: PoolLayer, cache, grad_out: np.ndarray) -> np.ndarray:
    kh, kw = layer.kernel
    idx, (b, h, w, c) = cache
    ho, wo = h // kh, w // kw
    gr = np.zeros((b, ho, wo, c, kh * kw), dtype=grad_out.dtype)
    np.put_along_axis(gr, idx[..., None], grad_out[..., None], axis=-1)
    return gr.reshape(b, ho, wo, c, kh, kw).transpose(0, 1, 4, 2, 5, 3
                                                      ).reshape(b, h, w, c)


def dense(layer: DenseLayer, x: np.ndarray):
    """Affine map on (B, in) or (in,) inputs."""
    if x.shape[-1] != layer.weights.shape[1]:
        raise ValueError(f"expected input length {layer.weights.shape[1]}, "
                         f"got {x.shape[-1]}")
    w = layer.weights.astype(x.dtype, copy=False)
    return x @ w.T + layer.bias.astype(x.dtype, copy=False), x


def dense_backward(layer: DenseLayer, cache, grad_out: np.ndarray):
    x = cache
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    g2 = grad_out[None, :] if single else grad_out
    grad_w = g2.T @ x2
    grad_b = g2.sum(axis=0)
    grad_x = g2 @ layer.weights.astype(x.dtype, copy=False)
    return grad_x[0] if single else grad_x, grad_w, grad_b


def dropout(x: np.ndarray, rate: float, mode: str,
            rng: np.random.Generator | None = None):
    """Inverted dropout: train scales survivors by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("rate must be in [0, 1)")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    if mode == "eval" or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    scale = 1.0 / (1.0 - rate)
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) * x.dtype.type(scale)
    return x * mask, mask


def dropout_backward(cache, grad_out: np.ndarray) -> np.ndarray:
    return grad_out if cache is None else grad_out * cache


def softmax_ce(logits: np.ndarray, label):
    """Stabilized softmax + cross-entropy.

    Accepts a single (K,) logit vector with an integer label, or a
    (B, K) batch with a (B,) label vector; the batch form returns the
    mean loss and gradients scaled by 1/B so they are the gradients of
    that mean.
    """
    single = logits.ndim == 1
    z = logits[None, :] if single else logits
    y = np.atleast_1d(np.asarray(label, dtype=np.int64))
    shifted = z - z.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    p = expz / expz.sum(axis=1, keepdims=True)
    n = len(y)
    eps = np.finfo(p.dtype).tiny
    loss = float(-np.log(np.maximum(p[np.arange(n), y], eps)).mean())
    grad = p.copy()
    grad[np.arange(n), y] -= 1
    grad /= n
    if single:
        return loss, p[0], grad[0]
    return loss, p, grad


# --- optimizer --------------------------------------------------------------

@dataclass
class OptimizerState:
    """Adaptive-moment state; one (m, v) pair per parameter tensor."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def init_optimizer(params: list[np.ndarray], lr: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> OptimizerState:
    return OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                          m=[np.zeros_like(p) for p in params],
                          v=[np.zeros_like(p) for p in params])


def optimizer_step(state: OptimizerState, params: list[np.ndarray],
                   grads: list[np.ndarray]) -> list[np.ndarray]:
    """One bias-corrected adaptive-moment update, applied in place."""
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ValueError("params, grads and optimizer state must align")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# --- verification -----------------------------------------------------------

def gradient_check(model, x: np.ndarray, label, per_layer: int = 200,
                   rng: np.random.Generator | None = None) -> float:
    """Max relative error between analytic and central-difference grads.

    `model` must expose parameters() -> list of (name, tensor) and
    loss_grads(x, label) -> (loss, {name: grad}); names share a layer
    prefix before the first dot, and at least `per_layer` coordinates
    are probed per layer (all of them on small layers). Run this on a
    float64 model with dropout disabled, else finite differences see
    noise rather than the gradient.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    _, grads = model.loss_grads(x, label)
    by_layer: dict[str, list] = {}
    for name, param in model.parameters():
        by_layer.setdefault(name.split(".")[0], []).append((name, param))

    worst = 0.0
    for names in by_layer.values():
        sizes = np.array([p.size for _, p in names])
        total = int(sizes.sum())
        count = min(per_layer, total)
        picks = rng.choice(total, size=count, replace=False)
        bounds = np.cumsum(sizes)
        for flat in np.sort(picks):
            which = int(np.searchsorted(bounds, flat, side="right"))
            name, param = names[which]
            offset = flat - (bounds[which] - sizes[which])
            idx = np.unravel_index(offset, param.shape)
            theta = param[idx]
            h = 1e-5 * max(1.0, abs(float(theta)))
            param[idx] = theta + h
            lo_plus, _ = model.loss_grads(x, label)
            param[idx] = theta - h
            lo_minus, _ = model.loss_grads(x, label)
            param[idx] = theta
            numeric = (lo_plus - lo_minus) / (2 * h)
            analytic = float(grads[name][idx])
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
            worst = max(worst, rel)
    return worst
