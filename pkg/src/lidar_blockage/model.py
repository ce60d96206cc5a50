"""The blockage-prediction network: two conv stacks feeding a tiny classifier.

The architecture is fixed up to the input width. Four 3x3 convolutions
(2-8, 8-16, 16-16, 16-32 channels) are arranged as two stacks of two
conv+relu blocks, each stack closed by a max-pool whose kernel is chosen
per input variant so that both variants land on a 4 x 4 x 32 feature map.
That flattens to 512 features, goes through dropout, and a single dense
layer produces two logits: link stays clear vs. link gets blocked.

Training is plain mini-batch cross-entropy with the Adam update from
`nn`, single-threaded and fully reproducible: the model seed drives one
SeedSequence whose two children initialize the weights and the
shuffle/dropout stream, so the same seed replays the same run bit for
bit.
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dataset import VARIANT_WIDTHS, ObservationWindow

log = logging.getLogger(__name__)

# (C_in, C_out) per conv, in forward order. Fixed: the capacity of the
# net is part of its identity, only the pool kernels track the variant.
CONV_CHANNELS = ((2, 8), (8, 16), (16, 16), (16, 32))

# Pool kernels (over time, over angle) per stack, keyed by variant.
POOL_KERNELS = {
    "raw-460": ((2, 23), (2, 5)),
    "scr-216": ((2, 9), (2, 6)),
}

FC_SHAPE = (512, 2)


@dataclass
class ModelConfig:
    """Architecture-plus-training knobs.

    Only `variant` changes the network shape. `reference_total` is the
    externally quoted parameter total for the variant; when the direct
    count disagrees, the count wins and the mismatch is logged once at
    build time so it shows up in run logs.
    """

    variant: str = "scr-216"
    stacks: int = 2
    blocks_per_stack: int = 2
    input_steps: int = 16
    dropout_rate: float = 0.2
    epochs: int = 1000
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    reference_total: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANT_WIDTHS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if (self.stacks, self.blocks_per_stack) != (2, 2):
            raise ValueError("the layer list is fixed at 2 stacks of 2 blocks")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.reference_total is None:
            self.reference_total = {"raw-460": 9306, "scr-216": 6883}[self.variant]


@dataclass
class Model:
    """Built network: layers plus the private shuffle/dropout stream."""

    config: ModelConfig
    convs: list[nn.ConvLayer]
    pools: list[nn.PoolLayer]
    fc: nn.DenseLayer
    rng: np.random.Generator
    input_shape: tuple[int, int, int]   # (steps, width, channels)

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, conv in enumerate(self.convs, start=1):
            out.append((f"conv{i}.w", conv.weights))
            out.append((f"conv{i}.b", conv.bias))
        out.append(("fc.w", self.fc.weights))
        out.append(("fc.b", self.fc.bias))
        return out

    def loss_grads(self, x, label, mode: str = "eval"):
        """Cross-entropy loss and its gradient w.r.t. every parameter.

        Eval mode (the default) is deterministic, which is what the
        finite-difference checker needs; train mode draws a dropout
        mask from the model's own stream.
        """
        x = np.asarray(x)
        if x.ndim == 3:
            x = x[None]
        dtype = self.fc.weights.dtype
        x = np.ascontiguousarray(x, dtype=dtype)
        rng = self.rng if mode == "train" else None

        caches = []
        a = x
        k = 0
        for pool in self.pools:
            for _ in range(self.config.blocks_per_stack):
                z, ccache = nn.conv2d(self.convs[k], a)
                a, rcache = nn.relu(z)
                caches.append((k, ccache, rcache))
                k += 1
            a, pcache = nn.maxpool2d(pool, a)
            caches.append(("pool", pool, pcache))
        feat_shape = a.shape
        flat = a.reshape(a.shape[0], -1)
        dropped, dmask = nn.dropout(flat, self.config.dropout_rate, mode, rng)
        logits, fcache = nn.dense(self.fc, dropped)
        loss, _, gz = nn.softmax_ce(logits, label)

        grads: dict[str, np.ndarray] = {}
        g, gw, gb = nn.dense_backward(self.fc, fcache, gz)
        grads["fc.w"], grads["fc.b"] = gw, gb
        g = nn.dropout_backward(dmask, g).reshape(feat_shape)
        for entry in reversed(caches):
            if entry[0] == "pool":
                _, pool, pcache = entry
                g = nn.maxpool2d_backward(pool, pcache, g)
            else:
                ki, ccache, rcache = entry
                g = nn.relu_backward(rcache, g)
                g, gw, gb = nn.conv2d_backward(self.convs[ki], ccache, g)
                grads[f"conv{ki + 1}.w"] = gw
                grads[f"conv{ki + 1}.b"] = gb
        return loss, grads

    def logits(self, x) -> np.ndarray:
        """Eval-mode forward pass, no caches kept."""
        x = np.asarray(x)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ValueError(
                f"input shape {x.shape[1:]} does not match model "
                f"input {self.input_shape}")
        a = np.ascontiguousarray(x, dtype=self.fc.weights.dtype)
        k = 0
        for pool in self.pools:
            for _ in range(self.config.blocks_per_stack):
                a, _ = nn.conv2d(self.convs[k], a)
                a, _ = nn.relu(a)
                k += 1
            a, _ = nn.maxpool2d(pool, a)
        out, _ = nn.dense(self.fc, a.reshape(a.shape[0], -1))
        return out


@dataclass
class TrainReport:
    """What one training run did, enough to reproduce and to plot."""

    variant: str
    epoch_loss: list[float] = field(default_factory=list)
    epoch_top1: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_top1: float = 0.0
    best_state: list[tuple[str, np.ndarray]] = field(default_factory=list)
    params_digest: str = ""
    wall_clock: float = 0.0


@dataclass
class EvalResult:
    top1: float
    recall: tuple[float, float]    # per true class (clear, blocked)
    n: int


def _shape_after_pools(cfg: ModelConfig) -> tuple[int, int]:
    h, w = cfg.input_steps, VARIANT_WIDTHS[cfg.variant]
    for kh, kw in POOL_KERNELS[cfg.variant]:
        if h % kh or w % kw:
            raise ValueError(
                f"pool {kh}x{kw} does not divide feature map {h}x{w}")
        h, w = h // kh, w // kw
    return h, w


def build_model(cfg: ModelConfig, dtype=np.float32) -> Model:
    """Assemble the network and verify the shape algebra closes.

    Raises ValueError when the pooled feature map does not flatten to
    the dense layer's 512 inputs; that means the config's input shape
    is incompatible with the fixed layer list.
    """
    h, w = _shape_after_pools(cfg)
    flat = h * w * CONV_CHANNELS[-1][1]
    if flat != FC_SHAPE[0]:
        raise ValueError(
            f"flattened features {flat} != dense input {FC_SHAPE[0]}; "
            f"variant {cfg.variant} with input_steps={cfg.input_steps} "
            "does not propagate to the fixed classifier")

    init_ss, run_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    init_rng = np.random.default_rng(init_ss)
    convs = [nn.init_conv(ci, co, init_rng, dtype=dtype)
             for ci, co in CONV_CHANNELS]
    pools = [nn.PoolLayer(k) for k in POOL_KERNELS[cfg.variant]]
    fc = nn.init_dense(*FC_SHAPE, init_rng, dtype=dtype)
    model = Model(config=cfg, convs=convs, pools=pools, fc=fc,
                  rng=np.random.default_rng(run_ss),
                  input_shape=(cfg.input_steps, VARIANT_WIDTHS[cfg.variant], 2))

    total = param_count(model)
    if cfg.reference_total is not None and total != cfg.reference_total:
        log.warning(
            "variant %s: computed parameter count %d differs from the "
            "quoted total %d; keeping the computed count",
            cfg.variant, total, cfg.reference_total)
    return model


def param_count(model: Model) -> int:
    return sum(p.size for _, p in model.parameters())


def params_digest(model: Model) -> str:
    """Order-sensitive digest of every parameter tensor's raw bytes."""
    h = hashlib.sha256()
    for name, p in model.parameters():
        h.update(name.encode())
        h.update(np.ascontiguousarray(p).tobytes())
    return h.hexdigest()[:12]


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_window_shape(model: Model, x: np.ndarray):
    if x.shape[-3:] != model.input_shape:
        raise ValueError(
            f"window shape {x.shape[-3:]} does not match model input "
            f"{model.input_shape} (variant {model.config.variant})")


def predict(model: Model, window) -> np.ndarray:
    """Probability vector [p(clear), p(blocked)] for one window."""
    x = window.x if isinstance(window, ObservationWindow) else np.asarray(window)
    _check_window_shape(model, x)
    return _softmax(model.logits(x).astype(np.float64))[0]


def evaluate(model: Model, windows, batch_size: int = 256) -> EvalResult:
    """Top-1 accuracy plus per-class recall over a window list."""
    if len(windows) == 0:
        raise ValueError("cannot evaluate on an empty window set")
    labels = np.array([w.label for w in windows])
    hits = np.zeros(len(windows), dtype=bool)
    for lo in range(0, len(windows), batch_size):
        chunk = windows[lo:lo + batch_size]
        x = np.stack([w.x for w in chunk])
        _check_window_shape(model, x)
        pred = np.argmax(model.logits(x), axis=1)
        hits[lo:lo + len(chunk)] = pred == labels[lo:lo + len(chunk)]
    recall = []
    for cls in (0, 1):
        mask = labels == cls
        recall.append(float(hits[mask].mean()) if mask.any() else float("nan"))
    return EvalResult(top1=float(hits.mean()), recall=(recall[0], recall[1]),
                      n=len(windows))


def train(model: Model, dataset, cfg: ModelConfig | None = None) -> TrainReport:
    """Mini-batch training loop; returns the per-epoch record.

    The model is updated in place and ends at the final epoch's
    parameters; the epoch with the best test top-1 is kept as a
    parameter snapshot in the report so overfitting stays visible
    instead of silently hidden. Deterministic for a fixed model seed:
    shuffles and dropout masks come from the model's own stream.
    """
    cfg = cfg or model.config
    train_windows = dataset.train_windows()
    test_windows = dataset.test_windows()
    if not train_windows or not test_windows:
        raise ValueError("dataset must have nonempty train and test splits")
    _check_window_shape(model, train_windows[0].x)

    params = [p for _, p in model.parameters()]
    names = [n for n, _ in model.parameters()]
    state = nn.init_optimizer(params, lr=cfg.learning_rate)
    report = TrainReport(variant=cfg.variant)
    t0 = time.perf_counter()

    n = len(train_windows)
    for epoch in range(cfg.epochs):
        order = model.rng.permutation(n)
        loss_sum = 0.0
        for lo in range(0, n, cfg.batch_size):
            batch = [train_windows[i] for i in order[lo:lo + cfg.batch_size]]
            x = np.stack([w.x for w in batch])
            y = np.array([w.label for w in batch])
            loss, grads = model.loss_grads(x, y, mode="train")
            nn.optimizer_step(state, params, [grads[nm] for nm in names])
            loss_sum += float(loss) * len(batch)
        top1 = evaluate(model, test_windows).top1
        report.epoch_loss.append(loss_sum / n)
        report.epoch_top1.append(top1)
        if top1 > report.best_top1:
            report.best_top1 = top1
            report.best_epoch = epoch
            report.best_state = [(nm, p.copy()) for nm, p in model.parameters()]

    report.params_digest = params_digest(model)
    report.wall_clock = time.perf_counter() - t0
    return report


def write_train_report(report: TrainReport, path):
    """One CSV row per epoch, run-level facts as comment headers."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# variant {report.variant}\n")
        fh.write(f"# params_digest {report.params_digest}\n")
        fh.write(f"# best_epoch {report.best_epoch}\n")
        fh.write(f"# best_top1 {report.best_top1:.6f}\n")
        fh.write(f"# wall_clock_s {report.wall_clock:.3f}\n")
        fh.write("epoch,loss,test_top1\n")
        for i, (loss, top1) in enumerate(zip(report.epoch_loss,
                                             report.epoch_top1)):
            fh.write(f"{i},{loss:.9g},{top1:.6f}\n")
