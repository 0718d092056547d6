"""Training loop and per-selection normalizers.

Each mini-batch pairs every image with one uniformly drawn selection, erases
it, and takes one SGD step on the batch-mean squared restoration error. The
learning rate halves every ``lr_halving_period`` epochs.

``base_lr`` is expressed for the per-pixel mean of the squared error (the
usual MSE convention), so the step applied to the per-image sum is
``lr / (C * H * W)``. Reported losses are per-image sums. All randomness is
keyed to ``(seed, epoch)`` for shuffling and ``(seed, epoch, image index)``
for augmentation and selection draws, so runs are reproducible.
"""
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint
from .erasing import apply, sample_selection
from .errors import ConfigError, TrainingDivergence
from .model import backward, init_params
from .scorer import NORMALIZER_FLOOR, selection_errors

log = logging.getLogger(__name__)

EPOCH_BUDGET = 500
HALVING_BUDGET = 50
MAX_SHIFT = 4


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    base_lr: float = 0.1
    T: int = None
    epochs: int = None
    lr_halving_period: int = None
    seed: int = 0
    hflip: bool = False
    shift: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.base_lr > 0:
            raise ConfigError("base_lr must be > 0")
        for name in ("T", "epochs", "lr_halving_period"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be >= 1")

    def schedule(self, n_selections):
        """``(T, epochs, lr_halving_period)``; T defaults to the selection count."""
        t = self.T or n_selections
        epochs = self.epochs or max(1, round(EPOCH_BUDGET / t))
        period = self.lr_halving_period or max(1, round(HALVING_BUDGET / t))
        return t, epochs, period


@dataclass
class TrainReport:
    epoch_losses: list = field(default_factory=list)
    final_lr: float = None
    wall_time: float = 0.0
    epochs_completed: int = 0
    zero_normalizers: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def lr_at(base_lr, epoch, period):
    return base_lr * 2.0 ** (-(epoch // period))


def augment(image, rng, hflip, shift):
    """Random horizontal flip and up-to-4px translation with edge padding."""
    out = image
    if hflip and rng.random() < 0.5:
        out = out[..., ::-1]
    if shift:
        dy, dx = rng.integers(-MAX_SHIFT, MAX_SHIFT + 1, size=2)
        h, w = out.shape[-2:]
        padded = np.pad(out, ((0, 0), (MAX_SHIFT, MAX_SHIFT), (MAX_SHIFT, MAX_SHIFT)), mode="edge")
        out = padded[:, MAX_SHIFT + dy:MAX_SHIFT + dy + h, MAX_SHIFT + dx:MAX_SHIFT + dx + w]
    return np.ascontiguousarray(out)


def compute_normalizers(params, images, ops, report=None):
    """Training-set mean restoration error for each selection (length N, all > 0)."""
    if len(images) == 0:
        raise ConfigError("cannot compute normalizers on an empty training set")
    total = np.zeros(ops.n_selections, dtype=np.float64)
    for x in images:
        total += selection_errors(params, ops, x)
    norms = total / len(images)
    zero = np.flatnonzero(norms <= 0)
    if len(zero):
        log.warning("selections %s have zero training error; flooring normalizer to %g",
                    zero.tolist(), NORMALIZER_FLOOR)
        norms[zero] = NORMALIZER_FLOOR
        if report is not None:
            report.zero_normalizers = zero.tolist()
    return norms


def train(images, ops, arch, cfg=TrainConfig()):
    """Train ARNet on normal images (``N x C x H x W`` in [-1, 1]).

    Returns ``(Checkpoint, TrainReport)``; the checkpoint carries the
    normalizers computed on the same images.
    """
    images = np.asarray(images, dtype=np.float32)
    if len(images) == 0:
        raise ConfigError("training set is empty")
    n = len(images)
    shape = images.shape[1:]
    ops.validate_shape(shape)
    if shape != (arch.out_channels, arch.input_size, arch.input_size):
        raise ConfigError(f"images of shape {shape} do not fit architecture {arch}")
    if ops.output_channels(shape[0]) != arch.in_channels:
        raise ConfigError(f"erasing {ops.names} yields {ops.output_channels(shape[0])} channels, "
                          f"architecture expects {arch.in_channels}")
    t, epochs, period = cfg.schedule(ops.n_selections)
    params = init_params(arch, cfg.seed)
    pixels = int(np.prod(shape))
    report = TrainReport()
    start = time.perf_counter()
    lr = cfg.base_lr
    for epoch in range(epochs):
        lr = lr_at(cfg.base_lr, epoch, period)
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        loss_sum = 0.0
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            inputs, targets = [], []
            for i in idx:
                rng = np.random.default_rng([cfg.seed, epoch, int(i)])
                x = augment(images[i], rng, cfg.hflip, cfg.shift)
                targets.append(x)
                inputs.append(apply(ops, x, sample_selection(ops, rng)))
            try:
                loss, grads = backward(params, np.stack(inputs), np.stack(targets))
                params = T.sgd_step(params, grads, lr / pixels)
            except TrainingDivergence as exc:
                raise TrainingDivergence(f"training diverged at epoch {epoch}, batch {b}: {exc}",
                                         epoch=epoch, batch=b, layer=exc.layer) from exc
            loss_sum += loss * len(idx)
        report.epoch_losses.append(loss_sum / n)
        report.epochs_completed = epoch + 1
        log.info("epoch %d/%d loss %.6g lr %.6g", epoch + 1, epochs, loss_sum / n, lr)
    report.final_lr = lr
    norms = compute_normalizers(params, images, ops, report)
    report.wall_time = time.perf_counter() - start
    meta = {
        "T": t,
        "epochs": epochs,
        "lr_halving_period": period,
        "final_lr": lr,
        "seed": cfg.seed,
        "train": asdict(cfg),
    }
    return Checkpoint(arch, ops.names, params, norms, meta), report
