"""Anomaly scores from restoration error.

The raw signal for one image and one selection is the l1 distance between
the network's restoration of the erased image and the image itself. The
final score averages these over every selection after dividing each by its
training-set mean (the checkpoint's normalizers), so each selection carries
equal weight. Higher means more anomalous.
"""
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .erasing import ErasingOpSet, apply, enumerate_selections
from .errors import CheckpointError, ContractError
from .model import forward

# normalizers below this are treated as zero and replaced by it
NORMALIZER_FLOOR = 1e-12


@dataclass
class ScoreRecord:
    id: str
    errors: np.ndarray
    normalized: np.ndarray
    score: float

    def to_dict(self):
        return {"id": self.id, "score": self.score, "errors": [float(e) for e in self.errors]}


@dataclass
class FrameScores:
    errors: np.ndarray
    normality: np.ndarray


def _ops(ckpt):
    return ErasingOpSet.from_names(ckpt.erasing)


def _check_image(ckpt, x):
    expected = (ckpt.arch.out_channels, ckpt.arch.input_size, ckpt.arch.input_size)
    if np.shape(x) != expected:
        raise ContractError(f"checkpoint expects images of shape {expected}, got {np.shape(x)}")


def restoration_error(params, ops, x, selection):
    return T.l1_error(forward(params, apply(ops, x, selection)), x)


def selection_errors(params, ops, x):
    """Restoration error of ``x`` under every enumerated selection, shape (N,)."""
    return np.array([restoration_error(params, ops, x, sel) for sel in enumerate_selections(ops)],
                    dtype=np.float64)


def score_single(ckpt, x, selection):
    _check_image(ckpt, x)
    return restoration_error(ckpt.params, _ops(ckpt), x, selection)


def score_avg(ckpt, x):
    _check_image(ckpt, x)
    return float(np.mean(selection_errors(ckpt.params, _ops(ckpt), x)))


def _normalizers(ckpt, n):
    norms = ckpt.normalizers
    if norms is None or len(norms) != n:
        raise CheckpointError(f"checkpoint needs {n} normalizers, has "
                              f"{0 if norms is None else len(norms)}", field="normalizers")
    norms = np.asarray(norms, dtype=np.float64)
    if not np.all(np.isfinite(norms)) or np.any(norms <= 0):
        raise CheckpointError("normalizers must be finite and positive", field="normalizers")
    return norms


def normalize(errors, normalizers, sample_id=""):
    normed = np.asarray(errors, dtype=np.float64) / normalizers
    return ScoreRecord(sample_id, np.asarray(errors, dtype=np.float64), normed,
                       float(np.mean(normed)))


def score_normalized(ckpt, x, sample_id=""):
    _check_image(ckpt, x)
    ops = _ops(ckpt)
    norms = _normalizers(ckpt, ops.n_selections)
    return normalize(selection_errors(ckpt.params, ops, x), norms, sample_id)


def score_images(ckpt, images, ids=None):
    """Score every image of an ``N x C x H x W`` array; one record per image, in order."""
    if ids is None:
        ids = [str(i) for i in range(len(images))]
    return [score_normalized(ckpt, x, sid) for x, sid in zip(images, ids)]


def video_normality(errors):
    """Per-frame normality ``1 - (e - min) / (max - min)`` within an episode.

    An episode whose errors are all equal is entirely normal (every p = 1).
    """
    e = np.asarray(errors, dtype=np.float64)
    if e.ndim != 1 or len(e) < 2:
        raise ContractError("video_normality needs at least two frame errors")
    lo, hi = e.min(), e.max()
    if hi == lo:
        return FrameScores(e, np.ones_like(e))
    return FrameScores(e, 1.0 - (e - lo) / (hi - lo))
