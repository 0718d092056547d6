"""One-vs-rest evaluation and AUROC."""
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .erasing import ErasingOpSet
from .errors import ConfigError, ContractError
from .scorer import score_images
from .trainer import TrainConfig, train


def auroc(normal_scores, anomalous_scores):
    """Mann-Whitney AUROC with anomalous as the positive (higher-scoring) class.

    Equals the fraction of (anomalous, normal) pairs ranked correctly, ties
    counting one half.
    """
    neg = np.asarray(normal_scores, dtype=np.float64).ravel()
    pos = np.asarray(anomalous_scores, dtype=np.float64).ravel()
    if len(neg) == 0 or len(pos) == 0:
        raise ContractError("auroc needs at least one normal and one anomalous score")
    ranks = rankdata(np.concatenate([pos, neg]), method="average")
    u = ranks[:len(pos)].sum() - len(pos) * (len(pos) + 1) / 2.0
    return float(u / (len(pos) * len(neg)))


@dataclass
class ClassResult:
    class_id: int
    auroc: float
    n_normal: int
    n_anomalous: int
    n_train: int
    scores: list = field(default=None, repr=False)


@dataclass
class EvalReport:
    per_class: dict
    average: float
    sd: float
    counts: dict

    def to_dict(self):
        return asdict(self)


def summarize(per_class, ddof=1):
    """Mean and spread of per-class AUROCs, in percent rounded to one decimal.

    ``per_class`` maps class id to AUROC in [0, 1]. The spread is the
    standard deviation with ``ddof`` degrees of freedom removed (sample SD by
    default; a single class has SD 0).
    """
    if not per_class:
        raise ContractError("summarize needs at least one class")
    pct = {int(c): 100.0 * float(v) for c, v in per_class.items()}
    vals = np.array(list(pct.values()))
    sd = float(vals.std(ddof=ddof)) if len(vals) > ddof else 0.0
    return EvalReport({c: round(v, 1) for c, v in pct.items()}, round(float(vals.mean()), 1),
                      round(sd, 2), {})


def one_vs_rest(train_set, test_set, class_id, erasing, arch, train_cfg=TrainConfig()):
    """Train on ``class_id`` training images, score the whole test split.

    ``class_id`` is normal, every other class anomalous.
    """
    if train_set.labels is None or test_set.labels is None:
        raise ConfigError("one-vs-rest needs labelled train and test splits")
    if len(np.unique(np.concatenate([train_set.labels, test_set.labels]))) < 2:
        raise ConfigError("one-vs-rest needs at least two classes")
    normal_train = train_set.of_class(class_id)
    if len(normal_train) == 0:
        raise ConfigError(f"class {class_id} has no training images")
    is_normal = test_set.labels == class_id
    if not is_normal.any():
        raise ConfigError(f"class {class_id} has no test images")
    if is_normal.all():
        raise ConfigError(f"test split has no images outside class {class_id}")
    ops = ErasingOpSet.from_names(erasing)
    ckpt, _ = train(normal_train.images, ops, arch, train_cfg)
    records = score_images(ckpt, test_set.images, test_set.ids)
    scores = np.array([r.score for r in records])
    return ClassResult(int(class_id), auroc(scores[is_normal], scores[~is_normal]),
                       int(is_normal.sum()), int((~is_normal).sum()), len(normal_train),
                       records)
