"""Attribute-restoration anomaly detection in plain numpy.

A U-Net (ARNet) learns to undo attribute-erasing transforms (graying,
rotation, down-scaling) on normal images; images it restores poorly are
scored as anomalous.
"""
from .checkpoint import Checkpoint, load, save
from .data import Dataset, read_idx, read_image_dir, synth_glyphs
from .erasing import ErasingOpSet, apply, enumerate_selections
from .errors import (ArnetError, CheckpointError, ConfigError, ContractError, ParseError,
                     TrainingDivergence)
from .evaluator import auroc, one_vs_rest, summarize
from .model import ArchConfig, backward, forward, init_params
from .scorer import score_images, score_normalized, video_normality
from .trainer import TrainConfig, train

__version__ = "0.1.0"
