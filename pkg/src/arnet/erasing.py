"""Attribute erasing: image operators, their composition and selection enumeration.

An :class:`ErasingOpSet` is an ordered pipeline of operators, each with a
finite set of randomized choices (``selection_count``). One concrete choice
per operator is a :class:`Selection`; there are ``N = prod(selection_count)``
of them, indexed in mixed radix with the last operator varying fastest.
"""
from dataclasses import dataclass
from math import prod

import numpy as np

from .errors import ConfigError, ContractError

# config name -> (kind, number of randomized choices)
OPERATORS = {
    "gray": ("Graying", 1),
    "rot90": ("Rotation", 4),
    "scale": ("ScaleHalf", 1),
}
_NAMES = {kind: name for name, (kind, _) in OPERATORS.items()}


def gray(image):
    """Average over the channel axis; single-channel images pass through."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] < 1:
        raise ContractError(f"gray expects C x H x W with C >= 1, got {image.shape}")
    c = image.shape[0]
    if c == 1:
        return image
    acc = image[0].copy()
    for k in range(1, c):
        acc += image[k]
    return (acc / image.dtype.type(c))[None]


def rotate90(image, k):
    """Rotate anticlockwise by ``k * 90`` degrees (lossless pixel permutation)."""
    return np.ascontiguousarray(np.rot90(image, k % 4, axes=(-2, -1)))


def scale_half(image):
    """2x2 average-pool down, then nearest 2x up so the size is unchanged."""
    image = np.asarray(image)
    h, w = image.shape[-2:]
    if h % 2 or w % 2:
        raise ContractError(f"scale_half needs even spatial dims, got {h} x {w}")
    a = image[..., 0::2, 0::2]
    b = image[..., 0::2, 1::2]
    c = image[..., 1::2, 0::2]
    d = image[..., 1::2, 1::2]
    down = (((a + b) + c) + d) / image.dtype.type(4)
    return np.ascontiguousarray(np.repeat(np.repeat(down, 2, axis=-2), 2, axis=-1))


@dataclass(frozen=True)
class ErasingOp:
    kind: str
    selection_count: int

    def __post_init__(self):
        if self.selection_count < 1:
            raise ConfigError(f"{self.kind}: selection_count must be >= 1")

    @property
    def name(self):
        return _NAMES[self.kind]

    def __call__(self, image, choice):
        if self.kind == "Graying":
            return gray(image)
        if self.kind == "Rotation":
            return rotate90(image, choice)
        return scale_half(image)


@dataclass(frozen=True)
class Selection:
    index: int
    choices: tuple


@dataclass(frozen=True)
class ErasingOpSet:
    ops: tuple = ()

    @classmethod
    def from_names(cls, names):
        ops = []
        for name in names:
            if name not in OPERATORS:
                raise ConfigError(
                    f"unknown erasing operator {name!r}; known: {sorted(OPERATORS)}")
            ops.append(ErasingOp(*OPERATORS[name]))
        return cls(tuple(ops))

    @property
    def names(self):
        return [op.name for op in self.ops]

    @property
    def radices(self):
        return tuple(op.selection_count for op in self.ops)

    @property
    def n_selections(self):
        return prod(self.radices)

    @property
    def has_rotation(self):
        return any(op.kind == "Rotation" for op in self.ops)

    def decode(self, index):
        if not 0 <= index < self.n_selections:
            raise ContractError(f"selection index {index} outside [0, {self.n_selections})")
        choices = []
        rest = index
        for m in reversed(self.radices):
            rest, j = divmod(rest, m)
            choices.append(j)
        return Selection(index, tuple(reversed(choices)))

    def encode(self, choices):
        index = 0
        for j, m in zip(choices, self.radices):
            if not 0 <= j < m:
                raise ContractError(f"choice {j} outside [0, {m})")
            index = index * m + j
        return index

    def output_channels(self, in_channels):
        return 1 if any(op.kind == "Graying" for op in self.ops) else in_channels

    def validate_shape(self, shape):
        """Reject image shapes the pipeline cannot feed to the network."""
        c, h, w = shape
        if self.has_rotation and h != w:
            raise ConfigError(f"rotation erasing needs square images, got {h} x {w}")
        if any(op.kind == "ScaleHalf" for op in self.ops) and (h % 2 or w % 2):
            raise ConfigError(f"scale erasing needs even image dims, got {h} x {w}")


def enumerate_selections(ops):
    return [ops.decode(i) for i in range(ops.n_selections)]


def apply(ops, image, selection):
    """Run every operator of ``ops`` on ``image`` with the choices in ``selection``."""
    out = image
    for op, j in zip(ops.ops, selection.choices):
        out = op(out, j)
    return out


def sample_selection(ops, rng):
    """Draw one selection uniformly with the numpy Generator ``rng``."""
    n = ops.n_selections
    return ops.decode(int(rng.integers(n)) if n > 1 else 0)
