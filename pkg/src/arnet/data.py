"""Dataset ingestion: IDX files, class-per-folder images, synthetic glyphs.

All loaders return a :class:`Dataset` whose images are float32
``N x C x H x W`` arrays in ``[-1, 1]`` (bytes map to ``2 b / 255 - 1``).
"""
import gzip
import itertools
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, ParseError

log = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
IMAGE_SUFFIXES = (".png", ".pgm", ".ppm", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")

# standard MNIST-style file stems, per split
IDX_STEMS = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray = None
    split: str = "train"
    class_names: tuple = None
    ids: list = field(default=None, repr=False)

    def __post_init__(self):
        imgs = np.asarray(self.images)
        if imgs.ndim != 4:
            raise ContractError(f"dataset images must be N x C x H x W, got {imgs.shape}")
        self.images = np.ascontiguousarray(imgs, dtype=np.float32)
        if self.images.size and not (np.all(np.isfinite(self.images))
                                     and self.images.min() >= -1 and self.images.max() <= 1):
            raise ContractError("dataset pixels must be finite and within [-1, 1]")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.images),):
                raise ContractError(
                    f"{len(self.labels)} labels for {len(self.images)} images")
        if self.ids is None:
            self.ids = [f"{self.split}/{i}" for i in range(len(self.images))]
        elif len(self.ids) != len(self.images):
            raise ContractError("ids length differs from image count")

    def __len__(self):
        return len(self.images)

    @property
    def shape(self):
        return tuple(self.images.shape[1:])

    def subset(self, mask):
        idx = np.flatnonzero(mask)
        return Dataset(self.images[idx], None if self.labels is None else self.labels[idx],
                       self.split, self.class_names, [self.ids[i] for i in idx])

    def of_class(self, c):
        if self.labels is None:
            raise ConfigError("dataset has no labels; cannot select a class")
        return self.subset(self.labels == c)


def bytes_to_unit(b):
    return (2.0 * np.asarray(b, dtype=np.float64) / 255.0 - 1.0).astype(np.float32)


# --- IDX -----------------------------------------------------------------

def _read_bytes(path):
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def _parse_idx(buf, expect_magic, path):
    if len(buf) < 8:
        raise ParseError(f"{path}: truncated header", offset=len(buf))
    magic, count = struct.unpack_from(">II", buf, 0)
    if magic != expect_magic:
        raise ParseError(f"{path}: bad magic 0x{magic:08x} at offset 0, "
                         f"expected 0x{expect_magic:08x}", offset=0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise ParseError(f"{path}: truncated dimension header", offset=len(buf))
    dims = (count,) + struct.unpack_from(f">{ndim - 1}I", buf, 8)
    size = int(np.prod(dims))
    if len(buf) - header != size:
        raise ParseError(f"{path}: payload at offset {header} has {len(buf) - header} bytes, "
                         f"header promises {size}", offset=header)
    return np.frombuffer(buf, dtype=np.uint8, offset=header).reshape(dims)


def read_idx(images_path, labels_path=None, split="train"):
    raw = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, images_path)
    labels = None
    if labels_path is not None:
        labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, labels_path)
        if len(labels) != len(raw):
            raise ParseError(f"{labels_path}: count {len(labels)} at offset 4 does not match "
                             f"{len(raw)} images", offset=4)
    return Dataset(bytes_to_unit(raw)[:, None], labels, split)


def write_idx(path, array, magic):
    """Write uint8 ``array`` as an IDX file (used by ``synth`` and tests)."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(header + array.tobytes())


def find_idx(root, split):
    root = Path(root)
    found = []
    for stem in IDX_STEMS[split]:
        for cand in (root / stem, root / f"{stem}.gz"):
            if cand.exists():
                found.append(cand)
                break
        else:
            found.append(None)
    return found


def read_idx_dir(root, split="train"):
    images, labels = find_idx(root, split)
    if images is None:
        raise ConfigError(f"no {IDX_STEMS[split][0]} file in {root}")
    return read_idx(images, labels, split)


# --- resizing ------------------------------------------------------------

def resize_nearest(image, target):
    """Nearest-neighbour resize of ``C x H x W`` to ``target = (h, w)``."""
    th, tw = target
    if th < 1 or tw < 1:
        raise ContractError(f"resize target must be positive, got {target}")
    h, w = image.shape[-2:]
    rows = (np.arange(th) * h) // th
    cols = (np.arange(tw) * w) // tw
    return np.ascontiguousarray(image[..., rows[:, None], cols[None, :]])


def center_crop(image, target):
    th, tw = target
    h, w = image.shape[-2:]
    if th < 1 or tw < 1 or th > h or tw > w:
        raise ContractError(f"cannot crop {h} x {w} to {th} x {tw}")
    top = (h - th) // 2
    left = (w - tw) // 2
    return np.ascontiguousarray(image[..., top:top + th, left:left + tw])


def fit_to_size(images, size, pad_value=-1.0):
    """Bring ``N x C x H x W`` images to ``size x size``.

    Smaller images are centre-padded with ``pad_value`` (background);
    larger ones are centre-cropped to a square and nearest-resized.
    """
    h, w = images.shape[-2:]
    if (h, w) == (size, size):
        return images
    if h <= size and w <= size:
        out = np.full(images.shape[:-2] + (size, size), pad_value, dtype=images.dtype)
        top, left = (size - h) // 2, (size - w) // 2
        out[..., top:top + h, left:left + w] = images
        return out
    side = min(h, w)
    return resize_nearest(center_crop(images, (side, side)), (size, size))


def default_size(shape):
    """Smallest multiple of 16 that holds an ``H x W`` image."""
    return int(16 * np.ceil(max(shape[-2:]) / 16))


# --- image folders -------------------------------------------------------

def _decode(path, channels):
    from PIL import Image

    with Image.open(path) as im:
        im = im.convert("L" if channels == 1 else "RGB")
        arr = np.asarray(im, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)
    return bytes_to_unit(arr)


def _infer_channels(path):
    from PIL import Image

    with Image.open(path) as im:
        return 1 if im.mode in ("1", "L", "I", "I;16", "F") else 3


def list_images(folder):
    folder = Path(folder)
    return sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def read_image_files(paths, size=None, channels=None, strict=False):
    """Decode image files to a list of ``(path, C x H x W)``; bad files are skipped with a warning."""
    out = []
    for path in paths:
        try:
            if channels is None:
                channels = _infer_channels(path)
            img = _decode(path, channels)
            if size is not None:
                h, w = img.shape[-2:]
                side = min(h, w)
                img = resize_nearest(center_crop(img, (side, side)), (size, size))
        except Exception as exc:
            if isinstance(exc, ContractError) or strict:
                raise ParseError(f"{path}: cannot decode image ({exc})") from exc
            log.warning("skipping undecodable image %s: %s", path, exc)
            continue
        out.append((path, img))
    return out


def read_image_dir(root, split="train", layout="class/split", size=None, channels=None,
                   strict=False):
    """Load ``root/<class>/<split>/*`` (or ``root/<class>/*`` with ``layout="class"``).

    Class ids follow the sorted class directory names. ``size`` centre-crops
    to a square and nearest-resizes every image to ``size x size``.
    """
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"image directory {root} does not exist")
    if layout not in ("class/split", "class"):
        raise ConfigError(f"unknown image-folder layout {layout!r}")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise ConfigError(f"{root} contains no class directories")
    images, labels, ids = [], [], []
    for label, name in enumerate(classes):
        folder = root / name / split if layout == "class/split" else root / name
        if not folder.is_dir():
            continue
        for path, img in read_image_files(list_images(folder), size, channels, strict):
            if channels is None:
                channels = img.shape[0]
            images.append(img)
            labels.append(label)
            ids.append(str(path.relative_to(root)))
    if not images:
        raise ConfigError(f"no decodable images under {root} for split {split!r}")
    shapes = {img.shape for img in images}
    if len(shapes) > 1:
        raise ConfigError(f"images under {root} have mixed shapes {sorted(shapes)}; set a size")
    return Dataset(np.stack(images), np.array(labels), split, tuple(classes), ids)


# --- synthetic glyphs ----------------------------------------------------

def _l_glyph(size, arm_v, arm_h, thick, row, col):
    """Upright 'L': long arm up from the corner, short arm to the right."""
    img = np.full((size, size), -1.0, dtype=np.float32)
    img[row - arm_v + 1:row + 1, col:col + thick] = 1.0
    img[row - thick + 1:row + 1, col:col + arm_h] = 1.0
    return img


def _l_params(size):
    s = size
    params = []
    for arm_v, arm_h, thick in itertools.product(
            range(s // 2, (3 * s) // 4 + 1), range(s // 4, (2 * s) // 5 + 1),
            range(max(1, s // 16), max(1, s // 8) + 1)):
        for row in range(arm_v, s - 1):
            for col in range(1, s - arm_h):
                params.append((arm_v, arm_h, thick, row, col))
    return params


def _ring(size, radius, thick):
    c = (size - 1) / 2
    yy, xx = np.mgrid[:size, :size]
    dist = np.hypot(yy - c, xx - c)
    return np.where(np.abs(dist - radius) < thick / 2, 1.0, -1.0).astype(np.float32)


def synth_glyphs(n_per_class, size=16, seed=0, split="train"):
    """Three-class 1 x size x size glyph set.

    Class 0 holds upright 'L' shapes with jittered arm lengths, thickness and
    position (drawn without replacement while possible, so images differ);
    class 1 holds independently jittered mirror images of those; class 2
    holds rings centred in the frame, which are exactly rotation invariant.
    """
    if size < 16 or size % 16:
        raise ContractError(f"glyph size must be a positive multiple of 16, got {size}")
    rng = np.random.default_rng(seed)
    grid = _l_params(size)
    images, labels = [], []
    for label in (0, 1):
        pick = rng.choice(len(grid), size=n_per_class, replace=n_per_class > len(grid))
        for k in pick:
            g = _l_glyph(size, *grid[k])
            images.append(g if label == 0 else g[:, ::-1])
            labels.append(label)
    for _ in range(n_per_class):
        radius = rng.uniform(0.22 * size, 0.4 * size)
        thick = rng.uniform(1.0, max(1.5, size / 8))
        images.append(_ring(size, radius, thick))
        labels.append(2)
    return Dataset(np.stack(images)[:, None], np.array(labels), split,
                   ("L", "mirrored-L", "ring"))


def dataset_to_bytes(images):
    """Inverse of the byte normalisation, for writing datasets back to disk."""
    return np.rint((np.asarray(images, dtype=np.float64) + 1.0) * 127.5).astype(np.uint8)
