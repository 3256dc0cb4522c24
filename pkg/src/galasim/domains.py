"""Synthetic shifted-domain generators and transforms.

Two task families: low-dimensional Gaussian mixtures (class c centered at
3*e_{c mod d}, unit isotropic noise) and small raster "glyph" tasks built
from seven-segment-style stroke patterns. Raster domains support the
background-overlay, scale-recenter and channel-stack shifts; Gaussian
domains support rotate and mean-shift; label_noise works on any labeled
dataset. Every generator and transform is a pure function of (spec, seed).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, IntegrityError, ParseError, UnsupportedVersionError

TRANSFORM_KINDS = (
    "background_overlay",
    "scale_recenter",
    "channel_stack",
    "rotate",
    "mean_shift",
    "label_noise",
)


@dataclass
class TransformSpec:
    """One domain-shift step: a kind, its parameters, and a seed.

    Applying the same spec with the same seed to the same dataset is
    bit-identical.
    """

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")

    def describe(self) -> str:
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.kind}({inner},seed={self.seed})"


@dataclass(eq=False)
class DomainDataset:
    """One domain's samples plus metadata.

    samples are float32, shape (n, feature_dim); labels are int class indices
    or None (the unlabeled target view). raster_shape is (channels, s, s) for
    glyph-style domains and None for vector tasks; provenance records the
    transform chain. Equality compares the fields the file format persists
    (name, samples, labels, num_classes).
    """

    name: str
    samples: np.ndarray
    labels: Optional[np.ndarray]
    num_classes: int
    provenance: tuple[str, ...] = ()
    raster_shape: Optional[tuple[int, int, int]] = None

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 2:
            raise DataError("samples must be a 2-D array (n, feature_dim)")
        if not np.isfinite(self.samples).all():
            raise DataError(f"dataset {self.name!r} contains non-finite features")
        if self.num_classes < 2:
            raise DataError("num_classes must be >= 2")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.samples.shape[0],):
                raise DataError("labels length must match number of samples")
            if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
                raise DataError(f"labels outside [0, {self.num_classes})")
            present = np.unique(self.labels)
            if len(present) != self.num_classes:
                missing = sorted(set(range(self.num_classes)) - set(present.tolist()))
                raise DataError(f"dataset {self.name!r} is missing classes {missing}")
        if self.raster_shape is not None:
            ch, h, w = self.raster_shape
            if ch * h * w != self.samples.shape[1]:
                raise DataError("raster_shape does not match feature_dim")

    def __eq__(self, other) -> bool:
        if not isinstance(other, DomainDataset):
            return NotImplemented
        if self.name != other.name or self.num_classes != other.num_classes:
            return False
        if not np.array_equal(self.samples, other.samples):
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        return self.labels is None or np.array_equal(self.labels, other.labels)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.samples.shape[1]

    def strip_labels(self) -> "DomainDataset":
        """Training-facing view of an unlabeled domain: labels are gone, not hidden."""
        return DomainDataset(self.name, self.samples, None, self.num_classes,
                             self.provenance + ("labels_stripped",), self.raster_shape)

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise DataError(f"dataset {self.name!r} has no labels")
        return self.labels

    def rasters(self) -> np.ndarray:
        """Samples reshaped to (n, channels, s, s); raster datasets only."""
        if self.raster_shape is None:
            raise TypeError(f"dataset {self.name!r} is not raster-valued")
        return self.samples.reshape((self.n_samples, *self.raster_shape))

    def _replace(self, samples, labels, provenance_step, raster_shape="keep"):
        shape = self.raster_shape if raster_shape == "keep" else raster_shape
        return DomainDataset(self.name, samples, labels, self.num_classes,
                             self.provenance + (provenance_step,), shape)

    def split(self, train_fraction: float, seed: int) -> tuple["DomainDataset", "DomainDataset"]:
        """Seeded stratified split; both halves keep every class when labels exist."""
        if not 0.0 < train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        labels = self.require_labels()
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x5871)))
        train_idx, test_idx = [], []
        for c in range(self.num_classes):
            idx = np.flatnonzero(labels == c)
            idx = idx[rng.permutation(idx.size)]
            cut = max(1, min(idx.size - 1, int(np.floor(train_fraction * idx.size))))
            train_idx.append(idx[:cut])
            test_idx.append(idx[cut:])
        train_idx = np.sort(np.concatenate(train_idx))
        test_idx = np.sort(np.concatenate(test_idx))
        make = lambda idx, tag: DomainDataset(
            self.name, self.samples[idx],
            labels[idx], self.num_classes,
            self.provenance + (tag,), self.raster_shape)
        return make(train_idx, "split_train"), make(test_idx, "split_test")


# ---------------------------------------------------------------------------
# generators


def gen_gaussian_domain(num_classes: int, samples_per_class: int, input_dim: int,
                        shift: Sequence[TransformSpec] | TransformSpec | None = None,
                        seed: int = 0, name: Optional[str] = None,
                        center_scale: float = 3.0) -> DomainDataset:
    """Gaussian-mixture domain: class c at center_scale * e_{c mod input_dim},
    unit isotropic noise, then the shift chain applied in order.

    The default separation leaves a few percent of Bayes error; raise
    center_scale to build an (almost surely) linearly separable task.
    """
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if samples_per_class < 8:
        raise ValueError("samples_per_class must be >= 8")
    if input_dim < 2:
        raise ValueError("input_dim must be >= 2")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x6A0551)))
    centers = np.zeros((num_classes, input_dim))
    for c in range(num_classes):
        centers[c, c % input_dim] = float(center_scale)
    labels = np.repeat(np.arange(num_classes), samples_per_class)
    samples = centers[labels] + rng.standard_normal((labels.size, input_dim))
    if name is None:
        name = f"gauss_c{num_classes}_d{input_dim}_s{seed}"
    out = DomainDataset(name, samples.astype(np.float32), labels, num_classes,
                        (f"gaussian(C={num_classes},K={samples_per_class},d={input_dim},"
                         f"scale={center_scale},seed={seed})",))
    return apply_transform_chain(out, shift)


_SEGMENT_COUNT = 7


def _segment_masks(canvas: int) -> np.ndarray:
    """Seven stroke masks (top, tr, br, bottom, bl, tl, middle) on a canvas."""
    if canvas < 8:
        raise ValueError("canvas must be >= 8 to render distinct glyphs")
    m = max(1, canvas // 8)
    t = max(1, canvas // 6)
    x0, x1 = m, canvas - 1 - m
    y0, y1 = m, canvas - 1 - m
    ymid = canvas // 2
    masks = np.zeros((_SEGMENT_COUNT, canvas, canvas), dtype=bool)
    masks[0, y0:y0 + t, x0:x1 + 1] = True
    masks[1, y0:ymid + 1, x1 - t + 1:x1 + 1] = True
    masks[2, ymid:y1 + 1, x1 - t + 1:x1 + 1] = True
    masks[3, y1 - t + 1:y1 + 1, x0:x1 + 1] = True
    masks[4, ymid:y1 + 1, x0:x0 + t] = True
    masks[5, y0:ymid + 1, x0:x0 + t] = True
    masks[6, ymid - t // 2:ymid - t // 2 + t, x0:x1 + 1] = True
    return masks


def _shift2d(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Translate with zero fill (content moves by (+dy, +dx))."""
    out = np.zeros_like(img)
    h, w = img.shape
    ys, yd = (0, dy) if dy >= 0 else (-dy, 0)
    xs, xd = (0, dx) if dx >= 0 else (-dx, 0)
    out[yd:h - ys, xd:w - xs] = img[ys:h - yd, xs:w - xd]
    return out


def gen_glyph_domain(num_classes: int, samples_per_class: int, canvas: int,
                     channels: int = 1, seed: int = 0,
                     name: Optional[str] = None) -> DomainDataset:
    """Raster domain of procedural glyphs, one stroke pattern per class.

    Class c lights the segments given by the bits of c+1 over a seven-segment
    layout, so up to 127 classes stay pairwise distinct. Per-sample jitter:
    one-pixel translation, stroke intensity in [0.75, 1], additive pixel noise.
    """
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if not 2 <= num_classes <= 2 ** _SEGMENT_COUNT - 1:
        raise ValueError("num_classes out of renderable range")
    if channels not in (1, 3):
        raise ValueError("channels must be 1 or 3")
    masks = _segment_masks(canvas)  # raises for canvas < 8
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x617F)))
    glyphs = np.zeros((num_classes, canvas, canvas))
    for c in range(num_classes):
        bits = (c + 1) >> np.arange(_SEGMENT_COUNT) & 1
        glyphs[c] = np.clip(masks[bits.astype(bool)].sum(axis=0), 0, 1)

    n = num_classes * samples_per_class
    labels = np.repeat(np.arange(num_classes), samples_per_class)
    shifts = rng.integers(-1, 2, size=(n, 2))
    intensity = rng.uniform(0.75, 1.0, size=n)
    noise = rng.normal(0.0, 0.03, size=(n, canvas, canvas))
    samples = np.empty((n, channels, canvas, canvas), dtype=np.float32)
    for i in range(n):
        img = _shift2d(glyphs[labels[i]], int(shifts[i, 0]), int(shifts[i, 1]))
        img = np.clip(img * intensity[i] + noise[i], 0.0, 1.0)
        samples[i] = img  # broadcast over channels
    if name is None:
        name = f"glyph_c{num_classes}_v{canvas}_s{seed}"
    return DomainDataset(name, samples.reshape(n, -1), labels, num_classes,
                         (f"glyph(C={num_classes},K={samples_per_class},canvas={canvas},"
                          f"channels={channels},seed={seed})",),
                         raster_shape=(channels, canvas, canvas))


# ---------------------------------------------------------------------------
# transforms


def _smooth_texture(rng: np.random.Generator, canvas: int) -> np.ndarray:
    """Sum of 3 low-frequency sinusoid gratings, normalized to [0, 1]."""
    yy, xx = np.mgrid[0:canvas, 0:canvas].astype(np.float64)
    tex = np.zeros((canvas, canvas))
    for _ in range(3):
        fx, fy = rng.uniform(0.5, 2.0, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amp = rng.uniform(0.5, 1.0)
        tex += amp * np.sin(2.0 * np.pi * (fx * xx + fy * yy) / canvas + phase)
    tex -= tex.min()
    peak = tex.max()
    return tex / peak if peak > 0 else tex


def apply_background_overlay(d: DomainDataset, noise_amplitude: float, seed: int = 0) -> DomainDataset:
    """Blend each raster with a seeded smooth texture:
    out = clip(max(glyph, texture * amplitude), 0, 1). Labels unchanged."""
    if not 0.0 < noise_amplitude <= 1.0:
        raise ValueError("noise_amplitude must be in (0, 1]")
    imgs = d.rasters().astype(np.float64)
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xB6)))
    n, ch, s, _ = imgs.shape
    out = np.empty_like(imgs)
    for i in range(n):
        for k in range(ch):
            tex = _smooth_texture(rng, s)
            out[i, k] = np.clip(np.maximum(imgs[i, k], tex * noise_amplitude), 0.0, 1.0)
    return d._replace(out.reshape(n, -1).astype(np.float32), d.labels,
                      f"background_overlay(amp={noise_amplitude},seed={seed})")


def bilinear_resize(img: np.ndarray, out_size: int) -> np.ndarray:
    """Bilinear resample to out_size x out_size with corner-aligned sampling
    (out_size == input size reproduces the input exactly)."""
    s = img.shape[0]
    if out_size == s:
        return img.copy()
    if out_size == 1:
        coords = np.array([(s - 1) / 2.0])
    else:
        coords = np.arange(out_size) * (s - 1) / (out_size - 1)
    lo = np.floor(coords).astype(int)
    hi = np.minimum(lo + 1, s - 1)
    frac = coords - lo
    top = img[lo][:, lo] * (1 - frac)[None, :] + img[lo][:, hi] * frac[None, :]
    bot = img[hi][:, lo] * (1 - frac)[None, :] + img[hi][:, hi] * frac[None, :]
    return top * (1 - frac)[:, None] + bot * frac[:, None]


def apply_scale_recenter(d: DomainDataset, inner: int, seed: int = 0) -> DomainDataset:
    """Downscale each raster to inner x inner and paste it centered on a zero
    canvas of the original size; labels unchanged."""
    imgs = d.rasters().astype(np.float64)
    n, ch, s, _ = imgs.shape
    if inner > s:
        raise ValueError(f"inner ({inner}) must not exceed canvas ({s})")
    if inner < 1:
        raise ValueError("inner must be >= 1")
    off = (s - inner) // 2
    out = np.zeros_like(imgs)
    for i in range(n):
        for k in range(ch):
            out[i, k, off:off + inner, off:off + inner] = bilinear_resize(imgs[i, k], inner)
    return d._replace(out.reshape(n, -1).astype(np.float32), d.labels,
                      f"scale_recenter(inner={inner})")


def apply_channel_stack(d: DomainDataset, shift_px: int, seed: int = 0) -> DomainDataset:
    """Stack a single-channel raster into RGB with the R channel shifted
    +shift_px along x, B shifted -shift_px, G unshifted; zero fill."""
    imgs = d.rasters()
    n, ch, s, _ = imgs.shape
    if ch != 1:
        raise TypeError("channel_stack needs single-channel input")
    if not 1 <= shift_px < s / 2:
        raise ValueError("shift_px must satisfy 1 <= shift_px < canvas/2")
    out = np.empty((n, 3, s, s), dtype=np.float32)
    for i in range(n):
        base = imgs[i, 0]
        out[i, 0] = _shift2d(base, 0, shift_px)
        out[i, 1] = base
        out[i, 2] = _shift2d(base, 0, -shift_px)
    return d._replace(out.reshape(n, -1), d.labels,
                      f"channel_stack(shift_px={shift_px})", raster_shape=(3, s, s))


def _rotation_matrix(dim: int, angle: float) -> np.ndarray:
    """Givens rotations by `angle` in every disjoint coordinate plane."""
    rot = np.eye(dim)
    c, s = np.cos(angle), np.sin(angle)
    for a in range(0, dim - 1, 2):
        b = a + 1
        g = np.eye(dim)
        g[a, a] = c
        g[a, b] = -s
        g[b, a] = s
        g[b, b] = c
        rot = g @ rot
    return rot


def apply_rotate(d: DomainDataset, angle: float, seed: int = 0) -> DomainDataset:
    """Rotate vector-task samples about the origin (all disjoint planes)."""
    if d.raster_shape is not None:
        raise TypeError("rotate applies to vector tasks, not rasters")
    rot = _rotation_matrix(d.feature_dim, float(angle))
    samples = d.samples.astype(np.float64) @ rot.T
    return d._replace(samples.astype(np.float32), d.labels, f"rotate(angle={angle})")


def apply_mean_shift(d: DomainDataset, magnitude: float, seed: int = 0) -> DomainDataset:
    """Translate vector-task samples by a seeded random direction times magnitude."""
    if d.raster_shape is not None:
        raise TypeError("mean_shift applies to vector tasks, not rasters")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x5417)))
    direction = rng.standard_normal(d.feature_dim)
    norm = np.linalg.norm(direction)
    direction = direction / norm if norm > 0 else direction
    samples = d.samples.astype(np.float64) + float(magnitude) * direction
    return d._replace(samples.astype(np.float32), d.labels,
                      f"mean_shift(magnitude={magnitude},seed={seed})")


def apply_label_noise(d: DomainDataset, fraction: float, seed: int = 0) -> DomainDataset:
    """Flip exactly floor(fraction * n) labels to uniformly random other classes."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must be in [0, 1)")
    labels = d.require_labels().copy()
    n_flip = int(np.floor(fraction * labels.size))
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x1AB)))
    idx = rng.choice(labels.size, size=n_flip, replace=False)
    offsets = rng.integers(1, d.num_classes, size=n_flip)
    labels[idx] = (labels[idx] + offsets) % d.num_classes
    return d._replace(d.samples, labels, f"label_noise(fraction={fraction},seed={seed})")


_TRANSFORM_DISPATCH = {
    "background_overlay": lambda d, p, seed: apply_background_overlay(
        d, p["noise_amplitude"], seed),
    "scale_recenter": lambda d, p, seed: apply_scale_recenter(d, int(p["inner"]), seed),
    "channel_stack": lambda d, p, seed: apply_channel_stack(d, int(p["shift_px"]), seed),
    "rotate": lambda d, p, seed: apply_rotate(d, float(p["angle"]), seed),
    "mean_shift": lambda d, p, seed: apply_mean_shift(d, float(p["magnitude"]), seed),
    "label_noise": lambda d, p, seed: apply_label_noise(d, float(p["fraction"]), seed),
}


def apply_transform(d: DomainDataset, spec: TransformSpec) -> DomainDataset:
    return _TRANSFORM_DISPATCH[spec.kind](d, spec.params, spec.seed)


def apply_transform_chain(d: DomainDataset,
                          chain: Sequence[TransformSpec] | TransformSpec | None) -> DomainDataset:
    if chain is None:
        return d
    if isinstance(chain, TransformSpec):
        chain = (chain,)
    for spec in chain:
        d = apply_transform(d, spec)
    return d


def mixup(x: np.ndarray, y_soft: np.ndarray, alpha: float, rng: np.random.Generator,
          lam: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise mixup: each sample blends with a random partner using its own
    lambda ~ Beta(alpha, alpha). `lam` forces a fixed lambda (test hook)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x = np.asarray(x, dtype=np.float64)
    y_soft = np.asarray(y_soft, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError("mixup needs a batch of at least 2")
    partner = rng.permutation(n)
    lams = np.full(n, float(lam)) if lam is not None else rng.beta(alpha, alpha, size=n)
    lx = lams[:, None]
    return lx * x + (1 - lx) * x[partner], lx * y_soft + (1 - lx) * y_soft[partner]


# ---------------------------------------------------------------------------
# dataset file format
#
# little-endian: magic "GDSD", u8 version=1, u16 name length, UTF-8 name,
# u32 num_samples, u32 feature_dim, u16 num_classes, u8 has_labels,
# f32 features row-major, u16 labels if present, u32 CRC32 of all prior bytes.

_MAGIC = b"GDSD"
_VERSION = 1


def save_dataset(d: DomainDataset, path) -> None:
    name_bytes = d.name.encode("utf-8")
    if len(name_bytes) > 0xFFFF:
        raise ValueError("dataset name too long to serialize")
    if d.num_classes > 0xFFFF:
        raise ValueError("num_classes exceeds the u16 format field")
    parts = [
        _MAGIC,
        struct.pack("<B", _VERSION),
        struct.pack("<H", len(name_bytes)),
        name_bytes,
        struct.pack("<IIHB", d.n_samples, d.feature_dim, d.num_classes,
                    1 if d.labels is not None else 0),
        np.ascontiguousarray(d.samples, dtype="<f4").tobytes(),
    ]
    if d.labels is not None:
        parts.append(d.labels.astype("<u2").tobytes())
    body = b"".join(parts)
    blob = body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(blob)


def _infer_raster_shape(feature_dim: int) -> Optional[tuple[int, int, int]]:
    # 3*s^2 and t^2 never coincide, so the inference is unambiguous
    for ch in (3, 1):
        if feature_dim % ch == 0:
            side = int(round(np.sqrt(feature_dim // ch)))
            if side >= 8 and ch * side * side == feature_dim:
                return (ch, side, side)
    return None


def load_dataset(path) -> DomainDataset:
    with open(path, "rb") as fh:
        blob = fh.read()

    def need(offset: int, count: int, what: str) -> bytes:
        if offset + count > len(blob):
            raise ParseError(f"truncated dataset file: needed {count} bytes for "
                             f"{what} at offset {offset}, file has {len(blob)}")
        return blob[offset : offset + count]

    if need(0, 4, "magic") != _MAGIC:
        raise ParseError("bad magic at offset 0: not a GDSD dataset file")
    version = need(4, 1, "version")[0]
    if version != _VERSION:
        raise UnsupportedVersionError(f"unsupported dataset version {version} at offset 4")
    (name_len,) = struct.unpack("<H", need(5, 2, "name length"))
    off = 7
    try:
        name = need(off, name_len, "name").decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"invalid UTF-8 name at offset {off}") from exc
    off += name_len
    n_samples, feature_dim, num_classes, has_labels = struct.unpack(
        "<IIHB", need(off, 11, "header"))
    off += 11
    feat_bytes = 4 * n_samples * feature_dim
    samples = np.frombuffer(need(off, feat_bytes, "features"), dtype="<f4")
    samples = samples.reshape(n_samples, feature_dim).copy()
    off += feat_bytes
    labels = None
    if has_labels:
        labels = np.frombuffer(need(off, 2 * n_samples, "labels"), dtype="<u2").astype(np.int64)
        off += 2 * n_samples
    (stored_crc,) = struct.unpack("<I", need(off, 4, "checksum"))
    if off + 4 != len(blob):
        raise ParseError(f"trailing garbage after offset {off + 4}")
    actual_crc = zlib.crc32(blob[:off]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise IntegrityError(
            f"checksum mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}")
    return DomainDataset(name, samples, labels, num_classes,
                         provenance=(f"loaded({path})",),
                         raster_shape=_infer_raster_shape(feature_dim))
