"""Synthetic degradations and content-aligned paired datasets.

All images are float32 arrays ``[C, H, W]`` in ``[0, 1]``.  Rain and snow are
built as a single-channel layer that is screen-blended onto the clean image
(``a + b - a*b``, which never darkens and leaves the image untouched where the
layer is zero).

Angles are in degrees, counter-clockwise from the +x axis with y pointing up
the image (so 90 is vertical and 45 runs toward the top-right corner).
"""
from __future__ import annotations

import hashlib
import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import FormatError, InvalidArgumentError, ShapeError
from .rng import derive_seed, substream

log = logging.getLogger(__name__)

KINDS = ("noise", "haze", "rain", "snow", "adversarial")
ANGLES = (45, 60, 75, 105, 120, 135)
RAIN_DISTANCES = tuple(range(20, 55, 5))
SNOW_CELLS = tuple(range(3, 10))
DEPTH_MODES = ("constant", "linear", "radial")
SPLITS = ("train", "val", "test")

# Fixed stand-ins for the image-editor settings.
RAIN_NOISE_STRENGTH = 1.5
RAIN_BLUR_SIGMA = 0.5
SNOW_NOISE_STRENGTH = 0.25
SNOW_BLUR_DISTANCE = 3
LEVEL_BLACK = 0.55
LEVEL_WHITE = 0.95


@dataclass(frozen=True)
class DegradationSpec:
    kind: str
    sigma: float = 15.0
    beta: float = 1.0
    airlight: float = 0.8
    depth_mode: str = "radial"
    angle: int = 45
    distance: int = 20
    cell_size: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown degradation kind {self.kind!r}; expected one of {KINDS}")
        if self.sigma < 0:
            raise InvalidArgumentError(f"noise sigma must be >= 0, got {self.sigma}")
        if self.beta < 0:
            raise InvalidArgumentError(f"haze beta must be >= 0, got {self.beta}")
        if not 0 < self.airlight <= 1:
            raise InvalidArgumentError(f"atmospheric light must be in (0, 1], got {self.airlight}")
        if self.depth_mode not in DEPTH_MODES:
            raise InvalidArgumentError(f"depth mode must be one of {DEPTH_MODES}, got {self.depth_mode!r}")
        if self.kind in ("rain", "snow"):
            _check_angle(self.angle)
        if self.kind == "rain":
            _check_distance(self.distance)
        if self.kind == "snow":
            _check_cell(self.cell_size)

    def describe(self):
        """Compact ``key=value`` form used in manifests."""
        if self.kind in ("noise", "adversarial"):
            fields = {"sigma": self.sigma}
        elif self.kind == "haze":
            fields = {"beta": self.beta, "A": self.airlight, "depth": self.depth_mode}
        elif self.kind == "rain":
            fields = {"angle": self.angle, "distance": self.distance}
        else:
            fields = {"angle": self.angle, "cell": self.cell_size}
        fields["seed"] = self.seed
        return ",".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in fields.items())

    @classmethod
    def parse(cls, kind, text):
        names = {"A": "airlight", "depth": "depth_mode", "cell": "cell_size"}
        kw = {}
        for item in text.split(","):
            key, _, val = item.partition("=")
            key = names.get(key, key)
            if key == "depth_mode":
                kw[key] = val
            elif key in ("angle", "distance", "cell_size", "seed"):
                kw[key] = int(val)
            else:
                kw[key] = float(val)
        return cls(kind=kind, **kw)


@dataclass
class ImagePair:
    degraded: np.ndarray
    clean: np.ndarray
    spec: DegradationSpec

    def __post_init__(self):
        if self.degraded.shape != self.clean.shape:
            raise ShapeError(f"degraded {self.degraded.shape} vs clean {self.clean.shape}")


def _check_angle(angle):
    if angle not in ANGLES:
        raise InvalidArgumentError(f"angle must be one of {ANGLES}, got {angle}")


def _check_distance(distance):
    if distance not in RAIN_DISTANCES:
        raise InvalidArgumentError(f"rain distance must be one of {RAIN_DISTANCES}, got {distance}")


def _check_cell(cell):
    if cell not in SNOW_CELLS:
        raise InvalidArgumentError(f"snow cell size must be an integer in [3, 9], got {cell}")


def _as_image(img):
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3:
        raise ShapeError(f"image must be [C,H,W], got shape {img.shape}")
    return img


# --- clean images -----------------------------------------------------------

def gen_clean(count, size, seed, channels=3):
    """Procedural textures: a colour gradient, a few flat rectangles and
    band-limited noise at two scales.  Returns ``[count, C, size, size]``."""
    if size < 16:
        raise InvalidArgumentError(f"image size must be >= 16, got {size}")
    if count < 1:
        raise InvalidArgumentError(f"count must be >= 1, got {count}")
    out = np.empty((count, channels, size, size), dtype=np.float32)
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    for n in range(count):
        g = substream(seed, "clean", n)
        base = g.uniform(0.25, 0.75, channels)
        img = np.empty((channels, size, size))
        for c in range(channels):
            gx, gy = g.uniform(-0.3, 0.3, 2)
            img[c] = base[c] + gx * (xx - 0.5) + gy * (yy - 0.5)
        for _ in range(int(g.integers(2, 6))):
            h, w = g.integers(size // 6, size // 2 + 1, 2)
            r0, c0 = g.integers(0, size - h + 1), g.integers(0, size - w + 1)
            colour = g.uniform(0.05, 0.95, channels)
            alpha = g.uniform(0.5, 0.9)
            patch = img[:, r0:r0 + h, c0:c0 + w]
            img[:, r0:r0 + h, c0:c0 + w] = (1 - alpha) * patch + alpha * colour[:, None, None]
        for sigma, amp in ((size / 8, 0.15), (1.0, 0.04)):
            field_ = ndimage.gaussian_filter(g.standard_normal((size, size)), sigma, mode="wrap")
            field_ /= field_.std() + 1e-12
            tint = g.uniform(0.5, 1.0, channels)
            img += amp * tint[:, None, None] * field_[None]
        out[n] = np.clip(img, 0.0, 1.0)
    return out


# --- noise --------------------------------------------------------------------

def apply_noise(clean, sigma, seed):
    """Additive white Gaussian noise, ``sigma`` on the 0-255 scale."""
    clean = _as_image(clean)
    spec = DegradationSpec("noise", sigma=float(sigma), seed=seed)
    if sigma == 0:
        return ImagePair(clean.copy(), clean, spec)
    n = substream(seed, "noise").standard_normal(clean.shape) * (sigma / 255.0)
    degraded = np.clip(clean + n, 0.0, 1.0).astype(np.float32)
    return ImagePair(degraded, clean, spec)


# --- haze ---------------------------------------------------------------------

def depth_map(shape, mode, d0=1.0, near=0.2, far=1.2):
    """Synthetic scene depth of shape ``(H, W)``.

    ``constant`` is ``d0`` everywhere; ``linear`` ramps from ``far`` at the
    top row to ``near`` at the bottom; ``radial`` grows from ``near`` at the
    centre to ``far`` at the corners.
    """
    h, w = shape
    if mode == "constant":
        return np.full((h, w), float(d0))
    if mode == "linear":
        ramp = np.linspace(far, near, h)
        return np.repeat(ramp[:, None], w, axis=1)
    if mode == "radial":
        yy, xx = np.mgrid[0:h, 0:w]
        r = np.hypot(yy - (h - 1) / 2, xx - (w - 1) / 2)
        return near + (far - near) * r / r.max()
    raise InvalidArgumentError(f"depth mode must be one of {DEPTH_MODES}, got {mode!r}")


def apply_haze(clean, beta, airlight, depth_mode="radial", seed=0, d0=1.0):
    """Atmospheric scattering: ``I = J*t + A*(1-t)`` with ``t = exp(-beta*depth)``."""
    clean = _as_image(clean)
    spec = DegradationSpec("haze", beta=float(beta), airlight=float(airlight),
                           depth_mode=depth_mode, seed=seed)
    d = depth_map(clean.shape[1:], depth_mode, d0=d0)
    t = np.exp(-float(beta) * d)[None]
    hazy = clean * t + airlight * (1.0 - t)
    return ImagePair(np.clip(hazy, 0.0, 1.0).astype(np.float32), clean, spec)


# --- layer helpers --------------------------------------------------------------

def screen(a, b):
    """Screen blend ``1 - (1-a)(1-b)``, evaluated as ``a + b(1-a)`` so that ``b == 0``
    returns ``a`` exactly and rounding can never take the result below ``a``."""
    return a + b * (1 - a)


def levels(layer, black=LEVEL_BLACK, white=LEVEL_WHITE):
    """Linear level remap with black/white points given as fractions of the layer's range."""
    lo, hi = float(layer.min()), float(layer.max())
    if hi <= lo:
        return np.zeros_like(layer)
    b = lo + black * (hi - lo)
    w = lo + white * (hi - lo)
    return np.clip((layer - b) / (w - b), 0.0, 1.0)


def motion_kernel(shape, angle, distance):
    """Line kernel of ``distance`` pixels at ``angle``, centred, wrapped onto an
    ``(H, W)`` grid for circular convolution.  Sums to 1."""
    h, w = shape
    k = np.zeros((h, w))
    theta = math.radians(angle)
    dx, dy = math.cos(theta), -math.sin(theta)  # row axis points down
    n = max(int(math.ceil(distance * 4)), 2)
    for s in np.linspace(-distance / 2, distance / 2, n):
        x, y = s * dx, s * dy
        x0, y0 = math.floor(x), math.floor(y)
        fx, fy = x - x0, y - y0
        for oy, wy in ((0, 1 - fy), (1, fy)):
            for ox, wx in ((0, 1 - fx), (1, fx)):
                k[(y0 + oy) % h, (x0 + ox) % w] += wy * wx
    return k / k.sum()


def motion_blur(layer, angle, distance):
    k = motion_kernel(layer.shape, angle, distance)
    return np.real(np.fft.ifft2(np.fft.fft2(layer) * np.fft.fft2(k)))


def crystallize(layer, cell_size, rng):
    """Voronoi-cell quantisation: seeds on a jittered grid of pitch ``cell_size``;
    every pixel takes the mean of its cell."""
    h, w = layer.shape
    gy, gx = np.mgrid[0:h:cell_size, 0:w:cell_size]
    seeds = np.stack([gy.ravel(), gx.ravel()], 1).astype(float)
    seeds += rng.uniform(0, cell_size, seeds.shape)
    yy, xx = np.mgrid[0:h, 0:w]
    _, label = cKDTree(seeds).query(np.stack([yy.ravel(), xx.ravel()], 1))
    sums = np.bincount(label, weights=layer.ravel(), minlength=len(seeds))
    counts = np.bincount(label, minlength=len(seeds))
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return means[label].reshape(h, w)


def _blend(clean, layer, spec):
    degraded = np.clip(screen(clean, layer[None].astype(np.float32)), 0.0, 1.0).astype(np.float32)
    return ImagePair(degraded, clean, spec)


# --- rain -----------------------------------------------------------------------

def rain_layer(shape, angle, distance, seed, strength=RAIN_NOISE_STRENGTH):
    g = substream(seed, "rain")
    speckle = np.clip(strength * g.uniform(-1.0, 1.0, shape), 0.0, 1.0)
    blurred = ndimage.gaussian_filter(speckle, RAIN_BLUR_SIGMA, mode="wrap")
    streaks = motion_blur(blurred, angle, distance)
    return levels(streaks)


def apply_rain(clean, angle, distance, seed, strength=RAIN_NOISE_STRENGTH):
    """Speckle -> Gaussian blur -> motion blur -> levels -> screen onto ``clean``."""
    clean = _as_image(clean)
    _check_angle(angle)
    _check_distance(distance)
    spec = DegradationSpec("rain", angle=angle, distance=distance, seed=seed)
    return _blend(clean, rain_layer(clean.shape[1:], angle, distance, seed, strength), spec)


# --- snow -----------------------------------------------------------------------

def snow_layer(shape, cell_size, angle, seed, strength=SNOW_NOISE_STRENGTH, stages=False):
    """Snow layer; with ``stages=True`` also returns the intermediate layers by name."""
    g = substream(seed, "snow")
    speckle = np.clip(strength * g.standard_normal(shape), 0.0, 1.0)
    blurred = motion_blur(speckle, angle, SNOW_BLUR_DISTANCE)
    lev = levels(blurred)
    mirrored = screen(lev, lev[:, ::-1])
    crystals = crystallize(mirrored, cell_size, substream(seed, "snow", "cells"))
    final = np.clip(motion_blur(crystals, angle, SNOW_BLUR_DISTANCE), 0.0, 1.0)
    if stages:
        return final, {"speckle": speckle, "blurred": blurred, "levels": lev,
                       "mirrored": mirrored, "crystals": crystals}
    return final


def apply_snow(clean, cell_size, angle, seed, strength=SNOW_NOISE_STRENGTH):
    clean = _as_image(clean)
    _check_cell(cell_size)
    _check_angle(angle)
    spec = DegradationSpec("snow", angle=angle, cell_size=cell_size, seed=seed)
    return _blend(clean, snow_layer(clean.shape[1:], cell_size, angle, seed, strength), spec)


# --- adversarial control -----------------------------------------------------------

def derangement(n, rng):
    if n < 2:
        raise InvalidArgumentError(f"a derangement needs at least 2 items, got {n}")
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == np.arange(n)):
            return perm


def make_adversarial(clean_pool, seed, sigma=15.0):
    """Noisy inputs paired with the *wrong* clean target.

    Pair ``j`` is ``(noise(clean[src[j]]), clean[j])`` where ``src`` is a
    derangement, so no input is matched with its own content.
    Returns ``(pairs, src)``.
    """
    clean_pool = np.asarray(clean_pool, dtype=np.float32)
    n = len(clean_pool)
    if n < 2:
        raise InvalidArgumentError(f"adversarial pairs need a pool of at least 2 images, got {n}")
    src = derangement(n, substream(seed, "derangement"))
    pairs = []
    for j in range(n):
        noisy = apply_noise(clean_pool[src[j]], sigma, derive_seed(seed, "adv-noise", j)).degraded
        pairs.append(ImagePair(noisy, clean_pool[j], DegradationSpec("adversarial", sigma=sigma, seed=seed)))
    return pairs, src


# --- paired dataset ----------------------------------------------------------------

def quantize(img):
    """Snap to the 8-bit grid the on-disk rasters use."""
    return (np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0).astype(np.float32)


@dataclass
class DatasetParams:
    sigma: float = 15.0
    beta_range: tuple = (0.6, 1.8)
    airlight_range: tuple = (0.7, 1.0)
    depth_mode: str = "radial"
    adversarial_sigma: float = 15.0


@dataclass
class PairedDataset:
    clean: np.ndarray                       # [N, C, H, W]
    degraded: dict                          # kind -> [N, C, H, W]
    splits: np.ndarray                      # per-image split name
    specs: dict                             # kind -> list of DegradationSpec per image
    seed: int = 0
    size: int = 0
    params: DatasetParams = field(default_factory=DatasetParams)
    derangements: dict = field(default_factory=dict)  # split -> source index array (adversarial)

    @property
    def kinds(self):
        return tuple(self.degraded)

    def ids(self, split):
        return np.flatnonzero(self.splits == split)

    def pairs(self, kind, split):
        """``(degraded, clean)`` stacked arrays of one kind restricted to a split."""
        if kind not in self.degraded:
            raise InvalidArgumentError(f"dataset has no {kind!r} images; kinds are {self.kinds}")
        idx = self.ids(split)
        return self.degraded[kind][idx], self.clean[idx]

    def counts(self):
        return {s: int(np.sum(self.splits == s)) for s in SPLITS}


def _draw_spec(kind, seed, i, params):
    g = substream(seed, "spec", kind, i)
    img_seed = derive_seed(seed, "degrade", kind, i)
    if kind == "noise":
        return DegradationSpec("noise", sigma=params.sigma, seed=img_seed)
    if kind == "haze":
        return DegradationSpec("haze", beta=round(float(g.uniform(*params.beta_range)), 6),
                               airlight=round(float(g.uniform(*params.airlight_range)), 6),
                               depth_mode=params.depth_mode, seed=img_seed)
    if kind == "rain":
        return DegradationSpec("rain", angle=int(g.choice(ANGLES)),
                               distance=int(g.choice(RAIN_DISTANCES)), seed=img_seed)
    if kind == "snow":
        return DegradationSpec("snow", angle=int(g.choice(ANGLES)),
                               cell_size=int(g.choice(SNOW_CELLS)), seed=img_seed)
    return DegradationSpec("adversarial", sigma=params.adversarial_sigma, seed=img_seed)


def render(spec, clean):
    """Apply a single-image spec (not ``adversarial``, which needs a pool)."""
    if spec.kind == "noise":
        return apply_noise(clean, spec.sigma, spec.seed).degraded
    if spec.kind == "haze":
        return apply_haze(clean, spec.beta, spec.airlight, spec.depth_mode, spec.seed).degraded
    if spec.kind == "rain":
        return apply_rain(clean, spec.angle, spec.distance, spec.seed).degraded
    if spec.kind == "snow":
        return apply_snow(clean, spec.cell_size, spec.angle, spec.seed).degraded
    raise InvalidArgumentError(f"{spec.kind!r} cannot be rendered from a single image")


def build_paired_dataset(kinds, counts, size, seed, channels=3, params=None):
    """Every clean image gets one degraded version per kind.

    ``counts`` maps ``train``/``val``/``test`` to image counts; ids are
    assigned train first, then val, then test.  Degradation parameters are
    drawn per image from the parameter grids, deterministically in ``seed``.
    Values are snapped to 8 bits so the in-memory set equals its on-disk form.
    """
    kinds = list(kinds)
    if len(set(kinds)) != len(kinds):
        raise InvalidArgumentError(f"duplicate kinds in {kinds}")
    for k in kinds:
        if k not in KINDS:
            raise InvalidArgumentError(f"unknown degradation kind {k!r}; expected one of {KINDS}")
    missing = [s for s in SPLITS if s not in counts]
    if missing:
        raise InvalidArgumentError(f"counts must cover {SPLITS}; missing {missing}")
    params = params or DatasetParams()
    total = sum(int(counts[s]) for s in SPLITS)
    splits = np.array([s for s in SPLITS for _ in range(int(counts[s]))])
    clean = quantize(gen_clean(total, size, derive_seed(seed, "data"), channels))
    degraded, specs, derangements = {}, {}, {}
    for kind in kinds:
        specs[kind] = [_draw_spec(kind, seed, i, params) for i in range(total)]
        arr = np.empty_like(clean)
        if kind == "adversarial":
            for s in SPLITS:
                idx = np.flatnonzero(splits == s)
                if len(idx) == 0:
                    continue
                if len(idx) < 2:
                    raise InvalidArgumentError(f"adversarial pairs need >= 2 {s} images")
                src = derangement(len(idx), substream(seed, "derangement", s))
                derangements[s] = src
                for j, i in enumerate(idx):
                    sp = specs[kind][i]
                    arr[i] = apply_noise(clean[idx[src[j]]], sp.sigma, sp.seed).degraded
        else:
            for i in range(total):
                arr[i] = render(specs[kind][i], clean[i])
        degraded[kind] = quantize(arr)
    return PairedDataset(clean, degraded, splits, specs, seed, size, params, derangements)


def redraw(ds: PairedDataset, kind, split, tag):
    """An independent draw of ``kind`` on the same clean images (fresh per-image seeds)."""
    idx = ds.ids(split)
    out = np.empty((len(idx),) + ds.clean.shape[1:], dtype=np.float32)
    for j, i in enumerate(idx):
        sp = replace(ds.specs[kind][i], seed=derive_seed(ds.seed, "redraw", tag, kind, int(i)))
        out[j] = render(sp, ds.clean[i])
    return quantize(out), ds.clean[idx]


# --- disk format ----------------------------------------------------------------------

MANIFEST = "manifest.txt"
FORMAT_TAG = "drikit-dataset 1"


def _to_png(img, path):
    arr = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
    if arr.shape[0] == 1:
        Image.fromarray(arr[0], mode="L").save(path, optimize=False)
    else:
        Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(path, optimize=False)


def _from_png(path):
    with Image.open(path) as im:
        arr = np.asarray(im, dtype=np.float32) / np.float32(255.0)
    arr = arr[None] if arr.ndim == 2 else arr.transpose(2, 0, 1)
    return np.ascontiguousarray(arr, dtype=np.float32)


def manifest_lines(ds: PairedDataset, echo=()):
    lines = [f"# {e}" for e in echo]
    lines += [
        f"format = {FORMAT_TAG}",
        f"seed = {ds.seed}",
        f"size = {ds.size}",
        f"channels = {ds.clean.shape[1]}",
        f"kinds = {','.join(ds.kinds)}",
    ]
    for s, n in ds.counts().items():
        lines.append(f"count.{s} = {n}")
    p = ds.params
    lines += [
        f"param.sigma = {p.sigma!r}",
        f"param.beta_range = {p.beta_range[0]!r},{p.beta_range[1]!r}",
        f"param.airlight_range = {p.airlight_range[0]!r},{p.airlight_range[1]!r}",
        f"param.depth_mode = {p.depth_mode}",
        f"param.adversarial_sigma = {p.adversarial_sigma!r}",
    ]
    for s, src in ds.derangements.items():
        lines.append(f"derangement.{s} = {','.join(str(int(v)) for v in src)}")
    for i in range(len(ds.clean)):
        lines.append(f"image.{i:06d}.split = {ds.splits[i]}")
        for kind in ds.kinds:
            lines.append(f"image.{i:06d}.{kind} = {ds.specs[kind][i].describe()}")
    return lines


def save_dataset(ds: PairedDataset, root, echo=()):
    root = Path(root)
    (root / "clean").mkdir(parents=True, exist_ok=True)
    for kind in ds.kinds:
        (root / kind).mkdir(exist_ok=True)
    for i in range(len(ds.clean)):
        _to_png(ds.clean[i], root / "clean" / f"{i:06d}.png")
        for kind in ds.kinds:
            _to_png(ds.degraded[kind][i], root / kind / f"{i:06d}.png")
    (root / MANIFEST).write_text("\n".join(manifest_lines(ds, echo)) + "\n")


def read_manifest(root):
    path = Path(root) / MANIFEST
    if not path.is_file():
        raise FileNotFoundError(f"no dataset manifest at {path}")
    entries, offset = {}, 0
    for raw in path.read_bytes().splitlines(keepends=True):
        line = raw.decode().strip()
        if line and not line.startswith("#"):
            key, sep, val = line.partition("=")
            if not sep:
                raise FormatError(f"manifest line without '=': {line!r}", offset)
            entries[key.strip()] = val.strip()
        offset += len(raw)
    if entries.get("format") != FORMAT_TAG:
        raise FormatError(f"manifest format {entries.get('format')!r}, expected {FORMAT_TAG!r}", 0)
    return entries


def load_dataset(root) -> PairedDataset:
    root = Path(root)
    m = read_manifest(root)
    kinds = [k for k in m["kinds"].split(",") if k]
    total = sum(int(m[f"count.{s}"]) for s in SPLITS)
    params = DatasetParams(
        sigma=float(m["param.sigma"]),
        beta_range=tuple(float(v) for v in m["param.beta_range"].split(",")),
        airlight_range=tuple(float(v) for v in m["param.airlight_range"].split(",")),
        depth_mode=m["param.depth_mode"],
        adversarial_sigma=float(m["param.adversarial_sigma"]),
    )
    clean = np.stack([_from_png(root / "clean" / f"{i:06d}.png") for i in range(total)])
    splits = np.array([m[f"image.{i:06d}.split"] for i in range(total)])
    degraded, specs = {}, {}
    for kind in kinds:
        degraded[kind] = np.stack([_from_png(root / kind / f"{i:06d}.png") for i in range(total)])
        specs[kind] = [DegradationSpec.parse(kind, m[f"image.{i:06d}.{kind}"]) for i in range(total)]
    derangements = {s: np.array([int(v) for v in m[f"derangement.{s}"].split(",")])
                    for s in SPLITS if f"derangement.{s}" in m}
    return PairedDataset(clean, degraded, splits, specs, int(m["seed"]), int(m["size"]), params, derangements)


def dataset_digest(root):
    """SHA-256 over every file under ``root`` (relative path + bytes), in sorted order."""
    h = hashlib.sha256()
    root = Path(root)
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(os.fsencode(path.relative_to(root).as_posix()))
        h.update(path.read_bytes())
    return h.hexdigest()
