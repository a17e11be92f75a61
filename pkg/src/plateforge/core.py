"""Core value types and image arithmetic shared by every other module.

Images are grayscale, real-valued in [0,1]; quantization to 8 bits happens
only at PNG / OCR-engine boundaries.  All types here are immutable values,
safe to share between threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from PIL import Image

__all__ = [
    "PlateImage",
    "LicenseLabel",
    "Rng",
    "derive_stream",
    "l2_distance",
    "clip",
    "blend",
    "sample_unit_sphere",
    "quantize8",
    "load_png",
    "save_png",
    "THAI_CONSONANT_RANGE",
]

# Thai consonant block ko kai..ho nokhuk.  Membership check only; the
# admissible set on plates lives in plateforge.plate.
THAI_CONSONANT_RANGE = (0x0E01, 0x0E2E)


def _is_thai_consonant(ch: str) -> bool:
    return THAI_CONSONANT_RANGE[0] <= ord(ch) <= THAI_CONSONANT_RANGE[1]


@dataclass(frozen=True)
class PlateImage:
    """Fixed-size grayscale raster; the attack's search space.

    ``pixels`` is a read-only float64 array of shape (height, width) with
    every value finite and inside [0,1].  Two images are equal iff their
    dimensions and pixel values are bitwise equal.
    """

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected a 2-d raster, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("pixel values must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("pixel values must lie in [0,1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def d(self) -> int:
        """Search dimensionality: width x height."""
        return self.pixels.size

    def ravel(self) -> np.ndarray:
        """Row-major flat view (read-only)."""
        return self.pixels.reshape(-1)

    @classmethod
    def from_flat(cls, flat: np.ndarray, width: int, height: int) -> "PlateImage":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != width * height:
            raise ValueError(
                f"flat length {flat.size} != width*height {width * height}"
            )
        return cls(flat.reshape(height, width))

    @classmethod
    def full(cls, width: int, height: int, value: float = 0.0) -> "PlateImage":
        return cls(np.full((height, width), float(value)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PlateImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(
            self.pixels, other.pixels
        )

    def __hash__(self) -> int:
        return hash((self.pixels.shape, self.pixels.tobytes()))

    def __repr__(self) -> str:
        return f"PlateImage({self.width}x{self.height})"


@dataclass(frozen=True)
class LicenseLabel:
    """Two Thai consonants followed by four Western digits.

    Construction validates structure (codepoint ranges and lengths);
    membership in a configured consonant set is checked by
    ``plateforge.plate.is_valid``.
    """

    consonants: str
    digits: str

    def __post_init__(self):
        if len(self.consonants) != 2 or not all(
            _is_thai_consonant(c) for c in self.consonants
        ):
            raise ValueError(
                f"consonants must be 2 Thai consonant codepoints, got {self.consonants!r}"
            )
        if len(self.digits) != 4 or not all(c in "0123456789" for c in self.digits):
            raise ValueError(f"digits must be 4 chars of 0-9, got {self.digits!r}")

    def __str__(self) -> str:
        return self.consonants + self.digits

    @classmethod
    def parse(cls, text: str) -> "LicenseLabel":
        """Inverse of str(); raises ValueError on malformed input."""
        if len(text) != 6:
            raise ValueError(f"label must be 6 codepoints, got {len(text)}")
        return cls(consonants=text[:2], digits=text[2:])


def derive_stream(*parts) -> int:
    """Stable 64-bit stream id from arbitrary parts.

    SHA-256 based so ids are reproducible across runs and platforms
    (Python's hash() is salted per process and must not be used here).
    """
    blob = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


@dataclass(frozen=True)
class Rng:
    """Splittable counter-based RNG handle.

    A value type: the same (seed, stream) always reproduces the same
    sequence, across runs, platforms and thread schedules.  Independent
    streams are derived from one master seed via ``derive``; instances are
    never shared between tasks, each task owns its stream.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(ss))

    def derive(self, *parts) -> "Rng":
        """Child Rng with an independent stream keyed by ``parts``."""
        return Rng(seed=self.seed, stream=derive_stream(self.stream, *parts))


def l2_distance(a: PlateImage, b: PlateImage) -> float:
    """Euclidean distance sqrt(sum((a_i-b_i)^2)) between same-sized images."""
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(
            f"dimension mismatch: {a.pixels.shape} vs {b.pixels.shape}"
        )
    return float(np.linalg.norm(a.pixels - b.pixels))


def clip(img: PlateImage) -> PlateImage:
    """Clamp every pixel to [0,1]; idempotent."""
    return PlateImage(np.clip(img.pixels, 0.0, 1.0))


def clip_array(arr: np.ndarray) -> np.ndarray:
    """Array-level clamp used on the attack's hot path."""
    return np.clip(arr, 0.0, 1.0)


def blend(a: PlateImage, b: PlateImage, alpha: float) -> PlateImage:
    """Per-pixel (1-alpha)*a + alpha*b, clipped to the valid box."""
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(
            f"dimension mismatch: {a.pixels.shape} vs {b.pixels.shape}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0,1], got {alpha}")
    return PlateImage(np.clip((1.0 - alpha) * a.pixels + alpha * b.pixels, 0.0, 1.0))


def sample_unit_sphere(rng: Rng, d: int, count: int) -> np.ndarray:
    """Draw ``count`` independent unit vectors uniform on the d-sphere.

    Normalized i.i.d. Gaussians; returns an array of shape (count, d).
    Deterministic for a fixed (seed, stream).
    """
    if d < 1 or count < 1:
        raise ValueError("d and count must be >= 1")
    gen = rng.generator()
    vecs = gen.standard_normal((count, d))
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    # Zero-norm draws are measure-zero but would poison the normalization.
    while np.any(norms == 0.0):
        bad = norms[:, 0] == 0.0
        vecs[bad] = gen.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    return vecs / norms


def quantize8(img: PlateImage) -> PlateImage:
    """Snap pixels to the 8-bit grid: round(x*255)/255.

    Exactly reproduces a PNG export/import round trip, so a classifier fed
    the quantized image agrees with one fed the written file.
    """
    return PlateImage(np.rint(img.pixels * 255.0) / 255.0)


def save_png(img: PlateImage, path) -> None:
    """Write as 8-bit grayscale PNG, mapping x -> round(x*255)."""
    data = np.rint(img.pixels * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")


def load_png(path) -> PlateImage:
    """Read an 8-bit grayscale PNG, mapping byte v -> v/255."""
    with Image.open(path) as im:
        data = np.asarray(im.convert("L"), dtype=np.float64)
    return PlateImage(data / 255.0)
