"""Thai license-number grammar and deterministic plate synthesis.

A license number is valid iff it is two Thai consonants from the configured
consonant set followed by four Western digits.  Plates are rendered by
compositing per-codepoint glyph bitmaps (the atlas) into fixed layout slots;
text rasterization itself stays outside the library - an atlas is a directory
of 8-bit grayscale PNGs named by hex codepoint, produced once by any renderer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    THAI_CONSONANT_RANGE,
    LicenseLabel,
    PlateImage,
    Rng,
    load_png,
    save_png,
)

__all__ = [
    "ThaiConsonantSet",
    "GlyphAtlas",
    "PlateLayout",
    "Slot",
    "MODERN_THAI_CONSONANTS",
    "default_consonant_set",
    "default_layout",
    "small_layout",
    "micro_layout",
    "procedural_atlas",
    "is_valid",
    "render_plate",
    "random_label",
    "load_plate_config",
    "save_plate_config",
]

# The two obsolete consonants kho khuat / kho khon never appear on modern
# plates; dropping them from the block leaves the 44 modern consonants.
_OBSOLETE = {0x0E03, 0x0E05}
MODERN_THAI_CONSONANTS = "".join(
    chr(c)
    for c in range(THAI_CONSONANT_RANGE[0], THAI_CONSONANT_RANGE[1] + 1)
    if c not in _OBSOLETE
)

_DIGITS = "0123456789"


@dataclass(frozen=True)
class ThaiConsonantSet:
    """Ordered, duplicate-free list of consonants admissible on plates."""

    chars: str = MODERN_THAI_CONSONANTS

    def __post_init__(self):
        if not self.chars:
            raise ValueError("consonant set must be non-empty")
        if len(set(self.chars)) != len(self.chars):
            raise ValueError("consonant set contains duplicates")
        lo, hi = THAI_CONSONANT_RANGE
        for ch in self.chars:
            if not lo <= ord(ch) <= hi:
                raise ValueError(f"{ch!r} (U+{ord(ch):04X}) is not a Thai consonant")

    def __len__(self) -> int:
        return len(self.chars)

    def __contains__(self, ch: str) -> bool:
        return ch in self.chars

    def __iter__(self):
        return iter(self.chars)


def default_consonant_set() -> ThaiConsonantSet:
    return ThaiConsonantSet()


@dataclass(frozen=True)
class Slot:
    """One glyph cell: rectangle in plate coordinates."""

    x: int
    y: int
    w: int
    h: int


@dataclass(frozen=True)
class PlateLayout:
    """Plate geometry: six ordered glyph slots on a uniform background."""

    width: int
    height: int
    slots: tuple
    background: float = 1.0

    def __post_init__(self):
        if len(self.slots) != 6:
            raise ValueError(f"expected 6 slots, got {len(self.slots)}")
        object.__setattr__(self, "slots", tuple(self.slots))
        occupied = np.zeros((self.height, self.width), dtype=bool)
        for s in self.slots:
            if s.x < 0 or s.y < 0 or s.x + s.w > self.width or s.y + s.h > self.height:
                raise ValueError(f"slot {s} exceeds plate bounds")
            region = occupied[s.y : s.y + s.h, s.x : s.x + s.w]
            if region.any():
                raise ValueError(f"slot {s} overlaps another slot")
            region[:] = True
        if not 0.0 <= self.background <= 1.0:
            raise ValueError("background luminance must be in [0,1]")


def _spread_slots(width, height, cell_w, cell_h, gap, edge):
    y = (height - cell_h) // 2
    return tuple(
        Slot(x=edge + i * (cell_w + gap), y=y, w=cell_w, h=cell_h) for i in range(6)
    )


def default_layout() -> PlateLayout:
    """360x120 plate, six 50x90 slots, 10-px gaps: d = 43,200."""
    return PlateLayout(
        width=360,
        height=120,
        slots=_spread_slots(360, 120, 50, 90, gap=10, edge=5),
        background=1.0,
    )


def small_layout() -> PlateLayout:
    """90x30 desk-scale plate (d = 2,700) for synthetic-oracle suites."""
    return PlateLayout(
        width=90,
        height=30,
        slots=_spread_slots(90, 30, 12, 24, gap=2, edge=4),
        background=1.0,
    )


def micro_layout() -> PlateLayout:
    """54x16 plate (d = 864), small enough for attack suites to converge in
    a few thousand queries.  Slot origins sit on even coordinates so a
    stride-2 subsampling oracle sees the same cell parity everywhere."""
    return PlateLayout(
        width=54,
        height=16,
        slots=_spread_slots(54, 16, 6, 12, gap=2, edge=4),
        background=1.0,
    )


class GlyphAtlas:
    """Mapping codepoint -> glyph bitmap, all cells the same size."""

    def __init__(self, glyphs: dict):
        if not glyphs:
            raise ValueError("atlas is empty")
        shapes = {g.shape for g in glyphs.values()}
        if len(shapes) != 1:
            raise ValueError(f"glyph cells differ in size: {sorted(shapes)}")
        for ch, g in glyphs.items():
            if g.min() < 0.0 or g.max() > 1.0:
                raise ValueError(f"glyph {ch!r} has pixels outside [0,1]")
        self._glyphs = {
            ch: np.ascontiguousarray(g, dtype=np.float64) for ch, g in glyphs.items()
        }
        for g in self._glyphs.values():
            g.flags.writeable = False
        self.cell_height, self.cell_width = next(iter(shapes))

    def __contains__(self, ch: str) -> bool:
        return ch in self._glyphs

    def __getitem__(self, ch: str) -> np.ndarray:
        try:
            return self._glyphs[ch]
        except KeyError:
            raise KeyError(f"no glyph for U+{ord(ch):04X} ({ch!r})") from None

    def chars(self):
        return sorted(self._glyphs)

    def covers(self, text: str) -> bool:
        return all(ch in self._glyphs for ch in text)

    @classmethod
    def load_dir(cls, path) -> "GlyphAtlas":
        """Read an atlas directory of ``<hex-codepoint>.png`` files."""
        path = Path(path)
        glyphs = {}
        for png in sorted(path.glob("*.png")):
            ch = chr(int(png.stem, 16))
            glyphs[ch] = load_png(png).pixels
        if not glyphs:
            raise ValueError(f"no glyph PNGs under {path}")
        return cls(glyphs)

    def save_dir(self, path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        for ch, g in self._glyphs.items():
            save_png(PlateImage(g), path / f"{ord(ch):04x}.png")


def procedural_atlas(
    chars: str, cell_width: int = 12, cell_height: int = 24, seed: int = 0,
    ink_fraction: float = 0.45,
) -> GlyphAtlas:
    """Deterministic stand-in atlas of per-codepoint binary patterns.

    Useful wherever a font-rendered atlas is unavailable (desk-scale suites,
    tests): patterns are keyed by codepoint so every glyph is stable across
    runs and pairwise far apart in L2.  Ink is 0.0 on a 1.0 background, so
    glyphs survive 8-bit quantization exactly.
    """
    glyphs = {}
    for ch in chars:
        gen = Rng(seed=seed, stream=0).derive("glyph", ord(ch)).generator()
        ink = gen.random((cell_height, cell_width)) < ink_fraction
        glyphs[ch] = np.where(ink, 0.0, 1.0)
    return GlyphAtlas(glyphs)


def is_valid(text: str, consonants: ThaiConsonantSet | None = None) -> bool:
    """Total predicate: two admissible Thai consonants then four digits.

    Rejects combining marks, wrong lengths, and non-Thai letters; never
    raises for any input string.
    """
    if consonants is None:
        consonants = default_consonant_set()
    if not isinstance(text, str) or len(text) != 6:
        return False
    return (
        text[0] in consonants
        and text[1] in consonants
        and all(c in _DIGITS for c in text[2:])
    )


def _resize_nearest(glyph: np.ndarray, w: int, h: int) -> np.ndarray:
    gh, gw = glyph.shape
    if (gh, gw) == (h, w):
        return glyph
    rows = (np.arange(h) * gh) // h
    cols = (np.arange(w) * gw) // w
    return glyph[rows][:, cols]


def render_plate(
    label: LicenseLabel, atlas: GlyphAtlas, layout: PlateLayout
) -> PlateImage:
    """Composite the six glyphs of ``label`` into the layout slots.

    Deterministic: identical inputs yield byte-identical rasters.  Glyph
    ink darkens the background (per-pixel minimum), so blank glyph pixels
    leave the plate untouched.
    """
    text = str(label)
    for ch in text:
        if ch not in atlas:
            raise KeyError(f"no glyph for U+{ord(ch):04X} ({ch!r})")
    canvas = np.full((layout.height, layout.width), layout.background)
    for ch, slot in zip(text, layout.slots):
        cell = _resize_nearest(atlas[ch], slot.w, slot.h)
        region = canvas[slot.y : slot.y + slot.h, slot.x : slot.x + slot.w]
        np.minimum(region, cell, out=region)
    return PlateImage(canvas)


def random_label(rng: Rng, consonants: ThaiConsonantSet | None = None) -> LicenseLabel:
    """Uniformly sampled valid label; deterministic per (seed, stream)."""
    if consonants is None:
        consonants = default_consonant_set()
    gen = rng.generator()
    cons = "".join(consonants.chars[i] for i in gen.integers(0, len(consonants), 2))
    digits = "".join(_DIGITS[i] for i in gen.integers(0, 10, 4))
    return LicenseLabel(consonants=cons, digits=digits)


CONFIG_VERSION = 1


def save_plate_config(
    path, layout: PlateLayout, consonants: ThaiConsonantSet | None = None
) -> None:
    """Write the layout + consonant set JSON config (schema version 1)."""
    cfg = {
        "version": CONFIG_VERSION,
        "width": layout.width,
        "height": layout.height,
        "background": layout.background,
        "slots": [{"x": s.x, "y": s.y, "w": s.w, "h": s.h} for s in layout.slots],
        "consonants": (consonants or default_consonant_set()).chars,
    }
    Path(path).write_text(
        json.dumps(cfg, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_plate_config(path):
    """Read a config written by save_plate_config; returns (layout, set)."""
    cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    if cfg.get("version") != CONFIG_VERSION:
        raise ValueError(f"unsupported plate config version: {cfg.get('version')!r}")
    layout = PlateLayout(
        width=cfg["width"],
        height=cfg["height"],
        slots=tuple(Slot(s["x"], s["y"], s["w"], s["h"]) for s in cfg["slots"]),
        background=cfg["background"],
    )
    return layout, ThaiConsonantSet(cfg["consonants"])
