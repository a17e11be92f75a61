"""Rasterize a glyph atlas from a TTF font, for runs against a real OCR
engine.

The library deliberately does no font rendering of its own: an atlas is
just a directory of 8-bit grayscale PNGs named by hex codepoint, produced
once by any renderer.  This script makes one with Pillow.

Run:  python demos/build_atlas_from_font.py <font.ttf> <outdir> \
          [--cell 50x90] [--chars "<consonants>0123456789"]

A Thai-capable font (e.g. one of the Noto Thai or TH Sarabun families) is
required for consonant glyphs.
"""

import argparse

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from plateforge import GlyphAtlas
from plateforge.plate import MODERN_THAI_CONSONANTS


def rasterize(font_path: str, chars: str, cell_w: int, cell_h: int) -> GlyphAtlas:
    font = ImageFont.truetype(font_path, size=int(cell_h * 0.8))
    glyphs = {}
    for ch in chars:
        canvas = Image.new("L", (cell_w, cell_h), color=255)
        draw = ImageDraw.Draw(canvas)
        left, top, right, bottom = draw.textbbox((0, 0), ch, font=font)
        x = (cell_w - (right - left)) // 2 - left
        y = (cell_h - (bottom - top)) // 2 - top
        draw.text((x, y), ch, fill=0, font=font)
        glyphs[ch] = np.asarray(canvas, dtype=np.float64) / 255.0
    return GlyphAtlas(glyphs)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("font")
    parser.add_argument("outdir")
    parser.add_argument("--cell", default="50x90", help="cell WxH in pixels")
    parser.add_argument(
        "--chars", default=MODERN_THAI_CONSONANTS + "0123456789",
        help="codepoints to rasterize",
    )
    args = parser.parse_args()
    w, h = (int(v) for v in args.cell.split("x"))
    atlas = rasterize(args.font, args.chars, w, h)
    atlas.save_dir(args.outdir)
    print(f"wrote {len(args.chars)} glyph PNGs ({w}x{h}) to {args.outdir}")


if __name__ == "__main__":
    main()
