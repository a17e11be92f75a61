"""Tour of the license-number grammar and plate synthesis.

Run:  python demos/01_grammar_and_rendering.py [outdir]
"""

import sys
import tempfile
from pathlib import Path

from plateforge import (
    LicenseLabel,
    Rng,
    is_valid,
    load_png,
    micro_layout,
    procedural_atlas,
    random_label,
    render_plate,
    save_png,
)

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
out.mkdir(parents=True, exist_ok=True)

# A valid Thai plate number is two consonants then four digits.
for text in ("มค3456", "มกุ1234", "มค123", "AB1234"):
    print(f"is_valid({text!r}) -> {is_valid(text)}")

# Labels are value objects that round-trip through their string form.
label = LicenseLabel.parse("มค3456")
assert LicenseLabel.parse(str(label)) == label
print(f"\nlabel {label} = consonants {label.consonants!r} + digits {label.digits!r}")

# Uniform random labels from a seeded stream are reproducible.
print("\nseeded draws:")
for k in range(3):
    print("  ", random_label(Rng(seed=7).derive("demo", k)))

# Rendering composites per-codepoint glyph bitmaps into six layout slots.
# Without a font handy we use the procedural atlas (random-but-stable
# patterns); for a real OCR run, build one from a Thai font once
# (demos/build_atlas_from_font.py).
layout = micro_layout()
atlas = procedural_atlas(
    "มค0123456789",
    cell_width=layout.slots[0].w,
    cell_height=layout.slots[0].h,
    seed=1,
)
img = render_plate(label, atlas, layout)
print(f"\nrendered {label}: {img.width}x{img.height}, d={img.d}")

png = out / "plate.png"
save_png(img, png)
back = load_png(png)
print(f"wrote {png}; PNG round-trip exact: {back == img}")
