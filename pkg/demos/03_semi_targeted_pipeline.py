"""One plate through the full semi-targeted pipeline at several n.

The desk profile attacks a subsampling nearest-centroid recognizer whose
glyph set contains twin pairs it cannot tell apart; candidate classes that
land on a twin are unrealizable, which is exactly why more candidates help.
A full-resolution per-cell matcher plays the human assessor.

Run:  python demos/03_semi_targeted_pipeline.py [outdir]
"""

import sys
import tempfile
from pathlib import Path

from plateforge import Rng, render_plate
from plateforge.assess import judge, simulated_assessor
from plateforge.harness import DeskProfile
from plateforge.semitarget import CandidateFailure, run_semi_targeted

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
profile = DeskProfile()
orig = profile.plate_label(Rng(11).derive("plate-label", 0, 0))
img = render_plate(orig, profile.atlas, profile.layout)
reference = profile.reference_oracle()
print(f"original plate: {orig}  (readable consonants: {profile.plate_consonants.chars})")

for n in (1, 5, 10):
    oracle = profile.attacked_oracle(orig)
    cfg = profile.attack_config({}, Rng(11).derive("plate", 0))
    outcome = run_semi_targeted(
        img, orig, n, oracle, cfg,
        atlas=profile.atlas, layout=profile.layout,
        consonants=profile.consonants,
        out_dir=out / f"n{n:02d}",
    )
    print(f"\nn={n}:")
    for cand, res in zip(outcome.candidates, outcome.results):
        if isinstance(res, CandidateFailure):
            print(f"  {cand.label}  FAILED ({res.reason})")
        else:
            print(f"  {cand.label}  ok, distance {res.final_distance:.2f}, "
                  f"{res.total_queries} queries")
    if outcome.no_adversarial:
        print("  -> no adversarial example at this n")
        continue
    sel = outcome.selected_result
    record = simulated_assessor(outcome, reference, profile.consonants)
    verdict = judge(record, orig)
    print(f"  -> selected {sel.target} (closest to the original)")
    print(f"     oracle reads the stored image as: {oracle.classify(sel.image)!r}")
    print(f"     assessor reads it as {record.q2_read!r} -> "
          f"{'ATTACK SUCCESS' if verdict.success else 'failure: ' + verdict.reason}")

print(f"\nbundles written under {out}")
