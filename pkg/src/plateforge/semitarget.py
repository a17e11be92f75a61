"""Semi-targeted attack: candidate generation, fan-out, and selection.

Relaxes the targeted goal to "any member of an adversary-chosen set of
acceptable classes": generate n valid candidate license numbers that differ
from the original in at least one consonant, run the targeted attack once
per candidate, drop failures, and pick the survivor most similar to the
original (automatically by L2, or by a human through the review service).
The selected image is re-checked against the oracle so every returned
outcome carries a valid-but-wrong predicted label by construction.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .attack import (
    AttackConfig,
    AttackResult,
    BudgetExhaustedError,
    EstimatorCollapseError,
    TargetNotRealizableError,
    attack_targeted,
)
from .core import LicenseLabel, PlateImage, Rng, l2_distance, load_png, save_png
from .oracle import DecisionOracle
from .plate import GlyphAtlas, PlateLayout, ThaiConsonantSet, is_valid

__all__ = [
    "CandidateClass",
    "CandidateFailure",
    "SemiTargetedOutcome",
    "ConfusabilityTable",
    "generate_candidates",
    "run_semi_targeted",
    "resume_semi_targeted",
    "select_auto",
    "select_human",
    "SelectionTimeout",
    "save_outcome",
    "load_outcome",
]

OUTCOME_SCHEMA_VERSION = 1

_DIGITS = "0123456789"


class SelectionTimeout(RuntimeError):
    """Human selection did not arrive before the session deadline."""


@dataclass(frozen=True)
class CandidateClass:
    """One adversary-chosen target class.

    ``provenance`` lists the consonant positions (0 and/or 1) where the
    candidate differs from the original label.
    """

    label: LicenseLabel
    provenance: tuple

    def __post_init__(self):
        if not self.provenance:
            raise ValueError("candidate must differ in at least one consonant")


@dataclass(frozen=True)
class CandidateFailure:
    """Failed candidate attack, kept in the outcome with its reason."""

    target: str
    reason: str  # target_not_realizable | estimator_collapse | budget_exhausted | not_adversarial
    detail: str = ""


class ConfusabilityTable:
    """Symmetric consonant-pair weights steering candidate substitutions."""

    def __init__(self, weights: dict):
        self._w = {}
        for (a, b), wt in weights.items():
            if wt < 0:
                raise ValueError(f"negative weight for pair ({a},{b})")
            self._w[frozenset((a, b))] = float(wt)

    def weight(self, a: str, b: str) -> float:
        if a == b:
            return 0.0
        return self._w.get(frozenset((a, b)), 0.0)

    @classmethod
    def load_csv(cls, path) -> "ConfusabilityTable":
        """Rows of ``a,b,weight``; a header line is skipped if present."""
        weights = {}
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.reader(fh):
                if not row or len(row) < 3:
                    continue
                a, b, wt = row[0].strip(), row[1].strip(), row[2].strip()
                try:
                    weights[(a, b)] = float(wt)
                except ValueError:
                    continue  # header or junk line
        if not weights:
            raise ValueError(f"no confusability rows in {path}")
        return cls(weights)


def _feasible_count(consonants: ThaiConsonantSet, mutate_digits: bool) -> int:
    pairs = len(consonants) ** 2 - 1
    return pairs * (10_000 if mutate_digits else 1)


def _draw_consonants(orig: LicenseLabel, consonants, gen, confusability):
    chars = consonants.chars
    if confusability is None:
        i = gen.integers(0, len(chars))
        j = gen.integers(0, len(chars))
        return chars[i] + chars[j]
    # Weighted mode: mutate a non-empty subset of positions, drawing each
    # replacement proportionally to its confusability with the original.
    while True:
        mutate = [gen.random() < 0.5 for _ in range(2)]
        if any(mutate):
            break
    out = []
    for pos, do in enumerate(mutate):
        c = orig.consonants[pos]
        if not do:
            out.append(c)
            continue
        w = np.array([confusability.weight(c, x) for x in chars])
        if w.sum() == 0.0:
            w = np.array([0.0 if x == c else 1.0 for x in chars])
        out.append(chars[gen.choice(len(chars), p=w / w.sum())])
    return "".join(out)


def generate_candidates(
    orig: LicenseLabel,
    n: int,
    consonants: ThaiConsonantSet,
    rng: Rng,
    mutate_digits: bool = False,
    confusability: ConfusabilityTable | None = None,
) -> list:
    """Sample n distinct valid candidate classes, without replacement.

    Every candidate differs from ``orig`` in at least one consonant; digits
    are preserved unless ``mutate_digits`` is set.  Sampling is a seeded
    rejection sequence, so for a fixed rng the first k candidates of any two
    calls with n >= k coincide (prefix property).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    feasible = _feasible_count(consonants, mutate_digits)
    if n > feasible:
        raise ValueError(f"n={n} exceeds the {feasible} feasible candidate classes")
    gen = rng.generator()
    out, seen = [], set()
    max_draws = max(10_000, 50 * feasible)
    draws = 0
    while len(out) < n:
        draws += 1
        if draws > max_draws:
            raise RuntimeError("candidate sampling failed to fill the request")
        cons = _draw_consonants(orig, consonants, gen, confusability)
        digits = (
            "".join(_DIGITS[i] for i in gen.integers(0, 10, 4))
            if mutate_digits
            else orig.digits
        )
        prov = tuple(i for i in range(2) if cons[i] != orig.consonants[i])
        if not prov:
            continue
        label = LicenseLabel(consonants=cons, digits=digits)
        text = str(label)
        if text in seen:
            continue
        seen.add(text)
        out.append(CandidateClass(label=label, provenance=prov))
    return out


def select_auto(survivors, x_orig: PlateImage) -> int:
    """Index of the survivor closest to the original (ties: lowest index)."""
    if not survivors:
        raise ValueError("no survivors to select from")
    dists = [l2_distance(r.image, x_orig) for r in survivors]
    return int(np.argmin(dists))


def select_human(survivors, session, timeout: float = 86_400.0) -> int:
    """Block until the review UI resolves ``session``; returns the index.

    Raises SelectionTimeout after ``timeout`` seconds (default 24 h),
    marking the session expired so late clients get a conflict.
    """
    if not survivors:
        raise ValueError("no survivors to select from")
    if not session.wait(timeout):
        session.expire()
        raise SelectionTimeout(f"session {session.id} expired after {timeout}s")
    index = session.resolution["index"]
    if not 0 <= index < len(survivors):
        raise RuntimeError(f"session resolved with out-of-range index {index}")
    return index


@dataclass
class SemiTargetedOutcome:
    """Everything one semi-targeted run produced."""

    outcome_id: str
    original_label: str
    n: int
    candidates: list
    results: list  # AttackResult | CandidateFailure, aligned with candidates
    selection_mode: str
    selected_index: int | None
    overhead_queries: int

    @property
    def survivor_indices(self) -> list:
        return [
            i
            for i, r in enumerate(self.results)
            if isinstance(r, AttackResult) and r.success
        ]

    @property
    def no_adversarial(self) -> bool:
        return not self.survivor_indices

    @property
    def selected_result(self) -> AttackResult | None:
        if self.selected_index is None:
            return None
        return self.results[self.selected_index]

    @property
    def selected_image(self) -> PlateImage | None:
        r = self.selected_result
        return None if r is None else r.image

    @property
    def total_queries(self) -> int:
        """Every oracle query the run issued, candidates plus orchestration."""
        return self.overhead_queries + sum(
            r.total_queries for r in self.results if isinstance(r, AttackResult)
        )

    @property
    def wall_seconds(self) -> float:
        return sum(
            r.wall_seconds for r in self.results if isinstance(r, AttackResult)
        )


def _candidate_config(cfg: AttackConfig, index: int, label: str) -> AttackConfig:
    # Stream keyed by identity, not shared state: candidate results are
    # independent of scheduling and of how many candidates run alongside.
    return replace(cfg, rng=cfg.rng.derive("candidate", index, label))


def _run_one(
    index: int,
    cand: CandidateClass,
    x_orig: PlateImage,
    oracle: DecisionOracle,
    cfg: AttackConfig,
    atlas: GlyphAtlas,
    layout: PlateLayout,
):
    target = str(cand.label)
    try:
        result = attack_targeted(
            x_orig,
            target,
            oracle,
            _candidate_config(cfg, index, target),
            atlas=atlas,
            layout=layout,
        )
    except TargetNotRealizableError as e:
        return CandidateFailure(target, "target_not_realizable", str(e))
    except EstimatorCollapseError as e:
        return CandidateFailure(target, "estimator_collapse", str(e))
    except BudgetExhaustedError as e:
        return CandidateFailure(target, "budget_exhausted", str(e))
    if not result.success:
        return CandidateFailure(
            target, "not_adversarial", f"final image classified as {result.predicted_label!r}"
        )
    return result


def run_semi_targeted(
    img: PlateImage,
    orig: LicenseLabel,
    n: int,
    oracle: DecisionOracle,
    cfg: AttackConfig,
    atlas: GlyphAtlas,
    layout: PlateLayout,
    consonants: ThaiConsonantSet | None = None,
    selection: str = "auto",
    review_store=None,
    selection_timeout: float = 86_400.0,
    fallback_to_auto: bool = False,
    mutate_digits: bool = False,
    confusability: ConfusabilityTable | None = None,
    workers: int = 1,
    out_dir=None,
    outcome_id: str | None = None,
) -> SemiTargetedOutcome:
    """Full semi-targeted pipeline for one plate.

    Generates candidates, attacks each one (in parallel when ``workers`` >
    1; results are deterministic regardless of scheduling), excludes
    failures, applies selection to the survivors, and re-asserts that the
    oracle labels the stored winner as its candidate class.  With
    ``out_dir`` set, per-candidate results are checkpointed as they finish
    and the final bundle is written there; a crashed run restarted with the
    same arguments reuses finished candidates (see resume_semi_targeted).
    """
    if consonants is None:
        consonants = ThaiConsonantSet()
    if selection not in ("auto", "human"):
        raise ValueError(f"unknown selection mode {selection!r}")
    if selection == "human" and review_store is None:
        raise ValueError("human selection requires a review_store")

    overhead = 0
    got = oracle.classify(img)
    overhead += 1
    if got != str(orig):
        raise ValueError(
            f"oracle must read the clean plate as {orig!s}, got {got!r}"
        )

    candidates = generate_candidates(
        orig,
        n,
        consonants,
        cfg.rng.derive("candidates", str(orig)),
        mutate_digits=mutate_digits,
        confusability=confusability,
    )

    oid = outcome_id if outcome_id is not None else f"{orig}_n{n}"
    out_path = Path(out_dir) if out_dir is not None else None
    cached = {}
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        save_png(img, out_path / "original.png")
        cached = _load_checkpoints(out_path, candidates, cfg)

    def run_index(i):
        if i in cached:
            return cached[i]
        res = _run_one(i, candidates[i], img, oracle, cfg, atlas, layout)
        if out_path is not None and isinstance(res, AttackResult):
            _write_candidate(out_path, i, res)
        return res

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_index, range(len(candidates))))
    else:
        results = [run_index(i) for i in range(len(candidates))]

    outcome = SemiTargetedOutcome(
        outcome_id=oid,
        original_label=str(orig),
        n=n,
        candidates=candidates,
        results=results,
        selection_mode=selection,
        selected_index=None,
        overhead_queries=overhead,
    )

    survivor_idx = outcome.survivor_indices
    if survivor_idx:
        survivors = [results[i] for i in survivor_idx]
        if selection == "human":
            session = review_store.create_selection_session(
                outcome_id=oid,
                original=img,
                original_label=str(orig),
                candidates=[r.image for r in survivors],
            )
            try:
                picked = select_human(survivors, session, timeout=selection_timeout)
            except SelectionTimeout:
                if not fallback_to_auto:
                    raise
                picked = select_auto(survivors, img)
        else:
            picked = select_auto(survivors, img)
        outcome.selected_index = survivor_idx[picked]

        # The valid-but-wrong guarantee, re-checked on the stored image.
        sel = outcome.selected_result
        verdict = oracle.classify(sel.image)
        outcome.overhead_queries += 1
        if verdict != sel.target:
            raise RuntimeError(
                f"stored adversarial image re-classified as {verdict!r}, "
                f"expected {sel.target!r}"
            )
        if not is_valid(sel.target, consonants) or sel.target == str(orig):
            raise RuntimeError(f"selected target {sel.target!r} violates the class set")

    if out_path is not None:
        save_outcome(outcome, out_path)
    return outcome


def resume_semi_targeted(out_dir, **kwargs) -> SemiTargetedOutcome:
    """Re-run a checkpointed bundle directory, reusing finished candidates.

    Equivalent to calling run_semi_targeted with the same arguments and
    ``out_dir``; completed candidate attacks are loaded instead of re-run,
    so a run killed mid-flight resumes at the first unfinished candidate
    (or directly at selection).
    """
    return run_semi_targeted(out_dir=out_dir, **kwargs)


# -- bundle serialization ---------------------------------------------------


def _candidate_stem(i: int) -> str:
    return f"candidate_{i:02d}"


def _write_candidate(out_path: Path, i: int, res: AttackResult) -> None:
    stem = _candidate_stem(i)
    save_png(res.image, out_path / f"{stem}.png")
    record = res.to_dict()
    record["index"] = i
    _write_json(out_path / f"{stem}.json", record)


def _write_json(path: Path, obj) -> None:
    path.write_text(
        json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def _load_checkpoints(out_path: Path, candidates, cfg: AttackConfig) -> dict:
    """Map candidate index -> finished AttackResult for matching checkpoints."""
    cached = {}
    for i, cand in enumerate(candidates):
        jf = out_path / f"{_candidate_stem(i)}.json"
        pf = out_path / f"{_candidate_stem(i)}.png"
        if not (jf.exists() and pf.exists()):
            continue
        try:
            rec = json.loads(jf.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            continue
        cand_cfg = _candidate_config(cfg, i, str(cand.label))
        if rec.get("target") != str(cand.label) or rec.get("config") != cand_cfg.to_dict():
            continue  # stale checkpoint from a different run
        cached[i] = AttackResult(
            target=rec["target"],
            success=rec["success"],
            image=load_png(pf),
            predicted_label=rec["predicted_label"],
            final_distance=rec["final_distance"],
            iterations=rec["iterations"],
            total_queries=rec["total_queries"],
            queries_by_phase=rec["queries_by_phase"],
            distance_trace=rec["distance_trace"],
            wall_seconds=0.0,
            stop_reason=rec["stop_reason"],
            config=cand_cfg,
        )
    return cached


def save_outcome(outcome: SemiTargetedOutcome, out_dir) -> None:
    """Write the on-disk outcome bundle.

    Layout: original.png, candidate_XX.json / candidate_XX.png per
    successful attack, outcome.json, and a timing.json sidecar.  Everything
    except timing.json is a pure function of inputs and seeds; wall-clock
    numbers live only in the sidecar so bundles compare byte-identical
    across reruns.
    """
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    entries = []
    timing = {"candidates": {}, "total_wall_seconds": 0.0}
    for i, (cand, res) in enumerate(zip(outcome.candidates, outcome.results)):
        entry = {
            "index": i,
            "label": str(cand.label),
            "provenance": list(cand.provenance),
        }
        if isinstance(res, AttackResult):
            _write_candidate(out_path, i, res)
            entry["status"] = "success" if res.success else "failed"
            entry["reason"] = None if res.success else "not_adversarial"
            entry["result_file"] = f"{_candidate_stem(i)}.json"
            entry["image_file"] = f"{_candidate_stem(i)}.png"
            entry["final_distance"] = res.final_distance
            entry["total_queries"] = res.total_queries
            timing["candidates"][_candidate_stem(i)] = res.wall_seconds
            timing["total_wall_seconds"] += res.wall_seconds
        else:
            entry["status"] = "failed"
            entry["reason"] = res.reason
            entry["detail"] = res.detail
            entry["result_file"] = None
            entry["image_file"] = None
        entries.append(entry)
    record = {
        "version": OUTCOME_SCHEMA_VERSION,
        "outcome_id": outcome.outcome_id,
        "original_label": outcome.original_label,
        "original_image": "original.png",
        "n": outcome.n,
        "selection_mode": outcome.selection_mode,
        "selected_index": outcome.selected_index,
        "overhead_queries": outcome.overhead_queries,
        "candidates": entries,
    }
    _write_json(out_path / "outcome.json", record)
    _write_json(out_path / "timing.json", timing)


def load_outcome(out_dir) -> SemiTargetedOutcome:
    """Reconstruct an outcome bundle written by save_outcome."""
    out_path = Path(out_dir)
    rec = json.loads((out_path / "outcome.json").read_text(encoding="utf-8"))
    if rec.get("version") != OUTCOME_SCHEMA_VERSION:
        raise ValueError(f"unsupported outcome version {rec.get('version')!r}")
    timing = {}
    tf = out_path / "timing.json"
    if tf.exists():
        timing = json.loads(tf.read_text(encoding="utf-8")).get("candidates", {})
    candidates, results = [], []
    for entry in rec["candidates"]:
        label = LicenseLabel.parse(entry["label"])
        candidates.append(
            CandidateClass(label=label, provenance=tuple(entry["provenance"]))
        )
        if entry["result_file"] is None:
            results.append(
                CandidateFailure(
                    entry["label"], entry["reason"], entry.get("detail", "")
                )
            )
        else:
            r = json.loads((out_path / entry["result_file"]).read_text("utf-8"))
            results.append(
                AttackResult(
                    target=r["target"],
                    success=r["success"],
                    image=load_png(out_path / entry["image_file"]),
                    predicted_label=r["predicted_label"],
                    final_distance=r["final_distance"],
                    iterations=r["iterations"],
                    total_queries=r["total_queries"],
                    queries_by_phase=r["queries_by_phase"],
                    distance_trace=r["distance_trace"],
                    wall_seconds=timing.get(_candidate_stem(entry["index"]), 0.0),
                    stop_reason=r["stop_reason"],
                    config=AttackConfig(
                        max_iterations=r["config"]["max_iterations"],
                        initial_batch=r["config"]["initial_batch"],
                        max_batch=r["config"]["max_batch"],
                        bisect_tol=r["config"]["bisect_tol"],
                        step_floor=r["config"]["step_floor"],
                        query_budget=r["config"]["query_budget"],
                        delta_scale=r["config"]["delta_scale"],
                        rng=Rng(r["config"]["seed"], r["config"]["stream"]),
                    ),
                )
            )
    return SemiTargetedOutcome(
        outcome_id=rec["outcome_id"],
        original_label=rec["original_label"],
        n=rec["n"],
        candidates=candidates,
        results=results,
        selection_mode=rec["selection_mode"],
        selected_index=rec["selected_index"],
        overhead_queries=rec["overhead_queries"],
    )
