"""Experiment runner: batch semi-targeted attacks over generated plates.

Sweeps the candidate count n over a set of unique plates, assesses every
outcome (simulated assessor by default, review UI in human mode) and
aggregates ASR, runtime and peak memory.  Progress is journaled to an
append-only manifest so an interrupted run resumes where it stopped and
reproduces exactly the same results (all randomness derives from the master
seed).

Two oracle profiles ship with the runner:

* ``desk``: synthetic whole-plate nearest-centroid oracle over a procedural
  glyph atlas, subsampled at stride 2 (brittle by construction); the
  reference recognizer is a full-resolution per-cell matcher.  Runs in
  minutes with no external engine.
* ``engine``: the external OCR engine adapter over a font-rendered atlas
  directory at paper scale.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assess import judge, simulated_assessor
from .attack import AttackConfig
from .core import LicenseLabel, Rng
from .oracle import (
    CellMatchOracle,
    DecisionOracle,
    NearestCentroidOracle,
    OcrEngineConfig,
    OracleTransportError,
    TesseractOracle,
)
from .plate import (
    GlyphAtlas,
    ThaiConsonantSet,
    default_layout,
    micro_layout,
    procedural_atlas,
    random_label,
    render_plate,
)
from .semitarget import run_semi_targeted

__all__ = [
    "ExperimentPlan",
    "ExperimentSummary",
    "DeskProfile",
    "EngineProfile",
    "ResourceMonitor",
    "measure_resources",
    "run_experiment",
    "emit_report",
    "load_summary",
]

SUMMARY_SCHEMA_VERSION = 1
PLAN_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything a run needs, serializable for the CLI."""

    plates: int = 100
    n_values: tuple = (1, 5, 10)
    master_seed: int = 0
    profile: str = "desk"
    selection: str = "auto"
    out_dir: str = "experiment"
    attack_overrides: dict = field(default_factory=dict)
    profile_options: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if self.plates < 1:
            raise ValueError("plan needs at least one plate")
        if not self.n_values or any(n < 1 for n in self.n_values):
            raise ValueError("n_values must be positive")
        if self.profile not in ("desk", "engine"):
            raise ValueError(f"unknown profile {self.profile!r}")
        object.__setattr__(self, "n_values", tuple(self.n_values))

    def to_dict(self) -> dict:
        return {
            "version": PLAN_SCHEMA_VERSION,
            "plates": self.plates,
            "n_values": list(self.n_values),
            "master_seed": self.master_seed,
            "profile": self.profile,
            "selection": self.selection,
            "out_dir": str(self.out_dir),
            "attack_overrides": dict(self.attack_overrides),
            "profile_options": dict(self.profile_options),
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        if d.get("version", PLAN_SCHEMA_VERSION) != PLAN_SCHEMA_VERSION:
            raise ValueError(f"unsupported plan version {d.get('version')!r}")
        return cls(
            plates=d.get("plates", 100),
            n_values=tuple(d.get("n_values", (1, 5, 10))),
            master_seed=d.get("master_seed", 0),
            profile=d.get("profile", "desk"),
            selection=d.get("selection", "auto"),
            out_dir=d.get("out_dir", "experiment"),
            attack_overrides=d.get("attack_overrides", {}),
            profile_options=d.get("profile_options", {}),
            workers=d.get("workers", 1),
        )


class DeskProfile:
    """Synthetic, engine-free oracle pair at desk scale.

    The attacked oracle matches whole plates against the rendered label
    universe (all consonant pairs with the plate's digits) on a stride-2
    pixel grid.  When ``twin_pairs`` is true (the default), every second
    consonant's glyph is made identical to its partner on the even pixel
    columns, so the subsampled oracle cannot tell the pair apart: those
    candidate classes are unrealizable, which is exactly what gives extra
    candidates their value.  Original plates use only the distinguishable
    consonants so clean reads always succeed.
    """

    name = "desk"

    def __init__(self, options: dict | None = None):
        options = dict(options or {})
        self.layout = micro_layout()
        count = int(options.get("consonant_count", 8))
        if count < 2 or count % 2:
            raise ValueError("consonant_count must be an even number >= 2")
        self.twin_pairs = bool(options.get("twin_pairs", True))
        self.stride = int(options.get("pixel_stride", 2))
        from .plate import MODERN_THAI_CONSONANTS

        chars = MODERN_THAI_CONSONANTS[:count]
        self.consonants = ThaiConsonantSet(chars)
        glyph_seed = int(options.get("atlas_seed", 2024))
        atlas = procedural_atlas(
            chars + "0123456789",
            cell_width=self.layout.slots[0].w,
            cell_height=self.layout.slots[0].h,
            seed=glyph_seed,
        )
        if self.twin_pairs:
            atlas = self._install_twins(atlas, chars, glyph_seed)
        self.atlas = atlas
        # Plates are sampled from the consonants the subsampled oracle can
        # actually read (the lexicographically first of each twin pair).
        if self.twin_pairs:
            self.plate_consonants = ThaiConsonantSet(chars[::2])
        else:
            self.plate_consonants = self.consonants

    def _install_twins(self, atlas: GlyphAtlas, chars: str, seed: int) -> GlyphAtlas:
        glyphs = {ch: np.array(atlas[ch]) for ch in atlas.chars()}
        for base, twin in zip(chars[::2], chars[1::2]):
            g = glyphs[base].copy()
            gen = Rng(seed=seed, stream=0).derive("twin", ord(twin)).generator()
            odd = gen.random((g.shape[0], g.shape[1] // 2)) < 0.45
            g[:, 1::2] = np.where(odd, 0.0, 1.0)
            if np.array_equal(g, glyphs[base]):  # astronomically unlikely
                g[0, 1] = 1.0 - g[0, 1]
            glyphs[twin] = g
        return GlyphAtlas(glyphs)

    def attack_config(self, overrides: dict, rng: Rng) -> AttackConfig:
        base = {
            "max_iterations": 60,
            "initial_batch": 16,
            "max_batch": 160,
            "query_budget": 30_000,
        }
        base.update(overrides)
        return AttackConfig(rng=rng, **base)

    def plate_label(self, rng: Rng) -> LicenseLabel:
        return random_label(rng, self.plate_consonants)

    def attacked_oracle(self, orig: LicenseLabel) -> DecisionOracle:
        labels = sorted(
            c1 + c2 + orig.digits
            for c1 in self.consonants.chars
            for c2 in self.consonants.chars
        )
        centroids = [
            render_plate(LicenseLabel.parse(t), self.atlas, self.layout)
            for t in labels
        ]
        return NearestCentroidOracle(centroids, labels, pixel_stride=self.stride)

    def reference_oracle(self) -> DecisionOracle:
        return CellMatchOracle(self.atlas, self.layout)


class EngineProfile:
    """External OCR engine at paper scale (atlas directory required)."""

    name = "engine"

    def __init__(self, options: dict | None = None):
        options = dict(options or {})
        atlas_dir = options.get("atlas")
        if not atlas_dir:
            raise ValueError("engine profile requires profile_options['atlas']")
        self.layout = default_layout()
        self.atlas = GlyphAtlas.load_dir(atlas_dir)
        self.consonants = ThaiConsonantSet(
            options.get("consonants")
            or "".join(c for c in self.atlas.chars() if c not in "0123456789")
        )
        self.plate_consonants = self.consonants
        self.engine_cfg = OcrEngineConfig(
            executable=options.get("executable", "tesseract"),
            lang=options.get("lang", "tha"),
            psm=int(options.get("psm", 10)),
            oem=int(options.get("oem", 1)),
            layout=self.layout,
            workers=int(options.get("engine_workers", 0)),
        )
        self._oracle = None

    def attack_config(self, overrides: dict, rng: Rng) -> AttackConfig:
        base = {"max_iterations": 300}
        base.update(overrides)
        return AttackConfig(rng=rng, **base)

    def plate_label(self, rng: Rng) -> LicenseLabel:
        return random_label(rng, self.plate_consonants)

    def attacked_oracle(self, orig: LicenseLabel) -> DecisionOracle:
        if self._oracle is None:
            self._oracle = TesseractOracle(self.engine_cfg)
        return self._oracle

    def reference_oracle(self) -> DecisionOracle:
        return CellMatchOracle(self.atlas, self.layout)


def _profile_for(plan: ExperimentPlan):
    if plan.profile == "desk":
        return DeskProfile(plan.profile_options)
    return EngineProfile(plan.profile_options)


class ResourceMonitor:
    """Peak-RSS and wall-clock sampler for one run.

    Samples resident memory of this process and its children at >= 1 Hz.
    When sampling is unavailable, peak memory reports None - unknown is
    never replaced with a made-up number.
    """

    def __init__(self, interval: float = 0.25):
        self.interval = interval
        self.peak_rss: int | None = None
        self.wall_seconds: float = 0.0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._start_time: float | None = None
        try:
            import psutil

            self._proc = psutil.Process(os.getpid())
        except Exception:
            self._proc = None

    def _sample(self) -> int | None:
        if self._proc is None:
            return None
        try:
            total = self._proc.memory_info().rss
            for child in self._proc.children(recursive=True):
                try:
                    total += child.memory_info().rss
                except Exception:
                    pass
            return total
        except Exception:
            return None

    def _loop(self):
        while not self._stop.is_set():
            rss = self._sample()
            if rss is not None:
                self.peak_rss = rss if self.peak_rss is None else max(self.peak_rss, rss)
            self._stop.wait(self.interval)

    def start(self) -> "ResourceMonitor":
        self._start_time = time.perf_counter()
        rss = self._sample()
        if rss is not None:
            self.peak_rss = rss
        if self._proc is not None:
            self._thread = threading.Thread(target=self._loop, daemon=True)
            self._thread.start()
        return self

    def stop(self) -> None:
        if self._start_time is not None:
            self.wall_seconds = time.perf_counter() - self._start_time
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None


def measure_resources(handle: ResourceMonitor):
    """(peak memory bytes or None, wall-clock seconds) of a finished run."""
    return handle.peak_rss, handle.wall_seconds


@dataclass
class ExperimentSummary:
    plan: ExperimentPlan
    rows: list
    peak_rss_bytes: int | None
    total_queries: int
    complete: bool

    def per_n(self) -> dict:
        out = {}
        for n in self.plan.n_values:
            cells = [r for r in self.rows if r["n"] == n]
            ok = [r for r in cells if r["status"] == "ok"]
            walls = sorted(r["wall_seconds"] for r in ok)
            successes = sum(1 for r in ok if r["assess_success"])
            out[n] = {
                "cells": len(cells),
                "failed_cells": len(cells) - len(ok),
                "asr": successes / self.plan.plates,
                "mean_seconds": float(np.mean(walls)) if walls else None,
                "median_seconds": float(np.median(walls)) if walls else None,
            }
        return out

    def to_dict(self) -> dict:
        return {
            "version": SUMMARY_SCHEMA_VERSION,
            "plan": self.plan.to_dict(),
            "rows": self.rows,
            "per_n": {str(n): v for n, v in self.per_n().items()},
            "peak_rss_bytes": self.peak_rss_bytes,
            "total_queries": self.total_queries,
            "complete": self.complete,
        }

    def deterministic_dict(self) -> dict:
        """Seed-reproducible view: drops wall-clock and memory numbers."""
        rows = []
        for r in self.rows:
            r = dict(r)
            r.pop("wall_seconds", None)
            rows.append(r)
        per_n = {}
        for n, v in self.per_n().items():
            v = dict(v)
            v.pop("mean_seconds", None)
            v.pop("median_seconds", None)
            per_n[str(n)] = v
        return {
            "plan": self.plan.to_dict(),
            "rows": rows,
            "per_n": per_n,
            "total_queries": self.total_queries,
            "complete": self.complete,
        }


def _plan_labels(plan: ExperimentPlan, profile) -> list:
    """Unique plate labels for the plan, derived from the master seed."""
    rng = Rng(seed=plan.master_seed, stream=0)
    labels, seen = [], set()
    salt = 0
    while len(labels) < plan.plates:
        lab = profile.plate_label(rng.derive("plate-label", len(labels), salt))
        if str(lab) in seen:
            salt += 1
            if salt > 10_000:
                raise ValueError("plate count exceeds the distinct label space")
            continue
        seen.add(str(lab))
        labels.append(lab)
        salt = 0
    return labels


def _journal_path(out_dir: Path) -> Path:
    return out_dir / "journal.jsonl"


def _load_journal(out_dir: Path) -> dict:
    path = _journal_path(out_dir)
    done = {}
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                row = json.loads(line)
                done[(row["plate"], row["n"])] = row
    return done


def _append_journal(out_dir: Path, row: dict) -> None:
    with open(_journal_path(out_dir), "a", encoding="utf-8") as fh:
        fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def run_experiment(
    plan: ExperimentPlan,
    review_store=None,
    stop_after_cells: int | None = None,
) -> ExperimentSummary:
    """Execute (or resume) the plan and aggregate a summary.

    Every (plate, n) cell runs the full semi-targeted pipeline plus
    assessment, then is appended to the manifest journal; cells already in
    the journal are skipped, which is all resuming amounts to.  A cell that
    fails (engine transport, unreadable plate) is marked failed with its
    reason and the experiment continues; the summary flags incompleteness.
    ``stop_after_cells`` ends the run early after that many new cells (for
    budgeted partial runs); the summary is then flagged incomplete.
    """
    out_dir = Path(plan.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "plan.json").write_text(
        json.dumps(plan.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    profile = _profile_for(plan)
    labels = _plan_labels(plan, profile)
    done = _load_journal(out_dir)
    monitor = ResourceMonitor().start()
    reference = profile.reference_oracle()
    ran = 0
    stopped_early = False

    for i, orig in enumerate(labels):
        img = render_plate(orig, profile.atlas, profile.layout)
        for n in plan.n_values:
            if (i, n) in done:
                continue
            if stop_after_cells is not None and ran >= stop_after_cells:
                stopped_early = True
                break
            row = _run_cell(plan, profile, reference, i, orig, img, n, review_store)
            _append_journal(out_dir, row)
            done[(i, n)] = row
            ran += 1
        if stopped_early:
            break

    monitor.stop()
    peak, _ = measure_resources(monitor)
    rows = [done[k] for k in sorted(done)]
    complete = (
        not stopped_early
        and len(rows) == plan.plates * len(plan.n_values)
        and all(r["status"] == "ok" for r in rows)
    )
    summary = ExperimentSummary(
        plan=plan,
        rows=rows,
        peak_rss_bytes=peak,
        total_queries=sum(r["total_queries"] for r in rows),
        complete=complete,
    )
    (out_dir / "summary.json").write_text(
        json.dumps(summary.to_dict(), ensure_ascii=False, sort_keys=True, indent=2)
        + "\n",
        encoding="utf-8",
    )
    return summary


def _run_cell(plan, profile, reference, i, orig, img, n, review_store) -> dict:
    cell_dir = Path(plan.out_dir) / f"plate{i:03d}_n{n:02d}"
    started = time.perf_counter()
    row = {
        "plate": i,
        "label": str(orig),
        "n": n,
        "outcome_id": f"plate{i:03d}_n{n:02d}",
        "dir": cell_dir.name,
        "status": "ok",
        "reason": None,
        "attack_success": False,
        "assess_success": False,
        "assess_reason": None,
        "selected_distance": None,
        "total_queries": 0,
        "wall_seconds": 0.0,
    }
    try:
        oracle = profile.attacked_oracle(orig)
        # One rng stream per plate, shared across n: candidate lists for
        # growing n share prefixes, so attacks are comparable across n.
        cfg = profile.attack_config(
            plan.attack_overrides, Rng(plan.master_seed).derive("plate", i)
        )
        outcome = run_semi_targeted(
            img,
            orig,
            n,
            oracle,
            cfg,
            atlas=profile.atlas,
            layout=profile.layout,
            consonants=profile.consonants,
            selection=plan.selection,
            review_store=review_store,
            workers=plan.workers,
            out_dir=cell_dir,
            outcome_id=row["outcome_id"],
        )
        row["total_queries"] = outcome.total_queries
        if outcome.no_adversarial:
            row["assess_reason"] = "no_adversarial"
        else:
            row["attack_success"] = True
            row["selected_distance"] = outcome.selected_result.final_distance
            record = simulated_assessor(outcome, reference, profile.consonants)
            verdict = judge(record, orig)
            row["assess_success"] = verdict.success
            row["assess_reason"] = verdict.reason
    except OracleTransportError as e:
        row["status"] = "failed"
        row["reason"] = f"transport: {e}"
    except Exception as e:  # keep the batch going; the cell carries the reason
        row["status"] = "failed"
        row["reason"] = f"{type(e).__name__}: {e}"
    row["wall_seconds"] = time.perf_counter() - started
    return row


def load_summary(path) -> dict:
    summary = json.loads(Path(path).read_text(encoding="utf-8"))
    if summary.get("version") != SUMMARY_SCHEMA_VERSION:
        raise ValueError(f"unsupported summary version {summary.get('version')!r}")
    return summary


def emit_report(summary, out_dir) -> dict:
    """Write report.csv (one row per plate x n) and report.svg.

    ``summary`` is an ExperimentSummary or a summary dict loaded from disk.
    Incomplete cells appear in the CSV with their failure reason and leave
    gaps in the plot rather than being interpolated over.
    """
    data = summary.to_dict() if isinstance(summary, ExperimentSummary) else summary
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    csv_path = out_dir / "report.csv"
    header = (
        "plate,label,n,status,reason,attack_success,assess_success,"
        "assess_reason,selected_distance,total_queries,wall_seconds"
    )
    lines = [header]
    for r in sorted(data["rows"], key=lambda r: (r["plate"], r["n"])):
        lines.append(
            ",".join(
                [
                    str(r["plate"]),
                    r["label"],
                    str(r["n"]),
                    r["status"],
                    _csv_field(r["reason"]),
                    str(int(r["attack_success"])),
                    str(int(r["assess_success"])),
                    _csv_field(r["assess_reason"]),
                    "" if r["selected_distance"] is None else repr(r["selected_distance"]),
                    str(r["total_queries"]),
                    repr(r["wall_seconds"]),
                ]
            )
        )
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    svg_path = out_dir / "report.svg"
    _plot_summary(data, svg_path)
    return {"csv": csv_path, "svg": svg_path}


def _csv_field(value) -> str:
    if value is None:
        return ""
    text = str(value)
    if "," in text or '"' in text or "\n" in text:
        return '"' + text.replace('"', '""') + '"'
    return text


def _plot_summary(data: dict, svg_path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    per_n = data["per_n"]
    ns = sorted(int(k) for k in per_n)
    asr_pts = [(n, per_n[str(n)]["asr"]) for n in ns if per_n[str(n)]["failed_cells"] == 0]
    rt_pts = [
        (n, per_n[str(n)]["mean_seconds"])
        for n in ns
        if per_n[str(n)]["mean_seconds"] is not None
    ]
    incomplete = [n for n in ns if per_n[str(n)]["failed_cells"] > 0]

    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.set_xlabel("candidate count n")
    ax1.set_ylabel("attack success rate")
    ax1.set_ylim(0.0, 1.0)
    if asr_pts:
        ax1.plot(*zip(*asr_pts), marker="o", color="tab:blue", label="ASR")
    ax2 = ax1.twinx()
    ax2.set_ylabel("mean runtime (s)")
    if rt_pts:
        ax2.plot(*zip(*rt_pts), marker="s", color="tab:orange", label="runtime")
    for n in incomplete:
        ax1.axvline(n, color="tab:red", linestyle=":", alpha=0.6)
        ax1.annotate("incomplete", (n, 0.5), rotation=90, color="tab:red",
                     ha="right", va="center", fontsize=8)
    ax1.set_xticks(ns)
    fig.legend(loc="upper left", bbox_to_anchor=(0.12, 0.95))
    fig.tight_layout()
    fig.savefig(svg_path, format="svg")
    plt.close(fig)
