"""Command line interface.

Subcommands: ``plate gen``, ``attack run``, ``semi run``, ``review serve``,
``assess judge``, ``experiment run``, ``report emit``.  All take ``--seed``,
``--config <json>`` and ``--out <dir>``.  Exit codes: 0 success, 2 invalid
config, 3 oracle transport failure, 4 incomplete experiment.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from .assess import RecordStore, asr
from .attack import AttackConfig, attack_targeted
from .core import LicenseLabel, Rng, load_png, save_png
from .harness import (
    ExperimentPlan,
    emit_report,
    load_summary,
    run_experiment,
)
from .oracle import (
    CellMatchOracle,
    NearestCentroidOracle,
    OcrEngineConfig,
    OracleTransportError,
    TesseractOracle,
)
from .plate import (
    GlyphAtlas,
    ThaiConsonantSet,
    default_layout,
    load_plate_config,
    procedural_atlas,
    random_label,
    render_plate,
    small_layout,
)
from .review import SessionStore, serve
from .semitarget import ConfusabilityTable, load_outcome, run_semi_targeted

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRANSPORT = 3
EXIT_INCOMPLETE = 4


def _fail_config(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(EXIT_CONFIG)


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        _fail_config(f"cannot read config {path}: {e}")


def _resolve_layout(cfg: dict):
    name = cfg.get("layout", "default")
    if isinstance(name, str):
        if name == "default":
            return default_layout()
        if name == "small":
            return small_layout()
        try:
            layout, _ = load_plate_config(name)
            return layout
        except (OSError, ValueError, KeyError) as e:
            _fail_config(f"bad layout {name!r}: {e}")
    _fail_config(f"layout must be 'default', 'small' or a config path")


def _resolve_consonants(cfg: dict) -> ThaiConsonantSet:
    chars = cfg.get("consonants")
    try:
        return ThaiConsonantSet(chars) if chars else ThaiConsonantSet()
    except ValueError as e:
        _fail_config(str(e))


def _resolve_atlas(cfg: dict, layout) -> GlyphAtlas:
    atlas_dir = cfg.get("atlas")
    if atlas_dir:
        try:
            return GlyphAtlas.load_dir(atlas_dir)
        except (OSError, ValueError) as e:
            _fail_config(f"cannot load atlas {atlas_dir}: {e}")
    consonants = _resolve_consonants(cfg)
    slot = layout.slots[0]
    return procedural_atlas(
        consonants.chars + "0123456789", cell_width=slot.w, cell_height=slot.h,
        seed=int(cfg.get("atlas_seed", 2024)),
    )


def _resolve_oracle(cfg: dict, atlas, layout, orig_label=None):
    spec = cfg.get("oracle", {"kind": "cell-match"})
    kind = spec.get("kind")
    if kind == "tesseract":
        return TesseractOracle(
            OcrEngineConfig(
                executable=spec.get("executable", "tesseract"),
                lang=spec.get("lang", "tha"),
                psm=int(spec.get("psm", 10)),
                oem=int(spec.get("oem", 1)),
                layout=layout,
                workers=int(spec.get("workers", 0)),
                cell_timeout=float(spec.get("cell_timeout", 10.0)),
            )
        )
    if kind == "cell-match":
        return CellMatchOracle(atlas, layout)
    if kind == "desk-centroid":
        if orig_label is None:
            _fail_config("desk-centroid oracle needs the original label")
        consonants = _resolve_consonants(cfg)
        labels = sorted(
            c1 + c2 + orig_label.digits
            for c1 in consonants.chars
            for c2 in consonants.chars
        )
        centroids = [
            render_plate(LicenseLabel.parse(t), atlas, layout) for t in labels
        ]
        return NearestCentroidOracle(
            centroids, labels, pixel_stride=int(spec.get("stride", 2))
        )
    _fail_config(f"unknown oracle kind {kind!r}")


def _attack_config(cfg: dict, seed: int) -> AttackConfig:
    fields = dict(cfg.get("attack", {}))
    try:
        return AttackConfig(rng=Rng(seed=seed, stream=0), **fields)
    except (TypeError, ValueError) as e:
        _fail_config(f"bad attack config: {e}")


@click.group()
def main():
    """Semi-targeted adversarial attacks on license plate OCR."""


@main.group()
def plate():
    """Plate grammar and synthesis."""


@plate.command("gen")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def plate_gen(seed, config_path, out_dir):
    """Generate unique random plates (PNGs + labels.json)."""
    cfg = _read_config(config_path)
    layout = _resolve_layout(cfg)
    consonants = _resolve_consonants(cfg)
    atlas = _resolve_atlas(cfg, layout)
    count = int(cfg.get("count", 10))
    if count < 1:
        _fail_config("count must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = Rng(seed=seed, stream=0)
    labels, seen, salt = [], set(), 0
    while len(labels) < count:
        lab = random_label(rng.derive("plate-label", len(labels), salt), consonants)
        if str(lab) in seen:
            salt += 1
            continue
        seen.add(str(lab))
        labels.append(lab)
        salt = 0
    for i, lab in enumerate(labels):
        save_png(render_plate(lab, atlas, layout), out / f"plate_{i:03d}.png")
    (out / "labels.json").write_text(
        json.dumps(
            {"version": 1, "labels": [str(x) for x in labels]},
            ensure_ascii=False, indent=2,
        ) + "\n",
        encoding="utf-8",
    )
    click.echo(f"wrote {count} plates to {out}")


@main.group()
def attack():
    """Targeted decision-based attack."""


@attack.command("run")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def attack_run(seed, config_path, out_dir):
    """Attack one plate toward one target label."""
    cfg = _read_config(config_path)
    for key in ("original", "target"):
        if key not in cfg:
            _fail_config(f"config must set {key!r}")
    layout = _resolve_layout(cfg)
    atlas = _resolve_atlas(cfg, layout)
    try:
        orig_label = LicenseLabel.parse(cfg.get("original_label", cfg["target"]))
    except ValueError as e:
        _fail_config(str(e))
    oracle = _resolve_oracle(cfg, atlas, layout, orig_label)
    attack_cfg = _attack_config(cfg, seed)
    try:
        x_orig = load_png(cfg["original"])
    except OSError as e:
        _fail_config(f"cannot read original image: {e}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = attack_targeted(
            x_orig, cfg["target"], oracle, attack_cfg, atlas=atlas, layout=layout
        )
    except OracleTransportError as e:
        click.echo(f"oracle transport failure: {e}", err=True)
        sys.exit(EXIT_TRANSPORT)
    except (ValueError, RuntimeError) as e:
        _fail_config(str(e))
    (out / "result.json").write_text(
        json.dumps(result.to_dict(), ensure_ascii=False, sort_keys=True, indent=2)
        + "\n",
        encoding="utf-8",
    )
    save_png(result.image, out / "final.png")
    (out / "timing.json").write_text(
        json.dumps({"wall_seconds": result.wall_seconds}) + "\n", encoding="utf-8"
    )
    click.echo(
        f"success={result.success} distance={result.final_distance:.4f} "
        f"queries={result.total_queries}"
    )


@main.group()
def semi():
    """Semi-targeted attack (candidate fan-out plus selection)."""


@semi.command("run")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def semi_run(seed, config_path, out_dir):
    """Run the semi-targeted pipeline for one plate."""
    cfg = _read_config(config_path)
    for key in ("original", "original_label"):
        if key not in cfg:
            _fail_config(f"config must set {key!r}")
    layout = _resolve_layout(cfg)
    atlas = _resolve_atlas(cfg, layout)
    consonants = _resolve_consonants(cfg)
    try:
        orig = LicenseLabel.parse(cfg["original_label"])
    except ValueError as e:
        _fail_config(str(e))
    oracle = _resolve_oracle(cfg, atlas, layout, orig)
    attack_cfg = _attack_config(cfg, seed)
    n = int(cfg.get("n", 1))
    selection = cfg.get("selection", "auto")
    confusability = None
    if cfg.get("confusability"):
        try:
            confusability = ConfusabilityTable.load_csv(cfg["confusability"])
        except (OSError, ValueError) as e:
            _fail_config(f"bad confusability table: {e}")
    try:
        x_orig = load_png(cfg["original"])
    except OSError as e:
        _fail_config(f"cannot read original image: {e}")

    store = None
    server = None
    if selection == "human":
        store = SessionStore()
        server = serve(cfg.get("bind", "127.0.0.1:8321"), store)
        click.echo(f"review UI at {server.url} - waiting for selection")
    try:
        outcome = run_semi_targeted(
            x_orig,
            orig,
            n,
            oracle,
            attack_cfg,
            atlas=atlas,
            layout=layout,
            consonants=consonants,
            selection=selection,
            review_store=store,
            selection_timeout=float(cfg.get("selection_timeout", 86_400.0)),
            fallback_to_auto=bool(cfg.get("fallback_to_auto", False)),
            mutate_digits=bool(cfg.get("mutate_digits", False)),
            confusability=confusability,
            workers=int(cfg.get("workers", 1)),
            out_dir=out_dir,
        )
    except OracleTransportError as e:
        click.echo(f"oracle transport failure: {e}", err=True)
        sys.exit(EXIT_TRANSPORT)
    except (ValueError, RuntimeError) as e:
        _fail_config(str(e))
    finally:
        if server is not None:
            server.stop()
    if outcome.no_adversarial:
        click.echo("no adversarial example: every candidate failed")
    else:
        sel = outcome.selected_result
        click.echo(
            f"selected candidate {outcome.selected_index} "
            f"({sel.target}) distance={sel.final_distance:.4f}"
        )


@main.group()
def review():
    """Human review service."""


@review.command("serve")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--out", "out_dir", type=click.Path(), default=None)
def review_serve(seed, config_path, out_dir):
    """Serve assessment interviews for a directory of outcome bundles."""
    cfg = _read_config(config_path)
    outcomes_dir = cfg.get("outcomes")
    if not outcomes_dir:
        _fail_config("config must set 'outcomes' (bundle directory)")
    records_path = cfg.get("records") or (
        str(Path(out_dir) / "records.jsonl") if out_dir else None
    )
    if not records_path:
        _fail_config("config must set 'records' (or pass --out)")
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    store = SessionStore()
    sessions = []
    for bundle in sorted(Path(outcomes_dir).iterdir()):
        if not (bundle / "outcome.json").exists():
            continue
        try:
            outcome = load_outcome(bundle)
        except (ValueError, KeyError) as e:
            _fail_config(f"bad outcome bundle {bundle}: {e}")
        if outcome.selected_image is None:
            continue
        session = store.create_assessment_session(
            outcome.outcome_id, outcome.selected_image,
            true_label=outcome.original_label,
        )
        sessions.append(session)
    if not sessions:
        _fail_config(f"no assessable outcomes under {outcomes_dir}")
    records = RecordStore(records_path)
    server = serve(cfg.get("bind", "127.0.0.1:8321"), store)
    click.echo(f"serving {len(sessions)} assessment sessions at {server.url}")
    exit_when_done = bool(cfg.get("exit_when_done", True))
    try:
        from .assess import AssessmentRecord, _now_iso

        pending = {s.id: s for s in sessions}
        while pending:
            time.sleep(0.2)
            for sid in list(pending):
                s = pending[sid]
                if s.state == "resolved":
                    records.append(
                        AssessmentRecord(
                            outcome_id=s.payload["outcome_id"],
                            assessor_id=cfg.get("assessor_id", "human"),
                            q1_legible=s.resolution["q1"],
                            q2_read=s.resolution["q2"],
                            timestamp=_now_iso(),
                        )
                    )
                    del pending[sid]
            if not exit_when_done:
                pending = pending or {s.id: s for s in sessions if s.state == "pending"}
    except KeyboardInterrupt:
        click.echo("interrupted; shutting down")
    finally:
        server.stop()
    click.echo(f"records written to {records_path}")


@main.group()
def assess():
    """Phase-2 judging."""


@assess.command("judge")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--out", "out_dir", type=click.Path(), default=None)
def assess_judge(seed, config_path, out_dir):
    """Judge stored assessment records against their outcome bundles."""
    cfg = _read_config(config_path)
    for key in ("records", "outcomes"):
        if key not in cfg:
            _fail_config(f"config must set {key!r}")
    originals = {}
    for bundle in sorted(Path(cfg["outcomes"]).iterdir()):
        if (bundle / "outcome.json").exists():
            outcome = load_outcome(bundle)
            originals[outcome.outcome_id] = LicenseLabel.parse(outcome.original_label)
    store = RecordStore(cfg["records"])
    try:
        verdicts = store.judge_all(originals)
    except KeyError as e:
        _fail_config(str(e))
    if not verdicts:
        _fail_config("no assessment records to judge")
    rate = asr(verdicts)
    payload = {
        "version": 1,
        "asr": rate,
        "verdicts": [
            {"outcome_id": v.outcome_id, "success": v.success, "reason": v.reason}
            for v in verdicts
        ],
    }
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verdicts.json").write_text(
            json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
    click.echo(f"ASR = {rate:.3f} over {len(verdicts)} records")


@main.group()
def experiment():
    """Batch experiments."""


@experiment.command("run")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def experiment_run(seed, config_path, out_dir):
    """Run (or resume) an experiment plan; exit 4 if incomplete."""
    cfg = _read_config(config_path)
    cfg.setdefault("master_seed", seed)
    cfg["out_dir"] = str(out_dir)
    try:
        plan = ExperimentPlan.from_dict(cfg)
    except (TypeError, ValueError) as e:
        _fail_config(f"bad plan: {e}")
    try:
        summary = run_experiment(plan)
    except OracleTransportError as e:
        click.echo(f"oracle transport failure: {e}", err=True)
        sys.exit(EXIT_TRANSPORT)
    except (ValueError, RuntimeError) as e:
        _fail_config(str(e))
    for n, stats in summary.per_n().items():
        mean_s = stats["mean_seconds"]
        click.echo(
            f"n={n}: ASR={stats['asr']:.3f} "
            f"mean={mean_s:.2f}s" if mean_s is not None else f"n={n}: no completed cells"
        )
    if not summary.complete:
        click.echo("experiment incomplete; see journal.jsonl", err=True)
        sys.exit(EXIT_INCOMPLETE)
    click.echo(f"summary written to {Path(out_dir) / 'summary.json'}")


@main.group()
def report():
    """Result reporting."""


@report.command("emit")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def report_emit(seed, config_path, out_dir):
    """Emit report.csv and report.svg from a summary.json."""
    cfg = _read_config(config_path)
    if "summary" not in cfg:
        _fail_config("config must set 'summary' (path to summary.json)")
    try:
        summary = load_summary(cfg["summary"])
    except (OSError, ValueError) as e:
        _fail_config(f"cannot load summary: {e}")
    try:
        paths = emit_report(summary, out_dir)
    except OSError as e:
        click.echo(f"write failure: {e}", err=True)
        sys.exit(1)
    click.echo(f"wrote {paths['csv']} and {paths['svg']}")


if __name__ == "__main__":
    main()
