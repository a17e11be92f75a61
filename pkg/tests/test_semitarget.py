import json
import threading
import time
from pathlib import Path

import numpy as np
import pytest

from plateforge.attack import AttackResult, attack_targeted
from plateforge.core import LicenseLabel, PlateImage, Rng, l2_distance
from plateforge.plate import ThaiConsonantSet, is_valid, render_plate
from plateforge.review import SessionStore
from plateforge.semitarget import (
    CandidateFailure,
    ConfusabilityTable,
    SelectionTimeout,
    _candidate_config,
    generate_candidates,
    load_outcome,
    run_semi_targeted,
    select_auto,
    select_human,
)

ORIG = LicenseLabel.parse("มค4364")


class TestGenerateCandidates:
    def test_digits_preserved_and_consonants_differ(self):
        cands = generate_candidates(ORIG, 10, ThaiConsonantSet(), Rng(3))
        assert len(cands) == 10
        for c in cands:
            assert c.label.digits == "4364"
            assert str(c.label) != str(ORIG)
            assert is_valid(str(c.label))
            assert any(
                c.label.consonants[i] != ORIG.consonants[i] for i in range(2)
            )
            assert c.provenance == tuple(
                i for i in range(2) if c.label.consonants[i] != ORIG.consonants[i]
            )

    def test_all_distinct(self):
        cands = generate_candidates(ORIG, 50, ThaiConsonantSet(), Rng(4))
        labels = [str(c.label) for c in cands]
        assert len(set(labels)) == 50

    def test_prefix_property(self):
        small = generate_candidates(ORIG, 5, ThaiConsonantSet(), Rng(5))
        large = generate_candidates(ORIG, 10, ThaiConsonantSet(), Rng(5))
        assert [str(c.label) for c in small] == [str(c.label) for c in large[:5]]

    def test_exhaustive_enumeration_of_feasible_space(self):
        # Digit-preserving candidates for a 44-consonant set: all pairs but
        # the original's, each differing in at least one position.
        orig = LicenseLabel.parse("กก0000")
        cs = ThaiConsonantSet()
        n = 44 * 44 - 1
        cands = generate_candidates(orig, n, cs, Rng(6))
        got = {str(c.label) for c in cands}
        expected = {
            c1 + c2 + "0000"
            for c1 in cs.chars
            for c2 in cs.chars
            if not (c1 == "ก" and c2 == "ก")
        }
        assert got == expected

    def test_n_exceeding_feasible_space(self):
        with pytest.raises(ValueError, match="feasible"):
            generate_candidates(ORIG, 44 * 44, ThaiConsonantSet(), Rng(0))
        with pytest.raises(ValueError):
            generate_candidates(ORIG, 0, ThaiConsonantSet(), Rng(0))

    def test_feasibility_over_10000_random_pairs(self):
        # Invariant re-check over 10,000 random (orig, n) pairs.
        from plateforge.plate import random_label

        cs = ThaiConsonantSet()
        rng = Rng(8)
        for k in range(10_000):
            gen = rng.derive("pair", k).generator()
            orig = random_label(rng.derive("orig", k), cs)
            n = int(gen.integers(1, 12))
            for c in generate_candidates(orig, n, cs, rng.derive("cand", k)):
                assert is_valid(str(c.label), cs)
                assert c.label.digits == orig.digits
                assert any(
                    c.label.consonants[i] != orig.consonants[i] for i in range(2)
                )

    def test_mutate_digits_mode(self):
        cands = generate_candidates(
            ORIG, 30, ThaiConsonantSet(), Rng(9), mutate_digits=True
        )
        assert any(c.label.digits != ORIG.digits for c in cands)
        # consonant difference is still mandatory
        for c in cands:
            assert c.provenance

    def test_confusability_steers_substitutions(self):
        table = ConfusabilityTable({("ม", "ฆ"): 5.0, ("ค", "ต"): 5.0})
        cands = generate_candidates(
            ORIG, 3, ThaiConsonantSet(), Rng(10), confusability=table
        )
        for c in cands:
            assert set(str(c.label)[:2]) <= {"ม", "ค", "ฆ", "ต"}

    def test_confusability_csv_round_trip(self, tmp_path):
        path = tmp_path / "pairs.csv"
        path.write_text("a,b,weight\nม,ฆ,5.0\nค,ต,2.5\n", encoding="utf-8")
        table = ConfusabilityTable.load_csv(path)
        assert table.weight("ม", "ฆ") == 5.0
        assert table.weight("ฆ", "ม") == 5.0  # symmetric
        assert table.weight("ม", "ต") == 0.0


class TestSelectAuto:
    def _result(self, img, dist):
        from plateforge.attack import AttackConfig

        return AttackResult(
            target="X", success=True, image=img, predicted_label="X",
            final_distance=dist, iterations=1, total_queries=1,
            queries_by_phase={}, distance_trace=[dist], wall_seconds=0.0,
            stop_reason="iterations", config=AttackConfig(),
        )

    def test_argmin(self):
        x0 = PlateImage.full(2, 2, 0.0)
        imgs = [PlateImage.full(2, 2, v) for v in (0.8, 0.275, 1.0)]
        survivors = [self._result(i, 0.0) for i in imgs]
        assert select_auto(survivors, x0) == 1

    def test_single_survivor(self):
        x0 = PlateImage.full(2, 2, 0.0)
        assert select_auto([self._result(PlateImage.full(2, 2, 0.5), 1.0)], x0) == 0

    def test_tie_breaks_to_lower_index(self):
        x0 = PlateImage.full(2, 2, 0.0)
        same = PlateImage.full(2, 2, 0.5)
        survivors = [self._result(same, 1.0), self._result(same, 1.0)]
        assert select_auto(survivors, x0) == 0

    def test_empty_is_error(self):
        with pytest.raises(ValueError):
            select_auto([], PlateImage.full(2, 2, 0.0))


class TestSelectHuman:
    def _session(self, store, n=3):
        imgs = [PlateImage.full(2, 2, v) for v in np.linspace(0, 1, n)]
        return store.create_selection_session(
            outcome_id="o1",
            original=PlateImage.full(2, 2, 0.0),
            original_label="มค4364",
            candidates=imgs,
        )

    def test_returns_posted_index(self):
        store = SessionStore()
        session = self._session(store)
        survivors = [object()] * 3
        threading.Timer(0.05, lambda: session.resolve({"index": 2})).start()
        assert select_human(survivors, session, timeout=5.0) == 2

    def test_timeout_expires_session(self):
        store = SessionStore()
        session = self._session(store)
        with pytest.raises(SelectionTimeout):
            select_human([object()], session, timeout=0.05)
        assert session.state == "expired"
        assert session.resolve({"index": 0}) is False  # late client rejected


@pytest.fixture(scope="module")
def desk_attack(desk_session):
    return desk_session


@pytest.fixture(scope="module")
def desk_session():
    from plateforge.harness import DeskProfile

    profile = DeskProfile()
    label = profile.plate_label(Rng(11).derive("plate-label", 0, 0))
    img = render_plate(label, profile.atlas, profile.layout)
    return profile, label, img


def run_desk(profile, label, img, n, seed=11, **kwargs):
    oracle = profile.attacked_oracle(label)
    cfg = profile.attack_config({}, Rng(seed).derive("plate", 0))
    return run_semi_targeted(
        img, label, n, oracle, cfg,
        atlas=profile.atlas, layout=profile.layout,
        consonants=profile.consonants, **kwargs,
    )


class TestRunSemiTargeted:
    def test_n1_reduces_to_plain_targeted_attack(self, desk_session):
        # seed 121 draws a realizable candidate first, so n=1 runs the
        # plain targeted attack end to end.
        profile, label, img = desk_session
        outcome = run_desk(profile, label, img, 1, seed=121)
        cands = generate_candidates(
            label, 1, profile.consonants,
            profile.attack_config({}, Rng(121).derive("plate", 0)).rng.derive(
                "candidates", str(label)
            ),
        )
        assert [str(c.label) for c in cands] == [str(c.label) for c in outcome.candidates]
        result = outcome.results[0]
        assert isinstance(result, AttackResult)
        direct = attack_targeted(
            img, str(cands[0].label), profile.attacked_oracle(label),
            _candidate_config(
                profile.attack_config({}, Rng(121).derive("plate", 0)), 0,
                str(cands[0].label),
            ),
            atlas=profile.atlas, layout=profile.layout,
        )
        assert direct.image == result.image
        assert direct.to_dict() == result.to_dict()

    def test_outcome_satisfies_wrong_but_valid(self, desk_session):
        profile, label, img = desk_session
        outcome = run_desk(profile, label, img, 8)
        assert not outcome.no_adversarial
        sel = outcome.selected_result
        oracle = profile.attacked_oracle(label)
        got = oracle.classify(sel.image)
        assert got == sel.target
        assert is_valid(got, profile.consonants)
        assert got != str(label)

    def test_no_adversarial_outcome(self, desk_session):
        # n=1 on this seed draws an unrealizable twin candidate.
        profile, label, img = desk_session
        outcome = run_desk(profile, label, img, 1)
        assert outcome.no_adversarial
        assert outcome.selected_index is None
        assert outcome.selected_image is None
        assert isinstance(outcome.results[0], CandidateFailure)
        assert outcome.results[0].reason == "target_not_realizable"

    def test_failed_candidates_carry_reasons(self, desk_session):
        profile, label, img = desk_session
        outcome = run_desk(profile, label, img, 10)
        reasons = {
            r.reason for r in outcome.results if isinstance(r, CandidateFailure)
        }
        assert reasons <= {
            "target_not_realizable", "estimator_collapse",
            "budget_exhausted", "not_adversarial",
        }
        assert len(outcome.results) == 10  # failures never dropped

    def test_monotone_opportunity(self, desk_session):
        profile, label, img = desk_session
        small = run_desk(profile, label, img, 5)
        large = run_desk(profile, label, img, 10)
        assert [str(c.label) for c in small.candidates] == [
            str(c.label) for c in large.candidates[:5]
        ]
        assert set(small.survivor_indices) <= set(large.survivor_indices)

    def test_deterministic_across_worker_counts(self, desk_session, tmp_path):
        profile, label, img = desk_session
        a = run_desk(profile, label, img, 6, workers=1, out_dir=tmp_path / "w1")
        b = run_desk(profile, label, img, 6, workers=4, out_dir=tmp_path / "w4")
        assert a.selected_index == b.selected_index
        for ra, rb in zip(a.results, b.results):
            if isinstance(ra, AttackResult):
                assert ra.image == rb.image
                assert ra.to_dict() == rb.to_dict()
            else:
                assert ra == rb
        assert _bundle_bytes(tmp_path / "w1") == _bundle_bytes(tmp_path / "w4")

    def test_oracle_must_read_clean_plate(self, desk_session):
        profile, label, img = desk_session
        wrong = PlateImage.full(img.width, img.height, 1.0)
        oracle = profile.attacked_oracle(label)
        with pytest.raises(ValueError, match="clean plate"):
            run_semi_targeted(
                wrong, label, 1, oracle,
                profile.attack_config({}, Rng(0)),
                atlas=profile.atlas, layout=profile.layout,
                consonants=profile.consonants,
            )

    def test_query_ledger_matches_oracle_counter(self, desk_session):
        profile, label, img = desk_session
        oracle = profile.attacked_oracle(label)
        cfg = profile.attack_config({}, Rng(11).derive("plate", 0))
        before = oracle.query_count
        outcome = run_semi_targeted(
            img, label, 5, oracle, cfg,
            atlas=profile.atlas, layout=profile.layout,
            consonants=profile.consonants,
        )
        # Failed candidates also burn a couple of queries (seed checks),
        # which the ledger books under overhead? No: they are oracle calls
        # issued inside attack runs that raised; those queries are real.
        spent = oracle.query_count - before
        booked = outcome.total_queries
        assert booked <= spent
        failed = [r for r in outcome.results if isinstance(r, CandidateFailure)]
        # each unrealizable candidate costs the precondition + seed check
        assert spent - booked <= 3 * len(failed)

    def test_human_selection_flow(self, desk_session):
        profile, label, img = desk_session
        store = SessionStore()

        def resolver():
            deadline = time.monotonic() + 10
            while time.monotonic() < deadline:
                pending = store.pending()
                if pending:
                    pending[0].resolve({"index": 0})
                    return
                time.sleep(0.02)

        t = threading.Thread(target=resolver)
        t.start()
        outcome = run_desk(
            profile, label, img, 8, selection="human", review_store=store,
            selection_timeout=10.0,
        )
        t.join()
        assert outcome.selection_mode == "human"
        assert outcome.selected_index == outcome.survivor_indices[0]

    def test_human_timeout_falls_back_to_auto_when_configured(self, desk_session):
        profile, label, img = desk_session
        store = SessionStore()
        outcome = run_desk(
            profile, label, img, 8, selection="human", review_store=store,
            selection_timeout=0.05, fallback_to_auto=True,
        )
        assert outcome.selected_index is not None

    def test_human_timeout_raises_without_fallback(self, desk_session):
        profile, label, img = desk_session
        store = SessionStore()
        with pytest.raises(SelectionTimeout):
            run_desk(
                profile, label, img, 8, selection="human", review_store=store,
                selection_timeout=0.05,
            )


def _bundle_bytes(path: Path) -> dict:
    out = {}
    for f in sorted(Path(path).rglob("*")):
        if f.is_file() and f.name != "timing.json":
            out[str(f.relative_to(path))] = f.read_bytes()
    return out


class TestBundles:
    def test_save_load_round_trip(self, desk_session, tmp_path):
        profile, label, img = desk_session
        outcome = run_desk(profile, label, img, 6, out_dir=tmp_path / "bundle")
        back = load_outcome(tmp_path / "bundle")
        assert back.original_label == outcome.original_label
        assert back.n == outcome.n
        assert back.selected_index == outcome.selected_index
        assert back.survivor_indices == outcome.survivor_indices
        assert back.selected_image == outcome.selected_image
        for ra, rb in zip(outcome.results, back.results):
            if isinstance(ra, AttackResult):
                assert ra.to_dict() == rb.to_dict()
                assert ra.image == rb.image

    def test_resume_reuses_checkpoints_and_is_byte_identical(
        self, desk_session, tmp_path
    ):
        profile, label, img = desk_session
        full_dir = tmp_path / "full"
        run_desk(profile, label, img, 6, out_dir=full_dir)
        want = _bundle_bytes(full_dir)

        # Simulate a crash: keep only the first finished candidate and the
        # original, then resume into the same directory.
        resume_dir = tmp_path / "resume"
        resume_dir.mkdir()
        kept = {"original.png", "candidate_01.json", "candidate_01.png"}
        for name, data in want.items():
            if name in kept:
                (resume_dir / name).write_bytes(data)
        marker = resume_dir / "candidate_01.json"
        before_mtime = marker.stat().st_mtime_ns

        run_desk(profile, label, img, 6, out_dir=resume_dir)
        assert _bundle_bytes(resume_dir) == want
        # checkpointed attack was reused, not re-run (json rewritten with
        # identical bytes is fine; equality above is the real contract)
        assert json.loads(marker.read_text())["target"] == json.loads(
            (full_dir / "candidate_01.json").read_text()
        )["target"]

    def test_stale_checkpoint_ignored(self, desk_session, tmp_path):
        profile, label, img = desk_session
        out = tmp_path / "stale"
        full = run_desk(profile, label, img, 6, out_dir=out)
        idx = full.survivor_indices[0]
        # corrupt one checkpoint: wrong target means a different run wrote it
        stem = out / f"candidate_{idx:02d}.json"
        record = json.loads(stem.read_text())
        record["target"] = "กก0000"
        stem.write_text(json.dumps(record))
        again = run_desk(profile, label, img, 6, out_dir=out)
        for ra, rb in zip(full.results, again.results):
            if isinstance(ra, AttackResult):
                assert ra.to_dict() == rb.to_dict()
