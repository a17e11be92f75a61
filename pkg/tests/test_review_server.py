import json
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from plateforge.core import PlateImage
from plateforge.review import ReviewServer, SessionStore, build_app


def image(v=0.5):
    return PlateImage.full(4, 3, v)


@pytest.fixture()
def store():
    return SessionStore()


@pytest.fixture()
def client(store):
    return TestClient(build_app(store))


def make_selection(store, n=3, label="มค4364"):
    return store.create_selection_session(
        outcome_id="o-sel",
        original=image(0.0),
        original_label=label,
        candidates=[image(v) for v in np.linspace(0.2, 0.8, n)],
    )


def make_assessment(store, label="มค4364"):
    return store.create_assessment_session(
        outcome_id="o-asm", image=image(0.4), true_label=label
    )


class TestSessionListing:
    def test_empty_store_lists_nothing(self, client):
        assert client.get("/api/sessions").json() == []
        assert client.get("/api/v1/sessions").json() == []

    def test_pending_sessions_listed_with_counts(self, client, store):
        make_selection(store, n=3)
        make_assessment(store)
        listing = client.get("/api/v1/sessions").json()
        kinds = {s["kind"] for s in listing}
        assert kinds == {"selection", "assessment"}
        sel = next(s for s in listing if s["kind"] == "selection")
        assert sel["counts"] == {"candidates": 3}

    def test_resolved_sessions_drop_off_the_list(self, client, store):
        s = make_selection(store)
        client.post(f"/api/v1/sessions/{s.id}/selection", json={"index": 0})
        assert client.get("/api/v1/sessions").json() == []
        detail = client.get(f"/api/v1/sessions/{s.id}").json()
        assert detail["state"] == "resolved"


class TestSelectionEndpoint:
    def test_resolves_and_returns_index(self, client, store):
        s = make_selection(store, n=3)
        r = client.post(f"/api/v1/sessions/{s.id}/selection", json={"index": 1})
        assert r.status_code == 200
        assert s.state == "resolved" and s.resolution == {"index": 1}

    def test_unknown_session_404(self, client):
        assert client.post("/api/v1/sessions/nope/selection", json={"index": 0}).status_code == 404

    def test_double_post_conflicts(self, client, store):
        s = make_selection(store)
        assert client.post(f"/api/v1/sessions/{s.id}/selection", json={"index": 0}).status_code == 200
        assert client.post(f"/api/v1/sessions/{s.id}/selection", json={"index": 1}).status_code == 409
        assert s.resolution == {"index": 0}

    def test_out_of_range_index_422_keeps_pending(self, client, store):
        s = make_selection(store, n=3)
        r = client.post(f"/api/v1/sessions/{s.id}/selection", json={"index": 7})
        assert r.status_code == 422
        assert s.state == "pending"  # still selectable
        assert client.post(f"/api/v1/sessions/{s.id}/selection", json={"index": 2}).status_code == 200

    def test_malformed_body_422(self, client, store):
        s = make_selection(store)
        assert client.post(f"/api/v1/sessions/{s.id}/selection", json={"idx": 1}).status_code == 422
        assert client.post(f"/api/v1/sessions/{s.id}/selection", json={"index": "x"}).status_code == 422

    def test_wrong_kind_422(self, client, store):
        s = make_assessment(store)
        assert client.post(f"/api/v1/sessions/{s.id}/selection", json={"index": 0}).status_code == 422

    def test_concurrent_double_post_exactly_once(self, store):
        # two clients race on the same session: one 200, one 409
        for round_ in range(10):
            local = SessionStore()
            s = make_selection(local)
            app = build_app(local)
            codes = []
            barrier = threading.Barrier(2)

            def post(index):
                with TestClient(app) as c:
                    barrier.wait()
                    codes.append(
                        c.post(
                            f"/api/v1/sessions/{s.id}/selection", json={"index": index}
                        ).status_code
                    )

            threads = [threading.Thread(target=post, args=(i,)) for i in range(2)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            assert sorted(codes) == [200, 409], f"round {round_}: {codes}"


class TestAssessmentEndpoint:
    def test_resolves_with_answers(self, client, store):
        s = make_assessment(store)
        r = client.post(
            f"/api/v1/sessions/{s.id}/assessment", json={"q1": True, "q2": "มค4364"}
        )
        assert r.status_code == 200
        assert s.resolution == {"q1": True, "q2": "มค4364"}

    def test_q2_whitespace_stored_verbatim(self, client, store):
        s = make_assessment(store)
        client.post(
            f"/api/v1/sessions/{s.id}/assessment", json={"q1": True, "q2": " มค 4364\n"}
        )
        assert s.resolution["q2"] == " มค 4364\n"

    def test_conflict_after_resolution(self, client, store):
        s = make_assessment(store)
        client.post(f"/api/v1/sessions/{s.id}/assessment", json={"q1": False, "q2": ""})
        assert (
            client.post(
                f"/api/v1/sessions/{s.id}/assessment", json={"q1": True, "q2": "x"}
            ).status_code
            == 409
        )

    def test_malformed_body_422(self, client, store):
        s = make_assessment(store)
        assert client.post(f"/api/v1/sessions/{s.id}/assessment", json={"q1": True}).status_code == 422

    def test_expired_session_conflicts(self, client, store):
        s = make_assessment(store)
        s.expire()
        assert (
            client.post(
                f"/api/v1/sessions/{s.id}/assessment", json={"q1": True, "q2": "x"}
            ).status_code
            == 409
        )


class TestLabelLeakage:
    def _all_strings(self, obj):
        if isinstance(obj, dict):
            for k, v in obj.items():
                yield str(k)
                yield from self._all_strings(v)
        elif isinstance(obj, (list, tuple)):
            for v in obj:
                yield from self._all_strings(v)
        else:
            yield str(obj)

    def test_assessment_payload_never_contains_true_label(self, client, store):
        label = "มค4364"
        s = make_assessment(store, label=label)
        payload = client.get(f"/api/v1/sessions/{s.id}").json()
        for text in self._all_strings(payload):
            assert label not in text
            assert "มค" not in text  # consonants alone must not leak either
        assert "label" not in json.dumps(payload)
        listing = client.get("/api/v1/sessions").json()
        for text in self._all_strings(listing):
            assert label not in text

    def test_selection_payload_shows_label_metadata(self, client, store):
        # selection is not blind: the reviewer compares against the original
        s = make_selection(store, label="มค4364")
        payload = client.get(f"/api/v1/sessions/{s.id}").json()
        assert payload["original_label"] == "มค4364"


class TestImages:
    def test_payload_images_served_as_png(self, client, store):
        s = make_selection(store, n=2)
        detail = client.get(f"/api/v1/sessions/{s.id}").json()
        for url in [detail["original_image"], *detail["candidate_images"]]:
            r = client.get(url)
            assert r.status_code == 200
            assert r.headers["content-type"] == "image/png"
            assert r.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_unknown_image_404(self, client):
        assert client.get("/img/deadbeef.png").status_code == 404


class TestStaticAndAuth:
    def test_root_serves_fallback_without_bundle(self, tmp_path, store):
        client = TestClient(build_app(store, static_dir=tmp_path))
        r = client.get("/")
        assert r.status_code == 200
        assert "review" in r.text

    def test_root_serves_built_bundle(self, tmp_path, store):
        (tmp_path / "index.html").write_text("<html><body>BUNDLE</body></html>")
        client = TestClient(build_app(store, static_dir=tmp_path))
        assert "BUNDLE" in client.get("/").text

    def test_static_path_traversal_rejected(self, tmp_path, store):
        client = TestClient(build_app(store, static_dir=tmp_path))
        assert client.get("/static/..%2fsecrets.txt").status_code == 404

    def test_bearer_token_enforced_when_configured(self, store, monkeypatch):
        monkeypatch.setenv("PLATEFORGE_REVIEW_TOKEN", "hunter2")
        client = TestClient(build_app(store))
        assert client.get("/api/v1/sessions").status_code == 401
        ok = client.get(
            "/api/v1/sessions", headers={"Authorization": "Bearer hunter2"}
        )
        assert ok.status_code == 200


class TestBuiltBundle:
    def test_packaged_bundle_served_when_present(self, store):
        # The frontend build emits into the package static directory; the
        # whole suite must still pass when it has not been built.
        from pathlib import Path

        import plateforge.review as review_mod

        static = Path(review_mod.__file__).parent / "static"
        if not (static / "index.html").exists():
            pytest.skip("review UI bundle not built")
        client = TestClient(build_app(store))
        assert "/static/main.js" in client.get("/").text
        for name in ("main.js", "api.js", "selection.js", "assessment.js",
                     "dom.js", "styles.css"):
            assert client.get(f"/static/{name}").status_code == 200


class TestRealServer:
    def test_serve_and_graceful_shutdown(self, store):
        import httpx

        make_selection(store)
        server = ReviewServer(store, host="127.0.0.1", port=8361)
        server.start()
        try:
            listing = httpx.get(f"{server.url}/api/v1/sessions", timeout=5.0).json()
            assert len(listing) == 1
            sid = listing[0]["id"]
            r = httpx.post(
                f"{server.url}/api/v1/sessions/{sid}/selection",
                json={"index": 0},
                timeout=5.0,
            )
            assert r.status_code == 200
        finally:
            server.stop()
