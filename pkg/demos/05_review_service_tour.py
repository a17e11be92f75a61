"""The embedded review service, driven end to end by a scripted reviewer.

Starts the HTTP service, registers one selection and one assessment
session, and resolves both through the JSON API exactly as the browser UI
would.  With the frontend built (cd frontend && npm run build) the same
server hosts the interactive pages at its root URL.

Run:  python demos/05_review_service_tour.py
"""

import threading

import httpx

from plateforge import PlateImage, Rng, render_plate
from plateforge.assess import AssessmentRecord, judge
from plateforge.core import LicenseLabel
from plateforge.harness import DeskProfile
from plateforge.review import SessionStore, serve

profile = DeskProfile()
orig = profile.plate_label(Rng(3).derive("plate-label", 0, 0))
img = render_plate(orig, profile.atlas, profile.layout)

store = SessionStore()
selection = store.create_selection_session(
    outcome_id="demo-outcome",
    original=img,
    original_label=str(orig),
    candidates=[PlateImage.full(img.width, img.height, v) for v in (0.3, 0.6)],
)
assessment = store.create_assessment_session(
    outcome_id="demo-outcome", image=img, true_label=str(orig)
)

server = serve("127.0.0.1:8399", store)
print(f"review service listening at {server.url}")
try:
    base = f"{server.url}/api/v1"
    sessions = httpx.get(f"{base}/sessions").json()
    print(f"pending sessions: {[(s['kind'], s['counts']) for s in sessions]}")

    detail = httpx.get(f"{base}/sessions/{assessment.id}").json()
    print(f"assessment payload keys (no ground truth): {sorted(detail)}")

    # a reviewer picks candidate 0 while the orchestration blocks on it
    waiter = threading.Thread(target=selection.wait, args=(10.0,))
    waiter.start()
    r = httpx.post(f"{base}/sessions/{selection.id}/selection", json={"index": 0})
    waiter.join()
    print(f"selection resolved: HTTP {r.status_code}, choice {selection.resolution}")

    # double-submitting is refused: resolution happens exactly once
    r2 = httpx.post(f"{base}/sessions/{selection.id}/selection", json={"index": 1})
    print(f"second client got HTTP {r2.status_code} (exactly-once)")

    # the interview answers feed the success predicate
    httpx.post(
        f"{base}/sessions/{assessment.id}/assessment",
        json={"q1": True, "q2": str(orig)},
    )
    answers = assessment.resolution
    record = AssessmentRecord(
        outcome_id="demo-outcome", assessor_id="demo",
        q1_legible=answers["q1"], q2_read=answers["q2"],
    )
    verdict = judge(record, LicenseLabel.parse(str(orig)))
    print(f"interview answers {answers} -> verdict: "
          f"{'success' if verdict.success else verdict.reason}")
finally:
    server.stop()
print("server stopped cleanly")
