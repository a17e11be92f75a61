"""Decision-based targeted attack engine.

Boundary-walking attack that needs only +1/-1 answers from the oracle:
binary search to the decision boundary, Monte-Carlo gradient-direction
estimation from sphere samples, geometric step-size search, repeat.  An
update is accepted only if it does not increase the distance to the
original image, so the per-iteration distance trace is non-increasing by
construction.

All randomness is drawn from per-iteration streams derived from the config
seed, so results are byte-identical across runs and thread counts.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import PlateImage, Rng, clip_array, l2_distance, quantize8, sample_unit_sphere
from .oracle import DecisionOracle, Phi, make_phi
from .plate import GlyphAtlas, LicenseLabel, PlateLayout, render_plate

__all__ = [
    "AttackConfig",
    "AttackState",
    "AttackResult",
    "TargetNotRealizableError",
    "EstimatorCollapseError",
    "BudgetExhaustedError",
    "find_target_seed",
    "initialize",
    "project_to_boundary",
    "estimate_direction",
    "geometric_step",
    "attack_targeted",
]

RESULT_SCHEMA_VERSION = 1


class TargetNotRealizableError(RuntimeError):
    """The rendered target plate does not classify as the target."""


class EstimatorCollapseError(RuntimeError):
    """Gradient-direction estimate had zero norm even after a delta shrink."""


class BudgetExhaustedError(RuntimeError):
    """Query budget cannot cover attack initialization."""


@dataclass(frozen=True)
class AttackConfig:
    """Engine knobs; defaults follow the reference settings of the attack.

    The schedules are fixed forms exposed here: gradient batch
    B_t = min(B0*sqrt(t), max_batch), probe radius delta_t =
    delta_scale * dist_t / d, step size xi_t = dist_t / sqrt(t).
    """

    max_iterations: int = 300
    initial_batch: int = 100
    max_batch: int = 10_000
    bisect_tol: float = 1e-3
    step_floor: float = 1e-7
    query_budget: int = 200_000
    delta_scale: float = 1.0
    rng: Rng = field(default_factory=lambda: Rng(seed=0, stream=0))

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.initial_batch < 2:
            raise ValueError("initial_batch must be >= 2")
        if self.max_batch < self.initial_batch:
            raise ValueError("max_batch must be >= initial_batch")
        if not 0.0 < self.bisect_tol < 1.0:
            raise ValueError("bisect_tol must be in (0,1)")
        if self.step_floor <= 0.0:
            raise ValueError("step_floor must be > 0")
        if self.delta_scale <= 0.0:
            raise ValueError("delta_scale must be > 0")

    def to_dict(self) -> dict:
        return {
            "max_iterations": self.max_iterations,
            "initial_batch": self.initial_batch,
            "max_batch": self.max_batch,
            "bisect_tol": self.bisect_tol,
            "step_floor": self.step_floor,
            "query_budget": self.query_budget,
            "delta_scale": self.delta_scale,
            "seed": self.rng.seed,
            "stream": self.rng.stream,
        }


@dataclass(frozen=True)
class AttackState:
    """Snapshot at the end of one accepted iteration."""

    iteration: int
    image: PlateImage
    distance: float
    batch: int
    delta: float
    step: float | None
    queries: int


@dataclass
class AttackResult:
    """Outcome of one targeted run.

    ``image`` is the final adversarial image, already snapped to the 8-bit
    grid, so writing it to PNG and re-reading reproduces it exactly and the
    oracle's verdict on the stored file equals ``predicted_label``.  A run
    whose final image does not classify as the target is marked failed,
    never silently returned as success.
    """

    target: str
    success: bool
    image: PlateImage
    predicted_label: str
    final_distance: float
    iterations: int
    total_queries: int
    queries_by_phase: dict
    distance_trace: list
    wall_seconds: float
    stop_reason: str
    config: AttackConfig

    def to_dict(self) -> dict:
        """Deterministic JSON record; wall-clock timing is kept out and
        serialized separately by callers (it varies run to run)."""
        return {
            "version": RESULT_SCHEMA_VERSION,
            "target": self.target,
            "success": self.success,
            "predicted_label": self.predicted_label,
            "final_distance": self.final_distance,
            "iterations": self.iterations,
            "total_queries": self.total_queries,
            "queries_by_phase": dict(self.queries_by_phase),
            "distance_trace": list(self.distance_trace),
            "stop_reason": self.stop_reason,
            "config": self.config.to_dict(),
        }


def find_target_seed(
    target: str,
    oracle: DecisionOracle,
    atlas: GlyphAtlas,
    layout: PlateLayout,
) -> PlateImage:
    """Render the target label and verify the oracle reads it as the target.

    The verified render is the attack's starting adversarial point; a
    misclassified render means the candidate class is unreachable and is
    skipped upstream.
    """
    label = LicenseLabel.parse(target)
    seed = render_plate(label, atlas, layout)
    got = oracle.classify(seed)
    if got != target:
        raise TargetNotRealizableError(
            f"target {target!r} not realizable: clean render classifies as {got!r}"
        )
    return seed


def _bisect_arr(
    x_orig: np.ndarray, x_adv: np.ndarray, phi_batch, tol: float
) -> np.ndarray:
    """Bisection along [x_orig, x_adv]; returns the adversarial endpoint
    once the alpha interval is narrower than ``tol``."""
    low, high = 0.0, 1.0
    while high - low > tol:
        mid = 0.5 * (high + low)
        point = (1.0 - mid) * x_orig + mid * x_adv
        if phi_batch(point[None])[0] > 0:
            high = mid
        else:
            low = mid
    return (1.0 - high) * x_orig + high * x_adv


def initialize(
    x_orig: PlateImage, x_target_seed: PlateImage, phi: Phi, tol: float = 1e-3
) -> PlateImage:
    """Binary-search the blend segment from original to target seed.

    Returns the adversarial endpoint of the final alpha interval (width
    <= tol).  A seed already within ``tol`` of the original is returned
    unchanged.
    """
    if phi(x_orig) != -1:
        raise ValueError("x_orig must not classify as the target")
    if phi(x_target_seed) != 1:
        raise ValueError("x_target_seed must classify as the target")
    if l2_distance(x_orig, x_target_seed) <= tol:
        return x_target_seed
    out = _bisect_arr(x_orig.ravel(), x_target_seed.ravel(), phi.batch_array, tol)
    return PlateImage(out.reshape(x_orig.pixels.shape))


def project_to_boundary(
    x_orig: PlateImage,
    x_adv: PlateImage,
    phi: Phi,
    tol: float = 1e-3,
    verify: bool = True,
) -> PlateImage:
    """Pull an adversarial point back toward the boundary along the segment.

    The returned point is always adversarial and lies within
    tol * ||x_adv - x_orig|| of the boundary crossing along the segment.
    ``verify=False`` skips the two precondition queries when the caller
    already knows both endpoints' decisions.
    """
    if verify:
        if phi(x_adv) != 1:
            raise ValueError("x_adv must classify as the target")
        if phi(x_orig) != -1:
            raise ValueError("x_orig must not classify as the target")
    out = _bisect_arr(x_orig.ravel(), x_adv.ravel(), phi.batch_array, tol)
    return PlateImage(out.reshape(x_orig.pixels.shape))


def _estimate_arr(
    x: np.ndarray, delta: float, batch: int, phi_batch, rng: Rng
) -> np.ndarray:
    u = sample_unit_sphere(rng, x.size, batch)
    probes = clip_array(x[None, :] + delta * u)
    fvals = phi_batch(probes).astype(np.float64)
    mean = fvals.mean()
    if mean == 1.0:
        grad = u.mean(axis=0)
    elif mean == -1.0:
        grad = -u.mean(axis=0)
    else:
        grad = (fvals - mean) @ u
    norm = np.linalg.norm(grad)
    if norm == 0.0:
        raise EstimatorCollapseError(
            f"estimator collapsed at delta={delta:g}, batch={batch}"
        )
    return grad / norm


def estimate_direction(
    x_b: PlateImage, delta: float, batch: int, phi: Phi, rng: Rng
) -> np.ndarray:
    """Monte-Carlo gradient-direction estimate at a boundary point.

    Probes ``batch`` sphere directions at radius ``delta`` (clipped into the
    pixel box; the radius is not re-normalized after clipping) and returns
    the unit vector of the baseline-subtracted weighted sum.  If every probe
    answers the same, returns the normalized mean direction signed by the
    common answer.
    """
    if delta <= 0.0:
        raise ValueError("delta must be > 0")
    if batch < 2:
        raise ValueError("batch must be >= 2")
    return _estimate_arr(x_b.ravel(), delta, batch, phi.batch_array, rng)


def _step_arr(
    x: np.ndarray,
    v: np.ndarray,
    x_orig: np.ndarray,
    t: int,
    phi_batch,
    step_floor: float,
):
    xi = float(np.linalg.norm(x - x_orig)) / math.sqrt(t)
    while xi >= step_floor:
        probe = clip_array(x + xi * v)
        if phi_batch(probe[None])[0] > 0:
            return probe, xi
        xi *= 0.5
    return x, None


def geometric_step(
    x_t: PlateImage,
    v: np.ndarray,
    x_orig: PlateImage,
    t: int,
    phi: Phi,
    step_floor: float = 1e-7,
) -> PlateImage:
    """Probe x_t + xi*v with xi = ||x_t - x_orig||/sqrt(t), halving xi until
    the probe is adversarial; falls back to x_t when xi underflows the floor."""
    out, _ = _step_arr(
        x_t.ravel(), np.asarray(v, dtype=np.float64).reshape(-1),
        x_orig.ravel(), t, phi.batch_array, step_floor,
    )
    return PlateImage(out.reshape(x_t.pixels.shape))


class _PhaseMeter:
    """Splits a Phi's local call count into per-phase buckets."""

    def __init__(self, phi: Phi):
        self.phi = phi
        self.buckets = {
            "initialization": 0,
            "binary_search": 0,
            "gradient": 0,
            "step_search": 0,
        }
        self._mark = phi.calls

    def charge(self, bucket: str) -> None:
        now = self.phi.calls
        self.buckets[bucket] += now - self._mark
        self._mark = now


def attack_targeted(
    x_orig: PlateImage,
    target: str,
    oracle: DecisionOracle,
    cfg: AttackConfig,
    target_seed: PlateImage | None = None,
    atlas: GlyphAtlas | None = None,
    layout: PlateLayout | None = None,
    on_state=None,
) -> AttackResult:
    """Run the full targeted attack against ``oracle``.

    The starting adversarial point is ``target_seed`` if given, otherwise a
    rendered plate of the target label (``atlas``/``layout`` required),
    verified to classify as the target.  Stops after ``cfg.max_iterations``
    or when the query budget runs out; total queries never exceed
    query_budget + max_batch.

    ``on_state`` is an optional callback receiving an AttackState after each
    iteration.  Raises TargetNotRealizableError / EstimatorCollapseError /
    BudgetExhaustedError; any completed run returns an AttackResult whose
    ``success`` says whether the final image classifies as the target.
    """
    start = time.perf_counter()
    phi = make_phi(oracle, target)
    meter = _PhaseMeter(phi)
    tol = cfg.bisect_tol

    # Final quantization-aware boundary touch costs a bounded number of
    # queries; reserve them so the budget-honesty bound stays strict.
    polish_cost = 2 + 2 * math.ceil(math.log2(1.0 / tol))
    min_needed = 3 + math.ceil(math.log2(1.0 / tol)) + polish_cost
    if cfg.query_budget < min_needed:
        raise BudgetExhaustedError(
            f"query budget {cfg.query_budget} cannot cover initialization "
            f"(needs >= {min_needed})"
        )
    cutoff = cfg.query_budget - polish_cost
    # Worst-case queries one iteration can add after its gradient batch:
    # every step halving down to the floor plus one boundary bisection.
    bisect_cost = math.ceil(math.log2(1.0 / tol))

    if phi(x_orig) != -1:
        raise ValueError(f"original image already classifies as {target!r}")

    if target_seed is None:
        if atlas is None or layout is None:
            raise ValueError("target_seed or (atlas, layout) must be provided")
        seed = render_plate(LicenseLabel.parse(target), atlas, layout)
    else:
        seed = target_seed
    if phi(seed) != 1:
        got = oracle.classify(seed)
        raise TargetNotRealizableError(
            f"target {target!r} not realizable: seed classifies as {got!r}"
        )

    shape = x_orig.pixels.shape
    x_orig_f = x_orig.ravel()
    seed_f = seed.ravel()
    d = x_orig_f.size

    if l2_distance(x_orig, seed) <= tol:
        x = seed_f.copy()
    else:
        x = _bisect_arr(x_orig_f, seed_f, phi.batch_array, tol)
    meter.charge("initialization")

    dist = float(np.linalg.norm(x - x_orig_f))
    trace = [dist]
    stop_reason = "iterations"
    iterations = 0
    step_worst = (
        math.ceil(math.log2(max(math.sqrt(d), 1.0) / cfg.step_floor)) + 1
    )

    for t in range(1, cfg.max_iterations + 1):
        if phi.calls >= cutoff:
            stop_reason = "budget"
            break
        batch = max(2, int(min(cfg.initial_batch * math.sqrt(t), cfg.max_batch)))
        delta = cfg.delta_scale * dist / d
        rng_t = cfg.rng.derive("iter", t)
        try:
            v = _estimate_arr(x, delta, batch, phi.batch_array, rng_t)
        except EstimatorCollapseError:
            if phi.calls >= cutoff:
                meter.charge("gradient")
                stop_reason = "budget"
                break
            # One retry at a tighter radius, then give up.
            v = _estimate_arr(
                x, delta / 10.0, batch, phi.batch_array, rng_t.derive("retry")
            )
        meter.charge("gradient")
        if phi.calls + step_worst + bisect_cost > cutoff:
            stop_reason = "budget"
            break

        stepped, xi = _step_arr(x, v, x_orig_f, t, phi.batch_array, cfg.step_floor)
        meter.charge("step_search")

        projected = _bisect_arr(x_orig_f, stepped, phi.batch_array, tol)
        meter.charge("binary_search")

        new_dist = float(np.linalg.norm(projected - x_orig_f))
        if new_dist <= dist:
            x = projected
            dist = new_dist
        trace.append(dist)
        iterations = t
        if on_state is not None:
            on_state(
                AttackState(
                    iteration=t,
                    image=PlateImage(x.reshape(shape)),
                    distance=dist,
                    batch=batch,
                    delta=delta,
                    step=xi,
                    queries=phi.calls,
                )
            )

    # The stored artifact is an 8-bit PNG; land the final point on the
    # quantized side of the boundary so the file itself stays adversarial.
    def phi_q(batch2d):
        return phi.batch_array(np.rint(batch2d * 255.0) / 255.0)

    success = True
    if phi_q(x[None])[0] > 0:
        final = _bisect_arr(x_orig_f, x, phi_q, tol)
    elif phi_q(seed_f[None])[0] > 0:
        final = _bisect_arr(x_orig_f, seed_f, phi_q, tol)
    else:
        final = x
        success = False
    meter.charge("binary_search")

    final_img = quantize8(PlateImage(final.reshape(shape)))
    extra_queries = 0
    if success:
        predicted = target
    else:
        predicted = oracle.classify(final_img)
        extra_queries = 1
        meter.buckets["initialization"] += 1

    return AttackResult(
        target=target,
        success=success and predicted == target,
        image=final_img,
        predicted_label=predicted,
        final_distance=l2_distance(final_img, x_orig),
        iterations=iterations,
        total_queries=phi.calls + extra_queries,
        queries_by_phase=meter.buckets,
        distance_trace=trace,
        wall_seconds=time.perf_counter() - start,
        stop_reason=stop_reason,
        config=cfg,
    )
