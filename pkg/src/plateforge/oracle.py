"""Black-box decision oracles: the only model access the adversary gets.

An oracle maps an image to a predicted label string and counts every query.
The external-OCR adapter shells out to a Tesseract-compatible engine in
single-character mode, one invocation per layout cell; synthetic oracles
(threshold / linear / nearest-centroid) give desk-scale boundaries with
known geometry for verification.
"""

from __future__ import annotations

import os
import shutil
import subprocess
import tempfile
import threading
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import PlateImage, quantize8, save_png
from .plate import GlyphAtlas, PlateLayout

__all__ = [
    "OracleTransportError",
    "DecisionOracle",
    "ThresholdOracle",
    "LinearOracle",
    "NearestCentroidOracle",
    "CellMatchOracle",
    "SyntheticOracleSpec",
    "synthetic_classify",
    "OcrEngineConfig",
    "TesseractOracle",
    "engine_available",
    "Phi",
    "make_phi",
]

TESSERACT_ENV_VAR = "PLATEFORGE_TESSERACT"


class OracleTransportError(RuntimeError):
    """Engine launch/timeout failure; distinct from any classification output.

    Never mapped to a "not adversarial" decision - a transport error aborts
    the attack run instead of corrupting the search geometry.
    """


class DecisionOracle(ABC):
    """Classifier contract: image -> label string, with query accounting.

    classify is a pure function of the image bytes for a fixed configuration;
    the query counter increases by exactly the number of images submitted and
    never loses concurrent increments.
    """

    def __init__(self):
        self._count = 0
        self._count_lock = threading.Lock()

    @property
    def query_count(self) -> int:
        return self._count

    def _bump(self, k: int) -> None:
        with self._count_lock:
            self._count += k

    def classify(self, img: PlateImage) -> str:
        return self.classify_batch([img])[0]

    def classify_batch(self, imgs) -> list:
        imgs = list(imgs)
        if not imgs:
            return []
        batch = np.stack([im.ravel() for im in imgs])
        return self.classify_array(batch)

    def classify_array(self, batch: np.ndarray) -> list:
        """Hot path: rows of ``batch`` are flat images (shape (B, d))."""
        batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        self._bump(batch.shape[0])
        return self._decide(batch)

    @abstractmethod
    def _decide(self, batch: np.ndarray) -> list:
        """Label each row; must preserve input order."""


class ThresholdOracle(DecisionOracle):
    """1-d boundary: "ADV" iff pixel 0 >= tau, else "ORIG"."""

    def __init__(self, tau: float, adv_label: str = "ADV", orig_label: str = "ORIG"):
        super().__init__()
        self.tau = float(tau)
        self.adv_label = adv_label
        self.orig_label = orig_label

    def _decide(self, batch):
        return [
            self.adv_label if row[0] >= self.tau else self.orig_label for row in batch
        ]


class LinearOracle(DecisionOracle):
    """Halfspace boundary: "ADV" iff w.x + b >= 0."""

    def __init__(self, w: np.ndarray, b: float, adv_label: str = "ADV",
                 orig_label: str = "ORIG"):
        super().__init__()
        self.w = np.asarray(w, dtype=np.float64).reshape(-1)
        self.b = float(b)
        self.adv_label = adv_label
        self.orig_label = orig_label

    @property
    def normal(self) -> np.ndarray:
        """Unit boundary normal, pointing into the ADV halfspace."""
        return self.w / np.linalg.norm(self.w)

    def margin(self, x: np.ndarray) -> float:
        """Signed distance |w.x+b|/||w|| (the analytic minimal perturbation)."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        return float(abs(self.w @ x + self.b) / np.linalg.norm(self.w))

    def _decide(self, batch):
        if batch.shape[1] != self.w.size:
            raise ValueError(
                f"dimension mismatch: images have d={batch.shape[1]}, w has {self.w.size}"
            )
        scores = batch @ self.w + self.b
        return [self.adv_label if s >= 0.0 else self.orig_label for s in scores]


class NearestCentroidOracle(DecisionOracle):
    """Label of the L2-nearest centroid, ties to the lowest index.

    ``pixel_stride`` subsamples the raster before matching (stride > 1 makes
    the oracle blind to off-grid pixels, a stand-in for the brittle
    preprocessing of real recognizers).
    """

    def __init__(self, centroids, labels, pixel_stride: int = 1):
        super().__init__()
        centroids = list(centroids)
        labels = list(labels)
        if len(centroids) < 2 or len(set(labels)) < 2:
            raise ValueError("need >= 2 centroids with distinct labels")
        if len(centroids) != len(labels):
            raise ValueError("centroids and labels differ in length")
        shape = centroids[0].pixels.shape
        if any(c.pixels.shape != shape for c in centroids):
            raise ValueError("centroids differ in shape")
        self.labels = labels
        self.image_shape = shape
        self.pixel_stride = int(pixel_stride)
        mask2d = np.zeros(shape, dtype=bool)
        mask2d[:: self.pixel_stride, :: self.pixel_stride] = True
        self._mask = mask2d.reshape(-1)
        self._C = np.stack([c.ravel()[self._mask] for c in centroids])
        self._C_sq = np.sum(self._C**2, axis=1)

    def _decide(self, batch):
        if batch.shape[1] != self._mask.size:
            raise ValueError(
                f"dimension mismatch: images have d={batch.shape[1]}, "
                f"centroids have {self._mask.size}"
            )
        x = batch[:, self._mask]
        # ||x-c||^2 up to the shared ||x||^2 term; argmin is first-occurrence.
        scores = self._C_sq[None, :] - 2.0 * (x @ self._C.T)
        idx = np.argmin(scores, axis=1)
        return [self.labels[i] for i in idx]


class CellMatchOracle(DecisionOracle):
    """Per-cell nearest-glyph recognizer over the known layout slots.

    A second, independent reading of a plate (different variant from the
    whole-plate centroid oracle); also the reference recognizer used by the
    simulated assessor.
    """

    def __init__(self, atlas: GlyphAtlas, layout: PlateLayout):
        super().__init__()
        self.atlas = atlas
        self.layout = layout
        self._chars = atlas.chars()
        self._slot_glyphs = []
        for slot in layout.slots:
            mats = np.stack(
                [_resize_cell(atlas[ch], slot.w, slot.h).reshape(-1) for ch in self._chars]
            )
            self._slot_glyphs.append((slot, mats, np.sum(mats**2, axis=1)))

    def _decide(self, batch):
        h, w = self.layout.height, self.layout.width
        if batch.shape[1] != h * w:
            raise ValueError(
                f"dimension mismatch: images have d={batch.shape[1]}, layout {h * w}"
            )
        imgs = batch.reshape(-1, h, w)
        out = []
        for img in imgs:
            chars = []
            for slot, mats, sq in self._slot_glyphs:
                cell = img[slot.y : slot.y + slot.h, slot.x : slot.x + slot.w].reshape(-1)
                scores = sq - 2.0 * (mats @ cell)
                chars.append(self._chars[int(np.argmin(scores))])
            out.append("".join(chars))
        return out


def _resize_cell(glyph: np.ndarray, w: int, h: int) -> np.ndarray:
    gh, gw = glyph.shape
    if (gh, gw) == (h, w):
        return glyph
    rows = (np.arange(h) * gh) // h
    cols = (np.arange(w) * gw) // w
    return glyph[rows][:, cols]


@dataclass(frozen=True)
class SyntheticOracleSpec:
    """Declarative description of a synthetic oracle.

    variant "threshold-1d": params {"tau": float}
    variant "linear":       params {"w": array-like, "b": float}
    variant "nearest-centroid": params {"centroids": [PlateImage], "labels": [str],
                                        "pixel_stride": int (optional)}
    """

    variant: str
    params: dict = field(default_factory=dict)

    def build(self) -> DecisionOracle:
        if self.variant == "threshold-1d":
            return ThresholdOracle(tau=self.params["tau"])
        if self.variant == "linear":
            return LinearOracle(w=self.params["w"], b=self.params["b"])
        if self.variant == "nearest-centroid":
            return NearestCentroidOracle(
                centroids=self.params["centroids"],
                labels=self.params["labels"],
                pixel_stride=self.params.get("pixel_stride", 1),
            )
        raise ValueError(f"unknown synthetic oracle variant: {self.variant!r}")


def synthetic_classify(x, spec: SyntheticOracleSpec) -> str:
    """One-shot classification of an image or flat vector under ``spec``."""
    oracle = spec.build()
    if isinstance(x, PlateImage):
        return oracle.classify(x)
    return oracle.classify_array(np.asarray(x, dtype=np.float64).reshape(1, -1))[0]


@dataclass
class OcrEngineConfig:
    """External engine invocation settings.

    Defaults mirror the attacked pipeline: page segmentation mode 10
    (single character) and engine mode 1 (neural LSTM), Thai language pack.
    """

    executable: str = "tesseract"
    lang: str = "tha"
    psm: int = 10
    oem: int = 1
    layout: PlateLayout = None
    workers: int = 0  # 0 -> half the logical cores
    cell_timeout: float = 10.0

    def resolved_executable(self) -> str:
        return os.environ.get(TESSERACT_ENV_VAR, self.executable)

    def resolved_workers(self) -> int:
        if self.workers > 0:
            return self.workers
        return max(1, (os.cpu_count() or 2) // 2)


def engine_available(cfg: OcrEngineConfig | None = None) -> bool:
    """True iff the configured engine executable can be launched."""
    exe = (cfg or OcrEngineConfig()).resolved_executable()
    if shutil.which(exe) is None and not Path(exe).exists():
        return False
    try:
        subprocess.run(
            [exe, "--version"], capture_output=True, timeout=10.0, check=False
        )
        return True
    except (OSError, subprocess.TimeoutExpired):
        return False


class TesseractOracle(DecisionOracle):
    """Adapter for a Tesseract-style CLI engine, single-character per cell.

    The plate is cut into the six layout slots; each cell is quantized,
    written as an 8-bit PNG and recognized via
    ``<exe> <cell.png> stdout -l <lang> --psm 10 --oem 1``.
    The six outputs are concatenated after whitespace stripping, so the
    result may be any string, including invalid labels or "".
    """

    def __init__(self, cfg: OcrEngineConfig):
        super().__init__()
        if cfg.layout is None:
            raise ValueError("OcrEngineConfig.layout is required")
        self.cfg = cfg
        self._pool = ThreadPoolExecutor(
            max_workers=cfg.resolved_workers(), thread_name_prefix="ocr"
        )

    def close(self) -> None:
        self._pool.shutdown(wait=True)

    def _recognize_cell(self, png_path: Path) -> str:
        cfg = self.cfg
        cmd = [
            cfg.resolved_executable(),
            str(png_path),
            "stdout",
            "-l",
            cfg.lang,
            "--psm",
            str(cfg.psm),
            "--oem",
            str(cfg.oem),
        ]
        try:
            proc = subprocess.run(
                cmd, capture_output=True, timeout=cfg.cell_timeout
            )
        except OSError as e:
            raise OracleTransportError(f"engine launch failed: {e}") from e
        except subprocess.TimeoutExpired as e:
            raise OracleTransportError(
                f"engine timed out after {cfg.cell_timeout}s on {png_path.name}"
            ) from e
        if proc.returncode != 0:
            raise OracleTransportError(
                f"engine exited {proc.returncode}: {proc.stderr.decode('utf-8', 'replace').strip()}"
            )
        return "".join(proc.stdout.decode("utf-8").split())

    def _decide(self, batch):
        h, w = self.cfg.layout.height, self.cfg.layout.width
        if batch.shape[1] != h * w:
            raise ValueError(
                f"dimension mismatch: images have d={batch.shape[1]}, layout {h * w}"
            )
        results = []
        with tempfile.TemporaryDirectory(prefix="plateforge-ocr-") as tmp:
            tmp = Path(tmp)
            for i, row in enumerate(batch):
                img = quantize8(PlateImage(row.reshape(h, w)))
                futures = []
                for j, slot in enumerate(self.cfg.layout.slots):
                    cell = img.pixels[
                        slot.y : slot.y + slot.h, slot.x : slot.x + slot.w
                    ]
                    path = tmp / f"b{i:04d}_c{j}.png"
                    save_png(PlateImage(cell), path)
                    futures.append(self._pool.submit(self._recognize_cell, path))
                results.append("".join(f.result() for f in futures))
        return results


class Phi:
    """Targeted decision function: +1 iff the oracle answers the target.

    Shares the oracle's query counter and keeps a local call count for
    per-run accounting.
    """

    def __init__(self, oracle: DecisionOracle, target: str):
        if not target:
            raise ValueError("target label must be non-empty")
        self.oracle = oracle
        self.target = target
        self.calls = 0

    def __call__(self, img: PlateImage) -> int:
        return int(self.batch_array(img.ravel()[None])[0])

    def batch_array(self, batch: np.ndarray) -> np.ndarray:
        """Vector of +1/-1 decisions for rows of ``batch``, in row order."""
        labels = self.oracle.classify_array(batch)
        self.calls += len(labels)
        return np.where(np.array(labels, dtype=object) == self.target, 1, -1).astype(
            np.int8
        )


def make_phi(oracle: DecisionOracle, target: str) -> Phi:
    return Phi(oracle, target)
