"""Fold-based evaluation of a grasp-predicting model client.

The harness is deliberately agnostic about what answers: anything with a
``predict(request) -> str`` method (and an optional ``concurrency_safe``
flag) can be evaluated, from a live chat endpoint to the deterministic
mocks below. Parse failures count as grasp failures (the model answered,
unusably); transport failures after retries are excluded from the
accuracy denominator and reported separately, so flaky infrastructure
cannot masquerade as model quality.
"""

from __future__ import annotations

import json
import logging
import random
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .client import TransportError
from .geometry import GraspPose, GraspRectangle, MetricThresholds, rectangle_metric
from .parsing import parse_pose
from .templates import DatasetRecord, render_pose_text

logger = logging.getLogger(__name__)

SUCCESS = "success"
FAILURE = "failure"
PARSE_ERROR = "parse_error"
INFRA_ERROR = "infra_error"


@dataclass(frozen=True)
class PredictRequest:
    sample_id: str
    image_path: Path | None
    instruction: str


@dataclass
class EvalSample:
    sample_id: str
    image_path: Path | None
    instruction: str
    gt_rects: list[GraspRectangle]
    img_w: int
    img_h: int
    gt_pose: GraspPose | None = None
    source_image: str | None = None


def samples_from_records(records: list[DatasetRecord],
                         image_root: str | Path | None = None) -> list[EvalSample]:
    """Adapt built dataset records for evaluation.

    Records carry their transformed ground-truth rectangles and the crop
    size, so no source imagery is needed unless a live client must attach
    pixels (then ``image_root`` resolves the relative image paths).
    """
    samples = []
    for rec in records:
        if not rec.gt_rects:
            raise ValueError(f"record {rec.id} carries no ground-truth rectangles")
        size = int(rec.augmentation.get("output_size") or rec.augmentation.get("crop_size", 0))
        if size <= 0:
            raise ValueError(f"record {rec.id} lacks an output size in its provenance")
        image_path = Path(image_root) / rec.image if image_root else None
        samples.append(EvalSample(
            sample_id=rec.id,
            image_path=image_path,
            instruction=rec.instruction,
            gt_rects=rec.gt_rects,
            img_w=size,
            img_h=size,
            gt_pose=rec.pose,
            source_image=rec.augmentation.get("source_image"),
        ))
    return samples


@dataclass
class SampleRow:
    sample_id: str
    status: str
    best_iou: float | None = None
    angle_diff_deg: float | None = None
    pose: GraspPose | None = None
    raw_text: str = ""
    attempts: int = 1

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "status": self.status,
            "best_iou": self.best_iou,
            "angle_diff_deg": self.angle_diff_deg,
            "pose": None if self.pose is None else
                {"x": self.pose.x, "y": self.pose.y, "theta": self.pose.theta},
            "attempts": self.attempts,
        }


@dataclass
class FoldReport:
    fold_index: int
    rows: list[SampleRow]

    @property
    def successes(self) -> int:
        return sum(r.status == SUCCESS for r in self.rows)

    @property
    def parse_errors(self) -> int:
        return sum(r.status == PARSE_ERROR for r in self.rows)

    @property
    def infra_errors(self) -> int:
        return sum(r.status == INFRA_ERROR for r in self.rows)

    @property
    def scored(self) -> int:
        return len(self.rows) - self.infra_errors

    @property
    def accuracy(self) -> float:
        if self.scored == 0:
            return 0.0
        return self.successes / self.scored

    def to_dict(self) -> dict:
        return {
            "fold_index": self.fold_index,
            "accuracy": self.accuracy,
            "successes": self.successes,
            "scored": self.scored,
            "parse_errors": self.parse_errors,
            "infra_errors": self.infra_errors,
            "rows": [r.to_dict() for r in self.rows],
        }


def evaluate_fold(
    client,
    samples: list[EvalSample],
    thresholds: MetricThresholds,
    parallelism: int = 4,
    fold_index: int = 0,
    max_attempts: int = 3,
    backoff_base: float = 0.5,
) -> FoldReport:
    """Query, parse, and score every sample of one fold.

    Requests run on a bounded worker pool; rows come back in sample order
    regardless of completion order, so reports are byte-stable across
    parallelism levels. Clients that declare ``concurrency_safe = False``
    are evaluated serially.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if not getattr(client, "concurrency_safe", True):
        parallelism = 1

    def run_one(sample: EvalSample) -> SampleRow:
        raw = None
        for attempt in range(1, max_attempts + 1):
            try:
                raw = client.predict(PredictRequest(sample.sample_id, sample.image_path,
                                                    sample.instruction))
                break
            except TransportError as exc:
                logger.warning("attempt %d/%d failed for %s: %s",
                               attempt, max_attempts, sample.sample_id, exc)
                if attempt == max_attempts:
                    return SampleRow(sample.sample_id, INFRA_ERROR, attempts=attempt)
                time.sleep(backoff_base * (2 ** (attempt - 1)))
        parsed = parse_pose(raw)
        if parsed.pose is None:
            return SampleRow(sample.sample_id, PARSE_ERROR, raw_text=raw)
        outcome = rectangle_metric(parsed.pose, sample.gt_rects, thresholds,
                                   sample.img_w, sample.img_h)
        return SampleRow(
            sample_id=sample.sample_id,
            status=SUCCESS if outcome.success else FAILURE,
            best_iou=outcome.best_iou,
            angle_diff_deg=outcome.best_angle_diff_deg,
            pose=parsed.pose,
            raw_text=raw,
        )

    if parallelism == 1:
        rows = [run_one(s) for s in samples]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(run_one, samples))
    return FoldReport(fold_index=fold_index, rows=rows)


@dataclass
class EvalSummary:
    mode: str                       # "IW" or "OW"
    fold_accuracies: list[float]
    mean: float
    std: float
    config_fingerprint: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "fold_accuracies": self.fold_accuracies,
            "mean": self.mean,
            "std": self.std,
            "config_fingerprint": self.config_fingerprint,
        }


def aggregate(reports: list[FoldReport], mode: str = "IW",
              config_fingerprint: dict | None = None) -> EvalSummary:
    """Mean and sample standard deviation (n-1) of fold accuracies."""
    if len(reports) < 2:
        raise ValueError("aggregation needs at least 2 fold reports (std is undefined)")
    accs = [r.accuracy for r in reports]
    return EvalSummary(
        mode=mode,
        fold_accuracies=accs,
        mean=statistics.fmean(accs),
        std=statistics.stdev(accs),
        config_fingerprint=config_fingerprint or {},
    )


def format_summary_table(summaries: list[EvalSummary], method: str = "model") -> str:
    """Human-readable accuracy table with image-/object-wise columns."""
    def cell(summary: EvalSummary | None) -> str:
        if summary is None:
            return "-"
        return f"{100 * summary.mean:.2f}±{100 * summary.std:.2f}"

    by_mode = {s.mode: s for s in summaries}
    lines = [
        f"{'':24s}  Grasp Accuracy (%) (mean±std)",
        f"{'Method':24s}  {'Image-Wise (IW)':>18s}  {'Object-Wise (OW)':>18s}",
        f"{method:24s}  {cell(by_mode.get('IW')):>18s}  {cell(by_mode.get('OW')):>18s}",
    ]
    return "\n".join(lines)


def save_reports(path: str | Path, summary: EvalSummary, reports: list[FoldReport]) -> None:
    payload = {"summary": summary.to_dict(), "folds": [r.to_dict() for r in reports]}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def fold_samples_by_source(samples: list[EvalSample], k: int, seed: int) -> list[list[EvalSample]]:
    """Deal samples into k folds image-wise by their source image id."""
    if k < 2:
        raise ValueError("k must be >= 2")
    sources = sorted({s.source_image or s.sample_id for s in samples})
    if k > len(sources):
        raise ValueError(f"k={k} exceeds {len(sources)} source images")
    rng = random.Random(seed)
    rng.shuffle(sources)
    fold_of = {src: i % k for i, src in enumerate(sources)}
    folds: list[list[EvalSample]] = [[] for _ in range(k)]
    for s in samples:
        folds[fold_of[s.source_image or s.sample_id]].append(s)
    return folds


class RemoteClient:
    """Adapt a :class:`textgrasp.client.ModelClient` to the harness protocol."""

    def __init__(self, model_client):
        self._client = model_client

    @property
    def concurrency_safe(self) -> bool:
        return getattr(self._client, "concurrency_safe", True)

    def predict(self, request: PredictRequest) -> str:
        if request.image_path is None:
            raise ValueError(f"sample {request.sample_id} has no image path; "
                             f"pass image_root when loading the dataset")
        return self._client.predict(request.image_path.read_bytes(), request.instruction)


# ---------------------------------------------------------------------------
# deterministic mock clients
# ---------------------------------------------------------------------------

_ORACLE_REASONING = (
    "The object in the image has a stable section that fits a parallel "
    "gripper; closing across it near the center of mass is reliable."
)


class OracleClient:
    """Replies with a full-variant answer embedding each sample's target pose."""

    concurrency_safe = True

    def __init__(self, gt_poses: dict[str, GraspPose]):
        self._gt = dict(gt_poses)

    def predict(self, request: PredictRequest) -> str:
        pose = self._gt[request.sample_id]
        return f"{_ORACLE_REASONING}\n\nThe grasp pose is {render_pose_text(pose)}."


class ConstantClient:
    """Always answers with one fixed pose (bare pose-text form)."""

    concurrency_safe = True

    def __init__(self, pose: GraspPose):
        self._text = render_pose_text(pose)

    def predict(self, request: PredictRequest) -> str:
        return self._text


class ScriptedClient:
    """Replays canned replies verbatim, keyed by sample id."""

    concurrency_safe = True

    def __init__(self, replies: dict[str, str]):
        self._replies = dict(replies)

    def predict(self, request: PredictRequest) -> str:
        return self._replies[request.sample_id]


class GibberishClient:
    """Answers with text that contains no usable pose."""

    concurrency_safe = True

    def predict(self, request: PredictRequest) -> str:
        return "I cannot determine a reliable grasp for this object."


def mock_model(mode: str, *, samples: list[EvalSample] | None = None,
               pose: GraspPose | None = None, replies: dict[str, str] | None = None):
    """Factory for the deterministic test doubles above."""
    if mode == "oracle":
        if samples is None:
            raise ValueError("oracle mock needs the evaluation samples")
        missing = [s.sample_id for s in samples if s.gt_pose is None]
        if missing:
            raise ValueError(f"samples without a target pose: {missing[:3]}")
        return OracleClient({s.sample_id: s.gt_pose for s in samples})
    if mode == "constant":
        if pose is None:
            raise ValueError("constant mock needs a pose")
        return ConstantClient(pose)
    if mode == "scripted":
        if replies is None:
            raise ValueError("scripted mock needs replies")
        return ScriptedClient(replies)
    if mode == "gibberish":
        return GibberishClient()
    raise ValueError(f"unknown mock mode {mode!r}")
