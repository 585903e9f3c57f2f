"""Cornell grasp dataset ingestion and fold splitting.

Directory layout expected under the dataset root (subdirectories are
searched recursively, matching the upstream 01..10 folder structure):

  pcd####r.png       RGB image
  pcd####cpos.txt    positive rectangles: one "x y" vertex per line,
                     four consecutive lines per rectangle
  object_index.txt   object identities: "<image_id> <object_id>" per line
                     (also accepted under the name z.txt; image ids may
                     be written with or without the "pcd" prefix)

Annotated rectangles are hand-drawn and frequently contain NaN vertices
or slightly skewed corners; groups with non-finite coordinates are
dropped (and counted), everything else is re-fit to an exact rectangle.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import cv2

from .geometry import DegenerateRectangleError, GraspRectangle

logger = logging.getLogger(__name__)

IMAGE_WISE = "image-wise"
OBJECT_WISE = "object-wise"

_INDEX_FILENAMES = ("object_index.txt", "z.txt")


class IngestError(RuntimeError):
    """Dataset directory or image file cannot be ingested."""


class AnnotationFormatError(ValueError):
    """Malformed cpos annotation content."""


@dataclass
class CategoryMap:
    """object_id -> category name, with a fallback for unmapped ids."""

    fallback: str
    entries: dict[int, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.fallback:
            raise ValueError("fallback category name must be non-empty")
        for oid, name in self.entries.items():
            if not name:
                raise ValueError(f"empty category name for object id {oid}")

    def category_for(self, object_id: int) -> str:
        return self.entries.get(object_id, self.fallback)

    @property
    def categories(self) -> set[str]:
        return set(self.entries.values()) | {self.fallback}

    @classmethod
    def load(cls, path: str | Path) -> "CategoryMap":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            fallback=raw["fallback"],
            entries={int(k): v for k, v in raw.get("objects", {}).items()},
        )

    def save(self, path: str | Path) -> None:
        payload = {
            "fallback": self.fallback,
            "objects": {str(k): v for k, v in sorted(self.entries.items())},
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


@dataclass
class AnnotationParse:
    rects: list[GraspRectangle]
    dropped_count: int = 0


@dataclass
class CornellSample:
    image_id: str
    image_path: Path
    width: int
    height: int
    object_id: int
    category: str
    positive_rects: list[GraspRectangle]


def parse_annotation_file(content: str) -> AnnotationParse:
    """Parse cpos-format text into canonicalized rectangles.

    Every 4 consecutive non-empty lines form one rectangle. Groups with a
    non-finite coordinate (real Cornell files contain NaN vertices) or a
    degenerate fit are dropped and counted, never interpolated.
    """
    points: list[tuple[float, float]] = []
    for lineno, line in enumerate(content.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        tokens = stripped.split()
        if len(tokens) != 2:
            raise AnnotationFormatError(
                f"line {lineno}: expected 2 coordinates, got {len(tokens)}: {stripped!r}")
        try:
            points.append((float(tokens[0]), float(tokens[1])))
        except ValueError as exc:
            raise AnnotationFormatError(f"line {lineno}: unparseable token: {stripped!r}") from exc
    if len(points) % 4 != 0:
        raise AnnotationFormatError(
            f"{len(points)} vertex lines; cpos files must contain a multiple of 4")

    rects: list[GraspRectangle] = []
    dropped = 0
    for i in range(0, len(points), 4):
        quad = points[i:i + 4]
        if not all(_finite(p) for p in quad):
            dropped += 1
            continue
        try:
            rects.append(GraspRectangle.from_raw_vertices(quad))
        except DegenerateRectangleError:
            dropped += 1
    return AnnotationParse(rects=rects, dropped_count=dropped)


def _finite(p: tuple[float, float]) -> bool:
    return p[0] == p[0] and abs(p[0]) != float("inf") and \
        p[1] == p[1] and abs(p[1]) != float("inf")


def serialize_annotations(rects: list[GraspRectangle]) -> str:
    """Inverse of :func:`parse_annotation_file` at full float precision."""
    lines = []
    for r in rects:
        for vx, vy in r.vertices:
            lines.append(f"{float(vx)!r} {float(vy)!r}")
    return "\n".join(lines) + ("\n" if lines else "")


def _load_object_index(root: Path) -> dict[str, int]:
    for name in _INDEX_FILENAMES:
        candidates = sorted(root.rglob(name))
        if candidates:
            index: dict[str, int] = {}
            for path in candidates:
                for line in path.read_text(encoding="utf-8").splitlines():
                    line = line.strip()
                    if not line or line.startswith("#"):
                        continue
                    tokens = line.split()
                    if len(tokens) < 2:
                        continue
                    image_id = tokens[0]
                    if not image_id.startswith("pcd"):
                        image_id = f"pcd{image_id}"
                    index[image_id] = int(tokens[1])
            return index
    raise IngestError(
        f"no object-id index file ({' or '.join(_INDEX_FILENAMES)}) under {root}")


def load_dataset(root: str | Path, cmap: CategoryMap) -> list[CornellSample]:
    """Walk a Cornell-style root into validated samples, ordered by image id.

    Images without an annotation file, without any valid positive
    rectangle, or missing from the object index are skipped with a
    warning. An unreadable image raises, since that points at a broken
    checkout rather than a known annotation quirk.
    """
    root = Path(root)
    image_paths = sorted(root.rglob("pcd*r.png"))
    if not image_paths:
        logger.warning("no pcd*r.png images found under %s", root)
        return []
    index = _load_object_index(root)

    samples: list[CornellSample] = []
    total_dropped = 0
    for image_path in image_paths:
        image_id = image_path.name[: -len("r.png")]
        ann_path = image_path.with_name(f"{image_id}cpos.txt")
        if not ann_path.exists():
            logger.warning("missing annotation for %s; skipped", image_id)
            continue
        if image_id not in index:
            logger.warning("image %s not in object index; skipped", image_id)
            continue
        parsed = parse_annotation_file(ann_path.read_text(encoding="utf-8"))
        total_dropped += parsed.dropped_count
        if not parsed.rects:
            logger.warning("no valid positive rectangles for %s; skipped", image_id)
            continue
        img = cv2.imread(str(image_path), cv2.IMREAD_UNCHANGED)
        if img is None:
            raise IngestError(f"unreadable image: {image_path}")
        height, width = img.shape[:2]
        object_id = index[image_id]
        samples.append(CornellSample(
            image_id=image_id,
            image_path=image_path,
            width=int(width),
            height=int(height),
            object_id=object_id,
            category=cmap.category_for(object_id),
            positive_rects=parsed.rects,
        ))
    samples.sort(key=lambda s: s.image_id)
    if total_dropped:
        logger.info("dropped %d rectangle(s) with non-finite or degenerate vertices",
                    total_dropped)
    return samples


@dataclass
class FoldAssignment:
    mode: str
    k: int
    seed: int
    assignment: dict[str, int]

    def fold_of(self, image_id: str) -> int:
        return self.assignment[image_id]

    def images_in_fold(self, fold: int) -> list[str]:
        return sorted(i for i, f in self.assignment.items() if f == fold)

    def to_json(self) -> str:
        payload = {
            "mode": self.mode,
            "k": self.k,
            "seed": self.seed,
            "assignment": {i: self.assignment[i] for i in sorted(self.assignment)},
        }
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FoldAssignment":
        raw = json.loads(text)
        return cls(mode=raw["mode"], k=int(raw["k"]), seed=int(raw["seed"]),
                   assignment={k: int(v) for k, v in raw["assignment"].items()})


def split_folds(samples: list[CornellSample], mode: str, k: int, seed: int) -> FoldAssignment:
    """Deal images (or whole objects) into k folds after a seeded shuffle.

    Round-robin dealing keeps folds near-balanced and deterministic; with
    the object-wise mode every image of an object lands in the same fold,
    so held-out folds contain unseen objects.
    """
    import random as _random

    if mode not in (IMAGE_WISE, OBJECT_WISE):
        raise ValueError(f"mode must be {IMAGE_WISE!r} or {OBJECT_WISE!r}, got {mode!r}")
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if not samples:
        raise ValueError("cannot split an empty sample list")

    rng = _random.Random(seed)
    assignment: dict[str, int] = {}
    if mode == IMAGE_WISE:
        ids = sorted(s.image_id for s in samples)
        if k > len(ids):
            raise ValueError(f"k={k} exceeds {len(ids)} images")
        rng.shuffle(ids)
        for i, image_id in enumerate(ids):
            assignment[image_id] = i % k
    else:
        by_object: dict[int, list[str]] = {}
        for s in samples:
            by_object.setdefault(s.object_id, []).append(s.image_id)
        object_ids = sorted(by_object)
        if k > len(object_ids):
            raise ValueError(f"k={k} exceeds {len(object_ids)} objects")
        rng.shuffle(object_ids)
        for i, oid in enumerate(object_ids):
            for image_id in by_object[oid]:
                assignment[image_id] = i % k
    return FoldAssignment(mode=mode, k=k, seed=seed, assignment=assignment)


_IMAGE_ID_RE = re.compile(r"^pcd\d+$")


def is_image_id(s: str) -> bool:
    return bool(_IMAGE_ID_RE.match(s))
