"""Template bank, structured answers, and the JSONL dataset builder.

A structured answer couples a category-level reasoning text with the
canonical textual pose ``{x, y, theta}`` (three decimals, half-even
rounding). Poses are quantized onto that printable grid before any text
is rendered, so the text, the stored pose, and whatever the parser reads
back agree exactly. Two ablation variants drop the reasoning: variant A
is the bare pose text, variant B wraps it in a fixed explanatory prompt.
"""

from __future__ import annotations

import json
import logging
import math
import os
import random
from dataclasses import dataclass, field
from pathlib import Path

import cv2

from .augment import AugmentationConfig, ExpansionPlan, expand_dataset, transform_rects, warp_image
from .cornell import CategoryMap, CornellSample
from .geometry import GraspPose, GraspRectangle, rect_to_pose
from .parsing import (
    ALL_VARIANTS,
    B_VARIANT_MARKER,
    VARIANT_FULL,
    VARIANT_NO_REASONING_A,
    VARIANT_NO_REASONING_B,
    parse_pose,
)

logger = logging.getLogger(__name__)

LEAD_IN = "The grasp pose is"

_HALF_PI = math.pi / 2


class BankValidationError(ValueError):
    """Template bank file is malformed or fails coverage/purity checks."""


class BuildError(RuntimeError):
    """Dataset build failed; partial output has been cleaned up."""


@dataclass
class TemplateEntry:
    text: str
    reviewed: bool = False


@dataclass
class TemplateBank:
    instructions: list[str]
    reasoning: dict[str, list[TemplateEntry]]

    def categories(self) -> set[str]:
        return set(self.reasoning)

    def entries_for(self, category: str, fallback_category: str = "object") -> list[TemplateEntry]:
        entries = self.reasoning.get(category)
        if entries:
            return entries
        entries = self.reasoning.get(fallback_category)
        if entries:
            return entries
        raise BankValidationError(
            f"no reasoning templates for category {category!r} and no "
            f"fallback {fallback_category!r} in the bank")

    def unreviewed(self) -> list[tuple[str, str]]:
        return [(cat, e.text) for cat, entries in self.reasoning.items()
                for e in entries if not e.reviewed]

    def to_dict(self) -> dict:
        return {
            "instructions": list(self.instructions),
            "reasoning": {
                cat: [{"text": e.text, "reviewed": e.reviewed} for e in entries]
                for cat, entries in self.reasoning.items()
            },
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n",
                              encoding="utf-8")


def load_template_bank(path: str | Path, cmap: CategoryMap | None = None) -> TemplateBank:
    """Load and validate a bank file; optionally check category coverage.

    With a category map given, every category must be covered either
    directly or by the map's fallback category; fallback-covered ones are
    only warned about.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BankValidationError(f"cannot read template bank {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise BankValidationError("bank file must contain a JSON object")
    instructions = raw.get("instructions") or []
    if not instructions or not all(isinstance(s, str) and s.strip() for s in instructions):
        raise BankValidationError("bank needs a non-empty 'instructions' list of strings")
    reasoning_raw = raw.get("reasoning") or {}
    if not isinstance(reasoning_raw, dict) or not reasoning_raw:
        raise BankValidationError("bank needs a non-empty 'reasoning' mapping")
    reasoning: dict[str, list[TemplateEntry]] = {}
    for cat, entries in reasoning_raw.items():
        parsed_entries = []
        for e in entries or []:
            text = e.get("text", "") if isinstance(e, dict) else str(e)
            if not text.strip():
                raise BankValidationError(f"empty reasoning template under {cat!r}")
            reviewed = bool(e.get("reviewed", False)) if isinstance(e, dict) else False
            parsed_entries.append(TemplateEntry(text=text, reviewed=reviewed))
        if not parsed_entries:
            raise BankValidationError(f"category {cat!r} has zero templates")
        reasoning[cat] = parsed_entries
    bank = TemplateBank(instructions=list(instructions), reasoning=reasoning)

    if cmap is not None:
        have_fallback = cmap.fallback in bank.reasoning
        for cat in sorted(cmap.categories):
            if cat in bank.reasoning:
                continue
            if have_fallback:
                logger.warning("category %r has no reasoning templates; fallback %r will be used",
                               cat, cmap.fallback)
            else:
                raise BankValidationError(
                    f"category {cat!r} has no templates and the bank lacks the "
                    f"fallback category {cmap.fallback!r}")
    return bank


def lint_bank(bank: TemplateBank) -> list[str]:
    """Purity issues: template text must not contain a parseable pose triple.

    A pose-looking triple inside reasoning text would make the extractor
    ambiguous, since it keeps the LAST plausible triple in a reply.
    """
    issues = []
    for cat, entries in bank.reasoning.items():
        for e in entries:
            if parse_pose(e.text).pose is not None:
                issues.append(f"reasoning template under {cat!r} contains a pose-like "
                              f"triple: {e.text[:60]!r}")
    for s in bank.instructions:
        if parse_pose(s).pose is not None:
            issues.append(f"instruction contains a pose-like triple: {s[:60]!r}")
    return issues


def _quantize(value: float, lo: float, hi: float) -> float:
    q = round(value, 3)
    q = min(max(q, lo), hi)
    return q + 0.0  # normalize -0.0


def quantize_pose(pose: GraspPose) -> GraspPose:
    """Snap a pose to the 3-decimal grid used by the textual form.

    Angles whose printable form rounds onto or past the +/-pi/2 boundary
    store exactly -pi/2 (the two boundaries are the same grasp), matching
    what the parser reads back from the rendered text.
    """
    theta = round(pose.theta, 3)
    if theta <= -_HALF_PI or theta >= _HALF_PI:
        theta = -_HALF_PI
    return GraspPose(
        _quantize(pose.x, 0.0, 1.0),
        _quantize(pose.y, 0.0, 1.0),
        theta + 0.0,
    )


def render_pose_text(pose: GraspPose) -> str:
    """Canonical textual pose: ``{x, y, theta}`` with three decimals each."""
    q = quantize_pose(pose)
    return f"{{{q.x:.3f}, {q.y:.3f}, {q.theta:.3f}}}"


@dataclass
class StructuredAnswer:
    variant: str
    reasoning_text: str
    pose_text: str
    full_text: str


def render_answer(bank: TemplateBank, category: str, pose: GraspPose, variant: str,
                  rng: random.Random, fallback_category: str = "object") -> StructuredAnswer:
    """Render one answer for a (category, pose) pair.

    The full variant picks a reasoning template uniformly with the given
    RNG; the ablation variants ignore the bank's reasoning entirely.
    """
    variant = str(variant)
    if variant not in ALL_VARIANTS:
        raise ValueError(f"unknown answer variant {variant!r}")
    pose_text = render_pose_text(pose)
    if variant == VARIANT_NO_REASONING_A:
        return StructuredAnswer(variant, "", pose_text, pose_text)
    if variant == VARIANT_NO_REASONING_B:
        full = (f"{LEAD_IN} {pose_text}, where (x, y) {B_VARIANT_MARKER} "
                f"and the third value denotes the rotation angle in radians.")
        return StructuredAnswer(variant, "", pose_text, full)
    entries = bank.entries_for(category, fallback_category)
    reasoning = rng.choice(entries).text
    full = f"{reasoning}\n\n{LEAD_IN} {pose_text}."
    return StructuredAnswer(variant, reasoning, pose_text, full)


def render_instruction(bank: TemplateBank, rng: random.Random) -> str:
    return rng.choice(bank.instructions)


@dataclass
class BuildReport:
    out_path: Path
    images_dir: Path
    records_written: int
    dropped_variants: int
    variant: str
    seed: int


@dataclass
class DatasetRecord:
    """In-memory form of one JSONL line."""

    id: str
    image: str
    category: str
    instruction: str
    answer: StructuredAnswer
    pose: GraspPose
    augmentation: dict
    gt_rects: list[GraspRectangle] = field(default_factory=list)

    def to_json_line(self) -> str:
        payload = {
            "id": self.id,
            "image": self.image,
            "category": self.category,
            "instruction": self.instruction,
            "answer": self.answer.full_text,
            "pose": {"x": self.pose.x, "y": self.pose.y, "theta": self.pose.theta},
            "variant": self.answer.variant,
            "augmentation": self.augmentation,
            "gt_rects": [[[float(x), float(y)] for x, y in r.vertices] for r in self.gt_rects],
        }
        return json.dumps(payload, ensure_ascii=False)

    @classmethod
    def from_json_line(cls, line: str) -> "DatasetRecord":
        raw = json.loads(line)
        pose = GraspPose(raw["pose"]["x"], raw["pose"]["y"], raw["pose"]["theta"])
        answer = StructuredAnswer(variant=raw["variant"], reasoning_text="",
                                  pose_text="", full_text=raw["answer"])
        return cls(
            id=raw["id"], image=raw["image"], category=raw["category"],
            instruction=raw["instruction"], answer=answer, pose=pose,
            augmentation=raw.get("augmentation", {}),
            gt_rects=[GraspRectangle(v) for v in raw.get("gt_rects", [])],
        )


def _record_rng(seed: int, record_id: str, purpose: str) -> random.Random:
    return random.Random(f"{seed}:{record_id}:{purpose}")


def build_dataset(
    samples: list[CornellSample],
    cfg: AugmentationConfig,
    bank: TemplateBank,
    variant: str,
    out_path: str | Path,
    fallback_category: str = "object",
    strict: bool = True,
    write_images: bool = True,
) -> BuildReport:
    """Materialize the instruction-tuning dataset as JSONL plus PNG crops.

    Deterministic for fixed inputs and seed, to the byte. In strict mode
    a full-variant build refuses banks with unreviewed templates or
    purity lint findings.
    """
    variant = str(variant)
    if variant not in ALL_VARIANTS:
        raise ValueError(f"unknown answer variant {variant!r}")
    if strict and variant == VARIANT_FULL:
        unreviewed = bank.unreviewed()
        if unreviewed:
            cats = sorted({c for c, _ in unreviewed})
            raise BankValidationError(
                f"bank has {len(unreviewed)} unreviewed template(s) in categories {cats}; "
                f"review them or pass strict=False")
        issues = lint_bank(bank)
        if issues:
            raise BankValidationError("bank failed purity lint: " + "; ".join(issues))

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    images_dir = out_path.parent / "images"
    plan = expand_dataset(samples, cfg)

    tmp_path = out_path.with_suffix(out_path.suffix + ".tmp")
    written_images: list[Path] = []
    records = 0
    try:
        with open(tmp_path, "w", encoding="utf-8", newline="\n") as fh:
            for item in plan.items:
                record = _build_record(item, cfg, bank, variant, fallback_category)
                if write_images:
                    images_dir.mkdir(parents=True, exist_ok=True)
                    image_out = images_dir / f"{record.id}.png"
                    _write_augmented_image(item, cfg, image_out)
                    written_images.append(image_out)
                fh.write(record.to_json_line())
                fh.write("\n")
                records += 1
        os.replace(tmp_path, out_path)
    except Exception:
        tmp_path.unlink(missing_ok=True)
        for p in written_images:
            p.unlink(missing_ok=True)
        raise
    return BuildReport(out_path=out_path, images_dir=images_dir, records_written=records,
                       dropped_variants=plan.dropped_count, variant=variant, seed=cfg.seed)


def _build_record(item, cfg: AugmentationConfig, bank: TemplateBank, variant: str,
                  fallback_category: str) -> DatasetRecord:
    sample = item.sample
    gt_rects = transform_rects(sample.positive_rects, item.params,
                               sample.width, sample.height, cfg.output_size)
    target = gt_rects[item.chosen_rect_index]
    pose = quantize_pose(rect_to_pose(target, cfg.output_size, cfg.output_size))
    record_id = item.record_id
    instruction = render_instruction(bank, _record_rng(cfg.seed, record_id, "instruction"))
    answer = render_answer(bank, sample.category, pose, variant,
                           _record_rng(cfg.seed, record_id, "reasoning"), fallback_category)
    parsed = parse_pose(answer.full_text)
    if parsed.pose != pose:
        raise BuildError(f"answer for {record_id} does not parse back to its pose: "
                         f"{answer.full_text!r}")
    return DatasetRecord(
        id=record_id,
        image=f"images/{record_id}.png",
        category=sample.category,
        instruction=instruction,
        answer=answer,
        pose=pose,
        augmentation={
            "source_image": sample.image_id,
            **item.params.to_dict(),
            "output_size": cfg.output_size,
            "chosen_rect_index": item.chosen_rect_index,
        },
        gt_rects=gt_rects,
    )


def _write_augmented_image(item, cfg: AugmentationConfig, out_path: Path) -> None:
    img = cv2.imread(str(item.sample.image_path), cv2.IMREAD_COLOR)
    if img is None:
        raise BuildError(f"cannot read source image {item.sample.image_path}")
    warped = warp_image(img, item.params, cfg.output_size)
    ok, png = cv2.imencode(".png", warped)
    if not ok:
        raise BuildError(f"PNG encoding failed for {out_path}")
    out_path.write_bytes(png.tobytes())


def load_dataset_records(path: str | Path) -> list[DatasetRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(DatasetRecord.from_json_line(line))
    return records


@dataclass
class AuthoringReport:
    status: dict[str, str]
    checklist: list[tuple[str, str]]


_GENERATE_PROMPT = (
    "Write {n} short reasoning templates for grasping a {category} with a "
    "parallel two-finger robot gripper. Each template should describe the "
    "typical shape of a {category} and suggest a sensible grasping strategy. "
    "Write one template per line, with no numbering and no specific "
    "coordinates or numbers."
)

_REFINE_PROMPT = (
    "Refine the following reasoning templates by removing redundant or "
    "irrelevant sentences. Keep one template per line and do not add "
    "numbers or coordinates.\n\n{drafts}"
)


def author_templates(client, categories: list[str], existing: TemplateBank | None = None,
                     per_category: int = 3) -> tuple[TemplateBank, AuthoringReport]:
    """Two-pass template authoring against a text-completion client.

    Pass one drafts templates per category, pass two asks the model to
    strip redundancy. Everything produced is marked unreviewed; strict
    dataset builds refuse it until a human flips the flags. Endpoint
    failures leave that category in the report and keep going.
    """
    instructions = list(existing.instructions) if existing else []
    reasoning = {cat: list(entries) for cat, entries in (existing.reasoning if existing else {}).items()}
    status: dict[str, str] = {}
    checklist: list[tuple[str, str]] = []
    for category in categories:
        try:
            draft_reply = client.complete(_GENERATE_PROMPT.format(n=per_category, category=category))
            drafts = _template_lines(draft_reply)
            refined_reply = client.complete(_REFINE_PROMPT.format(drafts="\n".join(drafts)))
            refined = _template_lines(refined_reply) or drafts
            entries = [TemplateEntry(text=t, reviewed=False) for t in refined]
            if not entries:
                status[category] = "error: model returned no templates"
                continue
            reasoning.setdefault(category, []).extend(entries)
            checklist.extend((category, e.text) for e in entries)
            status[category] = "ok"
        except Exception as exc:  # endpoint failure: keep partial results
            status[category] = f"error: {exc}"
    bank = TemplateBank(instructions=instructions or ["Predict a grasp pose for the object in the image."],
                        reasoning=reasoning)
    return bank, AuthoringReport(status=status, checklist=checklist)


def _template_lines(reply: str) -> list[str]:
    lines = []
    for line in reply.splitlines():
        cleaned = line.strip().lstrip("-*0123456789. ").strip()
        if cleaned:
            lines.append(cleaned)
    return lines
