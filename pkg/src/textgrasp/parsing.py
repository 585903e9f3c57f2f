"""Robust extraction of grasp poses from free-form model text.

Chat models restate, hedge, and decorate their numeric answers, so the
extractor scans the whole reply for candidate triples and keeps the LAST
well-formed one: fine-tuned models tend to state the final answer at the
end, and corrections supersede earlier values. Candidates are gated to
plausible normalized ranges before acceptance; everything else is
reported through diagnostics instead of exceptions, so batch evaluation
never dies on a weird reply.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .geometry import GraspPose, wrap_half_pi

# appears verbatim in every no-reasoning-B answer; the validator keys on it
B_VARIANT_MARKER = "denotes the center point coordinates"

VARIANT_FULL = "full"
VARIANT_NO_REASONING_A = "no-reasoning-a"
VARIANT_NO_REASONING_B = "no-reasoning-b"
ALL_VARIANTS = (VARIANT_FULL, VARIANT_NO_REASONING_A, VARIANT_NO_REASONING_B)

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_TRIPLE_RE = re.compile(
    rf"[{{\[(]\s*({_NUM})\s*,\s*({_NUM})\s*,\s*({_NUM})\s*[)\]}}]"
)
_LABELED_RE = re.compile(
    rf"x\s*[=:]\s*({_NUM})\s*[,;\s]\s*y\s*[=:]\s*({_NUM})\s*[,;\s]\s*"
    rf"(?:theta|angle|t)\s*[=:]\s*({_NUM})",
    re.IGNORECASE,
)

# slack for near-miss normalization drift; values inside are clamped to [0,1]
_CENTER_SLACK = 0.05

# textual poses carry 3 decimals, so a reading within half a printable step
# of +/-pi/2 is the boundary itself; snapping it to exactly -pi/2 keeps
# boundary poses stable under render -> parse -> render
_BOUNDARY_SNAP = 0.00051


def _normalize_theta(t: float) -> float:
    if abs(abs(t) - math.pi / 2) <= _BOUNDARY_SNAP:
        return -math.pi / 2
    return wrap_half_pi(t)


@dataclass
class ParsedOutput:
    """Result of scanning one model reply for a grasp pose."""

    pose: GraspPose | None
    reasoning_text: str
    matched_span: tuple[int, int] | None
    diagnostics: list[str] = field(default_factory=list)


def parse_pose(text: str, allow_degrees: bool = False) -> ParsedOutput:
    """Extract the last plausible ``(x, y, theta)`` triple from ``text``.

    Triples may be wrapped in braces/brackets/parens or spelled as
    ``x=.. y=.. theta=..``. The first two values must land in
    [-0.05, 1.05] (then clamped to [0, 1]); the third must be a radian
    angle in [-pi, pi] unless ``allow_degrees`` is set, in which case
    values up to +/-180 are reinterpreted as degrees. Never raises on
    arbitrary input: a missing pose is reported via diagnostics.
    """
    diagnostics: list[str] = []
    candidates = []
    for pattern in (_TRIPLE_RE, _LABELED_RE):
        for m in pattern.finditer(text):
            candidates.append(m)
    candidates.sort(key=lambda m: m.start())

    for m in reversed(candidates):
        try:
            vals = [float(g) for g in m.groups()]
        except ValueError:  # defensive; the regex should guarantee floats
            diagnostics.append("candidate_rejected:unparseable")
            continue
        if not all(math.isfinite(v) for v in vals):
            diagnostics.append("candidate_rejected:non_finite")
            continue
        x, y, t = vals
        if not (-_CENTER_SLACK <= x <= 1.0 + _CENTER_SLACK and
                -_CENTER_SLACK <= y <= 1.0 + _CENTER_SLACK):
            diagnostics.append("candidate_rejected:center_out_of_range")
            continue
        if abs(t) > math.pi:
            if allow_degrees and abs(t) <= 180.0:
                t = math.radians(t)
                diagnostics.append("angle_reinterpreted_as_degrees")
            else:
                diagnostics.append("candidate_rejected:angle_out_of_range")
                continue
        cx = min(max(x, 0.0), 1.0)
        cy = min(max(y, 0.0), 1.0)
        if cx != x or cy != y:
            diagnostics.append("center_clamped")
        pose = GraspPose(cx, cy, _normalize_theta(t))
        return ParsedOutput(
            pose=pose,
            reasoning_text=text[: m.start()],
            matched_span=(m.start(), m.end()),
            diagnostics=diagnostics,
        )

    diagnostics.append("no_pose_found")
    return ParsedOutput(pose=None, reasoning_text=text, matched_span=None,
                        diagnostics=diagnostics)


def validate_answer(text: str, variant: str) -> dict[str, bool]:
    """Check the structural rules of an answer variant, report-style.

    Returns per-rule booleans instead of raising, so callers can log which
    rule a generated or model-produced answer violated.
    """
    variant = str(variant)
    if variant not in ALL_VARIANTS:
        raise ValueError(f"unknown answer variant {variant!r}")
    parsed = parse_pose(text)
    report: dict[str, bool] = {"pose_present": parsed.pose is not None}
    if variant == VARIANT_FULL:
        prefix = parsed.reasoning_text if parsed.matched_span else ""
        report["reasoning_nonempty"] = any(c.isalpha() for c in prefix)
    elif variant == VARIANT_NO_REASONING_A:
        if parsed.matched_span:
            start, end = parsed.matched_span
            outside = text[:start] + text[end:]
        else:
            outside = text
        report["pose_only"] = parsed.pose is not None and not any(c.isalpha() for c in outside)
    else:
        report["wrapper_present"] = B_VARIANT_MARKER in text
    report["passed"] = all(report.values())
    return report
