import math
import random
import string

import pytest

from textgrasp.parsing import (
    B_VARIANT_MARKER,
    VARIANT_FULL,
    VARIANT_NO_REASONING_A,
    VARIANT_NO_REASONING_B,
    parse_pose,
    validate_answer,
)

HALF_PI = math.pi / 2


class TestParsePose:
    def test_embedded_triple_with_reasoning(self):
        text = ("The mug has a cylindrical body and a curved handle; the safest "
                "strategy is to grasp its handle. p = {0.435, 0.592, -0.785}")
        out = parse_pose(text)
        assert out.pose is not None
        assert (out.pose.x, out.pose.y) == (0.435, 0.592)
        assert out.pose.theta == pytest.approx(-0.785, abs=1e-12)
        assert out.reasoning_text.startswith("The mug")
        assert "p = " in out.reasoning_text

    def test_last_triple_wins(self):
        text = "{0.2, 0.2, 0.1} was my first guess ... final answer {0.500, 0.375, -1.571}"
        out = parse_pose(text)
        assert out.pose.x == 0.5
        assert out.pose.y == 0.375

    def test_no_numerals(self):
        out = parse_pose("I cannot determine the grasp.")
        assert out.pose is None
        assert "no_pose_found" in out.diagnostics
        assert out.reasoning_text == "I cannot determine the grasp."

    def test_bracket_and_paren_forms(self):
        assert parse_pose("[0.1, 0.2, 0.3]").pose is not None
        assert parse_pose("(0.1, 0.2, 0.3)").pose is not None

    def test_labeled_form(self):
        out = parse_pose("Grasp at x=0.25, y=0.75, theta=-0.5 please")
        assert out.pose.x == 0.25
        assert out.pose.y == 0.75
        assert out.pose.theta == pytest.approx(-0.5)

    def test_pixel_scale_numbers_rejected(self):
        out = parse_pose("the grasp box is {120, 240, 0.4}")
        assert out.pose is None
        assert "candidate_rejected:center_out_of_range" in out.diagnostics

    def test_near_miss_clamped(self):
        out = parse_pose("{1.02, -0.03, 0.0}")
        assert out.pose.x == 1.0
        assert out.pose.y == 0.0
        assert "center_clamped" in out.diagnostics

    def test_degrees_rejected_by_default(self):
        out = parse_pose("{0.5, 0.5, 45}")
        assert out.pose is None
        assert "candidate_rejected:angle_out_of_range" in out.diagnostics

    def test_degrees_opt_in(self):
        out = parse_pose("{0.5, 0.5, 45}", allow_degrees=True)
        assert out.pose is not None
        assert out.pose.theta == pytest.approx(math.radians(45))

    def test_angle_wrapped(self):
        out = parse_pose("{0.5, 0.5, 3.0}")
        assert out.pose is not None
        assert -HALF_PI <= out.pose.theta < HALF_PI

    def test_rejected_candidate_falls_back_to_earlier(self):
        text = "{0.3, 0.4, 0.2} but maybe {900, 900, 0.1}"
        out = parse_pose(text)
        assert out.pose is not None
        assert out.pose.x == pytest.approx(0.3)

    def test_prefix_stability(self):
        rng = random.Random(0)
        base = "answer {0.435, 0.592, -0.785}"
        pose0 = parse_pose(base).pose
        letters = string.ascii_letters + " .,!?\n"
        for _ in range(50):
            prefix = "".join(rng.choice(letters) for _ in range(rng.randrange(0, 400)))
            out = parse_pose(prefix + base)
            assert out.pose == pose0

    def test_totality_fuzz(self):
        rng = random.Random(42)
        alphabet = string.printable + "θπ¬¼≈今日"
        for _ in range(100_000):
            s = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 40)))
            out = parse_pose(s)  # must never raise
            if out.pose is not None:
                assert 0.0 <= out.pose.x <= 1.0
                assert 0.0 <= out.pose.y <= 1.0
                assert -HALF_PI <= out.pose.theta < HALF_PI

    def test_matched_span_within_bounds(self):
        text = "ok {0.5, 0.5, 0.0} done"
        out = parse_pose(text)
        s, e = out.matched_span
        assert 0 <= s < e <= len(text)
        assert text[s] == "{"


class TestValidateAnswer:
    def test_full_variant_passes(self):
        text = "Round rim, grasp from the top edge.\n\nThe grasp pose is {0.500, 0.375, -1.571}."
        report = validate_answer(text, VARIANT_FULL)
        assert report["passed"]

    def test_pose_only_checked_as_full_fails(self):
        report = validate_answer("{0.500, 0.375, -1.571}", VARIANT_FULL)
        assert not report["reasoning_nonempty"]
        assert not report["passed"]

    def test_a_variant(self):
        assert validate_answer("{0.500, 0.375, -1.571}", VARIANT_NO_REASONING_A)["passed"]
        assert not validate_answer("pose: {0.5, 0.4, 0.0}", VARIANT_NO_REASONING_A)["passed"]

    def test_b_variant_wrapper(self):
        text = f"The grasp pose is {{0.5, 0.4, 0.0}}, where (x, y) {B_VARIANT_MARKER}."
        assert validate_answer(text, VARIANT_NO_REASONING_B)["passed"]
        assert not validate_answer("{0.5, 0.4, 0.0}", VARIANT_NO_REASONING_B)["passed"]

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            validate_answer("x", "bogus")
