import json

import pytest

from textgrasp.cli import main
from textgrasp.cornell import FoldAssignment


@pytest.fixture()
def clean_env(monkeypatch):
    for var in ("RTG_ENDPOINT_URL", "RTG_API_KEY", "RTG_MODEL_NAME", "RTG_IMAGE_ROOT"):
        monkeypatch.delenv(var, raising=False)


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_ds") / "data.jsonl"
    code = main(["build-dataset", "--per-image-count", "3", "--seed", "3",
                 "--out", str(out), "--no-images"])
    assert code == 0
    return out


class TestSplit:
    def test_split_writes_assignment(self, tmp_path, capsys):
        out = tmp_path / "folds.json"
        code = main(["split", "--mode", "object-wise", "--k", "2", "--seed", "7",
                     "--out", str(out)])
        assert code == 0
        fa = FoldAssignment.from_json(out.read_text())
        assert fa.mode == "object-wise"
        assert fa.k == 2
        assert len(fa.assignment) == 6  # bundled fixture images

    def test_split_stdout(self, capsys):
        code = main(["split", "--mode", "image-wise", "--k", "3", "--seed", "1"])
        assert code == 0
        fa = FoldAssignment.from_json(capsys.readouterr().out)
        assert fa.k == 3

    def test_split_determinism(self, tmp_path):
        code_a = main(["split", "--mode", "image-wise", "--k", "3", "--seed", "9",
                       "--out", str(tmp_path / "a.json")])
        code_b = main(["split", "--mode", "image-wise", "--k", "3", "--seed", "9",
                       "--out", str(tmp_path / "b.json")])
        assert code_a == code_b == 0
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


class TestBuildDataset:
    def test_build_and_count(self, built, capsys):
        lines = [l for l in built.read_text().splitlines() if l.strip()]
        assert len(lines) == 18  # 6 fixture images x 3 variants
        rec = json.loads(lines[0])
        assert set(rec) >= {"id", "image", "category", "instruction", "answer",
                            "pose", "variant", "augmentation"}

    def test_bad_variant_rejected(self, tmp_path):
        code = main(["build-dataset", "--variant", "nope", "--out", str(tmp_path / "x.jsonl")])
        assert code == 1


class TestMockEval:
    def test_oracle_law(self, built, capsys):
        code = main(["mock-eval", "--mode", "oracle", "--dataset", str(built),
                     "--k", "3", "--seed", "2"])
        out = capsys.readouterr().out
        assert code == 0
        assert "100.00±0.00" in out

    def test_gibberish_all_parse_errors(self, built, capsys):
        code = main(["mock-eval", "--mode", "gibberish", "--dataset", str(built),
                     "--k", "3", "--seed", "2"])
        out = capsys.readouterr().out
        assert code == 0
        assert "0.00±0.00" in out
        assert "6 parse errors" in out

    def test_report_written(self, built, tmp_path, capsys):
        report = tmp_path / "report.json"
        code = main(["mock-eval", "--mode", "oracle", "--dataset", str(built),
                     "--k", "3", "--seed", "2", "--out", str(report)])
        assert code == 0
        payload = json.loads(report.read_text())
        assert payload["summary"]["mean"] == 1.0
        assert len(payload["folds"]) == 3

    def test_constant_requires_pose(self, built):
        assert main(["mock-eval", "--mode", "constant", "--dataset", str(built)]) == 1


class TestEval:
    def test_eval_without_env_names_variable(self, built, clean_env, capsys):
        code = main(["eval", "--dataset", str(built)])
        assert code == 1
        err = capsys.readouterr().err
        assert "RTG_ENDPOINT_URL" in err


class TestTemplates:
    def test_lint_seed_bank_clean(self, capsys):
        assert main(["templates", "lint"]) == 0
        assert "bank clean" in capsys.readouterr().out

    def test_lint_flags_dirty_bank(self, tmp_path, capsys):
        bank = {
            "instructions": ["Grasp."],
            "reasoning": {"object": [{"text": "Use {0.5, 0.5, 0.0} here.", "reviewed": True}]},
        }
        path = tmp_path / "bank.json"
        path.write_text(json.dumps(bank))
        assert main(["templates", "lint", "--bank", str(path)]) == 1
        assert "LINT" in capsys.readouterr().out

    def test_generate_mock(self, tmp_path, capsys):
        out = tmp_path / "draft.json"
        code = main(["templates", "generate", "--categories", "cup,hammer",
                     "--out", str(out), "--mock"])
        assert code == 0
        draft = json.loads(out.read_text())
        assert set(draft["reasoning"]) >= {"cup", "hammer"}
        assert all(not e["reviewed"] for cat in ("cup", "hammer")
                   for e in draft["reasoning"][cat])

    def test_generated_bank_refused_by_strict_build(self, tmp_path):
        out = tmp_path / "draft.json"
        assert main(["templates", "generate", "--categories", "cup", "--out", str(out),
                     "--mock"]) == 0
        code = main(["build-dataset", "--bank", str(out), "--out",
                     str(tmp_path / "d.jsonl"), "--no-images", "--per-image-count", "1"])
        assert code == 1


class TestExportTrainConfig:
    def test_pretraining_stdout(self, capsys):
        assert main(["export-train-config", "--strategy", "pretraining"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["batch_size"] == 32
        assert payload["learning_rate"] == 0.002
        assert "lora_rank" not in payload

    def test_lora_file(self, tmp_path):
        out = tmp_path / "lora.json"
        assert main(["export-train-config", "--strategy", "lora", "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload["learning_rate"] == 0.0005
        assert payload["lora_rank"] == 64
        assert payload["lora_alpha"] == 32


class TestServeConfig:
    def test_image_root_env_beats_dataset_dir(self, built, tmp_path, monkeypatch):
        import uvicorn

        captured = {}
        monkeypatch.setattr(uvicorn, "run", lambda app, host, port: captured.update(
            state=app.state.service, host=host, port=port))
        monkeypatch.setenv("RTG_IMAGE_ROOT", str(tmp_path))
        code = main(["serve", "--dataset", str(built),
                     "--sessions-dir", str(tmp_path / "sessions"), "--mock"])
        assert code == 0
        assert captured["state"].image_root == tmp_path

    def test_serve_needs_some_image_root(self, clean_env, tmp_path):
        assert main(["serve", "--sessions-dir", str(tmp_path), "--mock"]) == 1


class TestRefineTerminal:
    def test_mock_refine_loop(self, tmp_path, capsys, monkeypatch):
        from textgrasp.assets import fixture_root

        img = fixture_root() / "pcd0100r.png"
        inputs = iter(["move left", "q"])
        monkeypatch.setattr("builtins.input", lambda *a: next(inputs))
        code = main(["refine", "--image", str(img), "--mock"])
        assert code == 0
        out = capsys.readouterr().out
        assert out.count("assistant:") == 2
        assert "pose x=0.400" in out  # 0.5 nudged left by 0.1

    def test_missing_image(self):
        assert main(["refine", "--image", "/nonexistent.png", "--mock"]) == 1


class TestUsage:
    def test_unknown_flag_exit_1(self, capsys):
        assert main(["split", "--bogus"]) == 1

    def test_unknown_command_exit_1(self):
        assert main(["transmogrify"]) == 1
