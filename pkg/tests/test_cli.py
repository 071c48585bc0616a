import json

import pytest

from affectmirror.cli import main
from affectmirror.frames import face_pattern, write_pnm


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestUsage:
    def test_unknown_flag_exits_two(self):
        with pytest.raises(SystemExit) as e:
            main(["generate", "--emotion", "fear", "--frobnicate"])
        assert e.value.code == 2

    def test_no_subcommand_exits_two(self):
        with pytest.raises(SystemExit) as e:
            main([])
        assert e.value.code == 2

    def test_unknown_emotion_exits_two(self, capsys):
        code, _, err = run(capsys, "generate", "--emotion", "melancholy")
        assert code == 2 and "unknown emotion" in err


class TestRunConfigResolution:
    def test_no_config_no_env_is_usage_error(self, capsys, monkeypatch):
        monkeypatch.delenv("MIRROR_CONFIG", raising=False)
        code, _, err = run(capsys, "run")
        assert code == 2 and "MIRROR_CONFIG" in err

    def test_env_var_supplies_path(self, capsys, monkeypatch, tmp_path):
        bad = tmp_path / "gone.json"
        monkeypatch.setenv("MIRROR_CONFIG", str(bad))
        code, _, err = run(capsys, "run")
        assert code == 1 and "error" in err


class TestGenerate:
    def test_deterministic_poem(self, capsys):
        code, out1, _ = run(capsys, "generate", "--emotion", "happiness", "--seed", "42")
        assert code == 0 and out1.strip()
        code, out2, _ = run(capsys, "generate", "--emotion", "happiness", "--seed", "42")
        assert out1 == out2

    def test_seed_changes_output(self, capsys):
        _, a, _ = run(capsys, "generate", "--emotion", "sadness", "--seed", "1")
        _, b, _ = run(capsys, "generate", "--emotion", "sadness", "--seed", "2")
        assert a != b


class TestDetect:
    def test_detect_sample_face(self, capsys, assets, tmp_path):
        code, out, _ = run(
            capsys,
            "detect",
            "--image", str(assets / "sample_face.pgm"),
            "--cascade", str(assets / "cascade_fixture.xml"),
        )
        assert code == 0
        lines = [l for l in out.splitlines() if l]
        assert len(lines) == 1
        x, y, w, h = (int(v) for v in lines[0].split()[:4])
        assert w > 0 and h > 0

    def test_detect_runtime_failure(self, capsys):
        code, _, err = run(capsys, "detect", "--image", "missing.pgm", "--cascade", "x.xml")
        assert code == 1 and "error" in err


class TestClassify:
    def test_probabilities_in_canonical_order(self, capsys, assets, tmp_path):
        img = tmp_path / "face.pgm"
        img.write_bytes(write_pnm(face_pattern(64, 64, size=32)[0]))
        code, out, _ = run(
            capsys, "classify", "--image", str(img),
            "--model", str(assets / "tiny_classifier.mrw"),
        )
        assert code == 0
        rows = [l.split() for l in out.strip().splitlines()]
        assert [r[0] for r in rows] == [
            "anger", "disgust", "fear", "happiness", "sadness", "surprise", "neutral",
        ]
        probs = [float(r[1]) for r in rows]
        assert abs(sum(probs) - 1.0) < 1e-4


class TestSimulate:
    def test_bundled_script_trace(self, capsys, assets):
        code, out, _ = run(
            capsys, "simulate", "--script", str(assets / "engagement.jsonl"),
            "--nonce", "42",
        )
        assert code == 0
        actions = [json.loads(l) for l in out.strip().splitlines()]
        names = [a["action"] for a in actions]
        assert names == ["RequestSeed", "RequestPoem", "Display", "ClearDisplay"]

    def test_trace_byte_identical_across_runs(self, capsys, assets):
        args = ("simulate", "--script", str(assets / "engagement.jsonl"), "--nonce", "7")
        _, out1, _ = run(capsys, *args)
        _, out2, _ = run(capsys, *args)
        assert out1 == out2


class TestBench:
    def test_bench_reports_stages(self, capsys):
        code, out, _ = run(capsys, "bench", "--frames", "3")
        assert code == 0
        assert "detect" in out and "classify" in out and "poem" in out
