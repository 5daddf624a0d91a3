import io
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from tinycrnn.cli import run
from tinycrnn.features import write_pcm
from tinycrnn.formats import read_features


def call(*argv):
    out = io.StringIO()
    code = run([str(a) for a in argv], out=out)
    return code, out.getvalue()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> train (200 steps) -> eval -> stream, run once for the module."""
    d = tmp_path_factory.mktemp("pipe")
    t0 = time.perf_counter()
    assert call("synth", "--out", d / "train", "--seed", 1, "--n-pos", 96, "--n-neg", 96)[0] == 0
    assert call("synth", "--out", d / "test", "--seed", 2, "--n-pos", 24, "--n-neg", 24,
                "--frames", 180)[0] == 0
    assert call("train", "--config", "crnn58k-ref", "--in", d / "train", "--out", d / "m.bin",
                "--steps", 200, "--seed", 3)[0] == 0
    code, eval_out = call("eval", "--model", d / "m.bin", "--in", d / "test", "--out", d / "ev")
    assert code == 0
    positive = next(l.split(",")[0] for l in (d / "test" / "manifest.csv").read_text().splitlines()
                    if l.split(",")[1] == "1")
    code, _ = call("stream", "--model", d / "m.bin", "--in", d / "test" / positive,
                   "--out", d / "stream.csv")
    assert code == 0
    return d, time.perf_counter() - t0, eval_out


class TestPipeline:
    def test_under_five_minutes(self, pipeline):
        assert pipeline[1] < 300

    def test_stream_detects_positive(self, pipeline):
        d = pipeline[0]
        lines = (d / "stream.csv").read_text().splitlines()
        dets = [l for l in lines if l.startswith("DET,")]
        assert len(dets) >= 1
        posts = [l for l in lines if not l.startswith("DET,")]
        assert len(posts) == (180 - 100) // 8 + 1
        step, frame, p = posts[0].split(",")
        assert (int(step), int(frame)) == (0, 99) and 0 <= float(p) <= 1

    def test_eval_outputs(self, pipeline):
        d, _, text = pipeline
        rec = json.loads((d / "ev" / "summary.json").read_text())[0]
        assert {"fa_at_mr", "latency_ms", "endpoints_ms"} <= set(rec)
        det = (d / "ev" / "det_0_m.csv").read_text().splitlines()
        assert det[0] == "threshold,fdr,mr" and len(det) == 1002
        assert "FA@MR15" in text and "latency" in text

    def test_history_written(self, pipeline):
        hist = (pipeline[0] / "m.bin.history.csv").read_text().splitlines()
        assert hist[0] == "step,loss,acc"
        assert hist[-1].startswith("199,")

    def test_byte_identical_rerun(self, pipeline, tmp_path):
        d = pipeline[0]
        assert call("synth", "--out", tmp_path / "train", "--seed", 1, "--n-pos", 96,
                    "--n-neg", 96)[0] == 0
        assert ((tmp_path / "train" / "ex000.feat").read_bytes()
                == (d / "train" / "ex000.feat").read_bytes())
        assert call("train", "--config", "crnn58k-ref", "--in", tmp_path / "train", "--out",
                    tmp_path / "m.bin", "--steps", 200, "--seed", 3)[0] == 0
        assert (tmp_path / "m.bin").read_bytes() == (d / "m.bin").read_bytes()
        assert ((tmp_path / "m.bin.history.csv").read_bytes()
                == (d / "m.bin.history.csv").read_bytes())
        call("eval", "--model", d / "m.bin", "--in", d / "test", "--out", tmp_path / "ev")
        assert ((tmp_path / "ev" / "det_0_m.csv").read_bytes()
                == (d / "ev" / "det_0_m.csv").read_bytes())

    def test_runtimes_agree(self, pipeline, tmp_path):
        d = pipeline[0]
        feat = sorted((d / "test").glob("*.feat"))[0]
        call("stream", "--model", d / "m.bin", "--in", feat, "--out", tmp_path / "a", "--runtime", "bank")
        call("stream", "--model", d / "m.bin", "--in", feat, "--out", tmp_path / "b",
             "--runtime", "vectorized")
        a = [l.split(",") for l in (tmp_path / "a").read_text().splitlines() if not l.startswith("DET")]
        b = [l.split(",") for l in (tmp_path / "b").read_text().splitlines() if not l.startswith("DET")]
        assert [r[:2] for r in a] == [r[:2] for r in b]
        np.testing.assert_allclose([float(r[2]) for r in a], [float(r[2]) for r in b], atol=1e-5)


class TestAblation:
    def test_attention_off_comparison(self, pipeline, tmp_path):
        d = pipeline[0]
        code, _ = call("train", "--config", "crnn58k-ref", "--attention", "off", "--in", d / "train",
                       "--out", tmp_path / "noattn.bin", "--steps", 50, "--seed", 3)
        assert code == 0
        code, text = call("eval", "--model", d / "m.bin", "--model", tmp_path / "noattn.bin",
                          "--in", d / "test", "--out", tmp_path / "ev")
        assert code == 0
        table = (tmp_path / "ev" / "comparison.txt").read_text()
        assert "crnn58k-ref-noattn" in table
        assert any(w in table.splitlines()[2] for w in ("fewer", "more", "same"))


class TestProfileAndRf:
    def test_profile(self):
        code, text = call("profile", "--config", "crnn239k-ref")
        assert code == 0
        params, mults = (int(v) for v in text.splitlines()[-1].split()[1:])
        assert abs(params - 239_000) <= 23_900
        assert abs(mults - 10_250_000) <= 1_025_000

    def test_rf(self):
        assert call("rf", "--config", "crnn239k-ref") == (0, "rf=28 steps=10\n")

    def test_variants(self):
        base = call("profile", "--config", "crnn239k-ref")[1]
        off = call("profile", "--config", "crnn239k-ref", "--attention", "off")[1]
        delta = call("rf", "--config", "crnn239k-ref", "--delta-lfbe", "on")[1]
        assert "Attention" in base and "Attention" not in off
        assert delta == "rf=29 steps=10\n"
        assert "64 bins" in call("profile", "--config", "crnn58k-ref", "--bins", "64")[1]
        assert call("profile", "--config", "crnn239k-ref", "--bins", "20")[0] == 2

    def test_json_config(self, tmp_path):
        from tinycrnn.nn import reference_config
        (tmp_path / "c.json").write_text(json.dumps(reference_config("crnn58k-ref").to_dict()))
        assert call("rf", "--config", tmp_path / "c.json") == (0, "rf=28 steps=10\n")


class TestFeaturize:
    def test_pcm_to_features(self, tmp_path, rng):
        write_pcm(tmp_path / "a.pcm", 0.1 * rng.standard_normal(16240))
        code, _ = call("featurize", "--in", tmp_path / "a.pcm", "--out", tmp_path / "a.feat")
        assert code == 0
        assert read_features(tmp_path / "a.feat").shape == (100, 64)
        call("featurize", "--in", tmp_path / "a.pcm", "--out", tmp_path / "d.feat", "--bins", 20,
             "--delta-lfbe", "on")
        assert read_features(tmp_path / "d.feat").shape == (99, 20)

    def test_stream_raw_pcm(self, tmp_path, rng):
        from tinycrnn.nn import init_weights, reference_config, save_model
        cfg = reference_config("crnn58k-ref")
        save_model(tmp_path / "m.bin", cfg, init_weights(cfg, 0))
        write_pcm(tmp_path / "a.f32", 0.1 * rng.standard_normal(16240 + 8 * 160), "f32le")
        code, _ = call("stream", "--model", tmp_path / "m.bin", "--in", tmp_path / "a.f32",
                       "--pcm-format", "f32le", "--out", tmp_path / "s.csv")
        assert code == 0
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert len([l for l in lines if not l.startswith("DET")]) == 2


class TestErrors:
    def test_missing_model(self, tmp_path, capsys):
        code, _ = call("stream", "--model", tmp_path / "nope.bin", "--in", tmp_path / "x")
        assert code == 2
        assert "nope.bin" in capsys.readouterr().err

    def test_missing_eval_model(self, pipeline, capsys):
        code, _ = call("eval", "--model", "ghost.bin", "--in", pipeline[0] / "test", "--out", "x")
        assert code == 2 and "--model ghost.bin" in capsys.readouterr().err

    def test_unknown_flag(self, capsys):
        assert call("rf", "--config", "crnn239k-ref", "--bogus")[0] == 1
        assert "--bogus" in capsys.readouterr().err

    @pytest.mark.parametrize("argv", [[], ["fly"], ["rf"], ["profile", "--config", "x", "--bins", "32"],
                                      ["rf", "--config", "crnn239k-ref", "--attention", "maybe"]])
    def test_usage_errors(self, argv):
        assert call(*argv)[0] == 1

    def test_bad_config_file(self, tmp_path, capsys):
        (tmp_path / "c.json").write_text("{")
        assert call("rf", "--config", tmp_path / "c.json")[0] == 2
        assert "c.json" in capsys.readouterr().err

    def test_bin_mismatch(self, pipeline, tmp_path, capsys):
        code, _ = call("train", "--config", "crnn239k-ref", "--in", pipeline[0] / "train",
                       "--out", tmp_path / "m", "--steps", 1)
        assert code == 2 and "--bins" in capsys.readouterr().err

    def test_corrupt_model(self, tmp_path, capsys):
        (tmp_path / "m.bin").write_bytes(b"garbage\n1234")
        (tmp_path / "x.feat").write_bytes(b"FEAT 1 1\n\0\0\0\0")
        assert call("stream", "--model", tmp_path / "m.bin", "--in", tmp_path / "x.feat")[0] == 2
        assert "m.bin" in capsys.readouterr().err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "tinycrnn", "rf", "--config", "crnn58k-ref"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout == "rf=28 steps=10\n"
    res = subprocess.run([sys.executable, "-m", "tinycrnn", "rf", "--nope"], capture_output=True,
                         text=True)
    assert res.returncode == 1
