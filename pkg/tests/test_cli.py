import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from platekit import augment
from platekit.cli import main

FIXTURES = Path(__file__).parent / "fixtures"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def image_dataset(tmp_path):
    rng = np.random.default_rng(0)
    root = tmp_path / "data"
    root.mkdir()
    for i in range(3):
        pixels = rng.integers(0, 256, size=(32, 48, 3), dtype=np.uint8)
        augment.save_png(pixels, root / f"img{i}.png")
        (root / f"img{i}.txt").write_text("0 0.500000 0.500000 0.500000 0.500000\n")
    return root


class TestExitCodes:
    def test_usage_error_is_1(self, capsys):
        code, _, err = run(capsys, "convert", "--from", "coco", "--to", "yolo", "x")
        assert code == 1
        assert "invalid choice" in err

    def test_missing_subcommand_is_1(self, capsys):
        assert run(capsys, )[0] == 1

    def test_data_error_is_2(self, capsys, tmp_path):
        bad = tmp_path / "bad.xml"
        bad.write_text("<annotation><size>")
        code, _, err = run(capsys, "--output-dir", tmp_path, "convert",
                           "--from", "voc", "--to", "yolo", bad)
        assert code == 2
        assert "error" in err

    def test_missing_input_is_2(self, capsys, tmp_path):
        code, _, _ = run(capsys, "--output-dir", tmp_path, "convert",
                         "--from", "voc", "--to", "yolo", tmp_path / "nope.xml")
        assert code == 2


class TestConvert:
    def test_voc_to_yolo_golden(self, capsys, tmp_path):
        code, out, _ = run(capsys, "--output-dir", tmp_path, "convert",
                           "--from", "voc", "--to", "yolo", FIXTURES / "eval" / "gts")
        assert code == 0
        assert "converted 10 file(s)" in out
        text = (tmp_path / "img00.txt").read_text()
        # internal (0,0,10,10) in 20x20 -> centre (0.25, 0.25) size (0.5, 0.5)
        assert text == "0 0.250000 0.250000 0.500000 0.500000\n"

    def test_yolo_to_yolo_idempotent(self, capsys, tmp_path):
        first = tmp_path / "a"
        second = tmp_path / "b"
        src = tmp_path / "in.txt"
        src.write_text("0 0.31 0.42 0.25 0.3\n")
        code, _, _ = run(capsys, "--output-dir", first, "convert", "--from", "yolo",
                         "--to", "yolo", "--image-size", 100, 80, src)
        assert code == 0
        code, _, _ = run(capsys, "--output-dir", second, "convert", "--from", "yolo",
                         "--to", "yolo", "--image-size", 100, 80, first / "in.txt")
        assert code == 0
        assert (first / "in.txt").read_text() == (second / "in.txt").read_text()

    def test_voc_to_mask(self, capsys, tmp_path):
        code, _, _ = run(capsys, "--output-dir", tmp_path, "convert",
                         "--from", "voc", "--to", "mask", FIXTURES / "eval" / "gts")
        assert code == 0
        data = (tmp_path / "img00.pgm").read_bytes()
        assert data.startswith(b"P5\n20 20\n255\n")
        assert data[13:].count(b"\xff") == 100  # 10x10 box

    def test_yolo_without_dims_is_error(self, capsys, tmp_path):
        src = tmp_path / "in.txt"
        src.write_text("0 0.5 0.5 0.5 0.5\n")
        code, _, err = run(capsys, "--output-dir", tmp_path, "convert",
                           "--from", "yolo", "--to", "voc", src)
        assert code == 2
        assert "--image-size" in err


class TestAugment:
    def test_deterministic_bytes(self, capsys, tmp_path, image_dataset):
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        for out in (out1, out2):
            code, _, _ = run(capsys, "--seed", 42, "--output-dir", out,
                             "augment", image_dataset, "--stage", 1, "--count", 4)
            assert code == 0
        files1 = sorted(p.name for p in out1.iterdir())
        assert files1 == sorted(p.name for p in out2.iterdir())
        assert len([f for f in files1 if f.endswith(".png")]) == 4
        for name in files1:
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_preset_override_file(self, capsys, tmp_path, image_dataset):
        # zeroing every magnitude/probability turns the pipeline into a
        # byte-level copy, so outputs re-encode to the input files exactly
        overrides = tmp_path / "zero.cfg"
        overrides.write_text("\n".join(
            f"{name} 0" for name in (
                "rotation_deg", "translation_frac", "scale_factor", "shear_deg",
                "hflip_p", "mosaic_p", "mixup_p", "copypaste_p",
                "hue_frac", "sat_frac", "val_frac")) + "\n")
        out = tmp_path / "zeroed"
        code, _, _ = run(capsys, "--seed", 5, "--output-dir", out, "augment",
                         image_dataset, "--stage", 1, "--count", 3,
                         "--preset-overrides", overrides)
        assert code == 0
        for i in range(3):
            assert (out / f"img{i}_aug{i:04d}.png").read_bytes() == \
                (image_dataset / f"img{i}.png").read_bytes()

    def test_bad_preset_override_is_data_error(self, capsys, tmp_path, image_dataset):
        overrides = tmp_path / "bad.cfg"
        overrides.write_text("vertical_flip_p 1.0\n")
        code, _, err = run(capsys, "--output-dir", tmp_path, "augment",
                           image_dataset, "--stage", 1,
                           "--preset-overrides", overrides)
        assert code == 2
        assert "unknown field" in err

    def test_stage_3_is_usage_error(self, capsys, tmp_path, image_dataset):
        code, _, _ = run(capsys, "--output-dir", tmp_path, "augment",
                         image_dataset, "--stage", 3)
        assert code == 1

    def test_output_mirrors_input_tree(self, capsys, tmp_path):
        rng = np.random.default_rng(1)
        root = tmp_path / "data"
        (root / "sub").mkdir(parents=True)
        for rel in ("top.png", "sub/nested.png"):
            augment.save_png(rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8),
                             root / rel)
            (root / rel).with_suffix(".txt").write_text("0 0.5 0.5 0.5 0.5\n")
        out = tmp_path / "out"
        code, _, _ = run(capsys, "--seed", 1, "--output-dir", out, "augment",
                         root, "--stage", 2)
        assert code == 0
        produced = sorted(p.relative_to(out).as_posix() for p in out.rglob("*.png"))
        assert produced == ["sub/nested_aug0000.png", "top_aug0001.png"]

    def test_labels_parse_back(self, capsys, tmp_path, image_dataset):
        out = tmp_path / "out"
        code, _, _ = run(capsys, "--seed", 7, "--output-dir", out, "augment",
                         image_dataset, "--stage", 2, "--count", 6)
        assert code == 0
        from platekit.annot import parse_yolo
        for label in out.glob("*.txt"):
            parse_yolo(label.read_text(), 48, 32)  # must not raise

    def test_jpeg_ingest(self, capsys, tmp_path):
        from PIL import Image
        root = tmp_path / "jpgs"
        root.mkdir()
        rng = np.random.default_rng(2)
        Image.fromarray(
            rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8), mode="RGB"
        ).save(root / "a.jpg", format="JPEG")
        (root / "a.txt").write_text("0 0.5 0.5 0.5 0.5\n")
        out = tmp_path / "out"
        code, _, _ = run(capsys, "--seed", 1, "--output-dir", out, "augment",
                         root, "--stage", 2)
        assert code == 0
        assert list(out.glob("*.png"))  # jpeg in, png out


class TestEvalDet:
    def test_hand_fixture_report(self, capsys):
        code, out, _ = run(capsys, "eval-det", FIXTURES / "eval" / "preds.txt",
                           FIXTURES / "eval" / "gts")
        assert code == 0
        row = out.splitlines()[2]
        assert row.split()[-5:] == ["50", "50", "50", "50", "45"]

    def test_self_evaluation_is_perfect(self, capsys, tmp_path):
        preds = tmp_path / "self.txt"
        lines = [f"img{i:02d} 0 1.0 0 0 10 10" for i in range(10)]
        preds.write_text("\n".join(lines) + "\n")
        code, out, _ = run(capsys, "eval-det", preds, FIXTURES / "eval" / "gts")
        assert code == 0
        assert out.splitlines()[2].split()[-5:] == ["100", "100", "100", "100", "100"]

    def test_unknown_image_id(self, capsys, tmp_path):
        preds = tmp_path / "preds.txt"
        preds.write_text("ghost 0 1.0 0 0 10 10\n")
        code, _, err = run(capsys, "eval-det", preds, FIXTURES / "eval" / "gts")
        assert code == 2
        assert "ghost" in err

    def test_cutoff_flag(self, capsys):
        code, out, _ = run(capsys, "eval-det", FIXTURES / "eval" / "preds.txt",
                           FIXTURES / "eval" / "gts", "--cutoff", "0.5")
        assert code == 0
        # img08's 0.30-confidence hit is filtered: 4 hits remain
        assert out.splitlines()[2].split()[-5:][0] == "40"

    def test_csv_format(self, capsys):
        code, out, _ = run(capsys, "--format", "csv", "eval-det",
                           FIXTURES / "eval" / "preds.txt", FIXTURES / "eval" / "gts")
        assert code == 0
        assert out.splitlines()[0].startswith("Model,Accuracy")


class TestEvalOcr:
    def test_fixture_corpus(self, capsys):
        code, out, _ = run(capsys, "eval-ocr", FIXTURES / "ocr" / "corpus.tsv")
        assert code == 0
        assert "0.1034" in out   # 6/58
        assert "0.3571" in out   # 5/14
        assert "0.6" in out
        assert "Character Error Rate (CER)" in out

    def test_identical_columns_zero(self, capsys, tmp_path):
        corpus = tmp_path / "c.tsv"
        corpus.write_text("a\tx y\tx y\nb\tz\tz\n")
        code, out, _ = run(capsys, "eval-ocr", corpus)
        assert code == 0
        assert out.count(" 0\n") >= 1 or " 0" in out

    def test_empty_file_is_error(self, capsys, tmp_path):
        corpus = tmp_path / "empty.tsv"
        corpus.write_text("")
        code, _, err = run(capsys, "eval-ocr", corpus)
        assert code == 2

    def test_malformed_row_reports_line(self, capsys, tmp_path):
        corpus = tmp_path / "c.tsv"
        corpus.write_text("a\tx\ty\nbroken\n")
        code, _, err = run(capsys, "eval-ocr", corpus)
        assert code == 2
        assert "row 2" in err


class TestDecode:
    def test_golden_defaults(self, capsys):
        code, out, _ = run(capsys, "decode", FIXTURES / "decode" / "golden.logits",
                           FIXTURES / "decode" / "vocab.tsv")
        assert code == 0
        assert out == "plate-serial\t১১-১১১১\nplate-mixed\t২৫-৯০৩৮\nplate-tree\t৪৭৪\n"

    def test_repetition_control(self, capsys):
        code, out0, _ = run(capsys, "decode", FIXTURES / "decode" / "repeat.logits",
                            FIXTURES / "decode" / "vocab.tsv")
        assert code == 0 and out0 == "repeat-digits\t১১১১\n"
        code, out2, _ = run(capsys, "decode", FIXTURES / "decode" / "repeat.logits",
                            FIXTURES / "decode" / "vocab.tsv", "--no-repeat-ngram", 2)
        assert code == 0
        assert out2 != out0  # blocking corrupts the legitimate repeated digits

    def test_beam_one_greedy(self, capsys):
        code, out, _ = run(capsys, "decode", FIXTURES / "decode" / "golden.logits",
                           FIXTURES / "decode" / "vocab.tsv", "--num-beams", 1)
        assert code == 0
        assert out.splitlines()[0] == "plate-serial\t১১-১১১১"

    def test_invalid_config_is_usage_error(self, capsys):
        code, _, _ = run(capsys, "decode", FIXTURES / "decode" / "golden.logits",
                         FIXTURES / "decode" / "vocab.tsv", "--num-beams", 0)
        assert code == 1

    def test_output_file(self, capsys, tmp_path):
        out_file = tmp_path / "transcripts.tsv"
        code, out, _ = run(capsys, "decode", FIXTURES / "decode" / "golden.logits",
                           FIXTURES / "decode" / "vocab.tsv", "-o", out_file)
        assert code == 0 and out == ""
        assert out_file.read_text(encoding="utf-8").startswith("plate-serial\t")


class TestSchedule:
    def test_bundled_scenarios_summary(self, capsys, tmp_path):
        code, out, _ = run(capsys, "--output-dir", tmp_path, "schedule",
                           FIXTURES / "scenarios" / "bundled.txt")
        assert code == 0
        lines = out.splitlines()
        table = {l.split()[0]: l.split() for l in lines[1:]}
        assert table["good"][1] == "converged"
        assert table["poor"][1] == "fallback"
        # flat: stage 1 stops at epoch 20 (21 plans), then the flat stage 2
        # hits its own 15-epoch early stop
        assert table["flat"][1] == "fallback"
        assert table["flat"][2] == "36"

    def test_malformed_scenario_reports_line(self, capsys, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("ok saturating\nnonsense\n")
        code, _, err = run(capsys, "schedule", bad)
        assert code == 2
        assert "line 2" in err

    def test_trace_and_resume(self, capsys, tmp_path):
        scenario = tmp_path / "one.txt"
        scenario.write_text("solo saturating asymptote=0.8 rate=0.3\n")
        full = tmp_path / "full.ndjson"
        code, _, _ = run(capsys, "schedule", scenario, "--trace", full)
        assert code == 0
        lines = full.read_text().splitlines()
        partial = tmp_path / "partial.ndjson"
        partial.write_text("\n".join(lines[:20]) + "\n")
        resumed = tmp_path / "resumed.ndjson"
        code, _, _ = run(capsys, "schedule", scenario, "--resume", partial,
                         "--trace", resumed)
        assert code == 0
        assert resumed.read_text() == full.read_text()

    def test_scenario_and_live_mutually_exclusive(self, capsys, tmp_path):
        scenario = tmp_path / "one.txt"
        scenario.write_text("solo saturating\n")
        code, _, _ = run(capsys, "schedule", scenario, "--live", "cat")
        assert code == 1

    def test_override(self, capsys, tmp_path):
        scenario = tmp_path / "one.txt"
        scenario.write_text("solo scripted values=0.5\n")
        code, out, _ = run(capsys, "schedule", scenario, "--override",
                           "stage1_epochs=10", "--override", "stage2_fallback_epochs=6",
                           "--override", "window=4", "--override", "patience=20",
                           "--override", "stage2_patience=20")
        assert code == 0
        # flat 0.5: stage 1 converges once 2 windows exist (8 reports), then
        # the 6-epoch fallback budget runs out
        assert out.splitlines()[1].split()[2] == "14"


def test_console_script_subprocess():
    result = subprocess.run(
        [sys.executable, "-m", "platekit.cli", "decode",
         str(FIXTURES / "decode" / "golden.logits"),
         str(FIXTURES / "decode" / "vocab.tsv")],
        capture_output=True, text=True,
    )
    assert result.returncode == 0
    assert "plate-serial\t১১-১১১১" in result.stdout
