import json
import os

import numpy as np
import pytest

from tumorpatch.cli import main
from tumorpatch import load_volume


def run_cli(*argv):
    return main([str(a) for a in argv])


def case_ids(root):
    return sorted(d for d in os.listdir(root) if str(d).startswith("phantom"))


PHANTOM_FLAGS = [
    "--shape", "72,72,60", "--center-margin", "18",
    "--semi-axes-min", "8", "--semi-axes-max", "13", "--contrast", "6",
]


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cases")
    rc = run_cli("phantom", out, "--count", 3, "--seed", 3, *PHANTOM_FLAGS)
    assert rc == 0
    return out


class TestPhantomCmd:
    def test_writes_case_dirs_and_manifest(self, corpus_dir):
        cases = sorted(d for d in os.listdir(corpus_dir) if d.startswith("phantom"))
        assert len(cases) == 3
        for c in cases:
            assert (corpus_dir / c / f"{c}_flair.raw").exists()
            assert (corpus_dir / c / f"{c}_seg.raw").exists()
        manifest = json.loads((corpus_dir / "manifest.json").read_text())
        assert manifest["count"] == 3 and len(manifest["cases"]) == 3

    def test_same_seed_identical_files(self, corpus_dir, tmp_path):
        rc = run_cli("phantom", tmp_path, "--count", 3, "--seed", 3, *PHANTOM_FLAGS)
        assert rc == 0
        for c in sorted(os.listdir(corpus_dir)):
            if not c.startswith("phantom"):
                continue
            a = (corpus_dir / c / f"{c}_flair.raw").read_bytes()
            b = (tmp_path / c / f"{c}_flair.raw").read_bytes()
            assert a == b

    def test_low_signal_flagged(self, tmp_path):
        rc = run_cli("phantom", tmp_path, "--count", 1, "--seed", 5, "--contrast", 0,
                     "--shape", "48,48,40", "--center-margin", "12",
                     "--semi-axes-min", "6", "--semi-axes-max", "8")
        assert rc == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["cases"][0]["low_signal"] is True


class TestExtractCmd:
    def test_cca_extraction(self, corpus_dir, tmp_path):
        rc = run_cli("extract", corpus_dir, tmp_path, "--strategy", "cca", "--size", 36)
        assert rc == 0
        case = case_ids(corpus_dir)[1]
        man = json.loads((tmp_path / case / "manifest.json").read_text())
        assert man["strategy"] == "cca"
        assert man["size"] == [36, 36, 36]
        assert "tumor_centroid" in man
        patch_file = tmp_path / case / man["patches"][0]["files"]["flair"]
        vol = load_volume(patch_file)
        assert vol.shape == (36, 36, 36)

    def test_seeded_random_reproducible(self, corpus_dir, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            rc = run_cli("extract", corpus_dir, out, "--strategy", "random_seeded",
                         "--seed", 42, "--size", 36)
            assert rc == 0
        case = case_ids(corpus_dir)[0]
        m1 = json.loads((out1 / case / "manifest.json").read_text())
        m2 = json.loads((out2 / case / "manifest.json").read_text())
        assert m1["origin"] == m2["origin"]
        f1 = (out1 / case / m1["patches"][0]["files"]["flair"]).read_bytes()
        f2 = (out2 / case / m2["patches"][0]["files"]["flair"]).read_bytes()
        assert f1 == f2

    def test_missing_flair_fails_that_case_only(self, corpus_dir, tmp_path):
        import shutil

        broken = tmp_path / "in"
        shutil.copytree(corpus_dir, broken)
        cases = sorted(d for d in os.listdir(broken) if d.startswith("phantom"))
        victim = broken / cases[0]
        for f in os.listdir(victim):
            if "flair" in f:
                os.unlink(victim / f)
        rc = run_cli("extract", broken, tmp_path / "out", "--strategy", "centered_crop",
                     "--size", 36)
        assert rc == 1  # failures present
        assert not (tmp_path / "out" / cases[0] / "manifest.json").exists()
        assert (tmp_path / "out" / cases[1] / "manifest.json").exists()

    def test_debug_dump_stages(self, corpus_dir, tmp_path):
        rc = run_cli("extract", corpus_dir, tmp_path, "--strategy", "cca", "--size", 36,
                     "--debug-dump")
        assert rc == 0
        case = case_ids(corpus_dir)[0]
        for stage in range(1, 7):
            assert (tmp_path / case / "debug" / f"{case}_{stage}.raw").exists()

    def test_quadrants_multi_patch(self, corpus_dir, tmp_path):
        rc = run_cli("extract", corpus_dir, tmp_path, "--strategy", "fixed_quadrants",
                     "--size", 36)
        assert rc == 0
        case = case_ids(corpus_dir)[0]
        man = json.loads((tmp_path / case / "manifest.json").read_text())
        assert len(man["patches"]) == 4
        assert "origin" not in man  # flattening only for single-patch strategies

    def test_jobs_flag_same_output(self, corpus_dir, tmp_path):
        out1, out2 = tmp_path / "j1", tmp_path / "j2"
        run_cli("extract", corpus_dir, out1, "--strategy", "cca", "--size", 36)
        run_cli("extract", corpus_dir, out2, "--strategy", "cca", "--size", 36, "--jobs", 3)
        case = case_ids(corpus_dir)[0]
        a = json.loads((out1 / case / "manifest.json").read_text())
        b = json.loads((out2 / case / "manifest.json").read_text())
        assert a == b

    def test_usage_error_exit_2(self, corpus_dir, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("extract", corpus_dir, tmp_path, "--strategy", "nope")
        assert exc.value.code == 2


class TestEvaluateCmd:
    def test_phantom_evaluation_outputs(self, tmp_path):
        rc = run_cli("evaluate", tmp_path, "--phantoms", 3, "--seed", 7, "--size", 36,
                     "--strategies", "cca,random,centered_crop",
                     "--contrast", "6")
        assert rc == 0
        comparison = (tmp_path / "comparison.csv").read_text()
        lines = comparison.strip().splitlines()
        assert len(lines) == 4
        assert {ln.split(",")[0] for ln in lines[1:]} == {"cca", "random", "centered_crop"}
        for s in ("cca", "random", "centered_crop"):
            assert (tmp_path / f"report_{s}.csv").exists()
        imb = json.loads((tmp_path / "imbalance.json").read_text())
        assert imb["strategies"]["cca"]["improvement_factor"] > 1.0

    def test_rerun_identical_outside_time(self, tmp_path):
        args = ["--phantoms", 2, "--seed", 9, "--size", 36, "--strategies", "cca,random",
                "--contrast", "6"]
        run_cli("evaluate", tmp_path / "r1", *args)
        run_cli("evaluate", tmp_path / "r2", *args)
        assert (tmp_path / "r1" / "report_cca.csv").read_bytes() == (
            tmp_path / "r2" / "report_cca.csv"
        ).read_bytes()
        assert (tmp_path / "r1" / "imbalance.json").read_bytes() == (
            tmp_path / "r2" / "imbalance.json"
        ).read_bytes()

        def mask_time(path):
            return [",".join(ln.split(",")[:-1]) for ln in path.read_text().splitlines()]

        assert mask_time(tmp_path / "r1" / "comparison.csv") == mask_time(
            tmp_path / "r2" / "comparison.csv"
        )

    def test_real_dir_evaluation(self, corpus_dir, tmp_path):
        rc = run_cli("evaluate", corpus_dir, tmp_path, "--size", 36,
                     "--strategies", "centered_crop")
        assert rc == 0
        text = (tmp_path / "report_centered_crop.csv").read_text()
        head = text.splitlines()[0].split(",")
        i = head.index("recall_WT")
        first = text.splitlines()[1].split(",")
        assert 0.0 <= float(first[i]) <= 1.0

    def test_missing_input_usage_error(self, tmp_path):
        rc = run_cli("evaluate", tmp_path / "out", "--strategies", "cca")
        assert rc == 2


class TestMetricsCmd:
    def test_dice_and_focal(self, tmp_path, capsys):
        from tumorpatch import SegMask3D, Volume3D, save_mask, save_volume

        pred = np.zeros((4, 4, 4), dtype=np.float32)
        pred[:2] = 1.0
        truth = np.zeros((4, 4, 4), dtype=np.int16)
        truth[:2] = 2
        save_volume(Volume3D(pred), tmp_path / "p.raw")
        save_mask(SegMask3D(truth), tmp_path / "t.raw")
        rc = run_cli("metrics", "dice", "--pred", tmp_path / "p.raw", "--truth", tmp_path / "t.raw")
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["dice"] == 1.0
        assert out["dice_loss"] == 0.0

        rc = run_cli("metrics", "focal", "--pt", 0.5, "--alpha", 0.25, "--gamma", 2)
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["focal_loss"] == pytest.approx(0.0433217, abs=1e-6)

        rc = run_cli("metrics", "tumor-fraction", "--mask", tmp_path / "t.raw")
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["tumor_fraction"] == pytest.approx(0.5)


def test_env_var_overrides_output_dir(tmp_path, monkeypatch):
    override = tmp_path / "override"
    monkeypatch.setenv("TUMORPATCH_OUT", str(override))
    rc = run_cli("phantom", tmp_path / "ignored", "--count", 1, "--seed", 1,
                 "--shape", "40,40,36", "--center-margin", "10",
                 "--semi-axes-min", "5", "--semi-axes-max", "7")
    assert rc == 0
    assert override.exists()
    assert not (tmp_path / "ignored").exists()
