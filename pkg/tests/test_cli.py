"""CLI behavior: precedence, subcommand outputs, exit codes."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from mimiclab.cli import main
from mimiclab.config import RunConfig, flatten_defaults, load_run_config


def run_cli(args):
    return main(list(args))


class TestConfigPrecedence:
    def test_matrix_default_file_cli(self, tmp_path):
        # Any dotted field: CLI beats file beats default.
        cfile = tmp_path / "c.json"
        cfile.write_text(json.dumps({
            "reference": {"gait_script": "walker-gait-v1"},
            "trainer": {"batch_size": 111},
            "reward": {"beta": 0.5},
            "seed": 9,
        }))
        # default only
        cfg = load_run_config(None, {}, validate=False)
        assert cfg.trainer.batch_size == 256 and cfg.reward.beta == 1.0
        # file overrides default
        cfg = load_run_config(str(cfile), {})
        assert cfg.trainer.batch_size == 111
        assert cfg.reward.beta == 0.5
        assert cfg.seed == 9
        # CLI overrides file
        cfg = load_run_config(
            str(cfile),
            {"trainer.batch_size": "64", "reward.beta": "0.25", "seed": "4"},
        )
        assert cfg.trainer.batch_size == 64
        assert cfg.reward.beta == 0.25
        assert cfg.seed == 4
        # untouched fields keep file/default values
        assert cfg.reference.gait_script == "walker-gait-v1"
        assert cfg.trainer.tau == 0.005

    def test_every_leaf_is_flag_addressable(self):
        leaves = flatten_defaults()
        assert "trainer.batch_size" in leaves
        assert "reward.gamma_reg" in leaves
        assert "camera.res_h" in leaves
        assert "encoder.bridge_addr" in leaves
        # every leaf can round-trip through an override
        overrides = {}
        for name, default in leaves.items():
            if isinstance(default, bool):
                overrides[name] = "true"
            elif isinstance(default, int):
                overrides[name] = "3"
            elif isinstance(default, float):
                overrides[name] = "0.5"
            elif isinstance(default, tuple):
                overrides[name] = "8,8"
            else:
                overrides[name] = "x"
        cfg = load_run_config(None, overrides, validate=False)
        assert cfg.trainer.batch_size == 3
        assert cfg.trainer.hidden == (8, 8)
        assert cfg.reward.alpha == 0.5

    def test_unknown_field_rejected(self):
        from mimiclab.errors import ConfigError

        with pytest.raises(ConfigError):
            load_run_config(None, {"trainer.bogus": "1"}, validate=False)

    def test_bad_type_rejected(self):
        from mimiclab.errors import ConfigError

        with pytest.raises(ConfigError):
            load_run_config(None, {"trainer.batch_size": "abc"}, validate=False)


class TestGenExpert:
    def test_writes_expected_count_and_prompt(self, tmp_path, capsys):
        out = str(tmp_path / "ref")
        rc = run_cli([
            "gen-expert", "--reference.gait_script", "walker-gait-v1",
            "--out", out,
        ])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "The walker2d agent is walking, camera follows." in printed
        meta = json.load(open(os.path.join(out, "meta.json")))
        assert meta["n"] == 125  # 5 s at 25 fps
        frames = [f for f in os.listdir(out) if f.startswith("frame_")]
        assert len(frames) == 125

    def test_deterministic_rerun_byte_identical(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = str(tmp_path / name)
            assert run_cli([
                "gen-expert", "--reference.gait_script", "hopper-gait-v1",
                "--morphology", "hopper2d", "--out", out,
            ]) == 0
            blob = b"".join(
                open(os.path.join(out, f), "rb").read()
                for f in sorted(os.listdir(out))
            )
            outs.append(blob)
        assert outs[0] == outs[1]

    def test_missing_script_config_error(self, tmp_path):
        rc = run_cli([
            "gen-expert", "--reference.gait_script", "/nope/missing.json",
            "--out", str(tmp_path / "x"),
        ])
        assert rc == 2


TRAIN_SMOKE_ARGS = [
    "--reference.gait_script", "walker-gait-v1",
    "--trainer.total_steps", "1000",
    "--trainer.warmup_steps", "200",
    "--trainer.hidden", "32,32",
    "--trainer.batch_size", "32",
    "--trainer.eval_interval", "500",
    "--trainer.eval_episodes", "1",
]


class TestTrainCli:
    def test_smoke_outputs(self, tmp_path):
        out = str(tmp_path / "run")
        rc = run_cli(["train", *TRAIN_SMOKE_ARGS, "--out_dir", out])
        assert rc == 0
        for f in ("metrics.csv", "reward_breakdown.csv", "ckpt_latest.bin",
                  "run_config.json"):
            assert os.path.exists(os.path.join(out, f)), f

    def test_ablation_flags_zero_components(self, tmp_path):
        import csv

        for flag, column in (("--no-iou", "weighted_mask"),
                             ("--no-video", "weighted_video"),
                             ("--no-reg", "weighted_reg")):
            out = str(tmp_path / f"run{flag}")
            rc = run_cli([
                "train", *TRAIN_SMOKE_ARGS, "--out_dir", out,
                "--trainer.total_steps", "300",
                "--trainer.eval_interval", "300", flag,
            ])
            assert rc == 0
            with open(os.path.join(out, "reward_breakdown.csv")) as fh:
                rows = list(csv.DictReader(fh))
            assert rows
            assert all(float(r[column]) == 0.0 for r in rows)
            others = {"weighted_mask", "weighted_video", "weighted_reg"} - {column}
            for o in others:
                assert any(float(r[o]) != 0.0 for r in rows)

    def test_resume_reproduces_eval_at_checkpoint(self, tmp_path):
        out = str(tmp_path / "base")
        rc = run_cli(["train", *TRAIN_SMOKE_ARGS, "--out_dir", out])
        assert rc == 0
        # metrics at step 1000 from the uninterrupted run
        lines = open(os.path.join(out, "metrics.csv")).read().strip().splitlines()
        header = lines[0].split(",")
        last = dict(zip(header, lines[-1].split(",")))
        assert last["step"] == "1000"
        out2 = str(tmp_path / "resumed")
        rc = run_cli([
            "train", *TRAIN_SMOKE_ARGS, "--out_dir", out2,
            "--resume", os.path.join(out, "ckpt_00001000.bin"),
        ])
        assert rc == 0
        resumed = json.load(open(os.path.join(out2, "resume_eval.json")))
        # PolicyState.step counts gradient updates (env steps minus warmup)
        assert resumed["step"] == 801
        assert resumed["mean_iou"] == pytest.approx(float(last["mean_iou"]), rel=1e-6)
        assert resumed["mean_displacement"] == pytest.approx(
            float(last["mean_displacement"]), rel=1e-6
        )


class TestEvalCli:
    def test_eval_fresh_policy_near_zero_displacement(self, tmp_path):
        out = str(tmp_path / "run")
        rc = run_cli(["train", *TRAIN_SMOKE_ARGS, "--out_dir", out,
                      "--trainer.total_steps", "300",
                      "--trainer.eval_interval", "300"])
        assert rc == 0
        ev = str(tmp_path / "ev")
        rc = run_cli([
            "eval", "--checkpoint", os.path.join(out, "ckpt_latest.bin"),
            "--reference.gait_script", "walker-gait-v1",
            "--out_dir", ev, "--episodes", "2",
        ])
        assert rc == 0
        report = json.load(open(os.path.join(ev, "eval_report.json")))
        assert report["episodes"] == 2
        assert os.path.isdir(os.path.join(ev, "eval_rollout"))

    def test_eval_deterministic(self, tmp_path):
        out = str(tmp_path / "run")
        run_cli(["train", *TRAIN_SMOKE_ARGS, "--out_dir", out,
                 "--trainer.total_steps", "300",
                 "--trainer.eval_interval", "300"])
        reports = []
        for name in ("e1", "e2"):
            ev = str(tmp_path / name)
            rc = run_cli([
                "eval", "--checkpoint", os.path.join(out, "ckpt_latest.bin"),
                "--reference.gait_script", "walker-gait-v1",
                "--out_dir", ev, "--episodes", "2",
            ])
            assert rc == 0
            reports.append(open(os.path.join(ev, "eval_report.json")).read())
        assert reports[0] == reports[1]

    def test_bad_checkpoint_format_error(self, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"garbage")
        rc = run_cli([
            "eval", "--checkpoint", str(bad),
            "--reference.gait_script", "walker-gait-v1",
            "--out_dir", str(tmp_path / "ev"),
        ])
        assert rc == 4


class TestScoreCli:
    def test_self_score_and_golden_shape(self, tmp_path, walker):
        ref = str(tmp_path / "ref")
        run_cli(["gen-expert", "--reference.gait_script", "walker-gait-v1",
                 "--out", ref])
        out = str(tmp_path / "score.csv")
        rc = run_cli(["score", "--rollout", ref, "--reference", ref,
                      "--out", out])
        assert rc == 0
        import csv

        rows = list(csv.DictReader(open(out)))
        assert len(rows) == 125
        assert all(float(r["s_video"]) == 0.0 for r in rows)
        assert all(float(r["s_mask"]) == 1.0 for r in rows)

    def test_format_error_exit_code(self, tmp_path):
        rc = run_cli(["score", "--rollout", str(tmp_path), "--reference",
                      str(tmp_path)])
        assert rc == 4

    def test_against_empty_masks(self, tmp_path):
        # scoring against an all-empty-mask copy: S_M = 0 wherever the
        # rollout agent is visible
        from mimiclab import video as vid

        ref = str(tmp_path / "ref")
        run_cli(["gen-expert", "--reference.gait_script", "walker-gait-v1",
                 "--out", ref])
        v = vid.load_video(ref)
        empty = vid.VideoSequence(
            frames=[np.zeros_like(f) for f in v.frames],
            masks=[np.zeros_like(m) for m in v.masks],
            fps=v.fps, task=v.task, embodiment=v.embodiment,
        )
        emptydir = str(tmp_path / "empty")
        vid.save_video(empty, emptydir)
        out = str(tmp_path / "score.csv")
        rc = run_cli(["score", "--rollout", ref, "--reference", emptydir,
                      "--out", out])
        assert rc == 0
        import csv

        rows = list(csv.DictReader(open(out)))
        assert all(float(r["s_mask"]) == 0.0 for r in rows)
