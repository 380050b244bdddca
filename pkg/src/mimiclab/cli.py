"""Command-line pipeline: gen-expert / train / eval / score / grad-check.

Exit codes: 0 success, 2 configuration error, 3 runtime divergence or an
unstable scripted gait, 4 file-format error.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys

import numpy as np

from . import physics as ph
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (
    RunConfig,
    flatten_defaults,
    load_run_config,
    resolve_gait,
    resolve_morphology,
)
from .encoder import BRIDGE_ENV_VAR, BridgeConnection, bridge_address
from .errors import (
    BridgeUnavailable,
    ConfigError,
    FormatError,
    MimiclabError,
    NonFiniteState,
    NumericalDivergence,
    ProtocolError,
    ResolutionMismatch,
    UnstableGait,
)
from .nets import MLPNet, grad_check
from .render import Camera
from .reward import (
    CSV_HEADER,
    RegPenalty,
    breakdown_csv_row,
    combined_reward,
    mask_iou,
    video_similarity,
)
from .sac import TrainerConfig, init_policy
from .train import ClipEncoder, ReferenceTrack, TrainResult, evaluate, train_loop
from .video import (
    build_prompt,
    generate_synthetic_expert,
    load_gait,
    load_video,
    save_video,
    segment_by_threshold,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_FORMAT = 4


def _clip_encoder(cfg: RunConfig) -> ClipEncoder:
    if cfg.encoder.kind == "bridge":
        addr = bridge_address(cfg.encoder.bridge_addr or None)
        return ClipEncoder(bridge=BridgeConnection(addr))
    return ClipEncoder(params=cfg.encoder.params())


def _camera(cfg: RunConfig) -> Camera:
    return cfg.camera


def _load_reference(cfg: RunConfig, out_dir: str):
    """Reference video per the config: load a directory or synthesize."""
    morph = ph.load_morphology(resolve_morphology(cfg.morphology))
    if cfg.reference.video_dir:
        video = load_video(cfg.reference.video_dir)
        if video.masks is None:
            thr = cfg.reference.segment_threshold
            if thr < 0:
                raise ConfigError(
                    "reference video has no masks; set "
                    "reference.segment_threshold to derive them"
                )
            video = segment_by_threshold(video, thr)
        return morph, video
    script = load_gait(resolve_gait(cfg.reference.gait_script))
    video = generate_synthetic_expert(
        morph, script, _camera(cfg), fps=cfg.reference.fps, seed=cfg.seed
    )
    ref_dir = os.path.join(out_dir, "reference")
    save_video(video, ref_dir)
    return morph, video


def cmd_gen_expert(cfg: RunConfig, args) -> int:
    if not cfg.reference.gait_script:
        raise ConfigError("gen-expert requires reference.gait_script")
    morph = ph.load_morphology(resolve_morphology(cfg.morphology))
    script = load_gait(resolve_gait(cfg.reference.gait_script))
    print(build_prompt(script.skill, morph.name))
    video = generate_synthetic_expert(
        morph, script, _camera(cfg), fps=cfg.reference.fps, seed=cfg.seed
    )
    out = args.out or os.path.join(cfg.out_dir, "reference")
    save_video(video, out)
    print(f"wrote {video.n} frames to {out}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    os.makedirs(cfg.out_dir, exist_ok=True)
    morph, reference = _load_reference(cfg, cfg.out_dir)
    enc = _clip_encoder(cfg)
    trainer = cfg.trainer

    with open(os.path.join(cfg.out_dir, "run_config.json"), "w") as fh:
        from .config import config_to_json

        fh.write(config_to_json(cfg) + "\n")

    if args.resume:
        policy = load_checkpoint(args.resume, trainer)
        policy.obs_scale = ph.observation_scale(morph)
        ref = ReferenceTrack.build(reference, enc)
        miou, disp, ret = evaluate(
            morph, ref, enc, _camera(cfg), cfg.reward, trainer, policy,
            trainer.eval_episodes,
        )
        print(
            f"resumed at step {policy.step}: iou {miou:.4f} "
            f"disp {disp:.4f} ret {ret:.4f}"
        )
        with open(os.path.join(cfg.out_dir, "resume_eval.json"), "w") as fh:
            json.dump(
                {"step": policy.step, "mean_iou": miou,
                 "mean_displacement": disp, "mean_return": ret},
                fh, indent=2,
            )
            fh.write("\n")
        return EXIT_OK

    def checkpoint_fn(policy, step, n_evals):
        if n_evals % trainer.checkpoint_every_evals == 0:
            save_checkpoint(
                os.path.join(cfg.out_dir, f"ckpt_{step:08d}.bin"), policy
            )
            save_checkpoint(os.path.join(cfg.out_dir, "ckpt_latest.bin"), policy)

    result = train_loop(
        morph, reference, trainer, weights=cfg.reward, cam=_camera(cfg),
        encoder=enc, out_dir=cfg.out_dir, checkpoint_fn=checkpoint_fn,
        log_file=sys.stdout,
    )
    save_checkpoint(os.path.join(cfg.out_dir, "ckpt_latest.bin"), result.policy)
    print(
        f"trained {result.steps} steps over {result.episodes} episodes; "
        f"outputs in {cfg.out_dir}"
    )
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    morph, reference = _load_reference(cfg, cfg.out_dir)
    enc = _clip_encoder(cfg)
    policy = load_checkpoint(args.checkpoint, cfg.trainer)
    policy.obs_scale = ph.observation_scale(morph)
    ref = ReferenceTrack.build(reference, enc)
    episodes = args.episodes
    per_ep = []
    from .sac import act as sac_act
    from .train import EVAL_SEED_BASE, run_episode

    os.makedirs(cfg.out_dir, exist_ok=True)
    rollout_dir = os.path.join(cfg.out_dir, "eval_rollout")
    breakdown_rows = []
    for e in range(episodes):
        def action_fn(obs, s):
            return sac_act(policy, obs, deterministic=True)

        def breakdown_hook(b, episode=e):
            breakdown_rows.append(breakdown_csv_row(b, episode))

        n_frames, disp, ret, miou, fell = run_episode(
            morph, ref, enc, _camera(cfg), cfg.reward, cfg.trainer,
            reset_seed=EVAL_SEED_BASE + e, action_fn=action_fn,
            breakdown_hook=breakdown_hook,
        )
        per_ep.append((miou, disp, ret))
    ious = np.array([p[0] for p in per_ep])
    disps = np.array([p[1] for p in per_ep])
    rets = np.array([p[2] for p in per_ep])
    report = {
        "episodes": episodes,
        "checkpoint_step": policy.step,
        "mean_iou": float(ious.mean()),
        "std_iou": float(ious.std()),
        "mean_displacement": float(disps.mean()),
        "std_displacement": float(disps.std()),
        "mean_return": float(rets.mean()),
        "std_return": float(rets.std()),
    }
    # per-term reward means over all scored eval frames
    import csv as _csv

    term_rows = list(_csv.DictReader(io.StringIO(
        "\n".join([CSV_HEADER] + breakdown_rows)
    )))
    for term in ("s_video", "s_mask", "p_torque", "p_action_rate",
                 "p_joint_vel", "p_foot", "p_tilt", "r_total"):
        report[f"mean_{term}"] = float(
            np.mean([float(r[term]) for r in term_rows])
        ) if term_rows else 0.0
    with open(os.path.join(cfg.out_dir, "eval_report.json"), "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(cfg.out_dir, "eval_breakdown.csv"), "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in breakdown_rows:
            fh.write(row + "\n")
    # rollout video of the first eval episode, for inspection
    _write_eval_rollout(morph, cfg, policy, rollout_dir, reference.n)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def _write_eval_rollout(morph, cfg, policy, rollout_dir, n):
    from .render import follow_camera, render_frame, render_mask
    from .sac import act as sac_act
    from .train import EVAL_SEED_BASE
    from .video import SIM_DT, VideoSequence

    k = cfg.trainer.steps_per_frame
    state = ph.reset(morph, EVAL_SEED_BASE)
    frames, masks = [], []
    for f in range(n):
        cam = follow_camera(_camera(cfg), state)
        frames.append(render_frame(state, morph, cam))
        masks.append(render_mask(state, morph, cam))
        for _ in range(k):
            a = sac_act(policy, ph.observe(morph, state), deterministic=True)
            state = ph.step(morph, state, a, SIM_DT)
        if ph.is_fallen(morph, state):
            break
    video = VideoSequence(frames=frames, masks=masks, fps=cfg.reference.fps,
                          task="eval-rollout", embodiment=morph.name)
    save_video(video, rollout_dir)


def cmd_score(cfg: RunConfig, args) -> int:
    rollout = load_video(args.rollout)
    reference = load_video(args.reference)
    for name, v in (("rollout", rollout), ("reference", reference)):
        if v.masks is None:
            raise FormatError(f"{name} video has no masks; segment it first")
    if rollout.resolution != reference.resolution:
        raise ResolutionMismatch(
            f"rollout {rollout.resolution} != reference {reference.resolution}"
        )
    enc = _clip_encoder(cfg)
    ref_track = ReferenceTrack.build(reference, enc)
    roll_track = ReferenceTrack.build(rollout, enc)
    out = args.out or "-"
    rows = [CSV_HEADER]
    for t in range(rollout.n):
        rt = min(t, reference.n - 1)
        s_v = video_similarity(ref_track.embeddings[rt], roll_track.embeddings[t])
        s_m = mask_iou(reference.masks[rt], rollout.masks[t])
        # offline scoring has no dynamics context: regularization terms are 0
        b = combined_reward(s_v, s_m, RegPenalty(), cfg.reward, frame=t,
                            sim_step=t * cfg.trainer.steps_per_frame)
        rows.append(breakdown_csv_row(b, 0))
    text = "\n".join(rows) + "\n"
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)
        print(f"wrote {rollout.n} rows to {out}")
    return EXIT_OK


def cmd_grad_check(cfg: RunConfig, args) -> int:
    from .sac import actor_loss_and_grad, critic_loss_and_grad, init_policy
    from .sac import temperature_loss_and_grad

    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for seed in range(args.seeds):
        tc = TrainerConfig(hidden=(4,), seed=seed, batch_size=8)
        policy = init_policy(3, np.full(2, 2.0), tc, dtype=np.float64)
        q_in = rng.standard_normal((6, 5))
        y = rng.standard_normal(6)

        def fc(theta):
            policy.q1.set_theta(theta)
            return critic_loss_and_grad(policy.q1, q_in, y)

        rep_c = grad_check(fc, policy.q1.theta.copy(), eps=1e-5, tolerance=1e-4)
        obs = rng.standard_normal((6, 3))
        noise = rng.standard_normal((6, 2))

        def fa(theta):
            policy.actor.set_theta(theta)
            loss, grad, _ = actor_loss_and_grad(policy, obs, noise, 0.2)
            return loss, grad

        rep_a = grad_check(fa, policy.actor.theta.copy(), eps=1e-5,
                           tolerance=1e-4)
        lm = float(rng.standard_normal())

        def ft(theta):
            loss, g = temperature_loss_and_grad(float(theta[0]), lm, -2.0)
            return loss, np.array([g])

        rep_t = grad_check(ft, np.array([0.3]), eps=1e-5, tolerance=1e-4)
        ok = rep_c.passed and rep_a.passed and rep_t.passed
        worst = max(worst, rep_c.max_rel_error, rep_a.max_rel_error,
                    rep_t.max_rel_error)
        print(
            f"seed {seed}: critic {rep_c.max_rel_error:.2e} "
            f"actor {rep_a.max_rel_error:.2e} temp {rep_t.max_rel_error:.2e} "
            f"{'PASS' if ok else 'FAIL'}"
        )
        if not ok:
            return EXIT_DIVERGENCE
    print(f"all gradient checks passed (worst {worst:.2e})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mimiclab",
        description="Desk-scale video-imitation laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", default=None, help="JSON run config")
        for dotted, default in flatten_defaults().items():
            p.add_argument(
                f"--{dotted}", dest=f"ov::{dotted}", default=None,
                metavar=str(type(default).__name__).upper(),
                help=argparse.SUPPRESS,
            )

    p = sub.add_parser("gen-expert", help="synthesize a reference video")
    add_common(p)
    p.add_argument("--out", default=None, help="output video directory")

    p = sub.add_parser("train", help="train a policy against the reference")
    add_common(p)
    p.add_argument("--resume", default=None, metavar="CKPT",
                   help="evaluate a checkpoint at its saved step")
    p.add_argument("--no-iou", action="store_true",
                   help="ablation: zero the mask-IoU weight")
    p.add_argument("--no-video", action="store_true",
                   help="ablation: zero the video-similarity weight")
    p.add_argument("--no-reg", action="store_true",
                   help="ablation: zero the regularization weight")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=10)

    p = sub.add_parser("score", help="score a stored rollout against a reference")
    add_common(p)
    p.add_argument("--rollout", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")

    p = sub.add_parser("grad-check", help="verify training gradients")
    add_common(p)
    p.add_argument("--seeds", type=int, default=20)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {
        k[4:]: v
        for k, v in vars(args).items()
        if k.startswith("ov::") and v is not None
    }
    try:
        needs_reference = args.command in ("gen-expert", "train", "eval")
        cfg = load_run_config(
            getattr(args, "config", None), overrides,
            validate=needs_reference,
        )
        import dataclasses

        if getattr(args, "no_iou", False):
            cfg.reward = dataclasses.replace(cfg.reward, beta=0.0)
        if getattr(args, "no_video", False):
            cfg.reward = dataclasses.replace(cfg.reward, alpha=0.0)
        if getattr(args, "no_reg", False):
            cfg.reward = dataclasses.replace(cfg.reward, gamma_reg=0.0)
        handler = {
            "gen-expert": cmd_gen_expert,
            "train": cmd_train,
            "eval": cmd_eval,
            "score": cmd_score,
            "grad-check": cmd_grad_check,
        }[args.command]
        return handler(cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalDivergence, NonFiniteState, UnstableGait,
            BridgeUnavailable, ProtocolError, TimeoutError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (FormatError, ResolutionMismatch) as e:
        print(f"format error: {e}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
