"""Video ingestion, segmentation, and synthetic-expert generation.

On-disk video format (bit-exact):

    <dir>/meta.json      {"fps", "width", "height", "n", "has_masks",
                          "task", "embodiment"}
    <dir>/frame_%05d.pgm binary PGM (P5, maxval 255), row-major
    <dir>/mask_%05d.pgm  same, values 0/255, present iff has_masks

Reference videos for training normally come from generate_synthetic_expert
(a scripted gait tracked by a PD controller in the simulator); externally
produced videos are ingested from the same directory layout, with masks
either precomputed or derived by intensity thresholding.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np

from . import physics as ph
from .errors import EmptyField, FormatError, MissingFrame, UnstableGait
from .render import Camera, follow_camera, render_frame, render_mask

SIM_DT = 0.002  # s, canonical simulator step
PD_KP = 80.0    # N m / rad, gait-tracking proportional gain
PD_KD = 2.0     # N m s / rad, gait-tracking derivative gain


# -- PGM ---------------------------------------------------------------

def write_pgm(path: str, img: np.ndarray) -> None:
    """Binary PGM (P5, maxval 255). Masks must be pre-scaled to 0/255."""
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError("write_pgm expects a 2-D uint8 array")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    # header: magic, width, height, maxval, single whitespace, then raster
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = int(m.group(1)), int(m.group(2)), int(m.group(3))
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    raster = data[m.end():]
    if len(raster) != w * h:
        raise FormatError(f"{path}: raster size {len(raster)} != {w * h}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w)


# -- video sequences ---------------------------------------------------

@dataclass
class VideoSequence:
    frames: list[np.ndarray]            # each (H, W) uint8
    masks: list[np.ndarray] | None      # each (H, W) uint8 in {0, 1}
    fps: float
    task: str = ""
    embodiment: str = ""

    def __post_init__(self):
        if len(self.frames) < 1:
            raise FormatError("video must contain at least one frame")
        if self.fps <= 0:
            raise FormatError("fps must be positive")
        h, w = self.frames[0].shape
        for f in self.frames:
            if f.shape != (h, w):
                raise FormatError("all frames must share one resolution")
        if self.masks is not None:
            if len(self.masks) != len(self.frames):
                raise FormatError("mask count must equal frame count")
            for m in self.masks:
                if m.shape != (h, w):
                    raise FormatError("mask resolution must match frames")

    @property
    def n(self) -> int:
        return len(self.frames)

    @property
    def resolution(self) -> tuple[int, int]:
        return self.frames[0].shape


def save_video(video: VideoSequence, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    h, w = video.resolution
    meta = {
        "fps": video.fps,
        "width": w,
        "height": h,
        "n": video.n,
        "has_masks": video.masks is not None,
        "task": video.task,
        "embodiment": video.embodiment,
    }
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for i, frame in enumerate(video.frames):
        write_pgm(os.path.join(directory, f"frame_{i:05d}.pgm"), frame)
    if video.masks is not None:
        for i, mask in enumerate(video.masks):
            write_pgm(
                os.path.join(directory, f"mask_{i:05d}.pgm"),
                (mask > 0).astype(np.uint8) * 255,
            )


def load_video(directory: str) -> VideoSequence:
    meta_path = os.path.join(directory, "meta.json")
    if not os.path.isfile(meta_path):
        raise FormatError(f"{directory}: missing meta.json")
    with open(meta_path) as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as e:
            raise FormatError(f"{meta_path}: {e}") from e
    try:
        n = int(meta["n"])
        w, h = int(meta["width"]), int(meta["height"])
        fps = float(meta["fps"])
        has_masks = bool(meta["has_masks"])
    except KeyError as e:
        raise FormatError(f"{meta_path}: missing key {e}") from e

    frames, masks = [], [] if has_masks else None
    for i in range(n):
        fpath = os.path.join(directory, f"frame_{i:05d}.pgm")
        if not os.path.isfile(fpath):
            raise MissingFrame(f"{directory}: frame {i} missing")
        frame = read_pgm(fpath)
        if frame.shape != (h, w):
            raise FormatError(
                f"{fpath}: resolution {frame.shape} != meta ({h}, {w})"
            )
        frames.append(frame)
        if has_masks:
            mpath = os.path.join(directory, f"mask_{i:05d}.pgm")
            if not os.path.isfile(mpath):
                raise MissingFrame(f"{directory}: mask {i} missing")
            mask = read_pgm(mpath)
            if mask.shape != (h, w):
                raise FormatError(
                    f"{mpath}: mask resolution {mask.shape} != frames"
                )
            masks.append((mask > 0).astype(np.uint8))
    return VideoSequence(
        frames=frames,
        masks=masks,
        fps=fps,
        task=str(meta.get("task", "")),
        embodiment=str(meta.get("embodiment", "")),
    )


def segment_by_threshold(video: VideoSequence, threshold: int) -> VideoSequence:
    """Mask = intensity strictly above threshold; frames zeroed outside.

    Idempotent: re-segmenting an already-masked video is a no-op because
    surviving pixels keep their (above-threshold) intensities.
    """
    if not (0 <= threshold <= 255):
        raise ValueError("threshold must be in [0, 255]")
    masks = [(f > threshold).astype(np.uint8) for f in video.frames]
    frames = [f * m for f, m in zip(video.frames, masks)]
    return VideoSequence(
        frames=frames,
        masks=masks,
        fps=video.fps,
        task=video.task,
        embodiment=video.embodiment,
    )


# -- prompt construction ------------------------------------------------

def build_prompt(skill: str, embodiment: str) -> str:
    """Fixed prompt template used for reference-video provenance records."""
    if not skill:
        raise EmptyField("skill must be non-empty")
    if not embodiment:
        raise EmptyField("embodiment must be non-empty")
    return f"The {embodiment} agent is {skill}, camera follows."


# -- scripted gaits ------------------------------------------------------

@dataclass(frozen=True)
class JointWave:
    amplitude: float  # rad
    frequency: float  # Hz
    phase: float      # rad
    offset: float     # rad


@dataclass(frozen=True)
class GaitScript:
    """Per-joint sinusoid targets tracked by a PD controller."""

    name: str
    morphology: str
    duration: float  # s
    joints: tuple[JointWave, ...]
    skill: str = "walking"

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        for jw in self.joints:
            if jw.frequency < 0:
                raise ValueError("frequency must be non-negative")

    def targets(self, t: float) -> np.ndarray:
        return np.array(
            [
                jw.offset
                + jw.amplitude * math.sin(2.0 * math.pi * jw.frequency * t + jw.phase)
                for jw in self.joints
            ]
        )


def load_gait(path: str) -> GaitScript:
    with open(path) as fh:
        raw = json.load(fh)
    return GaitScript(
        name=raw["name"],
        morphology=raw["morphology"],
        duration=float(raw["duration"]),
        joints=tuple(
            JointWave(
                amplitude=float(j["amplitude"]),
                frequency=float(j["frequency"]),
                phase=float(j["phase"]),
                offset=float(j["offset"]),
            )
            for j in raw["joints"]
        ),
        skill=raw.get("skill", "walking"),
    )


def validate_gait(script: GaitScript, morph: ph.MorphologySpec) -> None:
    if len(script.joints) != morph.num_joints:
        raise ValueError(
            f"gait has {len(script.joints)} joint waves, morphology has "
            f"{morph.num_joints} joints"
        )
    for jw, joint in zip(script.joints, morph.joints):
        lo, hi = joint.limits
        if jw.offset - abs(jw.amplitude) < lo - 1e-9 or (
            jw.offset + abs(jw.amplitude) > hi + 1e-9
        ):
            raise ValueError(
                f"gait targets for joint {joint.name} exceed limits {joint.limits}"
            )


def generate_synthetic_expert(
    morph: ph.MorphologySpec,
    script: GaitScript,
    cam: Camera,
    fps: float = 25.0,
    seed: int = 0,
    states_out: list[ph.SimState] | None = None,
) -> VideoSequence:
    """Roll out the scripted gait under PD control and record frames+masks.

    One frame per 1/fps seconds; deterministic for fixed inputs. Raises
    UnstableGait if the agent falls before the script's duration elapses.
    """
    validate_gait(script, morph)
    steps_per_frame = max(1, round(1.0 / (fps * SIM_DT)))
    n_frames = int(round(script.duration * fps))
    state = ph.reset(morph, seed)
    frames, masks = [], []
    for f in range(n_frames):
        c = follow_camera(cam, state)
        frames.append(render_frame(state, morph, c))
        masks.append(render_mask(state, morph, c))
        if states_out is not None:
            states_out.append(state.copy())
        for k in range(steps_per_frame):
            t = state.time
            target = script.targets(t)
            tau = PD_KP * (target - state.joint_angles) - PD_KD * state.joint_vels
            state = ph.step(morph, state, tau, SIM_DT)
            if ph.is_fallen(morph, state):
                raise UnstableGait(
                    f"gait {script.name!r} fell at t={state.time:.3f}s "
                    f"(frame {f})"
                )
    return VideoSequence(
        frames=frames,
        masks=masks,
        fps=fps,
        task=script.skill,
        embodiment=morph.name,
    )
