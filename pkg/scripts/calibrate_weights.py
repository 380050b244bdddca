"""Report typical magnitudes of each reward term near the stand pose.

The shipped default weights were chosen so that, at reset under small
random torques, every weighted term lands within roughly one order of
magnitude of the others. Rerun after changing morphologies or contact
constants:

    python scripts/calibrate_weights.py
"""

import numpy as np

from mimiclab import physics as ph
from mimiclab import video as vid
from mimiclab.assets import gait_path, morphology_path
from mimiclab.encoder import EncoderParams
from mimiclab.render import Camera
from mimiclab.reward import RewardWeights, mask_iou, reg_penalty, video_similarity
from mimiclab.train import ClipEncoder, ReferenceTrack


def main():
    morph = ph.load_morphology(morphology_path("walker2d"))
    script = vid.load_gait(gait_path("walker-gait-v1"))
    reference = vid.generate_synthetic_expert(morph, script, Camera(), seed=0)
    enc = ClipEncoder(EncoderParams())
    ref = ReferenceTrack.build(reference, enc)
    weights = RewardWeights()
    rng = np.random.default_rng(0)

    state = ph.reset(morph, 0)
    prev = state
    action = np.zeros(morph.num_joints)
    prev_action = np.zeros(morph.num_joints)
    frames = []
    rows = []
    from mimiclab.render import follow_camera, render_frame, render_mask

    for s in range(400):
        if s % 20 == 0:
            f = s // 20
            cam = follow_camera(Camera(), state)
            frames.append(render_frame(state, morph, cam))
            z = enc.encode_history(frames, len(frames) - 1)
            s_v = video_similarity(ref.embeddings[f], z)
            s_m = mask_iou(ref.video.masks[f], render_mask(state, morph, cam))
            pen = reg_penalty(prev, state, action, prev_action, weights)
            rows.append((
                weights.alpha * s_v,
                weights.beta * s_m,
                weights.gamma_reg * pen.p_torque,
                weights.gamma_reg * pen.p_action_rate,
                weights.gamma_reg * pen.p_joint_vel,
                weights.gamma_reg * pen.p_foot,
                weights.gamma_reg * pen.p_tilt,
            ))
        prev_action = action
        action = rng.uniform(-0.2, 0.2, morph.num_joints) * np.array(
            [j.torque_limit for j in morph.joints]
        )
        prev = state
        state = ph.step(morph, state, action, vid.SIM_DT)

    arr = np.array(rows)
    names = ["alpha*S_v", "beta*S_M", "g*P_torque", "g*P_action",
             "g*P_jointvel", "g*P_foot", "g*P_tilt"]
    print(f"{'term':14s} {'mean':>12s} {'mean|.|':>12s} {'max|.|':>12s}")
    for name, col in zip(names, arr.T):
        print(f"{name:14s} {col.mean():12.4f} {np.abs(col).mean():12.4f} "
              f"{np.abs(col).max():12.4f}")


if __name__ == "__main__":
    main()
