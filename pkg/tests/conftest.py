import numpy as np
import pytest

from mimiclab import physics as ph
from mimiclab.assets import morphology_path


@pytest.fixture(scope="session")
def walker():
    return ph.load_morphology(morphology_path("walker2d"))


@pytest.fixture(scope="session")
def hopper():
    return ph.load_morphology(morphology_path("hopper2d"))


@pytest.fixture(scope="session")
def block():
    """Single-link body used for pure contact-statics checks."""
    m = ph.MorphologySpec(
        name="block",
        links=(ph.LinkSpec("slab", 0.4, 2.0, 0.028, 0.05),),
        joints=(),
        feet=(0,),
        torso=0,
        stand_angles=(),
        stand_root_angle=0.0,
    )
    ph.validate_morphology(m)
    return m


def state_fingerprint(state: ph.SimState) -> bytes:
    return b"".join(
        [
            state.root_pos.tobytes(),
            np.float64(state.root_angle).tobytes(),
            state.joint_angles.tobytes(),
            state.root_vel.tobytes(),
            np.float64(state.root_angvel).tobytes(),
            state.joint_vels.tobytes(),
            state.foot_contact.tobytes(),
            state.foot_airtime.tobytes(),
        ]
    )
