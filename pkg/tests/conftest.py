import numpy as np
import pytest

from teleoparm.geometry import RigidTransform
from teleoparm.kinematics import Joint, KinematicChain, LinkInertia
from teleoparm.scenario import DATA_DIR, load_scenario


def _point_mass_link(mass: float, com_x: float) -> LinkInertia:
    return LinkInertia(mass=mass, com=np.array([com_x, 0.0, 0.0]), inertia=np.zeros((3, 3)))


@pytest.fixture(scope="session")
def two_link() -> KinematicChain:
    """Planar two-link arm in the xz-plane: unit links, 1 kg point masses at the tips.

    Axes are (0,-1,0) so positive q raises the link and the static gravity
    torque at q=(0,0) is the textbook (29.43, 9.81) N m.
    """
    joints = (
        Joint(
            name="shoulder",
            offset=RigidTransform.identity(),
            axis=np.array([0.0, -1.0, 0.0]),
            q_min=-2.0 * np.pi,
            q_max=2.0 * np.pi,
            v_max=1.0,
            a_max=2.0,
            inertial=_point_mass_link(1.0, 1.0),
        ),
        Joint(
            name="elbow",
            offset=RigidTransform.from_translation([1.0, 0.0, 0.0]),
            axis=np.array([0.0, -1.0, 0.0]),
            q_min=-2.0 * np.pi,
            q_max=2.0 * np.pi,
            v_max=1.0,
            a_max=2.0,
            inertial=_point_mass_link(1.0, 1.0),
        ),
    )
    return KinematicChain(
        name="two_link",
        joints=joints,
        ee_offset=RigidTransform.from_translation([1.0, 0.0, 0.0]),
    )


@pytest.fixture(scope="session")
def pendulum() -> KinematicChain:
    """Single point-mass pendulum: mass 2 kg at length 0.5 m."""
    joints = (
        Joint(
            name="pivot",
            offset=RigidTransform.identity(),
            axis=np.array([0.0, -1.0, 0.0]),
            q_min=-2.0 * np.pi,
            q_max=2.0 * np.pi,
            v_max=2.0,
            a_max=4.0,
            inertial=_point_mass_link(2.0, 0.5),
        ),
    )
    return KinematicChain(name="pendulum", joints=joints)


@pytest.fixture(scope="session")
def pickup_scenario():
    return load_scenario(DATA_DIR / "pickup.yaml")


@pytest.fixture(scope="session")
def noisy_scenario():
    return load_scenario(DATA_DIR / "pickup_noisy.yaml")


@pytest.fixture(scope="session")
def demo_chain(pickup_scenario):
    return pickup_scenario.chain


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
