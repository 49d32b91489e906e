import numpy as np
import pytest

from biped_imitation.keypoints import KEYPOINT_INDEX, N_KEYPOINTS, KeypointSequence


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow; use --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def standing_frame(scale=100.0):
    """Keypoints of an upright figure with every limb hanging straight down."""
    xy = np.zeros((N_KEYPOINTS, 2))
    pts = {
        "nose": (0, -60), "neck": (0, -40), "r-eye": (2, -65), "l-eye": (-2, -65),
        "r-ear": (4, -63), "l-ear": (-4, -63),
        "r-shoulder": (-10, -30), "r-elbow": (-10, -15), "r-wrist": (-10, 0),
        "l-shoulder": (10, -30), "l-elbow": (10, -15), "l-wrist": (10, 0),
        "r-hip": (-5, 0), "r-knee": (-5, 20), "r-ankle": (-5, 40),
        "l-hip": (5, 0), "l-knee": (5, 20), "l-ankle": (5, 40),
    }
    for name, (x, y) in pts.items():
        xy[KEYPOINT_INDEX[name]] = (scale / 100 * x + 320, scale / 100 * y + 240)
    return xy


def make_sequence(xy_frames, conf=None, frame_rate=30.0):
    xy = np.asarray(xy_frames, dtype=np.float64)
    if conf is None:
        conf = np.ones(xy.shape[:2])
    return KeypointSequence(xy, conf, frame_rate)


@pytest.fixture
def standing():
    return make_sequence([standing_frame()])


# acceptance verdicts, filled by test_acceptance and printed after the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
