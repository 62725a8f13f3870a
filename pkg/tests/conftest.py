import sys

import numpy as np
import pytest

from vostools.core import Clip, FrameImage, LabelRaster


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_clip(n_frames=6, h=12, w=16, labels=(0, 1, 2), seed=0, seq="toy/seq"):
    r = np.random.default_rng(seed)
    frames = []
    for _ in range(n_frames):
        img = FrameImage(r.random((h, w, 3)))
        lab = LabelRaster(r.choice(np.asarray(labels), size=(h, w)).astype(np.int32))
        frames.append((img, lab))
    return Clip(seq, tuple(frames))


@pytest.fixture
def clip():
    return make_clip()


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    from vostools.synth import make_dataset

    root = tmp_path_factory.mktemp("synth")
    make_dataset(root / "SYN", n_sequences=5, n_frames=8)
    return root


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        state = mod.RESULTS.get(n)
        label = "not run" if state is None else ("PASS" if state else "FAIL")
        terminalreporter.write_line(f"criterion {n:2d}: {label}")
