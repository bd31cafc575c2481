import numpy as np
import pytest

from poemkit import basis, decoder, synth
from poemkit.hand import build_hand_model


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def tiny_config():
    return decoder.ModelConfig(d=16, n_layers=1, k=4, n_heads=2, m_pts=64, q=98, seed=0)


@pytest.fixture(scope="session")
def hand77():
    return build_hand_model(77)


@pytest.fixture(scope="session")
def rig4():
    return synth.make_rig(4, 0.6, seed=3)


@pytest.fixture(scope="session")
def tiny_frame(tiny_config, hand77, rig4):
    scene = synth.random_scene(rig4, seed=11)
    return synth.render_frame(scene, rig4, hand77, channels=tiny_config.d)


@pytest.fixture(scope="session")
def tiny_params(tiny_config):
    return decoder.build_params(tiny_config)


@pytest.fixture(scope="session")
def tiny_bps(tiny_config):
    return basis.generate_bps(tiny_config.m_pts, tiny_config.diameter, seed=tiny_config.seed)
