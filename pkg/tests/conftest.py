import os

# single-threaded BLAS keeps repeated runs bitwise reproducible
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from handtok.handmodel import synth_asset, toy_asset  # noqa: E402
from handtok.model import ModelConfig  # noqa: E402
from handtok.posedata import SynthConfig, synth_generate  # noqa: E402


@pytest.fixture(scope="session")
def asset():
    return synth_asset(0)


@pytest.fixture(scope="session")
def toy():
    return toy_asset()


@pytest.fixture(scope="session")
def tiny_sequences():
    """Three classes, four sequences each, 12 frames."""
    return synth_generate(SynthConfig(class_count=3, sequences_per_class=4, sequence_length=12, seed=5))


@pytest.fixture
def tiny_model_cfg():
    return ModelConfig(d=16, gcn_channels=[4, 8], layers=1, heads=2, ffn=32, frames=4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
