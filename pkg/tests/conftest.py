import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from gridprompt.mae import MaeConfig, MaeModel
from gridprompt.vq import VqConfig, VqModel


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng, h=64, w=64):
    return rng.random((h, w, 3)).astype(np.float32)


@pytest.fixture
def tiny_vq():
    torch.manual_seed(7)
    return VqModel(VqConfig(vocab_size=16, embed_dim=8, patch_size=8, channels=(8, 12, 16)))


@pytest.fixture
def tiny_mae():
    torch.manual_seed(11)
    return MaeModel(MaeConfig(patch_size=8, embed_dim=32, depth=2, num_heads=2,
                              decoder_embed_dim=24, decoder_depth=2,
                              decoder_num_heads=2, vocab_size=16))
