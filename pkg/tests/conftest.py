import os

import numpy as np
import pytest
from PIL import Image

import fibnet.tensor


@pytest.fixture(autouse=True)
def finite_guard():
    """Assert finiteness of every graph node output during tests."""
    old = fibnet.tensor.DEBUG_FINITE
    fibnet.tensor.DEBUG_FINITE = True
    yield
    fibnet.tensor.DEBUG_FINITE = old


PALETTE = ((200, 60, 60), (60, 200, 60), (60, 60, 200), (200, 200, 60),
           (60, 200, 200), (200, 60, 200))


def make_corpus(root: str, classes: int = 4, per_class: int = 10,
                size: int = 32, seed: int = 0) -> str:
    """Synthetic directory-per-class corpus: each class is a distinct base
    color plus uniform noise, so classes are separable by channel means."""
    rng = np.random.default_rng(seed)
    for ci in range(classes):
        d = os.path.join(root, f"class{ci}")
        os.makedirs(d)
        base = np.array(PALETTE[ci % len(PALETTE)], np.float32)
        for j in range(per_class):
            noise = rng.uniform(-40, 40, (size, size, 3)).astype(np.float32)
            img = np.clip(base + noise, 0, 255).astype(np.uint8)
            Image.fromarray(img).save(os.path.join(d, f"img{j:03d}.png"))
    return root


@pytest.fixture(scope="session")
def corpus4(tmp_path_factory) -> str:
    """Shared 40-image 4-class corpus of 32x32 color images."""
    return make_corpus(str(tmp_path_factory.mktemp("corpus4")))


def small_model_config(**overrides):
    """4-block desk-scale config with one bare branch and one conv branch.

    bn_momentum 0.9 lets the running statistics converge within the few
    dozen optimizer steps a 40-image run takes.
    """
    from fibnet.model import ModelConfig, PcbSpec
    kw = dict(num_classes=4, num_blocks=4, filter_schedule=(8, 13, 21, 34),
              pcbs=(PcbSpec(1, 3, None), PcbSpec(2, 4, 6)), input_size=32,
              convs_per_block=1, bn_momentum=0.9)
    kw.update(overrides)
    return ModelConfig(**kw)
