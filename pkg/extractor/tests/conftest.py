import numpy as np
import pytest
from PIL import Image


def textured_scene(rng: np.random.Generator, side: int = 160) -> np.ndarray:
    """A blobby grayscale scene with enough structure for any detector."""
    img = rng.uniform(40.0, 80.0, (side, side))
    yy, xx = np.mgrid[0:side, 0:side]
    for _ in range(25):
        cx, cy = rng.uniform(10, side - 10, 2)
        r = rng.uniform(4.0, 18.0)
        img[(xx - cx) ** 2 + (yy - cy) ** 2 < r * r] = rng.uniform(0.0, 255.0)
    img += rng.normal(0.0, 6.0, img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


@pytest.fixture(scope="session")
def image_folder(tmp_path_factory):
    """Four distinct scenes plus one constant (featureless) image."""
    root = tmp_path_factory.mktemp("scenes")
    rng = np.random.default_rng(7)
    for i in range(4):
        Image.fromarray(textured_scene(rng)).save(root / f"scene{i:02d}.png")
    Image.fromarray(np.full((160, 160), 128, np.uint8)).save(root / "blank.png")
    return root
