"""Scene renderers used as forward oracles in the tests."""

import numpy as np

from hazefuse.raster import GrayImage, RasterImage

SKY_BLUE = (110, 160, 230)
GROUND_BROWN = (120, 80, 40)
BUILDING_GRAY = (90, 90, 90)


def two_tone(height=40, width=60, top=SKY_BLUE, bottom=GROUND_BROWN, split=None):
    split = height // 2 if split is None else split
    px = np.empty((height, width, 3), dtype=np.uint8)
    px[:split] = top
    px[split:] = bottom
    return RasterImage(px)


def sky_with_building(height=60, width=80, col0=30, col1=42, roof=None):
    """Blue sky over brown ground with a gray tower reaching the top edge."""
    px = np.empty((height, width, 3), dtype=np.uint8)
    horizon = height // 2
    px[:horizon] = SKY_BLUE
    px[horizon:] = GROUND_BROWN
    top = 0 if roof is None else roof
    px[top:horizon, col0:col1] = BUILDING_GRAY
    truth = np.zeros((height, width), dtype=bool)
    truth[:horizon] = True
    truth[top:horizon, col0:col1] = False
    return RasterImage(px), truth


def sky_with_rg(rg, height=60, width=80, green=190, blue=235, rng=None, horizon=None):
    """Sky whose per-pixel R/G averages exactly-ish to ``rg`` (red dithered)."""
    rng = np.random.default_rng(0) if rng is None else rng
    horizon = height * 11 // 20 if horizon is None else horizon
    px = np.empty((height, width, 3), dtype=np.uint8)
    g = np.full((horizon, width), green, dtype=float) + rng.integers(-3, 4, size=(horizon, width))
    target = rg * g
    lo = np.floor(target)
    red = lo + (rng.random((horizon, width)) < (target - lo))
    px[:horizon, :, 0] = red
    px[:horizon, :, 1] = g
    px[:horizon, :, 2] = blue
    px[horizon:] = GROUND_BROWN
    return RasterImage(px)


def disk_scene(centers, radius=10.0, size=(200, 200), background=220, ink=40):
    """Light filter with dark rasterised disks (pixel centres inside the circle)."""
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.full((h, w), background, dtype=np.uint8)
    for cx, cy in centers:
        img[(xx - cx) ** 2 + (yy - cy) ** 2 <= radius**2] = ink
    return GrayImage(img)


def gray_to_rgb(gray: GrayImage) -> RasterImage:
    return RasterImage(np.repeat(gray.pixels[:, :, None], 3, axis=2))
