"""Shared fixtures: synthetic raw patches and PGM helpers.

The synthetic generator mixes smooth gradients, low-frequency cosine blobs,
band-limited noise, and occasional hard edges so that patch statistics are
diverse: reference datasets and test corpora drawn from it behave like
crops of real photographs for retrieval purposes.
"""

from __future__ import annotations

import numpy as np
import pytest

from fqe.types import GrayImage


def synth_patch(rng: np.random.Generator, side: int = 64) -> GrayImage:
    yy, xx = np.mgrid[0:side, 0:side] / side
    img = np.full((side, side), rng.uniform(40.0, 215.0))
    img += rng.normal(0, 60) * (xx - 0.5) + rng.normal(0, 60) * (yy - 0.5)
    for _ in range(int(rng.integers(1, 4))):
        fx, fy = rng.uniform(0.5, 6.0, 2)
        px, py = rng.uniform(0, 2 * np.pi, 2)
        img += rng.uniform(5, 35) * np.cos(2 * np.pi * fx * xx + px) * np.cos(
            2 * np.pi * fy * yy + py
        )
    noise = rng.normal(0, 1, (side, side))
    for _ in range(int(rng.integers(0, 3))):
        noise = (
            noise
            + np.roll(noise, 1, 0)
            + np.roll(noise, 1, 1)
            + np.roll(noise, -1, 0)
            + np.roll(noise, -1, 1)
        ) / 5.0
    img += noise * rng.uniform(2, 25)
    if rng.random() < 0.3:
        pos = int(rng.integers(side // 4, 3 * side // 4))
        step = rng.uniform(-50, 50)
        if rng.random() < 0.5:
            img[:, pos:] += step
        else:
            img[pos:, :] += step
    return GrayImage(np.clip(img, 0, 255).astype(np.uint8))


def synth_patches(seed: int, count: int, side: int = 64) -> list[GrayImage]:
    rng = np.random.default_rng(seed)
    return [synth_patch(rng, side) for _ in range(count)]


def write_pgm(img: GrayImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode()
    return header + img.pixels.tobytes()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
