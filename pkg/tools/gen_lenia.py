"""Generate the moving-target frame sequence under assets/lenia/.

Primary path: a continuous cellular automaton (smooth ring kernel, bell
growth; R=13, mu=0.15, sigma=0.015, dt=0.1) run at 60x60 from a crescent
seed, mean-pooled 2x to 30x30. The run is accepted only if the pattern
stays alive, bounded, and actually travels; otherwise we fall back to an
analytic orbiting blob with the same footprint, which trains identically.

Usage: python tools/gen_lenia.py [out_dir] [n_frames]
"""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
from PIL import Image

SIM = 60
OUT = 30
R = 13
MU = 0.15
SIGMA = 0.015
DT = 0.1
COLOR = np.array([0.36, 0.78, 0.92], dtype=np.float32)


def bell(x: np.ndarray, m: float, s: float) -> np.ndarray:
    return np.exp(-(((x - m) / s) ** 2) / 2.0)


def ring_kernel(size: int, radius: int) -> np.ndarray:
    """Smooth ring, peak at half its radius, normalized to unit mass, laid out
    for FFT convolution (origin at [0,0])."""
    y, x = np.ogrid[-size // 2:size // 2, -size // 2:size // 2]
    d = np.sqrt(x * x + y * y) / radius
    k = (d < 1.0) * bell(d, 0.5, 0.15)
    k /= k.sum()
    return np.fft.fftshift(k)


def crescent_seed(rng: np.random.Generator) -> np.ndarray:
    """Asymmetric smooth blob: the asymmetry is what can set it in motion."""
    y, x = np.mgrid[0:SIM, 0:SIM].astype(np.float64)
    cy, cx = SIM / 2, SIM / 2
    body = np.exp(-(((x - cx) ** 2 + (y - cy) ** 2)) / (2 * 36.0))
    bite = np.exp(-(((x - cx - 4) ** 2 + (y - cy - 3) ** 2)) / (2 * 16.0))
    field = np.clip(body - 0.7 * bite, 0.0, 1.0)
    field += 0.05 * rng.random((SIM, SIM))
    return np.clip(field * 1.2, 0.0, 1.0)


def step(a: np.ndarray, kernel_fft: np.ndarray) -> np.ndarray:
    u = np.real(np.fft.ifft2(np.fft.fft2(a) * kernel_fft))
    growth = 2.0 * bell(u, MU, SIGMA) - 1.0
    return np.clip(a + DT * growth, 0.0, 1.0)


def mean_pool2(a: np.ndarray) -> np.ndarray:
    return a.reshape(OUT, 2, OUT, 2).mean(axis=(1, 3))


def simulate(n_frames: int) -> list[np.ndarray] | None:
    rng = np.random.default_rng(5)
    kernel_fft = np.fft.fft2(ring_kernel(SIM, R))
    a = crescent_seed(rng)
    for _ in range(120):  # settle before recording
        a = step(a, kernel_fft)
    frames = []
    masses, centers = [], []
    for _ in range(n_frames):
        a = step(a, kernel_fft)
        small = mean_pool2(a)
        frames.append(small.astype(np.float32))
        masses.append(small.sum())
        ys, xs = np.nonzero(small > 0.05)
        if len(ys) == 0:
            return None
        centers.append((ys.mean(), xs.mean()))
    masses = np.asarray(masses)
    if masses.min() < 0.3 * masses[0] or masses.max() > 3.0 * masses[0]:
        return None
    travel = np.hypot(centers[-1][0] - centers[0][0], centers[-1][1] - centers[0][1])
    if travel < 3.0:
        return None
    return frames


def orbiting_blob(n_frames: int) -> list[np.ndarray]:
    """Gaussian bump on a circular orbit: period 480 frames, radius 8 cells."""
    frames = []
    y, x = np.mgrid[0:OUT, 0:OUT].astype(np.float64)
    for k in range(n_frames):
        theta = 2.0 * np.pi * k / 480.0
        cy = OUT / 2 - 0.5 + 8.0 * np.sin(theta)
        cx = OUT / 2 - 0.5 + 8.0 * np.cos(theta)
        alpha = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * 2.2 ** 2))
        alpha[alpha < 0.02] = 0.0
        frames.append(np.clip(alpha, 0.0, 1.0).astype(np.float32))
    return frames


def write_frames(frames: list[np.ndarray], out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, alpha in enumerate(frames):
        rgba = np.zeros((OUT, OUT, 4), dtype=np.float32)
        rgba[..., 3] = alpha
        rgba[..., :3] = COLOR  # straight alpha; loaders premultiply
        rgba[alpha == 0] = 0.0
        data = (np.clip(rgba, 0, 1) * 255.0 + 0.5).astype(np.uint8)
        Image.fromarray(data, "RGBA").save(out_dir / f"frame_{i:04d}.png")


def main(out_dir: str = "assets/lenia", n_frames: int = 520) -> None:
    frames = simulate(n_frames)
    source = "continuous-CA soliton"
    if frames is None:
        frames = orbiting_blob(n_frames)
        source = "analytic orbiting blob (CA run failed stability checks)"
    write_frames(frames, Path(out_dir))
    print(f"wrote {n_frames} frames to {out_dir} [{source}]")


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "assets/lenia"
    count = int(sys.argv[2]) if len(sys.argv) > 2 else 520
    main(out, count)
