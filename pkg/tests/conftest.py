"""Shared fixtures: layouts, fuzzed model parameters, and tiny asset bundles."""
from __future__ import annotations

import json

import numpy as np
import pytest

from engramnca.assets import Bundle, TargetImage, save_image
from engramnca.grid import ChannelLayout, GeneCode
from engramnca.models import init_model_params


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter) -> None:
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def std_layout() -> ChannelLayout:
    return ChannelLayout.standard()


@pytest.fixture
def meta_layout() -> ChannelLayout:
    return ChannelLayout(17, n_hidden=4, n_gene=8, n_meta=1)


@pytest.fixture
def variant_layout() -> ChannelLayout:
    return ChannelLayout(16, n_hidden=12, n_gene=0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


def fuzz_params(role: str, layout: ChannelLayout, hidden_units: int = 24,
                seed: int = 0, fire_rate: float = 0.5, padding: str = "zero"):
    """Model params with every weight randomized (w2 is zero-initialized by
    default, which would hide most of the network from behavioural tests)."""
    params = init_model_params(role, layout, hidden_units, rng=seed,
                               fire_rate=fire_rate, padding=padding)
    gen = np.random.default_rng(seed + 1000)
    params.w1.data[...] = gen.normal(0.0, 0.3, params.w1.shape).astype(np.float32)
    params.b1.data[...] = gen.normal(0.0, 0.05, params.b1.shape).astype(np.float32)
    params.w2.data[...] = gen.normal(0.0, 0.1, params.w2.shape).astype(np.float32)
    return params


def random_state(layout: ChannelLayout, batch: int, height: int, width: int,
                 seed: int = 0) -> np.ndarray:
    gen = np.random.default_rng(seed)
    state = gen.uniform(0.0, 1.0, (batch, height, width, layout.n_total))
    return state.astype(np.float32)


def disk_image(name: str, size: int, center: tuple[float, float], radius: float,
               color: tuple[float, float, float]) -> TargetImage:
    """Small premultiplied disk target for fast training smoke tests."""
    yy, xx = np.mgrid[0:size, 0:size]
    inside = (yy - center[0]) ** 2 + (xx - center[1]) ** 2 <= radius ** 2
    rgba = np.zeros((size, size, 4), dtype=np.float32)
    rgba[inside, 3] = 1.0
    for k in range(3):
        rgba[inside, k] = color[k]
    return TargetImage(name=name, rgba=rgba)


@pytest.fixture
def tiny_bundle() -> Bundle:
    """Two 12x12 primitives with one-hot codes; in-memory only."""
    a = disk_image("dot_red", 12, (6.0, 6.0), 3.0, (0.9, 0.1, 0.1))
    b = disk_image("dot_blue", 12, (6.0, 6.0), 3.5, (0.1, 0.2, 0.9))
    return Bundle(name="tiny", scheme="one_hot", grid_size=12,
                  primitives=((a, GeneCode.one_hot(0, 8)),
                              (b, GeneCode.one_hot(1, 8))))


def write_bundle_dir(root, bundle: Bundle) -> None:
    """Materialize an in-memory bundle in the on-disk layout load_bundle reads."""
    root.mkdir(parents=True, exist_ok=True)
    names = []
    codes = {}
    for img, code in bundle.primitives:
        save_image(img, root / f"{img.name}.png")
        names.append(img.name)
        codes[img.name] = code.as_string()
    manifest = {"names": names, "codes": codes,
                "grid_size": bundle.grid_size, "scheme": bundle.scheme}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1))
