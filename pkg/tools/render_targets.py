"""Render the target-image bundles into assets/.

Shapes are drawn at 4x resolution and box-downsampled for soft edges, then
written as straight-alpha PNGs (loaders premultiply). Part images within a
bundle have strictly disjoint supports so that a composite equals the
per-channel max of its parts.

Usage: python tools/render_targets.py [assets_dir]
"""
from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

SIZE = 30
SS = 4  # supersampling factor


def _canvas() -> Image.Image:
    return Image.new("RGBA", (SIZE * SS, SIZE * SS), (0, 0, 0, 0))


def _downsample(img: Image.Image) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float32) / 255.0
    h, w = SIZE, SIZE
    arr = arr.reshape(h, SS, w, SS, 4).mean(axis=(1, 3))
    return arr


def _save(arr: np.ndarray, path: Path) -> None:
    data = (np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(data, "RGBA").save(path)


def _regular_polygon(draw: ImageDraw.ImageDraw, center, radius, sides, rotation, fill):
    cx, cy = center
    pts = [(cx + radius * math.cos(rotation + 2 * math.pi * i / sides),
            cy + radius * math.sin(rotation + 2 * math.pi * i / sides))
           for i in range(sides)]
    draw.polygon(pts, fill=fill)


def render_polygons() -> dict[str, np.ndarray]:
    c = (SIZE * SS / 2, SIZE * SS / 2)
    r = 5.2 * SS
    shapes = {}
    img = _canvas()
    _regular_polygon(ImageDraw.Draw(img), c, r, 3, -math.pi / 2, (226, 82, 82, 255))
    shapes["triangle"] = _downsample(img)
    img = _canvas()
    _regular_polygon(ImageDraw.Draw(img), c, r * 0.92, 4, math.pi / 4, (87, 148, 236, 255))
    shapes["square"] = _downsample(img)
    img = _canvas()
    _regular_polygon(ImageDraw.Draw(img), c, r, 5, -math.pi / 2, (98, 186, 105, 255))
    shapes["pentagon"] = _downsample(img)
    return shapes


def render_lizard_parts() -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Four disjoint body parts; the full lizard is their per-channel max."""
    s = SS
    parts: dict[str, np.ndarray] = {}

    img = _canvas()
    d = ImageDraw.Draw(img)
    d.ellipse([10 * s, 12 * s, 20 * s, 19 * s], fill=(96, 176, 60, 255))
    parts["torso"] = _downsample(img)

    img = _canvas()
    d = ImageDraw.Draw(img)
    d.ellipse([19.6 * s, 10.5 * s, 25.4 * s, 15.5 * s], fill=(116, 196, 76, 255))
    d.ellipse([22.6 * s, 11.4 * s, 23.8 * s, 12.6 * s], fill=(20, 24, 20, 255))
    parts["head"] = _downsample(img)

    img = _canvas()
    d = ImageDraw.Draw(img)
    d.polygon([(10.4 * s, 13.6 * s), (10.4 * s, 17.4 * s), (3.4 * s, 20.6 * s),
               (4.4 * s, 16.2 * s)], fill=(84, 156, 52, 255))
    parts["tail"] = _downsample(img)

    img = _canvas()
    d = ImageDraw.Draw(img)
    for cx, cy in [(12.0, 11.0), (18.0, 11.0), (12.0, 20.4), (18.0, 20.4)]:
        d.ellipse([(cx - 1.25) * s, (cy - 1.75) * s, (cx + 1.25) * s, (cy + 1.75) * s],
                  fill=(72, 140, 48, 255))
    parts["legs"] = _downsample(img)

    order = ["torso", "head", "tail", "legs"]
    claimed = np.zeros((SIZE, SIZE), dtype=bool)
    for name in order:
        arr = parts[name]
        support = arr[..., 3] > 0
        arr[claimed & support] = 0.0
        claimed |= arr[..., 3] > 0
        parts[name] = arr

    full = np.zeros((SIZE, SIZE, 4), dtype=np.float32)
    for arr in parts.values():
        full = np.maximum(full, arr)
    return parts, full


def render_butterfly() -> np.ndarray:
    s = SS
    img = _canvas()
    d = ImageDraw.Draw(img)
    d.ellipse([6 * s, 8 * s, 14.4 * s, 16 * s], fill=(196, 110, 40, 255))
    d.ellipse([15.6 * s, 8 * s, 24 * s, 16 * s], fill=(196, 110, 40, 255))
    d.ellipse([7.6 * s, 16.4 * s, 13.6 * s, 22 * s], fill=(226, 150, 60, 255))
    d.ellipse([16.4 * s, 16.4 * s, 22.4 * s, 22 * s], fill=(226, 150, 60, 255))
    d.ellipse([13.8 * s, 9 * s, 16.2 * s, 21 * s], fill=(60, 40, 70, 255))
    return _downsample(img)


def render_lines() -> dict[str, np.ndarray]:
    s = SS
    lines = {}
    img = _canvas()
    ImageDraw.Draw(img).line([7 * s, 15 * s, 23 * s, 15 * s], fill=(230, 230, 90, 255),
                             width=int(1.6 * s))
    lines["bar_h"] = _downsample(img)
    img = _canvas()
    ImageDraw.Draw(img).line([15 * s, 7 * s, 15 * s, 23 * s], fill=(90, 230, 230, 255),
                             width=int(1.6 * s))
    lines["bar_v"] = _downsample(img)
    img = _canvas()
    ImageDraw.Draw(img).line([9 * s, 21 * s, 21 * s, 9 * s], fill=(230, 90, 230, 255),
                             width=int(1.6 * s))
    lines["bar_diag"] = _downsample(img)
    return lines


def render_cross(lines: dict[str, np.ndarray]) -> np.ndarray:
    """Composite motif: per-channel max union of the axis-aligned bars."""
    return np.maximum(lines["bar_h"], lines["bar_v"])


def write_bundle(root: Path, name: str, scheme: str,
                 entries: list[tuple[str, np.ndarray, str]]) -> None:
    bundle_dir = root / name
    bundle_dir.mkdir(parents=True, exist_ok=True)
    names, codes = [], {}
    for prim_name, arr, bits in entries:
        _save(arr, bundle_dir / f"{prim_name}.png")
        names.append(prim_name)
        codes[prim_name] = bits
    manifest = {"names": names, "codes": codes, "grid_size": SIZE, "scheme": scheme}
    (bundle_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def one_hot(i: int) -> str:
    bits = ["0"] * 8
    bits[i] = "1"
    return "".join(bits)


def binary(value: int) -> str:
    return format(value, "08b")


def main(assets_dir: str = "assets") -> None:
    root = Path(assets_dir)
    polygons = render_polygons()
    write_bundle(root, "polygons", "one_hot",
                 [(name, arr, one_hot(i)) for i, (name, arr) in enumerate(polygons.items())])

    parts, lizard = render_lizard_parts()
    write_bundle(root, "lizard_parts", "binary",
                 [(name, arr, binary(i + 1)) for i, (name, arr) in enumerate(parts.items())])

    lines = render_lines()
    write_bundle(root, "lines", "one_hot",
                 [(name, arr, one_hot(i)) for i, (name, arr) in enumerate(lines.items())])

    butterfly = render_butterfly()
    cross = render_cross(lines)
    write_bundle(root, "full", "binary", [
        ("lizard", lizard, binary(7)),
        ("butterfly", butterfly, binary(8)),
        ("cross", cross, binary(16)),
    ])
    print(f"wrote bundles under {root}/")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "assets")
