"""Target images, primitive sets, gene-code assignment, and asset bundles.

All images are held as float32 RGBA in [0,1] with premultiplied alpha
(color <= alpha per pixel), matching the loss convention: a transparent
pixel is exactly zero on every channel.

Bundle layout on disk: assets/<bundle>/<name>.png plus manifest.json with
{names, codes, grid_size, scheme} (codes as bit strings, leftmost character
is gene channel 0). Frame sequences live as frame_0000.png … in their own
directory.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AssetError, CapacityError
from .grid import GeneCode


@dataclass(frozen=True)
class TargetImage:
    name: str
    rgba: np.ndarray  # (H, W, 4) float32, premultiplied

    @property
    def height(self) -> int:
        return self.rgba.shape[0]

    @property
    def width(self) -> int:
        return self.rgba.shape[1]


def premultiply(rgba: np.ndarray) -> np.ndarray:
    out = np.asarray(rgba, dtype=np.float32).copy()
    out[..., :3] *= out[..., 3:4]
    return out


def load_image(path, target_size: tuple[int, int] | None = None,
               resample: str = "nearest", allow_resize: bool = True) -> TargetImage:
    """Decode a PNG to premultiplied float RGBA, optionally resizing."""
    from PIL import Image

    path = Path(path)
    try:
        with Image.open(path) as img:
            img = img.convert("RGBA")
            if target_size is not None and (img.height, img.width) != target_size:
                if not allow_resize:
                    raise AssetError(
                        f"{path} is {img.height}x{img.width}, expected {target_size}")
                mode = Image.NEAREST if resample == "nearest" else Image.BILINEAR
                img = img.resize((target_size[1], target_size[0]), mode)
            raw = np.asarray(img, dtype=np.float32) / 255.0
    except FileNotFoundError as exc:
        raise AssetError(f"image not found: {path}") from exc
    except (OSError, SyntaxError) as exc:
        raise AssetError(f"cannot decode image {path}: {exc}") from exc
    return TargetImage(name=path.stem, rgba=premultiply(raw))


def save_image(image: TargetImage, path) -> None:
    """Write straight-alpha 8-bit PNG (un-premultiplies before quantizing)."""
    from PIL import Image

    rgba = np.clip(image.rgba, 0.0, 1.0).copy()
    alpha = rgba[..., 3:4]
    safe = np.where(alpha > 0, alpha, 1.0)
    rgba[..., :3] = np.clip(rgba[..., :3] / safe, 0.0, 1.0)
    data = (rgba * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(data, "RGBA").save(path)


def check_premultiplied(rgba: np.ndarray, tolerance: float = 1e-6) -> bool:
    return bool(np.all(rgba[..., :3] <= rgba[..., 3:4] + tolerance))


# ---------------------------------------------------------------------------
# Primitive sets and codes.

SCHEME_ONE_HOT = "one_hot"
SCHEME_BINARY = "binary"


def build_primitive_set(images: Sequence[TargetImage], scheme: str,
                        n_gene: int = 8) -> list[tuple[TargetImage, GeneCode]]:
    """Assign codes in list order: one_hot sets bit k for image k; binary
    counts up from 1 (code 0 is reserved — empty gene channels mean
    'no primitive', which is what every non-seed cell carries)."""
    k = len(images)
    if scheme == SCHEME_ONE_HOT:
        if k > n_gene:
            raise CapacityError(f"{k} one-hot primitives need {k} gene bits, have {n_gene}")
        codes = [GeneCode.one_hot(i, n_gene) for i in range(k)]
    elif scheme == SCHEME_BINARY:
        if k > 2 ** n_gene - 1:
            raise CapacityError(f"{k} primitives exceed {2 ** n_gene - 1} nonzero "
                                f"codes of {n_gene} bits")
        codes = [GeneCode.from_int(i + 1, n_gene) for i in range(k)]
    else:
        raise AssetError(f"unknown encoding scheme {scheme!r}")
    return list(zip(images, codes))


def mix_genes(code_a: GeneCode, code_b: GeneCode, mode: str = "union") -> GeneCode:
    if mode != "union":
        raise AssetError(f"unknown gene mixing mode {mode!r}")
    return code_a.union(code_b)


# ---------------------------------------------------------------------------
# Bundles.

@dataclass(frozen=True)
class Bundle:
    name: str
    scheme: str
    grid_size: int
    primitives: tuple[tuple[TargetImage, GeneCode], ...]

    def names(self) -> list[str]:
        return [img.name for img, _ in self.primitives]

    def get(self, name: str) -> tuple[TargetImage, GeneCode]:
        for img, code in self.primitives:
            if img.name == name:
                return img, code
        raise AssetError(f"bundle {self.name!r} has no primitive {name!r}")


BUNDLE_NAMES = ("polygons", "lizard_parts", "lines", "full")


def load_bundle(assets_dir, bundle: str) -> Bundle:
    root = Path(assets_dir) / bundle
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise AssetError(f"bundle {bundle!r}: missing {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    size = int(manifest["grid_size"])
    primitives = []
    for name in manifest["names"]:
        img = load_image(root / f"{name}.png", target_size=(size, size), allow_resize=False)
        bits = manifest["codes"][name]
        code = GeneCode.from_string(bits)
        primitives.append((img, code))
    _check_codes([c for _, c in primitives], bundle)
    return Bundle(name=bundle, scheme=manifest["scheme"], grid_size=size,
                  primitives=tuple(primitives))


def _check_codes(codes: Sequence[GeneCode], bundle: str) -> None:
    seen = set()
    for code in codes:
        key = code.bits
        if not any(key):
            raise AssetError(f"bundle {bundle!r} uses the reserved all-zero code")
        if key in seen:
            raise AssetError(f"bundle {bundle!r} has duplicate code {code.as_string()}")
        seen.add(key)


def load_frame_sequence(frames_dir, min_frames: int = 1) -> list[TargetImage]:
    root = Path(frames_dir)
    if not root.is_dir():
        raise AssetError(f"frame directory not found: {root}")
    paths = sorted(root.glob("frame_*.png"))
    if len(paths) < min_frames:
        raise AssetError(f"{root} holds {len(paths)} frames, need at least {min_frames}")
    frames = [load_image(p) for p in paths]
    first = frames[0].rgba.shape
    for f in frames[1:]:
        if f.rgba.shape != first:
            raise AssetError(f"frame {f.name} shape {f.rgba.shape} != {first}")
    return frames


def make_asset_bundles(assets_dir) -> dict[str, Bundle]:
    """Load and validate every experiment bundle; raises naming the culprit."""
    bundles = {}
    for name in BUNDLE_NAMES:
        bundles[name] = load_bundle(assets_dir, name)
    return bundles
