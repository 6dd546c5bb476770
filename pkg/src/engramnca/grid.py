"""Cell state grid, channel partition, seeds, alive masking and damage.

State is a dense H x W x N float32 array. Channels are partitioned into
four contiguous ranges: [visible | hidden | gene | meta]. The visible
range is always RGBA (alpha last), the gene and meta ranges are private
to each cell.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, CoordinateError, LayoutError

ALPHA_CHANNEL = 3
DEFAULT_ALIVE_THRESHOLD = 0.1
PADDING_MODES = ("zero", "toroidal")


@dataclass(frozen=True)
class ChannelLayout:
    """Partition of the N state channels into visible/hidden/gene/meta ranges."""

    n_total: int
    n_hidden: int
    n_gene: int
    n_meta: int = 0
    n_visible: int = 4

    def __post_init__(self) -> None:
        counts = (self.n_visible, self.n_hidden, self.n_gene, self.n_meta)
        if any(c < 0 for c in counts):
            raise LayoutError(f"negative channel count in {counts}")
        if self.n_visible != 4:
            raise LayoutError(f"visible range must be RGBA (4 channels), got {self.n_visible}")
        if sum(counts) != self.n_total:
            raise LayoutError(
                f"channel counts {counts} sum to {sum(counts)}, expected n_total={self.n_total}"
            )

    @classmethod
    def standard(cls, n_hidden: int = 4, n_gene: int = 8, n_meta: int = 0) -> "ChannelLayout":
        return cls(n_total=4 + n_hidden + n_gene + n_meta,
                   n_hidden=n_hidden, n_gene=n_gene, n_meta=n_meta)

    @property
    def visible(self) -> slice:
        return slice(0, self.n_visible)

    @property
    def hidden(self) -> slice:
        return slice(self.n_visible, self.n_visible + self.n_hidden)

    @property
    def gene(self) -> slice:
        start = self.n_visible + self.n_hidden
        return slice(start, start + self.n_gene)

    @property
    def meta(self) -> slice:
        return slice(self.n_total - self.n_meta, self.n_total)

    @property
    def public(self) -> slice:
        """Channels any neighbor may sense: visible + hidden."""
        return slice(0, self.n_visible + self.n_hidden)

    @property
    def private(self) -> slice:
        """Channels only the owning cell may read: gene + meta."""
        return slice(self.n_visible + self.n_hidden, self.n_total)

    def compatible_with(self, other: "ChannelLayout", ignore_meta: bool = False) -> bool:
        same_core = (self.n_visible == other.n_visible
                     and self.n_hidden == other.n_hidden
                     and self.n_gene == other.n_gene)
        return same_core if ignore_meta else (same_core and self.n_meta == other.n_meta)

    def to_dict(self) -> dict:
        return {"n_total": self.n_total, "n_visible": self.n_visible,
                "n_hidden": self.n_hidden, "n_gene": self.n_gene, "n_meta": self.n_meta}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelLayout":
        if d.get("n_visible", 4) != 4:
            raise LayoutError("visible range must be 4 channels")
        return cls(n_total=d["n_total"], n_hidden=d["n_hidden"],
                   n_gene=d["n_gene"], n_meta=d.get("n_meta", 0))


@dataclass(frozen=True)
class GeneCode:
    """Binary identity of one primitive: gene bits plus optional meta bits."""

    bits: tuple[int, ...]
    meta_bits: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        for b in (*self.bits, *self.meta_bits):
            if b not in (0, 1):
                raise LayoutError(f"gene code entries must be 0 or 1, got {b}")

    @classmethod
    def one_hot(cls, index: int, n_gene: int, meta_bits: Sequence[int] = ()) -> "GeneCode":
        if not 0 <= index < n_gene:
            raise LayoutError(f"one-hot index {index} out of range for {n_gene} gene bits")
        bits = tuple(1 if i == index else 0 for i in range(n_gene))
        return cls(bits, tuple(meta_bits))

    @classmethod
    def from_int(cls, value: int, n_gene: int, meta_bits: Sequence[int] = ()) -> "GeneCode":
        """Big-endian binary encoding: bit string reads left to right as gene[0..]."""
        if not 0 <= value < 2 ** n_gene:
            raise LayoutError(f"value {value} does not fit in {n_gene} gene bits")
        bits = tuple((value >> (n_gene - 1 - i)) & 1 for i in range(n_gene))
        return cls(bits, tuple(meta_bits))

    @classmethod
    def from_string(cls, s: str, meta: str = "") -> "GeneCode":
        return cls(tuple(int(c) for c in s), tuple(int(c) for c in meta))

    def as_string(self) -> str:
        return "".join(str(b) for b in self.bits)

    def gene_array(self, dtype=np.float32) -> np.ndarray:
        return np.asarray(self.bits, dtype=dtype)

    def meta_array(self, dtype=np.float32) -> np.ndarray:
        return np.asarray(self.meta_bits, dtype=dtype)

    def union(self, other: "GeneCode") -> "GeneCode":
        if len(other.bits) != len(self.bits) or len(other.meta_bits) != len(self.meta_bits):
            raise LayoutError("cannot mix codes of different lengths")
        return GeneCode(tuple(a | b for a, b in zip(self.bits, other.bits)),
                        tuple(a | b for a, b in zip(self.meta_bits, other.meta_bits)))


@dataclass
class CellGrid:
    """H x W x N state with its channel layout and a step counter."""

    layout: ChannelLayout
    state: np.ndarray
    step_counter: int = 0

    def __post_init__(self) -> None:
        self.state = np.asarray(self.state, dtype=np.float32)
        if self.state.ndim != 3 or self.state.shape[2] != self.layout.n_total:
            raise LayoutError(
                f"state shape {self.state.shape} does not match layout N={self.layout.n_total}"
            )

    @property
    def height(self) -> int:
        return self.state.shape[0]

    @property
    def width(self) -> int:
        return self.state.shape[1]

    @property
    def alpha(self) -> np.ndarray:
        return self.state[..., ALPHA_CHANNEL]

    def copy(self) -> "CellGrid":
        return CellGrid(self.layout, self.state.copy(), self.step_counter)


@dataclass(frozen=True)
class UpdateMasks:
    """Liveness gate and per-cell stochastic update gate for one sub-step."""

    alive: np.ndarray
    stochastic: np.ndarray
    fire_rate: float


def make_seed_grid(height: int, width: int, layout: ChannelLayout,
                   seeds: Sequence[tuple[int, int, GeneCode]] = ()) -> CellGrid:
    """All-zero grid except seed cells, which get alpha=1 and their gene/meta bits.

    Seed RGB and hidden channels stay zero: primitive identity enters only
    through the private channels.
    """
    state = np.zeros((height, width, layout.n_total), dtype=np.float32)
    for row, col, code in seeds:
        if not (0 <= row < height and 0 <= col < width):
            raise CoordinateError(f"seed ({row},{col}) outside {height}x{width} grid")
        if len(code.bits) != layout.n_gene:
            raise LayoutError(
                f"gene code has {len(code.bits)} bits, layout expects {layout.n_gene}")
        if len(code.meta_bits) != layout.n_meta:
            raise LayoutError(
                f"gene code has {len(code.meta_bits)} meta bits, layout expects {layout.n_meta}")
        state[row, col, ALPHA_CHANNEL] = 1.0
        state[row, col, layout.gene] = code.gene_array()
        if layout.n_meta:
            state[row, col, layout.meta] = code.meta_array()
    return CellGrid(layout, state)


def write_seed(state: np.ndarray, layout: ChannelLayout, row: int, col: int,
               code: GeneCode) -> None:
    """In-place seed stamp onto an existing state array (used by interventions)."""
    h, w = state.shape[-3], state.shape[-2]
    if not (0 <= row < h and 0 <= col < w):
        raise CoordinateError(f"seed ({row},{col}) outside {h}x{w} grid")
    if len(code.bits) != layout.n_gene or len(code.meta_bits) != layout.n_meta:
        raise LayoutError("gene code length does not match layout")
    state[..., row, col, ALPHA_CHANNEL] = 1.0
    state[..., row, col, layout.gene] = code.gene_array()
    if layout.n_meta:
        state[..., row, col, layout.meta] = code.meta_array()


def _neighborhood_max(alpha: np.ndarray, padding: str) -> np.ndarray:
    """3x3 max of alpha over the last two axes, boundary per padding mode."""
    if padding not in PADDING_MODES:
        raise ConfigError(f"unknown padding mode {padding!r}")
    mode = "wrap" if padding == "toroidal" else "constant"
    pad_width = [(0, 0)] * (alpha.ndim - 2) + [(1, 1), (1, 1)]
    padded = np.pad(alpha, pad_width, mode=mode)
    h, w = alpha.shape[-2], alpha.shape[-1]
    out = None
    for di in range(3):
        for dj in range(3):
            window = padded[..., di:di + h, dj:dj + w]
            out = window.copy() if out is None else np.maximum(out, window)
    return out


def alive_mask_from_alpha(alpha: np.ndarray, threshold: float = DEFAULT_ALIVE_THRESHOLD,
                          padding: str = "zero") -> np.ndarray:
    """Cell is alive iff the 3x3 neighborhood max of alpha strictly exceeds threshold.

    The threshold is cast to the state dtype first so that a grid filled with
    exactly the threshold value compares equal, not greater.
    """
    thr = alpha.dtype.type(threshold) if alpha.dtype.kind == "f" else threshold
    return _neighborhood_max(alpha, padding) > thr


def compute_alive_mask(grid: CellGrid, threshold: float = DEFAULT_ALIVE_THRESHOLD,
                       padding: str = "zero") -> np.ndarray:
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"alive threshold must be in (0,1), got {threshold}")
    return alive_mask_from_alpha(grid.alpha, threshold, padding)


def sample_stochastic_mask(height: int, width: int, fire_rate: float,
                           rng_seed: int | np.random.Generator,
                           batch: int | None = None) -> np.ndarray:
    """Bernoulli(fire_rate) mask, reproducible for a given seed or generator."""
    if not 0.0 < fire_rate <= 1.0:
        raise ConfigError(f"fire_rate must be in (0,1], got {fire_rate}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    shape = (height, width) if batch is None else (batch, height, width)
    return rng.random(shape, dtype=np.float32) < fire_rate


def damage_disk_mask(height: int, width: int, center: tuple[int, int],
                     radius: float) -> np.ndarray:
    rows = np.arange(height)[:, None] - center[0]
    cols = np.arange(width)[None, :] - center[1]
    return rows * rows + cols * cols <= radius * radius


def apply_damage(grid: CellGrid, center: tuple[int, int], radius: float) -> CellGrid:
    """Zero every channel of cells within Euclidean distance <= radius of center."""
    if radius <= 0:
        return grid.copy()
    mask = damage_disk_mask(grid.height, grid.width, center, radius)
    state = grid.state.copy()
    state[mask] = 0.0
    return CellGrid(grid.layout, state, grid.step_counter)


def zero_dead_public(state: np.ndarray, layout: ChannelLayout, alive: np.ndarray) -> np.ndarray:
    """Zero visible+hidden channels of dead cells (gene/meta are left untouched)."""
    out = state.copy()
    out[..., layout.public] *= alive[..., None].astype(out.dtype)
    return out


def is_valid_grid(grid: CellGrid, threshold: float = DEFAULT_ALIVE_THRESHOLD,
                  padding: str = "zero") -> bool:
    """Check the grid invariant: finite values, dead cells have zero public state."""
    if not np.all(np.isfinite(grid.state)):
        return False
    alive = compute_alive_mask(grid, threshold, padding)
    dead_public = grid.state[~alive][:, grid.layout.public]
    return not dead_public.size or not np.any(dead_public)


# ---------------------------------------------------------------------------
# Snapshot export: RGBA PNG and raw float32 blobs with a JSON sidecar.

def state_to_rgba_bytes(state: np.ndarray) -> bytes:
    """Clamp the visible channels to [0,1] and quantize to 8-bit RGBA bytes."""
    rgba = np.clip(state[..., :4], 0.0, 1.0)
    return (rgba * 255.0 + 0.5).astype(np.uint8).tobytes()


def save_png(grid: CellGrid, path) -> None:
    from PIL import Image

    data = state_to_rgba_bytes(grid.state)
    Image.frombytes("RGBA", (grid.width, grid.height), data).save(path)


def save_state_blob(grid: CellGrid, path_base) -> None:
    """Write <base>.bin (little-endian float32) and <base>.json sidecar."""
    base = str(path_base)
    grid.state.astype("<f4").tofile(base + ".bin")
    sidecar = {"H": grid.height, "W": grid.width, "N": grid.layout.n_total,
               "layout": grid.layout.to_dict(), "step_counter": grid.step_counter}
    with open(base + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2)


def load_state_blob(path_base) -> CellGrid:
    base = str(path_base)
    with open(base + ".json") as fh:
        sidecar = json.load(fh)
    layout = ChannelLayout.from_dict(sidecar["layout"])
    raw = np.fromfile(base + ".bin", dtype="<f4")
    expected = sidecar["H"] * sidecar["W"] * sidecar["N"]
    if raw.size != expected:
        raise LayoutError(f"blob holds {raw.size} floats, sidecar declares {expected}")
    state = raw.reshape(sidecar["H"], sidecar["W"], sidecar["N"])
    return CellGrid(layout, state, sidecar["step_counter"])
