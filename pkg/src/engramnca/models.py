"""Cellular-automaton update rules.

Five step functions, all pure maps from a batched state (B,H,W,N) to the
next state:

- gene_ca_step: updates visible+hidden channels, conditioned on the cell's
  own gene bits; gene and meta channels pass through untouched.
- gene_prop_ca_step: updates only gene channels; visible, hidden and meta
  pass through bitwise.
- ensemble_step: one global tick — a gene-CA sub-step produces an
  intermediate state, then a gene-propagation sub-step perceives that
  intermediate and updates genes. Each sub-step draws its own update mask
  and fires only on ticks divisible by its rate divisor.
- baseline_step: classic CA, all channels sensed and updated.
- variant_step: the channel-privatization ablation family (dummy input,
  masked features, reduced state), sharing one parameter shape.

Every step function takes an `ops` namespace — `rawops` for plain-array
inference (default) or `autodiff` for recorded, differentiable passes — and
runs the identical arithmetic in both.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rawops
from .autodiff import Tensor, parameter
from .errors import ConfigError, LayoutError, ShapeError
from .grid import (ALPHA_CHANNEL, DEFAULT_ALIVE_THRESHOLD, ChannelLayout, UpdateMasks,
                   alive_mask_from_alpha, sample_stochastic_mask)

ROLE_GENE = "gene_ca"
ROLE_PROP = "gene_prop_ca"
ROLE_BASELINE = "baseline"
ROLES = (ROLE_GENE, ROLE_PROP, ROLE_BASELINE)

VARIANT_KINDS = ("dummy_vca", "masked_ca", "reduced_ca")
PRIVATIZATION_LEVELS = (0, 4, 8, 12)

STENCILS: dict[str, np.ndarray] = {
    "identity": np.array([[0, 0, 0],
                          [0, 1, 0],
                          [0, 0, 0]], dtype=np.float32),
    "sobel_x": np.array([[-1, 0, 1],
                         [-2, 0, 2],
                         [-1, 0, 1]], dtype=np.float32) / 8.0,
    "sobel_y": np.array([[-1, -2, -1],
                         [0, 0, 0],
                         [1, 2, 1]], dtype=np.float32) / 8.0,
    "laplacian": np.array([[1, 2, 1],
                           [2, -12, 2],
                           [1, 2, 1]], dtype=np.float32),
}
STENCIL_ORDER = ("identity", "sobel_x", "sobel_y", "laplacian")


def stencil_stack(names: Sequence[str] = STENCIL_ORDER) -> np.ndarray:
    unknown = [n for n in names if n not in STENCILS]
    if unknown:
        raise ConfigError(f"unknown stencil name(s) {unknown}, have {list(STENCILS)}")
    return np.stack([STENCILS[n] for n in names]).astype(np.float32)


@dataclass(frozen=True)
class PerceptionConfig:
    """What a model senses: stencils over a public range plus a private feed."""

    stencils: tuple[str, ...]
    sensed: slice
    private_feed: slice | None

    def dim(self) -> int:
        sensed_width = self.sensed.stop - self.sensed.start
        private_width = 0
        if self.private_feed is not None:
            private_width = self.private_feed.stop - self.private_feed.start
        return len(self.stencils) * sensed_width + private_width


def perception_config_for(role: str, layout: ChannelLayout) -> PerceptionConfig:
    if role == ROLE_GENE:
        return PerceptionConfig(STENCIL_ORDER, layout.public, layout.gene)
    if role == ROLE_PROP:
        return PerceptionConfig(STENCIL_ORDER, layout.public, layout.private)
    if role == ROLE_BASELINE:
        return PerceptionConfig(STENCIL_ORDER, slice(0, layout.n_total), None)
    raise ConfigError(f"unknown model role {role!r}")


def out_channels_for(role: str, layout: ChannelLayout) -> int:
    if role == ROLE_GENE:
        return layout.n_visible + layout.n_hidden
    if role == ROLE_PROP:
        return layout.n_gene
    if role == ROLE_BASELINE:
        return layout.n_total
    raise ConfigError(f"unknown model role {role!r}")


@dataclass
class ModelParams:
    """Two dense layers; the second carries no bias and starts at zero."""

    role: str
    layout: ChannelLayout
    hidden_units: int
    w1: Tensor
    b1: Tensor
    w2: Tensor
    fire_rate: float = 0.5
    padding: str = "zero"

    def named(self) -> dict[str, Tensor]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2}

    def count_params(self) -> int:
        return sum(int(t.data.size) for t in self.named().values())

    def freeze(self) -> "ModelParams":
        for t in self.named().values():
            t.requires_grad = False
        return self

    @property
    def frozen(self) -> bool:
        return not any(t.requires_grad for t in self.named().values())


def init_model_params(role: str, layout: ChannelLayout, hidden_units: int,
                      rng: int | np.random.Generator = 0,
                      fire_rate: float = 0.5, padding: str = "zero") -> ModelParams:
    """Fan-in uniform first layer, zero bias, zero second layer.

    Zero w2 makes the initial CA a do-nothing map, so freshly initialized
    models are stable by construction.
    """
    if role not in ROLES:
        raise ConfigError(f"unknown model role {role!r}")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    pdim = perception_config_for(role, layout).dim()
    out = out_channels_for(role, layout)
    bound = 1.0 / np.sqrt(pdim)
    w1 = gen.uniform(-bound, bound, size=(hidden_units, pdim)).astype(np.float32)
    return ModelParams(
        role=role, layout=layout, hidden_units=hidden_units,
        w1=parameter(w1, "w1"),
        b1=parameter(np.zeros(hidden_units, dtype=np.float32), "b1"),
        w2=parameter(np.zeros((out, hidden_units), dtype=np.float32), "w2"),
        fire_rate=fire_rate, padding=padding)


def count_params(params: ModelParams) -> int:
    return params.count_params()


def matched_baseline_hidden(target_param_count: int, layout: ChannelLayout) -> tuple[int, int]:
    """Baseline width whose parameter count comes nearest the target.

    Returns (hidden_units, residual = baseline_count - target).
    """
    pdim = perception_config_for(ROLE_BASELINE, layout).dim()
    out = layout.n_total
    per_unit = pdim + 1 + out
    best = max(1, round(target_param_count / per_unit))
    candidates = [best - 1, best, best + 1]
    best_h = min((h for h in candidates if h >= 1),
                 key=lambda h: abs(h * per_unit - target_param_count))
    return best_h, best_h * per_unit - target_param_count


# ---------------------------------------------------------------------------
# Mask plumbing.

def _state_array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def draw_masks(state, layout: ChannelLayout, fire_rate: float,
               rng: np.random.Generator,
               threshold: float = DEFAULT_ALIVE_THRESHOLD,
               padding: str = "zero") -> UpdateMasks:
    """Alive mask from the pre-update alpha; fresh Bernoulli update mask."""
    arr = _state_array(state)
    alive = alive_mask_from_alpha(arr[..., ALPHA_CHANNEL], threshold, padding)
    b, h, w = arr.shape[0], arr.shape[1], arr.shape[2]
    stochastic = sample_stochastic_mask(h, w, fire_rate, rng, batch=b)
    return UpdateMasks(alive=alive, stochastic=stochastic, fire_rate=fire_rate)


def _gate(masks: UpdateMasks) -> np.ndarray:
    """Combined update gate u·l, ready to broadcast over channels."""
    return (masks.stochastic & masks.alive)[..., None]


def _check_role(params: ModelParams, expected: str) -> None:
    if params.role != expected:
        raise ConfigError(f"model role {params.role!r} used where {expected!r} is required")


def _check_batched(x) -> None:
    if _state_array(x).ndim != 4:
        raise ShapeError(f"step functions take (B,H,W,N) states, got {_state_array(x).shape}")


def _mlp(feats, params: ModelParams, ops):
    hidden = ops.relu(ops.pointwise_dense(feats, ops.param(params.w1), ops.param(params.b1)))
    return ops.pointwise_dense(hidden, ops.param(params.w2))


def perceive(x, config: PerceptionConfig, padding: str = "zero", ops=rawops):
    """Stencil responses over the sensed range, then the cell's own private feed."""
    kern = stencil_stack(config.stencils)
    sensed = ops.channel_slice(x, config.sensed)
    blocks = ops.depthwise_stencil(sensed, kern, padding)
    if config.private_feed is None or config.private_feed.stop == config.private_feed.start:
        return blocks
    return ops.channel_concat([blocks, ops.channel_slice(x, config.private_feed)])


# ---------------------------------------------------------------------------
# Step functions.

def gene_ca_step(x, params: ModelParams, masks: UpdateMasks, grid_layout: ChannelLayout,
                 padding: str = "zero", ops=rawops):
    """Additive update of visible+hidden, gated by u·l; private channels cloned.

    Cells dead per the pre-update alive mask get their public channels zeroed;
    their private channels persist, so identity written into a cell survives
    local death and regrowth.
    """
    _check_role(params, ROLE_GENE)
    _check_batched(x)
    if not params.layout.compatible_with(grid_layout, ignore_meta=True):
        raise LayoutError(f"model layout {params.layout.to_dict()} incompatible "
                          f"with grid layout {grid_layout.to_dict()}")
    cfg = PerceptionConfig(STENCIL_ORDER, grid_layout.public, grid_layout.gene)
    feats = perceive(x, cfg, padding, ops)
    delta = _mlp(feats, params, ops)

    public = ops.channel_slice(x, grid_layout.public)
    updated = ops.add(public, ops.hadamard_mask(delta, _gate(masks)))
    new_public = ops.hadamard_mask(updated, masks.alive[..., None])
    return ops.channel_concat([new_public, ops.channel_slice(x, grid_layout.private)])


def gene_prop_ca_step(x, params: ModelParams, masks: UpdateMasks,
                      grid_layout: ChannelLayout, padding: str = "zero", ops=rawops):
    """Additive gene update gated by u·l; every other channel passes bitwise."""
    _check_role(params, ROLE_PROP)
    _check_batched(x)
    if not params.layout.compatible_with(grid_layout):
        raise LayoutError(f"model layout {params.layout.to_dict()} incompatible "
                          f"with grid layout {grid_layout.to_dict()}")
    feats = perceive(x, perception_config_for(ROLE_PROP, grid_layout), padding, ops)
    delta = _mlp(feats, params, ops)

    gene = ops.channel_slice(x, grid_layout.gene)
    new_gene = ops.add(gene, ops.hadamard_mask(delta, _gate(masks)))
    parts = [ops.channel_slice(x, grid_layout.public), new_gene]
    if grid_layout.n_meta:
        parts.append(ops.channel_slice(x, grid_layout.meta))
    return ops.channel_concat(parts)


def ensemble_step(x, gene_params: ModelParams, prop_params: ModelParams | None,
                  grid_layout: ChannelLayout, tick: int, rng: np.random.Generator,
                  rates: tuple[int, int] = (1, 1),
                  threshold: float = DEFAULT_ALIVE_THRESHOLD,
                  padding: str = "zero", ops=rawops, prop_enabled: bool = True):
    """One global tick: gene-CA sub-step, then gene-propagation on the result.

    Ticks count from 1. A sub-step fires only when tick % its divisor == 0,
    and each firing sub-step draws a fresh stochastic mask and recomputes the
    alive mask from its own pre-update state.
    """
    gene_every, prop_every = rates
    if gene_every < 1 or prop_every < 1:
        raise ConfigError(f"rate divisors must be >= 1, got {rates}")
    if tick < 1:
        raise ConfigError(f"ticks count from 1, got {tick}")

    state = x
    if tick % gene_every == 0:
        masks = draw_masks(state, grid_layout, gene_params.fire_rate, rng, threshold, padding)
        state = gene_ca_step(state, gene_params, masks, grid_layout, padding, ops)
    if prop_enabled and prop_params is not None and tick % prop_every == 0:
        masks = draw_masks(state, grid_layout, prop_params.fire_rate, rng, threshold, padding)
        state = gene_prop_ca_step(state, prop_params, masks, grid_layout, padding, ops)
    return state


def baseline_step(x, params: ModelParams, masks: UpdateMasks, grid_layout: ChannelLayout,
                  padding: str = "zero", ops=rawops):
    """Classic CA update: perceive all channels, update all channels."""
    _check_role(params, ROLE_BASELINE)
    _check_batched(x)
    if params.layout.n_total != grid_layout.n_total:
        raise LayoutError(f"baseline expects {params.layout.n_total} channels, "
                          f"grid has {grid_layout.n_total}")
    feats = perceive(x, perception_config_for(ROLE_BASELINE, grid_layout), padding, ops)
    delta = _mlp(feats, params, ops)
    updated = ops.add(x, ops.hadamard_mask(delta, _gate(masks)))
    return ops.hadamard_mask(updated, masks.alive[..., None])


# ---------------------------------------------------------------------------
# Channel-privatization ablation family.

@dataclass(frozen=True)
class VariantKind:
    """Ablation flavor plus how many channels are withheld from neighbors.

    Privatized channels come off the top of the channel range; all three
    flavors define the identical function at privatized=0.
    """

    kind: str
    privatized: int

    def __post_init__(self) -> None:
        if self.kind not in VARIANT_KINDS:
            raise ConfigError(f"unknown variant kind {self.kind!r}")
        if self.privatized not in PRIVATIZATION_LEVELS:
            raise ConfigError(
                f"privatized must be one of {PRIVATIZATION_LEVELS}, got {self.privatized}")


def variant_step(x, params: ModelParams, variant: VariantKind, masks: UpdateMasks,
                 grid_layout: ChannelLayout, padding: str = "zero", ops=rawops):
    """One update step of an ablation model on a 16-channel grid.

    dummy_vca: the identity response sees the cell's full state, but the
    neighborhood stencils run on a state whose privatized channels are
    zeroed (neighbors hand over a dummy vector).
    masked_ca: stencils run on the full state; afterwards every feature at a
    privatized position — identity included — is zeroed.
    reduced_ca: stencils run on the truncated public state; the feature
    blocks are re-expanded with zeros at the privatized positions.

    All flavors: the update writes only non-privatized channels.
    """
    _check_role(params, ROLE_BASELINE)
    _check_batched(x)
    n = grid_layout.n_total
    if n != 16:
        raise ConfigError(f"variant models are defined on 16-channel grids, got {n}")
    p = variant.privatized
    kern = stencil_stack()
    n_kernels = kern.shape[0]
    kept = n - p

    channel_mask = np.ones(n, dtype=np.float32)
    channel_mask[kept:] = 0.0

    if variant.kind == "dummy_vca":
        zeroed = ops.hadamard_mask(x, channel_mask)
        rest = ops.depthwise_stencil(zeroed, kern[1:], padding)
        feats = ops.channel_concat([x, rest])
    elif variant.kind == "masked_ca":
        full = ops.depthwise_stencil(x, kern, padding)
        feats = ops.hadamard_mask(full, np.tile(channel_mask, n_kernels))
    else:  # reduced_ca
        truncated = ops.channel_slice(x, slice(0, kept))
        blocks = ops.depthwise_stencil(truncated, kern, padding)
        indices = [b * n + c for b in range(n_kernels) for c in range(kept)]
        feats = ops.channel_scatter(blocks, n_kernels * n, indices)

    delta = ops.hadamard_mask(_mlp(feats, params, ops), channel_mask)
    updated = ops.add(x, ops.hadamard_mask(delta, _gate(masks)))
    return ops.hadamard_mask(updated, masks.alive[..., None])


def init_variant_params(hidden_units: int = 96, rng: int | np.random.Generator = 0,
                        fire_rate: float = 0.5, padding: str = "zero") -> ModelParams:
    """Shared parameter shape for all variant kinds: 64 features in, 16 out."""
    layout = ChannelLayout(n_total=16, n_hidden=12, n_gene=0, n_meta=0)
    return init_model_params(ROLE_BASELINE, layout, hidden_units, rng, fire_rate, padding)
