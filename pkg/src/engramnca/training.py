"""Training loops: pooled multi-primitive growth, frozen-backbone gene
propagation, moving-target curriculum, and the privatization sweep.

All rollouts run through one driver, `checkpointed_rollout`: a no-gradient
forward pass records every stochastic mask and a sparse set of state
checkpoints, then gradient segments are recomputed backwards with the stored
masks, splicing each segment's incoming state gradient via a dot-product
term. With segment = total steps this degenerates to ordinary full-graph
BPTT; with shorter segments it bounds memory for long rollouts.

Determinism: a single numpy Generator, seeded from the run config, drives
parameter init, pool sampling, rollout lengths and update masks, in a fixed
order. Replaying a config reproduces metrics byte for byte.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import rawops
from .assets import Bundle, TargetImage, load_bundle, load_frame_sequence
from .autodiff import Tape, Tensor
from .errors import (ConfigError, FrozenParameterError, NumericError)
from .grid import (ChannelLayout, GeneCode, UpdateMasks, alive_mask_from_alpha,
                   make_seed_grid, damage_disk_mask, sample_stochastic_mask)
from .models import (ROLE_BASELINE, ROLE_GENE, ROLE_PROP, ModelParams, VariantKind,
                     baseline_step, draw_masks, gene_ca_step, gene_prop_ca_step,
                     init_model_params, init_variant_params, matched_baseline_hidden,
                     variant_step)
from .persistence import MetricsWriter, RunConfig, save_checkpoint

VISIBLE = slice(0, 4)


# ---------------------------------------------------------------------------
# Optimizer.

def normalize_gradients(tensors: Sequence[Tensor], eps: float = 1e-8) -> None:
    """Scale each parameter's gradient to (near) unit L2 norm, independently."""
    for t in tensors:
        if t.grad is not None:
            norm = float(np.sqrt((t.grad.astype(np.float64) ** 2).sum()))
            t.grad = (t.grad / (norm + eps)).astype(t.data.dtype)


class Adam:
    """Standard bias-corrected adaptive optimizer over parameter leaves."""

    def __init__(self, tensors: Sequence[Tensor], lr: float = 2e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        for t in tensors:
            if not t.requires_grad:
                raise FrozenParameterError(
                    f"cannot build an optimizer over frozen parameter {t.name or 'tensor'!r}")
        self.tensors = list(tensors)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self._m = [np.zeros_like(t.data) for t in self.tensors]
        self._v = [np.zeros_like(t.data) for t in self.tensors]

    def step(self) -> None:
        self.step_count += 1
        b1t = 1.0 - self.beta1 ** self.step_count
        b2t = 1.0 - self.beta2 ** self.step_count
        for t, m, v in zip(self.tensors, self._m, self._v):
            g = t.grad if t.grad is not None else np.zeros_like(t.data)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / b1t) / (np.sqrt(v / b2t) + self.eps)
            t.data = t.data - (t.data.dtype.type(self.lr)) * update.astype(t.data.dtype)

    def zero_grad(self) -> None:
        for t in self.tensors:
            t.grad = None


# ---------------------------------------------------------------------------
# Steppers: uniform draw/apply interface over one global tick.

class GeneStepper:
    def __init__(self, params: ModelParams, layout: ChannelLayout,
                 threshold: float, padding: str):
        self.params, self.layout = params, layout
        self.threshold, self.padding = threshold, padding

    def draw(self, state: np.ndarray, tick: int, rng: np.random.Generator):
        b, h, w = state.shape[:3]
        return sample_stochastic_mask(h, w, self.params.fire_rate, rng, batch=b)

    def apply(self, x, tick: int, stoch, ops):
        masks = self._masks(x, stoch)
        return gene_ca_step(x, self.params, masks, self.layout, self.padding, ops)

    def _masks(self, x, stoch) -> UpdateMasks:
        arr = x.data if isinstance(x, Tensor) else x
        alive = alive_mask_from_alpha(arr[..., 3], self.threshold, self.padding)
        return UpdateMasks(alive=alive, stochastic=stoch, fire_rate=self.params.fire_rate)


class PropStepper(GeneStepper):
    def apply(self, x, tick: int, stoch, ops):
        masks = self._masks(x, stoch)
        return gene_prop_ca_step(x, self.params, masks, self.layout, self.padding, ops)


class BaselineStepper(GeneStepper):
    def apply(self, x, tick: int, stoch, ops):
        masks = self._masks(x, stoch)
        return baseline_step(x, self.params, masks, self.layout, self.padding, ops)


class VariantStepper(GeneStepper):
    def __init__(self, params: ModelParams, variant: VariantKind, layout: ChannelLayout,
                 threshold: float, padding: str):
        super().__init__(params, layout, threshold, padding)
        self.variant = variant

    def apply(self, x, tick: int, stoch, ops):
        masks = self._masks(x, stoch)
        return variant_step(x, self.params, self.variant, masks, self.layout,
                            self.padding, ops)


class EnsembleStepper:
    """Gene sub-step then propagation sub-step, each with its own rate divisor."""

    def __init__(self, gene_params: ModelParams, prop_params: ModelParams | None,
                 layout: ChannelLayout, rates: tuple[int, int],
                 threshold: float, padding: str, prop_enabled: bool = True):
        self.gene_params, self.prop_params = gene_params, prop_params
        self.layout, self.rates = layout, rates
        self.threshold, self.padding = threshold, padding
        self.prop_enabled = prop_enabled

    def draw(self, state: np.ndarray, tick: int, rng: np.random.Generator):
        b, h, w = state.shape[:3]
        gene_every, prop_every = self.rates
        u_gene = u_prop = None
        if tick % gene_every == 0:
            u_gene = sample_stochastic_mask(h, w, self.gene_params.fire_rate, rng, batch=b)
        if self.prop_enabled and self.prop_params is not None and tick % prop_every == 0:
            u_prop = sample_stochastic_mask(h, w, self.prop_params.fire_rate, rng, batch=b)
        return (u_gene, u_prop)

    def apply(self, x, tick: int, blob, ops):
        u_gene, u_prop = blob
        if u_gene is not None:
            masks = self._masks(x, u_gene, self.gene_params.fire_rate)
            x = gene_ca_step(x, self.gene_params, masks, self.layout, self.padding, ops)
        if u_prop is not None:
            masks = self._masks(x, u_prop, self.prop_params.fire_rate)
            x = gene_prop_ca_step(x, self.prop_params, masks, self.layout, self.padding, ops)
        return x

    def _masks(self, x, stoch, fire_rate) -> UpdateMasks:
        arr = x.data if isinstance(x, Tensor) else x
        alive = alive_mask_from_alpha(arr[..., 3], self.threshold, self.padding)
        return UpdateMasks(alive=alive, stochastic=stoch, fire_rate=fire_rate)


# ---------------------------------------------------------------------------
# Rollout driver.

@dataclass
class RolloutResult:
    final: np.ndarray
    objective: float
    term_values: dict[int, float]


def checkpointed_rollout(x0: np.ndarray, stepper, steps: int,
                         losses: dict[int, tuple[np.ndarray, float]],
                         rng: np.random.Generator,
                         segment: int | None = None) -> RolloutResult:
    """Roll `steps` ticks from x0; attach weighted RGBA losses at given ticks.

    Gradients (if any parameter requires them) are accumulated into the
    stepper's parameters. The returned final state comes from the forward
    pass and is bitwise identical to the recomputed one.
    """
    if any(t < 1 or t > steps for t in losses):
        raise ConfigError("loss ticks must lie in [1, steps]")
    if segment is None or segment <= 0 or segment > steps:
        segment = steps

    objective = 0.0
    term_values: dict[int, float] = {}

    def attach_loss(x, t: int, terms: list) -> None:
        nonlocal objective
        if t in losses:
            target, weight = losses[t]
            mse = ad.pixelwise_mse(x, target, channels=VISIBLE)
            term_values[t] = float(mse.data)
            objective += weight * float(mse.data)
            terms.append(ad.scale(mse, weight) if weight != 1.0 else mse)

    if segment >= steps:
        # Single segment: run the tape directly, drawing masks inline in the
        # same order the two-phase path would, so results match it bitwise.
        tape = Tape()
        x = tape.leaf(np.asarray(x0), name="state@0")
        terms: list = []
        for t in range(1, steps + 1):
            blob = stepper.draw(x.data, t, rng)
            x = stepper.apply(x, t, blob, ad)
            attach_loss(x, t, terms)
        final = x.data
        if not np.all(np.isfinite(final)):
            raise NumericError("rollout produced non-finite state values")
        if terms:
            tape.backward(ad.sum_tensors(terms))
        if not np.isfinite(objective):
            raise NumericError("training objective is not finite")
        return RolloutResult(final=final, objective=objective, term_values=term_values)

    x = np.asarray(x0)
    checkpoints: dict[int, np.ndarray] = {0: x}
    blobs = []
    for t in range(1, steps + 1):
        blob = stepper.draw(x, t, rng)
        blobs.append(blob)
        x = stepper.apply(x, t, blob, rawops)
        if t % segment == 0 and t < steps:
            checkpoints[t] = x
    final = x
    if not np.all(np.isfinite(final)):
        raise NumericError("rollout produced non-finite state values")

    starts = sorted(checkpoints)
    segments = [(s, min(s + segment, steps)) for s in starts]
    carry: np.ndarray | None = None
    for s, e in reversed(segments):
        tape = Tape()
        xin = tape.leaf(checkpoints[s], name=f"state@{s}")
        x = xin
        terms = []
        for t in range(s + 1, e + 1):
            x = stepper.apply(x, t, blobs[t - 1], ad)
            attach_loss(x, t, terms)
        if carry is not None:
            terms.append(ad.weighted_sum(x, carry))
        if not terms:
            continue
        root = ad.sum_tensors(terms)
        tape.backward(root)
        carry = xin.grad

    if not np.isfinite(objective):
        raise NumericError("training objective is not finite")
    return RolloutResult(final=final, objective=objective, term_values=term_values)


def rollout_states(x0: np.ndarray, stepper, steps: int, rng: np.random.Generator,
                   record_at: Sequence[int] = ()) -> dict[int, np.ndarray]:
    """No-gradient rollout; returns {tick: state} for requested ticks plus the final."""
    wanted = set(record_at)
    out: dict[int, np.ndarray] = {}
    x = np.asarray(x0)
    if 0 in wanted:
        out[0] = x
    for t in range(1, steps + 1):
        x = stepper.apply(x, t, stepper.draw(x, t, rng), rawops)
        if t in wanted or t == steps:
            out[t] = x
    return out


# ---------------------------------------------------------------------------
# Pools.

@dataclass
class PrimitivePool:
    name: str
    code: GeneCode
    target: np.ndarray              # (H, W, 4) premultiplied RGBA
    seed_state: np.ndarray          # (H, W, N)
    states: np.ndarray              # (pool_size, H, W, N)

    @classmethod
    def build(cls, name: str, code: GeneCode, target: np.ndarray,
              layout: ChannelLayout, pool_size: int) -> "PrimitivePool":
        h, w = target.shape[:2]
        seed = make_seed_grid(h, w, layout, [(h // 2, w // 2, code)]).state
        states = np.repeat(seed[None], pool_size, axis=0).copy()
        return cls(name=name, code=code, target=np.asarray(target, np.float32),
                   seed_state=seed, states=states)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(self.states.shape[0], size=count, replace=False)

    def write_back(self, indices: np.ndarray, finals: np.ndarray,
                   sample_losses: np.ndarray) -> None:
        """Store rollout results, then reseed the worst sampled slot."""
        self.states[indices] = finals
        worst = int(np.argmax(sample_losses))
        self.states[indices[worst]] = self.seed_state


def per_sample_rgba_mse(states: np.ndarray, targets: np.ndarray) -> np.ndarray:
    diff = states[..., :4] - targets
    return (diff * diff).reshape(diff.shape[0], -1).mean(axis=1)


def rescue_dead_states(pool: PrimitivePool, indices: np.ndarray, threshold: float) -> int:
    """Replace sampled states that have no live cell with the fresh seed.

    A grid whose every alpha sits at or below the threshold can never fire an
    update again (the alive mask is zero everywhere), so its loss is frozen
    and its gradient is exactly zero. Without rescue one bad stretch of
    updates can fill the pool with such states and stall training for good.
    """
    alpha = pool.states[indices, :, :, 3]
    dead = ~(alpha > np.float32(threshold)).any(axis=(1, 2))
    if dead.any():
        pool.states[indices[dead]] = pool.seed_state
    return int(dead.sum())


def anchored_losses(targets: np.ndarray, t_steps: int) -> dict[int, tuple[np.ndarray, float]]:
    """Loss schedule for pooled training: final tick plus two early anchors.

    A sample that is dead at a loss tick contributes no gradient there (the
    alive mask multiplies its channels away), so with a final-tick loss alone
    a net that kills seeds before the horizon sees a frozen objective and an
    exactly zero gradient — a trap it can never leave. Tick 1 is always live
    for a fresh seed, so a small anchor there (and at the midpoint, once
    samples survive that far) keeps dying samples visible to the optimizer.
    """
    losses = {t_steps: (targets, 1.0)}
    for tick, weight in ((max(1, t_steps // 2), 0.3), (1, 0.1)):
        if tick not in losses:
            losses[tick] = (targets, weight)
    return losses


def _batch_plan(n_pools: int, config: RunConfig) -> int:
    per = int(config["batch_per_primitive"])
    if per < 1:
        raise ConfigError("batch_per_primitive must be >= 1")
    cap = int(config["batch_cap"])
    per = max(1, min(per, cap // n_pools))
    return per


# ---------------------------------------------------------------------------
# Pooled training (gene CA, gene-propagation CA, variants share this loop).

def _maybe_decay(adam: Adam, iteration: int, config: RunConfig) -> None:
    decay_at = int(config["lr_decay_iteration"])
    if decay_at and iteration + 1 == decay_at:
        adam.lr *= float(config["lr_decay_factor"])


def run_pooled_training(pools: list[PrimitivePool], stepper, trainable: ModelParams,
                        config: RunConfig, rng: np.random.Generator,
                        metrics: MetricsWriter | None,
                        iterations: int | None = None) -> list[float]:
    per_pool = _batch_plan(len(pools), config)
    adam = Adam([t for t in trainable.named().values()],
                lr=float(config["lr"]), beta1=float(config["adam_beta1"]),
                beta2=float(config["adam_beta2"]), eps=float(config["adam_eps"]))
    t_min, t_max = int(config["t_min"]), int(config["t_max"])
    history: list[float] = []
    total_iters = int(config["iterations"]) if iterations is None else iterations

    for iteration in range(total_iters):
        t_steps = int(rng.integers(t_min, t_max + 1))
        picks = [pool.sample(per_pool, rng) for pool in pools]
        for pool, idx in zip(pools, picks):
            rescue_dead_states(pool, idx, stepper.threshold)
        x0 = np.concatenate([pool.states[idx] for pool, idx in zip(pools, picks)])
        targets = np.concatenate(
            [np.repeat(pool.target[None], per_pool, axis=0) for pool in pools])

        result = checkpointed_rollout(
            x0, stepper, t_steps, losses=anchored_losses(targets, t_steps), rng=rng,
            segment=int(config["bptt_segment"]) if t_steps > int(config["bptt_segment"]) > 0
            else None)

        normalize_gradients(adam.tensors, float(config["grad_norm_eps"]))
        adam.step()
        adam.zero_grad()

        sample_losses = per_sample_rgba_mse(result.final, targets)
        offset = 0
        for pool, idx in zip(pools, picks):
            pool.write_back(idx, result.final[offset:offset + per_pool],
                            sample_losses[offset:offset + per_pool])
            offset += per_pool

        # The reported loss is the final-tick MSE, not the anchored objective,
        # so histories stay comparable no matter the anchor weights.
        final_mse = result.term_values[t_steps]
        history.append(final_mse)
        if metrics is not None:
            metrics.append({"iteration": iteration, "loss": final_mse,
                            "t_steps": t_steps, "lr": adam.lr})
        _maybe_decay(adam, iteration, config)
    return history


def train_gene_ca(config: RunConfig, out_dir: Path | None = None,
                  bundle: Bundle | None = None) -> tuple[ModelParams, list[float]]:
    """Pooled multi-primitive training of the gene-conditioned CA."""
    layout = config.layout()
    rng = np.random.default_rng(int(config["rng_seed"]))
    params = init_model_params(ROLE_GENE, layout, int(config["hidden_units_gene"]), rng,
                               float(config["fire_rate"]), config["padding"])
    if bundle is None:
        bundle = load_bundle(config["assets_dir"], config["bundle"])
    pools = [PrimitivePool.build(img.name, code, img.rgba, layout, int(config["pool_size"]))
             for img, code in bundle.primitives]
    stepper = GeneStepper(params, layout, float(config["alive_threshold"]), config["padding"])

    metrics = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics = MetricsWriter(out_dir / "metrics.csv", ["iteration", "loss", "t_steps", "lr"])
    history = run_pooled_training(pools, stepper, params, config, rng, metrics)
    if out_dir is not None:
        save_checkpoint(params, out_dir / "gene_ca.nca",
                        rng_seed=int(config["rng_seed"]), config_digest=config.digest())
    return params, history


def _morphology_pools(config: RunConfig, layout: ChannelLayout,
                      parts_bundle: Bundle) -> list[PrimitivePool]:
    """Pools for propagation training: full-morphology targets, part seed code."""
    _, seed_code = parts_bundle.get(config["seed_primitive"])
    target_bundle = load_bundle(config["assets_dir"], config["target_bundle"])
    pools = []
    specs = [(config["target_name"], config["meta_a"])]
    if config["target_name_b"]:
        specs.append((config["target_name_b"], config["meta_b"]))
    for target_name, meta in specs:
        img, _ = target_bundle.get(target_name)
        meta_bits = tuple(int(c) for c in meta) if meta else ()
        if len(meta_bits) != layout.n_meta:
            raise ConfigError(
                f"morphology {target_name!r} declares meta bits {meta!r} but layout "
                f"expects {layout.n_meta}")
        code = GeneCode(seed_code.bits, meta_bits)
        pools.append(PrimitivePool.build(target_name, code, img.rgba, layout,
                                         int(config["pool_size"])))
    return pools


def train_gene_prop_ca(config: RunConfig, gene_params: ModelParams,
                       out_dir: Path | None = None,
                       parts_bundle: Bundle | None = None,
                       pools: list[PrimitivePool] | None = None
                       ) -> tuple[ModelParams, list[float]]:
    """Train the propagation CA over a frozen gene CA backbone.

    The backbone's parameters take no updates (and admit no optimizer), but
    state gradients flow through its ops during BPTT.
    """
    layout = config.layout()
    rng = np.random.default_rng(int(config["rng_seed"]))
    gene_params.freeze()
    before = {k: t.data.copy() for k, t in gene_params.named().items()}

    prop_params = init_model_params(ROLE_PROP, layout, int(config["hidden_units_prop"]), rng,
                                    float(config["fire_rate"]), config["padding"])
    if pools is None:
        if parts_bundle is None:
            parts_bundle = load_bundle(config["assets_dir"], config["bundle"])
        pools = _morphology_pools(config, layout, parts_bundle)
    stepper = EnsembleStepper(gene_params, prop_params, layout,
                              (int(config["gene_every"]), int(config["prop_every"])),
                              float(config["alive_threshold"]), config["padding"])

    metrics = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics = MetricsWriter(out_dir / "metrics.csv", ["iteration", "loss", "t_steps", "lr"])
    history = run_pooled_training(pools, stepper, prop_params, config, rng, metrics)

    for k, t in gene_params.named().items():
        if not np.array_equal(before[k], t.data):
            raise FrozenParameterError(f"frozen backbone tensor {k!r} changed during training")
    if out_dir is not None:
        save_checkpoint(prop_params, out_dir / "gene_prop_ca.nca",
                        rng_seed=int(config["rng_seed"]), config_digest=config.digest())
    return prop_params, history


def train_baseline(config: RunConfig, out_dir: Path | None = None,
                   bundle: Bundle | None = None,
                   match_param_count: int | None = None
                   ) -> tuple[ModelParams, list[float]]:
    """Pooled training of the classic all-channels CA on one target."""
    layout = config.layout()
    rng = np.random.default_rng(int(config["rng_seed"]))
    hidden = int(config["hidden_units_baseline"])
    if hidden == 0:
        if match_param_count is None:
            gene_pd = init_model_params(ROLE_GENE, layout, int(config["hidden_units_gene"]), 0)
            prop_pd = init_model_params(ROLE_PROP, layout, int(config["hidden_units_prop"]), 0)
            match_param_count = gene_pd.count_params() + prop_pd.count_params()
        hidden, _ = matched_baseline_hidden(match_param_count, layout)
    params = init_model_params(ROLE_BASELINE, layout, hidden, rng,
                               float(config["fire_rate"]), config["padding"])
    if bundle is None:
        bundle = load_bundle(config["assets_dir"], config["bundle"])
    img, _ = bundle.primitives[0]
    blank_code = GeneCode((0,) * layout.n_gene, (0,) * layout.n_meta)
    pools = [PrimitivePool.build(img.name, blank_code, img.rgba, layout,
                                 int(config["pool_size"]))]
    stepper = BaselineStepper(params, layout, float(config["alive_threshold"]),
                              config["padding"])
    metrics = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics = MetricsWriter(out_dir / "metrics.csv", ["iteration", "loss", "t_steps", "lr"])
    history = run_pooled_training(pools, stepper, params, config, rng, metrics)
    if out_dir is not None:
        save_checkpoint(params, out_dir / "baseline.nca",
                        rng_seed=int(config["rng_seed"]), config_digest=config.digest())
    return params, history


# ---------------------------------------------------------------------------
# Moving-target curriculum.

def curriculum_frames(iteration: int, config: RunConfig) -> int:
    initial = int(config["curriculum_initial_frames"])
    every = int(config["curriculum_unlock_every"])
    per = int(config["curriculum_unlock_frames"])
    unlocked = initial + (iteration // every) * per if every > 0 else initial
    return min(unlocked, int(config["max_frames"]))


def _frame_losses(frames: list[np.ndarray], n_frames: int, batch: int,
                  config: RunConfig) -> tuple[int, dict[int, tuple[np.ndarray, float]]]:
    prefix = int(config["prefix_steps"])
    spf = int(config["steps_per_frame"])
    if prefix < 1:
        raise ConfigError("prefix_steps must be >= 1 so the first frame loss lands on a tick")
    weight = 1.0 / n_frames
    losses = {}
    for k in range(n_frames):
        tick = prefix + k * spf
        target = np.broadcast_to(frames[k], (batch,) + frames[k].shape)
        losses[tick] = (target, weight)
    steps = prefix + (n_frames - 1) * spf
    # Tiny tick-1 anchor toward the first frame: keeps the gradient alive even
    # when the current dynamics kill the seed before the first frame tick
    # (a dead state contributes nothing through the alive masking).
    if 1 not in losses:
        losses[1] = (np.broadcast_to(frames[0], (batch,) + frames[0].shape), 0.1 * weight)
    return steps, losses


def train_moving_target(config: RunConfig, gene_params: ModelParams | None,
                        out_dir: Path | None = None,
                        frames: list[TargetImage] | None = None,
                        mode: str = "ensemble",
                        match_param_count: int | None = None
                        ) -> tuple[ModelParams, list[float]]:
    """Curriculum training against a frame sequence.

    mode "ensemble": trains the propagation CA over the frozen backbone;
    mode "baseline": trains a parameter-matched classic CA with the same
    schedule. Both grow from a single centered seed; frame k's loss attaches
    at tick prefix_steps + k*steps_per_frame, averaged over unlocked frames.
    """
    layout = config.layout()
    rng = np.random.default_rng(int(config["rng_seed"]))
    if frames is None:
        frames = load_frame_sequence(config["frames_dir"], int(config["max_frames"]))
    frame_arrays = [f.rgba for f in frames]
    h, w = frame_arrays[0].shape[:2]
    batch = int(config["rollout_batch"])

    if mode == "ensemble":
        if gene_params is None:
            raise ConfigError("ensemble mode requires backbone parameters")
        gene_params.freeze()
        trainable = init_model_params(ROLE_PROP, layout, int(config["hidden_units_prop"]),
                                      rng, float(config["fire_rate"]), config["padding"])
        stepper = EnsembleStepper(gene_params, trainable, layout,
                                  (int(config["gene_every"]), int(config["prop_every"])),
                                  float(config["alive_threshold"]), config["padding"])
        code = GeneCode.from_int(1, layout.n_gene, (0,) * layout.n_meta)
        ckpt_name = "gene_prop_ca.nca"
    elif mode == "baseline":
        hidden = int(config["hidden_units_baseline"])
        if hidden == 0:
            if match_param_count is None:
                raise ConfigError("baseline matching needs a target parameter count")
            hidden, _ = matched_baseline_hidden(match_param_count, layout)
        trainable = init_model_params(ROLE_BASELINE, layout, hidden, rng,
                                      float(config["fire_rate"]), config["padding"])
        stepper = BaselineStepper(trainable, layout, float(config["alive_threshold"]),
                                  config["padding"])
        code = GeneCode((0,) * layout.n_gene, (0,) * layout.n_meta)
        ckpt_name = "baseline.nca"
    else:
        raise ConfigError(f"unknown moving-target mode {mode!r}")

    seed = make_seed_grid(h, w, layout, [(h // 2, w // 2, code)]).state
    metrics = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics = MetricsWriter(out_dir / "metrics.csv",
                                ["iteration", "loss", "frames", "t_steps", "lr"])

    adam = Adam([t for t in trainable.named().values()],
                lr=float(config["lr"]), beta1=float(config["adam_beta1"]),
                beta2=float(config["adam_beta2"]), eps=float(config["adam_eps"]))
    history: list[float] = []
    for iteration in range(int(config["iterations"])):
        n_frames = curriculum_frames(iteration, config)
        steps, losses = _frame_losses(frame_arrays, n_frames, batch, config)
        x0 = np.repeat(seed[None], batch, axis=0)
        result = checkpointed_rollout(x0, stepper, steps, losses, rng,
                                      segment=int(config["bptt_segment"]))
        normalize_gradients(adam.tensors, float(config["grad_norm_eps"]))
        adam.step()
        adam.zero_grad()
        history.append(result.objective)
        if metrics is not None:
            metrics.append({"iteration": iteration, "loss": result.objective,
                            "frames": n_frames, "t_steps": steps, "lr": adam.lr})
        _maybe_decay(adam, iteration, config)

    if out_dir is not None:
        save_checkpoint(trainable, out_dir / ckpt_name,
                        rng_seed=int(config["rng_seed"]), config_digest=config.digest())
    return trainable, history


# ---------------------------------------------------------------------------
# Privatization sweep and regrowth protocol.

def parse_damage_centers(text: str) -> list[tuple[int, int]]:
    centers = []
    for chunk in text.split(";"):
        try:
            row, col = chunk.split(",")
            centers.append((int(row), int(col)))
        except ValueError:
            raise ConfigError(f"damage centers must look like 'r,c;r,c', got {text!r}")
    return centers


def eval_regrowth(params: ModelParams, variant: VariantKind, target: np.ndarray,
                  config: RunConfig, rng_seed: int) -> float:
    """Grow, damage at the fixed sites, regrow; mean RGBA MSE over all trials."""
    layout = params.layout
    h, w = target.shape[:2]
    trials = int(config["regrowth_trials"])
    rng = np.random.default_rng(rng_seed)
    seed = np.zeros((h, w, layout.n_total), dtype=np.float32)
    seed[h // 2, w // 2, 3] = 1.0
    x = np.repeat(seed[None], trials, axis=0)

    stepper = VariantStepper(params, variant, layout, float(config["alive_threshold"]),
                             config["padding"])
    for t in range(1, int(config["grow_steps"]) + 1):
        x = stepper.apply(x, t, stepper.draw(x, t, rng), rawops)

    radius = float(config["damage_radius"])
    if radius > 0:
        for center in parse_damage_centers(config["damage_centers"]):
            x[:, damage_disk_mask(h, w, center, radius)] = 0.0

    for t in range(1, int(config["regrow_steps"]) + 1):
        x = stepper.apply(x, t, stepper.draw(x, t, rng), rawops)

    per_trial = per_sample_rgba_mse(x, np.broadcast_to(target, (trials,) + target.shape))
    return float(per_trial.mean())


def run_privatization_sweep(config: RunConfig, target: TargetImage,
                            out_dir: Path | None = None
                            ) -> list[dict[str, object]]:
    """Train every (variant, level) pair and measure final + regrowth losses.

    All variants at one level share an rng seed. At level 0 the three step
    functions produce bit-identical outputs, so the loss curves start out
    equal; over many iterations they may still drift apart through rounding
    differences in the backward pass, which the level comparisons tolerate
    because every comparison stays within one variant.
    """
    levels = [int(x) for x in str(config["sweep_levels"]).split(",")]
    kinds = [k.strip() for k in str(config["sweep_variants"]).split(",")]
    layout = ChannelLayout(n_total=16, n_hidden=12, n_gene=0, n_meta=0)

    metrics = summary_writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics = MetricsWriter(out_dir / "sweep_metrics.csv",
                                ["variant", "level", "iteration", "loss"])
        summary_writer = MetricsWriter(
            out_dir / "sweep_summary.csv",
            ["variant", "level", "mean_final_loss", "mean_regrowth_loss"])

    summary: list[dict[str, object]] = []
    for level in levels:
        level_seed = int(config["rng_seed"]) + level
        for kind in kinds:
            rng = np.random.default_rng(level_seed)
            params = init_variant_params(int(config["hidden_units_variant"]), rng,
                                         float(config["fire_rate"]), config["padding"])
            variant = VariantKind(kind, level)
            blank = GeneCode(())
            pool = PrimitivePool.build(target.name, blank, target.rgba, layout,
                                       int(config["pool_size"]))
            stepper = VariantStepper(params, variant, layout,
                                     float(config["alive_threshold"]), config["padding"])
            history = run_pooled_training([pool], stepper, params, config, rng, None)
            if metrics is not None:
                for i, loss in enumerate(history):
                    metrics.append({"variant": kind, "level": level,
                                    "iteration": i, "loss": loss})
            mean_final = float(np.mean(history[-10:]))
            regrowth = eval_regrowth(params, variant, target.rgba, config,
                                     rng_seed=level_seed + 7919)
            row = {"variant": kind, "level": level,
                   "mean_final_loss": mean_final, "mean_regrowth_loss": regrowth}
            summary.append(row)
            if summary_writer is not None:
                summary_writer.append(row)
            if out_dir is not None:
                save_checkpoint(params, out_dir / f"variant_{kind}_p{level}.nca",
                                rng_seed=level_seed, config_digest=config.digest())
    return summary


def loss_bands(history: Sequence[float], window: int = 10,
               z: float = 1.96) -> tuple[np.ndarray, np.ndarray]:
    """Rolling mean ± z·std bands over a loss curve (window trails inclusive)."""
    values = np.asarray(history, dtype=np.float64)
    lo = np.empty_like(values)
    hi = np.empty_like(values)
    for i in range(len(values)):
        chunk = values[max(0, i - window + 1):i + 1]
        mu, sd = chunk.mean(), chunk.std()
        lo[i], hi[i] = mu - z * sd, mu + z * sd
    return lo, hi


def band_intersection_fraction(a: Sequence[float], b: Sequence[float],
                               window: int = 10) -> float:
    """Fraction of iterations where the two curves' uncertainty bands overlap."""
    lo_a, hi_a = loss_bands(a, window)
    lo_b, hi_b = loss_bands(b, window)
    n = min(len(lo_a), len(lo_b))
    overlap = (np.maximum(lo_a[:n], lo_b[:n]) <= np.minimum(hi_a[:n], hi_b[:n]))
    return float(overlap.mean())
