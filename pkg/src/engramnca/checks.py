"""End-to-end gradient verification for every step function.

Each case rebuilds a short rollout as a closure over float64 parameter
copies and compares backprop against central finite differences. Parameters
get non-degenerate random values (the zero-initialized output layer would
otherwise hide the first layer from the check), and states are drawn well
away from the alive threshold so a perturbation cannot flip a mask bit.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, gradient_check
from .grid import ChannelLayout, UpdateMasks, sample_stochastic_mask
from .models import (ROLE_BASELINE, ROLE_GENE, ROLE_PROP, ModelParams, VariantKind,
                     init_model_params, init_variant_params)
from .training import (BaselineStepper, EnsembleStepper, GeneStepper, PropStepper,
                       VariantStepper, VISIBLE)

SINGLE_STEP_TOLERANCE = 1e-3
MULTI_STEP_TOLERANCE = 1e-2


@dataclass
class CheckResult:
    name: str
    steps: int
    max_rel_error: float
    tolerance: float
    elapsed: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def _fuzz_params(params: ModelParams, rng: np.random.Generator,
                 scale: float = 0.1) -> ModelParams:
    """Replace the zero-initialized tensors with small random values."""
    w2 = rng.normal(0.0, scale, params.w2.data.shape).astype(np.float32)
    b1 = rng.normal(0.0, scale / 2, params.b1.data.shape).astype(np.float32)
    params.w2.data = w2
    params.b1.data = b1
    return params


def _random_state(rng: np.random.Generator, h: int, w: int, n: int) -> np.ndarray:
    """State with every cell comfortably alive (alpha far from the threshold)."""
    state = rng.uniform(0.2, 0.8, size=(1, h, w, n)).astype(np.float32)
    state[..., 3] = rng.uniform(0.4, 0.9, size=(1, h, w)).astype(np.float32)
    return state


def _check_case(name: str, stepper_of, param_tensors: dict[str, Tensor],
                x0: np.ndarray, steps: int, tolerance: float,
                rng: np.random.Generator, samples_per_param: int = 3,
                loss_channels: slice = VISIBLE) -> CheckResult:
    h, w = x0.shape[1], x0.shape[2]
    n_loss = loss_channels.stop - loss_channels.start
    target = rng.uniform(0.0, 1.0, size=(x0.shape[0], h, w, n_loss))
    blobs_rng = np.random.default_rng(rng.integers(2**32))
    probe = stepper_of(param_tensors)
    blobs = []
    x_probe = x0
    for t in range(1, steps + 1):
        blob = probe.draw(x_probe, t, blobs_rng)
        blobs.append(blob)

    def closure(params64: dict[str, Tensor]) -> Tensor:
        stepper = stepper_of(params64)
        tape = ad.Tape()
        x = tape.constant(x0.astype(np.float64))
        for t in range(1, steps + 1):
            x = stepper.apply(x, t, blobs[t - 1], ad)
        return ad.pixelwise_mse(x, target, channels=loss_channels)

    start = time.perf_counter()
    report = gradient_check(closure, param_tensors, samples_per_param=samples_per_param)
    elapsed = time.perf_counter() - start
    worst = max(report.values()) if report else 0.0
    return CheckResult(name, steps, worst, tolerance, elapsed)


def _materialize(params: ModelParams, tensors: dict[str, Tensor],
                 prefix: str = "") -> ModelParams:
    return replace(params, w1=tensors[prefix + "w1"], b1=tensors[prefix + "b1"],
                   w2=tensors[prefix + "w2"])


def run_gradient_checks(grid: int = 8, threshold: float = 0.1, padding: str = "zero",
                        rng_seed: int = 11) -> list[CheckResult]:
    rng = np.random.default_rng(rng_seed)
    layout = ChannelLayout.standard()
    meta_layout = ChannelLayout.standard(n_meta=1)
    results: list[CheckResult] = []

    def single_model_case(name, role, use_layout, hidden, steps, tolerance,
                          stepper_cls, variant=None, loss_channels=VISIBLE):
        params = _fuzz_params(init_model_params(role, use_layout, hidden, rng), rng)
        tensors = {"w1": params.w1, "b1": params.b1, "w2": params.w2}
        x0 = _random_state(rng, grid, grid, use_layout.n_total)

        def stepper_of(ts):
            p = _materialize(params, ts)
            if variant is not None:
                return VariantStepper(p, variant, use_layout, threshold, padding)
            return stepper_cls(p, use_layout, threshold, padding)

        results.append(_check_case(name, stepper_of, tensors, x0, steps, tolerance,
                                   rng, loss_channels=loss_channels))

    single_model_case("gene_ca", ROLE_GENE, layout, 32, 1,
                      SINGLE_STEP_TOLERANCE, GeneStepper)
    single_model_case("gene_ca_multi", ROLE_GENE, layout, 32, 3,
                      MULTI_STEP_TOLERANCE, GeneStepper)
    # A lone propagation step can only move the gene channels, so its check
    # reads the loss there; the ensemble case covers its path into RGBA.
    single_model_case("gene_prop_ca", ROLE_PROP, layout, 32, 1,
                      SINGLE_STEP_TOLERANCE, PropStepper, loss_channels=layout.gene)
    single_model_case("gene_prop_ca_meta", ROLE_PROP, meta_layout, 32, 1,
                      SINGLE_STEP_TOLERANCE, PropStepper,
                      loss_channels=meta_layout.gene)
    single_model_case("baseline_ca", ROLE_BASELINE, layout, 32, 1,
                      SINGLE_STEP_TOLERANCE, BaselineStepper)

    variant_layout = ChannelLayout(n_total=16, n_hidden=12, n_gene=0, n_meta=0)
    for kind in ("dummy_vca", "masked_ca", "reduced_ca"):
        params = _fuzz_params(init_variant_params(32, rng), rng)
        tensors = {"w1": params.w1, "b1": params.b1, "w2": params.w2}
        x0 = _random_state(rng, grid, grid, 16)
        variant = VariantKind(kind, 4)

        def stepper_of(ts, params=params, variant=variant):
            return VariantStepper(_materialize(params, ts), variant, variant_layout,
                                  threshold, padding)

        results.append(_check_case(kind, stepper_of, tensors, x0, 1,
                                   SINGLE_STEP_TOLERANCE, rng))

    gene = _fuzz_params(init_model_params(ROLE_GENE, layout, 32, rng), rng)
    prop = _fuzz_params(init_model_params(ROLE_PROP, layout, 32, rng), rng)
    tensors = {"gene_w1": gene.w1, "gene_b1": gene.b1, "gene_w2": gene.w2,
               "prop_w1": prop.w1, "prop_b1": prop.b1, "prop_w2": prop.w2}
    x0 = _random_state(rng, grid, grid, layout.n_total)

    def ensemble_of(ts):
        g = _materialize(gene, ts, "gene_")
        p = _materialize(prop, ts, "prop_")
        return EnsembleStepper(g, p, layout, (1, 1), threshold, padding)

    results.append(_check_case("ensemble_multi", ensemble_of, tensors, x0, 3,
                               MULTI_STEP_TOLERANCE, rng))
    return results


def summarize(results: list[CheckResult]) -> dict:
    return {
        "cases": [
            {"name": r.name, "steps": r.steps, "max_rel_error": r.max_rel_error,
             "tolerance": r.tolerance, "passed": r.passed, "elapsed_sec": r.elapsed}
            for r in results
        ],
        "all_passed": all(r.passed for r in results),
        "total_elapsed_sec": sum(r.elapsed for r in results),
    }
