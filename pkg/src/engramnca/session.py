"""Interactive simulation sessions over trained models.

One engine backs both the offline `grow` command and the live websocket
service, so a recorded intervention log replays to bitwise-identical states
in either context: all mutation goes through `apply_event`, every event is
logged, and all randomness comes from one generator seeded at construction.
"""
from __future__ import annotations

import base64
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rawops
from .errors import ConfigError, CoordinateError, NumericError
from .grid import (ALPHA_CHANNEL, ChannelLayout, GeneCode, damage_disk_mask,
                   state_to_rgba_bytes, write_seed)
from .models import ROLE_GENE, ModelParams, ensemble_step

EVENT_TYPES = ("place_seed", "damage", "toggle_prop", "set_rate", "step",
               "reset", "set_speed")


def _require(event: dict, key: str):
    if key not in event:
        raise ConfigError(f"event {event.get('type')!r} is missing field {key!r}")
    return event[key]


@dataclass
class SessionInfo:
    height: int
    width: int
    layout: ChannelLayout
    rng_seed: int
    has_prop: bool


class SimulationEngine:
    """Stateful cellular-automaton run with a replayable intervention log."""

    def __init__(self, gene_params: ModelParams, prop_params: ModelParams | None,
                 layout: ChannelLayout, height: int, width: int,
                 rng_seed: int = 0, threshold: float = 0.1, padding: str = "zero",
                 rates: tuple[int, int] = (1, 1)):
        if gene_params.role != ROLE_GENE:
            raise ConfigError(f"engine needs a gene-conditioned model, got {gene_params.role!r}")
        if not layout.compatible_with(gene_params.layout, ignore_meta=True):
            raise ConfigError("grid layout does not match the model's channel layout")
        if prop_params is not None and prop_params.layout != layout:
            raise ConfigError("propagation model layout does not match the grid")
        self.gene_params = gene_params
        self.prop_params = prop_params
        self.layout = layout
        self.height, self.width = int(height), int(width)
        self.rng_seed = int(rng_seed)
        self.threshold = float(threshold)
        self.padding = padding
        self.initial_rates = (int(rates[0]), int(rates[1]))
        self.log: list[dict] = []
        self.speed = 1.0
        self._restart()

    # -- lifecycle -----------------------------------------------------------

    def _restart(self) -> None:
        self.state = np.zeros((self.height, self.width, self.layout.n_total),
                              dtype=np.float32)
        self.tick = 0
        self.rates = self.initial_rates
        self.prop_enabled = self.prop_params is not None
        self._rng = np.random.default_rng(self.rng_seed)

    def info(self) -> SessionInfo:
        return SessionInfo(self.height, self.width, self.layout, self.rng_seed,
                           self.prop_params is not None)

    # -- events --------------------------------------------------------------

    def apply_event(self, event: dict) -> None:
        self._dispatch(event)
        self.log.append(dict(event))

    def _dispatch(self, event: dict) -> None:
        kind = event.get("type")
        if kind == "place_seed":
            row, col = int(_require(event, "y")), int(_require(event, "x"))
            bits = str(_require(event, "bits"))
            meta = str(event.get("meta") or "")
            code = GeneCode.from_string(bits, meta)
            if len(code.bits) != self.layout.n_gene:
                raise ConfigError(
                    f"seed carries {len(code.bits)} gene bits, layout has {self.layout.n_gene}")
            if code.meta_bits and len(code.meta_bits) != self.layout.n_meta:
                raise ConfigError(
                    f"seed carries {len(code.meta_bits)} meta bits, layout has "
                    f"{self.layout.n_meta}")
            write_seed(self.state, self.layout, row, col, code)
        elif kind == "damage":
            row, col = int(_require(event, "y")), int(_require(event, "x"))
            radius = float(_require(event, "r"))
            if not (0 <= row < self.height and 0 <= col < self.width):
                raise CoordinateError(f"damage center ({row}, {col}) is off the grid")
            if radius > 0:
                mask = damage_disk_mask(self.height, self.width, (row, col), radius)
                self.state[mask] = 0.0
        elif kind == "toggle_prop":
            enabled = bool(_require(event, "enabled"))
            if enabled and self.prop_params is None:
                raise ConfigError("session has no propagation model to enable")
            self.prop_enabled = enabled
        elif kind == "set_rate":
            gene_every = int(_require(event, "gene_every"))
            prop_every = int(_require(event, "prop_every"))
            if gene_every < 1 or prop_every < 1:
                raise ConfigError("rate divisors must be >= 1")
            self.rates = (gene_every, prop_every)
        elif kind == "step":
            self._advance(int(_require(event, "n")))
        elif kind == "reset":
            self._restart()
        elif kind == "set_speed":
            value = float(_require(event, "value"))
            if value <= 0:
                raise ConfigError("speed must be positive")
            self.speed = value
        else:
            raise ConfigError(f"unknown event type {kind!r}")

    def _advance(self, n: int) -> None:
        if n < 0:
            raise ConfigError("step count must be non-negative")
        x = self.state[None]
        for _ in range(n):
            self.tick += 1
            x = ensemble_step(x, self.gene_params, self.prop_params, self.layout,
                              self.tick, self._rng, rates=self.rates,
                              threshold=self.threshold, padding=self.padding,
                              ops=rawops,
                              prop_enabled=self.prop_enabled and self.prop_params is not None)
        if not np.all(np.isfinite(x)):
            raise NumericError(f"state became non-finite at step {self.tick}")
        self.state = x[0]

    def step(self, n: int = 1) -> None:
        self.apply_event({"type": "step", "n": int(n)})

    # -- views ---------------------------------------------------------------

    def alive_count(self) -> int:
        thr = self.state.dtype.type(self.threshold)
        return int((self.state[..., ALPHA_CHANNEL] > thr).sum())

    def rgba_bytes(self) -> bytes:
        return state_to_rgba_bytes(self.state)

    def gene_rgb_bytes(self) -> bytes | None:
        """First three gene channels as an RGB byte image, or None without genes."""
        if self.layout.n_gene == 0:
            return None
        genes = self.state[..., self.layout.gene]
        rgb = np.zeros(self.state.shape[:2] + (3,), dtype=np.float32)
        take = min(3, genes.shape[-1])
        rgb[..., :take] = np.clip(genes[..., :take], 0.0, 1.0)
        return (rgb * 255.0 + 0.5).astype(np.uint8).tobytes()

    def frame_message(self) -> dict:
        msg = {
            "type": "frame",
            "step": self.tick,
            "width": self.width,
            "height": self.height,
            "rgba": base64.b64encode(self.rgba_bytes()).decode("ascii"),
            "alive_count": self.alive_count(),
        }
        gene = self.gene_rgb_bytes()
        if gene is not None:
            msg["gene_rgb"] = base64.b64encode(gene).decode("ascii")
        return msg

    # -- replay --------------------------------------------------------------

    def spawn_replay(self) -> "SimulationEngine":
        """Fresh engine with the same construction; applying this engine's log
        to it reproduces the current state bit for bit."""
        return SimulationEngine(self.gene_params, self.prop_params, self.layout,
                                self.height, self.width, rng_seed=self.rng_seed,
                                threshold=self.threshold, padding=self.padding,
                                rates=self.initial_rates)

    def replay_log(self, log: list[dict]) -> None:
        for event in log:
            self.apply_event(event)


@dataclass
class ScriptAction:
    at_step: int
    event: dict


def parse_script(entries: list[dict]) -> list[ScriptAction]:
    actions = []
    for entry in entries:
        if "at_step" not in entry or "event" not in entry:
            raise ConfigError("script entries need 'at_step' and 'event' fields")
        at = int(entry["at_step"])
        if at < 0:
            raise ConfigError("script at_step must be non-negative")
        actions.append(ScriptAction(at, dict(entry["event"])))
    actions.sort(key=lambda a: a.at_step)
    return actions


def run_script(engine: SimulationEngine, actions: list[ScriptAction], total_steps: int,
               on_step: Callable[[SimulationEngine], None] | None = None) -> None:
    """Advance to total_steps, firing each action when its step is reached.

    Actions scheduled at step s apply after the grid has advanced s steps and
    before step s+1; several actions at one step apply in list order.
    """
    queue = sorted(actions, key=lambda a: a.at_step)
    i = 0
    if on_step is not None:
        on_step(engine)
    for step in range(total_steps + 1):
        while i < len(queue) and queue[i].at_step == step:
            engine.apply_event(queue[i].event)
            i += 1
        if step < total_steps:
            engine.step(1)
            if on_step is not None:
                on_step(engine)
    if i < len(queue):
        raise ConfigError(
            f"script schedules an action at step {queue[i].at_step}, beyond the "
            f"run's {total_steps} steps")
