"""Command-line entry points.

Every training command materializes its full configuration (defaults +
config file + overrides) into the output directory as config.json before
doing any work, and all randomness flows from the config's rng_seed, so
re-running a command with an emitted config.json reproduces its metrics
files byte for byte.

Exit codes: 0 success, 2 configuration/usage problems, 3 asset problems,
4 numeric failures. Anything else is a bug and raises normally.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .assets import Bundle, load_bundle, load_frame_sequence
from .errors import (AssetError, ConfigError, NumericError, PersistenceError)
from .grid import GeneCode
from .models import ROLE_GENE, ROLE_PROP
from .persistence import RunConfig, load_checkpoint_as, parse_override
from .session import SimulationEngine, parse_script, run_script


def _add_common(parser: argparse.ArgumentParser, default_out: str) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON config file; omitted keys take defaults")
    parser.add_argument("--out", type=Path, default=Path(default_out),
                        help="run directory for config, metrics and checkpoints")
    parser.add_argument("--seed", type=int, default=None,
                        help="override rng_seed from the config")
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")


def _build_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = dict(parse_override(text) for text in args.override)
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    if getattr(args, "steps", None) is not None:
        overrides["grow_steps"] = args.steps
    return cfg.with_overrides(overrides) if overrides else cfg


def _start_run(cfg: RunConfig, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="engramnca",
        description="Cellular automata with private per-cell gene channels: "
                    "training, ablations, growth rendering, and a live service.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-geneca", help="train the gene-conditioned CA on a bundle")
    _add_common(p, "runs/geneca")

    p = sub.add_parser("train-geneprop",
                       help="train the gene-propagation CA over a frozen backbone")
    _add_common(p, "runs/geneprop")

    p = sub.add_parser("train-baseline", help="train the classic all-channel CA")
    _add_common(p, "runs/baseline")

    p = sub.add_parser("train-lenia",
                       help="three-stage moving-target training plus matched baseline")
    _add_common(p, "runs/lenia")

    p = sub.add_parser("ablate", help="channel-privatization sweep with plots")
    _add_common(p, "runs/ablate")

    p = sub.add_parser("grow", help="roll a trained model and render frames")
    _add_common(p, "runs/grow")
    p.add_argument("--steps", type=int, default=None, help="total steps to roll")
    p.add_argument("--script", type=Path, default=None,
                   help="JSON list of {at_step, event} interventions")
    p.add_argument("--bits", type=str, default=None,
                   help="gene bits for the default centered seed")
    p.add_argument("--meta", type=str, default="",
                   help="meta bits for the default centered seed")
    p.add_argument("--frame-every", type=int, default=5,
                   help="render a PNG every this many steps")

    p = sub.add_parser("gradcheck",
                       help="finite-difference verification of every step function")
    p.add_argument("--out", type=Path, default=None, help="write gradcheck.json here")

    p = sub.add_parser("serve", help="run the websocket playground service")
    p.add_argument("--checkpoints", type=Path, default=Path("runs"),
                   help="directory scanned for .nca checkpoints")
    p.add_argument("--host", type=str, default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


# ---------------------------------------------------------------------------
# Command bodies.

def _cmd_train_geneca(args) -> int:
    from .training import train_gene_ca

    cfg = _build_config(args)
    out = _start_run(cfg, args.out)
    train_gene_ca(cfg, out)
    return 0


def _cmd_train_geneprop(args) -> int:
    from .training import train_gene_prop_ca

    cfg = _build_config(args)
    if not cfg["gene_checkpoint"]:
        raise ConfigError("train-geneprop needs config key 'gene_checkpoint'")
    gene_params, _ = load_checkpoint_as(cfg["gene_checkpoint"], ROLE_GENE)
    out = _start_run(cfg, args.out)
    train_gene_prop_ca(cfg, gene_params, out)
    return 0


def _cmd_train_baseline(args) -> int:
    from .training import train_baseline

    cfg = _build_config(args)
    out = _start_run(cfg, args.out)
    train_baseline(cfg, out)
    return 0


def _cmd_train_lenia(args) -> int:
    from .training import train_gene_ca, train_moving_target

    cfg = _build_config(args)
    out = _start_run(cfg, args.out)
    frames = load_frame_sequence(cfg["frames_dir"], int(cfg["max_frames"]))
    layout = cfg.layout()

    first = frames[0]
    code = GeneCode.from_int(1, layout.n_gene, (0,) * layout.n_meta)
    frame_bundle = Bundle(name="frame0", scheme="binary", grid_size=first.height,
                          primitives=((first, code),))
    gene_params, _ = train_gene_ca(cfg, out / "stage1", bundle=frame_bundle)

    prop_params, _ = train_moving_target(cfg, gene_params, out / "stage2",
                                         frames=frames, mode="ensemble")

    match = gene_params.count_params() + prop_params.count_params()
    train_moving_target(cfg, None, out / "stage3", frames=frames,
                        mode="baseline", match_param_count=match)
    return 0


def _cmd_ablate(args) -> int:
    from .plots import plot_sweep_curves, plot_sweep_summary
    from .training import run_privatization_sweep

    cfg = _build_config(args)
    bundle = load_bundle(cfg["assets_dir"], cfg["target_bundle"])
    target, _ = bundle.get(cfg["target_name"])
    out = _start_run(cfg, args.out)
    run_privatization_sweep(cfg, target, out)
    plot_sweep_curves(out / "sweep_metrics.csv", out)
    plot_sweep_summary(out / "sweep_summary.csv", out)
    return 0


def _cmd_grow(args) -> int:
    from PIL import Image

    cfg = _build_config(args)
    if not cfg["gene_checkpoint"]:
        raise ConfigError("grow needs config key 'gene_checkpoint'")
    gene_params, _ = load_checkpoint_as(cfg["gene_checkpoint"], ROLE_GENE)
    prop_params = None
    if cfg["prop_checkpoint"]:
        prop_params, _ = load_checkpoint_as(cfg["prop_checkpoint"], ROLE_PROP)

    layout = prop_params.layout if prop_params is not None else gene_params.layout
    h, w = int(cfg["grid_h"]), int(cfg["grid_w"])
    engine = SimulationEngine(gene_params, prop_params, layout, h, w,
                              rng_seed=int(cfg["rng_seed"]),
                              threshold=float(cfg["alive_threshold"]),
                              padding=cfg["padding"],
                              rates=(int(cfg["gene_every"]), int(cfg["prop_every"])))

    if args.script is not None:
        try:
            entries = json.loads(Path(args.script).read_text())
        except OSError as exc:
            raise AssetError(f"cannot read script {args.script}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"script {args.script} is not valid JSON: {exc}") from exc
        actions = parse_script(entries)
    else:
        bits = args.bits or GeneCode.from_int(1, layout.n_gene).as_string()
        event = {"type": "place_seed", "x": w // 2, "y": h // 2, "bits": bits}
        if args.meta:
            event["meta"] = args.meta
        actions = parse_script([{"at_step": 0, "event": event}])

    out = _start_run(cfg, args.out)
    frames_dir = out / "frames"
    frames_dir.mkdir(exist_ok=True)
    total = int(cfg["grow_steps"])
    every = max(1, int(args.frame_every))

    rendered: list[Image.Image] = []

    def snapshot(eng: SimulationEngine) -> None:
        if eng.tick % every == 0 or eng.tick == total:
            img = Image.frombytes("RGBA", (eng.width, eng.height), eng.rgba_bytes())
            img.save(frames_dir / f"frame_{eng.tick:04d}.png")
            rendered.append(img.resize((eng.width * 8, eng.height * 8), Image.NEAREST))

    run_script(engine, actions, total, on_step=snapshot)

    if rendered:
        rendered[0].save(out / "run.gif", save_all=True, append_images=rendered[1:],
                         duration=100, loop=0)
    (out / "log.json").write_text(json.dumps({
        "rng_seed": engine.rng_seed,
        "grid": {"h": engine.height, "w": engine.width},
        "rates": list(engine.initial_rates),
        "log": engine.log,
    }, indent=2))
    final = engine.frame_message()
    (out / "final.json").write_text(json.dumps(
        {"step": final["step"], "alive_count": final["alive_count"]}, indent=2))
    np.save(out / "final_state.npy", engine.state)
    return 0


def _cmd_gradcheck(args) -> int:
    from .checks import run_gradient_checks, summarize

    results = run_gradient_checks()
    report = summarize(results)
    for case in report["cases"]:
        status = "ok" if case["passed"] else "FAIL"
        print(f"{case['name']:<20} steps={case['steps']} "
              f"max_rel={case['max_rel_error']:.2e} tol={case['tolerance']:.0e} {status}")
    print(f"total {report['total_elapsed_sec']:.1f}s")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "gradcheck.json").write_text(json.dumps(report, indent=2))
    if not report["all_passed"]:
        raise NumericError("gradient check failed; see report above")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.checkpoints)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "train-geneca": _cmd_train_geneca,
    "train-geneprop": _cmd_train_geneprop,
    "train-baseline": _cmd_train_baseline,
    "train-lenia": _cmd_train_lenia,
    "ablate": _cmd_ablate,
    "grow": _cmd_grow,
    "gradcheck": _cmd_gradcheck,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (AssetError, PersistenceError) as exc:
        print(f"asset error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
