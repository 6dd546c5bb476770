"""Neural cellular automata with private, heritable per-cell gene channels.

Two cooperating models run on one grid: a growth model that reads the public
neighborhood plus its own private genes and updates only public channels, and
a propagation model that rewrites only the private channels. Training,
ablations, persistence, rendering, and a live websocket playground all build
on the same forward kernels, so trained behavior and served behavior match
bitwise.
"""
from .errors import (AssetError, CapacityError, ConfigError, CoordinateError,
                     CorruptionError, EngramError, FrozenParameterError,
                     LayoutError, NumericError, PersistenceError, ShapeError,
                     TapeError, UnsupportedVersionError)
from .grid import (ALPHA_CHANNEL, DEFAULT_ALIVE_THRESHOLD, CellGrid, ChannelLayout,
                   GeneCode, UpdateMasks, compute_alive_mask, make_seed_grid,
                   sample_stochastic_mask)
from .models import (ROLE_BASELINE, ROLE_GENE, ROLE_PROP, ModelParams, VariantKind,
                     baseline_step, ensemble_step, gene_ca_step, gene_prop_ca_step,
                     init_model_params, init_variant_params, matched_baseline_hidden,
                     variant_step)
from .persistence import (RunConfig, load_checkpoint, load_checkpoint_as,
                          save_checkpoint)
from .session import SimulationEngine

__version__ = "0.1.0"

__all__ = [
    "ALPHA_CHANNEL", "DEFAULT_ALIVE_THRESHOLD", "AssetError", "CapacityError",
    "CellGrid", "ChannelLayout", "ConfigError", "CoordinateError",
    "CorruptionError", "EngramError", "FrozenParameterError", "GeneCode",
    "LayoutError", "ModelParams", "NumericError", "PersistenceError",
    "ROLE_BASELINE", "ROLE_GENE", "ROLE_PROP", "RunConfig", "ShapeError",
    "SimulationEngine", "TapeError", "UnsupportedVersionError", "UpdateMasks",
    "VariantKind", "baseline_step", "compute_alive_mask", "ensemble_step",
    "gene_ca_step", "gene_prop_ca_step", "init_model_params",
    "init_variant_params", "load_checkpoint", "load_checkpoint_as",
    "make_seed_grid", "matched_baseline_hidden", "sample_stochastic_mask",
    "save_checkpoint", "variant_step",
]
