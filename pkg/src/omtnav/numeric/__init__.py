from . import ops
from .checkpoint import CheckpointError
from .optim import ParamLayout, RmspropState, clip_by_global_norm, global_norm, rmsprop_flat, rmsprop_step
from .tensor import NonFiniteError, ShapeError, Tape, Tensor, backward

__all__ = [
    "ops",
    "Tape",
    "Tensor",
    "backward",
    "NonFiniteError",
    "ShapeError",
    "CheckpointError",
    "RmspropState",
    "rmsprop_step",
    "clip_by_global_norm",
    "global_norm",
]
