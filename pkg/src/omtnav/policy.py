"""Transformer over the fused memory, actor-critic controller, and ablation variants."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env.gridworld import N_ACTIONS
from .memory import GRID_CELLS, fuse_all, soft_time_code, temporal_code
from .numeric import ops
from .numeric.tensor import Tensor

VARIANTS = (
    "full",
    "no_object_memory",
    "no_scene_memory",
    "no_scene",
    "no_temporal_encoding",
    "no_transformer",
)


@dataclass(frozen=True)
class ModelDims:
    d_v: int = 128
    d_w: int = 32
    d_m: int = 60
    heads: int = 5
    memory: int = 4
    ffn_mult: int = 4
    ctrl_hidden: int = 64
    te_denominator: str = "memory_size"  # or "model_dim"
    ln_eps: float = 1e-5

    def validate(self) -> None:
        if self.d_m % self.heads:
            raise ValueError(f"d_m={self.d_m} is not divisible by {self.heads} heads")
        if self.d_m % 2:
            raise ValueError("d_m must be even for the temporal encoding")
        if self.te_denominator not in ("memory_size", "model_dim"):
            raise ValueError(f"unknown te_denominator {self.te_denominator!r}")
        if self.memory < 1:
            raise ValueError("memory size must be positive")


@dataclass
class Batch:
    """Network inputs for ``B`` time steps: memory contents as of each step plus the target."""

    scenes: np.ndarray  # [B, T, d_v]
    grids: np.ndarray  # [B, T, 256]
    mask: np.ndarray  # [B, T] bool; last column always true
    target: np.ndarray  # [B, d_w]


@dataclass
class AgentOutput:
    probs: np.ndarray  # [9]
    value: float


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def multi_head_attention(
    P: dict[str, Tensor], prefix: str, xq: Tensor, xkv: Tensor, mask: np.ndarray, heads: int
) -> Tensor:
    """Scaled dot-product attention with ``heads`` heads; masked keys get zero weight.

    Inputs are row-stacked: ``xq`` is ``[B*Tq, d]``, ``xkv`` is ``[B*Tk, d]`` and
    ``mask`` is ``[B, Tk]``.  Returns ``[B*Tq, d]``.
    """
    mask = np.asarray(mask, dtype=bool)
    B = mask.shape[0]
    d = xq.shape[1]
    if d % heads:
        raise ValueError(f"model dim {d} not divisible by {heads} heads")
    dk = d // heads
    q = ops.split_heads(ops.linear(xq, P[f"{prefix}.q.W"], P[f"{prefix}.q.b"]), B, heads)
    kt = ops.split_heads(ops.linear(xkv, P[f"{prefix}.k.W"], P[f"{prefix}.k.b"]), B, heads, keys_last=True)
    v = ops.split_heads(ops.linear(xkv, P[f"{prefix}.v.W"], P[f"{prefix}.v.b"]), B, heads)
    scores = ops.scale(ops.bmm(q, kt), 1.0 / math.sqrt(dk))
    key_mask = np.repeat(mask, heads, axis=0)[:, None, :]
    attn = ops.masked_softmax(scores, key_mask)
    o = ops.merge_heads(ops.bmm(attn, v), B)
    return ops.linear(o, P[f"{prefix}.o.W"], P[f"{prefix}.o.b"])


def _ffn(P, prefix: str, x: Tensor) -> Tensor:
    h = ops.relu(ops.linear(x, P[f"{prefix}.1.W"], P[f"{prefix}.1.b"]))
    return ops.linear(h, P[f"{prefix}.2.W"], P[f"{prefix}.2.b"])


def _ln(P, prefix: str, x: Tensor, eps: float) -> Tensor:
    return ops.layer_norm(x, P[f"{prefix}.g"], P[f"{prefix}.b"], eps)


def transformer_forward(
    P: dict[str, Tensor], memory: Tensor, mask: np.ndarray, target: Tensor, dims: ModelDims
) -> Tensor:
    """One post-norm encoder layer over ``memory`` ``[B*T, d_m]`` and a single-token decoder.

    The decoder query is the projected target embedding ``[B, d_w]``; returns ``[B, d_m]``.
    """
    h, eps = dims.heads, dims.ln_eps
    a = multi_head_attention(P, "enc.attn", memory, memory, mask, h)
    x = _ln(P, "enc.ln1", ops.add(memory, a), eps)
    enc = _ln(P, "enc.ln2", ops.add(x, _ffn(P, "enc.ffn", x)), eps)

    q = ops.linear(target, P["dec.tgt.W"], P["dec.tgt.b"])
    a = multi_head_attention(P, "dec.attn", q, enc, mask, h)
    y = _ln(P, "dec.ln1", ops.add(q, a), eps)
    return _ln(P, "dec.ln2", ops.add(y, _ffn(P, "dec.ffn", y)), eps)


def controller_forward(P: dict[str, Tensor], features: Tensor) -> tuple[Tensor, Tensor]:
    """Two fully-connected layers: hidden rectifier, then policy logits and state value."""
    hdn = ops.relu(ops.linear(features, P["ctrl.W"], P["ctrl.b"]))
    logits = ops.linear(hdn, P["pi.W"], P["pi.b"])
    value = ops.reshape(ops.linear(hdn, P["v.W"], P["v.b"]), (features.shape[0],))
    return logits, value


def probabilities(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def act(output: AgentOutput, rng: np.random.Generator, mode: str = "sample") -> int:
    p = np.asarray(output.probs, dtype=np.float64)
    if mode == "greedy":
        return int(np.argmax(p))  # first maximum wins ties
    if mode != "sample":
        raise ValueError(f"unknown action mode {mode!r}")
    c = np.cumsum(p)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), len(p) - 1))


class OMTModel:
    """A network variant: parameter shapes plus the batched forward pass."""

    def __init__(self, dims: ModelDims, variant: str = "full"):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")
        dims.validate()
        self.dims = dims
        self.variant = variant
        self.scene_in_memory = variant not in ("no_scene_memory", "no_scene")
        self.grid_in_memory = variant != "no_object_memory"
        self.uses_transformer = variant != "no_transformer"
        self.sinusoid = variant not in ("no_temporal_encoding", "no_transformer")
        self.soft_code = variant == "no_temporal_encoding"
        T, d = dims.memory, dims.d_m
        denom = T if dims.te_denominator == "memory_size" else d
        self._code = temporal_code(T, d, denom)
        self._soft = soft_time_code(T)

    # -- parameters --------------------------------------------------------
    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        D = self.dims
        d, T = D.d_m, D.memory
        shapes: dict[str, tuple[int, ...]] = {}

        def lin(name, n_in, n_out):
            shapes[f"{name}.W"] = (n_in, n_out)
            shapes[f"{name}.b"] = (n_out,)

        if self.scene_in_memory or self.variant == "no_scene_memory":
            lin("fuse.v", D.d_v + (1 if self.soft_code else 0), d)
        lin("fuse.o", GRID_CELLS, d)
        n_streams = int(self.scene_in_memory) + int(self.grid_in_memory)
        lin("fuse.m", n_streams * d, d)
        if self.uses_transformer:
            for blk in ("enc", "dec"):
                for p in ("q", "k", "v", "o"):
                    lin(f"{blk}.attn.{p}", d, d)
                lin(f"{blk}.ffn.1", d, D.ffn_mult * d)
                lin(f"{blk}.ffn.2", D.ffn_mult * d, d)
                for ln in ("ln1", "ln2"):
                    shapes[f"{blk}.{ln}.g"] = (d,)
                    shapes[f"{blk}.{ln}.b"] = (d,)
            lin("dec.tgt", D.d_w, d)
        else:
            lin("mlp.1", T * d, d)
            lin("mlp.2", d, d)
        lin("ctrl", self.controller_in, D.ctrl_hidden)
        lin("pi", D.ctrl_hidden, N_ACTIONS)
        lin("v", D.ctrl_hidden, 1)
        return shapes

    @property
    def controller_in(self) -> int:
        extra = self.variant in ("no_object_memory", "no_scene_memory")
        return self.dims.d_m * (2 if extra else 1)

    def init_params(self, rng: np.random.Generator, dtype=np.float32) -> dict[str, np.ndarray]:
        out = {}
        for name, shape in self.param_shapes().items():
            if name.endswith(".g"):
                v = np.ones(shape)
            elif len(shape) == 1:
                v = np.zeros(shape)
            else:
                v = _xavier(rng, *shape)
                if name == "pi.W":
                    v *= 0.1
            out[name] = v.astype(dtype)
        return out

    def num_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes().values())

    # -- forward -------------------------------------------------------------
    def forward(self, P: dict[str, Tensor], batch: Batch) -> tuple[Tensor, Tensor, Tensor]:
        """Returns ``(logits [B, 9], value [B], x [B, d_m])``."""
        D = self.dims
        mask = np.asarray(batch.mask, dtype=bool)
        B, T = mask.shape
        if T != D.memory:
            raise ValueError(f"batch memory size {T} != model memory {D.memory}")
        if not mask[:, -1].all():
            raise ValueError("newest memory slot must be occupied")
        dtype = P["fuse.o.W"].dtype
        scenes = np.asarray(batch.scenes, dtype=dtype)
        grids = np.asarray(batch.grids, dtype=dtype)
        target = Tensor(np.asarray(batch.target, dtype=dtype))

        mem_scenes = None
        if self.scene_in_memory:
            mem_scenes = scenes
            if self.soft_code:
                soft = np.broadcast_to(self._soft.astype(dtype)[None, :, None], (B, T, 1))
                mem_scenes = np.concatenate([scenes, soft], axis=-1)
        mem_grids = grids if self.grid_in_memory else None
        m = fuse_all(P, mem_scenes, mem_grids, mask)  # [B*T, d_m]

        if self.uses_transformer:
            if self.sinusoid:
                code = np.tile(self._code.astype(dtype), (B, 1))
                m = ops.add(m, Tensor(code))
            x = transformer_forward(P, m, mask, target, D)
        else:
            flat = ops.reshape(m, (B, T * D.d_m))
            h = ops.relu(ops.linear(flat, P["mlp.1.W"], P["mlp.1.b"]))
            x = ops.relu(ops.linear(h, P["mlp.2.W"], P["mlp.2.b"]))

        feats = x
        if self.variant == "no_object_memory":
            cur = ops.relu(ops.linear(Tensor(grids[:, -1]), P["fuse.o.W"], P["fuse.o.b"]))
            feats = ops.concat([x, cur], axis=-1)
        elif self.variant == "no_scene_memory":
            cur = ops.relu(ops.linear(Tensor(scenes[:, -1]), P["fuse.v.W"], P["fuse.v.b"]))
            feats = ops.concat([x, cur], axis=-1)
        logits, value = controller_forward(P, feats)
        return logits, value, x

    def infer(self, params: dict[str, np.ndarray], batch: Batch) -> list[AgentOutput]:
        P = {k: Tensor(v) for k, v in params.items()}
        logits, value, _ = self.forward(P, batch)
        lg = logits.data.astype(np.float64)
        vals = value.data.astype(np.float64)
        if not (np.isfinite(lg).all() and np.isfinite(vals).all()):
            raise FloatingPointError("policy produced non-finite outputs")
        probs = probabilities(lg)
        return [AgentOutput(probs[i], float(vals[i])) for i in range(lg.shape[0])]


def build_variant(variant: str, dims: ModelDims) -> OMTModel:
    return OMTModel(dims, variant)
