"""Asynchronous advantage actor-critic training.

Workers own a private environment, memory and parameter snapshot.  The only
shared state is :class:`SharedParams`: parameter arrays that are replaced
whole under a lock (readers never see a torn tensor), the RMSprop
accumulators, and the global frame counter.
"""

from __future__ import annotations

import csv
import logging
import math
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .env.gridworld import EnvConfig, GridWorld, Observation, Task
from .memory import ObjectSceneMemory
from .numeric import checkpoint, ops
from .numeric.optim import ParamLayout, RmspropState, rmsprop_flat
from .numeric.tensor import Tape, Tensor, backward
from .perception import Perception
from .policy import AgentOutput, Batch, ModelDims, OMTModel, act

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("frame", "worker", "episode", "steps", "success", "return", "sr_window100", "lr")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 7e-4
    total_frames: int = 2_000_000
    workers: int = 8
    gamma: float = 0.99
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    t_max: int = 20
    clip_norm: float = 40.0
    rms_decay: float = 0.99
    rms_eps: float = 1e-8
    seed: int = 0
    variant: str = "full"
    precision: int = 32
    checkpoint_every: int = 100_000
    train_layouts: tuple[int, int] = (0, 80)  # half-open seed range
    perception_seed: int = 0

    def validate(self) -> None:
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.t_max < 1:
            raise ValueError("t_max must be at least 1")
        if self.workers < 1:
            raise ValueError("need at least one worker")
        if self.total_frames < 0:
            raise ValueError("total_frames must be non-negative")
        if self.precision not in (32, 64):
            raise ValueError("precision must be 32 or 64")
        lo, hi = self.train_layouts
        if hi <= lo:
            raise ValueError("train_layouts must be a non-empty range")

    @property
    def dtype(self):
        return np.float32 if self.precision == 32 else np.float64


def lr_at(frame: int, total: int, lr0: float) -> float:
    """Linear decay from ``lr0`` at frame 0 to 0 at ``total``."""
    if total <= 0:
        return 0.0
    return max(0.0, lr0 * (1.0 - frame / total))


def discounted_returns(rewards, bootstrap: float, gamma: float) -> np.ndarray:
    out = np.empty(len(rewards))
    R = bootstrap
    for k in range(len(rewards) - 1, -1, -1):
        R = rewards[k] + gamma * R
        out[k] = R
    return out


@dataclass
class LossParts:
    loss: Tensor
    policy: float
    value: float
    entropy: float


def a3c_loss(
    logits: Tensor,
    values: Tensor,
    actions,
    rewards,
    bootstrap: float,
    gamma: float = 0.99,
    entropy_coef: float = 0.01,
    value_coef: float = 0.5,
) -> LossParts:
    """Sum over the segment of policy-gradient, value and entropy terms.

    The advantage ``R_k - V_k`` multiplying the log-probability is treated
    as a constant.
    """
    n = logits.shape[0]
    if n == 0 or len(actions) != n or len(rewards) != n:
        raise ValueError("trajectory must be non-empty with one action and reward per output")
    dtype = logits.dtype
    R = discounted_returns(rewards, bootstrap, gamma)
    adv = (R - values.data.astype(np.float64)).astype(dtype)
    logp = ops.log_softmax(logits)
    p = ops.softmax(logits)
    chosen = ops.pick(logp, np.asarray(actions))
    policy = ops.scale(ops.total(ops.mul(chosen, Tensor(adv))), -1.0)
    err = ops.sub(Tensor(R.astype(dtype)), values)
    value = ops.scale(ops.total(ops.mul(err, err)), value_coef)
    ent = ops.scale(ops.total(ops.mul(p, logp)), -1.0)
    loss = ops.sub(ops.add(policy, value), ops.scale(ent, entropy_coef))
    return LossParts(loss, float(policy.data), float(value.data), float(ent.data))


def compute_gradients(
    model: OMTModel, params: dict[str, np.ndarray], batch: Batch, actions, rewards, bootstrap, cfg: TrainConfig, check_finite: bool = False
):
    tape = Tape(check_finite=check_finite)
    P = {k: tape.param(k, v) for k, v in params.items()}
    logits, values, _ = model.forward(P, batch)
    parts = a3c_loss(logits, values, actions, rewards, bootstrap, cfg.gamma, cfg.entropy_coef, cfg.value_coef)
    return backward(tape, parts.loss), parts


class SharedParams:
    """Global parameters packed in one flat vector that is swapped, never written in place."""

    def __init__(self, params: dict[str, np.ndarray], rms: RmspropState):
        self.layout = ParamLayout({k: v.shape for k, v in params.items()})
        self.dtype = next(iter(params.values())).dtype
        self.flat = self.layout.flatten(params, self.dtype)
        self.params = self.layout.unflatten(self.flat)
        self.rms = rms
        self.frames = 0
        self.episodes = 0
        self.lock = threading.Lock()

    def snapshot(self) -> dict[str, np.ndarray]:
        return self.params

    def apply(self, grads: dict[str, np.ndarray], lr: float, clip_norm: float | None = None) -> float:
        """Clip by global norm and take one RMSprop step; returns the pre-clip norm."""
        g = self.layout.flatten(grads, self.dtype)
        norm = math.sqrt(float(np.dot(g, g)))
        if clip_norm is not None and norm > clip_norm:
            g *= self.dtype.type(clip_norm / norm)
        with self.lock:
            acc = self.rms.acc.get("theta")
            if acc is None:
                acc = self.rms.acc["theta"] = np.zeros_like(self.flat)
            new = rmsprop_flat(self.flat, g, acc, self.rms.decay, self.rms.eps, lr)
            self.flat = new
            self.params = self.layout.unflatten(new)
        return norm

    def add_frames(self, n: int) -> int:
        with self.lock:
            self.frames += n
            return self.frames

    def next_episode(self) -> int:
        with self.lock:
            self.episodes += 1
            return self.episodes


class Agent:
    """Rolls the memory forward and queries a policy; shared by training and evaluation."""

    def __init__(self, model: OMTModel, perception: Perception, dtype=np.float32):
        self.model = model
        self.perception = perception
        self.dtype = np.dtype(dtype)
        self.memory = ObjectSceneMemory(model.dims.memory, model.dims.d_v, dtype=self.dtype)
        self.target_vec: np.ndarray | None = None
        self.target = -1

    def begin(self, task: Task, obs: Observation) -> None:
        self.memory.clear()
        self.target = task.target
        self.target_vec = self.perception.target(task.target).astype(self.dtype)
        self.observe(obs)

    def observe(self, obs: Observation) -> None:
        self.memory.push(self.perception.scene(obs.raster), self.perception.grid(obs.detections, self.target))

    def snapshot(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.memory.read()

    def batch(self) -> Batch:
        s, g, m = self.memory.read()
        return Batch(s[None], g[None], m[None], self.target_vec[None])

    def output(self, params: dict[str, np.ndarray]) -> AgentOutput:
        return self.model.infer(params, self.batch())[0]


@dataclass
class EpisodeStats:
    frame: int
    worker: int
    episode: int
    steps: int
    success: bool
    ret: float
    sr_window100: float
    lr: float


class Worker:
    def __init__(self, wid: int, cfg: TrainConfig, env_cfg: EnvConfig, dims: ModelDims, shared: SharedParams, perception: Perception):
        self.wid = wid
        self.cfg = cfg
        self.shared = shared
        self.model = OMTModel(dims, cfg.variant)
        self.env = GridWorld(env_cfg)
        self.agent = Agent(self.model, perception, cfg.dtype)
        self.rng = rngmod.stream(cfg.seed, rngmod.WORKER, wid)
        self.task_rng = rngmod.stream(cfg.seed, rngmod.WORKER_ENV, wid)
        self.state = None
        self.ep_return = 0.0

    def _new_episode(self) -> None:
        lo, hi = self.cfg.train_layouts
        seed = int(self.task_rng.integers(lo, hi))
        task = self.env.generate_task(seed, int(self.task_rng.integers(1 << 30)))
        self.state, obs = self.env.reset(task)
        self.agent.begin(task, obs)
        self.ep_return = 0.0

    def run_segment(self, recent: deque, on_episode) -> int:
        """Roll out up to ``t_max`` steps, then apply one gradient update.  Returns frames used."""
        cfg = self.cfg
        if self.state is None:
            self._new_episode()
        params = self.shared.snapshot()
        scenes, grids, masks, actions, rewards = [], [], [], [], []
        terminal = False
        for _ in range(cfg.t_max):
            s, g, m = self.agent.snapshot()
            out = self.agent.output(params)
            a = act(out, self.rng, "sample")
            self.state, obs, r, done, info = self.env.step(self.state, a)
            scenes.append(s)
            grids.append(g)
            masks.append(m)
            actions.append(a)
            rewards.append(r)
            self.ep_return += r
            if done:
                terminal = True
                break
            self.agent.observe(obs)
        bootstrap = 0.0 if terminal else self.agent.output(params).value
        n = len(actions)
        batch = Batch(
            np.stack(scenes),
            np.stack(grids),
            np.stack(masks),
            np.broadcast_to(self.agent.target_vec, (n, self.agent.target_vec.shape[0])),
        )
        grads, parts = compute_gradients(self.model, params, batch, actions, rewards, bootstrap, cfg)
        if not np.isfinite(parts.loss.data).all():
            raise FloatingPointError("non-finite A3C loss")
        lr = lr_at(min(self.shared.frames, cfg.total_frames), cfg.total_frames, cfg.lr)
        norm = self.shared.apply(grads, lr, cfg.clip_norm)
        if not np.isfinite(norm):
            raise FloatingPointError("non-finite gradient norm")
        frame = self.shared.add_frames(n)
        if terminal:
            recent.append(bool(self.state.success))
            ep = self.shared.next_episode()
            on_episode(
                EpisodeStats(frame, self.wid, ep, self.state.steps, bool(self.state.success), self.ep_return, sum(recent) / len(recent), lr)
            )
            self.state = None
        return n


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    metrics: list[EpisodeStats] = field(default_factory=list)
    frames: int = 0
    seconds: float = 0.0


def initial_params(cfg: TrainConfig, dims: ModelDims) -> dict[str, np.ndarray]:
    model = OMTModel(dims, cfg.variant)
    return model.init_params(rngmod.stream(cfg.seed, rngmod.PARAM_INIT), cfg.dtype)


def train_run(
    cfg: TrainConfig,
    env_cfg: EnvConfig,
    dims: ModelDims,
    out_dir: str | Path | None = None,
    progress_every: float = 0.0,
) -> TrainResult:
    """Train with ``cfg.workers`` actor-learners until ``cfg.total_frames`` frames are consumed.

    With one worker everything runs on the calling thread and the run is
    bit-reproducible; with more, workers are threads racing on the shared
    parameters, so only the distribution of outcomes is reproducible.
    """
    cfg.validate()
    perception = Perception(env_cfg, dims.d_w, dims.d_v, cfg.perception_seed)
    shared = SharedParams(initial_params(cfg, dims), RmspropState(cfg.rms_decay, cfg.rms_eps))
    out = Path(out_dir) if out_dir is not None else None
    metrics: list[EpisodeStats] = []
    metrics_lock = threading.Lock()
    csv_fh = None
    writer = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        checkpoint.save(out / "checkpoint_0.omt", shared.params)
        csv_fh = open(out / "metrics.csv", "w", newline="", encoding="utf-8")
        writer = csv.writer(csv_fh)
        writer.writerow(METRIC_COLUMNS)

    recent: deque = deque(maxlen=100)
    state = {"next_ckpt": cfg.checkpoint_every, "last_report": time.time()}
    t0 = time.time()

    def on_episode(st: EpisodeStats) -> None:
        with metrics_lock:
            metrics.append(st)
            if writer is not None:
                writer.writerow([st.frame, st.worker, st.episode, st.steps, int(st.success), f"{st.ret:.6f}", f"{st.sr_window100:.4f}", f"{st.lr:.8e}"])
            if progress_every and time.time() - state["last_report"] > progress_every:
                state["last_report"] = time.time()
                log.info("frame %d  episodes %d  SR(100) %.3f", st.frame, st.episode, st.sr_window100)

    def maybe_checkpoint() -> None:
        if out is None or cfg.checkpoint_every <= 0:
            return
        with metrics_lock:
            if shared.frames >= state["next_ckpt"]:
                checkpoint.save(out / "checkpoint_last.omt", shared.snapshot())
                while state["next_ckpt"] <= shared.frames:
                    state["next_ckpt"] += cfg.checkpoint_every

    workers = [Worker(w, cfg, env_cfg, dims, shared, perception) for w in range(cfg.workers)]
    errors: list[BaseException] = []
    stop = threading.Event()

    def loop(worker: Worker) -> None:
        try:
            while not stop.is_set() and shared.frames < cfg.total_frames:
                worker.run_segment(recent, on_episode)
                maybe_checkpoint()
        except BaseException as exc:  # surfaced to the caller below
            errors.append(exc)
            stop.set()

    try:
        if cfg.total_frames > 0:
            if cfg.workers == 1:
                loop(workers[0])
            else:
                threads = [threading.Thread(target=loop, args=(w,), name=f"a3c-{w.wid}", daemon=True) for w in workers]
                for t in threads:
                    t.start()
                for t in threads:
                    t.join()
    finally:
        if csv_fh is not None:
            csv_fh.close()
    if errors:
        if out is not None:
            checkpoint.save(out / "checkpoint_last.omt", shared.snapshot())
        raise RuntimeError(f"worker failed: {errors[0]!r}") from errors[0]
    params = shared.snapshot()
    if out is not None:
        checkpoint.save(out / "checkpoint_final.omt", params)
    return TrainResult(params, metrics, shared.frames, time.time() - t0)
