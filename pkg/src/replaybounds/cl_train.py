"""Replay-based continual training under the supersample protocol.

Tasks are trained in order. Each step draws a current-task mini-batch and,
when a buffer is present, a buffer mini-batch (task rows x sample columns);
the two are concatenated so each example carries equal weight.
"""
from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import ModelSpec, Params, grad_batch, init_params, losses, predict
from .numerics import RngStream
from .tasks import BufferIndex, TaskSequence, draw_buffer_index

RECORD_FORMAT_VERSION = 1


class NonFiniteParams(FloatingPointError):
    pass


@dataclass(frozen=True)
class OptimizerCfg:
    kind: str = "sgd"
    eta: float = 0.5
    eta_schedule: str = "constant"  # or "inverse": eta / r at step r of a task
    xi: float = 0.0
    steps_per_task: int = 100
    batch_buffer: tuple = (2, 4)  # (tasks, samples) per buffer mini-batch
    batch_current: int = 8
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    probe: bool = False
    m_probes: int = 16

    def __post_init__(self):
        if self.kind not in ("sgd", "sgld", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.eta_schedule not in ("constant", "inverse"):
            raise ValueError(f"unknown eta_schedule {self.eta_schedule!r}")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.xi < 0:
            raise ValueError("xi must be nonnegative")
        if self.steps_per_task < 1:
            raise ValueError("steps_per_task must be >= 1")
        if self.batch_current < 1 or min(self.batch_buffer) < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.probe and self.m_probes < 2:
            raise ValueError("m_probes must be >= 2")

    def eta_at(self, r: int) -> float:
        """Learning rate at 1-based step r of a task."""
        return self.eta if self.eta_schedule == "constant" else self.eta / r

    def xi_at(self, r: int) -> float:
        return self.xi

    def to_dict(self) -> dict:
        d = asdict(self)
        d["batch_buffer"] = list(self.batch_buffer)
        d["adam_betas"] = list(self.adam_betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerCfg":
        d = dict(d)
        for key in ("batch_buffer", "adam_betas"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class BufferPolicy:
    """How the buffer (U, V) is chosen at each task.

    fixed:  (U, V) is drawn once for the final task; earlier tasks replay
            the rows of U that precede them.
    redraw: a fresh buffer with min(k, t) task rows is drawn at every task t.
    `final`, when given, pins the final-task buffer (used to share (U, V)
    across a block of runs).
    """

    kind: str = "fixed"
    k: int = 0
    l: int = 0
    mode: str = "uniform"
    final: BufferIndex | None = None

    def __post_init__(self):
        if self.kind not in ("fixed", "redraw"):
            raise ValueError(f"unknown buffer policy {self.kind!r}")
        if (self.k == 0) != (self.l == 0):
            raise ValueError("k and l must both be zero or both be positive")


def draw_final_buffer(seq: TaskSequence, S: np.ndarray, policy: BufferPolicy, rng: RngStream) -> BufferIndex:
    if policy.final is not None:
        return policy.final
    if policy.k == 0:
        return BufferIndex.empty()
    return draw_buffer_index(seq.T - 1, policy.k, policy.l, seq.n, rng, policy.mode, _train_labels(seq, S),
                             seq.num_classes)


def _train_labels(seq: TaskSequence, S: np.ndarray) -> np.ndarray:
    t = np.arange(seq.T)[:, None]
    j = np.arange(seq.n)[None, :]
    return seq.labels[t, j, S.astype(int)]


class AccessAudit:
    """Records every (task, sample, column) cell read while building training views."""

    def __init__(self):
        self.cells: set = set()

    def record(self, tasks, samples, cols) -> None:
        for c in zip(np.ravel(tasks).tolist(), np.ravel(samples).tolist(), np.ravel(cols).tolist()):
            self.cells.add(c)

    def test_reads(self, S: np.ndarray) -> int:
        return sum(1 for t, j, c in self.cells if c != int(S[t, j]))


def _current_view(seq, S, t, audit):
    j = np.arange(seq.n)
    cols = S[t].astype(int)
    if audit is not None:
        audit.record(np.full(seq.n, t), j, cols)
    return seq.features[t, j, cols], seq.labels[t, j, cols]


def _buffer_view(seq, S, buf: BufferIndex, audit):
    """Features (k, l, dim) and labels (k, l) of the buffer's training elements."""
    t = buf.tasks[:, None]
    j = buf.samples
    cols = S[t, j].astype(int)
    if audit is not None:
        audit.record(np.broadcast_to(t, j.shape), j, cols)
    return seq.features[t, j, cols], seq.labels[t, j, cols]


def _draw_batch(g, current_view, buffer_view, opt: OptimizerCfg):
    Xc, yc = current_view
    idx = g.choice(len(yc), size=min(opt.batch_current, len(yc)), replace=False)
    X, y = Xc[idx], yc[idx]
    if buffer_view is not None:
        Xb, yb = buffer_view
        k, l = yb.shape
        bu = g.choice(k, size=min(opt.batch_buffer[0], k), replace=False)
        bv = g.choice(l, size=min(opt.batch_buffer[1], l), replace=False)
        Xsel = Xb[bu][:, bv].reshape(-1, Xb.shape[-1])
        ysel = yb[bu][:, bv].reshape(-1)
        X = np.concatenate([Xsel, X])
        y = np.concatenate([ysel, y])
    return X, y


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def optimizer_step(params: Params, batch, step_index: int, opt: OptimizerCfg,
                   noise: np.random.Generator | None = None, state: AdamState | None = None) -> Params:
    """One update. step_index is 1-based within the current task.

    sgd:  W + eta * G
    sgld: W + eta * G + N, N ~ Normal(0, xi^2 I)
    adam: bias-corrected moment update on -G
    """
    X, y = batch
    G = grad_batch(params, X, y)
    eta = opt.eta_at(step_index)
    theta = params.theta
    if opt.kind == "adam":
        if state is None:
            raise ValueError("adam needs an AdamState")
        b1, b2 = opt.adam_betas
        g = -G
        state.t += 1
        state.m = b1 * state.m + (1 - b1) * g
        state.v = b2 * state.v + (1 - b2) * g * g
        mhat = state.m / (1 - b1 ** state.t)
        vhat = state.v / (1 - b2 ** state.t)
        new = theta - eta * mhat / (np.sqrt(vhat) + opt.adam_eps)
    else:
        new = theta + eta * G
        if opt.kind == "sgld":
            xi = opt.xi_at(step_index)
            if xi > 0:
                if noise is None:
                    raise ValueError("sgld needs a noise generator")
                new = new + xi * noise.standard_normal(theta.shape)
    return Params(params.spec, new)


def probe_grad_covariance(params: Params, buffer_view, current_view, opt: OptimizerCfg, m_probes: int,
                          g: np.random.Generator) -> np.ndarray:
    """m_probes mini-batch gradients at fixed params, centered by their mean (m_probes x d)."""
    if m_probes < 2:
        raise ValueError("m_probes must be >= 2")
    if len(current_view[1]) == 0:
        raise ValueError("empty current view")
    rows = np.stack([grad_batch(params, *_draw_batch(g, current_view, buffer_view, opt)) for _ in range(m_probes)])
    return rows - rows.mean(axis=0)


@dataclass(eq=False)
class LossTable:
    """Losses of both supersample columns for every evaluated (task, sample) cell.

    group is 0 for buffer cells and 1 for current-task cells; buffer rows come first.
    """

    task: np.ndarray
    sample: np.ndarray
    losses: np.ndarray  # (N, 2)
    s: np.ndarray
    group: np.ndarray

    @property
    def size(self) -> int:
        return len(self.task)

    @property
    def train_loss(self) -> np.ndarray:
        return self.losses[np.arange(self.size), self.s]

    @property
    def test_loss(self) -> np.ndarray:
        return self.losses[np.arange(self.size), 1 - self.s]

    @property
    def delta(self) -> np.ndarray:
        return self.losses[:, 1] - self.losses[:, 0]

    def to_dict(self) -> dict:
        binary = bool(np.all((self.losses == 0) | (self.losses == 1)))
        if binary:
            payload = np.packbits(self.losses.astype(np.uint8).ravel()).tobytes()
            enc = "bits"
        else:
            payload = self.losses.astype("<f8").tobytes()
            enc = "f8"
        return {
            "task": self.task.tolist(),
            "sample": self.sample.tolist(),
            "s": self.s.tolist(),
            "group": self.group.tolist(),
            "encoding": enc,
            "losses": base64.b64encode(payload).decode("ascii"),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossTable":
        N = len(d["task"])
        raw = base64.b64decode(d["losses"])
        if d["encoding"] == "bits":
            vals = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[: 2 * N].astype(float)
        else:
            vals = np.frombuffer(raw, dtype="<f8").astype(float)
        return cls(np.asarray(d["task"], dtype=np.int64), np.asarray(d["sample"], dtype=np.int64),
                   vals.reshape(N, 2), np.asarray(d["s"], dtype=np.int64), np.asarray(d["group"], dtype=np.int64))


def _table_cells(seq: TaskSequence, buffer: BufferIndex):
    bc = buffer.cells()
    tasks = np.concatenate([bc[:, 0], np.full(seq.n, seq.T - 1)]).astype(np.int64)
    samples = np.concatenate([bc[:, 1], np.arange(seq.n)]).astype(np.int64)
    group = np.concatenate([np.zeros(len(bc), dtype=np.int64), np.ones(seq.n, dtype=np.int64)])
    return tasks, samples, group


def _table_from_predictions(seq, S, tasks, samples, group, pred0, pred1) -> LossTable:
    L = np.stack([pred0 != seq.labels[tasks, samples, 0], pred1 != seq.labels[tasks, samples, 1]], axis=1)
    return LossTable(tasks, samples, L.astype(float), S[tasks, samples].astype(np.int64), group)


def evaluate_losses(params: Params, seq: TaskSequence, S: np.ndarray, buffer: BufferIndex,
                    all_cells: bool = False) -> LossTable:
    """0-1 losses of both columns on the buffer cells and every current-task cell.

    all_cells=True evaluates every (task, sample) instead (diagnostics; group
    is then 1 for the final task and 0 elsewhere).
    """
    if all_cells:
        tasks = np.repeat(np.arange(seq.T), seq.n)
        samples = np.tile(np.arange(seq.n), seq.T)
        group = (tasks == seq.T - 1).astype(np.int64)
    else:
        tasks, samples, group = _table_cells(seq, buffer)
    p0 = predict(params, seq.features[tasks, samples, 0])
    p1 = predict(params, seq.features[tasks, samples, 1])
    return _table_from_predictions(seq, S, tasks, samples, group, p0, p1)


@dataclass(eq=False)
class RunRecord:
    seed: int
    path: tuple
    S: np.ndarray
    buffers: list  # BufferIndex used at each task (index 0 is the first task)
    final_params: Params | None
    loss_table: LossTable
    probe_log: list | None
    config: dict
    status: str = "ok"
    block: int = 0
    training_surrogate: float = float("nan")

    @property
    def buffer(self) -> BufferIndex:
        return self.buffers[-1]

    @property
    def train_risk(self) -> float:
        return float(self.loss_table.train_loss.mean())

    def to_json(self) -> str:
        doc = {
            "format": "replaybounds.RunRecord",
            "version": RECORD_FORMAT_VERSION,
            "seed": self.seed,
            "path": list(self.path),
            "block": self.block,
            "status": self.status,
            "config": self.config,
            "S": base64.b64encode(np.packbits(self.S.astype(np.uint8).ravel()).tobytes()).decode("ascii"),
            "S_shape": list(self.S.shape),
            "buffers": [b.to_dict() for b in self.buffers],
            "params": None if self.final_params is None
            else base64.b64encode(self.final_params.to_bytes()).decode("ascii"),
            "loss_table": self.loss_table.to_dict(),
            "probe_log": None if self.probe_log is None else [p.tolist() for p in self.probe_log],
            "training_surrogate": self.training_surrogate,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        doc = json.loads(text)
        if doc.get("version") != RECORD_FORMAT_VERSION:
            raise ValueError(f"unsupported record version {doc.get('version')}")
        T, n = doc["S_shape"]
        S = np.unpackbits(np.frombuffer(base64.b64decode(doc["S"]), dtype=np.uint8))[: T * n].reshape(T, n)
        params = None if doc["params"] is None else Params.from_bytes(base64.b64decode(doc["params"]))
        probes = None if doc["probe_log"] is None else [np.asarray(p, dtype=float) for p in doc["probe_log"]]
        return cls(doc["seed"], tuple(doc["path"]), S.astype(np.uint8), [BufferIndex.from_dict(b) for b in doc["buffers"]],
                   params, LossTable.from_dict(doc["loss_table"]), probes, doc["config"], doc["status"],
                   doc["block"], doc["training_surrogate"])


def _task_buffers(seq, S, policy: BufferPolicy, final: BufferIndex, rng: RngStream) -> list:
    bufs = []
    for t in range(seq.T):
        if t == seq.T - 1:
            bufs.append(final)
        elif policy.kind == "fixed" or policy.k == 0 or t == 0:
            bufs.append(final.restrict(t) if final.k else BufferIndex.empty(final.l))
        else:
            bufs.append(draw_buffer_index(t, min(policy.k, t), policy.l, seq.n, rng.child("buffer", t),
                                          policy.mode, _train_labels(seq, S), seq.num_classes))
    return bufs


def run_continual(seq: TaskSequence, S: np.ndarray, policy: BufferPolicy, opt: OptimizerCfg, model: ModelSpec,
                  rng: RngStream, audit: AccessAudit | None = None, block: int = 0,
                  config: dict | None = None) -> RunRecord:
    """Train tasks 0..T-1 in order with replay, warm-starting each task; evaluate at the final params.

    Probes (sgld with opt.probe) are taken at every step of the final task,
    before the update, at the current parameters.
    """
    if S.shape != (seq.T, seq.n):
        raise ValueError(f"membership shape {S.shape} != ({seq.T}, {seq.n})")
    if model.input_dim != seq.dim or model.classes < seq.num_classes:
        raise ValueError("model spec does not match the task sequence")
    final = draw_final_buffer(seq, S, policy, rng.child("buffer", "final"))
    buffers = _task_buffers(seq, S, policy, final, rng)
    params = init_params(model, rng.child("init"))
    probing = opt.kind == "sgld" and opt.probe
    probe_log = [] if probing else None
    state = AdamState(np.zeros(model.num_params), np.zeros(model.num_params)) if opt.kind == "adam" else None
    status = "ok"
    for t in range(seq.T):
        cur = _current_view(seq, S, t, audit)
        buf = buffers[t]
        bview = _buffer_view(seq, S, buf, audit) if buf.size else None
        g_batch = rng.child("batch", t).generator()
        g_noise = rng.child("noise", t).generator()
        g_probe = rng.child("probe", t).generator()
        for r in range(1, opt.steps_per_task + 1):
            if probing and t == seq.T - 1:
                probe_log.append(probe_grad_covariance(params, bview, cur, opt, opt.m_probes, g_probe))
            params = optimizer_step(params, _draw_batch(g_batch, cur, bview, opt), r, opt, g_noise, state)
            if not np.all(np.isfinite(params.theta)):
                status = f"nonfinite parameters at task {t} step {r}"
                break
        if status != "ok":
            break
    if status != "ok":
        raise NonFiniteParams(status)
    table = evaluate_losses(params, seq, S, final)
    tr_X, tr_y = _training_set(seq, S, final)
    surrogate = float(losses(params, tr_X, tr_y, "surrogate").mean())
    return RunRecord(rng.master_seed, rng.path, S.astype(np.uint8), buffers, params, table, probe_log,
                     config or {}, status, block, surrogate)


def _training_set(seq, S, buf: BufferIndex):
    Xc, yc = _current_view(seq, S, seq.T - 1, None)
    if not buf.size:
        return Xc, yc
    Xb, yb = _buffer_view(seq, S, buf, None)
    return np.concatenate([Xb.reshape(-1, seq.dim), Xc]), np.concatenate([yb.reshape(-1), yc])


def run_memorizer(seq: TaskSequence, S: np.ndarray, buffer: BufferIndex, rng: RngStream, block: int = 0) -> RunRecord:
    """1-nearest-neighbour learner on the final training set (buffer + current task).

    Training loss is zero whenever training features are distinct, so this is
    an interpolating learner whatever the labels.
    """
    X, y = _training_set(seq, S, buffer)
    tasks, samples, group = _table_cells(seq, buffer)

    def nn(Q):
        d2 = (Q * Q).sum(1)[:, None] - 2 * Q @ X.T + (X * X).sum(1)[None, :]
        return y[np.argmin(d2, axis=1)]

    p0 = nn(seq.features[tasks, samples, 0])
    p1 = nn(seq.features[tasks, samples, 1])
    table = _table_from_predictions(seq, S, tasks, samples, group, p0, p1)
    return RunRecord(rng.master_seed, rng.path, S.astype(np.uint8), [buffer], None, table, None,
                     {"learner": "nearest_neighbour"}, "ok", block)
