"""A small numpy MLP for Q-value regression, with batch norm and RAdam.

Layout::

    [BatchNorm(input)]  ->  (Linear -> [BatchNorm] -> LeakyReLU) x blocks  ->  Linear

Weights are stored ``(out_features, in_features)``.  Everything is float64.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1


class NonFiniteLossError(FloatingPointError):
    def __init__(self, rows):
        self.rows = list(rows)
        super().__init__(f"non-finite loss at batch rows {self.rows[:10]}")


@dataclass(frozen=True)
class Block:
    width: int
    batchnorm: bool = True
    slope: float = 0.01


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    output_dim: int
    blocks: tuple[Block, ...]
    input_batchnorm: bool = False
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, Block) else Block(*b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        dims = [self.input_dim, self.output_dim, *(b.width for b in blocks)]
        if any(d <= 0 for d in dims):
            raise ValueError(f"layer widths must be positive, got {dims}")
        if any(not 0.0 <= b.slope <= 1.0 for b in blocks):
            raise ValueError("leaky-ReLU slope must lie in [0, 1]")

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(b.width for b in self.blocks)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        d = dict(d)
        d["blocks"] = tuple(Block(**b) for b in d["blocks"])
        return cls(**d)


def he_normal(rng: np.random.Generator, fan_out: int, fan_in: int, slope: float = 0.0) -> np.ndarray:
    std = math.sqrt(2.0 / ((1.0 + slope**2) * fan_in))
    return rng.normal(0.0, std, size=(fan_out, fan_in))


class QNetwork:
    def __init__(self, spec: NetworkSpec, params: dict, buffers: dict):
        self.spec = spec
        self.params = params
        self.buffers = buffers
        self.training = True
        self._cache = None

    # construction

    @classmethod
    def initialize(cls, spec: NetworkSpec, rng: np.random.Generator) -> "QNetwork":
        params, buffers = {}, {}
        if spec.input_batchnorm:
            _init_bn(params, buffers, "in_bn", spec.input_dim)
        fan_in = spec.input_dim
        for k, blk in enumerate(spec.blocks):
            params[f"fc{k}.W"] = he_normal(rng, blk.width, fan_in, blk.slope)
            params[f"fc{k}.b"] = np.zeros(blk.width)
            if blk.batchnorm:
                _init_bn(params, buffers, f"bn{k}", blk.width)
            fan_in = blk.width
        params["out.W"] = he_normal(rng, spec.output_dim, fan_in)
        params["out.b"] = np.zeros(spec.output_dim)
        return cls(spec, params, buffers)

    def train(self) -> "QNetwork":
        self.training = True
        return self

    def eval(self) -> "QNetwork":
        self.training = False
        return self

    def clone(self) -> "QNetwork":
        net = QNetwork(
            self.spec,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.buffers.items()},
        )
        net.training = self.training
        return net

    def copy_into(self, dst: "QNetwork") -> None:
        if dst.spec.input_dim != self.spec.input_dim or dst.spec.output_dim != self.spec.output_dim:
            raise ValueError("network shapes differ")
        for store, dst_store in ((self.params, dst.params), (self.buffers, dst.buffers)):
            if store.keys() != dst_store.keys():
                raise ValueError("network layouts differ")
            for k, v in store.items():
                if dst_store[k].shape != v.shape:
                    raise ValueError(f"shape mismatch for {k}: {v.shape} vs {dst_store[k].shape}")
                np.copyto(dst_store[k], v)

    # forward / backward

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Q-values for a batch of states (rows).  Train mode caches for backward."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.spec.input_dim:
            raise ValueError(f"expected {self.spec.input_dim} input columns, got {x.shape[1]}")
        train = self.training
        if train and x.shape[0] < 2:
            raise ValueError("train-mode forward needs a batch of at least 2 (batch statistics)")
        cache = []
        h = x
        if self.spec.input_batchnorm:
            h = self._bn_forward("in_bn", h, train, cache)
        for k, blk in enumerate(self.spec.blocks):
            W, b = self.params[f"fc{k}.W"], self.params[f"fc{k}.b"]
            cache.append(("fc", f"fc{k}", h))
            h = h @ W.T + b
            if blk.batchnorm:
                h = self._bn_forward(f"bn{k}", h, train, cache)
            if train:
                cache.append(("act", blk.slope, h > 0))
            # max(h, a*h) is leaky ReLU for 0 <= a <= 1
            h = np.maximum(h, blk.slope * h)
        cache.append(("fc", "out", h))
        out = h @ self.params["out.W"].T + self.params["out.b"]
        self._cache = cache if train else None
        return out[0] if squeeze else out

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Eval-mode forward that leaves the current mode untouched."""
        mode = self.training
        self.training = False
        try:
            return self.forward(x)
        finally:
            self.training = mode

    def _bn_forward(self, name, h, train, cache):
        gamma, beta = self.params[f"{name}.gamma"], self.params[f"{name}.beta"]
        eps = self.spec.bn_eps
        if train:
            n = h.shape[0]
            mu = h.mean(axis=0)
            xhat = h - mu
            var = np.einsum("ij,ij->j", xhat, xhat) / n
            inv_std = 1.0 / np.sqrt(var + eps)
            xhat *= inv_std
            m = self.spec.bn_momentum
            n = h.shape[0]
            rm, rv = self.buffers[f"{name}.running_mean"], self.buffers[f"{name}.running_var"]
            rm *= 1 - m
            rm += m * mu
            rv *= 1 - m
            rv += m * var * n / (n - 1)
            cache.append(("bn", name, xhat, inv_std))
        else:
            rm, rv = self.buffers[f"{name}.running_mean"], self.buffers[f"{name}.running_var"]
            xhat = (h - rm) / np.sqrt(rv + eps)
        out = xhat * gamma
        out += beta
        return out

    def backward(self, dout: np.ndarray) -> dict[str, np.ndarray]:
        if self._cache is None:
            raise RuntimeError("backward needs a preceding train-mode forward")
        grads = {}
        d = dout
        for entry in reversed(self._cache):
            kind = entry[0]
            if kind == "fc":
                _, name, inp = entry
                grads[f"{name}.W"] = d.T @ inp
                grads[f"{name}.b"] = d.sum(axis=0)
                d = d @ self.params[f"{name}.W"]
            elif kind == "act":
                _, slope, positive = entry
                d = d * (slope + (1.0 - slope) * positive)
            else:
                _, name, xhat, inv_std = entry
                gamma = self.params[f"{name}.gamma"]
                n = d.shape[0]
                sum_d = d.sum(axis=0)
                sum_dx = np.einsum("ij,ij->j", d, xhat)
                grads[f"{name}.gamma"] = sum_dx
                grads[f"{name}.beta"] = sum_d
                # dL/dh = gamma * inv_std * (d - mean(d) - xhat * mean(d * xhat))
                d = d - sum_d / n
                d -= xhat * (sum_dx / n)
                d *= gamma * inv_std
        return grads

    def loss_and_grads(self, states, targets, actions):
        """Mean of (target - Q(s, a))^2 over the batch, with gradients.

        Only the output column of each row's chosen action receives gradient.
        """
        targets = np.asarray(targets, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.int64)
        q = self.forward(states)
        rows = np.arange(q.shape[0])
        diff = q[rows, actions] - targets
        bad = ~np.isfinite(diff)
        if bad.any():
            raise NonFiniteLossError(np.flatnonzero(bad).tolist())
        loss = float(np.mean(diff**2))
        dout = np.zeros_like(q)
        dout[rows, actions] = 2.0 * diff / q.shape[0]
        return loss, self.backward(dout)

    # persistence

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"param/{k}": v for k, v in self.params.items()}
        out.update({f"buffer/{k}": v for k, v in self.buffers.items()})
        return out


def _init_bn(params, buffers, name, width):
    params[f"{name}.gamma"] = np.ones(width)
    params[f"{name}.beta"] = np.zeros(width)
    buffers[f"{name}.running_mean"] = np.zeros(width)
    buffers[f"{name}.running_var"] = np.ones(width)


@dataclass
class RAdam:
    """Rectified Adam.

    Until the variance of the adaptive term is tractable (rho_t <= 4) the
    update is plain bias-corrected momentum; afterwards the Adam step is
    scaled by the rectification factor r_t.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float | None = None
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @property
    def rho_inf(self) -> float:
        return 2.0 / (1.0 - self.beta2) - 1.0

    def rho(self, t: int) -> float:
        b2t = self.beta2**t
        return self.rho_inf - 2.0 * t * b2t / (1.0 - b2t)

    def step(self, params: dict, grads: dict) -> None:
        if self.grad_clip is not None:
            norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if norm > self.grad_clip:
                scale = self.grad_clip / norm
                grads = {k: g * scale for k, g in grads.items()}
        self.t += 1
        t = self.t
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**t
        bias2 = 1.0 - b2**t
        rho_t = self.rho(t)
        if rho_t > 4.0:
            rho_inf = self.rho_inf
            r_t = math.sqrt(
                (rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)
            )
        else:
            r_t = None
        for k, g in grads.items():
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            v = self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / bias1
            if r_t is None:
                params[k] -= self.lr * m_hat
            else:
                params[k] -= self.lr * r_t * m_hat / (np.sqrt(v / bias2) + self.eps)

    def hyper(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "grad_clip": self.grad_clip, "t": self.t}

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"opt_m/{k}": v for k, v in self.m.items()}
        out.update({f"opt_v/{k}": v for k, v in self.v.items()})
        return out


def backward_and_step(net: QNetwork, optimizer: RAdam, states, targets, actions) -> float:
    net.train()
    loss, grads = net.loss_and_grads(states, targets, actions)
    optimizer.step(net.params, grads)
    return loss


def save_checkpoint(path: str | Path, net: QNetwork, optimizer: RAdam | None = None, extra: dict | None = None) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "spec": net.spec.to_dict(),
        "optimizer": None if optimizer is None else optimizer.hyper(),
        "extra": extra or {},
    }
    arrays = net.state_arrays()
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path: str | Path) -> tuple[QNetwork, RAdam | None, dict]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        groups: dict[str, dict] = {"param": {}, "buffer": {}, "opt_m": {}, "opt_v": {}}
        for key in data.files:
            if key == "meta":
                continue
            kind, name = key.split("/", 1)
            groups[kind][name] = data[key].copy()
    net = QNetwork(NetworkSpec.from_dict(meta["spec"]), groups["param"], groups["buffer"])
    opt = None
    if meta["optimizer"] is not None:
        opt = RAdam(**meta["optimizer"], m=groups["opt_m"], v=groups["opt_v"])
    return net, opt, meta["extra"]
