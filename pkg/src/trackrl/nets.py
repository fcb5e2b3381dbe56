"""Minimal feed-forward neural stack in numpy.

Fixed-architecture MLPs (tanh hidden layers, linear output) with
hand-derived reverse-mode gradients, bias-corrected Adam, and categorical
/ multi-categorical heads built from concatenated per-branch logits.
Everything is float64; BLAS carries the matmuls.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

WEIGHTS_MAGIC = b"MLPW"
WEIGHTS_VERSION = 1


def orthogonal_init(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    """Orthogonal (or orthonormal-rows/cols) weight matrix, scaled by gain."""
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


class Mlp:
    """tanh-hidden MLP, linear final layer. Weights are (in, out): y = x @ W + b."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.weights = weights
        self.biases = biases
        self.dims = [weights[0].shape[0]] + [w.shape[1] for w in weights]

    @classmethod
    def init(cls, dims: list[int], rng: np.random.Generator,
             hidden_gain: float = np.sqrt(2.0), out_gain: float = 1.0) -> "Mlp":
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        weights, biases = [], []
        for i in range(len(dims) - 1):
            gain = out_gain if i == len(dims) - 2 else hidden_gain
            weights.append(orthogonal_init(rng, dims[i], dims[i + 1], gain))
            biases.append(np.zeros(dims[i + 1]))
        return cls(weights, biases)

    # -- forward / backward ---------------------------------------------------

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Batched forward. Returns (output, cache of layer inputs)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        cache = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i != last:
                h = np.tanh(h)
            cache.append(h)
        return h, cache

    def forward1(self, x: np.ndarray) -> np.ndarray:
        """Single-observation forward without keeping the cache."""
        out, _ = self.forward(x)
        return out[0]

    def backward(self, cache: list[np.ndarray], dout: np.ndarray,
                 with_dx: bool = False):
        """Gradients summed over the batch, given d(loss)/d(output).

        Returns a flat gradient list [dW0, db0, dW1, db1, ...] matching
        :attr:`params`; with ``with_dx`` also returns d(loss)/d(input).
        """
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        d = np.asarray(dout, dtype=np.float64)
        if d.ndim == 1:
            d = d[None, :]
        last = len(self.weights) - 1
        for i in range(last, -1, -1):
            x_in = cache[i]
            grads[2 * i] = x_in.T @ d
            grads[2 * i + 1] = d.sum(axis=0)
            if i > 0 or with_dx:
                d = d @ self.weights[i].T
                if i > 0:  # undo the tanh of the previous layer's output
                    d = d * (1.0 - cache[i] * cache[i])
        if with_dx:
            return grads, d
        return grads

    # -- parameter access --------------------------------------------------------

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for p in self.params:
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size
        if i != flat.size:
            raise ValueError("flat vector size mismatch")

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])


class Adam:
    """Adam with bias correction; operates in place on a param list."""

    def __init__(self, params: list[np.ndarray], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def state_dict(self) -> dict:
        return {"t": self.t, "m": [m.copy() for m in self.m], "v": [v.copy() for v in self.v]}

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        self.m = [np.array(m) for m in state["m"]]
        self.v = [np.array(v) for v in state["v"]]


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


class MultiCategorical:
    """Independent categorical distribution per action branch.

    Built from concatenated logits of shape (B, sum(cards)); branch i
    owns the slice of width cards[i].
    """

    def __init__(self, logits: np.ndarray, cards: tuple[int, ...]):
        logits = np.asarray(logits, dtype=np.float64)
        if logits.ndim == 1:
            logits = logits[None, :]
        if logits.shape[1] != sum(cards):
            raise ValueError(f"logits width {logits.shape[1]} != sum of branch sizes {sum(cards)}")
        self.cards = tuple(cards)
        self.branch_logits: list[np.ndarray] = []
        self.branch_log_probs: list[np.ndarray] = []
        start = 0
        for c in cards:
            bl = logits[:, start:start + c]
            self.branch_logits.append(bl)
            self.branch_log_probs.append(log_softmax(bl))
            start += c

    @property
    def probs(self) -> list[np.ndarray]:
        return [np.exp(lp) for lp in self.branch_log_probs]

    def log_prob(self, actions: np.ndarray) -> np.ndarray:
        """Sum over branches of log softmax(logits)[a_i]; shape (B,)."""
        a = np.asarray(actions, dtype=np.int64)
        if a.ndim == 1:
            a = a[None, :]
        rows = np.arange(a.shape[0])
        total = np.zeros(a.shape[0])
        for i, lp in enumerate(self.branch_log_probs):
            total += lp[rows, a[:, i]]
        return total

    def entropy(self) -> np.ndarray:
        """Sum of per-branch entropies; shape (B,)."""
        total = np.zeros(self.branch_log_probs[0].shape[0])
        for lp in self.branch_log_probs:
            total -= (np.exp(lp) * lp).sum(axis=1)
        return total

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF sampling, one uniform draw per branch per row."""
        b = self.branch_log_probs[0].shape[0]
        out = np.empty((b, len(self.cards)), dtype=np.int64)
        for i, lp in enumerate(self.branch_log_probs):
            cdf = np.cumsum(np.exp(lp), axis=1)
            u = rng.random(b)
            out[:, i] = np.minimum((u[:, None] >= cdf).sum(axis=1), self.cards[i] - 1)
        return out

    def mode(self) -> np.ndarray:
        return np.stack([lp.argmax(axis=1) for lp in self.branch_log_probs], axis=1)


# -- weight file format ---------------------------------------------------------
#
# Little-endian flat binary:
#   magic "MLPW" | u32 version | u32 n_dims | u32*n_dims dims
#   | u32 n_branches | u32*n_branches cardinalities
#   | float32 payload: per layer, W row-major (in, out) then b.
#
# cardinalities describe how the final layer splits into action branches;
# empty for plain nets (e.g. the value function). The payload is float32,
# so save -> load -> save is byte-identical.


def save_weights(path: str | Path, mlp: Mlp, branch_cards: tuple[int, ...] = ()) -> None:
    if branch_cards and sum(branch_cards) != mlp.dims[-1]:
        raise ValueError("branch cardinalities must sum to the output dim")
    header = WEIGHTS_MAGIC + struct.pack("<I", WEIGHTS_VERSION)
    header += struct.pack("<I", len(mlp.dims)) + struct.pack(f"<{len(mlp.dims)}I", *mlp.dims)
    header += struct.pack("<I", len(branch_cards))
    if branch_cards:
        header += struct.pack(f"<{len(branch_cards)}I", *branch_cards)
    payload = b"".join(
        np.ascontiguousarray(p, dtype="<f4").tobytes() for p in mlp.params
    )
    Path(path).write_bytes(header + payload)


def load_weights(path: str | Path) -> tuple[Mlp, tuple[int, ...]]:
    raw = Path(path).read_bytes()
    if raw[:4] != WEIGHTS_MAGIC:
        raise ValueError(f"{path}: not a weight file (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != WEIGHTS_VERSION:
        raise ValueError(f"{path}: unsupported weight file version {version}")
    off = 8
    (n_dims,) = struct.unpack_from("<I", raw, off)
    off += 4
    dims = list(struct.unpack_from(f"<{n_dims}I", raw, off))
    off += 4 * n_dims
    (n_branches,) = struct.unpack_from("<I", raw, off)
    off += 4
    cards = tuple(struct.unpack_from(f"<{n_branches}I", raw, off)) if n_branches else ()
    off += 4 * n_branches

    weights, biases = [], []
    for i in range(len(dims) - 1):
        n = dims[i] * dims[i + 1]
        w = np.frombuffer(raw, dtype="<f4", count=n, offset=off).astype(np.float64)
        off += 4 * n
        b = np.frombuffer(raw, dtype="<f4", count=dims[i + 1], offset=off).astype(np.float64)
        off += 4 * dims[i + 1]
        weights.append(w.reshape(dims[i], dims[i + 1]))
        biases.append(b)
    if off != len(raw):
        raise ValueError(f"{path}: trailing bytes in weight file")
    return Mlp(weights, biases), cards


def policy_net(obs_dim: int, hidden: tuple[int, ...], cards: tuple[int, ...],
               rng: np.random.Generator) -> Mlp:
    """Policy trunk + logits layer (small output gain keeps initial policy near-uniform)."""
    return Mlp.init([obs_dim, *hidden, sum(cards)], rng, out_gain=0.01)


def value_net(obs_dim: int, hidden: tuple[int, ...], rng: np.random.Generator) -> Mlp:
    return Mlp.init([obs_dim, *hidden, 1], rng, out_gain=1.0)
