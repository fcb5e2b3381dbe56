"""Seed fan-out.

Every source of randomness in the package is a PCG64 generator derived
from the run's root seed through a labelled ``SeedSequence`` child, so a
run is reproducible across platforms and each consumer can be re-derived
in isolation (training env, eval env, action sampling, minibatch
shuffling, weight init, ...).
"""

from __future__ import annotations

import numpy as np

# Label -> entropy word appended to the root seed. Codes are part of the
# reproducibility contract: never reorder or reuse.
STREAM_CODES = {
    "env-train": 0x01,
    "env-eval": 0x02,
    "env-eval-expert": 0x03,
    "policy-init": 0x10,
    "value-init": 0x11,
    "expert-init": 0x12,
    "policy-sample": 0x20,
    "eval-sample": 0x21,
    "eval-sample-expert": 0x22,
    "expert-ce-sample": 0x23,
    "minibatch": 0x30,
    "bc-train": 0x31,
    "demo-collect": 0x40,
    "expert-act": 0x41,
}


def stream(seed: int, label: str, *index: int) -> np.random.Generator:
    """Generator for `label` under root `seed`.

    Extra integer indices create per-event substreams (e.g. one per
    evaluation round) without consuming state from any other stream.
    """
    if label not in STREAM_CODES:
        raise KeyError(f"unknown rng stream label: {label!r}")
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be non-negative")
    words = [seed, STREAM_CODES[label], *(int(i) for i in index)]
    return np.random.default_rng(np.random.SeedSequence(words))


def stream_seed(seed: int, label: str, *index: int) -> int:
    """A plain integer seed derived like :func:`stream` (for env.reset)."""
    return int(stream(seed, label, *index).integers(0, 2**63 - 1))


def get_state(gen: np.random.Generator) -> dict:
    return gen.bit_generator.state


def set_state(gen: np.random.Generator, state: dict) -> None:
    gen.bit_generator.state = state
