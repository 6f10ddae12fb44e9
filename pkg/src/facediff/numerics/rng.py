"""Seeded counter-based random number generation.

Every stochastic draw in the package (noise, dropout, shuffles, synthetic
data) goes through generators built here so that runs are reproducible
from a single integer seed. Philox is a 64-bit counter-based generator,
which keeps streams identical across platforms.
"""

import numpy as np


def make_rng(seed, *stream):
    """Build a Generator for ``seed``, optionally keyed by a sub-stream.

    ``make_rng(seed, "noise", 3)`` and ``make_rng(seed, "dropout")`` give
    independent, deterministic streams derived from the same seed. String
    stream keys are hashed to stable integers.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for key in stream:
        if isinstance(key, str):
            entropy.append(_str_key(key))
        else:
            entropy.append(int(key) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _str_key(s):
    # FNV-1a, stable across interpreter runs (unlike hash()).
    h = 0xCBF29CE484222325
    for b in s.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def rng_state(gen):
    """JSON-serializable snapshot of a Generator's state."""
    state = gen.bit_generator.state
    return {
        "bit_generator": state["bit_generator"],
        "counter": [int(x) for x in state["state"]["counter"]],
        "key": [int(x) for x in state["state"]["key"]],
        "buffer": [int(x) for x in state["buffer"]],
        "buffer_pos": int(state["buffer_pos"]),
        "has_uint32": int(state["has_uint32"]),
        "uinteger": int(state["uinteger"]),
    }


def restore_rng(snapshot):
    """Rebuild a Generator from an ``rng_state`` snapshot."""
    if snapshot["bit_generator"] != "Philox":
        raise ValueError(f"unsupported bit generator {snapshot['bit_generator']!r}")
    bg = np.random.Philox()
    bg.state = {
        "bit_generator": "Philox",
        "state": {
            "counter": np.array(snapshot["counter"], dtype=np.uint64),
            "key": np.array(snapshot["key"], dtype=np.uint64),
        },
        "buffer": np.array(snapshot["buffer"], dtype=np.uint64),
        "buffer_pos": snapshot["buffer_pos"],
        "has_uint32": snapshot["has_uint32"],
        "uinteger": snapshot["uinteger"],
    }
    return np.random.Generator(bg)
