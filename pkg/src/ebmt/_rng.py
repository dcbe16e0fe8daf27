"""Counter-based random streams.

Every stochastic stage draws from a Philox generator keyed by the master
seed plus a tuple of integers naming the stage (replication index, stage
tag, resample index, ...).  Streams are independent of execution order and
worker count, so any parallel schedule reproduces the serial results
bit for bit.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np


class Stage(IntEnum):
    """Tags naming the stochastic stages within one replication."""

    COVARIATES = 0
    TREATMENTS = 1
    OUTCOME = 2
    BOOTSTRAP = 3


def substream(seed, *key: int) -> np.random.Generator:
    """Generator for the stream named by ``key`` under ``seed``.

    ``seed`` may be an integer or an existing ``SeedSequence``, in which
    case ``key`` extends its spawn key.
    """
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(
            entropy=seed.entropy,
            spawn_key=tuple(seed.spawn_key) + key,
        )
    else:
        ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
