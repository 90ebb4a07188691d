"""Per-(station, episode) random streams derived from one master seed.

Streams never depend on execution order, worker count or transfer settings,
which is what makes parallel runs and naive/experienced comparisons line up.
"""

import numpy as np

FLOW_STREAM = 0
AGENT_STREAM = 1


def stream(master_seed: int, station_id: int, episode: int, kind: int) -> np.random.Generator:
    if master_seed < 0 or station_id < 0 or episode < 0:
        raise ValueError("seed, station id and episode must be non-negative")
    seq = np.random.SeedSequence(master_seed, spawn_key=(station_id, episode, kind))
    return np.random.Generator(np.random.PCG64(seq))
