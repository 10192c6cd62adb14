"""Counter-based random streams derived from one master seed.

Every consumer asks for ``stream(seed, PURPOSE, *counters)``; distinct purposes
and counters give statistically independent generators, so adding a draw in
one place never shifts the numbers seen elsewhere.
"""

import numpy as np

INIT = 0
PARTITION = 1
SAMPLING = 2
CLIENT = 3
MASK = 4
POOL = 5
PROBE = 6
SYNTH = 7
WARMSTART = 8


def stream(seed: int, purpose: int, *counters: int) -> np.random.Generator:
    key = [int(seed) & 0xFFFFFFFF, int(purpose), *(int(c) for c in counters)]
    return np.random.default_rng(np.random.SeedSequence(key))
