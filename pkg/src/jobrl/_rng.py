import numpy as np

RNG_ALGORITHM = "numpy.PCG64"

# Fixed order: adding a name at the end keeps existing streams unchanged.
SUBSTREAMS = ("generation", "policy", "replay", "init", "evaluation")


def make_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def substream(seed, name):
    """Independent generator for a named purpose, derived from one seed."""
    key = SUBSTREAMS.index(name)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(key,))))


def derive_seed(seed, name):
    """A plain 64-bit integer seed for ``name``, for when a seed must be stored."""
    key = SUBSTREAMS.index(name)
    return int(np.random.SeedSequence(seed, spawn_key=(key,)).generate_state(1, np.uint64)[0])
