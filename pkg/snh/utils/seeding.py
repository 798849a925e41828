# every consumer draws from SeedSequence(seed, spawn_key=(stream, *indices))
import numpy as np

COLLECT = 1
TRAIN = 2  # index: position of the size in the ladder
WORKLOAD = 3
SYNTHETIC = 4
SEARCH = 5  # indices: candidate position, repeat
ENSEMBLE = 6
SWEEP = 7  # index: repeat


def seed_sequence(seed: int, stream: int, *indices: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(stream, *indices))


def derive_rng(seed: int, stream: int, *indices: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, stream, *indices))


def derive_seed(seed: int, stream: int, *indices: int) -> int:
    """Plain 32-bit integer seed, for libraries that take ``random_state``."""
    return int(seed_sequence(seed, stream, *indices).generate_state(1)[0])
