"""
Seeded random streams.

Every run owns one `numpy.random.Philox` stream whose key is derived from
(master_seed, run_index) through `numpy.random.SeedSequence`, so the draws of a
run do not depend on which worker executes it or in what order runs finish.
Inside a run, draws are consumed sequentially in a fixed order documented by
each sampler.
"""
import typing as tp

import numpy as np

SEED_LIMIT = 2**64


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < SEED_LIMIT:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def derive_seed(master_seed: int, run_index: int) -> int:
    """Seed of run `run_index` under `master_seed`."""
    if run_index < 0:
        raise ValueError(f"run_index must be >= 0, got {run_index}")
    sequence = np.random.SeedSequence(check_seed(master_seed), spawn_key=(run_index,))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(check_seed(seed)))


class GaussianStream:
    """Standard-normal draws from one seeded generator, counting every scalar drawn."""

    def __init__(self, seed: int) -> None:
        self.seed = check_seed(seed)
        self.generator = make_generator(self.seed)
        self.consumed = 0

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__}(seed={self.seed}, consumed={self.consumed})>"

    def normal(self, shape: tp.Union[int, tp.Tuple[int, ...]]) -> np.ndarray:
        block = self.generator.standard_normal(shape)
        self.consumed += block.size
        return block
