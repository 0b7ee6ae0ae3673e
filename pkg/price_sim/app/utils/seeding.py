import numpy as np

# Stream ids under one scenario seed; each is independent of mechanism decisions
THETA_STREAM = 0
FEATURE_STREAM = 1
NOISE_STREAM = 2

MAX_SEED = 2**64 - 1


def make_stream(seed: int, stream: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by (seed, stream)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed, e.g. one per repeat."""
    state = np.random.SeedSequence([seed, *keys]).generate_state(1, dtype=np.uint64)
    return int(state[0])
