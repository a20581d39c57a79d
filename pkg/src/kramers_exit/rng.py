"""Counter-based random streams.

Every draw is a pure function of ``(seed, path, counter)``: a SplitMix64
finaliser applied to a per-path Weyl sequence.  Paths can therefore be
simulated in any order, by any number of workers, with identical results.
"""
import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
SEED_SALT = 0x5851F42D4C957F2D
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
INV_2_53 = 1.0 / 9007199254740992.0


def mix64(z):
    """SplitMix64 output function on uint64 arrays (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _mix64_int(z):
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def path_keys(seed, paths):
    """Stream keys for an array of path indices."""
    base = np.uint64(_mix64_int(int(seed) ^ SEED_SALT))
    paths = np.asarray(paths, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(base + np.uint64(GOLDEN) * (paths + np.uint64(1)))


def uniform(keys, counter):
    """Uniforms in [0, 1) for draw number ``counter`` of each stream."""
    offset = np.uint64((GOLDEN * (int(counter) + 1)) & MASK)
    with np.errstate(over="ignore"):
        words = mix64(np.asarray(keys, dtype=np.uint64) + offset)
    return (words >> _S11).astype(np.float64) * INV_2_53


def uniforms(seed, path, start, n):
    """Consecutive draws of one stream (mirrors the compiled helper)."""
    key = path_keys(seed, [path])
    return np.array([uniform(key, start + i)[0] for i in range(n)])
