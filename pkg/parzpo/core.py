"""Parameter vectors, coordinate partitions, masks, and seeded randomness.

Every other module builds on the objects defined here. Block indices are
0-based in the Python API; documentation and file formats use 1-based
indices.
"""

from dataclasses import dataclass
from enum import IntEnum
import numpy as np

# pinned generator identity, recorded in every trace header
GENERATOR = "numpy.random.PCG64 seeded by SeedSequence(seed, spawn_key=stream_id)"


def param_vector(values, d=None):
    """Create an immutable parameter vector.

    The vector is a read-only one-dimensional float64 copy of the input.

    :param values: sequence of real numbers
    :param int d: expected dimension, checked if given
    :rtype: numpy.ndarray
    """

    vector = np.array(values, dtype=float).reshape(-1)
    if d is not None and vector.size != d:
        raise ValueError(f"expected a vector of dimension {d}, got {vector.size}")
    if not np.all(np.isfinite(vector)):
        raise ValueError("parameter vector contains non-finite entries")
    vector.flags.writeable = False
    return vector


@dataclass(frozen=True, eq=False)
class Partition:
    """Disjoint cover of the coordinates ``0..d-1`` into K blocks.

    :param tuple blocks: index arrays, one per block
    :param int d: total dimension
    """

    blocks: tuple
    d: int

    def __post_init__(self):
        blocks = tuple(np.array(b, dtype=np.int64) for b in self.blocks)
        for b in blocks:
            b.flags.writeable = False
        object.__setattr__(self, "blocks", blocks)

        if not blocks:
            raise ValueError("partition needs at least one block")
        if any(b.size == 0 for b in blocks):
            raise ValueError("partition blocks must be non-empty")
        joined = np.concatenate(blocks)
        if joined.size != self.d or not np.array_equal(
            np.sort(joined), np.arange(self.d)
        ):
            raise ValueError("partition blocks must be disjoint and cover all indices")
        sizes = [b.size for b in blocks]
        if max(sizes) - min(sizes) > 1:
            raise ValueError("partition block sizes must differ by at most 1")

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return self.d == other.d and len(self.blocks) == len(other.blocks) and all(
            np.array_equal(a, b) for a, b in zip(self.blocks, other.blocks)
        )

    @property
    def K(self):
        """Number of blocks."""
        return len(self.blocks)

    @property
    def sizes(self):
        """Block sizes ``|I_k|``."""
        return tuple(int(b.size) for b in self.blocks)

    def mask(self, k):
        """Return the binary mask vector of block k."""

        self._check_block(k)
        bits = np.zeros(self.d, dtype=np.uint8)
        bits[self.blocks[k]] = 1
        bits.flags.writeable = False
        return bits

    def to_list(self):
        """Blocks as lists of 1-based indices (file format convention)."""
        return [[int(i) + 1 for i in b] for b in self.blocks]

    def _check_block(self, k):
        if not 0 <= k < self.K:
            raise ValueError(f"block index {k} out of range for K={self.K}")


def make_partition(d, K, mode="contiguous", rng=None):
    """Partition d coordinates into K blocks.

    The first ``d mod K`` blocks receive one extra coordinate. In the
    "shuffled" mode the indices are permuted with the given stream
    before the contiguous assignment.

    :param int d: dimension
    :param int K: block count, ``1 <= K <= d``
    :param str mode: "contiguous" or "shuffled"
    :param RngStream rng: stream used by the shuffled mode
    """

    if d < 1:
        raise ValueError(f"dimension d must be positive, got {d}")
    if not 1 <= K <= d:
        raise ValueError(f"block count K must satisfy 1 <= K <= d={d}, got {K}")

    if mode == "contiguous":
        indices = np.arange(d)
    elif mode == "shuffled":
        if rng is None:
            raise ValueError("shuffled partition requires an rng stream")
        indices = rng.generator.permutation(d)
    else:
        raise ValueError(f"unknown partition mode {mode!r}")

    base, extra = divmod(d, K)
    blocks = []
    start = 0
    for k in range(K):
        size = base + (1 if k < extra else 0)
        blocks.append(indices[start : start + size])
        start += size

    return Partition(tuple(blocks), d)


def block_sum_norm(v, partition):
    """Sum over blocks of the per-block Euclidean norms."""

    v = np.asarray(v, dtype=float)
    if v.shape != (partition.d,):
        raise ValueError(
            f"vector dimension {v.size} does not match partition dimension "
            f"{partition.d}"
        )
    return float(sum(np.linalg.norm(v[b]) for b in partition.blocks))


def mask_apply(v, m):
    """Entry-wise product of a vector and a binary mask.

    Entries outside the mask are exactly 0.
    """

    v = np.asarray(v, dtype=float)
    m = np.asarray(m)
    if v.shape != m.shape:
        raise ValueError(
            f"vector shape {v.shape} does not match mask shape {m.shape}"
        )
    return np.where(m.astype(bool), v, 0.0)


def sign_scalar(x):
    """Sign of a scalar with ``sign(0) = 0``."""

    if x > 0:
        return 1
    elif x < 0:
        return -1
    return 0


class Role(IntEnum):
    """Stream roles, the first component of every stream id."""

    INIT = 0
    PARTITION = 1
    PERTURB = 2
    AGENT = 3
    SERVER = 4
    EVAL = 5
    SAMPLE = 6
    CHECK = 7


class RngStream:
    """Deterministic random stream identified by ``(seed, stream_id)``.

    The stream wraps a ``numpy.random.Generator`` whose bit generator is
    seeded with ``SeedSequence(seed, spawn_key=stream_id)``. Child streams
    extend the stream id, so per-agent streams do not depend on the order
    in which they are created. A stream is owned by a single worker.

    :param int seed: 64-bit unsigned seed
    :param tuple stream_id: non-negative integer labels
    """

    def __init__(self, seed, stream_id=()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.stream_id = tuple(int(i) for i in stream_id)
        if any(i < 0 for i in self.stream_id):
            raise ValueError(f"stream id labels must be non-negative: {stream_id}")

        sequence = np.random.SeedSequence(seed, spawn_key=self.stream_id)
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def child(self, *labels):
        """Create an independent stream labelled by the extra labels."""
        return self.__class__(self.seed, self.stream_id + tuple(labels))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"
