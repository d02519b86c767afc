"""Rademacher and Gaussian perturbations, masking, and the bit codec.

A binary perturbation travels as ``ceil(d/8)`` bytes: bit value 1 encodes
+1, bit value 0 encodes -1, bits are little-endian within each byte, and
trailing pad bits are 0.
"""

from dataclasses import dataclass
import itertools
import numpy as np

KINDS = ("binary", "gaussian")

# bits per coordinate on the wire
FLOAT_BITS = 64


@dataclass(frozen=True, eq=False)
class PerturbationVector:
    """Perturbation direction of dimension d.

    :param numpy.ndarray values: entries, +-1 for the binary kind
    :param str kind: "binary" or "gaussian"
    """

    values: np.ndarray
    kind: str = "binary"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size == 0:
            raise ValueError("perturbation dimension must be positive")
        if self.kind == "binary" and not np.all(np.abs(values) == 1.0):
            raise ValueError("binary perturbation entries must be -1 or +1")
        if not np.all(np.isfinite(values)):
            raise ValueError("perturbation entries must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def d(self):
        return self.values.size

    def to_archive(self):
        return self.values

    def __eq__(self, other):
        if not isinstance(other, PerturbationVector):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.values, other.values)


def _check_dimension(d):
    if d < 1:
        raise ValueError(f"perturbation dimension must be positive, got {d}")


def sample_rademacher(d, rng):
    """Sample d independent +-1 entries with probability 1/2 each."""

    _check_dimension(d)
    signs = rng.generator.integers(0, 2, size=d) * 2 - 1
    return PerturbationVector(signs.astype(float), "binary")


def sample_gaussian(d, rng):
    """Sample d independent standard normal entries (unit variance)."""

    _check_dimension(d)
    return PerturbationVector(rng.generator.standard_normal(d), "gaussian")


def sample_perturbation(kind, d, rng):
    """Sample a perturbation of the given kind."""

    if kind == "binary":
        return sample_rademacher(d, rng)
    elif kind == "gaussian":
        return sample_gaussian(d, rng)
    raise ValueError(f"unknown perturbation kind {kind!r}")


def encode_bits(v):
    """Encode a binary perturbation to ``ceil(d/8)`` bytes."""

    if v.kind != "binary":
        raise ValueError("only binary perturbations have a bit encoding")
    return np.packbits(v.values > 0, bitorder="little").tobytes()


def decode_bits(data, d):
    """Decode ``ceil(d/8)`` bytes back to a binary perturbation."""

    _check_dimension(d)
    if len(data) != (d + 7) // 8:
        raise ValueError(
            f"expected {(d + 7) // 8} bytes for dimension {d}, got {len(data)}"
        )
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if np.any(bits[d:]):
        raise ValueError("trailing pad bits must be zero")
    return PerturbationVector(bits[:d].astype(float) * 2 - 1, "binary")


def mask_perturbation(v, partition, k):
    """Restrict a perturbation to block k; entries outside are 0.

    :param PerturbationVector v: full perturbation
    :param Partition partition: coordinate partition
    :param int k: 0-based block index
    :rtype: numpy.ndarray
    """

    if v.d != partition.d:
        raise ValueError(
            f"perturbation dimension {v.d} does not match partition "
            f"dimension {partition.d}"
        )
    partition._check_block(k)
    masked = np.zeros(v.d)
    block = partition.blocks[k]
    masked[block] = v.values[block]
    return masked


def payload_bits(kind, d):
    """Bits needed to transmit one d-dimensional perturbation."""

    if kind == "binary":
        return d
    elif kind == "gaussian":
        return FLOAT_BITS * d
    raise ValueError(f"unknown perturbation kind {kind!r}")


def feedback_bits(N):
    """Bits per agent feedback.

    With N odd the majority vote is never tied and the feedback is one bit;
    with N even it is ternary and takes two.
    """

    return 1 if N % 2 else 2


def sign_patterns(d):
    """All ``2**d`` Rademacher sign patterns as rows of a matrix."""

    if not 1 <= d <= 20:
        raise ValueError(f"exact enumeration supports 1 <= d <= 20, got {d}")
    return np.array(list(itertools.product((-1.0, 1.0), repeat=d)))


def khintchine_exact(a, patterns=None):
    """Exact ``E|<v, a>|`` over uniformly random sign vectors v.

    :param numpy.ndarray a: coefficients, shape (d,) or (n, d)
    :param numpy.ndarray patterns: precomputed ``sign_patterns(d)``
    """

    a = np.asarray(a, dtype=float)
    if patterns is None:
        patterns = sign_patterns(a.shape[-1])
    return np.abs(patterns @ a.T).mean(axis=0)


def khintchine_monte_carlo(a, draws, rng, chunk=10_000):
    """Monte-Carlo estimate of ``E|<v, a>|`` and its standard error."""

    a = np.asarray(a, dtype=float)
    total = 0.0
    total_sq = 0.0
    remaining = draws
    while remaining > 0:
        n = min(chunk, remaining)
        signs = rng.generator.integers(0, 2, size=(n, a.size)) * 2.0 - 1.0
        sample = np.abs(signs @ a)
        total += sample.sum()
        total_sq += (sample**2).sum()
        remaining -= n

    mean = total / draws
    variance = max(total_sq / draws - mean**2, 0.0) * draws / max(draws - 1, 1)
    return mean, float(np.sqrt(variance / draws))
