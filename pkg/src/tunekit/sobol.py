"""Sobol' low-discrepancy sequences in the unit hypercube.

Implements the classic 32-bit Gray-code construction with Joe and Kuo
direction numbers for up to 64 dimensions.  Points are generated in the
standard (unscrambled) ordering, so the sequence for a given dimension is
a fixed, reproducible object; an optional digitally shifted variant adds
seeded randomisation while preserving the equidistribution structure.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "MAX_DIMENSION",
    "DimensionUnsupportedError",
    "sobol_points",
    "scrambled_sobol_points",
]

MAX_DIMENSION = 64

_BITS = 32
_SCALE = float(1 << _BITS)


class DimensionUnsupportedError(ValueError):
    """Raised when more dimensions are requested than we have direction numbers for."""


# Primitive polynomials and initial direction integers (Joe & Kuo, new-joe-kuo-6)
# for dimensions 2..64.  Entry j serves dimension j + 2: (polynomial as an
# integer with all coefficient bits set, initial m_1..m_s).  Dimension 1 uses
# m_k = 1 for every k and needs no table entry.
_JOE_KUO = (
    (3, (1,)), (7, (1, 3)), (11, (1, 3, 1)), (13, (1, 1, 1)), (19, (1, 1, 3, 3)),
    (25, (1, 3, 5, 13)), (37, (1, 1, 5, 5, 17)), (41, (1, 1, 5, 5, 5)),
    (47, (1, 1, 7, 11, 19)), (55, (1, 1, 5, 1, 1)), (59, (1, 1, 1, 3, 11)),
    (61, (1, 3, 5, 5, 31)), (67, (1, 3, 3, 9, 7, 49)), (91, (1, 1, 1, 15, 21, 21)),
    (97, (1, 3, 1, 13, 27, 49)), (103, (1, 1, 1, 15, 7, 5)), (109, (1, 3, 1, 15, 13, 25)),
    (115, (1, 1, 5, 5, 19, 61)), (131, (1, 3, 7, 11, 23, 15, 103)),
    (137, (1, 3, 7, 13, 13, 15, 69)), (143, (1, 1, 3, 13, 7, 35, 63)),
    (145, (1, 3, 5, 9, 1, 25, 53)), (157, (1, 3, 1, 13, 9, 35, 107)),
    (167, (1, 3, 1, 5, 27, 61, 31)), (171, (1, 1, 5, 11, 19, 41, 61)),
    (185, (1, 3, 5, 3, 3, 13, 69)), (191, (1, 1, 7, 13, 1, 19, 1)),
    (193, (1, 3, 7, 5, 13, 19, 59)), (203, (1, 1, 3, 9, 25, 29, 41)),
    (211, (1, 3, 5, 13, 23, 1, 55)), (213, (1, 3, 7, 3, 13, 59, 17)),
    (229, (1, 3, 1, 3, 5, 53, 69)), (239, (1, 1, 5, 5, 23, 33, 13)),
    (241, (1, 1, 7, 7, 1, 61, 123)), (247, (1, 1, 7, 9, 13, 61, 49)),
    (253, (1, 3, 3, 5, 3, 55, 33)), (285, (1, 3, 1, 15, 31, 13, 49, 245)),
    (299, (1, 3, 5, 15, 31, 59, 63, 97)), (301, (1, 3, 1, 11, 11, 11, 77, 249)),
    (333, (1, 3, 1, 11, 27, 43, 71, 9)), (351, (1, 1, 7, 15, 21, 11, 81, 45)),
    (355, (1, 3, 7, 3, 25, 31, 65, 79)), (357, (1, 3, 1, 1, 19, 11, 3, 205)),
    (361, (1, 1, 5, 9, 19, 21, 29, 157)), (369, (1, 3, 7, 11, 1, 33, 89, 185)),
    (391, (1, 3, 3, 3, 15, 9, 79, 71)), (397, (1, 3, 7, 11, 15, 39, 119, 27)),
    (425, (1, 1, 3, 1, 11, 31, 97, 225)), (451, (1, 1, 1, 3, 23, 43, 57, 177)),
    (463, (1, 3, 7, 7, 17, 17, 37, 71)), (487, (1, 3, 1, 5, 27, 63, 123, 213)),
    (501, (1, 1, 3, 5, 11, 43, 53, 133)), (529, (1, 3, 5, 5, 29, 17, 47, 173, 479)),
    (539, (1, 3, 3, 11, 3, 1, 109, 9, 69)), (545, (1, 1, 1, 5, 17, 39, 23, 5, 343)),
    (557, (1, 3, 1, 5, 25, 15, 31, 103, 499)), (563, (1, 1, 1, 11, 11, 17, 63, 105, 183)),
    (601, (1, 1, 5, 11, 9, 29, 97, 231, 363)), (607, (1, 1, 5, 15, 19, 45, 41, 7, 383)),
    (617, (1, 3, 7, 7, 31, 19, 83, 137, 221)), (623, (1, 1, 1, 3, 23, 15, 111, 223, 83)),
    (631, (1, 1, 5, 13, 31, 15, 55, 25, 161)), (637, (1, 1, 3, 13, 25, 47, 39, 87, 257)),
)

_direction_cache: dict[int, np.ndarray] = {}


def _direction_numbers(dim: int) -> np.ndarray:
    """Direction numbers, left-aligned in 32 bits, shape (dim, 32) uint64."""
    cached = _direction_cache.get(dim)
    if cached is not None:
        return cached
    v = np.zeros((dim, _BITS), dtype=np.uint64)
    # First dimension: van der Corput in base 2, m_k = 1 for all k.
    v[0, :] = [1 << (_BITS - k) for k in range(1, _BITS + 1)]
    for j in range(1, dim):
        poly, m_init = _JOE_KUO[j - 1]
        s = poly.bit_length() - 1
        # Interior coefficient bits a_1..a_{s-1} of the primitive polynomial.
        a = (poly >> 1) & ((1 << (s - 1)) - 1) if s >= 2 else 0
        m = list(m_init)
        for k in range(s, _BITS):
            new = m[k - s] ^ (m[k - s] << s)
            for t in range(1, s):
                if (a >> (s - 1 - t)) & 1:
                    new ^= m[k - t] << t
            m.append(new)
        v[j, :] = [m[k] << (_BITS - 1 - k) for k in range(_BITS)]
    _direction_cache[dim] = v
    return v


def _check_args(dim: int, count: int, skip: int) -> None:
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    if dim > MAX_DIMENSION:
        raise DimensionUnsupportedError(
            f"dimension {dim} exceeds the supported maximum of {MAX_DIMENSION}"
        )
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if skip < 0:
        raise ValueError(f"skip must be >= 0, got {skip}")
    if skip + count >= (1 << _BITS):
        raise ValueError("requested indices exceed the 2^32 period of the generator")


def _raw_points(dim: int, count: int, skip: int) -> np.ndarray:
    """Integer lattice states for sequence indices skip..skip+count-1."""
    v = _direction_numbers(dim)
    idx = np.arange(skip, skip + count, dtype=np.uint64)
    gray = idx ^ (idx >> np.uint64(1))
    state = np.zeros((count, dim), dtype=np.uint64)
    for bit in range(_BITS):
        mask = (gray >> np.uint64(bit)) & np.uint64(1)
        if mask.any():
            state ^= np.outer(mask, v[:, bit])
    return state


def sobol_points(dim: int, count: int, skip: int = 0) -> np.ndarray:
    """Generate points of the standard Sobol' sequence.

    Parameters
    ----------
    dim : int
        Number of coordinates per point, between 1 and ``MAX_DIMENSION``.
    count : int
        Number of points to return.
    skip : int, optional
        Number of leading sequence elements to omit.  ``skip=1`` drops the
        all-zeros first point, which is the usual choice when the points
        seed an optimiser.

    Returns
    -------
    numpy.ndarray
        Array of shape ``(count, dim)`` with entries in ``[0, 1)``,
        containing sequence elements ``skip`` through ``skip + count - 1``.

    Raises
    ------
    DimensionUnsupportedError
        If ``dim`` exceeds ``MAX_DIMENSION``.
    ValueError
        If ``dim`` or ``count`` is smaller than 1, or ``skip`` is negative.
    """
    _check_args(dim, count, skip)
    return _raw_points(dim, count, skip) / _SCALE


def scrambled_sobol_points(dim: int, count: int, seed: int | np.random.SeedSequence,
                           skip: int = 0) -> np.ndarray:
    """Sobol' points under a seeded random digital shift.

    Each dimension's coordinates are XOR-ed with an independent random
    32-bit word, which displaces the whole point set while keeping its
    binary equidistribution properties.  Identical ``seed`` values give
    identical output.
    """
    _check_args(dim, count, skip)
    rng = np.random.default_rng(seed)
    shift = rng.integers(0, 1 << _BITS, size=dim, dtype=np.uint64)
    state = _raw_points(dim, count, skip)
    return (state ^ shift[np.newaxis, :]) / _SCALE
