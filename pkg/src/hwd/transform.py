"""Kronecker powers of a 3x3 unitary matrix, applied in place.

The vector is indexed by signature value. The first third holds signatures
whose most significant trit is 0, the second third trit 1, the last third
trit 2, recursively, so the transform has the same butterfly structure as a
fast Walsh-Hadamard transform with radix 3.
"""

from __future__ import annotations

import math

import numba
import numpy as np

INV_SQRT2 = 1.0 / math.sqrt(2.0)
INV_SQRT3 = 1.0 / math.sqrt(3.0)
INV_SQRT6 = 1.0 / math.sqrt(6.0)


def base_matrix() -> np.ndarray:
    return np.array(
        [
            [INV_SQRT3, INV_SQRT2, INV_SQRT6],
            [INV_SQRT3, 0.0, -2.0 * INV_SQRT6],
            [INV_SQRT3, -INV_SQRT2, INV_SQRT6],
        ]
    )


def kronecker_power(k: int) -> np.ndarray:
    """Dense ``3**k x 3**k`` matrix; only sensible for small ``k``."""
    m = base_matrix()
    out = np.ones((1, 1))
    for _ in range(k):
        out = np.kron(out, m)
    return out


def levels(n: int) -> int:
    """``k`` such that ``n == 3**k``; raises for anything else."""
    k, m = 0, n
    while m > 1 and m % 3 == 0:
        m //= 3
        k += 1
    if m != 1 or n < 3:
        raise ValueError(f"length must be a power of 3 (at least 3), got {n}")
    return k


@numba.njit(cache=True)
def _transform(v, sig):
    n = v.shape[0]
    while sig >= 1:
        for base in range(0, n, 3 * sig):
            for i in range(base, base + sig):
                a = v[i]
                b = v[i + sig]
                c = v[i + 2 * sig]
                v[i] = (a + b + c) * INV_SQRT3
                v[i + sig] = (a - c) * INV_SQRT2
                v[i + 2 * sig] = (a - 2.0 * b + c) * INV_SQRT6
        sig //= 3


def transform_inplace(v: np.ndarray) -> np.ndarray:
    """Replace ``v`` by ``v @ kronecker_power(k)`` and return it.

    ``v`` must be a contiguous float64 array of length ``3**k``. Each level
    combines the three sub-blocks ``a, b, c`` of a block into
    ``(a+b+c)/sqrt(3), (a-c)/sqrt(2), (a-2b+c)/sqrt(6)``; levels go from the
    most significant trit down, which matches the recursive formulation.
    """
    if v.dtype != np.float64 or not v.flags.c_contiguous or v.ndim != 1:
        raise TypeError("transform_inplace needs a contiguous 1-d float64 array")
    k = levels(v.shape[0])
    _transform(v, 3 ** (k - 1))
    return v
