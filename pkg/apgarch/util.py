"""Global utilities used internally. The functions can be used externally but upward
compatibility is not guaranteed unless explicitly specified.
"""

import numpy as np

from typing import Tuple


def merge_dict(dst: dict, other: dict) -> None:
    """Merge a dictionary into a destination one.

    Merge the `other` dict into the `dst` dict. For every key/value in `other`, if the key
    is present in `dst` it does nothing, unless values in both dict are also dict, in
    this case the merge is recursive. This is used to fill configuration files with
    default values, so `dst` is the user's configuration and `other` the defaults.

    :param dst: The source dictionary to merge `other` into.
    :param other: The dictionary merged into `dst`.
    """

    for k, v in other.items():
        if k in dst:
            dst_v = dst[k]
            if isinstance(dst_v, dict) and isinstance(v, dict):
                merge_dict(dst_v, v)
        else:
            dst[k] = v


def lower_indices(d: int) -> Tuple[np.ndarray, np.ndarray]:
    """Indices (i, j), i > j, of the strict lower triangle of a d×d matrix, in row-major
    order. This is the storage order of correlation coefficients.
    """
    return np.tril_indices(d, -1)


def corr_from_rho(rho: np.ndarray, d: int) -> np.ndarray:
    """Build the full correlation matrix from its strict lower triangle.
    """
    r = np.eye(d)
    rows, cols = lower_indices(d)
    r[rows, cols] = rho
    r[cols, rows] = rho
    return r


def vec(m: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization of the last two axes.
    """
    m = np.asarray(m)
    return np.swapaxes(m, -1, -2).reshape(m.shape[:-2] + (-1,))
