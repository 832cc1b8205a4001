"""Global utilities for the CLI.
"""

import math

from typing import Iterable


def format_number(n: float) -> str:
    """Return a number with suffix k, M, G or nothing.
    The string is at most 7 chars unless the size exceed 1 T.
    """
    if n < 1000:
        return f"{int(n)} "
    elif n < 1000000:
        return f"{(int(n / 100) / 10):.1f} k"
    elif n < 1000000000:
        return f"{(int(n / 100000) / 10):.1f} M"
    else:
        return f"{(int(n / 100000000) / 10):.1f} G"


def format_duration(n: float) -> str:
    """Return a duration with proper suffix s, m, h.
    """
    if n < 60:
        return f"{int(n)} s"
    elif n < 3600:
        return f"{int(n / 60)} m"
    else:
        return f"{int(n / 3600)} h"


def format_pvalue(p: float) -> str:
    """Three decimals, as in published p-value grids.
    """
    if math.isnan(p):
        return "nan"
    return f"{p:.3f}"


def format_float(x: float, digits: int = 4) -> str:
    """Fixed notation for moderate magnitudes, scientific otherwise.
    """
    if not math.isfinite(x):
        return str(x)
    if x != 0 and (abs(x) >= 1e5 or abs(x) < 10 ** -digits):
        return f"{x:.{digits - 1}e}"
    return f"{x:.{digits}f}"


def format_vector(values: Iterable[float], digits: int = 3) -> str:
    return "({})".format(",".join(f"{v:.{digits}f}" for v in values))
