from __future__ import annotations

from typing import NamedTuple

import numpy as np


class LineFit(NamedTuple):
    slope: float
    intercept: float
    slope_stderr: float
    r_squared: float
    n: int


def ols_line(x, y) -> LineFit:
    """Ordinary least squares ``y = intercept + slope * x`` with the slope standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 3:
        raise ValueError(f"need at least 3 points for a line fit, got {n}")
    xm = x.mean()
    ym = y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise ValueError("x values are all identical")
    slope = float(dx @ (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    ssr = float(resid @ resid)
    sst = float((y - ym) @ (y - ym))
    stderr = float(np.sqrt(ssr / (n - 2) / sxx))
    r2 = 1.0 if ssr == 0.0 or sst == 0.0 else 1.0 - ssr / sst
    return LineFit(slope, float(intercept), stderr, r2, n)
