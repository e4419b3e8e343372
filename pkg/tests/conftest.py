import numpy as np
import pytest


def ks_against(values, cdf):
    """One-sample Kolmogorov-Smirnov distance of `values` against `cdf`."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    fx = np.asarray(cdf(x), dtype=np.float64)
    return float(
        max(
            np.abs(np.arange(1, n + 1) / n - fx).max(),
            np.abs(np.arange(0, n) / n - fx).max(),
        )
    )


@pytest.fixture
def ks():
    return ks_against
