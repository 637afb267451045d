"""Groupwise treatment effects by sample splitting least squares."""

from ._ssls import (
    SslsError,
    chisq_cdf,
    draw_dgp1,
    estimate,
    glh_test,
    maxt_critical,
    normal_cdf,
    normal_quantile,
    power_min_n,
)

__all__ = [
    "SslsError",
    "chisq_cdf",
    "draw_dgp1",
    "estimate",
    "glh_test",
    "maxt_critical",
    "normal_cdf",
    "normal_quantile",
    "power_min_n",
]
