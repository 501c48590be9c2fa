"""Least-squares power-law fits in log-log coordinates."""

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import EstimationError


@dataclass
class PowerFit:
    slope: float
    intercept: float
    r2: float
    stderr: float
    residuals: list = field(default_factory=list)

    @property
    def prefactor(self) -> float:
        return float(np.exp(self.intercept))

    def to_json(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "stderr": self.stderr, "residuals": list(self.residuals)}


def loglog_fit(x, y) -> PowerFit:
    """Fit log y = intercept + slope * log x over the strictly positive pairs."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    lx, ly = np.log(x[ok]), np.log(y[ok])
    if len(lx) < 2 or np.ptp(lx) == 0:
        raise EstimationError("need at least two distinct positive abscissae")
    res = stats.linregress(lx, ly)
    resid = ly - (res.intercept + res.slope * lx)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    # a perfectly flat response is fitted exactly
    r2 = 1.0 if ss_tot == 0 else float(res.rvalue ** 2)
    return PowerFit(float(res.slope), float(res.intercept), r2,
                    float(res.stderr), [float(v) for v in resid])
