"""scikit-learn style wrapper around the certified pixel decider."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .numerics import Dyadic
from .oracle import CostMeter, oracle_from_dyadic
from .pixel import DecideOptions, PixelQuery, decide_pixel


class JuliaPixelClassifier(ClassifierMixin, BaseEstimator):
    """Label points 1 (within 2^-n of J_c) or 0 (farther than 2 * 2^-n).

    Points in the band between the two thresholds may get either label.
    There is nothing to learn: ``fit`` only validates the parameters and
    fixes the oracle, so ``y`` is ignored apart from recording the classes.
    Rows of X are (re, im) pairs; coordinates are snapped to the 2^-n grid.

    Parameters
    ----------
    c : str or float
        Dyadic parameter, e.g. ``"-7/4"`` or ``0.25``.
    n : int
        Resolution in bits.
    tick_limit : float
        Per-pixel work limit.
    """

    def __init__(self, c="0", n: int = 6, tick_limit: float = 2.0e6):
        self.c = c
        self.n = n
        self.tick_limit = tick_limit

    def fit(self, X=None, y=None):
        if int(self.n) < 0:
            raise ValueError("n must be a natural number")
        c = Dyadic.parse(self.c) if isinstance(self.c, str) else Dyadic.of(self.c)
        self.c_ = c
        self.oracle_ = oracle_from_dyadic(c)
        self.classes_ = np.array([0, 1])
        self.ticks_ = 0
        return self

    def _answers(self, X):
        check_is_fitted(self, "oracle_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 2:
            raise ValueError("X must have two columns (re, im)")
        n = int(self.n)
        opt = DecideOptions(tick_limit=self.tick_limit)
        meter = CostMeter()
        scale = float(1 << n)
        out = []
        for re, im in X:
            q = PixelQuery.grid(int(round(re * scale)), int(round(im * scale)), n)
            out.append(decide_pixel(q, self.oracle_, meter, opt))
        self.ticks_ = meter.ticks
        return out

    def predict(self, X) -> np.ndarray:
        return np.array([a.bit for a in self._answers(X)], dtype=int)

    def decision_function(self, X) -> np.ndarray:
        """Positive for label 1; magnitude is 1 plus the certified max-norm distance lower bound in pixels."""
        h = 2.0 ** -int(self.n)
        return np.array([(1 if a.bit else -1) * (1 + a.lower / h) for a in self._answers(X)])
