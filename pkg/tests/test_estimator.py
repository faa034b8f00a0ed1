import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from juliacert.estimator import JuliaPixelClassifier
from juliacert.numerics import Dyadic
from juliacert.oracle import CostMeter, oracle_from_dyadic
from juliacert.pixel import PixelQuery, decide_pixel

X = np.array([[3.0, 0.0], [1.0, 1 / 64], [0.0, 0.0], [-0.5, 0.75]])


def test_clone_keeps_parameters():
    est = JuliaPixelClassifier(c="-1", n=5)
    assert clone(est).get_params() == est.get_params()


def test_predict_matches_decider():
    est = JuliaPixelClassifier(c="0", n=6).fit(X)
    want = [decide_pixel(PixelQuery.at(Dyadic.from_float(x), Dyadic.from_float(y), 6), oracle_from_dyadic(0),
                         CostMeter()).bit for x, y in X]
    assert list(est.predict(X)) == want
    assert want[0] == 0 and want[1] == 1


def test_decision_function_sign_follows_label():
    est = JuliaPixelClassifier(c="0", n=6).fit(X)
    s, y = est.decision_function(X), est.predict(X)
    assert np.all((s > 0) == (y == 1))


def test_not_fitted():
    with pytest.raises(NotFittedError):
        JuliaPixelClassifier().predict(X)


def test_bad_shape():
    with pytest.raises(ValueError):
        JuliaPixelClassifier().fit(X).predict(np.zeros((3, 3)))
