import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from vcgmpc.exceptions import InvalidParameterError
from vcgmpc.lq_solver import DARE_MAX_ITER, DARE_TOL
from vcgmpc.mpc import LQRController, RecedingHorizonController, make_controller


def test_params_round_trip():
    ctrl = RecedingHorizonController(horizon=12)
    assert ctrl.get_params() == {"horizon": 12}
    assert clone(ctrl).get_params() == {"horizon": 12}
    assert ctrl.set_params(horizon=3).horizon == 3
    assert LQRController().get_params() == {"tol": DARE_TOL, "max_iter": DARE_MAX_ITER}


def test_make_controller():
    assert isinstance(make_controller(None), LQRController)
    assert make_controller(4).horizon == 4


@pytest.mark.parametrize("ctrl", [RecedingHorizonController(5), LQRController()])
def test_unfitted_predict_raises(ctrl):
    with pytest.raises(NotFittedError):
        ctrl.predict(np.zeros((1, 8)))


@pytest.mark.parametrize("ctrl", [RecedingHorizonController(5), LQRController()])
def test_predict_is_linear_feedback(ctrl, plant, truth):
    ctrl.fit(plant, truth)
    X = np.random.default_rng(0).normal(size=(6, 8))
    U = ctrl.predict(X)
    assert U.shape == (6, 2)
    np.testing.assert_allclose(U, -X @ ctrl.gain_.T)
    np.testing.assert_allclose(ctrl.cost(X), [x @ ctrl.cost_matrix_ @ x for x in X], rtol=1e-12)
    assert ctrl.n_features_in_ == 8


def test_predict_validates_input(plant, truth):
    ctrl = RecedingHorizonController(5).fit(plant, truth)
    with pytest.raises(ValueError):
        ctrl.predict(np.zeros((2, 7)))
    with pytest.raises(ValueError):
        ctrl.predict(np.full((1, 8), np.nan))


def test_fit_rejects_bad_horizon(plant, truth):
    with pytest.raises(InvalidParameterError):
        RecedingHorizonController(0).fit(plant, truth)
    with pytest.raises(InvalidParameterError):
        RecedingHorizonController(None).fit(plant, truth)


def test_lqr_records_iterations(plant, truth):
    ctrl = LQRController().fit(plant, truth)
    assert 0 < ctrl.n_iter_ < DARE_MAX_ITER
