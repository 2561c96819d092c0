import numpy as np
from sklearn.base import clone

from icnn_dcopf.audits import single_bus_dataset
from icnn_dcopf.cases import congested_triangle_case
from icnn_dcopf.datasets import generate_dataset
from icnn_dcopf.estimators import EndToEndDispatchRegressor, IcnnCostRegressor


def test_params_and_clone():
    est = IcnnCostRegressor(hidden=(8,), epochs=3)
    params = est.get_params()
    assert params["hidden"] == (8,) and params["epochs"] == 3
    assert clone(est).get_params() == params


def test_fit_predict_single_bus():
    data = single_bus_dataset(np.linspace(0.1, 2.9, 40))
    est = IcnnCostRegressor(hidden=(16, 16), epochs=1000, batch_size=10, optimizer="adam",
                            learning_rate=0.01, lr_decay=0.997)
    est.fit(data.load, data.J, mu=data.mu)
    assert est.predict(data.load).shape == (40,)
    assert np.mean(np.abs(est.predict_prices(data.load) - data.mu)) < 0.2


def test_dispatch_with_case():
    case = congested_triangle_case()
    data = generate_dataset(case, 0.3, 30, seed=0)
    est = IcnnCostRegressor(hidden=(8,), epochs=2, case=case).fit(data.load, data.J, mu=data.mu,
                                                                  x=data.x, f=data.f)
    x, f = est.predict_dispatch(data.load[:2])
    assert x.shape == (2, 3) and f.shape == (2, 2)


def test_end_to_end_regressor():
    case = congested_triangle_case()
    data = generate_dataset(case, 0.3, 30, seed=0)
    est = EndToEndDispatchRegressor(hidden=(8,), epochs=5).fit(data.load, data.x)
    assert est.predict(data.load).shape == data.x.shape
