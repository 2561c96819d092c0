"""scikit-learn style wrappers around the ICNN cost model and the MLP baseline."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .activeset import solve_from_prices
from .datasets import Dataset
from .grid import build_flow_basis
from .icnn.baseline import flows_from_dispatch, predict_mlp
from .icnn.network import forward, input_gradient
from .icnn.training import TrainConfig, init_for_data, train


class IcnnCostRegressor(RegressorMixin, BaseEstimator):
    """Convex surrogate of the optimal cost; ``predict`` gives cost, ``predict_prices`` its gradient.

    ``fit(X, y, mu=...)`` takes loads ``X``, optimal costs ``y`` and optimal
    prices ``mu``.  With ``case`` set, the KKT loss is used on the labeled
    set and on ``helper`` loads, and ``predict_dispatch`` becomes available.
    """

    def __init__(self, hidden=(64, 64, 64, 64), epochs=100, batch_size=32, learning_rate=1e-3,
                 optimizer="sgd", lr_decay=1.0, regression_weight=1.0, kkt_weight=1.0,
                 eps_act=1e-6, flow_eps=None, ascent_weight=0.0, seed=0, case=None):
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.lr_decay = lr_decay
        self.regression_weight = regression_weight
        self.kkt_weight = kkt_weight
        self.eps_act = eps_act
        self.flow_eps = flow_eps
        self.ascent_weight = ascent_weight
        self.seed = seed
        self.case = case

    def _train_config(self) -> TrainConfig:
        return TrainConfig(hidden=tuple(self.hidden), epochs=self.epochs, batch_size=self.batch_size,
                           learning_rate=self.learning_rate, optimizer=self.optimizer,
                           lr_decay=self.lr_decay, regression_weight=self.regression_weight,
                           kkt_weight=self.kkt_weight if self.case is not None else 0.0,
                           eps_act=self.eps_act, flow_eps=self.flow_eps,
                           ascent_weight=self.ascent_weight, seed=self.seed)

    def fit(self, X, y, mu=None, x=None, f=None, helper=None):
        X = check_array(X)
        y = np.asarray(y, dtype=float).ravel()
        if mu is None:
            raise ValueError("fit needs the optimal prices mu")
        mu = check_array(mu)
        if len(y) != len(X) or mu.shape != X.shape:
            raise ValueError("X, y and mu must describe the same samples")
        cfg = self._train_config()
        basis = build_flow_basis(self.case) if self.case is not None else None
        if basis is not None and (x is None or f is None):
            cfg.kkt_on_labeled = False
        labeled = Dataset(X, y, mu,
                          None if x is None else check_array(x),
                          None if f is None else check_array(f, ensure_min_features=0))
        help_set = None if helper is None else Dataset(check_array(helper))
        model = init_for_data(labeled, cfg.hidden, cfg.seed)
        result = train(model, labeled, help_set, cfg, self.case, basis)
        self.model_ = result.model
        self.history_ = result.history
        self.basis_ = basis
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return forward(self.model_, check_array(X))

    def predict_prices(self, X):
        check_is_fitted(self, "model_")
        return input_gradient(self.model_, check_array(X))

    def predict_dispatch(self, X):
        """Dispatch ``(x, f)`` per load via active-set reconstruction from predicted prices."""
        check_is_fitted(self, "model_")
        if self.case is None:
            raise ValueError("predict_dispatch needs a case")
        X = check_array(X)
        out_x, out_f = [], []
        for load, mu in zip(X, self.predict_prices(X)):
            x, f, _ = solve_from_prices(self.case, self.basis_, load, mu, eps_act=self.eps_act,
                                        flow_eps=self.flow_eps)
            out_x.append(x)
            out_f.append(f)
        return np.array(out_x), np.array(out_f)


class EndToEndDispatchRegressor(RegressorMixin, BaseEstimator):
    """MLP mapping loads straight to dispatch; flows follow from the nodal balance."""

    def __init__(self, hidden=(64, 64, 64), epochs=300, learning_rate=1e-3, batch_size=32, seed=0):
        self.hidden = hidden
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y):
        from .evaluation import train_end_to_end

        X = check_array(X)
        y = check_array(y)
        if len(y) != len(X):
            raise ValueError("X and y must have the same number of rows")
        data = Dataset(X, np.zeros(len(X)), np.zeros_like(X), y, np.zeros((len(X), 0)))
        self.model_ = train_end_to_end(data, tuple(self.hidden), self.epochs, self.learning_rate,
                                       self.seed, self.batch_size)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return np.atleast_2d(predict_mlp(self.model_, check_array(X)))

    def predict_flows(self, basis, X):
        X = check_array(X)
        return flows_from_dispatch(basis, X, self.predict(X))
