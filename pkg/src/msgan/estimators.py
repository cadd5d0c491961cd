"""scikit-learn style wrappers around the sampler, projector and IK solver.

Each estimator takes a scenario (built-in name, TOML path or a loaded
``Scenario``) plus plain hyper-parameters, so ``get_params`` / ``set_params``
and ``sklearn.base.clone`` work as usual.

>>> gan = ConfigurationGAN("twolink", n_nets=2, epochs=5).fit(configs)
>>> q = gan.predict(tasks)
>>> q_hat = Projector("reference6").fit().transform(q)
"""

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import gan as gan_mod
from . import kinematics as kin
from .optim import project, solve_ik
from .scenario import Scenario, load_scenario


def _resolve(scenario):
    return scenario if isinstance(scenario, Scenario) else load_scenario(scenario)


def _rng(random_state):
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)


def _lbfgs(sc, max_iters):
    if max_iters is None:
        return sc.lbfgs
    return dataclasses.replace(sc.lbfgs, max_iters=int(max_iters))


class ConfigurationGAN(BaseEstimator):
    """Conditional generator ensemble; ``fit`` on valid configurations, ``predict`` from tasks.

    Hyper-parameters left as ``None`` fall back to the scenario's ``[gan]``
    and ``[model]`` sections.
    """

    def __init__(self, scenario="reference6", n_nets=None, noise_dim=None, hidden=None, disc_hidden=None,
                 epochs=None, batch_size=None, lr_g=None, lr_d=None, momentum=None, w_adv=None, w_ee=None,
                 w_s=None, w_l=None, random_state=None):
        self.scenario = scenario
        self.n_nets = n_nets
        self.noise_dim = noise_dim
        self.hidden = hidden
        self.disc_hidden = disc_hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_g = lr_g
        self.lr_d = lr_d
        self.momentum = momentum
        self.w_adv = w_adv
        self.w_ee = w_ee
        self.w_s = w_s
        self.w_l = w_l
        self.random_state = random_state

    def _train_config(self, sc):
        overrides = {k: getattr(self, k) for k in ("epochs", "batch_size", "lr_g", "lr_d", "momentum",
                                                   "w_adv", "w_ee", "w_s", "w_l") if getattr(self, k) is not None}
        return dataclasses.replace(sc.gan, **overrides)

    def _model_config(self, sc):
        overrides = {k: getattr(self, k) for k in ("n_nets", "noise_dim", "hidden", "disc_hidden")
                     if getattr(self, k) is not None}
        return dataclasses.replace(sc.model, **overrides)

    def fit(self, X, y=None):
        """``X``: configurations ``(m, n)``; ``y``: tasks ``(m, 2)``, defaulting to their FK positions."""
        sc = _resolve(self.scenario)
        X = check_array(X, dtype=float)
        if X.shape[1] != sc.chain.dof:
            raise ValueError(f"X has {X.shape[1]} columns, scenario chain has {sc.chain.dof} joints")
        if y is None:
            y = kin.forward_kinematics(sc.chain, X)[:, :gan_mod.TASK_DIM]
        y = check_array(y, dtype=float)
        if y.shape != (X.shape[0], gan_mod.TASK_DIM):
            raise ValueError(f"y must have shape ({X.shape[0]}, {gan_mod.TASK_DIM})")
        model = self._model_config(sc)
        self._rng = _rng(self.random_state)
        self.ensemble_, self.discriminator_, self.history_ = gan_mod.train(
            gan_mod.Dataset(X, y), sc.chain, sc.constraints, self._train_config(sc), self._rng,
            n_nets=model.n_nets, noise_dim=model.noise_dim, hidden=tuple(model.hidden),
            disc_hidden=tuple(model.disc_hidden), task_box=sc.task_box)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """One sampled configuration per task row of ``X``."""
        check_is_fitted(self, "ensemble_")
        X = check_array(X, dtype=float)
        return self.ensemble_.sample_batch(X, self._rng)

    def sample(self, task, rng=None):
        check_is_fitted(self, "ensemble_")
        return self.ensemble_.sample(task, self._rng if rng is None else rng)

    def score(self, X, y=None):
        """Negative mean squared end-effector error of samples for tasks ``X``."""
        sc = _resolve(self.scenario)
        X = check_array(X, dtype=float)
        return -gan_mod.mean_task_error(sc.chain, self.predict(X), X)


class Projector(TransformerMixin, BaseEstimator):
    """Projects configurations onto the scenario's constraint manifold.

    After ``transform`` the attributes ``success_`` and ``iterations_`` hold
    per-row outcomes of the last call.
    """

    def __init__(self, scenario="reference6", max_iters=None):
        self.scenario = scenario
        self.max_iters = max_iters

    def fit(self, X=None, y=None):
        self.scenario_ = _resolve(self.scenario)
        self.n_features_in_ = self.scenario_.chain.dof
        return self

    def transform(self, X):
        check_is_fitted(self, "scenario_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        opts = _lbfgs(self.scenario_, self.max_iters)
        results = [project(self.scenario_.constraints, q, opts) for q in X]
        self.success_ = np.array([r.success for r in results])
        self.iterations_ = np.array([r.iterations for r in results])
        return np.array([r.q_final for r in results])


class IKSolver(BaseEstimator):
    """Numerical IK under the scenario constraints.

    ``init`` is ``"uniform"`` (random configurations within the joint
    limits) or a fitted ``ConfigurationGAN`` whose samples seed the solver.
    """

    def __init__(self, scenario="reference6", init="uniform", max_iters=None, random_state=None):
        self.scenario = scenario
        self.init = init
        self.max_iters = max_iters
        self.random_state = random_state

    def fit(self, X=None, y=None):
        self.scenario_ = _resolve(self.scenario)
        if not (isinstance(self.init, str) and self.init == "uniform"):
            check_is_fitted(self.init, "ensemble_")
        self._rng = _rng(self.random_state)
        return self

    def _seed(self, task):
        if isinstance(self.init, str):
            return self.scenario_.chain.random_configurations(self._rng)
        return self.init.sample(task, self._rng)

    def predict(self, X):
        """One solved configuration per task row; see ``success_`` for which ones met the thresholds."""
        check_is_fitted(self, "scenario_")
        X = check_array(X, dtype=float)
        opts = _lbfgs(self.scenario_, self.max_iters)
        results = [solve_ik(self.scenario_.task_bundle, self._seed(x), x, opts) for x in X]
        self.success_ = np.array([r.success for r in results])
        self.iterations_ = np.array([r.iterations for r in results])
        return np.array([r.q_final for r in results])
