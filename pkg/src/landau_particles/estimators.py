"""scikit-learn style wrappers around the mollified density and the flow."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .core import ModelParams, ParticleEnsemble, validate_ensemble
from .integrator import StepConfig, integrate
from .kernel import velocity_at
from .mollifier import QuadratureRule, ScoreLattice, log_density, score, score_field


def _ensemble(X, sample_weight):
    X = check_array(X, dtype=np.float64, ensure_min_features=2)
    if sample_weight is None:
        w = np.full(X.shape[0], 1.0 / X.shape[0])
    else:
        w = np.asarray(sample_weight, dtype=np.float64)
        if w.shape != (X.shape[0],) or np.any(w <= 0):
            raise ValueError("sample_weight must be positive, one per sample")
        w = w / w.sum()
    return validate_ensemble(ParticleEnsemble(X, w)), X


class MollifiedDensity(BaseEstimator):
    """Density estimate ``mu * G^eps`` of a weighted sample.

    Parameters
    ----------
    epsilon : float
        Mollifier width.
    spacing : float
        Lattice spacing of the rule used by :meth:`score_gradient`, in
        units of epsilon.
    radius : float, optional
        Rule radius in units of epsilon; dimension-dependent default.
    """

    def __init__(self, epsilon=1.0, spacing=0.5, radius=None):
        self.epsilon = epsilon
        self.spacing = spacing
        self.radius = radius

    def fit(self, X, y=None, sample_weight=None):
        self.ensemble_, X = _ensemble(X, sample_weight)
        self.n_features_in_ = X.shape[1]
        self.params_ = ModelParams(float(self.epsilon), 0.0, X.shape[1])
        self.rule_ = QuadratureRule(self.spacing, self.radius, X.shape[1])
        return self

    def _points(self, X):
        check_is_fitted(self)
        return check_array(X, dtype=np.float64)

    def score_samples(self, X):
        """log density at each row of ``X``."""
        X = self._points(X)
        return log_density(self.ensemble_, self.params_, X)

    def score(self, X, y=None):
        """Total log density of ``X``."""
        return float(np.sum(self.score_samples(X)))

    def score_gradient(self, X):
        """Mollified score ``grad G^eps * log(mu * G^eps)`` at each row."""
        X = self._points(X)
        return score(self.ensemble_, self.params_, self.rule_, X)


class LandauParticleFlow(BaseEstimator):
    """Particle solution of the regularized Landau equation started at ``X``.

    ``fit`` integrates the particle system to ``t_end``; ``predict`` returns
    the collision velocity of the final state at arbitrary points.

    Attributes
    ----------
    positions_ : ndarray of shape (n_samples, n_features)
        Final particle positions.
    trajectory_ : Trajectory
        Stored ensembles and per-step diagnostics.
    diagnostics_ : list of DiagnosticsRecord
    """

    def __init__(
        self,
        epsilon=0.5,
        gamma=0.0,
        scheme="rk4",
        dt=1e-3,
        t_end=1.0,
        theta=0.1,
        spacing=0.5,
        radius=None,
        keep_every=1,
    ):
        self.epsilon = epsilon
        self.gamma = gamma
        self.scheme = scheme
        self.dt = dt
        self.t_end = t_end
        self.theta = theta
        self.spacing = spacing
        self.radius = radius
        self.keep_every = keep_every

    def fit(self, X, y=None, sample_weight=None):
        e0, X = _ensemble(X, sample_weight)
        self.n_features_in_ = X.shape[1]
        self.params_ = ModelParams(float(self.epsilon), float(self.gamma), X.shape[1])
        validate_ensemble(e0, self.params_)
        self.rule_ = QuadratureRule(self.spacing, self.radius, X.shape[1])
        cfg = StepConfig(self.scheme, self.dt, self.theta, self.t_end, keep_every=self.keep_every)
        self.trajectory_ = integrate(e0, self.params_, self.rule_, cfg)
        self.diagnostics_ = self.trajectory_.records
        self.positions_ = np.array(self.trajectory_.final.positions)
        return self

    def predict(self, X):
        """Collision velocity of the final state at each row of ``X``."""
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        e = self.trajectory_.final
        lat = ScoreLattice.around(e, self.params_, self.rule_, points=X)
        s = score_field(e, self.params_, self.rule_, lat)
        return velocity_at(e, s, self.params_, X, self.rule_, lat)
