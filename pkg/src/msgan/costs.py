"""Cost terms with analytic gradients and weighted bundles.

Every term returns its raw (unweighted) value together with the gradient
with respect to the configuration. Thresholds apply to raw values; a term
with ``threshold=None`` is a pure regularizer and never takes part in the
satisfaction test.

Term functions broadcast over leading batch axes the same way the
kinematics functions do, which the GAN trainer relies on.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import kinematics as kin
from .exceptions import InvalidArgument
from .validation import as_configs, as_vector, check_bounds

DEFAULT_WEIGHTS = {"ee_pose": 1.0, "posture": 0.01, "joint_limit": 10.0, "static_stability": 10.0}
DEFAULT_THRESHOLDS = {"ee_pose": 1e-4, "posture": None, "joint_limit": 1e-6, "static_stability": 1e-6}


def barrier(x, lower, upper):
    """Quadratic barrier: zero inside ``[lower, upper]``, half squared violation outside.

    Returns ``(value, grad)``; the value sums over the last axis.
    """
    x = np.asarray(x, dtype=float)
    lower, upper = check_bounds(lower, upper, "barrier")
    r_low = np.minimum(x - lower, 0.0)
    r_up = np.maximum(x - upper, 0.0)
    value = 0.5 * (np.square(r_low) + np.square(r_up))
    if value.ndim:
        value = value.sum(axis=-1)
    return value, r_low + r_up


def ee_pose_cost(chain, q, p_ref, w_diag):
    """Weighted squared end-effector pose error. ``p_ref`` broadcasts against ``q``'s batch."""
    pose = kin.forward_kinematics(chain, q)
    err = pose - p_ref
    werr = err * w_diag
    value = np.einsum("...i,...i->...", err, werr)
    grad = 2.0 * np.einsum("...in,...i->...n", kin.jacobian(chain, q), werr)
    return value, grad


def posture_cost(q, q_nom, w_diag):
    q = np.asarray(q, dtype=float)
    err = q - q_nom
    if err.shape[-1] != np.shape(w_diag)[-1]:
        raise InvalidArgument("posture weight dimension does not match configuration")
    werr = err * w_diag
    return np.einsum("...i,...i->...", err, werr), 2.0 * werr


def joint_limit_cost(chain, q):
    q = as_configs(q, chain.dof)
    return barrier(q, chain.joint_lower, chain.joint_upper)


def static_stability_cost(chain, q, lower, upper):
    """Barrier on the horizontal CoM coordinate (support-interval analog)."""
    # keep a trailing axis of length one so the barrier never sums over the batch
    com_x = kin.center_of_mass(chain, q)[..., :1]
    value, dv = barrier(com_x, lower, upper)
    grad = dv * kin.com_jacobian(chain, q)[..., 0, :]
    return value, grad


# --- terms ---------------------------------------------------------------


def _check_threshold(threshold):
    if threshold is not None and not threshold > 0:
        raise InvalidArgument("threshold must be positive or None")


@dataclass(frozen=True, eq=False)
class EePoseCost:
    """End-effector pose term. ``task=True`` marks the goal term of an IK
    problem, as opposed to a pose constraint that projection must keep."""

    p_ref: np.ndarray
    w_diag: np.ndarray = field(default_factory=lambda: np.ones(3))
    weight: float = DEFAULT_WEIGHTS["ee_pose"]
    threshold: float = DEFAULT_THRESHOLDS["ee_pose"]
    task: bool = False
    kind = "ee_pose"

    def __post_init__(self):
        object.__setattr__(self, "p_ref", as_vector(self.p_ref, "p_ref", 3))
        w = as_vector(self.w_diag, "w_diag", 3)
        if np.any(w < 0) or self.weight < 0:
            raise InvalidArgument("ee_pose weights must be non-negative")
        _check_threshold(self.threshold)
        object.__setattr__(self, "w_diag", w)

    def __call__(self, chain, q):
        return ee_pose_cost(chain, q, self.p_ref, self.w_diag)

    def with_target(self, target):
        target = np.asarray(target, dtype=float)
        if target.shape == (2,):
            target = np.array([target[0], target[1], self.p_ref[2]])
        return replace(self, p_ref=target)


@dataclass(frozen=True, eq=False)
class PostureCost:
    q_nom: np.ndarray
    w_diag: np.ndarray = None
    weight: float = DEFAULT_WEIGHTS["posture"]
    threshold: float = DEFAULT_THRESHOLDS["posture"]
    kind = "posture"

    def __post_init__(self):
        q_nom = as_vector(self.q_nom, "q_nom")
        w = np.ones_like(q_nom) if self.w_diag is None else as_vector(self.w_diag, "w_diag", q_nom.shape[0])
        if np.any(w < 0) or self.weight < 0:
            raise InvalidArgument("posture weights must be non-negative")
        _check_threshold(self.threshold)
        object.__setattr__(self, "q_nom", q_nom)
        object.__setattr__(self, "w_diag", w)

    def __call__(self, chain, q):
        return posture_cost(q, self.q_nom, self.w_diag)


@dataclass(frozen=True, eq=False)
class JointLimitCost:
    weight: float = DEFAULT_WEIGHTS["joint_limit"]
    threshold: float = DEFAULT_THRESHOLDS["joint_limit"]
    kind = "joint_limit"

    def __post_init__(self):
        if self.weight < 0:
            raise InvalidArgument("weight must be non-negative")
        _check_threshold(self.threshold)

    def __call__(self, chain, q):
        return joint_limit_cost(chain, q)


@dataclass(frozen=True, eq=False)
class StaticStabilityCost:
    lower: float
    upper: float
    weight: float = DEFAULT_WEIGHTS["static_stability"]
    threshold: float = DEFAULT_THRESHOLDS["static_stability"]
    kind = "static_stability"

    def __post_init__(self):
        check_bounds(self.lower, self.upper, "support interval")
        if self.weight < 0:
            raise InvalidArgument("weight must be non-negative")
        _check_threshold(self.threshold)

    def __call__(self, chain, q):
        return static_stability_cost(chain, q, self.lower, self.upper)


# --- bundles -------------------------------------------------------------


@dataclass(frozen=True)
class CostReport:
    raw: tuple
    total: float
    grad: np.ndarray
    all_below_threshold: bool


@dataclass(frozen=True, eq=False)
class CostBundle:
    chain: kin.PlanarChain
    terms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        thresholds = [(i, t.threshold) for i, t in enumerate(self.terms) if t.threshold is not None]
        object.__setattr__(self, "_thresholds", thresholds)

    @property
    def has_thresholds(self):
        return bool(self._thresholds)

    @property
    def task_terms(self):
        return [t for t in self.terms if getattr(t, "task", False)]

    def without_tasks(self):
        return CostBundle(self.chain, [t for t in self.terms if not getattr(t, "task", False)])

    def with_terms(self, *extra):
        return CostBundle(self.chain, self.terms + tuple(extra))

    def with_posture_nominal(self, q_nom):
        terms = [replace(t, q_nom=np.asarray(q_nom, dtype=float)) if t.kind == "posture" else t
                 for t in self.terms]
        return CostBundle(self.chain, terms)

    def with_task_target(self, target):
        terms = [t.with_target(target) if getattr(t, "task", False) else t for t in self.terms]
        return CostBundle(self.chain, terms)

    def scaled(self, factor):
        return CostBundle(self.chain, [replace(t, weight=t.weight * factor) for t in self.terms])

    def of_kind(self, kind):
        return [t for t in self.terms if t.kind == kind]

    def value_and_grad(self, q):
        """Weighted total and gradient only; cheaper than a full report."""
        total = 0.0
        grad = np.zeros(self.chain.dof)
        for term in self.terms:
            v, g = term(self.chain, q)
            total += term.weight * float(v)
            grad += term.weight * g
        return total, grad


def evaluate(bundle, q):
    q = as_configs(q, bundle.chain.dof)
    if q.ndim != 1:
        raise InvalidArgument("evaluate takes a single configuration")
    raw = []
    total = 0.0
    grad = np.zeros(bundle.chain.dof)
    for term in bundle.terms:
        v, g = term(bundle.chain, q)
        v = float(v)
        raw.append(v)
        total += term.weight * v
        grad += term.weight * g
    ok = all(raw[i] <= thr for i, thr in bundle._thresholds)
    return CostReport(tuple(raw), total, grad, ok)
