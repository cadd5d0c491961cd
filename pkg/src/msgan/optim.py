"""Solvers: L-BFGS with per-term threshold stopping, a damped
Newton-Raphson IK baseline, and the projection / IK entry points."""

import enum
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import kinematics as kin
from .costs import CostReport, evaluate
from .exceptions import InvalidArgument, InvalidStart, NumericalFailure
from .validation import as_vector


class Termination(enum.Enum):
    THRESHOLD_MET = "ThresholdMet"
    GRAD_TOL = "GradTol"
    MAX_ITER = "MaxIter"
    LINE_SEARCH_FAIL = "LineSearchFail"


@dataclass(frozen=True)
class LbfgsOptions:
    memory: int = 10
    max_iters: int = 200
    armijo_c1: float = 1e-4
    backtrack_factor: float = 0.5
    min_step: float = 1e-10
    grad_tol: float = 1e-8
    use_thresholds: bool = True

    def __post_init__(self):
        if self.memory < 1:
            raise InvalidArgument("memory must be >= 1")
        if not 0 < self.backtrack_factor < 1:
            raise InvalidArgument("backtrack_factor must lie in (0, 1)")
        if not 0 < self.armijo_c1 < 1:
            raise InvalidArgument("armijo_c1 must lie in (0, 1)")
        if self.max_iters < 0:
            raise InvalidArgument("max_iters must be non-negative")


@dataclass(frozen=True)
class NrOptions:
    alpha: float = 0.5
    damping: float = 1e-6
    max_iters: int = 200
    position_tol: float = 1e-6

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise InvalidArgument("alpha must lie in (0, 1]")
        if self.damping < 0:
            raise InvalidArgument("damping must be non-negative")


@dataclass(frozen=True)
class OptResult:
    q_final: np.ndarray
    iterations: int
    evaluations: int
    termination: Termination
    final_report: CostReport = None
    objective: float = np.nan

    @property
    def success(self):
        return self.termination is Termination.THRESHOLD_MET


def _two_loop(grad, pairs):
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    s, y, _ = pairs[-1]
    q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def lbfgs(fun, x0, opts=None, stop=None):
    """Minimize ``fun(x) -> (f, g)`` with L-BFGS and Armijo backtracking.

    ``stop(x)`` is called at the start point and after every accepted step;
    returning true ends the run with ``THRESHOLD_MET``.

    Returns ``(x, f, iterations, evaluations, termination)``.
    """
    opts = opts or LbfgsOptions()
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    evals = 1
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise InvalidStart("objective is not finite at the start point")
    if stop is not None and stop(x):
        return x, f, 0, evals, Termination.THRESHOLD_MET

    pairs = deque(maxlen=opts.memory)
    it = 0
    while it < opts.max_iters:
        if np.max(np.abs(g)) <= opts.grad_tol:
            return x, f, it, evals, Termination.GRAD_TOL
        if pairs:
            d = _two_loop(g, pairs)
            slope = g @ d
            if slope >= 0:
                pairs.clear()
        if not pairs:
            d = -g / max(1.0, np.linalg.norm(g))
            slope = g @ d

        step = 1.0
        while True:
            x_new = x + step * d
            f_new, g_new = fun(x_new)
            evals += 1
            if np.isfinite(f_new) and f_new <= f + opts.armijo_c1 * step * slope:
                break
            step *= opts.backtrack_factor
            if step < opts.min_step:
                return x, f, it, evals, Termination.LINE_SEARCH_FAIL

        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-10:
            pairs.append((s, y, 1.0 / sy))
        x, f, g = x_new, f_new, g_new
        it += 1
        if stop is not None and stop(x):
            return x, f, it, evals, Termination.THRESHOLD_MET
    return x, f, it, evals, Termination.MAX_ITER


def minimize(bundle, q0, opts=None):
    opts = opts or LbfgsOptions()
    q0 = np.array(q0, dtype=float)
    if q0.shape != (bundle.chain.dof,):
        raise InvalidArgument(f"q0 must have shape ({bundle.chain.dof},), got {q0.shape}")
    last = {}

    def fun(x):
        rep = evaluate(bundle, x)
        last["x"], last["report"] = x, rep
        return rep.total, rep.grad

    stop = None
    if opts.use_thresholds:
        # a bundle without thresholded terms is satisfied everywhere
        def stop(x):
            # the line search always evaluates the accepted point last
            rep = last["report"] if last.get("x") is x else evaluate(bundle, x)
            return rep.all_below_threshold

    x, f, it, evals, term = lbfgs(fun, q0, opts, stop)
    rep = last["report"] if last.get("x") is x else evaluate(bundle, x)
    return OptResult(x, it, evals, term, rep, f)


def project(bundle_constraints, q0, opts=None, q_nom=None):
    """Pull ``q0`` onto the constraint manifold.

    Any posture term is re-centred on ``q_nom`` (``q0`` unless given) so the
    result stays as close as possible to the seed.
    """
    if bundle_constraints.task_terms:
        raise InvalidArgument("projection bundle must not contain task terms")
    q0 = np.asarray(q0, dtype=float)
    bundle = bundle_constraints.with_posture_nominal(q0 if q_nom is None else q_nom)
    return minimize(bundle, q0, opts)


def solve_ik(bundle_full, q0, target, opts=None):
    """Numerical IK: constraints plus task terms aimed at ``target``.

    ``target`` is an end-effector position ``(x, y)`` or pose ``(x, y, theta)``.
    """
    if not bundle_full.task_terms:
        raise InvalidArgument("IK bundle needs at least one task term")
    q0 = np.asarray(q0, dtype=float)
    bundle = bundle_full.with_task_target(target).with_posture_nominal(q0)
    return minimize(bundle, q0, opts)


def newton_raphson_ik(chain, q0, x_target, opts=None):
    """Damped pseudoinverse iteration ``q <- q - alpha J+ (f(q) - x)``.

    Success is reported as ``THRESHOLD_MET`` with a single-term report whose
    raw value is the squared residual norm.
    """
    opts = opts or NrOptions()
    x_target = as_vector(x_target, "x_target")
    m = x_target.shape[0]
    if m not in (2, 3):
        raise InvalidArgument("target must be a position (2) or pose (3)")
    q = as_vector(q0, "q0", chain.dof).copy()
    tol2 = opts.position_tol ** 2

    def report(r):
        v = float(r @ r)
        return CostReport((v,), v, np.zeros(chain.dof), v <= tol2)

    it = 0
    while True:
        r = kin.forward_kinematics(chain, q)[:m] - x_target
        if np.linalg.norm(r) <= opts.position_tol:
            return OptResult(q, it, it + 1, Termination.THRESHOLD_MET, report(r), float(r @ r))
        if it >= opts.max_iters:
            return OptResult(q, it, it + 1, Termination.MAX_ITER, report(r), float(r @ r))
        J = kin.jacobian(chain, q)[:m]
        A = J @ J.T + opts.damping * np.eye(m)
        if opts.damping == 0 and np.linalg.matrix_rank(A) < m:
            raise NumericalFailure("singular Jacobian with zero damping")
        try:
            dq = J.T @ np.linalg.solve(A, r)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("damped pseudoinverse system is singular") from exc
        q = q - opts.alpha * dq
        it += 1
