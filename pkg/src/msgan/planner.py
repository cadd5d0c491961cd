"""Constrained RRT with goal sampling.

Every random sample is projected onto the constraint manifold before the
tree is extended toward it, and every interpolated configuration along an
extension is projected again (posture-regularized to the previous node)
and collision-checked. Each iteration also tries to connect the newest
node to the nearest of ``K`` goal configurations found by numerical IK.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import kinematics as kin
from .costs import evaluate
from .exceptions import InvalidArgument, InvalidStart, NoGoalFound
from .optim import project, solve_ik


@dataclass(frozen=True)
class PlannerOptions:
    max_iter: int = 2000
    step_size: float = 0.1
    goal_count: int = 10
    goal_tol: float = 1e-3
    uniform_mix_prob: float = 0.2

    def __post_init__(self):
        if not self.step_size > 0:
            raise InvalidArgument("step_size must be positive")
        if self.goal_count < 1:
            raise InvalidArgument("goal_count must be >= 1")
        if not 0 <= self.uniform_mix_prob <= 1:
            raise InvalidArgument("uniform_mix_prob must lie in [0, 1]")


@dataclass
class PlanStats:
    projections: int = 0
    projection_steps: int = 0
    extensions: int = 0
    iterations: int = 0
    ik_calls: int = 0
    wall_time: float = 0.0
    timed_out: bool = False


@dataclass
class PlanResult:
    path: np.ndarray
    stats: PlanStats
    goals: np.ndarray = None
    tree: "PlanTree" = None

    @property
    def success(self):
        return self.path is not None


class PlanTree:
    def __init__(self, root):
        root = np.asarray(root, dtype=float)
        self._nodes = np.empty((64, root.shape[0]))
        self._nodes[0] = root
        self.parents = [-1]

    def __len__(self):
        return len(self.parents)

    @property
    def nodes(self):
        return self._nodes[:len(self.parents)]

    def add(self, q, parent):
        n = len(self.parents)
        if n == self._nodes.shape[0]:
            self._nodes = np.vstack([self._nodes, np.empty_like(self._nodes)])
        self._nodes[n] = q
        self.parents.append(parent)
        return n

    def __getitem__(self, i):
        return self._nodes[i]


def nearest_neighbor(points, q):
    """Index of the nearest row of ``points`` (first index on ties)."""
    points = np.asarray(points, dtype=float)
    d = np.sum((points - q) ** 2, axis=1)
    return int(np.argmin(d))


def extract_path(tree, goal_index):
    idx = []
    i = goal_index
    while i != -1:
        idx.append(i)
        i = tree.parents[i]
    return tree.nodes[idx[::-1]].copy()


# --- samplers ------------------------------------------------------------


class UniformSampler:
    def __init__(self, chain):
        self.chain = chain

    def sample(self, rng, task=None):
        return self.chain.random_configurations(rng)


class LearnedSampler:
    """Draw a task uniformly from the task box (unless given) and query the ensemble."""

    def __init__(self, ensemble, task_box):
        self.ensemble = ensemble
        self.task_lower = np.asarray(task_box[0], dtype=float)
        self.task_upper = np.asarray(task_box[1], dtype=float)

    def sample(self, rng, task=None):
        if task is None:
            task = rng.uniform(self.task_lower, self.task_upper)
        return self.ensemble.sample(np.asarray(task, dtype=float)[:self.ensemble.task_dim], rng)


class MixedSampler:
    """Uniform with probability ``p_uniform``, learned otherwise.

    At ``p_uniform`` of exactly 0 or 1 no coin is drawn, so the random stream
    matches the pure sampler.
    """

    def __init__(self, uniform, learned, p_uniform=0.2):
        self.uniform = uniform
        self.learned = learned
        self.p_uniform = p_uniform

    def sample(self, rng, task=None):
        if self.p_uniform >= 1:
            return self.uniform.sample(rng, task)
        if self.p_uniform <= 0:
            return self.learned.sample(rng, task)
        if rng.random() < self.p_uniform:
            return self.uniform.sample(rng, task)
        return self.learned.sample(rng, task)


# --- problem -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PlanningProblem:
    """What the planner needs from a scenario."""

    chain: kin.PlanarChain
    world: kin.World
    constraints: object
    task_bundle: object
    lbfgs: object = None
    options: PlannerOptions = field(default_factory=PlannerOptions)

    def feasible(self, q):
        return evaluate(self.constraints, q).all_below_threshold and not kin.in_collision(self.chain, q, self.world)


def sample_goal(problem, x_g, k, sampler, rng, stats=None):
    """Up to ``k`` distinct feasible IK solutions for task ``x_g``."""
    goals = []
    for _ in range(k):
        q0 = sampler.sample(rng, task=x_g)
        res = solve_ik(problem.task_bundle, q0, x_g, problem.lbfgs)
        if stats is not None:
            stats.ik_calls += 1
        if not res.success or kin.in_collision(problem.chain, res.q_final, problem.world):
            continue
        if any(np.linalg.norm(res.q_final - g) <= problem.options.goal_tol for g in goals):
            continue
        goals.append(res.q_final)
    if not goals:
        raise NoGoalFound(f"no IK solution found for task {np.asarray(x_g).tolist()}")
    return np.array(goals)


def constrained_extend(tree, from_index, q_target, problem, stats):
    """Walk from ``tree[from_index]`` toward ``q_target`` in projected steps.

    Stops at the first step whose projection fails, collides, jumps more
    than twice the step size, or makes no progress. Returns the index of the
    last node added (``from_index`` if none).
    """
    opts = problem.options
    delta = opts.step_size
    q_target = np.asarray(q_target, dtype=float)
    idx = from_index
    q_prev = tree[idx].copy()
    dist = float(np.linalg.norm(q_target - q_prev))
    # walk all the way; the goal tolerance is applied by the caller
    while dist > 1e-12:
        if dist <= delta * (1 + 1e-9):
            q_int = q_target
        else:
            q_int = q_prev + (delta / dist) * (q_target - q_prev)
        res = project(problem.constraints, q_int, problem.lbfgs, q_nom=q_prev)
        stats.projections += 1
        stats.projection_steps += res.iterations
        if not res.success:
            break
        q_new = res.q_final
        if kin.in_collision(problem.chain, q_new, problem.world):
            break
        if np.linalg.norm(q_new - q_prev) > 2 * delta:
            break
        new_dist = float(np.linalg.norm(q_target - q_new))
        if new_dist >= dist:
            break
        idx = tree.add(q_new, idx)
        q_prev, dist = q_new, new_dist
    return idx


def plan(problem, q0, x_g, sampler, rng, time_limit=None):
    """Run the constrained RRT; returns a ``PlanResult`` (``path`` is None on failure).

    With ``time_limit`` (seconds of wall time) the loop gives up once the
    budget is spent and sets ``stats.timed_out``.
    """
    t0 = time.monotonic()
    opts = problem.options
    stats = PlanStats()
    q0 = np.asarray(q0, dtype=float)
    if q0.shape != (problem.chain.dof,) or not problem.feasible(q0):
        raise InvalidStart("start configuration violates the constraints or collides")

    # already at the task: nothing to plan
    if evaluate(problem.task_bundle.with_task_target(x_g).with_posture_nominal(q0), q0).all_below_threshold:
        stats.wall_time = time.monotonic() - t0
        return PlanResult(q0[None].copy(), stats, q0[None].copy())

    goals = sample_goal(problem, x_g, opts.goal_count, sampler, rng, stats)
    tree = PlanTree(q0)
    for it in range(opts.max_iter):
        if time_limit is not None and time.monotonic() - t0 > time_limit:
            stats.timed_out = True
            break
        stats.iterations = it + 1
        q_rand = sampler.sample(rng)
        res = project(problem.constraints, q_rand, problem.lbfgs)
        stats.projections += 1
        stats.projection_steps += res.iterations
        if not res.success:
            continue
        q_hat = res.q_final
        near = nearest_neighbor(tree.nodes, q_hat)
        reached_a = constrained_extend(tree, near, q_hat, problem, stats)
        stats.extensions += 1
        k = nearest_neighbor(goals, tree[reached_a])
        reached_b = constrained_extend(tree, reached_a, goals[k], problem, stats)
        stats.extensions += 1
        if np.linalg.norm(tree[reached_b] - goals[k]) <= opts.goal_tol:
            stats.wall_time = time.monotonic() - t0
            return PlanResult(extract_path(tree, reached_b), stats, goals, tree)
    stats.wall_time = time.monotonic() - t0
    return PlanResult(None, stats, goals, tree)


def validate_path(problem, path, x_g=None):
    """Check continuity, constraint satisfaction and collision freedom of every node."""
    path = np.asarray(path, dtype=float)
    if path.ndim != 2 or len(path) == 0:
        return False
    steps = np.linalg.norm(np.diff(path, axis=0), axis=1)
    if np.any(steps > 2 * problem.options.step_size + 1e-12):
        return False
    if not all(problem.feasible(q) for q in path):
        return False
    if x_g is not None:
        bundle = problem.task_bundle.with_task_target(x_g).with_posture_nominal(path[-1])
        if not evaluate(bundle, path[-1]).all_below_threshold:
            return False
    return True
