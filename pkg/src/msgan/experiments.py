"""Paired benchmark runners and their CSV/SVG reports.

Every trial draws from its own generator seeded by ``(seed, trial)``, so a
run is a pure function of its inputs no matter how trials are spread over
workers. Row CSVs hold only counter-based columns and are byte-identical
across re-runs; wall-clock times go to a separate ``*.timing.csv``.
"""

import csv
import io
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from . import gan as gan_mod
from . import kinematics as kin
from . import planner as pl
from .costs import evaluate
from .exceptions import FormatError, InfeasibleScenario, NoGoalFound
from .optim import project, solve_ik

TRIAL_TIMEOUT = 30.0
METHODS = ("random", "gan")


def worker_count(n_tasks):
    """Pool size: ``MS_THREADS`` if set, else the CPU count, never more than the work."""
    env = os.environ.get("MS_THREADS")
    n = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(n, n_tasks))


# --- reports -------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _mean_std(values):
    if not values:
        return float("nan"), float("nan")
    a = np.asarray(values, dtype=float)
    return float(np.mean(a)), float(np.std(a))


@dataclass
class ExperimentReport:
    """Per-trial rows plus mean/std aggregates per method.

    ``counters`` name the integer columns that are aggregated; the starred
    variants (``*_star``) only use successful trials.
    """

    kind: str
    counters: tuple
    rows: list = field(default_factory=list)
    times: list = field(default_factory=list)

    @property
    def columns(self):
        return ("trial", "method", "success") + tuple(self.counters)

    def aggregates(self, rows=None):
        rows = self.rows if rows is None else rows
        out = []
        for method in METHODS:
            sel = [r for r in rows if r["method"] == method]
            if not sel:
                continue
            ok = [r for r in sel if r["success"]]
            agg = {"method": method, "trials": len(sel), "success_pct": 100.0 * len(ok) / len(sel)}
            for c in self.counters:
                agg[f"{c}_mean"], agg[f"{c}_std"] = _mean_std([r[c] for r in sel])
                agg[f"{c}_star_mean"], agg[f"{c}_star_std"] = _mean_std([r[c] for r in ok])
            out.append(agg)
        return out

    def timing_aggregates(self):
        out = []
        for method in METHODS:
            sel = [(r, t) for r, t in zip(self.rows, self.times) if r["method"] == method]
            if not sel:
                continue
            t_all = [1e3 * t for _, t in sel]
            t_ok = [1e3 * t for r, t in sel if r["success"]]
            agg = {"method": method}
            agg["T_ave_ms_mean"], agg["T_ave_ms_std"] = _mean_std(t_all)
            agg["T_star_ave_ms_mean"], agg["T_star_ave_ms_std"] = _mean_std(t_ok)
            out.append(agg)
        return out

    def summary(self, method):
        return next(a for a in self.aggregates() if a["method"] == method)

    @staticmethod
    def _csv(columns, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([r[c] if isinstance(r[c], str) else _fmt(r[c]) for c in columns])
        return buf.getvalue()

    def rows_csv(self):
        return self._csv(self.columns, self.rows)

    def summary_csv(self, rows=None):
        aggs = self.aggregates(rows)
        return self._csv(tuple(aggs[0].keys()), aggs) if aggs else ""

    def timing_csv(self):
        aggs = self.timing_aggregates()
        cols = ("trial", "method", "time_ms")
        lines = [{"trial": r["trial"], "method": r["method"], "time_ms": 1e3 * t} for r, t in zip(self.rows, self.times)]
        text = self._csv(cols, lines)
        if aggs:
            text += "\n" + self._csv(tuple(aggs[0].keys()), aggs)
        return text

    def write(self, path):
        """Write rows to ``path`` plus ``.summary.csv`` and ``.timing.csv`` siblings; returns the paths."""
        path = Path(path)
        paths = report_paths(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.rows_csv())
        paths["summary"].write_text(self.summary_csv())
        paths["timing"].write_text(self.timing_csv())
        verify_report(path, self.kind, self.counters)
        return paths


def report_paths(path):
    path = Path(path)
    stem = path.name[:-4] if path.name.endswith(".csv") else path.name
    return {"rows": path, "summary": path.with_name(stem + ".summary.csv"),
            "timing": path.with_name(stem + ".timing.csv")}


def read_rows(path, counters):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for r in reader:
            row = {"trial": int(r["trial"]), "method": r["method"], "success": bool(int(r["success"]))}
            for c in counters:
                row[c] = int(r[c])
            rows.append(row)
    return rows


def verify_report(path, kind, counters):
    """Recompute the summary from the row CSV and require a byte-identical match."""
    paths = report_paths(path)
    report = ExperimentReport(kind, tuple(counters))
    expected = report.summary_csv(read_rows(paths["rows"], counters))
    actual = paths["summary"].read_text()
    if expected != actual:
        raise FormatError(f"{paths['summary']} does not match the aggregates of {paths['rows']}")
    return True


# --- pool ----------------------------------------------------------------

_CTX = None


def _init_worker(ctx):
    global _CTX
    _CTX = ctx


def _call(args):
    fn, i = args
    return fn(_CTX, i)


def run_trials(fn, ctx, n):
    """``[fn(ctx, i) for i in range(n)]`` over a process pool; results keep trial order."""
    workers = worker_count(n)
    if workers == 1:
        return [fn(ctx, i) for i in range(n)]
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(ctx,)) as pool:
        return list(pool.map(_call, [(fn, i) for i in range(n)]))


# --- projection and IK ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class EvalContext:
    scenario: object
    ensemble: object
    seed: int


def valid_configuration(sc, rng, attempts=100):
    """A projected, collision-free configuration; ``InfeasibleScenario`` if none is found."""
    for _ in range(attempts):
        res = project(sc.constraints, sc.chain.random_configurations(rng), sc.lbfgs)
        if res.success and not kin.in_collision(sc.chain, res.q_final, sc.world):
            return res.q_final
    raise InfeasibleScenario(f"no valid configuration in {attempts} attempts")


def _seeds(ctx, rng):
    """Target task and the paired (random, GAN) initial configurations."""
    sc = ctx.scenario
    target = kin.forward_kinematics(sc.chain, valid_configuration(sc, rng))[:gan_mod.TASK_DIM]
    q_rand = sc.chain.random_configurations(rng)
    q_gan = ctx.ensemble.sample(target, rng)
    return target, (q_rand, q_gan)


def projection_trial(ctx, i):
    sc = ctx.scenario
    target, inits = _seeds(ctx, np.random.default_rng([ctx.seed, i]))
    out = []
    for method, q0 in zip(METHODS, inits):
        t0 = time.monotonic()
        res = project(sc.constraints, q0, sc.lbfgs)
        dt = time.monotonic() - t0
        # re-check the thresholds on the returned configuration
        ok = evaluate(sc.constraints.with_posture_nominal(q0), res.q_final).all_below_threshold
        out.append(({"trial": i, "method": method, "success": bool(ok and res.success),
                     "iterations": res.iterations, "evaluations": res.evaluations}, dt))
    return out


def ik_trial(ctx, i):
    sc = ctx.scenario
    target, inits = _seeds(ctx, np.random.default_rng([ctx.seed, i]))
    out = []
    for method, q0 in zip(METHODS, inits):
        t0 = time.monotonic()
        res = solve_ik(sc.task_bundle, q0, target, sc.lbfgs)
        dt = time.monotonic() - t0
        bundle = sc.task_bundle.with_task_target(target).with_posture_nominal(q0)
        ok = evaluate(bundle, res.q_final).all_below_threshold
        out.append(({"trial": i, "method": method, "success": bool(ok and res.success),
                     "iterations": res.iterations, "evaluations": res.evaluations}, dt))
    return out


def _collect(kind, counters, results):
    report = ExperimentReport(kind, counters)
    for trial in results:
        for row, dt in trial:
            report.rows.append(row)
            report.times.append(dt)
    return report


def eval_projection(scenario, ensemble, trials, seed):
    ctx = EvalContext(scenario, ensemble, seed)
    return _collect("projection", ("iterations", "evaluations"), run_trials(projection_trial, ctx, trials))


def eval_ik(scenario, ensemble, trials, seed):
    ctx = EvalContext(scenario, ensemble, seed)
    return _collect("ik", ("iterations", "evaluations"), run_trials(ik_trial, ctx, trials))


# --- planning ------------------------------------------------------------

PLAN_COUNTERS = ("projections", "projection_steps", "extensions", "iterations", "ik_calls", "path_nodes")


@dataclass(frozen=True, eq=False)
class PlanContext:
    scenario: object
    ensemble: object
    seed: int
    time_limit: float = TRIAL_TIMEOUT
    methods: tuple = METHODS


def start_and_goal(sc, rng, attempts=100):
    """Start configuration solving IK to a point of the start box, and a goal point from the goal box."""
    start_box = sc.start_box or sc.task_box
    goal_box = sc.goal_box or sc.task_box
    problem = sc.problem
    for _ in range(attempts):
        x0 = rng.uniform(*start_box)
        res = solve_ik(sc.task_bundle, sc.chain.random_configurations(rng), x0, sc.lbfgs)
        if res.success and problem.feasible(res.q_final):
            return res.q_final, rng.uniform(*goal_box)
    raise InfeasibleScenario(f"no feasible start configuration in {attempts} attempts")


def make_sampler(sc, ensemble, method):
    uniform = pl.UniformSampler(sc.chain)
    if method == "random":
        return uniform
    return pl.MixedSampler(uniform, pl.LearnedSampler(ensemble, sc.task_box), sc.planner.uniform_mix_prob)


def plan_trial(ctx, i, keep_paths=False):
    """Both samplers on the same start, goal and planner random stream."""
    sc = ctx.scenario
    problem = sc.problem
    q0, x_g = start_and_goal(sc, np.random.default_rng([ctx.seed, i, 0]))
    out = []
    for method in ctx.methods:
        sampler = make_sampler(sc, ctx.ensemble, method)
        t0 = time.monotonic()
        try:
            res = pl.plan(problem, q0, x_g, sampler, np.random.default_rng([ctx.seed, i, 1]), ctx.time_limit)
            stats, path = res.stats, res.path
        except NoGoalFound:
            stats, path = pl.PlanStats(ik_calls=sc.planner.goal_count), None
        dt = time.monotonic() - t0
        ok = path is not None and pl.validate_path(problem, path, x_g)
        row = {"trial": i, "method": method, "success": bool(ok)}
        row.update({c: getattr(stats, c) for c in PLAN_COUNTERS if c != "path_nodes"})
        row["path_nodes"] = len(path) if ok else 0
        out.append((row, dt, path if ok else None) if keep_paths else (row, dt))
    return out


def bench_plan(scenario, ensemble, trials, seed, time_limit=TRIAL_TIMEOUT):
    ctx = PlanContext(scenario, ensemble, seed, time_limit)
    return _collect("planning", PLAN_COUNTERS, run_trials(plan_trial, ctx, trials))


def _plan_with_paths(ctx, i):
    return plan_trial(ctx, i, keep_paths=True)


def plan_paths(scenario, ensemble, trials, seed, time_limit=TRIAL_TIMEOUT):
    """Plan ``trials`` queries with one sampler (GAN if ``ensemble`` else uniform); returns ``[(row, path)]``."""
    method = "random" if ensemble is None else "gan"
    ctx = PlanContext(scenario, ensemble, seed, time_limit, (method,))
    return [(row, path) for trial in run_trials(_plan_with_paths, ctx, trials) for row, _, path in trial]


def paths_text(results, dof):
    """One configuration per line: ``trial,node,q0,...``."""
    lines = [",".join(["trial", "node"] + [f"q{j}" for j in range(dof)])]
    for row, path in results:
        if path is None:
            continue
        for k, q in enumerate(path):
            lines.append(",".join([str(row["trial"]), str(k)] + [repr(float(v)) for v in q]))
    return "\n".join(lines) + "\n"


# --- coverage study ------------------------------------------------------


def cluster_occupancy(samples, centers):
    """Number of k-means cells (nearest-centre regions) holding at least one sample."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        return 0
    d = np.sum((samples[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    return int(len(np.unique(np.argmin(d, axis=1))))


def dataset_clusters(configs, k, seed=0):
    from sklearn.cluster import KMeans

    return KMeans(k, n_init=10, random_state=seed).fit(configs).cluster_centers_


def coverage_rows(dataset, models, epsilon, k, seed=0):
    """Coverage rows for the dataset itself and each ``(label, ensemble)``.

    Each model draws one sample per dataset task. Ensembles with more than
    one net also get a row per member net.
    """
    centers = dataset_clusters(dataset.configs, k, seed)
    rows = [{"model": "dataset", "n_nets": 0, "samples": len(dataset),
             "coverage": gan_mod.coverage(dataset.configs, dataset.configs, epsilon),
             "clusters": cluster_occupancy(dataset.configs, centers)}]
    samples = {}
    for label, ens in models:
        members = [(label, ens)]
        if ens.n_nets > 1:
            members += [(f"{label}/net{j}", ens.subset([j])) for j in range(ens.n_nets)]
        for name, e in members:
            s = e.sample_batch(dataset.tasks, np.random.default_rng(seed))
            samples[name] = s
            rows.append({"model": name, "n_nets": e.n_nets, "samples": len(s),
                         "coverage": gan_mod.coverage(s, dataset.configs, epsilon),
                         "clusters": cluster_occupancy(s, centers)})
    return rows, samples


def coverage_csv(rows, epsilon):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "n_nets", "samples", "epsilon", "coverage", "clusters"])
    for r in rows:
        w.writerow([r["model"], r["n_nets"], r["samples"], repr(float(epsilon)), repr(r["coverage"]), r["clusters"]])
    return buf.getvalue()


def scatter_svg(dataset_configs, panels, lower, upper, size=320, pad=36):
    """Side-by-side scatter panels over the first two joint angles.

    Dataset configurations are red circles, generated samples blue crosses.
    ``panels`` is a list of ``(title, samples)``.
    """
    lower = np.asarray(lower, dtype=float)[:2]
    upper = np.asarray(upper, dtype=float)[:2]
    width = len(panels) * (size + pad) + pad
    height = size + 2 * pad
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">', '<rect width="100%" height="100%" fill="white"/>']

    def xy(q, x0):
        u = (q[:, :2] - lower) / (upper - lower)
        return x0 + u[:, 0] * size, pad + (1 - u[:, 1]) * size

    for p, (title, samples) in enumerate(panels):
        x0 = pad + p * (size + pad)
        out.append(f'<g><rect x="{x0}" y="{pad}" width="{size}" height="{size}" fill="none" stroke="black"/>')
        out.append(f'<text x="{x0 + size / 2}" y="{pad - 12}" text-anchor="middle" font-size="13">'
                   f'{escape(title)}</text>')
        out.append(f'<text x="{x0 + size / 2}" y="{pad + size + 24}" text-anchor="middle" font-size="11">q0 [rad]</text>')
        out.append(f'<text x="{x0 - 8}" y="{pad + size / 2}" text-anchor="end" font-size="11">q1</text>')
        for label, x in ((f"{lower[0]:.2f}", x0), (f"{upper[0]:.2f}", x0 + size)):
            out.append(f'<text x="{x}" y="{pad + size + 12}" text-anchor="middle" font-size="9">{label}</text>')
        xs, ys = xy(np.asarray(dataset_configs), x0)
        for x, y in zip(xs, ys):
            out.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="1.6" fill="none" stroke="red" stroke-width="0.6"/>')
        xs, ys = xy(np.asarray(samples), x0)
        for x, y in zip(xs, ys):
            out.append(f'<path d="M{x - 1.8:.1f},{y - 1.8:.1f}L{x + 1.8:.1f},{y + 1.8:.1f}'
                       f'M{x - 1.8:.1f},{y + 1.8:.1f}L{x + 1.8:.1f},{y - 1.8:.1f}" stroke="blue" stroke-width="0.6"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
