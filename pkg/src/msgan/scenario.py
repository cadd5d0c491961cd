"""Scenario files: chain, world, cost bundles, solver and planner options.

Scenarios are TOML documents with ``schema = 1``. Built-in scenarios ship
inside the package and can be referenced by bare name (``reference6``).
Lengths are metres, angles radians, masses kilograms.
"""

from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np
try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import kinematics as kin
from .costs import (DEFAULT_THRESHOLDS, DEFAULT_WEIGHTS, CostBundle, EePoseCost, JointLimitCost, PostureCost,
                    StaticStabilityCost)
from .exceptions import ConfigError, MsganError
from .gan import GanTrainConfig
from .optim import LbfgsOptions
from .planner import PlannerOptions, PlanningProblem

SCHEMA_VERSION = 1
_MISSING = object()


@dataclass(frozen=True)
class ModelConfig:
    n_nets: int = 10
    noise_dim: int = 4
    hidden: tuple = (200, 200)
    disc_hidden: tuple = (20, 20)


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    chain: kin.PlanarChain
    world: kin.World
    constraints: CostBundle
    task_bundle: CostBundle
    task_box: tuple
    lbfgs: LbfgsOptions = field(default_factory=LbfgsOptions)
    planner: PlannerOptions = field(default_factory=PlannerOptions)
    gan: GanTrainConfig = field(default_factory=GanTrainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    dataset_size: int = 2000
    start_box: tuple = None
    goal_box: tuple = None
    coverage_epsilon: float = 0.3
    coverage_clusters: int = 8
    paths: dict = field(default_factory=dict)
    source: str = None

    @property
    def problem(self):
        return PlanningProblem(self.chain, self.world, self.constraints, self.task_bundle, self.lbfgs, self.planner)


def _get(table, key, default=_MISSING, where=""):
    if key in table:
        return table[key]
    if default is _MISSING:
        raise ConfigError(f"missing required key {where}{key!r}")
    return default


def _options(cls, table, where):
    table = dict(table or {})
    names = {f.name for f in fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")
    for k, v in table.items():
        if isinstance(v, list):
            table[k] = tuple(v)
    try:
        return cls(**table)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def _box(table, where):
    if table is None:
        return None
    lo = np.asarray(_get(table, "lower", where=f"{where}."), dtype=float)
    hi = np.asarray(_get(table, "upper", where=f"{where}."), dtype=float)
    if lo.shape != (2,) or hi.shape != (2,) or np.any(lo > hi):
        raise ConfigError(f"[{where}] must give 2-D lower <= upper")
    return lo, hi


def _term(chain, t, where):
    kind = _get(t, "kind", where=where)
    weight = float(t.get("weight", DEFAULT_WEIGHTS.get(kind, 1.0)))
    threshold = t.get("threshold", DEFAULT_THRESHOLDS.get(kind))
    if kind == "ee_pose":
        ref = t.get("reference", [0.0, 0.0, 0.0])
        return EePoseCost(ref, t.get("w_diag", [1.0, 1.0, 1.0]), weight, threshold, task=bool(t.get("task", False)))
    if kind == "posture":
        q_nom = t.get("nominal", [0.0] * chain.dof)
        return PostureCost(q_nom, t.get("w_diag"), weight, threshold)
    if kind == "joint_limit":
        return JointLimitCost(weight, threshold)
    if kind == "static_stability":
        lo, hi = _get(t, "band", where=where)
        return StaticStabilityCost(float(lo), float(hi), weight, threshold)
    raise ConfigError(f"{where}: unknown cost kind {kind!r}")


def _obstacle(o, where):
    if "circle" in o:
        c = o["circle"]
        return kin.Circle(_get(c, "center", where=where), _get(c, "radius", where=where))
    if "box" in o:
        b = o["box"]
        return kin.Box(_get(b, "min", where=where), _get(b, "max", where=where))
    raise ConfigError(f"{where}: obstacle must be a circle or a box")


def parse_scenario(doc, source=None, base_dir=None):
    schema = doc.get("schema")
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema {schema!r} (expected {SCHEMA_VERSION})")
    try:
        c = _get(doc, "chain")
        n = len(_get(c, "link_lengths", where="chain."))
        chain = kin.PlanarChain(
            link_lengths=c["link_lengths"],
            link_masses=c.get("link_masses", [1.0] * n),
            joint_lower=_get(c, "joint_lower", where="chain."),
            joint_upper=_get(c, "joint_upper", where="chain."),
            base=c.get("base", [0.0, 0.0]),
            name=doc.get("name", "scenario"),
        )
        w = doc.get("world", {})
        world = kin.World([_obstacle(o, "world.obstacles") for o in w.get("obstacles", [])],
                          w.get("clearance_margin", 0.0))
        constraints = CostBundle(chain, [_term(chain, t, "constraints") for t in doc.get("constraints", [])])
        task = dict(doc.get("task", {"kind": "ee_pose", "w_diag": [1.0, 1.0, 0.0]}))
        task["task"] = True
        # posture = false drops the projection regularizer from the IK bundle
        keep_posture = task.pop("posture", True)
        if not isinstance(keep_posture, bool):
            raise ConfigError("[task] posture must be true or false")
        base = constraints if keep_posture else CostBundle(
            chain, [t for t in constraints.terms if t.kind != "posture"])
        task_bundle = base.with_terms(_term(chain, task, "task"))
        reach = chain.reach
        default_box = (chain.base - reach, chain.base + reach)
        task_box = _box(doc.get("task_box"), "task_box") or default_box
        exp = doc.get("experiment", {})
        paths = {}
        for key, value in doc.get("paths", {}).items():
            p = Path(value)
            if base_dir is not None and not p.is_absolute():
                p = Path(base_dir) / p
            if not p.exists():
                raise ConfigError(f"[paths] {key} refers to missing file {p}")
            paths[key] = p
        return Scenario(
            name=doc.get("name", "scenario"),
            chain=chain,
            world=world,
            constraints=constraints,
            task_bundle=task_bundle,
            task_box=task_box,
            lbfgs=_options(LbfgsOptions, doc.get("lbfgs"), "lbfgs"),
            planner=_options(PlannerOptions, doc.get("planner"), "planner"),
            gan=_options(GanTrainConfig, doc.get("gan"), "gan"),
            model=_options(ModelConfig, doc.get("model"), "model"),
            dataset_size=int(exp.get("dataset_size", 2000)),
            start_box=_box(exp.get("start_box"), "experiment.start_box"),
            goal_box=_box(exp.get("goal_box"), "experiment.goal_box"),
            coverage_epsilon=float(exp.get("coverage_epsilon", 0.3)),
            coverage_clusters=int(exp.get("coverage_clusters", 8)),
            paths=paths,
            source=source,
        )
    except ConfigError:
        raise
    except (MsganError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc


def builtin_scenarios():
    return sorted(p.name[:-5] for p in resources.files("msgan.scenarios").iterdir() if p.name.endswith(".toml"))


def load_scenario(name_or_path):
    """Load a scenario from a TOML path, or a built-in scenario by name."""
    p = Path(name_or_path)
    if p.suffix == ".toml" or p.exists():
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read scenario {p}: {exc}") from exc
        source, base_dir = str(p), p.parent
    else:
        res = resources.files("msgan.scenarios") / f"{name_or_path}.toml"
        if not res.is_file():
            raise ConfigError(f"unknown scenario {name_or_path!r}; built-ins: {builtin_scenarios()}")
        text, source, base_dir = res.read_text(), name_or_path, None
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return parse_scenario(doc, source, base_dir)
