"""Conditional GAN over robot configurations.

The generator is an ensemble of independent MLPs, each mapping
``[noise, task]`` to joint angles through a tanh output rescaled onto the
joint limits. Generated configurations are augmented with kinematic
features (end-effector pose and CoM x) before the single shared
discriminator sees them, and every generator net is additionally trained
on robotics costs: end-effector target error, static stability and joint
limits.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import kinematics as kin
from . import neural
from .costs import joint_limit_cost
from .exceptions import FormatError, InfeasibleScenario, InvalidArgument, TrainingDiverged
from .optim import project
from .validation import as_matrix

logger = logging.getLogger(__name__)

TASK_DIM = 2


# --- dataset -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    configs: np.ndarray
    tasks: np.ndarray
    acceptance_rate: float = 1.0

    def __post_init__(self):
        configs = as_matrix(self.configs, "configs")
        tasks = as_matrix(self.tasks, "tasks")
        if configs.shape[0] != tasks.shape[0]:
            raise InvalidArgument("configs and tasks must have the same number of rows")
        object.__setattr__(self, "configs", configs)
        object.__setattr__(self, "tasks", tasks)

    def __len__(self):
        return self.configs.shape[0]

    def save(self, path):
        n, t = self.configs.shape[1], self.tasks.shape[1]
        header = ",".join([f"q{i}" for i in range(n)] + ["task_x", "task_y"][:t])
        np.savetxt(path, np.hstack([self.configs, self.tasks]), delimiter=",",
                   header=header, comments="", fmt="%.17g")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        n_tasks = sum(1 for h in header if h.startswith("task_"))
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != len(header):
            raise FormatError(f"{path}: {data.shape[1]} columns but header names {len(header)}")
        return cls(data[:, :-n_tasks], data[:, -n_tasks:])


def generate_dataset(chain, constraints, world, n, rng, lbfgs_opts=None, probe=1000):
    """Sample uniformly within joint limits, project, keep feasible collision-free rows."""
    if n < 1:
        raise InvalidArgument("dataset size must be >= 1")
    configs = []
    tried = 0
    while len(configs) < n:
        q = chain.random_configurations(rng)
        tried += 1
        res = project(constraints, q, lbfgs_opts)
        if res.success and not kin.in_collision(chain, res.q_final, world):
            configs.append(res.q_final)
        if tried == probe and len(configs) < probe * 1e-3:
            raise InfeasibleScenario(f"only {len(configs)} of {probe} probe samples were feasible")
    configs = np.array(configs)
    tasks = kin.forward_kinematics(chain, configs)[:, :TASK_DIM]
    return Dataset(configs, tasks, acceptance_rate=n / tried)


# --- augmentation --------------------------------------------------------


def augment(chain, q):
    """``[q, x, y, theta, com_x]``; broadcasts over leading axes."""
    q = np.asarray(q, dtype=float)
    pose = kin.forward_kinematics(chain, q)
    com_x = kin.center_of_mass(chain, q)[..., :1]
    return np.concatenate([q, pose, com_x], axis=-1)


def augment_jacobian(chain, q):
    q = np.asarray(q, dtype=float)
    n = chain.dof
    eye = np.broadcast_to(np.eye(n), q.shape[:-1] + (n, n))
    return np.concatenate([eye, kin.jacobian(chain, q), kin.com_jacobian(chain, q)[..., :1, :]], axis=-2)


# --- ensemble ------------------------------------------------------------


class GeneratorEnsemble:
    """``n_nets`` generator MLPs sharing input/output layout.

    Inputs are ``[z, (task - task_center) / task_scale]``; outputs are mapped
    from ``(-1, 1)`` onto ``[joint_lower, joint_upper]``.
    """

    def __init__(self, nets, noise_dim, joint_lower, joint_upper, task_center, task_scale):
        if not nets:
            raise InvalidArgument("an ensemble needs at least one net")
        self.nets = list(nets)
        self.noise_dim = int(noise_dim)
        self.joint_lower = np.asarray(joint_lower, dtype=float)
        self.joint_upper = np.asarray(joint_upper, dtype=float)
        self.task_center = np.asarray(task_center, dtype=float)
        self.task_scale = float(task_scale)
        n_in = self.noise_dim + self.task_dim
        for net in self.nets:
            if net.n_in != n_in or net.n_out != self.dof or net.output_activation != "tanh":
                raise InvalidArgument("all nets must share the ensemble's input/output layout and use tanh output")

    @classmethod
    def initialize(cls, chain, n_nets=10, noise_dim=4, hidden=(200, 200), rng=None, task_center=None, task_scale=None,
                   output_gain=0.1):
        rng = rng if rng is not None else np.random.default_rng()
        sizes = [noise_dim + TASK_DIM, *hidden, chain.dof]
        nets = [neural.Mlp(sizes, "tanh", rng=rng, output_gain=output_gain) for _ in range(n_nets)]
        center = chain.base if task_center is None else task_center
        scale = chain.reach if task_scale is None else task_scale
        return cls(nets, noise_dim, chain.joint_lower, chain.joint_upper, center, scale)

    @property
    def n_nets(self):
        return len(self.nets)

    @property
    def dof(self):
        return self.joint_lower.shape[0]

    @property
    def task_dim(self):
        return self.task_center.shape[0]

    @property
    def _mid(self):
        return 0.5 * (self.joint_upper + self.joint_lower)

    @property
    def _half(self):
        return 0.5 * (self.joint_upper - self.joint_lower)

    def inputs(self, z, tasks):
        return np.hstack([z, (np.asarray(tasks, dtype=float) - self.task_center) / self.task_scale])

    def generate(self, index, z, tasks, return_cache=False):
        x = self.inputs(z, tasks)
        u, cache = self.nets[index].forward(x, return_cache=True)
        # clip only guards against rounding past a limit when tanh saturates
        q = np.clip(self._mid + self._half * u, self.joint_lower, self.joint_upper)
        if return_cache:
            return q, x, cache
        return q

    def sample_batch(self, tasks, rng):
        """One configuration per task row; net chosen uniformly per row."""
        tasks = as_matrix(tasks, "tasks", self.task_dim)
        m = tasks.shape[0]
        z = rng.standard_normal((m, self.noise_dim))
        idx = rng.integers(self.n_nets, size=m) if self.n_nets > 1 else np.zeros(m, dtype=int)
        out = np.empty((m, self.dof))
        for k in np.unique(idx):
            rows = idx == k
            out[rows] = self.generate(k, z[rows], tasks[rows])
        return out

    def sample(self, task, rng):
        return self.sample_batch(np.asarray(task, dtype=float).reshape(1, -1), rng)[0]

    def subset(self, indices):
        return GeneratorEnsemble([self.nets[i] for i in indices], self.noise_dim, self.joint_lower,
                                 self.joint_upper, self.task_center, self.task_scale)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = []
        for i, net in enumerate(self.nets):
            name = f"net_{i:02d}.msmlp"
            (directory / name).write_bytes(neural.save(net))
            files.append(name)
        manifest = {
            "n_nets": self.n_nets,
            "noise_dim": self.noise_dim,
            "task_dim": self.task_dim,
            "dof": self.dof,
            "joint_lower": self.joint_lower.tolist(),
            "joint_upper": self.joint_upper.tolist(),
            "task_center": self.task_center.tolist(),
            "task_scale": self.task_scale,
            "files": files,
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        try:
            manifest = json.loads((directory / "manifest.json").read_text())
            nets = [neural.load((directory / f).read_bytes()) for f in manifest["files"]]
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot read ensemble from {directory}: {exc}") from exc
        if len(nets) != manifest["n_nets"]:
            raise FormatError("manifest n_nets does not match the listed files")
        return cls(nets, manifest["noise_dim"], manifest["joint_lower"], manifest["joint_upper"],
                   manifest["task_center"], manifest["task_scale"])


class Discriminator:
    """Sigmoid-output MLP over augmented features, behind a fixed standardization.

    The feature offset and scale are frozen when the discriminator is built
    (normally from the real dataset) so that joint angles, positions and the
    unwrapped end-effector angle enter on comparable scales.
    """

    def __init__(self, net, offset, scale):
        self.net = net
        self.offset = np.asarray(offset, dtype=float)
        self.scale = np.asarray(scale, dtype=float)

    @classmethod
    def initialize(cls, chain, hidden=(20, 20), rng=None, reference_configs=None):
        net = neural.Mlp([chain.dof + 4, *hidden, 1], "sigmoid", rng=rng)
        if reference_configs is None:
            return cls(net, np.zeros(chain.dof + 4), np.ones(chain.dof + 4))
        feats = augment(chain, reference_configs)
        return cls(net, feats.mean(axis=0), np.maximum(feats.std(axis=0), 0.1))

    def forward(self, feats):
        """Returns ``(prob, logits, cache)``."""
        x = (feats - self.offset) / self.scale
        prob, cache = self.net.forward(x, return_cache=True)
        return prob, cache[0][-1], (x, cache)

    def predict_proba(self, feats):
        return self.forward(feats)[0][:, 0]

    def backward_logits(self, dlogits, cache):
        """Parameter grads and dL/d(features) given dL/d(logits)."""
        x, inner = cache
        grads, dx = self.net.backward(x, dlogits, inner, wrt_logits=True)
        return grads, dx / self.scale


# --- training ------------------------------------------------------------


@dataclass(frozen=True)
class GanTrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr_g: float = 1e-3
    lr_d: float = 1e-3
    momentum: float = 0.9
    w_adv: float = 1.0
    w_ee: float = 1.0
    w_s: float = 1.0
    w_l: float = 1.0
    d_steps_per_g_step: int = 1
    grad_clip: float = 10.0  # global L2 norm per net and step; 0 disables

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.d_steps_per_g_step < 1:
            raise InvalidArgument("epochs >= 0, batch_size >= 1 and d_steps_per_g_step >= 1 required")
        if not (np.isfinite(self.grad_clip) and self.grad_clip >= 0):
            raise InvalidArgument("grad_clip must be finite and non-negative")
        if not (self.lr_g > 0 and self.lr_d > 0):
            raise InvalidArgument("learning rates must be positive")
        weights = [self.w_adv, self.w_ee, self.w_s, self.w_l]
        if not all(np.isfinite(w) and w >= 0 for w in weights):
            raise InvalidArgument("cost weights must be finite and non-negative")


@dataclass
class TrainHistory:
    g_loss: list = field(default_factory=list)
    d_loss: list = field(default_factory=list)
    c_ee: list = field(default_factory=list)
    c_s: list = field(default_factory=list)
    c_l: list = field(default_factory=list)

    def __len__(self):
        return len(self.g_loss)

    def to_rows(self):
        return [{"epoch": i, "g_loss": g, "d_loss": d, "c_ee": e, "c_s": s, "c_l": l}
                for i, (g, d, e, s, l) in enumerate(zip(self.g_loss, self.d_loss, self.c_ee, self.c_s, self.c_l))]


class GeneratorCosts:
    """The additional per-sample generator costs, batched.

    ``c_ee`` is the squared position error to the conditioning task plus any
    end-effector pose constraints of the scenario (raw values);
    ``c_s`` sums the static-stability terms; ``c_l`` is the joint-limit barrier.
    """

    def __init__(self, chain, constraints=None):
        self.chain = chain
        terms = constraints.terms if constraints is not None else ()
        self.pose_terms = [t for t in terms if t.kind == "ee_pose" and not t.task]
        self.stability_terms = [t for t in terms if t.kind == "static_stability"]

    def __call__(self, q, tasks):
        """Returns ``(c_ee, c_s, c_l)`` values ``(B,)`` and gradients ``(B, n)``."""
        chain = self.chain
        pose = kin.forward_kinematics(chain, q)
        J = kin.jacobian(chain, q)
        err = pose[:, :2] - tasks
        c_ee = np.einsum("bi,bi->b", err, err)
        g_ee = 2.0 * np.einsum("bin,bi->bn", J[:, :2, :], err)
        for t in self.pose_terms:
            werr = (pose - t.p_ref) * t.w_diag
            c_ee = c_ee + np.einsum("bi,bi->b", pose - t.p_ref, werr)
            g_ee = g_ee + 2.0 * np.einsum("bin,bi->bn", J, werr)
        c_s = np.zeros(q.shape[0])
        g_s = np.zeros_like(q)
        for t in self.stability_terms:
            v, g = t(chain, q)
            c_s = c_s + v
            g_s = g_s + g
        c_l, g_l = joint_limit_cost(chain, q)
        return (c_ee, c_s, c_l), (g_ee, g_s, g_l)


def clip_gradients(grads, max_norm):
    """Rescale a gradient list in place so its joint L2 norm is at most ``max_norm``."""
    if max_norm <= 0:
        return grads
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if norm > max_norm:
        for g in grads:
            g *= max_norm / norm
    return grads


def _bce_logits(logits, labels):
    return neural.softplus(logits) - labels * logits


def discriminator_update(disc, sgd, real_feats, fake_feats, grad_clip=0.0):
    """One SGD step of BCE on real (label 1) versus fake (label 0) features."""
    feats = np.vstack([real_feats, fake_feats])
    labels = np.concatenate([np.ones(len(real_feats)), np.zeros(len(fake_feats))])[:, None]
    prob, logits, cache = disc.forward(feats)
    loss = float(np.mean(_bce_logits(logits, labels)))
    if not np.isfinite(loss):
        raise TrainingDiverged("discriminator loss is not finite")
    dlogits = (prob - labels) / feats.shape[0]
    grads, _ = disc.backward_logits(dlogits, cache)
    sgd.step(disc.net, clip_gradients(grads, grad_clip))
    return loss


def _fake_configs(ensemble, tasks, rng):
    m = tasks.shape[0]
    z = rng.standard_normal((m, ensemble.noise_dim))
    idx = np.arange(m) % ensemble.n_nets
    out = np.empty((m, ensemble.dof))
    for k in range(min(ensemble.n_nets, m)):
        rows = idx == k
        out[rows] = ensemble.generate(k, z[rows], tasks[rows])
    return out


def discriminator_step(disc, sgd, ensemble, chain, batch, config, rng):
    """``batch`` is ``(configs, tasks)``. Fake rows are spread round-robin over the nets."""
    configs, tasks = batch
    fakes = _fake_configs(ensemble, tasks, rng)
    return discriminator_update(disc, sgd, augment(chain, configs), augment(chain, fakes),
                                config.grad_clip)


def generator_loss(ensemble, index, disc, chain, costs, tasks, z, config):
    """Loss and parameter gradients for one generator net.

    Returns ``(loss, grads, parts)`` where ``parts`` holds the batch means of
    the adversarial term and each additional cost.
    """
    q, x, gcache = ensemble.generate(index, z, tasks, return_cache=True)
    B = q.shape[0]
    feats = augment(chain, q)
    prob, logits, dcache = disc.forward(feats)
    adv = neural.softplus(-logits)  # non-saturating: -log D(G(z))
    (c_ee, c_s, c_l), (g_ee, g_s, g_l) = costs(q, tasks)
    per_sample = config.w_adv * adv[:, 0] + config.w_ee * c_ee + config.w_s * c_s + config.w_l * c_l
    loss = float(np.mean(per_sample))
    if not np.isfinite(loss):
        raise TrainingDiverged("generator loss is not finite")

    dlogits = config.w_adv * (prob - 1.0) / B
    _, dfeats = disc.backward_logits(dlogits, dcache)
    dq = np.einsum("bf,bfn->bn", dfeats, augment_jacobian(chain, q))
    dq += (config.w_ee * g_ee + config.w_s * g_s + config.w_l * g_l) / B
    du = dq * ensemble._half
    grads, _ = ensemble.nets[index].backward(x, du, gcache)
    parts = {"adv": float(adv.mean()), "c_ee": float(c_ee.mean()), "c_s": float(c_s.mean()), "c_l": float(c_l.mean())}
    return loss, grads, parts


def generator_step(ensemble, sgds, disc, chain, costs, batch, config, rng):
    """Update every net on its own noise draw; returns per-net losses and mean cost parts."""
    _, tasks = batch
    losses = []
    parts = []
    for k in range(ensemble.n_nets):
        z = rng.standard_normal((tasks.shape[0], ensemble.noise_dim))
        loss, grads, p = generator_loss(ensemble, k, disc, chain, costs, tasks, z, config)
        sgds[k].step(ensemble.nets[k], clip_gradients(grads, config.grad_clip))
        losses.append(loss)
        parts.append(p)
    return losses, parts


def train(dataset, chain, constraints, config, rng, ensemble=None, disc=None,
          n_nets=10, noise_dim=4, hidden=(200, 200), disc_hidden=(20, 20), task_box=None):
    """Alternate discriminator and generator updates over shuffled minibatches.

    Returns ``(ensemble, discriminator, history)``.
    """
    if ensemble is None:
        center = scale = None
        if task_box is not None:
            lo, hi = np.asarray(task_box[0], float), np.asarray(task_box[1], float)
            center, scale = 0.5 * (lo + hi), float(0.5 * np.max(hi - lo))
        ensemble = GeneratorEnsemble.initialize(chain, n_nets, noise_dim, hidden, rng, center, scale)
    if disc is None:
        disc = Discriminator.initialize(chain, disc_hidden, rng, dataset.configs)
    g_sgds = [neural.Sgd(net, neural.SgdOptions(config.lr_g, config.momentum)) for net in ensemble.nets]
    d_sgd = neural.Sgd(disc.net, neural.SgdOptions(config.lr_d, config.momentum))
    costs = GeneratorCosts(chain, constraints)
    history = TrainHistory()
    N = len(dataset)
    B = min(config.batch_size, N)
    for epoch in range(config.epochs):
        perm = rng.permutation(N)
        g_acc, d_acc, parts_acc = [], [], []
        for start in range(0, N - B + 1, B):
            rows = perm[start:start + B]
            batch = (dataset.configs[rows], dataset.tasks[rows])
            for _ in range(config.d_steps_per_g_step):
                d_acc.append(discriminator_step(disc, d_sgd, ensemble, chain, batch, config, rng))
            losses, parts = generator_step(ensemble, g_sgds, disc, chain, costs, batch, config, rng)
            g_acc.append(np.mean(losses))
            parts_acc.extend(parts)
        # saturated outputs can hide overflowed weights behind a finite loss
        if not all(np.all(np.isfinite(p)) for net in ensemble.nets + [disc.net] for p in net.params):
            raise TrainingDiverged(f"parameters became non-finite in epoch {epoch}")
        history.g_loss.append(float(np.mean(g_acc)))
        history.d_loss.append(float(np.mean(d_acc)))
        for key in ("c_ee", "c_s", "c_l"):
            getattr(history, key).append(float(np.mean([p[key] for p in parts_acc])))
        logger.debug("epoch %d g=%.4f d=%.4f c_ee=%.4f", epoch, history.g_loss[-1], history.d_loss[-1], history.c_ee[-1])
    return ensemble, disc, history


# --- evaluation ----------------------------------------------------------


def coverage(samples, configs, epsilon):
    """Fraction of ``configs`` with at least one sample within ``epsilon`` (Euclidean)."""
    configs = np.asarray(configs, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if epsilon <= 0:
        raise InvalidArgument("epsilon must be positive")
    if samples.size == 0 or configs.size == 0:
        return 0.0
    dist, _ = cKDTree(samples).query(configs, k=1)
    return float(np.mean(dist <= epsilon))


def mean_task_error(chain, configs, tasks):
    pos = kin.forward_kinematics(chain, configs)[:, :2]
    return float(np.mean(np.sum((pos - tasks) ** 2, axis=1)))
