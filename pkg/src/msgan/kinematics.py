"""Planar revolute chains: forward kinematics, Jacobians, center of mass
and collision queries against circles and axis-aligned boxes.

All kinematic functions accept a single configuration of shape ``(n,)`` or
a batch of shape ``(..., n)`` and broadcast over the leading axes. The end
effector angle is the plain sum of joint angles and is never wrapped.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidArgument, InvalidModel
from .validation import as_configs, as_vector


@dataclass(frozen=True, eq=False)
class PlanarChain:
    link_lengths: np.ndarray
    link_masses: np.ndarray
    joint_lower: np.ndarray
    joint_upper: np.ndarray
    base: np.ndarray = field(default_factory=lambda: np.zeros(2))
    name: str = "chain"

    def __post_init__(self):
        lengths = as_vector(self.link_lengths, "link_lengths")
        n = lengths.shape[0]
        masses = as_vector(self.link_masses, "link_masses", n)
        lower = as_vector(self.joint_lower, "joint_lower", n)
        upper = as_vector(self.joint_upper, "joint_upper", n)
        base = as_vector(self.base, "base", 2)
        if np.any(lengths <= 0):
            raise InvalidArgument("link lengths must be positive")
        if np.any(masses < 0):
            raise InvalidArgument("link masses must be non-negative")
        if np.any(lower >= upper):
            raise InvalidArgument("joint_lower must be strictly below joint_upper")
        for name, arr in [("link_lengths", lengths), ("link_masses", masses),
                          ("joint_lower", lower), ("joint_upper", upper), ("base", base)]:
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dof(self):
        return self.link_lengths.shape[0]

    @property
    def reach(self):
        return float(self.link_lengths.sum())

    def random_configurations(self, rng, size=None):
        shape = (self.dof,) if size is None else (size, self.dof)
        return rng.uniform(self.joint_lower, self.joint_upper, size=shape)

    def within_limits(self, q):
        q = np.asarray(q, dtype=float)
        return np.all((q >= self.joint_lower) & (q <= self.joint_upper), axis=-1)

    def __repr__(self):
        return f"PlanarChain(name={self.name!r}, dof={self.dof}, reach={self.reach:.3g})"


def _angles(chain, q):
    q = as_configs(q, chain.dof)
    phi = np.cumsum(q, axis=-1)
    return q, phi, np.cos(phi), np.sin(phi)


def forward_kinematics(chain, q):
    """End-effector pose ``(x, y, theta)``, shape ``(..., 3)``."""
    _, phi, c, s = _angles(chain, q)
    L = chain.link_lengths
    x = chain.base[0] + c @ L
    y = chain.base[1] + s @ L
    return np.stack([x, y, phi[..., -1]], axis=-1)


def jacobian(chain, q):
    """Analytic ``d(x, y, theta)/dq``, shape ``(..., 3, n)``."""
    _, _, c, s = _angles(chain, q)
    L = chain.link_lengths
    # column j collects links j..n-1
    jx = -np.flip(np.cumsum(np.flip(L * s, -1), axis=-1), -1)
    jy = np.flip(np.cumsum(np.flip(L * c, -1), axis=-1), -1)
    return np.stack([jx, jy, np.ones_like(jx)], axis=-2)


def _com_lengths(chain):
    # CoM = base + sum_k a_k L_k (cos phi_k, sin phi_k): each link sees half
    # its own mass plus the full mass of every link further out.
    m = chain.link_masses
    total = m.sum()
    if total <= 0:
        raise InvalidModel("center of mass undefined: all link masses are zero")
    outboard = np.concatenate([np.cumsum(m[::-1])[::-1][1:], [0.0]])
    return (0.5 * m + outboard) / total * chain.link_lengths


def center_of_mass(chain, q):
    """Mass-weighted mean of link midpoints, shape ``(..., 2)``."""
    eff = _com_lengths(chain)
    _, _, c, s = _angles(chain, q)
    return np.stack([chain.base[0] + c @ eff, chain.base[1] + s @ eff], axis=-1)


def com_jacobian(chain, q):
    """Analytic ``d(com)/dq``, shape ``(..., 2, n)``."""
    eff = _com_lengths(chain)
    _, _, c, s = _angles(chain, q)
    jx = -np.flip(np.cumsum(np.flip(eff * s, -1), axis=-1), -1)
    jy = np.flip(np.cumsum(np.flip(eff * c, -1), axis=-1), -1)
    return np.stack([jx, jy], axis=-2)


def joint_positions(chain, q):
    """Base followed by every joint frame origin, shape ``(..., n + 1, 2)``."""
    _, _, c, s = _angles(chain, q)
    L = chain.link_lengths
    xs = chain.base[0] + np.cumsum(L * c, axis=-1)
    ys = chain.base[1] + np.cumsum(L * s, axis=-1)
    pts = np.stack([xs, ys], axis=-1)
    base = np.broadcast_to(chain.base, pts.shape[:-2] + (1, 2))
    return np.concatenate([base, pts], axis=-2)


def link_segments(chain, q):
    """Segment ``i`` runs from joint frame ``i`` to ``i + 1``; shape ``(..., n, 2, 2)``."""
    pts = joint_positions(chain, q)
    return np.stack([pts[..., :-1, :], pts[..., 1:, :]], axis=-2)


# --- obstacles -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Circle:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vector(self.center, "center", 2))
        if not self.radius > 0:
            raise InvalidArgument("circle radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    def clearance(self, a, b):
        """Signed clearance of segments ``a -> b`` (arrays ``(m, 2)``)."""
        return _point_segment_distance(self.center, a, b) - self.radius

    def to_dict(self):
        return {"circle": {"center": self.center.tolist(), "radius": self.radius}}


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = as_vector(self.lower, "box lower", 2)
        hi = as_vector(self.upper, "box upper", 2)
        if np.any(lo >= hi):
            raise InvalidArgument("box min corner must be below max corner on both axes")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def corners(self):
        lo, hi = self.lower, self.upper
        return np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])

    def clearance(self, a, b):
        """Distance from segments to the box, zero where they intersect."""
        d = np.minimum(self._point_distance(a), self._point_distance(b))
        for corner in self.corners:
            d = np.minimum(d, _point_segment_distance(corner, a, b))
        d[self._intersects(a, b)] = 0.0
        return d

    def _point_distance(self, p):
        delta = np.maximum(np.maximum(self.lower - p, p - self.upper), 0.0)
        return np.hypot(delta[..., 0], delta[..., 1])

    def _intersects(self, a, b):
        # Liang-Barsky clipping of the parametric segment against the slab pair
        d = b - a
        t0 = np.zeros(a.shape[0])
        t1 = np.ones(a.shape[0])
        ok = np.ones(a.shape[0], dtype=bool)
        for axis in range(2):
            da = d[:, axis]
            parallel = np.abs(da) < 1e-15
            inside = (a[:, axis] >= self.lower[axis]) & (a[:, axis] <= self.upper[axis])
            ok &= ~parallel | inside
            with np.errstate(divide="ignore", invalid="ignore"):
                ta = (self.lower[axis] - a[:, axis]) / da
                tb = (self.upper[axis] - a[:, axis]) / da
            lo = np.where(parallel, -np.inf, np.minimum(ta, tb))
            hi = np.where(parallel, np.inf, np.maximum(ta, tb))
            t0 = np.maximum(t0, lo)
            t1 = np.minimum(t1, hi)
        return ok & (t0 <= t1)

    def to_dict(self):
        return {"box": {"min": self.lower.tolist(), "max": self.upper.tolist()}}


def _point_segment_distance(p, a, b):
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.einsum("ij,ij->i", p - a, ab) / np.where(denom > 0, denom, 1.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, None] * ab
    diff = p - closest
    return np.hypot(diff[:, 0], diff[:, 1])


@dataclass(frozen=True, eq=False)
class World:
    obstacles: tuple = ()
    clearance_margin: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        margin = float(self.clearance_margin)
        if not np.isfinite(margin) or margin < 0:
            raise InvalidArgument("clearance_margin must be finite and non-negative")
        object.__setattr__(self, "clearance_margin", margin)


def clearance(chain, q, world):
    """Smallest obstacle clearance over all links (``inf`` for an empty world)."""
    segs = link_segments(chain, q)
    a, b = segs[:, 0, :], segs[:, 1, :]
    best = np.inf
    for obs in world.obstacles:
        best = min(best, float(obs.clearance(a, b).min()))
    return best


def in_collision(chain, q, world):
    """True when any link is closer than the margin to an obstacle, or touches one."""
    if not world.obstacles:
        return False
    c = clearance(chain, q, world)
    return c < world.clearance_margin or c <= 0.0
