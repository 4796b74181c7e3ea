"""Palm normalized-gradient eigenvalues and their inversion by convex descent.

For kappa on the positive unit sphere the forward map is

    Z_l(kappa) = E_eta[z_l^2 f(z)] / E_eta[f(z)],   f(z) = (sum_i z_i^2 / kappa_i^2)^(-(d+1)/2)

with eta the uniform law on the unit sphere. It is inverted through the
concave potential

    Xi(u) = -(2 / (d - 1)) E_eta[(sum_i u_i z_i^2)^(-(d-1)/2)],

whose gradient equals Z at u = pi, pi_i proportional to 1 / kappa_i^2. The
minimiser of <Z, u> - Xi(u) over a box [a, b]^d is found by projected
gradient descent with the constant step 2 / (alpha + beta).

Every integrand here is even in each coordinate, so quadratures store only
first-orthant representatives; the implied reflections make all odd moments
vanish exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _rng
from .errors import PreconditionError

MC_NODES = 2**18
QUADRATURE_SEED = 0


@dataclass(frozen=True)
class SphereQuadrature:
    """Nodes in the closed positive orthant of S^{d-1} with weights summing to 1.

    Each node stands for its 2^d sign reflections with equal weight.
    """

    d: int
    nodes: np.ndarray
    weights: np.ndarray
    exact: bool = True

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def moment(self, powers) -> float:
        """Integral of prod_i z_i^powers_i against the uniform law."""
        p = np.asarray(powers)
        if np.any(p % 2):
            return 0.0
        return self.integrate(np.prod(self.nodes ** p, axis=1))

    def full_nodes(self):
        """Expand to all sign reflections: (nodes, weights) of size 2^d times larger."""
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=self.d)))
        nodes = (self.nodes[None, :, :] * signs[:, None, :]).reshape(-1, self.d)
        weights = np.tile(self.weights, len(signs)) / len(signs)
        return nodes, weights


def _symmetrize(nodes, weights, perms):
    perms = list(perms)
    nodes = np.concatenate([nodes[:, p] for p in perms])
    weights = np.tile(weights, len(perms)) / len(perms)
    return nodes, weights


@lru_cache(maxsize=16)
def sphere_quadrature(d: int, n: int | None = None) -> SphereQuadrature:
    """Deterministic quadrature on the sphere.

    d = 2: Gauss-Legendre in the angle, ``n`` nodes per quadrant (default 128).
    d = 3: product Gauss-Legendre in (cos polar, azimuth) with ``n`` nodes per
    axis in the octant (default 32), averaged over coordinate permutations.
    d >= 4: fixed-seed Monte Carlo with ``n`` base points (default 2^18 split
    over the permutation orbit), averaged over permutations of coordinates.
    """
    if d < 2:
        raise PreconditionError("sphere quadrature needs d >= 2")
    if d == 2:
        n = 128 if n is None else int(n)
        x, w = np.polynomial.legendre.leggauss(n)
        t = (x + 1.0) * math.pi / 4.0
        nodes = np.column_stack([np.cos(t), np.sin(t)])
        return SphereQuadrature(2, nodes, w / w.sum())
    if d == 3:
        n = 32 if n is None else int(n)
        x, w = np.polynomial.legendre.leggauss(n)
        c = (x + 1.0) / 2.0          # cos(polar) in [0, 1]
        psi = (x + 1.0) * math.pi / 4.0
        C, P = np.meshgrid(c, psi, indexing="ij")
        s = np.sqrt(1.0 - C * C)
        nodes = np.column_stack([(s * np.cos(P)).ravel(), (s * np.sin(P)).ravel(), C.ravel()])
        weights = np.outer(w, w).ravel()
        nodes, weights = _symmetrize(nodes, weights / weights.sum(), itertools.permutations(range(3)))
        return SphereQuadrature(3, nodes, weights)
    total = MC_NODES if n is None else int(n)
    perms = list(itertools.permutations(range(d))) if math.factorial(d) <= 720 else \
        [tuple(np.roll(np.arange(d), k)) for k in range(d)]
    base = max(1, total // len(perms))
    rng = _rng.substream(QUADRATURE_SEED, _rng.QUADRATURE, d)
    g = np.abs(rng.standard_normal((base, d)))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    nodes, weights = _symmetrize(g, np.full(base, 1.0 / base), perms)
    return SphereQuadrature(d, nodes, weights, exact=False)


def _kappa_vec(kappa, d=None):
    k = np.asarray(kappa, dtype=np.float64)
    if k.ndim != 1 or k.size < 2:
        raise PreconditionError("kappa must be a vector of length >= 2")
    if np.any(k <= 0) or not np.all(np.isfinite(k)):
        raise PreconditionError("kappa entries must be strictly positive")
    if d is not None and k.size != d:
        raise PreconditionError("kappa dimension does not match the quadrature")
    return k


def normalize_kappa(kappa) -> np.ndarray:
    k = _kappa_vec(kappa)
    return k / np.linalg.norm(k)


def forward_Z(kappa, quad: SphereQuadrature | None = None) -> np.ndarray:
    """Palm normalized-gradient eigenvalues for anisotropy vector ``kappa``.

    ``kappa`` is rescaled onto the unit sphere if needed (Z is scale free).
    """
    k = _kappa_vec(kappa)
    q = quad if quad is not None else sphere_quadrature(k.size)
    k = _kappa_vec(kappa, q.d)
    z2 = q.nodes**2
    f = (z2 @ (1.0 / (k * k) * float(np.max(k)) ** 2)) ** (-(q.d + 1) / 2.0)
    wf = q.weights * f
    num = wf @ z2
    return num / np.sum(num)


def _positive_u(u, d):
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (d,):
        raise PreconditionError(f"u must have shape ({d},)")
    if np.any(u <= 0):
        raise PreconditionError("u entries must be strictly positive")
    return u


def Xi(u, quad: SphereQuadrature) -> float:
    d = quad.d
    u = _positive_u(u, d)
    s = (quad.nodes**2) @ u
    return -(2.0 / (d - 1)) * quad.integrate(s ** (-(d - 1) / 2.0))


def grad_Xi(u, quad: SphereQuadrature) -> np.ndarray:
    d = quad.d
    u = _positive_u(u, d)
    z2 = quad.nodes**2
    s = z2 @ u
    return (quad.weights * s ** (-(d + 1) / 2.0)) @ z2


def smoothness_constants(box, quad: SphereQuadrature):
    """(alpha, beta, Q) of the objective on [a, b]^d."""
    a, b = map(float, box)
    d = quad.d
    z14 = quad.moment([4] + [0] * (d - 1))
    alpha = 0.5 * b ** (-(d + 3) / 2.0)
    beta = 0.5 * d * (d + 1) * a ** (-(d + 3) / 2.0) * z14
    return alpha, beta, beta / alpha


def default_box(r: float = 3.0):
    if r < 1:
        raise PreconditionError("conditioning guess r must be >= 1")
    return 0.5 / (r * r), 2.0 * r * r


@dataclass
class GDReport:
    iterates: np.ndarray
    step: float
    alpha: float
    beta: float
    Q: float
    converged: bool
    final_residual: float
    n_iter: int
    objective: np.ndarray | None = None
    box: tuple = field(default=(0.0, 0.0))

    def to_dict(self, include_iterates: bool = False) -> dict:
        out = {
            "step": self.step, "alpha": self.alpha, "beta": self.beta, "Q": self.Q,
            "converged": self.converged, "final_residual": self.final_residual,
            "n_iter": self.n_iter, "box": list(self.box),
        }
        if include_iterates:
            out["iterates"] = self.iterates.tolist()
        return out


def _objective(Z, u, quad):
    return float(np.dot(Z, u)) - Xi(u, quad)


def invert_palm(Z_target, box=None, quad: SphereQuadrature | None = None, tol: float = 1e-10,
                max_iter: int = 2_000_000, u0=None, record_objective: bool = False):
    """Recover (pi_hat, kappa_hat, report) from target eigenvalues ``Z_target``.

    ``kappa_hat`` is sorted in descending order; ``report.permutation`` gives,
    for each entry of ``kappa_hat``, the index of the coordinate of
    ``Z_target`` it belongs to. ``pi_hat`` is in the original coordinates.
    """
    Z = np.asarray(Z_target, dtype=np.float64)
    if Z.ndim != 1 or Z.size < 2:
        raise PreconditionError("Z_target must be a vector of length >= 2")
    if np.any(Z <= 0):
        raise PreconditionError("Z_target entries must be positive")
    if abs(Z.sum() - 1.0) > 1e-6:
        raise PreconditionError("Z_target must sum to 1")
    Z = Z / Z.sum()
    d = Z.size
    q = quad if quad is not None else sphere_quadrature(d)
    if q.d != d:
        raise PreconditionError("quadrature dimension does not match Z_target")
    a, b = default_box() if box is None else map(float, box)
    if not 0 < a < b:
        raise PreconditionError("box must satisfy 0 < a < b")
    alpha, beta, Q = smoothness_constants((a, b), q)
    h = 2.0 / (alpha + beta)

    z2 = q.nodes**2
    wts = q.weights
    expo = -(d + 1) / 2.0
    u = np.clip(np.ones(d) if u0 is None else np.asarray(u0, dtype=np.float64), a, b)
    iterates = [u.copy()]
    objective = [_objective(Z, u, q)] if record_objective else None
    converged = False
    res = float("inf")
    k = 0
    for k in range(max_iter + 1):
        g = Z - (wts * (z2 @ u) ** expo) @ z2
        res = float(np.linalg.norm(g))
        if res < tol:
            converged = True
            break
        if k == max_iter:
            break
        u = np.clip(u - h * g, a, b)
        iterates.append(u.copy())
        if record_objective:
            objective.append(_objective(Z, u, q))

    report = GDReport(
        iterates=np.array(iterates), step=h, alpha=alpha, beta=beta, Q=Q,
        converged=converged, final_residual=res, n_iter=len(iterates) - 1,
        objective=None if objective is None else np.array(objective), box=(a, b),
    )
    inv = 1.0 / u
    k2 = inv / inv.sum()
    order = np.argsort(-k2, kind="stable")
    report.permutation = order
    return u, np.sqrt(k2[order]), report


def gd_rate_check(report: GDReport, box=None):
    """Measured geometric contraction of the iterates and the bound (Q-1)/(Q+1).

    The rate is the exponential of the least-squares slope of
    ``log ||u_k - u_final||`` over the iterates still well above rounding.
    A report with zero iterations (started at the solution) is reported as
    rate 0.
    """
    if not report.converged:
        raise PreconditionError("rate check needs a converged report")
    Q = report.Q
    if box is not None:
        a, b = map(float, box)
        if (a, b) != tuple(report.box):
            raise PreconditionError("box differs from the one used for the descent")
    bound = (Q - 1.0) / (Q + 1.0)
    if report.n_iter == 0:
        return 0.0, bound
    if report.n_iter < 10:
        raise PreconditionError("rate check needs at least 10 iterates")
    it = report.iterates
    dist = np.linalg.norm(it - it[-1], axis=1)[:-1]
    floor = 1e3 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(it[-1]))))
    ok = np.flatnonzero(dist > floor)
    if ok.size < 2:
        return 0.0, bound
    # use the contiguous prefix above the floor
    stop = ok[-1] + 1
    ks = np.arange(stop)
    ld = np.log(np.maximum(dist[:stop], floor))
    slope = np.polyfit(ks, ld, 1)[0]
    return float(math.exp(slope)), bound
