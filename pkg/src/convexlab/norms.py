"""Finite-dimensional norms and their modulus of convexity.

The modulus of convexity of a norm is

    delta(t) = inf {1 - ||(x + y)/2|| : ||x|| = ||y|| = 1, ||x - y|| = t},

and it is attained already on two-dimensional sections, so the estimator below
walks the unit circle of many 2-planes.  Every sampled infimum is an *upper*
estimate of the true one; consumers that need a lower bound deflate it.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from ._parallel import DEFAULT_SEED, child_rngs, pmap
from .errors import ContractViolation, DomainError

DEFAULT_T_GRID = tuple(round(0.05 * k, 10) for k in range(1, 40))
EQUALITY_TOL = 1e-10


@dataclass(frozen=True)
class NormSpec:
    """A norm on R^dim.

    kind is "p" (plain l_p), "weighted_p" (x -> ||w * x||_p) or "nested"
    (outer l_p norm of the inner block norms, blocks laid out consecutively).
    """

    kind: str
    dim: int
    p: float = 2.0
    weights: tuple[float, ...] = ()
    inner: tuple["NormSpec", ...] = ()

    def __post_init__(self):
        if self.kind not in ("p", "weighted_p", "nested"):
            raise ContractViolation(f"unknown norm kind {self.kind!r}")
        if not (1.0 <= self.p <= math.inf):
            raise ContractViolation(f"norm exponent must lie in [1, inf], got {self.p}")
        if self.dim < 1:
            raise ContractViolation("norm dimension must be positive")
        if self.kind == "weighted_p":
            if len(self.weights) != self.dim or min(self.weights) <= 0:
                raise ContractViolation("weighted_p needs one positive weight per coordinate")
        if self.kind == "nested":
            if not self.inner or sum(s.dim for s in self.inner) != self.dim:
                raise ContractViolation("nested dimension must equal the sum of inner dimensions")

    @classmethod
    def lp(cls, p: float, dim: int) -> "NormSpec":
        return cls("p", int(dim), float(p))

    @classmethod
    def weighted(cls, p: float, weights: Sequence[float]) -> "NormSpec":
        w = tuple(float(v) for v in weights)
        return cls("weighted_p", len(w), float(p), weights=w)

    @classmethod
    def nested(cls, outer_p: float, inner: Sequence["NormSpec"]) -> "NormSpec":
        inner = tuple(inner)
        return cls("nested", sum(s.dim for s in inner), float(outer_p), inner=inner)

    @property
    def is_euclidean(self) -> bool:
        return self.kind == "p" and self.p == 2.0

    def to_json(self) -> dict:
        p = "inf" if math.isinf(self.p) else self.p
        if self.kind == "p":
            return {"kind": "p", "p": p, "dim": self.dim}
        if self.kind == "weighted_p":
            return {"kind": "weighted_p", "p": p, "weights": list(self.weights)}
        return {"kind": "nested", "outer_p": p, "inner": [s.to_json() for s in self.inner]}


def _parse_p(v) -> float:
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "infinity", "+inf"):
            return math.inf
        return float(v)
    return float(v)


def norm_from_json(obj: dict | str) -> NormSpec:
    if isinstance(obj, str):
        obj = json.loads(obj)
    try:
        kind = obj["kind"]
        if kind == "p":
            return NormSpec.lp(_parse_p(obj["p"]), int(obj["dim"]))
        if kind == "weighted_p":
            return NormSpec.weighted(_parse_p(obj["p"]), obj["weights"])
        if kind == "nested":
            return NormSpec.nested(_parse_p(obj["outer_p"]), [norm_from_json(s) for s in obj["inner"]])
    except KeyError as exc:
        raise ContractViolation(f"norm spec is missing field {exc.args[0]!r}") from None
    raise ContractViolation(f"unknown norm kind {kind!r}")


def euclidean(dim: int) -> NormSpec:
    return NormSpec.lp(2.0, dim)


def _pnorm(a: np.ndarray, p: float) -> np.ndarray:
    a = np.abs(a)
    if p == 2.0:
        out = np.sqrt(np.einsum("...i,...i->...", a, a))
        # redo entries whose squares may have under- or overflowed
        bad = ~((out > 1e-150) & (out < 1e150))
        if np.any(bad):
            m = a.max(axis=-1)
            safe = np.where(m > 0, m, 1.0)
            fixed = m * np.sqrt(np.einsum("...i,...i->...", a / safe[..., None], a / safe[..., None]))
            out = np.where(bad, fixed, out)
        return out
    if p == 1.0:
        return a.sum(axis=-1)
    if math.isinf(p):
        return a.max(axis=-1)
    # scale by the max entry so large p neither overflows nor underflows
    m = a.max(axis=-1, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    return (m * ((a / safe) ** p).sum(axis=-1, keepdims=True) ** (1.0 / p))[..., 0]


def _norm(spec: NormSpec, x: np.ndarray) -> np.ndarray:
    if spec.kind == "p":
        return _pnorm(x, spec.p)
    if spec.kind == "weighted_p":
        return _pnorm(x * np.asarray(spec.weights), spec.p)
    parts = []
    start = 0
    for sub in spec.inner:
        parts.append(_norm(sub, x[..., start:start + sub.dim]))
        start += sub.dim
    return _pnorm(np.stack(parts, axis=-1), spec.p)


def norm_eval(spec: NormSpec, x) -> np.ndarray | float:
    """Evaluate the norm along the last axis; a 1-D input gives a float."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != spec.dim:
        raise ContractViolation(f"vector length {x.shape[-1:] or 0} does not match norm dimension {spec.dim}")
    out = _norm(spec, x)
    return float(out) if x.ndim == 1 else out


def modulus_convexity_hilbert(t: float) -> float:
    """1 - sqrt(1 - t^2/4), the modulus of convexity of any inner-product space."""
    if not 0.0 <= t <= 2.0:
        raise DomainError(f"modulus of convexity is defined for t in [0, 2], got {t}")
    # algebraically equal to 1 - sqrt(1 - t^2/4) without cancellation at small t
    q = t * t / 4.0
    return q / (1.0 + math.sqrt(1.0 - q))


@dataclass
class ModulusEstimate:
    t_grid: np.ndarray
    delta_hat: np.ndarray
    delta_raw: np.ndarray
    witness_x: np.ndarray
    witness_y: np.ndarray
    pair_budget: int
    method: str = "sphere"
    bias_direction: str = "upper"
    monotone_regularized: bool = True
    norm: NormSpec | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "delta_hat", "witness_x", "witness_y"])
        for t, d, wx, wy in zip(self.t_grid, self.delta_hat, self.witness_x, self.witness_y):
            w.writerow([repr(float(t)), repr(float(d)), " ".join(map(repr, wx.tolist())),
                        " ".join(map(repr, wy.tolist()))])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "bias_direction": self.bias_direction,
            "monotone_regularized": self.monotone_regularized,
            "pair_budget": self.pair_budget,
            "norm": self.norm.to_json() if self.norm else None,
            "t": self.t_grid.tolist(),
            "delta_hat": self.delta_hat.tolist(),
            "delta_raw": self.delta_raw.tolist(),
        }


@dataclass(frozen=True)
class SectionBudget:
    """Sampling plan for the sphere-form estimator."""

    n_random_planes: int = 64
    n_angles: int = 1024
    coordinate_planes: bool = True
    seed: int = DEFAULT_SEED
    threads: int = 1


def _check_grid(t_grid) -> np.ndarray:
    t = np.asarray(sorted(float(v) for v in t_grid))
    if t.size == 0 or t[0] <= 0 or t[-1] > 2:
        raise DomainError("t values must lie in (0, 2]")
    return t


def _sections(spec: NormSpec, budget: SectionBudget) -> list[np.ndarray]:
    n = spec.dim
    planes = []
    if budget.coordinate_planes:
        for i, j in combinations(range(n), 2):
            e = np.zeros((2, n))
            e[0, i] = e[1, j] = 1.0
            planes.append(e)
    for rng in child_rngs(budget.seed, budget.n_random_planes):
        q, _ = np.linalg.qr(rng.standard_normal((n, 2)))
        planes.append(q.T.copy())
    return planes


def _circle(spec: NormSpec, basis: np.ndarray, theta: np.ndarray) -> np.ndarray:
    c = np.cos(theta)[..., None] * basis[0] + np.sin(theta)[..., None] * basis[1]
    return c / _norm(spec, c)[..., None]


def _section_minimum(spec: NormSpec, basis: np.ndarray, t: np.ndarray, n_angles: int):
    """Min of 1 - ||(x+y)/2|| over unit pairs of one 2-plane with ||x-y|| = t."""
    A = n_angles
    half = A // 2
    step = 2 * np.pi / A
    theta = step * np.arange(A)
    P = _circle(spec, basis, theta)
    # P_{i+half} = -P_i, so pairs starting in the second half of the circle
    # repeat those of the first half; only rows i < half are scanned.
    rows = np.arange(half)
    cols = np.arange(half + 1)
    # D[i, j] = ||P_i - P_{i+j}||, running from 0 up to ||2 P_i|| = 2
    D = _norm(spec, P[rows, None, :] - P[(rows[:, None] + cols[None, :]) % A])
    theta = theta[:half]
    P = P[:half]
    best = np.full(t.size, np.inf)
    wx = np.zeros((t.size, spec.dim))
    wy = np.zeros((t.size, spec.dim))
    for sign in (1, -1):
        if sign == 1:
            Dd = D
        else:
            # ||P_i - P_{i-j}|| = D[(i-j) mod half, j] by the central symmetry
            Dd = D[(rows[:, None] - cols[None, :]) % half, cols[None, :]]
        # first j with running max >= t, per row, via one sorted search over
        # rows offset by 4 (every distance lies in [0, 2])
        run = np.maximum.accumulate(Dd, axis=1) + 4.0 * rows[:, None]
        pos = np.searchsorted(run.ravel(), t[:, None] + 4.0 * rows[None, :], side="left")
        jstar = np.clip(pos - rows[None, :] * (half + 1), 1, half)  # (T, half)
        lo = sign * step * (jstar - 1.0)
        hi = sign * step * jstar.astype(float)
        x = np.broadcast_to(P, (t.size, half, spec.dim))
        th = theta[None, :]
        tt = t[:, None]

        def g(phi):
            y = _circle(spec, basis, th + phi)
            return _norm(spec, x - y) - tt

        glo = Dd[rows[None, :], jstar - 1] - tt
        ghi = Dd[rows[None, :], jstar] - tt
        phi = hi.copy()
        gphi = ghi.copy()
        side = np.zeros(lo.shape, dtype=np.int8)
        # Illinois-accelerated bisection: the bracket always keeps a sign change
        for _ in range(100):
            active = np.abs(gphi) > 1e-14
            if not active.any():
                break
            denom = ghi - glo
            cand = np.where(denom != 0, hi - ghi * (hi - lo) / np.where(denom != 0, denom, 1.0), 0.5 * (lo + hi))
            bad = ~((cand - lo) * (cand - hi) < 0)
            cand = np.where(bad, 0.5 * (lo + hi), cand)
            gc = g(cand)
            left = gc < 0
            lo = np.where(active & left, cand, lo)
            glo = np.where(active & left, gc, glo)
            hi = np.where(active & ~left, cand, hi)
            ghi = np.where(active & ~left, gc, ghi)
            # Illinois: halve the stale endpoint value when the same side is kept twice
            ghi = np.where(active & left & (side == 1), 0.5 * ghi, ghi)
            glo = np.where(active & ~left & (side == -1), 0.5 * glo, glo)
            side = np.where(active, np.where(left, 1, -1), side).astype(np.int8)
            phi = np.where(active, cand, phi)
            gphi = np.where(active, gc, gphi)
            if np.all(np.abs(hi - lo) < 1e-15):
                break
        y = _circle(spec, basis, th + phi)
        dist = _norm(spec, x - y)
        ok = np.abs(dist - tt) <= EQUALITY_TOL
        delta = np.where(ok, 1.0 - _norm(spec, 0.5 * (x + y)), np.inf)
        k = np.argmin(delta, axis=1)
        dmin = delta[np.arange(t.size), k]
        better = dmin < best
        best = np.where(better, dmin, best)
        wx[better] = P[k[better]]
        wy[better] = y[np.arange(t.size), k][better]
    return best, wx, wy


def _regularize(raw: np.ndarray) -> np.ndarray:
    # running min from the right: delta is non-decreasing and every entry is an
    # upper estimate, so min_{s >= t} raw(s) is still an upper estimate of delta(t)
    clipped = np.maximum(raw, 0.0)
    return np.minimum.accumulate(clipped[::-1])[::-1]


def modulus_convexity_estimate(spec: NormSpec, t_grid=DEFAULT_T_GRID,
                               budget: SectionBudget | None = None) -> ModulusEstimate:
    """Sphere-form estimate of the modulus of convexity on 2-D sections.

    For every t and every sampled plane, each of ``n_angles`` unit vectors x is
    paired (in both rotational directions) with the unit vector y on the
    section circle satisfying ||x - y|| = t to within 1e-10.  The minimum of
    1 - ||(x+y)/2|| over all such pairs is an upper estimate of delta(t).
    """
    budget = budget or SectionBudget()
    if spec.dim < 2:
        raise DomainError("the modulus of convexity needs dimension >= 2")
    if budget.n_angles < 4 or budget.n_angles % 2:
        raise ContractViolation("n_angles must be an even integer >= 4")
    t = _check_grid(t_grid)
    planes = _sections(spec, budget)
    results = pmap(lambda b: _section_minimum(spec, b, t, budget.n_angles), planes, budget.threads)
    best = np.full(t.size, np.inf)
    wx = np.zeros((t.size, spec.dim))
    wy = np.zeros((t.size, spec.dim))
    for dmin, bx, by in results:
        better = dmin < best
        best = np.where(better, dmin, best)
        wx[better] = bx[better]
        wy[better] = by[better]
    if not np.all(np.isfinite(best)):
        raise DomainError("no pair met the distance constraint for some t; increase n_angles")
    return ModulusEstimate(
        t_grid=t, delta_hat=_regularize(best), delta_raw=best, witness_x=wx, witness_y=wy,
        pair_budget=len(planes) * budget.n_angles, method="sphere", norm=spec,
    )


def modulus_convexity_ball_form(spec: NormSpec, t_grid=DEFAULT_T_GRID, n_starts: int = 8,
                                seed: int = DEFAULT_SEED) -> ModulusEstimate:
    """Ball-form estimate: constrained local optimisation over the whole unit ball.

    Minimises 1 - ||(x+y)/2|| subject to ||x||, ||y|| <= 1 and ||x - y|| >= t
    with SLSQP from ``n_starts`` random starts per t.  Independent of the
    section sampler; intended as a cross-check on smooth norms.
    """
    if spec.dim < 2:
        raise DomainError("the modulus of convexity needs dimension >= 2")
    t = _check_grid(t_grid)
    n = spec.dim
    rngs = child_rngs(seed, t.size)
    best = np.full(t.size, np.inf)
    wx = np.zeros((t.size, n))
    wy = np.zeros((t.size, n))

    def nrm(v):
        return float(_norm(spec, v))

    for k, (tk, rng) in enumerate(zip(t, rngs)):
        cons = [
            {"type": "ineq", "fun": lambda z: 1.0 - nrm(z[:n])},
            {"type": "ineq", "fun": lambda z: 1.0 - nrm(z[n:])},
            {"type": "ineq", "fun": lambda z, tk=tk: nrm(z[:n] - z[n:]) - tk},
        ]
        for _ in range(n_starts):
            x = rng.standard_normal(n)
            x /= nrm(x)
            v = rng.standard_normal(n)
            y = x - tk * v / nrm(v)
            y /= max(nrm(y), 1.0)
            res = minimize(lambda z: 1.0 - nrm(0.5 * (z[:n] + z[n:])), np.concatenate([x, y]),
                           method="SLSQP", constraints=cons, options={"ftol": 1e-14, "maxiter": 500})
            z = res.x
            feasible = (nrm(z[:n]) <= 1 + 1e-9 and nrm(z[n:]) <= 1 + 1e-9
                        and nrm(z[:n] - z[n:]) >= tk - 1e-9)
            if feasible and res.fun < best[k]:
                best[k] = res.fun
                wx[k], wy[k] = z[:n], z[n:]
    return ModulusEstimate(
        t_grid=t, delta_hat=_regularize(best), delta_raw=best, witness_x=wx, witness_y=wy,
        pair_budget=t.size * n_starts, method="ball", norm=spec,
    )


@dataclass(frozen=True)
class PowerTypeFit:
    constant: float
    p: float
    is_power_type: bool
    t_at_min: float
    zero_tol: float = field(default=1e-12, repr=False)

    def __float__(self) -> float:
        return self.constant


def power_type_constant(est: ModulusEstimate, p: float = 2.0, zero_tol: float = 1e-12) -> PowerTypeFit:
    """Largest C with delta_hat(t) >= C t^p on the grid, i.e. min_t delta_hat(t)/t^p.

    If delta_hat vanishes (below ``zero_tol``) anywhere on the grid the norm is
    not uniformly convex at the sampled resolution and C = 0 is returned with
    ``is_power_type`` False.
    """
    if p < 2:
        raise DomainError("power type p < 2 is impossible (delta(t) <= t^2/8 for every norm)")
    t, d = est.t_grid, est.delta_hat
    if t.size == 0:
        raise ContractViolation("empty modulus estimate")
    if np.any(d <= zero_tol):
        return PowerTypeFit(0.0, p, False, float(t[np.argmax(d <= zero_tol)]), zero_tol)
    ratio = d / t**p
    k = int(np.argmin(ratio))
    return PowerTypeFit(float(ratio[k]), p, True, float(t[k]), zero_tol)
