"""Empirical convexity oracles for images of Euclidean balls.

The midpoint test asks, for x1, x2 in B = B(a, eps), whether y0 = (f(x1) + f(x2)) / 2
has a preimage in B.  Preimages are sought by Gauss-Newton on ||f(x) - y0||^2 where
every linearised step is solved *exactly* on the ball:

    min ||J z - b||  subject to  ||z|| <= eps      (z = x_next - a)

via an SVD of J and a scalar secular equation for the multiplier.  Because that
subproblem is solved to optimality, a zero predicted decrease means the current
point satisfies the first-order conditions of the constrained problem, which is
how a genuine defect ("stationary") is told apart from a solver that ran out of
iterations ("unresolved").
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ._parallel import DEFAULT_SEED, chunk_slices, pmap
from .errors import ContractViolation, UnsupportedDimension
from .maps import SmoothMap
from .regions import Ball, Box

CONVERGED, STATIONARY, UNRESOLVED = "converged", "stationary", "unresolved"
_RUNNING, _CONV, _STAT, _UNRES = 0, 1, 2, 3
_STATUS_NAMES = {_CONV: CONVERGED, _STAT: STATIONARY, _UNRES: UNRESOLVED}

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 200
CONTINUATION_STEPS = 8
N_RESTARTS = 4
CHUNK = 512


# --------------------------------------------------------------------------- solver


def _project(X: np.ndarray, C: np.ndarray, R: np.ndarray) -> np.ndarray:
    D = X - C
    nd = np.linalg.norm(D, axis=1)
    over = nd > R
    if over.any():
        D[over] *= (R[over] / nd[over])[:, None]
    return C + D


def _rownorm(A: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ki,ki->k", A, A))


def _ball_lsq(s: np.ndarray, cb: np.ndarray, Vt: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Batched min ||J z - b|| s.t. ||z|| <= R given J = U diag(s) Vt and cb = U^T b.

    Outside the ball the multiplier solves 1/||z(lam)|| = 1/R; that function is concave
    and increasing in lam, so Newton from lam = 0 converges monotonically from below.
    """
    cut = 1e-13 * np.maximum(s[:, :1], 1e-300)
    live = s > cut
    sc = np.where(live, s * cb, 0.0)
    s2 = s * s

    def coef(lam):
        return sc / np.where(live, s2 + lam[:, None], 1.0)

    lam = np.zeros(len(s))
    c = coef(lam)
    nz = _rownorm(c)
    act = np.flatnonzero(nz > R)
    for _ in range(60):
        if act.size == 0:
            break
        ca, na = c[act], nz[act]
        dphi = np.einsum("ki,ki->k", ca, ca / np.where(live[act], s2[act] + lam[act, None], 1.0)) / na**3
        lam[act] += (1.0 / R[act] - 1.0 / na) / np.maximum(dphi, 1e-300)
        c[act] = sc[act] / np.where(live[act], s2[act] + lam[act, None], 1.0)
        nz[act] = _rownorm(c[act])
        act = act[np.abs(nz[act] - R[act]) > 1e-13 * R[act]]
    c *= np.minimum(1.0, R / np.maximum(nz, 1e-300))[:, None]
    return np.einsum("kq,kqn->kn", c, Vt)


def _gauss_newton(m: SmoothMap, Y, X0, C, R, max_iter: int, tol: float):
    """Run the constrained iteration on a batch; returns (X, residual, status, iterations)."""
    N = len(Y)
    X = _project(np.array(X0, dtype=float), C, R)
    Rv = m.fn(X) - Y
    res = np.linalg.norm(Rv, axis=1)
    tol_i = tol * (1.0 + np.linalg.norm(Y, axis=1))
    status = np.where(res <= tol_i, _CONV, _RUNNING)
    iters = np.zeros(N, dtype=int)
    for _ in range(max_iter):
        act = np.flatnonzero(status == _RUNNING)
        if act.size == 0:
            break
        iters[act] += 1
        x, r, c, rad = X[act], Rv[act], C[act], R[act]
        J = m.jacobian(x)
        b = np.einsum("kij,kj->ki", J, x - c) - r
        U, s, Vt = np.linalg.svd(J, full_matrices=False)
        cb = np.einsum("kiq,ki->kq", U, b)
        target = c + _ball_lsq(s, cb, Vt, rad)
        step = target - x
        lin = r + np.einsum("kij,kj->ki", J, step)
        r2 = res[act] ** 2
        pred = r2 - np.einsum("ki,ki->k", lin, lin)
        flat = (pred <= 1e-10 * r2) | (np.linalg.norm(step, axis=1) <= 1e-15 * (1 + np.linalg.norm(x, axis=1)))
        alpha = np.ones(act.size)
        done = flat.copy()
        new_x, new_r, new_res = x.copy(), r.copy(), res[act].copy()
        for _ in range(40):
            todo = np.flatnonzero(~done)
            if todo.size == 0:
                break
            cand = _project(x[todo] + alpha[todo, None] * step[todo], c[todo], rad[todo])
            rc = m.fn(cand) - Y[act[todo]]
            nc = np.linalg.norm(rc, axis=1)
            ok = nc**2 <= r2[todo] - 1e-4 * alpha[todo] * pred[todo]
            acc = todo[ok]
            new_x[acc], new_r[acc], new_res[acc] = cand[ok], rc[ok], nc[ok]
            done[acc] = True
            alpha[todo[~ok]] *= 0.5
        moved = done & ~flat
        X[act[moved]], Rv[act[moved]], res[act[moved]] = new_x[moved], new_r[moved], new_res[moved]
        # no predicted decrease, or no acceptable step: first-order stationary on the ball
        status[act[~moved]] = _STAT
        status[act[res[act] <= tol_i[act]]] = _CONV
    status[status == _RUNNING] = _UNRES
    return X, res, status, iters


@dataclass
class PreimageBatch:
    x: np.ndarray
    residual: np.ndarray
    status: np.ndarray
    iterations: np.ndarray
    stage: np.ndarray

    def __len__(self) -> int:
        return len(self.residual)


@dataclass
class PreimageResult:
    x: np.ndarray
    residual: float
    status: str
    iterations: int
    stage: str

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def _continuation(m, Y, Xs, C, R, max_iter, tol, steps=CONTINUATION_STEPS):
    """Track y_t = f(xs) + t (y - f(xs)) for t = 1/steps, ..., 1, warm-starting each solve."""
    F0 = m.fn(Xs)
    X = Xs.copy()
    total = np.zeros(len(Y), dtype=int)
    for k in range(1, steps + 1):
        Yt = Y if k == steps else F0 + (k / steps) * (Y - F0)
        X, res, st, it = _gauss_newton(m, Yt, X, C, R, max_iter, tol)
        total += it
    return X, res, st, total


def solve_preimage_batch(m: SmoothMap, Y, X_init, center, radius, continuation: bool = True,
                         restarts=None, max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL) -> PreimageBatch:
    """Find x in B(center, radius) with f(x) = y for each row of ``Y``.

    Stages, each applied only to rows still lacking a converged solution:
    direct iteration from ``X_init``; continuation from ``X_init``; continuation from
    each restart point (``restarts`` has shape (k, N, n)).  The best row result
    (converged first, then smallest residual) is kept.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    X_init = np.atleast_2d(np.asarray(X_init, dtype=float))
    N = len(Y)
    if Y.shape[1] != m.dim_out or X_init.shape != (N, m.dim_in):
        raise ContractViolation("preimage batch shapes do not match the map")
    C = np.broadcast_to(np.asarray(center, dtype=float), (N, m.dim_in)).copy()
    R = np.broadcast_to(np.asarray(radius, dtype=float), (N,)).copy()
    if np.any(np.linalg.norm(X_init - C, axis=1) > R * (1 + 1e-12) + 1e-12):
        raise ContractViolation("initial points must lie in the ball")

    X, res, st, it = _gauss_newton(m, Y, X_init, C, R, max_iter, tol)
    stage = np.zeros(N, dtype=int)
    starts = []
    if continuation:
        starts.append(X_init)
    if restarts is not None:
        starts.extend(np.asarray(restarts, dtype=float))
    for k, Xs in enumerate(starts, start=1):
        todo = np.flatnonzero(st != _CONV)
        if todo.size == 0:
            break
        x2, r2, s2, i2 = _continuation(m, Y[todo], Xs[todo], C[todo], R[todo], max_iter, tol)
        it[todo] += i2
        better = (s2 == _CONV) | (r2 < res[todo])
        sel = todo[better]
        X[sel], res[sel], st[sel], stage[sel] = x2[better], r2[better], s2[better], k
    names = np.array([_STATUS_NAMES[v] for v in st], dtype=object)
    return PreimageBatch(X, res, names, it, stage)


def solve_preimage(m: SmoothMap, y0, x_init, center, radius, continuation: bool = False,
                   max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL) -> PreimageResult:
    """Single-point version of :func:`solve_preimage_batch`; never raises on failure."""
    b = solve_preimage_batch(m, np.asarray(y0, dtype=float)[None], np.asarray(x_init, dtype=float)[None],
                             center, radius, continuation=continuation, max_iter=max_iter, tol=tol)
    stage = ["direct", "continuation"][min(int(b.stage[0]), 1)]
    return PreimageResult(b.x[0], float(b.residual[0]), str(b.status[0]), int(b.iterations[0]), stage)


# --------------------------------------------------------------------------- midpoint test


@dataclass
class Violation:
    index: int
    x1: np.ndarray
    x2: np.ndarray
    y0: np.ndarray
    defect: float
    best_feasible_point: np.ndarray

    def to_json(self) -> dict:
        return {"index": self.index, "x1": self.x1.tolist(), "x2": self.x2.tolist(), "y0": self.y0.tolist(),
                "defect": self.defect, "best_feasible_point": self.best_feasible_point.tolist()}


@dataclass
class MidpointReport:
    map_id: str
    center: np.ndarray
    radius: float
    pairs_tested: int
    violations: list[Violation]
    worst_defect: float
    defect_tolerance: float
    witness_tolerance: float
    n_converged: int
    n_stationary: int
    n_unresolved: int
    n_restarted: int
    iterations_mean: float
    iterations_max: int
    max_converged_residual: float
    seed: int
    solutions: PreimageBatch | None = field(default=None, repr=False)
    pairs: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    @property
    def verdict(self) -> str:
        return "nonconvex-witnessed" if self.worst_defect > self.defect_tolerance else "convex-consistent"

    @property
    def strong_witness(self) -> bool:
        return self.worst_defect > self.witness_tolerance

    def to_json(self) -> dict:
        return {
            "map": self.map_id, "center": self.center.tolist(), "radius": self.radius,
            "pairs_tested": self.pairs_tested, "verdict": self.verdict, "worst_defect": self.worst_defect,
            "strong_witness": self.strong_witness, "defect_tolerance": self.defect_tolerance,
            "witness_tolerance": self.witness_tolerance, "n_violations": len(self.violations),
            "solver": {"converged": self.n_converged, "stationary": self.n_stationary,
                       "unresolved": self.n_unresolved, "restarted": self.n_restarted,
                       "iterations_mean": self.iterations_mean, "iterations_max": self.iterations_max,
                       "max_converged_residual": self.max_converged_residual},
            "seed": self.seed, "violations": [v.to_json() for v in self.violations],
        }

    def violations_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x1", "x2", "y0", "defect"])
        for v in self.violations:
            w.writerow([" ".join(repr(float(c)) for c in v.x1), " ".join(repr(float(c)) for c in v.x2),
                        " ".join(repr(float(c)) for c in v.y0), repr(v.defect)])
        return buf.getvalue()


def _ball_inside(region, a: np.ndarray, eps: float) -> bool:
    if isinstance(region, Ball):
        return float(np.linalg.norm(a - region.center)) + eps <= region.radius * (1 + 1e-12)
    if isinstance(region, Box):
        return bool(np.all(a - eps >= region.lo - 1e-12) and np.all(a + eps <= region.hi + 1e-12))
    return True


def _unit_rows(G: np.ndarray) -> np.ndarray:
    return G / np.linalg.norm(G, axis=1, keepdims=True)


def sample_pairs(a: np.ndarray, eps: float, n_pairs: int, rng: np.random.Generator):
    """70% uniform pairs in the ball; 30% on the sphere, half near-antipodal and half close together."""
    n = a.size
    ball = Ball(a, eps)
    n_uni = int(round(0.7 * n_pairs))
    n_struct = n_pairs - n_uni
    X1 = np.empty((n_pairs, n))
    X2 = np.empty((n_pairs, n))
    X1[:n_uni] = ball.sample(rng, n_uni)
    X2[:n_uni] = ball.sample(rng, n_uni)
    if n_struct:
        u = _unit_rows(rng.standard_normal((n_struct, n)))
        # second direction orthogonal to u spans the plane the partner moves in
        g = rng.standard_normal((n_struct, n))
        g -= np.einsum("ki,ki->k", g, u)[:, None] * u
        v = _unit_rows(g + 1e-300) if n > 1 else np.zeros_like(u)
        n_anti = n_struct // 2
        theta = np.empty(n_struct)
        theta[:n_anti] = np.pi - 0.3 * rng.random(n_anti)
        theta[n_anti:] = 1.2 * rng.random(n_struct - n_anti)
        if n == 1:
            w = np.where(theta[:, None] > np.pi / 2, -u, u)
        else:
            w = np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * v
        X1[n_uni:] = a + eps * u
        X2[n_uni:] = a + eps * _unit_rows(w)
    return X1, X2


def midpoint_convexity_check(m: SmoothMap, a, eps: float, n_pairs: int = 10000, seed: int = DEFAULT_SEED,
                             defect_tolerance: float = 1e-6, witness_tolerance: float = 1e-4,
                             threads: int = 1, max_iter: int = DEFAULT_MAX_ITER,
                             tol: float = DEFAULT_TOL, keep_solutions: bool = False) -> MidpointReport:
    """Test whether midpoints of images of pairs in B(a, eps) have preimages in the same ball."""
    a = np.asarray(a, dtype=float).ravel()
    if a.size != m.dim_in:
        raise ContractViolation(f"center has length {a.size}, map expects {m.dim_in}")
    if not eps > 0:
        raise ContractViolation("radius must be positive")
    if n_pairs < 1:
        raise ContractViolation("need at least one pair")
    if not _ball_inside(m.domain, a, eps):
        raise ContractViolation("the test ball is not contained in the map's domain")
    rng = np.random.default_rng(seed)
    X1, X2 = sample_pairs(a, eps, n_pairs, rng)
    restarts = np.empty((N_RESTARTS, n_pairs, m.dim_in))
    restarts[0], restarts[1] = X1, X2
    restarts[2:] = Ball(a, eps).sample(rng, (N_RESTARTS - 2) * n_pairs).reshape(N_RESTARTS - 2, n_pairs, -1)
    Y0 = 0.5 * (m.fn(X1) + m.fn(X2))
    X0 = 0.5 * (X1 + X2)

    def run(sl: slice) -> PreimageBatch:
        return solve_preimage_batch(m, Y0[sl], X0[sl], a, eps, continuation=True,
                                    restarts=restarts[:, sl], max_iter=max_iter, tol=tol)

    parts = pmap(run, chunk_slices(n_pairs, CHUNK), threads)
    sol = PreimageBatch(*(np.concatenate([getattr(p, f) for p in parts])
                          for f in ("x", "residual", "status", "iterations", "stage")))
    conv = sol.status == CONVERGED
    stat = sol.status == STATIONARY
    defects = np.where(stat, sol.residual, 0.0)
    viol = np.flatnonzero(stat & (sol.residual > defect_tolerance))
    violations = [Violation(int(i), X1[i], X2[i], Y0[i], float(sol.residual[i]), sol.x[i]) for i in viol]
    return MidpointReport(
        map_id=m.name, center=a, radius=float(eps), pairs_tested=n_pairs, violations=violations,
        worst_defect=float(defects.max()), defect_tolerance=defect_tolerance,
        witness_tolerance=witness_tolerance, n_converged=int(conv.sum()), n_stationary=int(stat.sum()),
        n_unresolved=int((sol.status == UNRESOLVED).sum()), n_restarted=int((sol.stage >= 2).sum()),
        iterations_mean=float(sol.iterations.mean()), iterations_max=int(sol.iterations.max()),
        max_converged_residual=float(sol.residual[conv].max()) if conv.any() else 0.0, seed=seed,
        solutions=sol if keep_solutions else None, pairs=(X1, X2) if keep_solutions else None,
    )


# --------------------------------------------------------------------------- hull comparison


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise hull vertices (monotone chain), collinear points dropped."""
    P = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(P) <= 2:
        return P

    def half(seq):
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2:
                o, q = out[-2], out[-1]
                if (q[0] - o[0]) * (p[1] - o[1]) - (q[1] - o[1]) * (p[0] - o[0]) > 0:
                    break
                out.pop()
            out.append(p)
        return out

    lower, upper = half(P), half(P[::-1])
    return np.array(lower[:-1] + upper[:-1])


def polygon_area(poly) -> float:
    """Shoelace area (absolute value)."""
    P = np.asarray(poly, dtype=float)
    if len(P) < 3:
        return 0.0
    x, y = P[:, 0], P[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _even_odd_fill(poly: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Pixel-centre membership in a closed polygon by the even-odd rule, row by row."""
    P, Q = poly, np.roll(poly, -1, axis=0)
    y0, y1 = P[:, 1], Q[:, 1]
    out = np.zeros((ys.size, xs.size), dtype=bool)
    for j, y in enumerate(ys):
        hit = (y0 <= y) != (y1 <= y)
        if not hit.any():
            continue
        t = (y - y0[hit]) / (y1[hit] - y0[hit])
        cross = np.sort(P[hit, 0] + t * (Q[hit, 0] - P[hit, 0]))
        out[j] = np.searchsorted(cross, xs) % 2 == 1
    return out


@dataclass
class HullComparison:
    hull_area: float
    image_area: float
    relative_gap: float
    grid_density: int
    hull_pixels: int
    image_pixels: int

    def to_json(self) -> dict:
        return {"hull_area": self.hull_area, "image_area": self.image_area, "relative_gap": self.relative_gap,
                "grid_density": self.grid_density, "hull_pixels": self.hull_pixels,
                "image_pixels": self.image_pixels}


def hull_compare_2d(m: SmoothMap, a, eps: float, grid_density: int = 1024, n_boundary: int = 4096,
                    n_interior: int = 128) -> HullComparison:
    """Compare the area of f(B(a, eps)) with the area of its convex hull.

    The image is the region bounded by the image of the circle (even-odd fill on a
    pixel grid) together with pixels hit by images of an interior grid.  Both areas
    are measured on the same raster, so the gap is never negative.
    """
    if m.dim_out != 2 or m.dim_in != 2:
        raise UnsupportedDimension("hull comparison needs a map from the plane to the plane")
    a = np.asarray(a, dtype=float).ravel()
    th = np.linspace(0.0, 2 * np.pi, n_boundary, endpoint=False)
    boundary = m.fn(a + eps * np.column_stack([np.cos(th), np.sin(th)]))
    g = np.linspace(-eps, eps, n_interior)
    G = np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
    G = a + G[np.linalg.norm(G, axis=1) < eps]
    interior = m.fn(G)
    hull = convex_hull(np.concatenate([boundary, interior]))
    hull_area = polygon_area(hull)
    lo, hi = hull.min(axis=0), hull.max(axis=0)
    step = (hi - lo) / grid_density
    xs = lo[0] + step[0] * (np.arange(grid_density) + 0.5)
    ys = lo[1] + step[1] * (np.arange(grid_density) + 0.5)
    in_hull = _even_odd_fill(hull, xs, ys)
    img = _even_odd_fill(boundary, xs, ys)
    ij = np.floor((interior - lo) / step).astype(int)
    ij = ij[np.all((ij >= 0) & (ij < grid_density), axis=1)]
    img[ij[:, 1], ij[:, 0]] = True
    img &= in_hull
    H, I = int(in_hull.sum()), int(img.sum())
    ratio = I / H if H else 1.0
    return HullComparison(hull_area, hull_area * ratio, 1.0 - ratio, grid_density, H, I)
