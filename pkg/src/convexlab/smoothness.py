"""Moduli of smoothness and Lipschitz-type constants of maps, estimated by sampling.

Every estimate here is a supremum over a finite sample, hence a *lower*
estimate of the true constant.  Certificates inflate them by ``1 + beta``.

Sample design for the moduli
----------------------------
A sample line is a chord ``p + tau u`` of the region (``||u|| = 1``).  For each
base level ``l`` (every value of the requested t grid) the map is evaluated on
the lattice ``tau in g Z`` with ``g = l / (2^A 3^B)``; on that lattice every
step ``l / (2^a 3^b)`` with ``a <= A, b <= B`` is available at every lattice
position.  The estimate at ``s`` is the max over all recorded elements whose
step is ``<= s``, so the sample for ``s`` contains the sample for every
``s' < s`` and the estimate is monotone by construction.

Splitting an element of step ``h`` into ``m`` steps of ``h/m`` writes its
difference as a combination of the pieces' differences with total weight
``m^n``, so some piece carries at least ``1/m^n`` of it.  After the lattice pass
the maximiser for every grid value gets its pieces for m = 2, 3, 4 added to the
table (repeated until nothing changes), which makes
``omega(t/m) >= omega(t) / m^n`` an exact property of the estimator on the grid.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ._parallel import DEFAULT_SEED, child_rngs, pmap
from .errors import ContractViolation, HypothesisViolation
from .maps import SmoothMap
from .norms import NormSpec, _norm, euclidean
from .regions import Ball, Region

DEFAULT_BETA = 0.05
BINARY_DEPTH = 4
TERNARY_DEPTH = 2


def default_t_grid(region: Region, order: int, count: int = 24) -> np.ndarray:
    """Log-spaced steps from 1e-3 up to 0.95 of the longest admissible step."""
    top = 0.95 * region.diameter / order
    return np.geomspace(1e-3 * top, top, count)


@dataclass(frozen=True)
class LineDesign:
    n_lines: int = 48
    axis_lines: int = 4
    seed: int = DEFAULT_SEED
    max_points: int = 4096
    threads: int = 1

    @property
    def design_id(self) -> str:
        return (f"lines{self.n_lines}+axis{self.axis_lines}-depth{BINARY_DEPTH}x{TERNARY_DEPTH}"
                f"-pts{self.max_points}-seed{self.seed}")


@dataclass
class SmoothnessProfile:
    order: int
    t_grid: np.ndarray
    omega_hat: np.ndarray
    fitted_constant: float
    design_id: str
    witness_x: np.ndarray
    witness_h: np.ndarray
    # every recorded element: step size and the largest difference norm at that step
    scales: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))
    values: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))
    rounding_floor: float = 0.0
    bias_direction: str = "lower"

    def at(self, s: float) -> float:
        """The estimator evaluated at an arbitrary step bound ``s`` on the same design."""
        if s <= 0:
            return 0.0
        mask = self.scales <= s * (1 + 1e-12)
        return float(self.values[mask].max()) if mask.any() else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "omega_hat", "n"])
        for t, v in zip(self.t_grid, self.omega_hat):
            w.writerow([repr(float(t)), "" if np.isnan(v) else repr(float(v)), self.order])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"order": self.order, "design": self.design_id, "bias_direction": self.bias_direction,
                "fitted_constant": self.fitted_constant, "rounding_floor": self.rounding_floor, "t": self.t_grid.tolist(),
                "omega_hat": [None if np.isnan(v) else float(v) for v in self.omega_hat]}


def _unit(v: np.ndarray, norm: NormSpec) -> np.ndarray:
    return v / _norm(norm, v)


def _sample_lines(region: Region, design: LineDesign, norm_in: NormSpec):
    n = region.dim
    rngs = child_rngs(design.seed, design.n_lines + design.axis_lines * n)
    lines = []
    for k, rng in enumerate(rngs):
        p = region.sample(rng, 1)[0]
        if k < design.n_lines:
            u = _unit(rng.standard_normal(n), norm_in)
        else:
            u = np.zeros(n)
            u[(k - design.n_lines) % n] = 1.0
            u = _unit(u, norm_in)
        lo, hi = region.chord(p, u)
        lines.append((p, u, lo, hi, rng))
    return lines


def _line_elements(m: SmoothMap, order: int, levels: np.ndarray, line, max_points: int, norm_out: NormSpec):
    """(step, value, center, h) for the best element of every step recorded on one line."""
    p, u, lo, hi, rng = line
    out = []
    sub = 2**BINARY_DEPTH * 3**TERNARY_DEPTH
    fmax = 0.0
    for level in levels:
        g = level / sub
        if hi - lo < order * g:
            continue
        k_lo, k_hi = int(np.ceil(lo / g - 1e-9)), int(np.floor(hi / g + 1e-9))
        if k_hi - k_lo + 1 > max_points:
            start = k_lo + int(rng.integers(0, k_hi - k_lo + 2 - max_points))
            k_lo, k_hi = start, start + max_points - 1
        tau = g * np.arange(k_lo, k_hi + 1)
        X = p + tau[:, None] * u
        F = m.fn(X)
        fmax = max(fmax, float(np.max(_norm(norm_out, F))))
        K = len(tau)
        for a in range(BINARY_DEPTH + 1):
            for b in range(TERNARY_DEPTH + 1):
                q = 2 ** (BINARY_DEPTH - a) * 3 ** (TERNARY_DEPTH - b)
                if order * q >= K:
                    continue
                if order == 1:
                    D = F[q:] - F[:-q]
                    centers = 0.5 * (X[q:] + X[:-q])
                else:
                    D = F[2 * q:] - 2 * F[q:-q] + F[:-2 * q]
                    centers = X[q:-q]
                vals = _norm(norm_out, D)
                i = int(np.argmax(vals))
                out.append((level / (2**a * 3**b), float(vals[i]), centers[i], (q * g) * u))
    return out, fmax


def _pieces(m: SmoothMap, order: int, elem, k: int, norm_out: NormSpec):
    """The k pieces of step h/k whose weighted differences add up to the element's."""
    scale, _, x, h = elem
    hp = h / k
    if order == 1:
        pts = (x - 0.5 * h) + (np.arange(k + 1) / k)[:, None] * h
        F = m.fn(pts)
        D = F[1:] - F[:-1]
        centers = 0.5 * (pts[1:] + pts[:-1])
    else:
        centers = x + np.arange(-(k - 1), k)[:, None] * hp
        F = m.fn(np.concatenate([centers - hp, centers, centers + hp]))
        c = len(centers)
        D = F[:c] - 2 * F[c:2 * c] + F[2 * c:]
    vals = _norm(norm_out, D)
    return [(scale / k, float(v), cx, hp) for v, cx in zip(vals, centers)]


def modulus_smoothness(m: SmoothMap, order: int, t_grid=None, region: Region | None = None,
                       design: LineDesign | None = None, norm_in: NormSpec | None = None,
                       norm_out: NormSpec | None = None) -> SmoothnessProfile:
    """Estimate omega_n(f; t) for n = 1, 2 on a nested line-lattice design."""
    if order not in (1, 2):
        raise ContractViolation("only moduli of order 1 and 2 are supported")
    region = region or m.domain
    if region.dim != m.dim_in:
        raise ContractViolation("region dimension does not match the map")
    design = design or LineDesign()
    norm_in = norm_in or euclidean(m.dim_in)
    norm_out = norm_out or euclidean(m.dim_out)
    t = default_t_grid(region, order) if t_grid is None else np.asarray(t_grid, dtype=float)
    if t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ContractViolation("t grid must be positive and strictly ascending")
    lines = _sample_lines(region, design, norm_in)
    per_line = pmap(lambda ln: _line_elements(m, order, t, ln, design.max_points, norm_out), lines, design.threads)
    elems = [e for chunk, _ in per_line for e in chunk]
    fmax = max((f for _, f in per_line), default=0.0)

    def table():
        if not elems:
            return np.empty(0), np.empty(0)
        return np.array([e[0] for e in elems]), np.array([e[1] for e in elems])

    def argmax_at(s, scales, values):
        mask = np.flatnonzero(scales <= s * (1 + 1e-12))
        return int(mask[np.argmax(values[mask])]) if mask.size else -1

    scales, values = table()
    split: set[tuple[int, int]] = set()
    for _ in range(64):
        added = False
        for ti in t:
            j = argmax_at(ti, scales, values)
            if j < 0:
                continue
            for k in (2, 3, 4):
                if (j, k) not in split:
                    split.add((j, k))
                    elems.extend(_pieces(m, order, elems[j], k, norm_out))
                    added = True
        if not added:
            break
        scales, values = table()

    omega = np.full(t.size, np.nan)
    wx = np.full((t.size, m.dim_in), np.nan)
    wh = np.full((t.size, m.dim_in), np.nan)
    for i, ti in enumerate(t):
        j = argmax_at(ti, scales, values)
        if j >= 0:
            omega[i] = values[j]
            wx[i], wh[i] = elems[j][2], elems[j][3]
    ok = ~np.isnan(omega)
    # differences below the rounding floor of the evaluations carry no information
    floor = 16 * np.finfo(float).eps * fmax
    fitted = float(np.max(np.maximum(omega[ok] - floor, 0.0) / t[ok] ** order)) if ok.any() else float("nan")
    return SmoothnessProfile(order=order, t_grid=t, omega_hat=omega, fitted_constant=fitted,
                             design_id=design.design_id, witness_x=wx, witness_h=wh,
                             scales=scales, values=values, rounding_floor=floor)


@dataclass
class LipschitzEstimate:
    value: float
    beta: float
    witness: tuple[np.ndarray, np.ndarray] | None
    region: Region
    kind: str = "lipschitz"
    n_pairs: int = 0

    @property
    def inflated(self) -> float:
        return self.value * (1.0 + self.beta)

    def to_json(self) -> dict:
        w = None if self.witness is None else [self.witness[0].tolist(), self.witness[1].tolist()]
        return {"kind": self.kind, "value": self.value, "inflated": self.inflated, "beta": self.beta,
                "witness": w, "region": self.region.to_json(), "n_pairs": self.n_pairs}


def _pairs(region: Region, budget: int, seed: int, norm_in: NormSpec) -> tuple[np.ndarray, np.ndarray]:
    """Half uniform random pairs, half short-offset pairs with ||x - y|| = 1e-3 diam."""
    rng_a, rng_b = child_rngs(seed, 2)
    n_rand = budget // 2
    X1 = region.sample(rng_a, n_rand)
    X2 = region.sample(rng_a, n_rand)
    n_short = budget - n_rand
    Xs = region.sample(rng_b, n_short)
    U = rng_b.standard_normal((n_short, region.dim))
    U /= _norm(norm_in, U)[:, None]
    step = 1e-3 * region.diameter
    Ys = Xs + step * U
    flip = ~region.contains(Ys, tol=0.0)
    Ys[flip] = Xs[flip] - step * U[flip]
    keep = region.contains(Ys, tol=0.0)
    return np.concatenate([X1, Xs[keep]]), np.concatenate([X2, Ys[keep]])


def _ratio_sup(num: np.ndarray, den: np.ndarray, X: np.ndarray, Y: np.ndarray):
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num > 0, np.inf, 0.0))
    if r.size == 0:
        return 0.0, None
    i = int(np.argmax(r))
    return float(r[i]), (X[i].copy(), Y[i].copy())


def lipschitz_estimate(m: SmoothMap, region: Region | None = None, budget: int = 20000,
                       seed: int = DEFAULT_SEED, beta: float = DEFAULT_BETA,
                       norm_in: NormSpec | None = None, norm_out: NormSpec | None = None) -> LipschitzEstimate:
    """sup ||f(x) - f(y)|| / ||x - y|| over sampled pairs of the region."""
    region = region or m.domain
    norm_in = norm_in or euclidean(m.dim_in)
    norm_out = norm_out or euclidean(m.dim_out)
    X, Y = _pairs(region, budget, seed, norm_in)
    v, w = _ratio_sup(_norm(norm_out, m.fn(X) - m.fn(Y)), _norm(norm_in, X - Y), X, Y)
    return LipschitzEstimate(v, beta, w, region, "lipschitz", len(X))


def inverse_lipschitz_estimate(m: SmoothMap, region: Region | None = None, budget: int = 20000,
                               seed: int = DEFAULT_SEED, beta: float = DEFAULT_BETA,
                               norm_in: NormSpec | None = None,
                               norm_out: NormSpec | None = None) -> LipschitzEstimate:
    """Lipschitz constant of f^-1 on f(region): sup ||x - y|| / ||f(x) - f(y)||.

    Needs no inverse: pairs of the image are parametrised by pairs of the region.
    An infinite value means two sampled points share an image.
    """
    region = region or m.domain
    norm_in = norm_in or euclidean(m.dim_in)
    norm_out = norm_out or euclidean(m.dim_out)
    X, Y = _pairs(region, budget, seed, norm_in)
    v, w = _ratio_sup(_norm(norm_in, X - Y), _norm(norm_out, m.fn(X) - m.fn(Y)), X, Y)
    return LipschitzEstimate(v, beta, w, region, "inverse_lipschitz", len(X))


def _opnorm(M: np.ndarray) -> np.ndarray:
    return np.linalg.svd(M, compute_uv=False)[..., 0]


def derivative_lipschitz_estimate(m: SmoothMap, region: Region | None = None, budget: int = 20000,
                                  seed: int = DEFAULT_SEED, beta: float = DEFAULT_BETA) -> LipschitzEstimate:
    """sup ||J(x) - J(y)||_op / ||x - y|| (Euclidean norms, spectral operator norm)."""
    region = region or m.domain
    X, Y = _pairs(region, budget, seed, euclidean(m.dim_in))
    num = _opnorm(m.jacobian(X) - m.jacobian(Y))
    v, w = _ratio_sup(num, np.linalg.norm(X - Y, axis=1), X, Y)
    return LipschitzEstimate(v, beta, w, region, "derivative_lipschitz", len(X))


def sigma_min(m: SmoothMap, a) -> float:
    """Smallest singular value of J(a): the coercivity constant of the adjoint derivative."""
    if m.dim_out > m.dim_in:
        raise HypothesisViolation(f"{m.name}: dim_out > dim_in, the derivative cannot be surjective")
    a = np.asarray(a, dtype=float)
    if a.shape != (m.dim_in,):
        raise ContractViolation(f"{m.name}: point must have length {m.dim_in}")
    return float(np.linalg.svd(m.jacobian(a), compute_uv=False)[-1])


@dataclass
class SecondOrderReport:
    omega2_constant: float
    derivative_lipschitz: float
    beta: float
    passed: bool
    region: Region

    def to_json(self) -> dict:
        return {"omega2_constant": self.omega2_constant, "derivative_lipschitz": self.derivative_lipschitz,
                "inflated": self.derivative_lipschitz * (1 + self.beta), "passed": self.passed,
                "region": self.region.to_json()}


def verify_second_order_bound(m: SmoothMap, region: Region | None = None, beta: float = DEFAULT_BETA,
                              seed: int = DEFAULT_SEED, t_grid=None) -> SecondOrderReport:
    """Check that the fitted omega_2 constant does not exceed the inflated derivative-Lipschitz estimate.

    A Lipschitz derivative with constant L forces ||f(x+h) - 2f(x) + f(x-h)|| <= L ||h||^2,
    so a failure here falsifies one of the two estimates.
    """
    region = region or m.domain
    prof = modulus_smoothness(m, 2, t_grid, region, LineDesign(seed=seed))
    lip = derivative_lipschitz_estimate(m, region, seed=seed, beta=beta)
    return SecondOrderReport(prof.fitted_constant, lip.value, beta,
                             bool(prof.fitted_constant <= lip.inflated + 1e-12), region)


def ball_region(center, radius: float) -> Ball:
    return Ball(np.asarray(center, dtype=float), float(radius))
