"""Grid linear programs for the extremal bump problem on the cube [-1, 1]^n.

Maximise f(objective) over grid functions f on {-1, -1 + 1/m, ..., 1}^n with
f = 0 on the boundary, 0 <= f <= 1, and (sup norm on the grid steps)

    |f(x) - f(y)| <= ||x - y||            for king-move neighbours x, y
    |f(x+h) - 2 f(x) + f(x-h)| <= ||h||^2  for grid offsets h.

King moves suffice for the first family: any two nodes are joined by a king path
whose length in the sup norm equals their distance.  Every grid constraint is a
continuum constraint evaluated at special points, so the LP value is an *upper*
estimate of the continuum extremal value; dropping second-order constraints
(pruning) only raises it further.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import BudgetError, ContractViolation, InternalError

PRUNING_POLICIES = ("none", "center_axis", "auto")
VARIANTS = ("full", "lipschitz_only")
DEFAULT_CONSTRAINT_BUDGET = 400_000
SEMANTICS = "upper-estimate"


def _half_offsets(n: int, r: int) -> list[tuple[int, ...]]:
    """One representative of each pair {d, -d} of nonzero offsets in [-r, r]^n."""
    out = []
    for d in itertools.product(range(-r, r + 1), repeat=n):
        nz = next((v for v in d if v != 0), 0)
        if nz > 0:
            out.append(d)
    return out


def _center_slices(d, side: int) -> tuple[slice, ...]:
    return tuple(slice(abs(v), side - abs(v)) for v in d)


def _shift(idx: np.ndarray, sl: tuple[slice, ...], d) -> np.ndarray:
    return idx[tuple(slice(s.start + v, s.stop + v) for s, v in zip(sl, d))]


@dataclass
class ExtremalInstance:
    n: int
    m: int
    pruning: str
    pruned: bool
    n_nodes: int
    var_of_node: np.ndarray
    counts: dict
    A_first: sparse.csr_matrix = field(repr=False)
    b_first: np.ndarray = field(repr=False)
    A_second: sparse.csr_matrix = field(repr=False)
    b_second: np.ndarray = field(repr=False)

    @property
    def side(self) -> int:
        return 2 * self.m + 1

    @property
    def n_vars(self) -> int:
        return int((self.var_of_node >= 0).sum())

    def node_index(self, coords) -> int:
        """Flat node index for a point given in cube coordinates (multiples of 1/m)."""
        c = np.asarray(coords, dtype=float).ravel()
        if c.size != self.n:
            raise ContractViolation(f"node must have {self.n} coordinates")
        k = np.rint(c * self.m).astype(int)
        if not np.allclose(k / self.m, c, atol=1e-9) or np.any(np.abs(k) > self.m):
            raise ContractViolation(f"{c.tolist()} is not a grid node for m={self.m}")
        return int(np.ravel_multi_index(tuple(k + self.m), (self.side,) * self.n))

    def node_coords(self, index: int) -> tuple[float, ...]:
        k = np.unravel_index(index, (self.side,) * self.n)
        return tuple((int(v) - self.m) / self.m for v in k)

    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.var_of_node >= 0)


def _rows(centers: list[np.ndarray], coefs: list[float], var_of_node: np.ndarray):
    """Rows sum_j coef_j f(centers_j) as COO triples, dropping boundary entries and empty rows."""
    k = centers[0].size
    V = np.stack([var_of_node[c] for c in centers], axis=1)
    keep = np.any(V >= 0, axis=1)
    V = V[keep]
    rows = np.repeat(np.arange(len(V)), len(coefs))
    cols = V.ravel()
    vals = np.tile(np.asarray(coefs, dtype=float), len(V))
    live = cols >= 0
    return rows[live], cols[live], vals[live], len(V), k - len(V)


def build_extremal_lp(n: int, m: int, pruning: str = "none",
                      budget: int = DEFAULT_CONSTRAINT_BUDGET) -> ExtremalInstance:
    """Assemble the constraint families; two-sided constraints count once."""
    if n not in (1, 2, 3):
        raise ContractViolation("n must be 1, 2 or 3")
    if m < 1:
        raise ContractViolation("m must be at least 1")
    if pruning not in PRUNING_POLICIES:
        raise ContractViolation(f"pruning must be one of {PRUNING_POLICIES}")
    side = 2 * m + 1
    shape = (side,) * n
    idx = np.arange(side**n).reshape(shape)
    K = np.stack(np.meshgrid(*([np.arange(side)] * n), indexing="ij"), axis=-1).reshape(-1, n) - m
    interior = np.all(np.abs(K) < m, axis=1)
    var_of_node = np.full(side**n, -1)
    var_of_node[interior] = np.arange(int(interior.sum()))
    h = 1.0 / m

    second_offsets = _half_offsets(n, m)
    full_second = sum(int(np.prod([side - 2 * abs(v) for v in d])) for d in second_offsets)
    if pruning == "auto":
        pruning_eff = "center_axis" if full_second > budget else "none"
    else:
        pruning_eff = pruning
    if pruning_eff == "none" and full_second > budget:
        raise BudgetError(f"{full_second} second-order constraints exceed the budget of {budget}; "
                          "use pruning='center_axis'")

    def assemble(offsets, coefs, rhs_of, select=None):
        R, C, V, b = [], [], [], []
        kept = dropped = 0
        base = 0
        for d in offsets:
            sl = _center_slices(d, side) if len(coefs) == 3 else tuple(
                slice(max(0, -v), side - max(0, v)) for v in d)
            cen = idx[sl].ravel()
            if len(coefs) == 3:
                pts = [_shift(idx, sl, d).ravel(), cen, _shift(idx, sl, tuple(-v for v in d)).ravel()]
            else:
                pts = [cen, _shift(idx, sl, d).ravel()]
            if select is not None:
                mask = select(d, cen)
                pts = [p[mask] for p in pts]
            if pts[0].size == 0:
                continue
            r, c, v, nk, nd = _rows(pts, coefs, var_of_node)
            R.append(r + base)
            C.append(c)
            V.append(v)
            b.append(np.full(nk, rhs_of(d)))
            base += nk
            kept += nk
            dropped += nd
        if not R:
            return sparse.csr_matrix((0, int(interior.sum()))), np.empty(0), 0, dropped
        A = sparse.csr_matrix((np.concatenate(V), (np.concatenate(R), np.concatenate(C))),
                              shape=(base, int(interior.sum())))
        # |row| <= b as two one-sided rows
        return sparse.vstack([A, -A]).tocsr(), np.concatenate(b * 2), kept, dropped

    king = _half_offsets(n, 1)
    A1, b1, n1, d1 = assemble(king, [1.0, -1.0], lambda d: h * max(abs(v) for v in d))

    select = None
    if pruning_eff == "center_axis":
        def select(d, cen):
            if sum(v != 0 for v in d) == 1:
                return np.ones(cen.size, dtype=bool)
            return np.max(np.abs(K[cen]), axis=1) * h <= 0.5 + 1e-12
    A2, b2, n2, d2 = assemble(second_offsets, [1.0, -2.0, 1.0], lambda d: (h * max(abs(v) for v in d)) ** 2,
                              select)
    if n2 > budget:
        raise BudgetError(f"{n2} second-order constraints remain after pruning, above the budget of {budget}; "
                          "lower m or raise the budget")
    counts = {"boundary": int((~interior).sum()), "box": int(interior.sum()), "first_order": n1,
              "second_order": n2, "dropped_trivial": d1 + d2, "second_order_full": full_second}
    return ExtremalInstance(n, m, pruning_eff, pruning_eff != "none", side**n, var_of_node, counts,
                            A1, b1, A2, b2)


@dataclass
class ExtremalResult:
    n: int
    m: int
    variant: str
    objective_node: tuple[float, ...]
    epsilon_hat: float
    iterations: int
    pruned: bool
    semantics: str = SEMANTICS

    @property
    def growth(self) -> float:
        return (1.0 + self.epsilon_hat) ** self.n

    def row(self) -> list:
        return [self.n, self.m, self.variant, " ".join(repr(float(c)) for c in self.objective_node),
                repr(self.epsilon_hat), repr(self.growth), str(self.pruned).lower(), self.semantics]

    def to_json(self) -> dict:
        return {"n": self.n, "m": self.m, "variant": self.variant, "objective_node": list(self.objective_node),
                "epsilon_hat": self.epsilon_hat, "growth": self.growth, "iterations": self.iterations,
                "pruned": self.pruned, "semantics": self.semantics}


CSV_HEADER = ["n", "m", "variant", "objective_node", "epsilon_hat", "growth", "pruned", "semantics"]


def _solve_at(inst: ExtremalInstance, node: int, variant: str) -> tuple[float, int]:
    var = int(inst.var_of_node[node])
    if var < 0:
        raise ContractViolation("objective node must be interior")
    if variant == "full":
        A = sparse.vstack([inst.A_first, inst.A_second]).tocsr()
        b = np.concatenate([inst.b_first, inst.b_second])
    else:
        A, b = inst.A_first, inst.b_first
    c = np.zeros(inst.n_vars)
    c[var] = -1.0
    res = linprog(c, A_ub=A if A.shape[0] else None, b_ub=b if A.shape[0] else None,
                  bounds=(0.0, 1.0), method="highs")
    if res.status != 0:
        raise InternalError(f"LP solver returned status {res.status}: {res.message}")
    return float(-res.fun), int(getattr(res, "nit", 0))


def solve_extremal(inst: ExtremalInstance, objective=None, variant: str = "full",
                   sweep: bool = False) -> ExtremalResult:
    """Maximise f at ``objective`` (default: the origin), or at every interior node when ``sweep``."""
    if variant not in VARIANTS:
        raise ContractViolation(f"variant must be one of {VARIANTS}")
    if sweep:
        best = (-1.0, 0, -1)
        for node in inst.interior_nodes():
            v, it = _solve_at(inst, int(node), variant)
            if v > best[0] + 1e-12:
                best = (v, it, int(node))
        value, iters, node = best
    else:
        node = inst.node_index(np.zeros(inst.n) if objective is None else objective)
        value, iters = _solve_at(inst, node, variant)
    value = min(max(value, 0.0), 1.0)
    return ExtremalResult(inst.n, inst.m, variant, inst.node_coords(node), value, iters, inst.pruned)


def reflected_nodes(node) -> list[tuple[float, ...]]:
    """Images of a node under coordinate permutations and sign flips."""
    node = tuple(float(v) for v in node)
    out = set()
    for perm in itertools.permutations(node):
        for signs in itertools.product((1.0, -1.0), repeat=len(node)):
            out.add(tuple(s * v + 0.0 for s, v in zip(signs, perm)))
    return sorted(out)


@dataclass
class SequenceReport:
    rows: list[ExtremalResult]
    label: str = ("finite-resolution grid evidence; each value is an upper estimate of the grid "
                  "problem and says nothing definitive about the limit in n")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow(r.row())
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"label": self.label, "rows": [r.to_json() for r in self.rows]}


def sequence_report(n_max: int, m: int, variant: str = "full", pruning: str = "auto",
                    sweep: bool = False, budget: int = DEFAULT_CONSTRAINT_BUDGET) -> SequenceReport:
    if not 1 <= n_max <= 3:
        raise ContractViolation("n_max must be 1, 2 or 3")
    rows = [solve_extremal(build_extremal_lp(n, m, pruning, budget), variant=variant, sweep=sweep)
            for n in range(1, n_max + 1)]
    return SequenceReport(rows)
