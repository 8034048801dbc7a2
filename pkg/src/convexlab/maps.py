"""Evaluable smooth maps R^n -> R^m with Jacobians, inverses and closed-form constants.

All callables stored on a :class:`SmoothMap` are batched: they take an
``(N, dim_in)`` array and return ``(N, dim_out)`` (values) or
``(N, dim_out, dim_in)`` (Jacobians).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np

from .errors import ContractViolation, DomainError, NoPreimageFound
from .regions import Ball, Box, Region, region_from_json

Batched = Callable[[np.ndarray], np.ndarray]
ClosedForm = Callable[[Region], float]

FD_STEP = 1e-5
DEFAULT_DOMAIN_RADIUS = 100.0


@dataclass(frozen=True, eq=False)
class SmoothMap:
    name: str
    dim_in: int
    dim_out: int
    fn: Batched
    jac: Batched | None = None
    inv: Batched | None = None
    inv_jac: Batched | None = None
    domain: Region | None = None
    params: Mapping = field(default_factory=dict)
    # constant name -> region -> value; names: lipschitz, derivative_lipschitz,
    # second_order, inverse_lipschitz
    closed_forms: Mapping[str, ClosedForm] = field(default_factory=dict)
    inverse_closed_forms: Mapping[str, ClosedForm] = field(default_factory=dict)

    def __post_init__(self):
        if self.domain is None:
            object.__setattr__(self, "domain", Ball(np.zeros(self.dim_in), DEFAULT_DOMAIN_RADIUS))
        if self.domain.dim != self.dim_in:
            raise ContractViolation(f"domain dimension {self.domain.dim} != dim_in {self.dim_in}")
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        object.__setattr__(self, "closed_forms", MappingProxyType(dict(self.closed_forms)))
        object.__setattr__(self, "inverse_closed_forms", MappingProxyType(dict(self.inverse_closed_forms)))

    @property
    def has_analytic_jacobian(self) -> bool:
        return self.jac is not None

    def _batch(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim <= 1
        x = np.atleast_2d(x.reshape(1, -1) if single else x)
        if x.shape[1] != self.dim_in:
            raise ContractViolation(f"{self.name}: input length {x.shape[1]} != dim_in {self.dim_in}")
        return x, single

    def __call__(self, x) -> np.ndarray:
        xb, single = self._batch(x)
        y = self.fn(xb)
        return y[0] if single else y

    def jacobian(self, x) -> np.ndarray:
        xb, single = self._batch(x)
        J = self.jac(xb) if self.jac is not None else fd_jacobian(self.fn, xb)
        return J[0] if single else J

    def inverse_map(self, domain: Region | None = None) -> "SmoothMap":
        if self.inv is None:
            raise ContractViolation(f"{self.name} has no analytic inverse")
        return SmoothMap(
            name=f"{self.name}^-1", dim_in=self.dim_out, dim_out=self.dim_in, fn=self.inv,
            jac=self.inv_jac, inv=self.fn, inv_jac=self.jac,
            domain=domain or Ball(np.zeros(self.dim_out), DEFAULT_DOMAIN_RADIUS),
            params=dict(self.params), closed_forms=dict(self.inverse_closed_forms),
            inverse_closed_forms=dict(self.closed_forms),
        )

    def with_domain(self, domain: Region) -> "SmoothMap":
        return replace(self, domain=domain)

    def describe(self) -> dict:
        return {"name": self.name, "dim_in": self.dim_in, "dim_out": self.dim_out,
                "params": {k: _jsonable(v) for k, v in self.params.items()},
                "domain": self.domain.to_json()}


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def fd_jacobian(fn: Batched, x: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian with step 1e-5 * (1 + ||x||) per point."""
    n = x.shape[1]
    h = FD_STEP * (1.0 + np.linalg.norm(x, axis=1))
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        d = h[:, None] * e
        cols.append((fn(x + d) - fn(x - d)) / (2 * h[:, None]))
    return np.stack(cols, axis=-1)


def max_abs_coord(region: Region, i: int) -> float:
    if isinstance(region, Ball):
        return abs(float(region.center[i])) + region.radius
    return float(max(abs(region.lo[i]), abs(region.hi[i])))


def _const(v: float) -> ClosedForm:
    return lambda region: float(v)


# ---------------------------------------------------------------- corpus


def identity(n: int = 2, domain: Region | None = None) -> SmoothMap:
    eye = np.eye(n)
    return SmoothMap(
        name=f"identity({n})", dim_in=n, dim_out=n,
        fn=lambda x: x.copy(), jac=lambda x: np.broadcast_to(eye, (x.shape[0], n, n)).copy(),
        inv=lambda y: y.copy(), inv_jac=lambda y: np.broadcast_to(eye, (y.shape[0], n, n)).copy(),
        domain=domain, params={"n": n},
        closed_forms={"lipschitz": _const(1), "derivative_lipschitz": _const(0),
                      "second_order": _const(0), "inverse_lipschitz": _const(1)},
        inverse_closed_forms={"lipschitz": _const(1), "derivative_lipschitz": _const(0),
                              "second_order": _const(0), "inverse_lipschitz": _const(1)},
    )


def affine(A, b=None, domain: Region | None = None) -> SmoothMap:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    b = np.zeros(m) if b is None else np.asarray(b, dtype=float)
    if b.shape != (m,):
        raise ContractViolation("affine offset b must have length rows(A)")
    opnorm = float(np.linalg.svd(A, compute_uv=False)[0])
    cf = {"lipschitz": _const(opnorm), "derivative_lipschitz": _const(0), "second_order": _const(0)}
    inv = inv_jac = None
    icf = {}
    if m == n and np.linalg.matrix_rank(A) == n:
        Ainv = np.linalg.inv(A)
        inv = lambda y: (y - b) @ Ainv.T  # noqa: E731
        inv_jac = lambda y: np.broadcast_to(Ainv, (y.shape[0], n, n)).copy()  # noqa: E731
        ilip = float(np.linalg.svd(Ainv, compute_uv=False)[0])
        cf["inverse_lipschitz"] = _const(ilip)
        icf = {"lipschitz": _const(ilip), "derivative_lipschitz": _const(0), "second_order": _const(0),
               "inverse_lipschitz": _const(opnorm)}
    return SmoothMap(
        name="affine", dim_in=n, dim_out=m,
        fn=lambda x: x @ A.T + b, jac=lambda x: np.broadcast_to(A, (x.shape[0], m, n)).copy(),
        inv=inv, inv_jac=inv_jac, domain=domain, params={"A": A, "b": b},
        closed_forms=cf, inverse_closed_forms=icf,
    )


def _shear_sigma_max(kappa: float, region: Region) -> float:
    c = 2.0 * abs(kappa) * max_abs_coord(region, 0)
    return 0.5 * (c + np.sqrt(c * c + 4.0))


def shear(kappa: float = 1.0, domain: Region | None = None) -> SmoothMap:
    """(x1, x2) -> (x1, x2 + kappa x1^2); the inverse is the shear with -kappa."""
    k = float(kappa)

    def fwd(kk):
        def f(x):
            return np.stack([x[:, 0], x[:, 1] + kk * x[:, 0] ** 2], axis=1)
        return f

    def jac(kk):
        def J(x):
            out = np.zeros((x.shape[0], 2, 2))
            out[:, 0, 0] = 1.0
            out[:, 1, 1] = 1.0
            out[:, 1, 0] = 2.0 * kk * x[:, 0]
            return out
        return J

    # the inverse keeps the first coordinate, so region bounds on x1 transfer
    cf = {
        "lipschitz": lambda r: _shear_sigma_max(k, r),
        "derivative_lipschitz": _const(2 * abs(k)),
        "second_order": _const(2 * abs(k)),
        "inverse_lipschitz": lambda r: _shear_sigma_max(k, r),
    }
    return SmoothMap(
        name=f"shear(k={k:g})", dim_in=2, dim_out=2, fn=fwd(k), jac=jac(k), inv=fwd(-k), inv_jac=jac(-k),
        domain=domain, params={"k": k}, closed_forms=cf, inverse_closed_forms=dict(cf),
    )


def cubic1d(domain: Region | None = None) -> SmoothMap:
    return SmoothMap(
        name="cubic1d", dim_in=1, dim_out=1, fn=lambda x: x**3, jac=lambda x: (3 * x**2)[:, :, None],
        domain=domain or Box([-10.0], [10.0]),
        closed_forms={
            "lipschitz": lambda r: 3 * max_abs_coord(r, 0) ** 2,
            "derivative_lipschitz": lambda r: 6 * max_abs_coord(r, 0),
            "second_order": lambda r: 6 * max_abs_coord(r, 0),
        },
    )


def quad1d(domain: Region | None = None) -> SmoothMap:
    return SmoothMap(
        name="quad1d", dim_in=1, dim_out=1, fn=lambda x: x**2, jac=lambda x: (2 * x)[:, :, None],
        domain=domain or Box([-10.0], [10.0]),
        closed_forms={
            "lipschitz": lambda r: 2 * max_abs_coord(r, 0),
            "derivative_lipschitz": _const(2),
            "second_order": _const(2),
        },
    )


# ---------------------------------------------------------------- polynomial maps

MAX_DEGREE = 4


def polynomial(config: dict | str | Path) -> SmoothMap:
    """Polynomial map from the JSON schema

    {"name": ..., "dim_in": n, "dim_out": m,
     "outputs": [{"monomials": [{"exponents": [...], "coeff": c}, ...]}, ...],
     "domain": {"ball": {"center": [...], "radius": r}}}
    """
    if isinstance(config, Path) or (isinstance(config, str) and not config.lstrip().startswith("{")):
        config = json.loads(Path(config).read_text())
    elif isinstance(config, str):
        config = json.loads(config)
    try:
        n, m = int(config["dim_in"]), int(config["dim_out"])
        outputs = config["outputs"]
    except KeyError as exc:
        raise ContractViolation(f"polynomial map config is missing field {exc.args[0]!r}") from None
    if len(outputs) != m:
        raise ContractViolation(f"'outputs' has {len(outputs)} entries, dim_out is {m}")
    exps, coeffs = [], []
    for k, out in enumerate(outputs):
        E = np.array([mono["exponents"] for mono in out["monomials"]], dtype=float).reshape(-1, n)
        c = np.array([mono["coeff"] for mono in out["monomials"]], dtype=float)
        if np.any(E < 0) or np.any(E != np.round(E)):
            raise ContractViolation(f"output {k}: exponents must be nonnegative integers")
        if E.size and E.sum(axis=1).max() > MAX_DEGREE:
            raise ContractViolation(f"output {k}: total degree exceeds {MAX_DEGREE}")
        exps.append(E)
        coeffs.append(c)

    def f(x):
        cols = [np.prod(x[:, None, :] ** E[None], axis=2) @ c if c.size else np.zeros(x.shape[0])
                for E, c in zip(exps, coeffs)]
        return np.stack(cols, axis=1)

    def J(x):
        out = np.zeros((x.shape[0], m, n))
        for i, (E, c) in enumerate(zip(exps, coeffs)):
            for j in range(n):
                Ej = E.copy()
                dj = Ej[:, j].copy()
                Ej[:, j] = np.maximum(Ej[:, j] - 1, 0)
                terms = np.prod(x[:, None, :] ** Ej[None], axis=2) * (dj * c)[None]
                out[:, i, j] = terms.sum(axis=1)
        return out

    domain = region_from_json(config["domain"]) if "domain" in config else None
    return SmoothMap(name=config.get("name", "polynomial"), dim_in=n, dim_out=m, fn=f, jac=J,
                     domain=domain, params={"config": config})


# ---------------------------------------------------------------- operations


def map_eval(m: SmoothMap, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != m.dim_in:
        raise ContractViolation(f"{m.name}: expected a vector of length {m.dim_in}, got shape {x.shape}")
    if not m.domain.contains(x):
        warnings.warn(f"{m.name}: point {x.tolist()} lies outside the map's domain", stacklevel=2)
    return m(x)


def directional_derivative(m: SmoothMap, x, h) -> np.ndarray:
    """J(x) h, or a central difference of t -> f(x + t h) when no Jacobian is registered."""
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    if x.shape != (m.dim_in,) or h.shape != (m.dim_in,):
        raise ContractViolation(f"{m.name}: x and h must have length {m.dim_in}")
    hn = float(np.max(np.abs(h)))  # max-abs: the 2-norm underflows for tiny h
    if hn == 0:
        raise ContractViolation("direction h must be nonzero")
    if not m.domain.contains(x):
        raise DomainError(f"{m.name}: point lies outside the domain")
    if m.domain.on_boundary(x) and float(m.domain.outward_normal(x) @ h) > 0:
        raise DomainError(f"{m.name}: outward direction at a boundary point")
    if m.jac is not None:
        return m.jacobian(x) @ h
    step = FD_STEP * (1.0 + float(np.linalg.norm(x))) / hn
    return (m(x + step * h) - m(x - step * h)) / (2 * step)


def inverse_eval(m: SmoothMap, y, x_init=None, ball: Ball | None = None, tol: float = 1e-10) -> np.ndarray:
    """Solve f(x) = y, analytically when possible, else by the ball-constrained solver."""
    y = np.asarray(y, dtype=float)
    if y.shape != (m.dim_out,):
        raise ContractViolation(f"{m.name}: y must have length {m.dim_out}")
    bound = tol * (1.0 + float(np.linalg.norm(y)))
    if m.inv is not None:
        x = m.inv(y[None])[0]
        res = float(np.linalg.norm(m(x) - y))
        if res > bound:
            raise NoPreimageFound(f"{m.name}: analytic inverse misses", res, x)
        return x
    if m.dim_in != m.dim_out and ball is None:
        raise ContractViolation("non-square map needs an explicit ball constraint")
    from .oracle import solve_preimage

    if ball is None:
        dom = m.domain
        ball = dom if isinstance(dom, Ball) else Ball(dom.center, 0.5 * dom.diameter)
    x0 = ball.center if x_init is None else np.asarray(x_init, dtype=float)
    sol = solve_preimage(m, y, x0, ball.center, ball.radius, continuation=True)
    if sol.residual > bound:
        raise NoPreimageFound(f"{m.name}: no preimage found in the ball", sol.residual, sol.x)
    return sol.x


# ---------------------------------------------------------------- references


def _parse_value(v: str):
    try:
        return json.loads(v)
    except json.JSONDecodeError:
        return v


BUILTINS = {
    "identity": lambda p: identity(int(p.get("n", 2))),
    "affine": lambda p: affine(p["A"], p.get("b")),
    "shear": lambda p: shear(float(p.get("k", p.get("kappa", 1.0)))),
    "cubic1d": lambda p: cubic1d(),
    "cubic": lambda p: cubic1d(),
    "quad1d": lambda p: quad1d(),
    "quad": lambda p: quad1d(),
}


def from_ref(ref: str) -> SmoothMap:
    """Build a map from ``name[:key=value[;key=value...]]`` or a path to a polynomial JSON file.

    Values are parsed as JSON when possible, e.g. ``affine:A=[[2,0],[0,0.5]]``.
    """
    if ref.endswith(".json") or Path(ref).is_file():
        return polynomial(Path(ref))
    name, _, rest = ref.partition(":")
    if name not in BUILTINS:
        raise ContractViolation(f"unknown map {name!r}; built-ins: {', '.join(sorted(BUILTINS))}")
    params = {}
    for item in filter(None, rest.split(";")):
        key, eq, val = item.partition("=")
        if not eq:
            raise ContractViolation(f"map parameter {item!r} is not key=value")
        params[key.strip()] = _parse_value(val.strip())
    try:
        return BUILTINS[name](params)
    except KeyError as exc:
        raise ContractViolation(f"map {name!r} needs parameter {exc.args[0]!r}") from None
