"""Certified radii of local convexity.

Two certificates:

* ``hilbert``: Euclidean spaces.  With L the Lipschitz constant of x -> J(x) and
  nu = sigma_min(J(a)), the image f(B(a, eps)) is convex for eps < min(r, nu / (4L)).
* ``banach``: target norm of power type 2 with constant C.  With L2 the
  second-order constant of f and Lam the Lipschitz constant of f^-1, the preimage
  f^-1(B(f(a), eps)) is convex whenever L2 * Lam^2 / 4 <= C / eps.

Constants come from registered closed forms when available, otherwise from the
sampling estimators (inflated by 1 + beta); every constant records which.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import DEFAULT_SEED
from .errors import (ContractViolation, HypothesisMissing, HypothesisViolation, MuNonpositive,
                     NormNotPowerType, NotCoercive)
from .maps import SmoothMap
from .norms import NormSpec, SectionBudget, euclidean, modulus_convexity_estimate, power_type_constant
from .regions import Ball
from .smoothness import (DEFAULT_BETA, derivative_lipschitz_estimate, inverse_lipschitz_estimate,
                         modulus_smoothness, sigma_min)

DEFAULT_ETA = 1e-6
CLOSED_FORM, ESTIMATED, COMPUTED = "closed-form", "estimated", "computed"


def _check_eta(eta: float) -> None:
    if not 0 <= eta < 1:
        raise ContractViolation(f"safety factor eta must lie in [0, 1), got {eta}")


def hilbert_certified_radius(L: float, nu: float, r: float, eta: float = DEFAULT_ETA) -> float:
    """(1 - eta) * min(r, nu / (4L)); the second term is absent when L = 0."""
    _check_eta(eta)
    if not nu > 0:
        raise NotCoercive(f"coercivity constant nu = {nu} is not positive")
    if L < 0 or not r > 0:
        raise ContractViolation("need L >= 0 and r > 0")
    cap = r if L == 0 else min(r, nu / (4.0 * L))
    return (1.0 - eta) * cap


@dataclass(frozen=True)
class HilbertConstants:
    mu0: float
    mu: float
    rho: float


def hilbert_constants(nu: float, L: float, eps: float, d: float) -> HilbertConstants:
    """mu0 = nu - L eps, mu = nu - 2 L eps, rho = mu0 d^2 / (8 eps mu) for a pair at distance d."""
    if not eps > 0:
        raise ContractViolation("eps must be positive")
    if not 0 <= d <= 2 * eps * (1 + 1e-12):
        raise ContractViolation(f"pair distance {d} outside [0, 2 eps]")
    mu0 = nu - L * eps
    mu = nu - 2.0 * L * eps
    if not mu > 0:
        raise MuNonpositive(f"mu = nu - 2 L eps = {mu} is not positive")
    return HilbertConstants(mu0, mu, mu0 * d * d / (8.0 * eps * mu))


def banach_certified_radius(L2: float, Lam: float, C: float, r_max: float = math.inf,
                            eta: float = DEFAULT_ETA, scale: float = 1.0) -> float:
    """(1 - eta) * min(4C / (L2 Lam^2), r_max, 1/scale).

    ``scale`` is the length unit in which the unit-ball power-type inequality is
    applied; radii are capped at one such unit.
    """
    _check_eta(eta)
    if not C > 0:
        raise NormNotPowerType(f"power-type constant C = {C} is not positive")
    if not C < 1:
        raise ContractViolation(f"power-type constant must be below 1, got {C}")
    if L2 < 0 or not Lam > 0 or not r_max > 0 or not scale > 0:
        raise ContractViolation("need L2 >= 0, Lam > 0, r_max > 0, scale > 0")
    cap = min(r_max, 1.0 / scale)
    if L2 > 0:
        cap = min(cap, 4.0 * C / (L2 * Lam * Lam))
    return (1.0 - eta) * cap


@dataclass(frozen=True)
class Constant:
    value: float
    provenance: str
    raw: float | None = None

    def to_json(self) -> dict:
        out = {"value": self.value, "provenance": self.provenance}
        if self.raw is not None:
            out["raw"] = self.raw
        return out


@dataclass
class HilbertCertificate:
    map_id: str
    center: np.ndarray
    r: float
    L: Constant
    nu: Constant
    eta: float
    epsilon_star: float
    mu0: float
    mu: float
    mode: str = field(default="hilbert", init=False)

    def to_json(self) -> dict:
        return {"mode": self.mode, "map": self.map_id, "center": self.center.tolist(), "r": _num(self.r),
                "constants": {"L": self.L.to_json(), "nu": self.nu.to_json(), "mu0": self.mu0, "mu": self.mu},
                "eta": self.eta, "epsilon_star": self.epsilon_star}


@dataclass
class BanachCertificate:
    map_id: str
    center: np.ndarray
    r: float
    L2: Constant
    Lam: Constant
    C: Constant
    r_max: float
    scale: float
    eta: float
    epsilon_star: float
    mode: str = field(default="banach", init=False)

    def to_json(self) -> dict:
        return {"mode": self.mode, "map": self.map_id, "center": self.center.tolist(), "r": _num(self.r),
                "constants": {"L2": self.L2.to_json(), "Lambda": self.Lam.to_json(), "C": self.C.to_json()},
                "r_max": _num(self.r_max), "scale": self.scale, "eta": self.eta,
                "epsilon_star": self.epsilon_star}


Certificate = HilbertCertificate | BanachCertificate


def _num(v: float):
    return v if math.isfinite(v) else "inf"


def _region(m: SmoothMap, a: np.ndarray, r: float):
    if not math.isfinite(r):
        return m.domain
    ball = Ball(a, r)
    lo, hi = ball.bounding_box()
    dom = m.domain
    inside = (float(np.linalg.norm(a - dom.center)) + r <= dom.radius * (1 + 1e-12) if isinstance(dom, Ball)
              else bool(np.all(lo >= dom.lo - 1e-12) and np.all(hi <= dom.hi + 1e-12)))
    if not inside:
        raise ContractViolation(f"B(a, {r}) is not contained in the domain of {m.name}")
    return ball


def _lookup(forms, name: str, region, use: bool) -> float | None:
    if use and name in forms:
        return float(forms[name](region))
    return None


def certify_map(m: SmoothMap, a, r: float = math.inf, mode: str = "hilbert", norm: NormSpec | None = None,
                eta: float = DEFAULT_ETA, beta: float = DEFAULT_BETA, use_closed_forms: bool = True,
                seed: int = DEFAULT_SEED, budget: int = 20000, threads: int = 1) -> Certificate:
    """Assemble the hypotheses for ``mode`` at the point ``a`` and compute the radius."""
    a = np.asarray(a, dtype=float).ravel()
    if a.size != m.dim_in:
        raise ContractViolation(f"center has length {a.size}, {m.name} expects {m.dim_in}")
    if not r > 0:
        raise ContractViolation("r must be positive")
    _check_eta(eta)
    region = _region(m, a, r)

    if mode == "hilbert":
        if norm is not None and not norm.is_euclidean:
            raise HypothesisViolation("hilbert mode needs the Euclidean norm")
        nu = Constant(sigma_min(m, a), COMPUTED)
        if not nu.value > 0:
            raise NotCoercive(f"{m.name}: sigma_min(J(a)) = {nu.value:g}, the derivative is not surjective")
        cf = _lookup(m.closed_forms, "derivative_lipschitz", region, use_closed_forms)
        if cf is not None:
            L = Constant(cf, CLOSED_FORM)
        else:
            est = derivative_lipschitz_estimate(m, region, budget=budget, seed=seed, beta=beta)
            L = Constant(est.inflated, ESTIMATED, est.value)
        eps = hilbert_certified_radius(L.value, nu.value, r, eta)
        return HilbertCertificate(m.name, a, r, L, nu, eta, eps, nu.value - L.value * eps,
                                  nu.value - 2 * L.value * eps)

    if mode == "banach":
        if m.inv is None:
            raise HypothesisMissing(f"{m.name} has no inverse; banach mode needs f^-1")
        norm = norm or euclidean(m.dim_out)
        if norm.dim != m.dim_out:
            raise ContractViolation("target norm dimension does not match the map")
        closed_ok = use_closed_forms and norm.is_euclidean
        if norm.is_euclidean:
            C = Constant(0.125, CLOSED_FORM)
        else:
            fit = power_type_constant(modulus_convexity_estimate(
                norm, budget=SectionBudget(seed=seed, threads=threads)), 2.0)
            if not fit.is_power_type:
                raise NormNotPowerType("target norm shows no power-type-2 modulus at the sampled resolution")
            C = Constant(fit.constant * (1 - beta), ESTIMATED, fit.constant)
        cf = _lookup(m.closed_forms, "second_order", region, closed_ok)
        if cf is not None:
            L2 = Constant(cf, CLOSED_FORM)
        else:
            prof = modulus_smoothness(m, 2, region=region, norm_out=norm)
            L2 = Constant(prof.fitted_constant * (1 + beta), ESTIMATED, prof.fitted_constant)
        cf = _lookup(m.closed_forms, "inverse_lipschitz", region, closed_ok)
        if cf is not None:
            Lam = Constant(cf, CLOSED_FORM)
        else:
            est = inverse_lipschitz_estimate(m, region, budget=budget, seed=seed, beta=beta, norm_out=norm)
            Lam = Constant(est.inflated, ESTIMATED, est.value)
        # f^-1(B(f(a), eps)) stays inside B(a, Lam eps) subset of B(a, r)
        r_max = r / Lam.value
        eps = banach_certified_radius(L2.value, Lam.value, C.value, r_max, eta)
        return BanachCertificate(m.name, a, r, L2, Lam, C, r_max, 1.0, eta, eps)

    raise ContractViolation(f"unknown mode {mode!r}; expected 'hilbert' or 'banach'")
