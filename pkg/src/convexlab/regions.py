"""Euclidean balls and axis-aligned boxes used as map domains and sampling regions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation


def _vec(v) -> np.ndarray:
    a = np.atleast_1d(np.asarray(v, dtype=float))
    if a.ndim != 1:
        raise ContractViolation(f"expected a vector, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if not self.radius > 0:
            raise ContractViolation(f"ball radius must be positive, got {self.radius}")

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def contains(self, x, tol: float = 1e-12) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.center, axis=-1) <= self.radius * (1 + tol) + tol

    def on_boundary(self, x, tol: float = 1e-12) -> bool:
        return abs(float(np.linalg.norm(np.asarray(x) - self.center)) - self.radius) <= tol * (1 + self.radius)

    def outward_normal(self, x) -> np.ndarray:
        d = np.asarray(x, dtype=float) - self.center
        return d / np.linalg.norm(d)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        g = rng.standard_normal((n, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.random(n) ** (1.0 / self.dim)
        return self.center + g * r[:, None]

    def chord(self, p: np.ndarray, u: np.ndarray) -> tuple[float, float]:
        """Parameter interval of {p + tau*u} inside the ball (u need not be unit)."""
        d = p - self.center
        a = float(u @ u)
        b = float(d @ u)
        c = float(d @ d) - self.radius**2
        disc = b * b - a * c
        if disc < 0:
            return (0.0, -1.0)
        s = math.sqrt(disc)
        return ((-b - s) / a, (-b + s) / a)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.center - self.radius, self.center + self.radius

    def to_json(self) -> dict:
        return {"ball": {"center": self.center.tolist(), "radius": float(self.radius)}}


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = _vec(self.lo), _vec(self.hi)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ContractViolation("box needs lo < hi componentwise with equal lengths")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def contains(self, x, tol: float = 1e-12) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo - tol) & (x <= self.hi + tol), axis=-1)

    def on_boundary(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.any(np.isclose(x, self.lo, atol=tol) | np.isclose(x, self.hi, atol=tol)))

    def outward_normal(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = np.zeros_like(x)
        n[np.isclose(x, self.hi, atol=1e-12)] = 1.0
        n[np.isclose(x, self.lo, atol=1e-12)] = -1.0
        return n

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.random((n, self.dim))

    def chord(self, p: np.ndarray, u: np.ndarray) -> tuple[float, float]:
        t0, t1 = -np.inf, np.inf
        for pi, ui, lo, hi in zip(p, u, self.lo, self.hi):
            if ui == 0.0:
                if pi < lo or pi > hi:
                    return (0.0, -1.0)
                continue
            a, b = (lo - pi) / ui, (hi - pi) / ui
            t0, t1 = max(t0, min(a, b)), min(t1, max(a, b))
        return (float(t0), float(t1))

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lo, self.hi

    def to_json(self) -> dict:
        return {"box": {"lo": self.lo.tolist(), "hi": self.hi.tolist()}}


Region = Ball | Box


def region_from_json(obj: dict) -> Region:
    if "ball" in obj:
        b = obj["ball"]
        return Ball(b["center"], float(b["radius"]))
    if "box" in obj:
        b = obj["box"]
        return Box(b["lo"], b["hi"])
    raise ContractViolation(f"region must have a 'ball' or 'box' key, got {sorted(obj)}")

