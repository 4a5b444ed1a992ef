"""The mechanical Hamiltonian family and its calculus on the torus.

The family is H(x,t,p) = |p + lam*eta(t)|^2/2 + lam*V(x,t) with a homotopy
weight lam in [0,1]; eta has one component per spatial axis and depends on
time only, V lives on the full space-time torus.  Both are finite Fourier
series rather than callables so a configuration serializes exactly and runs
reproduce bit for bit.

The drift of the equivalent nondivergence form is sublinear: |b(z,q)| is
bounded by a linear function chi(s) = c*s + d0 of |q|, and ``chi_bound``
produces verified (c, d0) for a concrete instance.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .torus_grid import TorusGrid

__all__ = [
    "NyquistError",
    "ChiVerificationError",
    "FourierTerm",
    "FourierSpec",
    "MechanicalHamiltonian",
    "ChiParams",
    "HamiltonianValue",
    "evaluate",
    "lagrangian",
    "drift_diffusion",
    "chi_bound",
    "check_nyquist",
    "hamiltonian_to_json",
    "hamiltonian_from_json",
]


class NyquistError(ValueError):
    """Fourier content at or above the Nyquist frequency of the target grid."""


class ChiVerificationError(RuntimeError):
    """A sampled drift value violated the fitted linear bound."""


@dataclass(frozen=True)
class FourierTerm:
    freq: tuple[int, ...]
    cos: float = 0.0
    sin: float = 0.0


@dataclass(frozen=True)
class FourierSpec:
    """A real trigonometric polynomial in ``nvars`` periodic variables.

    Evaluation is sum_j cos_j * cos(2*pi*k_j.z) + sin_j * sin(2*pi*k_j.z);
    the class is closed under partial differentiation.
    """

    nvars: int
    terms: tuple[FourierTerm, ...] = ()

    def __post_init__(self) -> None:
        for term in self.terms:
            if len(term.freq) != self.nvars:
                raise ValueError(
                    f"term frequency {term.freq} has arity {len(term.freq)}, expected {self.nvars}"
                )

    @staticmethod
    def build(nvars: int, terms: Iterable[tuple[Sequence[int], float, float]]) -> "FourierSpec":
        return FourierSpec(
            nvars, tuple(FourierTerm(tuple(int(f) for f in fr), float(c), float(s)) for fr, c, s in terms)
        )

    @staticmethod
    def zero(nvars: int) -> "FourierSpec":
        return FourierSpec(nvars, ())

    def is_zero(self) -> bool:
        return all(t.cos == 0.0 and t.sin == 0.0 for t in self.terms)

    def evaluate(self, *coords: np.ndarray) -> np.ndarray:
        if len(coords) != self.nvars:
            raise ValueError(f"expected {self.nvars} coordinate arrays, got {len(coords)}")
        out = np.zeros(np.broadcast(*coords).shape) if coords else np.zeros(())
        for term in self.terms:
            phase = 0.0
            for k, z in zip(term.freq, coords):
                if k:
                    phase = phase + (2.0 * np.pi * k) * z
            phase = np.asarray(phase) + np.zeros(out.shape)
            out = out + term.cos * np.cos(phase) + term.sin * np.sin(phase)
        return out

    def partial(self, axis: int) -> "FourierSpec":
        """Analytic partial derivative with respect to coordinate ``axis``."""
        if not 0 <= axis < self.nvars:
            raise ValueError(f"axis {axis} out of range for arity {self.nvars}")
        terms = []
        for t in self.terms:
            w = 2.0 * np.pi * t.freq[axis]
            if w != 0.0:
                terms.append(FourierTerm(t.freq, cos=w * t.sin, sin=-w * t.cos))
        return FourierSpec(self.nvars, tuple(terms))

    def max_abs_freq(self) -> tuple[int, ...]:
        out = [0] * self.nvars
        for t in self.terms:
            for a, k in enumerate(t.freq):
                out[a] = max(out[a], abs(k))
        return tuple(out)

    def depends_on(self, axis: int) -> bool:
        return any(t.freq[axis] != 0 and (t.cos != 0.0 or t.sin != 0.0) for t in self.terms)

    def to_json_obj(self) -> list:
        return [{"freq": list(t.freq), "cos": t.cos, "sin": t.sin} for t in self.terms]

    @staticmethod
    def from_json_obj(obj: list, nvars: int) -> "FourierSpec":
        return FourierSpec.build(nvars, [(t["freq"], t.get("cos", 0.0), t.get("sin", 0.0)) for t in obj])


@dataclass(frozen=True)
class MechanicalHamiltonian:
    """H(x,t,p) = |p + lam*eta(t)|^2/2 + lam*V(x,t).

    Immutable; the continuation schedule produces rescaled copies through
    :meth:`with_lambda`.  The momentum Hessian is the identity, so the family
    is strictly convex and superlinear for every lam.
    """

    d: int
    eta: tuple[FourierSpec, ...]
    V: FourierSpec
    lam: float = 1.0

    def __post_init__(self) -> None:
        if self.d not in (1, 2):
            raise ValueError(f"spatial dimension must be 1 or 2, got {self.d}")
        if len(self.eta) != self.d:
            raise ValueError(f"expected {self.d} eta components, got {len(self.eta)}")
        for spec in self.eta:
            if spec.nvars != 1:
                raise ValueError("eta components must be functions of time alone")
        if self.V.nvars != self.d + 1:
            raise ValueError(f"V must have arity d+1={self.d + 1}, got {self.V.nvars}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0,1], got {self.lam}")

    def with_lambda(self, lam: float) -> "MechanicalHamiltonian":
        return replace(self, lam=float(lam))


@dataclass(frozen=True)
class ChiParams:
    """Linear drift bound chi(s) = c*s + d0 with c, d0 >= 0."""

    c: float
    d0: float

    def __post_init__(self) -> None:
        if self.c < 0 or self.d0 < 0:
            raise ValueError("chi parameters must be nonnegative")

    def __call__(self, s):
        return self.c * s + self.d0


class HamiltonianValue(NamedTuple):
    H: float
    H_p: np.ndarray
    H_pp: np.ndarray
    H_x: np.ndarray
    H_t: float


def _eta_values(ham: MechanicalHamiltonian, t) -> np.ndarray:
    return np.array([spec.evaluate(t) for spec in ham.eta], dtype=float)


def _eta_prime_values(ham: MechanicalHamiltonian, t) -> np.ndarray:
    return np.array([spec.partial(0).evaluate(t) for spec in ham.eta], dtype=float)


def evaluate(ham: MechanicalHamiltonian, z, p) -> HamiltonianValue:
    """Pointwise H and its momentum/space/time derivatives at (z, p)."""
    z = np.asarray(z, dtype=float).reshape(ham.d + 1)
    p = np.asarray(p, dtype=float).reshape(ham.d)
    x, t = z[: ham.d], z[ham.d]
    lam = ham.lam
    w = p + lam * _eta_values(ham, t)
    V = float(ham.V.evaluate(*x, t))
    H = 0.5 * float(w @ w) + lam * V
    H_x = lam * np.array([float(ham.V.partial(a).evaluate(*x, t)) for a in range(ham.d)])
    V_t = float(ham.V.partial(ham.d).evaluate(*x, t))
    H_t = float(w @ (lam * _eta_prime_values(ham, t))) + lam * V_t
    return HamiltonianValue(H=H, H_p=w, H_pp=np.eye(ham.d), H_x=H_x, H_t=H_t)


def lagrangian(ham: MechanicalHamiltonian, z, v) -> float:
    """Legendre transform of H in p, in closed form for the mechanical family.

    L(z,v) = |v|^2/2 - lam*eta(t).v - lam*V(x,t); Fenchel equality
    L + H = p.v holds exactly at v = H_p(z,p).
    """
    z = np.asarray(z, dtype=float).reshape(ham.d + 1)
    v = np.asarray(v, dtype=float).reshape(ham.d)
    x, t = z[: ham.d], z[ham.d]
    lam = ham.lam
    eta = _eta_values(ham, t)
    return 0.5 * float(v @ v) - lam * float(eta @ v) - lam * float(ham.V.evaluate(*x, t))


def drift_diffusion(ham: MechanicalHamiltonian, k: float, z, q):
    """Coefficients of the nondivergence form of the critical-point equation.

    Returns ``(a_k, sigma, b)`` with a_k = sigma sigma^T exactly; for the
    mechanical family the momentum-space mixed Hessian vanishes, so the drift
    b = H_t + H_x . H_p carries no k dependence.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    q = np.asarray(q, dtype=float).reshape(ham.d + 1)
    p = q[: ham.d]
    val = evaluate(ham, z, p)
    d = ham.d
    a = np.zeros((d + 1, d + 1))
    a[:d, :d] = val.H_pp / k + np.outer(val.H_p, val.H_p)
    a[:d, d] = val.H_p
    a[d, :d] = val.H_p
    a[d, d] = 1.0
    sigma = np.zeros((d + 1, d + 1))
    sigma[:d, :d] = np.sqrt(1.0 / k) * np.eye(d)  # (H_pp/k)^(1/2) for identity H_pp
    sigma[:d, d] = val.H_p
    sigma[d, d] = 1.0
    b = val.H_t + float(val.H_x @ val.H_p)
    return a, sigma, b


def _refinement(grid: TorusGrid, budget: int = 300_000) -> TorusGrid:
    for factor in (8, 4, 2, 1):
        n_x = grid.n_x * factor
        n_t = grid.n_t * factor if grid.n_t > 1 else 1
        if n_x**grid.d * n_t <= budget:
            return TorusGrid(grid.d, n_x, n_t)
    return grid


def chi_bound(
    ham: MechanicalHamiltonian,
    grid: TorusGrid,
    n_q_samples: int = 64,
    rng_seed: int = 0,
) -> ChiParams:
    """Fit and verify a linear bound |b(z,q)| <= c|q| + d0 for the drift.

    The maxima are taken on a dense refinement of ``grid`` (which contains the
    grid nodes), at the top of the homotopy (lam = 1) so one bound covers the
    whole continuation family:

        c  = max(|eta'(t)| + |grad V(x,t)|),
        d0 = c * max|eta(t)| + max|V_t(x,t)|.

    The bound is then spot-checked on random q with |q| <= 10*(1 + max|eta|)
    over the refined mesh; a violation raises :class:`ChiVerificationError`
    with the offending sample.
    """
    fine = _refinement(grid)
    coords = fine.coords()
    t = coords[-1]
    d = ham.d

    eta = [np.broadcast_to(spec.evaluate(t), fine.shape) for spec in ham.eta]
    eta_p = [np.broadcast_to(spec.partial(0).evaluate(t), fine.shape) for spec in ham.eta]
    gradV = [np.broadcast_to(ham.V.partial(a).evaluate(*coords), fine.shape) for a in range(d)]
    V_t = np.broadcast_to(ham.V.partial(d).evaluate(*coords), fine.shape)

    abs_eta = np.sqrt(sum(e**2 for e in eta))
    abs_eta_p = np.sqrt(sum(e**2 for e in eta_p))
    abs_gradV = np.sqrt(sum(g**2 for g in gradV))

    c = float(np.max(abs_eta_p + abs_gradV))
    max_eta = float(np.max(abs_eta)) if d else 0.0
    d0 = c * max_eta + float(np.max(np.abs(V_t)))
    params = ChiParams(c=c, d0=d0)

    # spot-check at the instance's own lam
    lam = ham.lam
    q_max = 10.0 * (1.0 + max_eta)
    rng = np.random.default_rng(rng_seed)
    dirs = rng.normal(size=(n_q_samples, d + 1))
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-300)
    radii = rng.uniform(0.0, q_max, size=n_q_samples)
    tol = 1e-9 * (1.0 + c + d0)
    for q_vec, r in zip(dirs, radii):
        q = r * q_vec
        p = q[:d]
        b = lam * V_t
        for i in range(d):
            b = b + (p[i] + lam * eta[i]) * (lam * eta_p[i] + lam * gradV[i])
        excess = np.abs(b) - (params(r) + tol)
        if np.any(excess > 0):
            idx = np.unravel_index(int(np.argmax(excess)), fine.shape)
            z = tuple(float(coords[a].ravel()[idx[a]]) for a in range(d + 1))
            raise ChiVerificationError(
                f"|b| = {float(np.abs(b)[idx])} exceeds chi(|q|) = {params(r)} at z={z}, q={q.tolist()}"
            )
    return params


def check_nyquist(ham: MechanicalHamiltonian, grid: TorusGrid) -> None:
    """Reject Hamiltonian Fourier content at or above the grid Nyquist limit."""
    if grid.d != ham.d:
        raise NyquistError(f"grid dimension {grid.d} does not match Hamiltonian d={ham.d}")
    for i, spec in enumerate(ham.eta):
        (kt,) = spec.max_abs_freq() or (0,)
        if 2 * kt >= grid.n_t:
            raise NyquistError(
                f"eta[{i}] has temporal frequency {kt}, at or above Nyquist for n_t={grid.n_t}"
            )
    freqs = ham.V.max_abs_freq()
    for axis, k in enumerate(freqs):
        n = grid.axis_size(axis)
        if 2 * k >= n:
            raise NyquistError(
                f"V has frequency {k} on axis {axis}, at or above Nyquist for n={n}"
            )


def hamiltonian_to_json(ham: MechanicalHamiltonian) -> dict:
    return {
        "d": ham.d,
        "eta": [spec.to_json_obj() for spec in ham.eta],
        "V": ham.V.to_json_obj(),
        "lambda": ham.lam,
    }


def hamiltonian_from_json(obj: dict) -> MechanicalHamiltonian:
    d = int(obj["d"])
    eta = tuple(FourierSpec.from_json_obj(comp, 1) for comp in obj.get("eta", [[]] * d))
    if len(eta) != d:
        raise ValueError(f"expected {d} eta components, got {len(eta)}")
    V = FourierSpec.from_json_obj(obj["V"], d + 1)
    return MechanicalHamiltonian(d=d, eta=eta, V=V, lam=float(obj.get("lambda", 1.0)))
