"""Linear and nonlinear solvers for ``(d_s + J0 d_t) u = g`` on a cylinder.

Per Fourier mode k the equation is the first-order ODE
``c_k'(s) - 2 pi k c_k(s) = g_k(s)``.  Full Dirichlet data on both circles
would overdetermine it, so boundary data is split by frequency: modes
k <= 0 are prescribed on the left circle, modes k > 0 on the right.  Each
mode is then marched in its decaying direction with the exact homogeneous
propagator ``exp(-2 pi |k| h)`` per step and an exponentially-weighted cubic
quadrature for the forcing, so no growing exponential ever appears in the
arithmetic and the conditioning is O(1) uniformly in r.

The nonlinear equation ``dbar u = eps V(u)`` is solved by the fixed point
``u <- H + Linv(eps V(u))`` (H carries the boundary data) with a safeguarded
secant extrapolation; V is evaluated pseudo-spectrally on a doubled t-grid
and truncated back to the band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from cyllab import kernels
from cyllab.cylinder import Cylinder, SpectralField, TWO_PI, apply_delbar
from cyllab.errors import (
    BallViolationError,
    BandError,
    NoContractionError,
    NonConvergenceError,
    PreconditionError,
)
from cyllab.vfield import (
    VectorFieldModel,
    VectorFieldSequence,
    complex_to_real,
    real_to_complex,
)

_NODE_SETS = {
    "first": np.array([0.0, 1.0, 2.0, 3.0]),
    "interior": np.array([-1.0, 0.0, 1.0, 2.0]),
    "last": np.array([-2.0, -1.0, 0.0, 1.0]),
}
_NODE_INV = {name: np.linalg.inv(np.vander(nodes, 4, increasing=True).T)
             for name, nodes in _NODE_SETS.items()}


def _exp_moments(a: np.ndarray) -> np.ndarray:
    """``I_i(a) = int_0^1 e^{a(1-x)} x^i dx`` for a <= 0, columns i = 0..3.

    Series for small |a| (the recurrence cancels catastrophically there),
    stable upward recurrence otherwise; both paths are accurate to ~1e-15.
    """
    a = np.asarray(a, dtype=float)
    out = np.empty((a.size, 4))
    small = np.abs(a) <= 0.5
    if np.any(small):
        asm = a[small]
        for i in range(4):
            acc = np.zeros_like(asm)
            power = np.ones_like(asm)
            fact_i = math.factorial(i)
            for m in range(22):
                acc += power * (fact_i / math.factorial(m + i + 1))
                power = power * asm
            out[small, i] = acc
    big = ~small
    if np.any(big):
        ab = a[big]
        cur = np.expm1(ab) / ab
        out[big, 0] = cur
        for i in range(1, 4):
            cur = (i * cur - 1.0) / ab
            out[big, i] = cur
    return out


def _quad_weights(a: np.ndarray, h: float) -> dict:
    """ETD quadrature weights per mode and step type, each (M, 4).

    Exact for cubic forcing profiles; the homogeneous factor is exact for
    any forcing.
    """
    I = _exp_moments(a)
    return {name: h * (I @ inv.T) for name, inv in _NODE_INV.items()}


@dataclass
class SpectralBoundaryData:
    """Mode-split boundary data: k <= 0 at s = -r-1, k > 0 at s = +r+1.

    Values are C^n vectors per mode; missing modes default to zero.
    """

    left: dict = field(default_factory=dict)
    right: dict = field(default_factory=dict)
    ball_safe: bool = False

    def __post_init__(self):
        for k in self.left:
            if k > 0:
                raise PreconditionError(f"mode {k} > 0 belongs to the right circle")
        for k in self.right:
            if k <= 0:
                raise PreconditionError(f"mode {k} <= 0 belongs to the left circle")
        self.left = {int(k): np.atleast_1d(np.asarray(v, dtype=np.complex128))
                     for k, v in self.left.items()}
        self.right = {int(k): np.atleast_1d(np.asarray(v, dtype=np.complex128))
                      for k, v in self.right.items()}

    def ambient_dim(self) -> int:
        for v in list(self.left.values()) + list(self.right.values()):
            return v.shape[0]
        return 1

    def scaled(self, factor: float) -> "SpectralBoundaryData":
        return SpectralBoundaryData(
            {k: factor * v for k, v in self.left.items()},
            {k: factor * v for k, v in self.right.items()},
            ball_safe=self.ball_safe,
        )

    def validate_band(self, cyl: Cylinder):
        band = set(int(k) for k in cyl.modes)
        for k in list(self.left) + list(self.right):
            if k not in band:
                raise BandError(f"boundary mode {k} outside the grid band")
        n = self.ambient_dim()
        for v in list(self.left.values()) + list(self.right.values()):
            if v.shape != (cyl.ambient_dim,) or n != cyl.ambient_dim:
                raise PreconditionError("boundary vectors must have length ambient_dim")

    def to_json_list(self) -> list:
        rows = []
        for side, table in (("left", self.left), ("right", self.right)):
            for k in sorted(table):
                rows.append({
                    "side": side,
                    "k": k,
                    "re": table[k].real.tolist(),
                    "im": table[k].imag.tolist(),
                })
        return rows

    @classmethod
    def from_json_list(cls, rows: list) -> "SpectralBoundaryData":
        left, right = {}, {}
        for row in rows:
            vec = np.asarray(row["re"], dtype=float) + 1j * np.asarray(row["im"], dtype=float)
            k = int(row["k"])
            (left if row["side"] == "left" else right)[k] = vec
        return cls(left, right)


@dataclass
class SolveReport:
    """Outcome of a nonlinear solve.

    ``final_residual`` is the measured sup norm of ``dbar u - eps V(u)`` on
    the collocation grid; it cannot drop below ``residual_floor``, the
    s-stencil measurement error on this grid.  Convergence control uses
    ``fixed_point_residual`` (sup distance between consecutive iterates),
    which is floor-free.
    """

    iterations: int
    final_residual: float
    ball_violation: float
    fixed_point_residual: float
    residual_floor: float
    converged: bool
    tol: float
    history: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "ball_violation": self.ball_violation,
            "fixed_point_residual": self.fixed_point_residual,
            "residual_floor": self.residual_floor,
            "converged": self.converged,
            "tol": self.tol,
        }


def solve_linear(cyl: Cylinder, bdata: SpectralBoundaryData,
                 f: SpectralField | None = None) -> SpectralField:
    """Solve ``dbar u = f`` with mode-split boundary data.

    Boundary coefficients are reproduced exactly; the interior solution is
    exact for homogeneous modes and 4th-order accurate in h for the forced
    part.
    """
    bdata.validate_band(cyl)
    if f is not None and f.cylinder != cyl:
        raise PreconditionError("forcing lives on a different grid")
    S, T, n = cyl.s_samples, cyl.t_modes, cyl.ambient_dim
    h = cyl.h
    modes = cyl.modes
    out = np.zeros((S, T, n), dtype=np.complex128)

    for sel, table, sign, flip in (
        (modes <= 0, bdata.left, +1.0, False),
        (modes > 0, bdata.right, -1.0, True),
    ):
        idx = np.nonzero(sel)[0]
        if idx.size == 0:
            continue
        k = modes[idx]
        a = -TWO_PI * np.abs(k).astype(float) * h
        E = np.exp(a)
        u0 = np.zeros((idx.size, n), dtype=np.complex128)
        for pos, kk in enumerate(k):
            if int(kk) in table:
                u0[pos] = table[int(kk)]
        if f is None:
            res = kernels.propagate_homogeneous(E, S, u0)
        else:
            rhs = np.ascontiguousarray(f.coeffs[:, idx, :])
            if flip:
                rhs = np.ascontiguousarray(rhs[::-1])
            w = _quad_weights(a, h)
            res = kernels.propagate_first_order(
                E, w["first"], w["interior"], w["last"], rhs, u0, sign
            )
        if flip:
            res = res[::-1]
        out[:, idx, :] = res
    return SpectralField(cyl, out)


def dealias_apply(model: VectorFieldModel, u: SpectralField,
                  oversample: int = 2) -> SpectralField:
    """Evaluate V(u) pointwise on an oversampled t-grid, truncate to band.

    The doubled grid removes aliasing for quadratic nonlinearities exactly;
    higher-degree models are truncated (documented approximation).
    """
    cyl = u.cylinder
    P = max(oversample * cyl.t_modes, cyl.t_modes)
    vals = u.to_physical(P)
    w = real_to_complex(model.eval(complex_to_real(vals)))
    return SpectralField.from_physical(cyl, w)


def _sup_phys(fld: SpectralField, oversample: int = 2) -> float:
    vals = fld.to_physical(max(oversample * fld.cylinder.t_modes, 16))
    return float(np.sqrt(np.max(np.sum(np.abs(vals) ** 2, axis=2))))


def equation_residual(u: SpectralField, model: VectorFieldModel, eps: float) -> float:
    """Sup norm of ``dbar u - eps V(u)`` on the doubled collocation grid."""
    cyl = u.cylinder
    P = 2 * cyl.t_modes
    lhs = apply_delbar(u).to_physical(P)
    rhs = eps * real_to_complex(model.eval(complex_to_real(u.to_physical(P))))
    return float(np.sqrt(np.max(np.sum(np.abs(lhs - rhs) ** 2, axis=2))))


def contraction_estimate(cyl: Cylinder, model: VectorFieldModel, eps: float) -> float:
    """eps * C1 * |domain|: the zero mode dominates the solve's gain."""
    return abs(eps) * model.reported_c1_bound * (cyl.s_max - cyl.s_min)


def solve_nonlinear(cyl: Cylinder, bdata: SpectralBoundaryData,
                    model: VectorFieldModel, eps: float, tol: float = 1e-10,
                    max_iter: int = 200, accelerate: bool = True
                    ) -> tuple[SpectralField, SolveReport]:
    """Fixed-point solve of ``dbar u = eps V(u)`` preserving boundary data.

    Raises NoContractionError when ``eps * C1 * (2r+2) >= 0.9`` and
    NonConvergenceError when the iteration cap is hit.  The secant
    extrapolation is accepted only when it strictly reduces the fixed-point
    residual, so the accepted residual history is monotone after the first
    step; plain iteration is the fallback.
    """
    if model.dim != 2 * cyl.ambient_dim:
        raise PreconditionError(
            f"model dimension {model.dim} != 2 * ambient_dim {cyl.ambient_dim}"
        )
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    H = solve_linear(cyl, bdata)
    if bdata.ball_safe and H.sup_norm() > 1.0 + 1e-12:
        raise BallViolationError(
            "boundary data flagged ball_safe but its homogeneous solution "
            f"has sup {H.sup_norm():.6g} > 1"
        )
    floor = _sup_phys(apply_delbar(H))

    def finish(u, iterations, fp_res, history, converged):
        report = SolveReport(
            iterations=iterations,
            final_residual=equation_residual(u, model, eps),
            ball_violation=max(0.0, u.sup_norm() - 1.0),
            fixed_point_residual=fp_res,
            residual_floor=floor,
            converged=converged,
            tol=tol,
            history=history,
        )
        return u, report

    if eps == 0.0:
        return finish(H, 1, 0.0, [0.0], True)

    kappa = contraction_estimate(cyl, model, eps)
    if kappa >= 0.9:
        raise NoContractionError(
            f"estimated contraction factor {kappa:.3g} >= 0.9; "
            "reduce eps or the vector field's C1 bound"
        )

    empty = SpectralBoundaryData()

    def apply_map(u: SpectralField) -> SpectralField:
        g = dealias_apply(model, u).scaled(eps)
        return H + solve_linear(cyl, empty, g)

    u = H
    phi = apply_map(u)
    iterations = 1
    history: list[float] = []
    prev_delta = None
    while iterations <= max_iter:
        delta = phi - u
        fp_res = _sup_phys(delta)
        history.append(fp_res)
        if fp_res <= tol:
            return finish(phi, iterations, fp_res, history, True)
        if accelerate and prev_delta is not None:
            den = float(np.sum(np.abs(prev_delta.coeffs) ** 2))
            num = float(np.real(np.sum(np.conj(prev_delta.coeffs) * delta.coeffs)))
            rho = num / den if den > 0 else 0.0
            if 1e-12 < rho < 0.95:
                u_acc = phi + delta.scaled(rho / (1.0 - rho))
                phi_acc = apply_map(u_acc)
                iterations += 1
                acc_res = _sup_phys(phi_acc - u_acc)
                if acc_res < fp_res:
                    u, phi = u_acc, phi_acc
                    history[-1] = acc_res
                    prev_delta = None
                    continue
        prev_delta = delta
        u = phi
        phi = apply_map(u)
        iterations += 1
    raise NonConvergenceError(
        f"no convergence in {max_iter} iterations; last residual {history[-1]:.3g}"
    )


def make_instance(r: float, eps: float, bdata: SpectralBoundaryData,
                  sequence: VectorFieldSequence, index: int, *,
                  samples_per_unit: int = 64, t_modes: int = 16,
                  tol: float = 1e-10, accelerate: bool = True
                  ) -> tuple[SpectralField, SolveReport]:
    """Produce one family member: solve and enforce the unit-ball constraint."""
    n = bdata.ambient_dim()
    S = int(round(samples_per_unit * (2 * r + 2))) + 1
    cyl = Cylinder(half_length=r, s_samples=S, t_modes=t_modes, ambient_dim=n)
    model = sequence.model_at(index)
    u, report = solve_nonlinear(cyl, bdata, model, eps, tol=tol, accelerate=accelerate)
    if report.ball_violation > 1e-12:
        raise BallViolationError(
            f"solution leaves the unit ball by {report.ball_violation:.3g}"
        )
    u.ball_constrained = True
    return u, report
