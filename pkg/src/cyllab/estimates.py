"""Interior decay diagnostics for solved cylinders.

Everything here verifies, at desk scale, the chain that turns the equation
into exponential decay of the nonconstant part: the center-of-mass ODE, the
convexity-type differential inequality for the deviation energy gamma, the
windowed W^{1,2} and pointwise C^k decay fits, the bump-function convolution
step linking the two, and an empirical probe of the interior elliptic
constant.

Constants are pinned analytically: the sharp circle Poincare constant is
``c_pc = 1/(4 pi^2)``, giving ``delta = (4 c_pc)^{-1/2} = pi`` for the
differential inequality and ``c = delta / 2 = pi / 2`` for the pointwise
decay rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from cyllab.cylinder import (
    SpectralField,
    Window,
    diff_s,
    sobolev_window_norm_sq,
    window_sobolev_sq,
)
from cyllab.errors import InapplicableError, PreconditionError
from cyllab.solver import dealias_apply
from cyllab.vfield import VectorFieldModel

C_PC = 1.0 / (4.0 * np.pi ** 2)
DELTA = np.pi
DECAY_RATE = np.pi / 2.0

# Ramp width of the bump's raised-cosine shoulders.  A pure cosine ramp of
# width w has ||rho''||_L1 = 2*pi/w; this width places the measured norm at
# about 39.6, inside the documented budget [4 pi^2, 40], while keeping the
# plateau [-0.5, 0.5] and the support [-1, 1].
BUMP_RAMP_WIDTH = 2.0 * np.pi / 39.6


def two_sided_envelope(s: np.ndarray, r: float, rate: float) -> np.ndarray:
    """``exp(-rate (r+s)) + exp(-rate (r-s))``: the comparison envelope."""
    return np.exp(-rate * (r + s)) + np.exp(-rate * (r - s))


# -- center of mass ----------------------------------------------------------

@dataclass
class CenterOfMassCurve:
    """Circle averages q(s) and their discrete s-derivative."""

    s_grid: np.ndarray
    q: np.ndarray
    q_prime: np.ndarray

    def sup_norm(self) -> float:
        return float(np.max(np.sqrt(np.sum(np.abs(self.q) ** 2, axis=1))))


def center_of_mass(u: SpectralField) -> CenterOfMassCurve:
    """q(s) = zero Fourier mode of u(s, .) (exact circle average)."""
    q = u.zero_mode()
    qp = diff_s(q, u.cylinder.h, 1)
    return CenterOfMassCurve(u.cylinder.s_grid, q, qp)


def com_residual(u: SpectralField, model: VectorFieldModel, eps: float) -> np.ndarray:
    """Pointwise defect ``|q'(s) - eps * avg_t V(u(s, .))|``.

    The circle average of V(u) is computed pseudo-spectrally, so for a field
    solving the equation this residual is limited only by the PDE tolerance
    and the s-stencil error of q'.
    """
    com = center_of_mass(u)
    v_avg = dealias_apply(model, u).zero_mode()
    defect = com.q_prime - eps * v_avg
    return np.sqrt(np.sum(np.abs(defect) ** 2, axis=1))


# -- gamma and the differential inequality -----------------------------------

@dataclass
class GammaProfile:
    """gamma(s) = half the squared circle-L2 distance of u from its average.

    ``gamma`` is the exact Parseval sum over nonzero modes; ``gamma_dd`` is
    the 5-point 4th-order discrete second derivative; ``ds_sq``/``dt_sq``
    are the squared circle norms of the s- and t-derivatives of u - q.
    """

    s_grid: np.ndarray
    h: float
    half_length: float
    gamma: np.ndarray
    gamma_dd: np.ndarray
    ds_sq: np.ndarray
    dt_sq: np.ndarray

    @property
    def rhs(self) -> np.ndarray:
        return 0.75 * self.ds_sq + 0.25 * self.dt_sq

    def interior(self) -> np.ndarray:
        r = self.half_length
        return (self.s_grid >= -r - 1e-12) & (self.s_grid <= r + 1e-12)

    def band(self, lo: float, hi: float) -> np.ndarray:
        return (self.s_grid >= lo - 1e-12) & (self.s_grid <= hi + 1e-12)


def gamma_profile(u: SpectralField) -> GammaProfile:
    w = u.without_zero_mode()
    gamma = 0.5 * w.circle_norm_sq()
    return GammaProfile(
        s_grid=u.cylinder.s_grid,
        h=u.cylinder.h,
        half_length=u.cylinder.half_length,
        gamma=gamma,
        gamma_dd=diff_s(gamma, u.cylinder.h, 2),
        ds_sq=w.circle_norm_sq(ds_order=1),
        dt_sq=w.circle_norm_sq(dt_order=1),
    )


def stencil_budget(p: GammaProfile) -> float:
    """Error budget of the discrete gamma'': ``(h^4/90) max |gamma^(6)|``,
    with the sixth derivative itself estimated by composed stencils."""
    d6 = diff_s(diff_s(p.gamma_dd, p.h, 2), p.h, 2)
    mask = p.interior()
    return float(p.h ** 4 / 90.0 * np.max(np.abs(d6[mask])))


def default_slack(p: GammaProfile) -> float:
    return 1e-6 * float(np.max(p.gamma)) + stencil_budget(p)


def applicability_bound(model: VectorFieldModel, eps: float) -> tuple[float, float]:
    """Operational largeness condition for the differential inequality.

    The mean-value matrix and its derivatives are controlled by the C^1/C^2
    bounds of the field model; ``eps * (c1 + c2)`` must stay below
    ``min(0.25 / c_pc, 0.25) = 0.25``.
    """
    c2_est = model.reported_c1_bound + model.reported_c2_bound
    return abs(eps) * c2_est, min(0.25 / C_PC, 0.25)


def check_diff_inequality(p: GammaProfile, slack: float,
                          model: VectorFieldModel | None = None,
                          eps: float | None = None) -> tuple[float, bool]:
    """Worst interior margin of ``gamma'' - delta^2 gamma - rhs`` and a pass flag.

    When (model, eps) are supplied the largeness precondition is enforced
    first; violating it raises InapplicableError rather than reporting a
    failure (the inequality is simply not claimed there).
    """
    if model is not None and eps is not None:
        value, limit = applicability_bound(model, eps)
        if value > limit:
            raise InapplicableError(
                f"eps * C2 estimate {value:.3g} exceeds {limit:.3g}"
            )
    mask = p.interior()
    margins = p.gamma_dd - DELTA ** 2 * p.gamma - p.rhs
    margin = float(np.min(margins[mask]))
    return margin, margin >= -slack


# -- exponential decay fits ---------------------------------------------------

@dataclass
class DecayFit:
    """Smallest constant making ``quantity <= const * envelope`` hold.

    ``boundary_scale`` is the same ratio at the outermost admissible
    s-positions; a fit passes when it does not exceed ``kappa`` times that
    scale (decay is then genuinely driven by the boundary values).
    """

    fitted: float
    boundary_scale: float
    kappa: float
    rate: float

    @property
    def passed(self) -> bool:
        if self.fitted == 0.0:
            return True
        return self.fitted <= self.kappa * self.boundary_scale


def _envelope_fit(s: np.ndarray, values: np.ndarray, r: float, rate: float,
                  kappa: float) -> DecayFit:
    env = two_sided_envelope(s, r, rate)
    # the envelope can underflow mid-cylinder for very long necks; the
    # measured quantity underflows first, so 0/0 counts as a zero ratio
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(env > 0.0, values / np.maximum(env, 1e-300),
                          np.where(values > 0.0, np.inf, 0.0))
    fitted = float(np.max(ratios))
    boundary = float(max(ratios[0], ratios[-1]))
    return DecayFit(fitted=fitted, boundary_scale=boundary, kappa=kappa, rate=rate)


def exp_bound_check(p: GammaProfile, kappa: float = 4.0) -> DecayFit:
    """Fit ``gamma(s) <= c (e^{-delta(r+s)} + e^{-delta(r-s)})`` on [-r, r]."""
    mask = p.interior()
    return _envelope_fit(p.s_grid[mask], p.gamma[mask], p.half_length, DELTA, kappa)


def window_decay_check(u: SpectralField, kappa: float = 4.0,
                       centers_per_unit: int = 4) -> DecayFit:
    """Fit the windowed W^{1,2} energy of u - q against the delta-envelope.

    Windows are ``[s - 0.5, s + 0.5]`` for centers in ``[-r+1, r-1]``.
    """
    r = u.cylinder.half_length
    if r <= 1.0:
        raise PreconditionError("window decay needs half_length > 1")
    w = u.without_zero_mode()
    centers = np.linspace(-r + 1.0, r - 1.0,
                          max(2, int(2 * (r - 1) * centers_per_unit) + 1))
    values = np.array([
        window_sobolev_sq(w, Window(c, 0.5), include_derivs=True) for c in centers
    ])
    return _envelope_fit(centers, values, r, DELTA, kappa)


def pointwise_sup_profile(u: SpectralField, k: int, t_oversample: int = 4) -> np.ndarray:
    """Per-sample sup over t of the Frobenius norm of the k-th derivative
    of u - q, shape (S,)."""
    cyl = u.cylinder
    w = u.without_zero_mode()
    P = max(t_oversample * cyl.t_modes, 64)
    total = None
    for a in range(k + 1):
        b = k - a
        arr = w.coeffs
        if b:
            arr = arr * ((1j * w.mode_rates()) ** b)[None, :, None]
        for _ in range(a):
            arr = diff_s(arr, cyl.h, 1)
        part = SpectralField(cyl, arr).to_physical(P)
        sq = math.comb(k, a) * np.sum(np.abs(part) ** 2, axis=2)
        total = sq if total is None else total + sq
    return np.sqrt(np.max(total, axis=1))


def pointwise_decay_check(u: SpectralField, k: int, kappa: float = 4.0) -> DecayFit:
    """Fit ``sup_t |D^k (u - q)| <= M_k`` times the (pi/2)-envelope on
    ``[-r+1, r-1]`` (k = 0 or 1 are the documented orders)."""
    if k not in (0, 1):
        raise PreconditionError("pointwise decay is checked for k in {0, 1}")
    cyl = u.cylinder
    r = cyl.half_length
    if r <= 1.0:
        raise PreconditionError("pointwise decay needs half_length > 1")
    profile = pointwise_sup_profile(u, k)
    mask = (cyl.s_grid >= -r + 1.0 - 1e-12) & (cyl.s_grid <= r - 1.0 + 1e-12)
    return _envelope_fit(cyl.s_grid[mask], profile[mask], r, DECAY_RATE, kappa)


# -- bump function ------------------------------------------------------------

@dataclass
class BumpFunction:
    """Plateau-one bump: 1 on [-0.5, 0.5], raised-cosine shoulders of width
    ``ramp_width``, supported in [-1, 1].

    ``l1`` and ``dd_l1`` are the measured L^1 norms of rho and rho''.
    """

    ramp_width: float
    l1: float = field(init=False)
    dd_l1: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.ramp_width <= 0.5:
            raise PreconditionError("ramp width must lie in (0, 0.5]")
        x = np.linspace(-1.0, 1.0, 200001)
        self.l1 = float(np.trapezoid(self.rho(x), x))
        self.dd_l1 = float(np.trapezoid(np.abs(self.rho_dd(x)), x))

    def rho(self, x) -> np.ndarray:
        x = np.abs(np.asarray(x, dtype=float))
        w = self.ramp_width
        out = np.zeros_like(x)
        out[x <= 0.5] = 1.0
        ramp = (x > 0.5) & (x < 0.5 + w)
        y = (0.5 + w - x[ramp]) / w  # 1 at the plateau edge, 0 at the support edge
        out[ramp] = 0.5 - 0.5 * np.cos(np.pi * y)
        return out

    def rho_dd(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        w = self.ramp_width
        out = np.zeros_like(ax)
        ramp = (ax > 0.5) & (ax < 0.5 + w)
        y = (0.5 + w - ax[ramp]) / w
        out[ramp] = -0.5 * (np.pi / w) ** 2 * np.cos(np.pi * y)
        return out

    def sampled(self, n: int = 2001) -> tuple[np.ndarray, np.ndarray]:
        """Samples of rho on [-1, 1] (for plotting / serialization)."""
        x = np.linspace(-1.0, 1.0, n)
        return x, self.rho(x)


def build_bump(ramp_width: float = BUMP_RAMP_WIDTH) -> BumpFunction:
    return BumpFunction(ramp_width)


def convolution_window_check(p: GammaProfile, bump: BumpFunction,
                             slack: float | None = None) -> dict:
    """Convolve the verified inequality with the bump and close the chain.

    Checks (a) ``(rho'' * gamma) - delta^2 (rho * gamma) >= rho * rhs``
    pointwise on ``[-r+1, r-1]`` (computed as ``rho * gamma''`` via the
    convolution-derivative identity, which sidesteps the jump
    discontinuities of rho''), and (b) that the derived window constant
    ``C = 6 (40 + 2 delta^2) c`` dominates the measured W^{1,2} windows.
    """
    if p.half_length <= 1.0:
        raise PreconditionError("convolution check needs half_length > 1")
    h = p.h
    half = int(np.floor(1.0 / h + 1e-9))
    offsets = h * np.arange(-half, half + 1)
    kernel = bump.rho(offsets)

    def conv(arr: np.ndarray) -> np.ndarray:
        return h * np.convolve(arr, kernel, mode="same")

    lhs = conv(p.gamma_dd) - DELTA ** 2 * conv(p.gamma)
    rhs = 0.75 * conv(p.ds_sq) + 0.25 * conv(p.dt_sq)
    r = p.half_length
    mask = p.band(-r + 1.0, r - 1.0)
    margins = lhs - rhs
    margin = float(np.min(margins[mask]))
    if slack is None:
        slack = bump.l1 * default_slack(p) + 4.0 * h ** 2 * float(np.max(np.abs(p.gamma_dd)))
    conv_ok = margin >= -slack

    fit = exp_bound_check(p)
    bound_constant = 6.0 * (40.0 + 2.0 * DELTA ** 2) * fit.fitted
    s = p.s_grid
    window_sq = np.array([
        float(np.trapezoid((2.0 * p.gamma + p.ds_sq + p.dt_sq)[
            (s >= c - 0.5 - 1e-12) & (s <= c + 0.5 + 1e-12)], dx=h))
        for c in s[mask]
    ])
    envelope = two_sided_envelope(s[mask], r, DELTA)
    windows_ok = bool(np.all(window_sq <= bound_constant * envelope * (1 + 1e-9) + 1e-300))
    return {
        "convolved_margin": margin,
        "convolved_ok": conv_ok,
        "slack": slack,
        "window_bound_constant": bound_constant,
        "windows_dominated": windows_ok,
        "passed": conv_ok and windows_ok,
    }


# -- elliptic constant probe ---------------------------------------------------

def elliptic_constant_probe(corpus: list[SpectralField], k: int, delta: float,
                            centers: int = 9) -> float:
    """Empirical lower bound on the interior elliptic constant.

    For each field and each admissible window center s the ratio
    ``||u||_{k+1, small} / (||dbar u||_{k, big} + ||u||_{k, big})`` is
    computed, with the small window of half-width delta and the big one of
    half-width 2 delta; the probe returns the max.
    """
    from cyllab.cylinder import apply_delbar

    if not corpus:
        raise PreconditionError("corpus must be nonempty")
    best = 0.0
    for u in corpus:
        cyl = u.cylinder
        lo = cyl.s_min + 2.0 * delta
        hi = cyl.s_max - 2.0 * delta
        if lo >= hi:
            raise PreconditionError("windows do not fit the domain")
        du = apply_delbar(u)
        for c in np.linspace(lo, hi, centers):
            lhs = np.sqrt(sobolev_window_norm_sq(u, Window(c, delta), k + 1))
            rhs = (np.sqrt(sobolev_window_norm_sq(du, Window(c, 2 * delta), k))
                   + np.sqrt(sobolev_window_norm_sq(u, Window(c, 2 * delta), k)))
            if rhs == 0.0:
                continue  # forces lhs = 0 as well; ratio contributes nothing
            best = max(best, float(lhs / rhs))
    return best


# -- constants container --------------------------------------------------------

@dataclass
class EstimateConstants:
    """Analytic constants plus the measured/fitted values of one run."""

    c_pc: float = C_PC
    delta: float = DELTA
    c: float = DECAY_RATE
    bump_l1: float = 0.0
    bump_dd_l1: float = 0.0
    fitted: dict = field(default_factory=dict)

    def validate(self):
        if abs(self.delta ** 2 - 1.0 / (4.0 * self.c_pc)) > 1e-12:
            raise PreconditionError("delta^2 must equal (4 c_pc)^-1")
        if abs(self.c - self.delta / 2.0) > 1e-12:
            raise PreconditionError("c must equal delta / 2")
        if self.bump_l1 > 2.0 or self.bump_dd_l1 > 40.0:
            raise PreconditionError("bump norms exceed their budgets")
        return True
