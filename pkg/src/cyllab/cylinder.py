"""Discretized finite cylinders and band-limited fields on them.

A field u maps the cylinder ``[-r-1, r+1] x R/Z`` into C^n (identified with
R^{2n} once and for all; the complex structure acts as componentwise
multiplication by 1j).  Storage is pseudo-spectral: for every sample of the
non-periodic coordinate s we keep the Fourier coefficients of the loop
``t -> u(s, t)``.  All t-derivatives and t-integrals are therefore exact
(mode multiplication / Parseval); s-derivatives use 4th-order finite
differences (centered in the interior, one-sided on the outermost two rows).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from cyllab.errors import (
    BandError,
    InvalidGridError,
    OutOfWindowError,
    PreconditionError,
)

TWO_PI = 2.0 * np.pi

# 4th-order first-derivative rows (divide by h); F0/F1 are the one-sided
# stencils for the first two rows, mirrored with flipped sign for the last two.
_D1_C = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D1_F0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_D1_F1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0

# 4th-order second-derivative rows (divide by h^2).
_D2_C = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_D2_F0 = np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0
_D2_F1 = np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0]) / 12.0


def diff_s(values: np.ndarray, h: float, order: int = 1) -> np.ndarray:
    """Differentiate along axis 0 with 4th-order stencils.

    ``values`` has shape (S, ...); needs S >= 5 (order 1) or S >= 6 (order 2).
    """
    S = values.shape[0]
    if order == 1:
        if S < 5:
            raise InvalidGridError(f"first derivative needs >= 5 samples, got {S}")
        out = np.empty_like(values)
        out[2:-2] = (
            _D1_C[0] * values[:-4]
            + _D1_C[1] * values[1:-3]
            + _D1_C[3] * values[3:-1]
            + _D1_C[4] * values[4:]
        )
        head = values[:5]
        out[0] = np.tensordot(_D1_F0, head, axes=(0, 0))
        out[1] = np.tensordot(_D1_F1, head, axes=(0, 0))
        tail = values[-5:]
        out[-1] = -np.tensordot(_D1_F0[::-1], tail, axes=(0, 0))
        out[-2] = -np.tensordot(_D1_F1[::-1], tail, axes=(0, 0))
        return out / h
    if order == 2:
        if S < 6:
            raise InvalidGridError(f"second derivative needs >= 6 samples, got {S}")
        out = np.empty_like(values)
        out[2:-2] = (
            _D2_C[0] * values[:-4]
            + _D2_C[1] * values[1:-3]
            + _D2_C[2] * values[2:-2]
            + _D2_C[3] * values[3:-1]
            + _D2_C[4] * values[4:]
        )
        head = values[:6]
        out[0] = np.tensordot(_D2_F0, head, axes=(0, 0))
        out[1] = np.tensordot(_D2_F1, head, axes=(0, 0))
        tail = values[-6:]
        out[-1] = np.tensordot(_D2_F0[::-1], tail, axes=(0, 0))
        out[-2] = np.tensordot(_D2_F1[::-1], tail, axes=(0, 0))
        return out / (h * h)
    raise ValueError(f"unsupported derivative order {order}")


@dataclass(frozen=True)
class Cylinder:
    """Uniform grid on ``[-r-1, r+1] x R/Z`` with a T-mode frequency band.

    Attributes
    ----------
    half_length : float
        r; estimates are claimed on the interior ``[-r, r]``, the unit
        collars on both sides absorb boundary effects.
    s_samples : int
        Number of uniform s-samples including both endpoints.
    t_modes : int
        Even band size; modes run over ``-T/2+1 .. T/2``.
    ambient_dim : int
        n, the number of complex target components.
    """

    half_length: float
    s_samples: int
    t_modes: int
    ambient_dim: int = 1
    padding: float = 1.0

    def __post_init__(self):
        if self.half_length <= 0:
            raise InvalidGridError("half_length must be positive")
        if self.padding != 1.0:
            raise InvalidGridError("padding collar is fixed at 1")
        if self.t_modes < 2 or self.t_modes % 2 != 0:
            raise InvalidGridError("t_modes must be even and >= 2")
        if self.ambient_dim < 1:
            raise InvalidGridError("ambient_dim must be >= 1")
        if self.s_samples < 8:
            raise InvalidGridError("need at least 8 s-samples")
        if self.interior_sample_count() < 8:
            raise InvalidGridError(
                "interior window [-r, r] must contain at least 8 s-samples"
            )

    @property
    def s_min(self) -> float:
        return -self.half_length - self.padding

    @property
    def s_max(self) -> float:
        return self.half_length + self.padding

    @property
    def h(self) -> float:
        return (self.s_max - self.s_min) / (self.s_samples - 1)

    @property
    def s_grid(self) -> np.ndarray:
        return self.s_min + self.h * np.arange(self.s_samples)

    @property
    def modes(self) -> np.ndarray:
        T = self.t_modes
        return np.arange(-T // 2 + 1, T // 2 + 1)

    def interior_sample_count(self) -> int:
        s = self.s_grid
        r = self.half_length
        return int(np.count_nonzero((s >= -r - 1e-12) & (s <= r + 1e-12)))

    def index_range(self, lo: float, hi: float) -> tuple[int, int]:
        """Inclusive sample-index range covering [lo, hi], snapped inward."""
        if lo > hi:
            raise OutOfWindowError(f"empty window [{lo}, {hi}]")
        i0 = int(math.ceil((lo - self.s_min) / self.h - 1e-9))
        i1 = int(math.floor((hi - self.s_min) / self.h + 1e-9))
        i0 = max(i0, 0)
        i1 = min(i1, self.s_samples - 1)
        if i1 <= i0:
            raise OutOfWindowError(f"window [{lo}, {hi}] contains < 2 samples")
        return i0, i1

    def t_grid(self, n_points: int) -> np.ndarray:
        return np.arange(n_points) / n_points


@dataclass(frozen=True)
class Window:
    """Sub-cylinder ``[center_s - half_width, center_s + half_width] x R/Z``."""

    center_s: float
    half_width: float

    def __post_init__(self):
        if self.half_width <= 0:
            raise OutOfWindowError("half_width must be positive")

    @property
    def lo(self) -> float:
        return self.center_s - self.half_width

    @property
    def hi(self) -> float:
        return self.center_s + self.half_width

    def shifted(self, ds: float) -> "Window":
        return Window(self.center_s + ds, self.half_width)


def _check_window(cyl: Cylinder, w: Window, interior_only: bool):
    tol = 1e-9
    if interior_only:
        lo, hi = -cyl.half_length, cyl.half_length
        label = "interior [-r, r]"
    else:
        lo, hi = cyl.s_min, cyl.s_max
        label = "cylinder domain"
    if w.lo < lo - tol or w.hi > hi + tol:
        raise OutOfWindowError(
            f"window [{w.lo:g}, {w.hi:g}] not contained in {label}"
        )


@dataclass
class SpectralField:
    """Band-limited field: per-s-sample Fourier coefficients, shape (S, T, n).

    Fields are C^n-valued; no reality constraint is imposed on the
    coefficients.  Instances are treated as immutable after construction and
    are safe to share read-only across workers.
    """

    cylinder: Cylinder
    coeffs: np.ndarray
    ball_constrained: bool = False
    _spline: CubicSpline | None = field(default=None, repr=False, compare=False, init=False)

    def __post_init__(self):
        cyl = self.cylinder
        expected = (cyl.s_samples, cyl.t_modes, cyl.ambient_dim)
        self.coeffs = np.ascontiguousarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.shape != expected:
            raise InvalidGridError(
                f"coefficient table has shape {self.coeffs.shape}, expected {expected}"
            )
        if not np.all(np.isfinite(self.coeffs.view(np.float64))):
            raise InvalidGridError("coefficients must be finite")

    @classmethod
    def zero(cls, cyl: Cylinder) -> "SpectralField":
        return cls(cyl, np.zeros((cyl.s_samples, cyl.t_modes, cyl.ambient_dim), dtype=np.complex128))

    @classmethod
    def from_mode_profiles(cls, cyl: Cylinder, profiles: dict) -> "SpectralField":
        """Build a field from ``{mode k: profile}`` entries.

        Each profile is a callable of the s-grid or an array broadcastable to
        (S, n).
        """
        coeffs = np.zeros((cyl.s_samples, cyl.t_modes, cyl.ambient_dim), dtype=np.complex128)
        mode_list = list(cyl.modes)
        for k, prof in profiles.items():
            if k not in mode_list:
                raise BandError(f"mode {k} outside band {mode_list[0]}..{mode_list[-1]}")
            idx = mode_list.index(k)
            values = np.asarray(prof(cyl.s_grid) if callable(prof) else prof, dtype=np.complex128)
            if values.ndim <= 1:
                values = values.reshape(-1, 1) if values.ndim == 1 else values
            coeffs[:, idx, :] += np.broadcast_to(values, (cyl.s_samples, cyl.ambient_dim))
        return cls(cyl, coeffs)

    # -- transforms -------------------------------------------------------

    def to_physical(self, n_points: int | None = None) -> np.ndarray:
        """Values on the (S, P, n) collocation grid with t_j = j/P."""
        cyl = self.cylinder
        P = n_points or cyl.t_modes
        if P < cyl.t_modes:
            raise BandError("physical grid must have at least t_modes points")
        spectrum = np.zeros((cyl.s_samples, P, cyl.ambient_dim), dtype=np.complex128)
        slots = np.mod(cyl.modes, P)
        spectrum[:, slots, :] = self.coeffs
        return np.fft.ifft(spectrum, axis=1) * P

    @classmethod
    def from_physical(cls, cyl: Cylinder, values: np.ndarray) -> "SpectralField":
        """Project (S, P, n) collocation values onto the band (truncation)."""
        values = np.asarray(values, dtype=np.complex128)
        S, P, n = values.shape
        if (S, n) != (cyl.s_samples, cyl.ambient_dim):
            raise InvalidGridError("physical table does not match the grid")
        spectrum = np.fft.fft(values, axis=1) / P
        slots = np.mod(cyl.modes, P)
        return cls(cyl, spectrum[:, slots, :])

    def evaluate(self, s_values, t_values) -> np.ndarray:
        """Interpolated values on the mesh s_values x t_values -> (Ms, Mt, n).

        Exact (mode sum) in t; cubic spline per coefficient profile in s.
        """
        cyl = self.cylinder
        s_values = np.atleast_1d(np.asarray(s_values, dtype=float))
        t_values = np.atleast_1d(np.asarray(t_values, dtype=float))
        tol = 1e-9
        if s_values.min() < cyl.s_min - tol or s_values.max() > cyl.s_max + tol:
            raise OutOfWindowError("evaluation point outside the cylinder")
        if self._spline is None:
            object.__setattr__(self, "_spline", CubicSpline(cyl.s_grid, self.coeffs, axis=0))
        c = self._spline(np.clip(s_values, cyl.s_min, cyl.s_max))  # (Ms, T, n)
        waves = np.exp(TWO_PI * 1j * np.outer(t_values, cyl.modes))  # (Mt, T)
        return np.einsum("skn,mk->smn", c, waves)

    # -- calculus helpers --------------------------------------------------

    def mode_rates(self) -> np.ndarray:
        return TWO_PI * self.cylinder.modes

    def ds_coeffs(self, order: int = 1) -> np.ndarray:
        out = self.coeffs
        for _ in range(order):
            out = diff_s(out, self.cylinder.h, 1)
        return out

    def dt_coeffs(self, order: int = 1) -> np.ndarray:
        factor = (1j * self.mode_rates()) ** order
        return self.coeffs * factor[None, :, None]

    def zero_mode(self) -> np.ndarray:
        """Circle averages, shape (S, n)."""
        idx = list(self.cylinder.modes).index(0)
        return self.coeffs[:, idx, :].copy()

    def without_zero_mode(self) -> "SpectralField":
        c = self.coeffs.copy()
        idx = list(self.cylinder.modes).index(0)
        c[:, idx, :] = 0.0
        return SpectralField(self.cylinder, c)

    def circle_norm_sq(self, ds_order: int = 0, dt_order: int = 0) -> np.ndarray:
        """Per-sample squared loop norm of d_s^a d_t^b u, shape (S,).

        Exact in the coefficients (Parseval); s-derivatives via stencils.
        """
        arr = self.coeffs
        if dt_order:
            arr = arr * ((1j * self.mode_rates()) ** dt_order)[None, :, None]
        for _ in range(int(ds_order)):
            arr = diff_s(arr, self.cylinder.h, 1)
        return np.sum(np.abs(arr) ** 2, axis=(1, 2))

    def sup_norm(self, t_oversample: int = 4) -> float:
        """Sup of |u| over the sample grid (t oversampled)."""
        P = max(t_oversample * self.cylinder.t_modes, 64)
        vals = self.to_physical(P)
        return float(np.sqrt(np.max(np.sum(np.abs(vals) ** 2, axis=2))))

    def scaled(self, factor: complex) -> "SpectralField":
        return SpectralField(self.cylinder, self.coeffs * factor)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        if other.cylinder != self.cylinder:
            raise InvalidGridError("fields live on different grids")
        return SpectralField(self.cylinder, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        if other.cylinder != self.cylinder:
            raise InvalidGridError("fields live on different grids")
        return SpectralField(self.cylinder, self.coeffs - other.coeffs)


def apply_delbar(u: SpectralField) -> SpectralField:
    """Apply ``d_s + J0 d_t``; per mode k this is ``c_k'(s) - 2 pi k c_k(s)``.

    Exact in t; the s-derivative carries the documented 4th-order stencil
    error (one-sided on the outermost two rows).
    """
    if u.cylinder.s_samples < 5:
        raise InvalidGridError("apply_delbar needs at least 5 s-samples")
    rates = u.mode_rates()
    coeffs = u.ds_coeffs(1) - rates[None, :, None] * u.coeffs
    return SpectralField(u.cylinder, coeffs)


def sup_derivative_norm(u: SpectralField, k: int, region: Window,
                        t_oversample: int = 4) -> float:
    """Sup over the region of the Frobenius norm of the k-th total derivative.

    ``|D^k u|^2 = sum_{a+b=k} C(k,a) |d_s^a d_t^b u|^2`` (symmetric-tensor
    Frobenius norm; the reported constants depend on this choice of pointwise
    norm).  Only claimed on the interior ``[-r, r]``.
    """
    if k < 0 or k > 4:
        raise PreconditionError("derivative order must be within 0..4")
    _check_window(u.cylinder, region, interior_only=True)
    cyl = u.cylinder
    i0, i1 = cyl.index_range(region.lo, region.hi)
    P = max(t_oversample * cyl.t_modes, 64)
    total = None
    for a in range(k + 1):
        b = k - a
        arr = u.coeffs
        if b:
            arr = arr * ((1j * u.mode_rates()) ** b)[None, :, None]
        for _ in range(a):
            arr = diff_s(arr, cyl.h, 1)
        part = SpectralField(cyl, arr).to_physical(P)[i0:i1 + 1]
        sq = math.comb(k, a) * np.sum(np.abs(part) ** 2, axis=2)
        total = sq if total is None else total + sq
    return float(np.sqrt(np.max(total)))


def window_sobolev_sq(u: SpectralField, w: Window, include_derivs: bool = True) -> float:
    """``int_w ||u||^2 (+ ||d_s u||^2 + ||d_t u||^2) ds``.

    The circle norms are exact Parseval sums; the s-integral is the
    trapezoid rule on the samples inside the window (endpoints snapped
    inward to the grid).
    """
    _check_window(u.cylinder, w, interior_only=False)
    cyl = u.cylinder
    i0, i1 = cyl.index_range(w.lo, w.hi)
    integrand = u.circle_norm_sq()
    if include_derivs:
        integrand = integrand + u.circle_norm_sq(ds_order=1) + u.circle_norm_sq(dt_order=1)
    return float(np.trapezoid(integrand[i0:i1 + 1], dx=cyl.h))


def sobolev_window_norm_sq(u: SpectralField, w: Window, order: int) -> float:
    """Squared W^{order,2} norm over the window: ``sum_{a+b<=order}`` of the
    mixed-derivative L^2 integrals (each multi-index counted once)."""
    _check_window(u.cylinder, w, interior_only=False)
    cyl = u.cylinder
    i0, i1 = cyl.index_range(w.lo, w.hi)
    total = 0.0
    for a in range(order + 1):
        for b in range(order + 1 - a):
            profile = u.circle_norm_sq(ds_order=a, dt_order=b)
            total += float(np.trapezoid(profile[i0:i1 + 1], dx=cyl.h))
    return total


def poincare_check(modes: np.ndarray, coeffs: np.ndarray) -> tuple[float, float]:
    """Return ``(||f||^2, c_pc ||d_t f||^2)`` for a mean-zero loop.

    c_pc = 1/(4 pi^2) is the sharp constant; equality holds exactly when f
    is supported on modes +-1.
    """
    modes = np.asarray(modes)
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    if coeffs.ndim == 1:
        coeffs = coeffs[:, None]
    if coeffs.shape[0] != modes.shape[0]:
        raise PreconditionError("one coefficient row per mode is required")
    sq = np.sum(np.abs(coeffs) ** 2, axis=1)
    total = float(np.sum(sq))
    zero_rows = np.nonzero(modes == 0)[0]
    if zero_rows.size and sq[zero_rows[0]] > 1e-24 * max(total, 1.0):
        raise PreconditionError("loop must have zero mean (vanishing zero mode)")
    lhs = total
    rhs = float(np.sum((modes.astype(float) ** 2) * sq))
    return lhs, rhs


def random_band_limited_field(cyl: Cylinder, rng: np.random.Generator,
                              mode_decay: float = 0.7, s_waves: int = 4,
                              amplitude: float = 1.0) -> SpectralField:
    """Random smooth field for probe corpora: exponentially decaying mode
    amplitudes, low-frequency smooth s-profiles."""
    S, T, n = cyl.s_samples, cyl.t_modes, cyl.ambient_dim
    s = cyl.s_grid
    length = cyl.s_max - cyl.s_min
    coeffs = np.zeros((S, T, n), dtype=np.complex128)
    for idx, k in enumerate(cyl.modes):
        weight = amplitude * np.exp(-mode_decay * abs(k))
        for c in range(n):
            profile = np.zeros(S, dtype=np.complex128)
            for j in range(s_waves):
                amp = (rng.standard_normal() + 1j * rng.standard_normal()) / (1 + j * j)
                profile += amp * np.cos(j * np.pi * (s - cyl.s_min) / length)
            coeffs[:, idx, c] = weight * profile
    return SpectralField(cyl, coeffs)
