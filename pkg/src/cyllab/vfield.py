"""Vector-field models on the closed unit ball of R^{2n}.

Models are immutable and evaluate vectorized over trailing point batches;
evaluation is pure and thread-safe.  Each model reports C^0/C^1/C^2 bounds
valid on the ball (exact for the polynomial kinds, sampled with a safety
margin for the generic table kind).  The classical RK4 integrator below is
the package's independent flow-line oracle and is deliberately decoupled
from the PDE machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from cyllab.errors import OutOfBallError, PreconditionError

BALL_TOL = 1e-9


def complex_to_real(z: np.ndarray) -> np.ndarray:
    """C^n -> R^{2n}, interleaved (Re z_1, Im z_1, Re z_2, ...)."""
    z = np.asarray(z, dtype=np.complex128)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],), dtype=np.float64)
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def real_to_complex(x: np.ndarray) -> np.ndarray:
    """R^{2n} -> C^n, inverse of :func:`complex_to_real`."""
    x = np.asarray(x, dtype=np.float64)
    return x[..., 0::2] + 1j * x[..., 1::2]


class VectorFieldModel:
    """Base class; subclasses implement ``eval`` and ``jacobian``.

    ``eval``/``jacobian`` accept (..., dim) point batches and do not check
    the ball constraint themselves (the ODE integrator must be able to flag
    escaping trajectories instead of dying); use :func:`eval_v` /
    :func:`eval_dv` for the checked entry points.
    """

    dim: int
    reported_c0_bound: float
    reported_c1_bound: float
    reported_c2_bound: float

    def eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.eval(x)


def _require_in_ball(x: np.ndarray, tol: float = BALL_TOL):
    norms = np.sqrt(np.sum(np.asarray(x, dtype=float) ** 2, axis=-1))
    worst = float(np.max(norms)) if norms.size else 0.0
    if worst > 1.0 + tol:
        raise OutOfBallError(f"|x| = {worst:.12g} exceeds the closed unit ball")


def eval_v(model: VectorFieldModel, x: np.ndarray) -> np.ndarray:
    """Ball-checked evaluation (tolerance 1e-9 beyond the unit sphere)."""
    _require_in_ball(x)
    return model.eval(np.asarray(x, dtype=float))


def eval_dv(model: VectorFieldModel, x: np.ndarray) -> np.ndarray:
    """Ball-checked Jacobian evaluation."""
    _require_in_ball(x)
    return model.jacobian(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class LinearField(VectorFieldModel):
    """V(x) = matrix @ x + offset."""

    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        b = np.atleast_1d(np.asarray(self.offset, dtype=float))
        if m.shape[0] != m.shape[1] or m.shape[0] != b.shape[0]:
            raise PreconditionError("matrix must be square and match the offset")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "offset", b)

    @classmethod
    def scalar(cls, scale: float, dim: int, offset=None) -> "LinearField":
        b = np.zeros(dim) if offset is None else np.asarray(offset, dtype=float)
        return cls(scale * np.eye(dim), b)

    @classmethod
    def constant(cls, w) -> "LinearField":
        w = np.asarray(w, dtype=float)
        return cls(np.zeros((w.size, w.size)), w)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def reported_c1_bound(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    @property
    def reported_c0_bound(self) -> float:
        return self.reported_c1_bound + float(np.linalg.norm(self.offset))

    @property
    def reported_c2_bound(self) -> float:
        return 0.0

    def eval(self, x):
        return np.asarray(x, dtype=float) @ self.matrix.T + self.offset

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.matrix, x.shape[:-1] + self.matrix.shape).copy()

    def to_config(self):
        return {"kind": "linear", "matrix": self.matrix.tolist(), "offset": self.offset.tolist()}


@dataclass(frozen=True)
class GradientField(VectorFieldModel):
    """Gradient of the quadratic form ``sum_i rates_i x_i^2 / 2``."""

    rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rates", np.atleast_1d(np.asarray(self.rates, dtype=float)))

    @property
    def dim(self) -> int:
        return self.rates.shape[0]

    @property
    def reported_c0_bound(self) -> float:
        return float(np.max(np.abs(self.rates)))

    @property
    def reported_c1_bound(self) -> float:
        return float(np.max(np.abs(self.rates)))

    @property
    def reported_c2_bound(self) -> float:
        return 0.0

    def eval(self, x):
        return np.asarray(x, dtype=float) * self.rates

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.diag(self.rates), x.shape[:-1] + (self.dim, self.dim)).copy()

    def to_config(self):
        return {"kind": "gradient", "rates": self.rates.tolist()}


@dataclass(frozen=True)
class RotationField(VectorFieldModel):
    """Per complex pair: (x, y) -> omega * (-y, x)."""

    omegas: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omegas", np.atleast_1d(np.asarray(self.omegas, dtype=float)))

    @property
    def dim(self) -> int:
        return 2 * self.omegas.shape[0]

    @property
    def reported_c0_bound(self) -> float:
        return float(np.max(np.abs(self.omegas)))

    @property
    def reported_c1_bound(self) -> float:
        return float(np.max(np.abs(self.omegas)))

    @property
    def reported_c2_bound(self) -> float:
        return 0.0

    def _matrix(self) -> np.ndarray:
        d = self.dim
        m = np.zeros((d, d))
        for p, w in enumerate(self.omegas):
            m[2 * p, 2 * p + 1] = -w
            m[2 * p + 1, 2 * p] = w
        return m

    def eval(self, x):
        return np.asarray(x, dtype=float) @ self._matrix().T

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        m = self._matrix()
        return np.broadcast_to(m, x.shape[:-1] + m.shape).copy()

    def to_config(self):
        return {"kind": "rotation", "omegas": self.omegas.tolist()}


@dataclass(frozen=True)
class MonomialField(VectorFieldModel):
    """User-tabulated polynomial field: a list of monomial terms.

    Each term is ``(coef, expo)`` with ``coef`` in R^d and integer exponents
    ``expo`` in N^d contributing ``coef * prod_j x_j^{expo_j}``.  Derivatives
    are exact, so the mean-value quadrature below is exact for these models.
    """

    dim_: int
    terms: tuple
    c0_override: float | None = None
    c1_override: float | None = None
    c2_override: float | None = None
    _bounds: tuple | None = field(default=None, repr=False, compare=False, init=False)

    def __post_init__(self):
        norm_terms = []
        for coef, expo in self.terms:
            coef = np.asarray(coef, dtype=float)
            expo = np.asarray(expo, dtype=int)
            if coef.shape != (self.dim_,) or expo.shape != (self.dim_,) or np.any(expo < 0):
                raise PreconditionError("each term needs coef, expo in R^dim x N^dim")
            norm_terms.append((coef, expo))
        object.__setattr__(self, "terms", tuple(norm_terms))

    @property
    def dim(self) -> int:
        return self.dim_

    def _sampled_bounds(self, n_points: int = 512, margin: float = 1.25):
        # computed lazily so derived term tables never trigger re-sampling
        if self._bounds is not None:
            return self._bounds
        rng = np.random.default_rng(20240)
        pts = sample_ball(self.dim_, n_points, rng)
        v = self.eval(pts)
        j = self.jacobian(pts)
        c0 = margin * float(np.max(np.sqrt(np.sum(v ** 2, axis=-1))))
        c1 = margin * float(np.max(np.linalg.norm(j, ord=2, axis=(-2, -1))))
        hess_sup = 0.0
        for m in range(self.dim_):
            jm = self._partial(m).jacobian(pts)
            hess_sup = max(hess_sup, float(np.max(np.abs(jm))))
        c2 = margin * hess_sup * self.dim_
        object.__setattr__(self, "_bounds", (c0, c1, c2))
        return self._bounds

    def _partial(self, m: int) -> "MonomialField":
        terms = []
        for coef, expo in self.terms:
            if expo[m] == 0:
                continue
            new_expo = expo.copy()
            new_expo[m] -= 1
            terms.append((coef * expo[m], new_expo))
        if not terms:
            terms = [(np.zeros(self.dim_), np.zeros(self.dim_, dtype=int))]
        return MonomialField(self.dim_, tuple((c.tolist(), e.tolist()) for c, e in terms))

    @property
    def reported_c0_bound(self) -> float:
        return self.c0_override if self.c0_override is not None else self._sampled_bounds()[0]

    @property
    def reported_c1_bound(self) -> float:
        return self.c1_override if self.c1_override is not None else self._sampled_bounds()[1]

    @property
    def reported_c2_bound(self) -> float:
        return self.c2_override if self.c2_override is not None else self._sampled_bounds()[2]

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for coef, expo in self.terms:
            mono = np.ones(x.shape[:-1])
            for j in range(self.dim_):
                if expo[j]:
                    mono = mono * x[..., j] ** expo[j]
            out = out + mono[..., None] * coef
        return out

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (self.dim_, self.dim_))
        for coef, expo in self.terms:
            for m in range(self.dim_):
                if expo[m] == 0:
                    continue
                mono = np.full(x.shape[:-1], float(expo[m]))
                for j in range(self.dim_):
                    e = expo[j] - (1 if j == m else 0)
                    if e:
                        mono = mono * x[..., j] ** e
                out[..., :, m] += mono[..., None] * coef
        return out

    def to_config(self):
        return {
            "kind": "table",
            "dim": self.dim_,
            "terms": [{"coef": c.tolist(), "expo": e.tolist()} for c, e in self.terms],
        }


@dataclass(frozen=True)
class SumField(VectorFieldModel):
    """``base + weight * bump`` (used to realize convergent sequences)."""

    base: VectorFieldModel
    bump: VectorFieldModel
    weight: float

    def __post_init__(self):
        if self.base.dim != self.bump.dim:
            raise PreconditionError("summands have different dimensions")

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def reported_c0_bound(self) -> float:
        return self.base.reported_c0_bound + abs(self.weight) * self.bump.reported_c0_bound

    @property
    def reported_c1_bound(self) -> float:
        return self.base.reported_c1_bound + abs(self.weight) * self.bump.reported_c1_bound

    @property
    def reported_c2_bound(self) -> float:
        return self.base.reported_c2_bound + abs(self.weight) * self.bump.reported_c2_bound

    def eval(self, x):
        return self.base.eval(x) + self.weight * self.bump.eval(x)

    def jacobian(self, x):
        return self.base.jacobian(x) + self.weight * self.bump.jacobian(x)

    def to_config(self):
        return {
            "kind": "sum",
            "base": self.base.to_config(),
            "bump": self.bump.to_config(),
            "weight": self.weight,
        }


def negated(model: VectorFieldModel) -> SumField:
    """-V, sharing V's bounds; used to run the flow oracle backwards."""
    zero = LinearField(np.zeros((model.dim, model.dim)), np.zeros(model.dim))
    return SumField(zero, model, -1.0)


@dataclass(frozen=True)
class VectorFieldSequence:
    """V_n = limit + a_n * perturbation with ``a_n = amplitude / n^power``.

    The affine schedule makes the C^k convergence rate explicit: all sampled
    distances to the limit scale exactly like a_n.
    """

    limit: VectorFieldModel
    perturbation: VectorFieldModel
    amplitude: float = 1.0
    power: float = 1.0

    def __post_init__(self):
        if self.limit.dim != self.perturbation.dim:
            raise PreconditionError("limit and perturbation dimensions differ")
        if self.power <= 0:
            raise PreconditionError("power must be positive for a_n -> 0")

    def coefficient(self, n: int) -> float:
        if n < 1:
            raise PreconditionError("sequence index starts at 1")
        return self.amplitude / float(n) ** self.power

    def model_at(self, n: int) -> VectorFieldModel:
        a = self.coefficient(n)
        if a == 0.0 or self.amplitude == 0.0:
            return self.limit
        return SumField(self.limit, self.perturbation, a)

    def c0_distance(self, n: int) -> float:
        return abs(self.coefficient(n)) * self.perturbation.reported_c0_bound

    def c1_distance(self, n: int) -> float:
        return abs(self.coefficient(n)) * self.perturbation.reported_c1_bound

    def to_config(self) -> dict:
        return {
            "limit": self.limit.to_config(),
            "perturbation": self.perturbation.to_config(),
            "amplitude": self.amplitude,
            "power": self.power,
        }


def model_from_config(cfg: dict) -> VectorFieldModel:
    kind = cfg.get("kind")
    if kind == "linear":
        if "matrix" in cfg:
            return LinearField(np.asarray(cfg["matrix"], dtype=float),
                               np.asarray(cfg.get("offset", np.zeros(len(cfg["matrix"]))), dtype=float))
        dim = int(cfg["dim"])
        return LinearField.scalar(float(cfg.get("scale", 0.0)), dim, cfg.get("offset"))
    if kind == "constant":
        return LinearField.constant(np.asarray(cfg["value"], dtype=float))
    if kind == "gradient":
        return GradientField(np.asarray(cfg["rates"], dtype=float))
    if kind == "rotation":
        return RotationField(np.asarray(cfg["omegas"], dtype=float))
    if kind == "table":
        terms = tuple((t["coef"], t["expo"]) for t in cfg["terms"])
        return MonomialField(int(cfg["dim"]), terms)
    if kind == "sum":
        return SumField(model_from_config(cfg["base"]), model_from_config(cfg["bump"]),
                        float(cfg["weight"]))
    raise PreconditionError(f"unknown vector-field kind {kind!r}")


def sequence_from_config(cfg: dict) -> VectorFieldSequence:
    limit = model_from_config(cfg["limit"])
    if "perturbation" in cfg:
        pert = model_from_config(cfg["perturbation"])
    else:
        pert = LinearField(np.zeros((limit.dim, limit.dim)), np.zeros(limit.dim))
    return VectorFieldSequence(limit, pert,
                               amplitude=float(cfg.get("amplitude", 1.0)),
                               power=float(cfg.get("power", 1.0)))


def sample_ball(dim: int, n_points: int, rng: np.random.Generator) -> np.ndarray:
    """Deterministic-for-a-seed uniform sample of the closed unit ball."""
    g = rng.standard_normal((n_points, dim))
    g /= np.maximum(np.sqrt(np.sum(g ** 2, axis=1))[:, None], 1e-300)
    radii = rng.uniform(0.0, 1.0, n_points) ** (1.0 / dim)
    pts = g * radii[:, None]
    pts[0] = 0.0
    if n_points > 1:
        pts[1] = np.eye(dim)[0]
    return pts


# -- flow-line oracle -------------------------------------------------------

@dataclass
class FlowSegment:
    """RK4 trajectory of x' = V(x); ``escaped`` flags |x| > 1 + 1e-9."""

    start: np.ndarray
    duration: float
    step: float
    taus: np.ndarray
    samples: np.ndarray
    escaped: bool

    def end(self) -> np.ndarray:
        return self.samples[-1]


def flow_ode(model: VectorFieldModel, start, duration: float, step: float) -> FlowSegment:
    """Classical fixed-step RK4 for ``x' = V(x)``; O(step^4) for smooth V.

    The step is rounded so an integer number of steps covers the duration.
    Leaving the closed ball is reported via the ``escaped`` flag, not an
    exception (the comparison logic downstream wants the trajectory anyway).
    """
    start = np.atleast_1d(np.asarray(start, dtype=float))
    _require_in_ball(start)
    if duration < 0:
        raise PreconditionError("duration must be nonnegative")
    if duration == 0.0:
        return FlowSegment(start, 0.0, step, np.zeros(1), start[None, :].copy(), False)
    if step <= 0 or step > duration + 1e-15:
        raise PreconditionError("need 0 < step <= duration")
    n_steps = max(1, int(round(duration / step)))
    dt = duration / n_steps
    samples = np.empty((n_steps + 1, start.shape[0]))
    samples[0] = start
    x = start.copy()
    for i in range(n_steps):
        k1 = model.eval(x)
        k2 = model.eval(x + 0.5 * dt * k1)
        k3 = model.eval(x + 0.5 * dt * k2)
        k4 = model.eval(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        samples[i + 1] = x
    taus = dt * np.arange(n_steps + 1)
    norms = np.sqrt(np.sum(samples ** 2, axis=1))
    escaped = bool(np.max(norms) > 1.0 + BALL_TOL)
    return FlowSegment(start, duration, dt, taus, samples, escaped)


# -- mean-value matrix ------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


def mean_value_matrix(model: VectorFieldModel, q, u_loop) -> np.ndarray:
    """``A(t) = int_0^1 DV((1-tau) q + tau u(t)) dtau`` by 8-node Gauss.

    Exact for the polynomial model kinds, so the factorization
    ``V(u(t)) - V(q) = A(t) (u(t) - q)`` holds to machine precision there.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    u_loop = np.atleast_2d(np.asarray(u_loop, dtype=float))
    _require_in_ball(q)
    _require_in_ball(u_loop)
    out = np.zeros((u_loop.shape[0], model.dim, model.dim))
    for tau, wt in zip(_GL_NODES, _GL_WEIGHTS):
        pts = (1.0 - tau) * q + tau * u_loop
        out += wt * model.jacobian(pts)
    return out
