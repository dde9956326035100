"""Two-time Volterra kernels K(s, t) on the triangle 0 <= s <= t <= T.

A kernel is described by a :class:`KernelSpec`: either a convolution profile
K(s, t) = profile(t - s) or a general two-argument evaluator, together with
structural metadata (declared diagonal singularity exponent, boundedness,
optional derivative in the first argument).  The module integrates kernels
accurately up to the singular diagonal and certifies the integrability,
regularity and structural hypotheses that the simulation engine relies on.

Conventions
-----------
* All evaluators must be numpy-vectorized (accept and return ndarrays).
* A declared singularity exponent ``alpha`` means profile(u) ~ c * u**(-alpha)
  as u -> 0+.  Evaluating such a kernel exactly on the diagonal raises
  :class:`~volterra_lab.errors.SingularityError`; consumers integrate over
  cells instead.
* Pure power-law profiles carry the pair ``power_law=(c, alpha)`` and are
  integrated with the exact antiderivative rather than quadrature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate as _scipy_integrate

from .errors import (
    DivergentIntegral,
    DomainError,
    GridTooCoarse,
    MissingDerivative,
    QuadratureError,
    SingularityError,
)

__all__ = [
    "KernelSpec",
    "RegularityParams",
    "KernelCheckReport",
    "make_kernel",
    "kernel_eval",
    "cell_integral",
    "lq_norm",
    "check_base_integrability",
    "check_regularity",
    "check_structural",
    "dyadic_pair_grid",
]

# Quadrature parameters (module-wide; see cell_integral).
_QUAD_RTOL = 1e-10
_GAUSS_ORDER = 10
_GRADED_M0 = 64
_GRADED_M_MAX = 1 << 16

_REPORT_TOL = 1e-9  # slack on worst_ratio when a bound constant is supplied


# ---------------------------------------------------------------------------
# Kernel representation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    """Immutable description of a kernel on the triangle of the time square.

    Exactly one of ``profile`` (convolution form) or ``general_eval`` must be
    supplied.  For convolution kernels the two-argument evaluator is derived
    automatically, so ``general_eval(s, t) == profile(t - s)`` holds exactly.
    """

    horizon: float
    profile: Optional[Callable] = None
    general_eval: Optional[Callable] = None
    partial1: Optional[Callable] = None
    singularity_alpha: Optional[float] = None
    power_law: Optional[tuple] = None  # (c, alpha): profile(u) = c * u**-alpha
    bound: Optional[float] = None
    label: str = "kernel"

    def __post_init__(self):
        if self.horizon <= 0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        if (self.profile is None) == (self.general_eval is None):
            raise ValueError("supply exactly one of profile / general_eval")
        if self.power_law is not None and self.profile is None:
            raise ValueError("power_law metadata requires convolution form")
        if self.singularity_alpha is not None and self.singularity_alpha < 0:
            raise ValueError("singularity exponent must be >= 0")

    @property
    def is_convolution(self) -> bool:
        return self.profile is not None

    @property
    def is_singular(self) -> bool:
        return (self.singularity_alpha or 0.0) > 0.0

    def eval(self, s, t):
        return kernel_eval(self, s, t)

    def with_horizon(self, horizon: float) -> "KernelSpec":
        return replace(self, horizon=horizon)


@dataclass(frozen=True)
class RegularityParams:
    """Exponent pair (p, gamma) plus optional constant for the kernel
    increment bounds; p > 4 and gamma in (2/p, 1/2) are required."""

    p: float
    gamma: float
    C_p: Optional[float] = None

    def __post_init__(self):
        if not self.p > 4:
            raise ValueError(f"p must exceed 4, got {self.p}")
        if not (2.0 / self.p < self.gamma < 0.5):
            raise ValueError(
                f"gamma must lie in (2/p, 1/2) = ({2.0 / self.p:.6g}, 0.5), "
                f"got {self.gamma}"
            )
        if self.C_p is not None and self.C_p <= 0:
            raise ValueError("C_p must be positive when supplied")


@dataclass
class KernelCheckReport:
    """Grid certificate for one kernel assumption.

    worst_ratio is the maximum over tested points of measured quantity
    divided by claimed bound; the report passes iff that ratio stays at or
    below 1 (+ tolerance) and any scaling side conditions hold.
    """

    assumption_id: str
    passed: bool
    worst_ratio: float
    witness: Optional[tuple] = None
    grid_meta: dict = field(default_factory=dict)
    measured: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        from dataclasses import asdict

        out = asdict(self)
        out["schema"] = "volterra-lab/report.v1"
        return out

    def summary(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        return f"[{state}] {self.assumption_id} (worst_ratio={self.worst_ratio:.4g})"


# ---------------------------------------------------------------------------
# Built-in families
# ---------------------------------------------------------------------------

def make_kernel(family: str, horizon: float, **params) -> KernelSpec:
    """Construct a built-in kernel family.

    Families: "constant" (c), "fractional" (alpha), "exponential" (lam),
    "lipschitz_profile" (table of (u, value) rows, piecewise linear).
    """
    if family == "constant":
        c = float(params.pop("c", 1.0))
        _reject_extra(params, family)
        return KernelSpec(
            horizon=horizon,
            profile=_constant_profile(c),
            partial1=_zero2,
            singularity_alpha=None,
            power_law=(c, 0.0),
            bound=abs(c),
            label=f"constant(c={c:g})",
        )
    if family == "fractional":
        alpha = float(params.pop("alpha"))
        _reject_extra(params, family)
        if not 0.0 <= alpha < 1.0:
            raise ValueError(f"fractional kernel needs alpha in [0, 1), got {alpha}")
        if alpha == 0.0:
            return make_kernel("constant", horizon, c=1.0)
        return KernelSpec(
            horizon=horizon,
            profile=_power_profile(alpha),
            singularity_alpha=alpha,
            power_law=(1.0, alpha),
            bound=None,
            label=f"fractional(alpha={alpha:g})",
        )
    if family == "exponential":
        if "lambda" in params:
            params["lam"] = params.pop("lambda")
        lam = float(params.pop("lam", 1.0))
        _reject_extra(params, family)
        return KernelSpec(
            horizon=horizon,
            profile=_exp_profile(lam),
            partial1=_exp_partial1(lam),
            singularity_alpha=None,
            bound=1.0,
            label=f"exponential(lam={lam:g})",
        )
    if family == "lipschitz_profile":
        table = params.pop("table")
        _reject_extra(params, family)
        knots = np.asarray([row[0] for row in table], dtype=float)
        vals = np.asarray([row[1] for row in table], dtype=float)
        if knots.ndim != 1 or len(knots) < 2 or np.any(np.diff(knots) <= 0):
            raise ValueError("lipschitz_profile table needs >= 2 strictly increasing knots")
        if knots[0] > 0.0:
            raise ValueError("lipschitz_profile table must start at u = 0")
        return KernelSpec(
            horizon=horizon,
            profile=_table_profile(knots, vals),
            partial1=_table_partial1(knots, vals),
            singularity_alpha=None,
            bound=float(np.max(np.abs(vals))),
            label="lipschitz_profile",
        )
    raise ValueError(f"unknown kernel family {family!r}")


def _reject_extra(params: dict, family: str) -> None:
    if params:
        raise ValueError(f"unexpected parameters for kernel family {family!r}: {sorted(params)}")


def _constant_profile(c: float):
    def profile(u):
        return np.full_like(np.asarray(u, dtype=float), c)

    return profile


def _power_profile(alpha: float):
    def profile(u):
        return np.asarray(u, dtype=float) ** (-alpha)

    return profile


def _exp_profile(lam: float):
    def profile(u):
        return np.exp(-lam * np.asarray(u, dtype=float))

    return profile


def _exp_partial1(lam: float):
    # d/ds exp(-lam (t - s)) = lam * exp(-lam (t - s))
    def partial1(s, t):
        return lam * np.exp(-lam * (np.asarray(t, dtype=float) - np.asarray(s, dtype=float)))

    return partial1


def _table_profile(knots: np.ndarray, vals: np.ndarray):
    def profile(u):
        return np.interp(np.asarray(u, dtype=float), knots, vals)

    return profile


def _table_partial1(knots: np.ndarray, vals: np.ndarray):
    slopes = np.diff(vals) / np.diff(knots)

    def partial1(s, t):
        u = np.asarray(t, dtype=float) - np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(knots, u, side="right") - 1, 0, len(slopes) - 1)
        # d/ds profile(t - s) = -profile'(t - s)
        return -slopes[idx] * np.ones_like(u)

    return partial1


def _zero2(s, t):
    return np.zeros_like(np.asarray(s, dtype=float) + np.asarray(t, dtype=float))


# ---------------------------------------------------------------------------
# Point evaluation
# ---------------------------------------------------------------------------

def kernel_eval(kernel: KernelSpec, s, t):
    """Evaluate K(s, t) on the triangle.

    Raises DomainError off the triangle and SingularityError on the diagonal
    of a kernel with a declared singularity; singular kernels must be
    consumed through cell_integral instead of diagonal evaluation.
    """
    s_arr = np.asarray(s, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    if np.any(s_arr < 0) or np.any(t_arr > kernel.horizon + 1e-12) or np.any(s_arr > t_arr):
        raise DomainError(
            f"(s, t) must satisfy 0 <= s <= t <= {kernel.horizon}: got s={s}, t={t}"
        )
    if kernel.is_singular and np.any(s_arr == t_arr):
        raise SingularityError(
            f"{kernel.label} is singular on the diagonal; use cell_integral"
        )
    if kernel.is_convolution:
        out = kernel.profile(t_arr - s_arr)
    else:
        out = kernel.general_eval(s_arr, t_arr)
    if np.isscalar(s) and np.isscalar(t):
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Quadrature primitives
# ---------------------------------------------------------------------------

_GAUSS_CACHE: dict = {}


def _gauss_rule(order: int):
    rule = _GAUSS_CACHE.get(order)
    if rule is None:
        x, w = np.polynomial.legendre.leggauss(order)
        # map to [0, 1]
        rule = ((x + 1.0) / 2.0, w / 2.0)
        _GAUSS_CACHE[order] = rule
    return rule


def _graded_mesh_integral(f, length: float, alpha_eff: float,
                          rtol: float = _QUAD_RTOL) -> tuple[float, float]:
    """Integrate f over (0, length] with an integrable singularity u**-alpha_eff
    at u = 0, on a mesh graded toward 0 with exponent 6 / (1 - alpha_eff).

    The exponent is three times the minimal grading 2/(1-alpha) so that the
    composite Gauss rule converges at high order instead of O(m^-2); with the
    minimal grading the 1e-10 tolerance is out of reach within any sane cell
    budget.  Gauss nodes never touch the endpoint, so f is only evaluated at
    u > 0.  Returns (value, error_estimate); raises QuadratureError if
    doubling the cell count up to the budget never converges.
    """
    if length <= 0:
        return 0.0, 0.0
    if alpha_eff >= 1.0:
        raise DivergentIntegral(
            f"integrand exponent {alpha_eff:.4g} >= 1: integral diverges"
        )
    r = 6.0 / (1.0 - alpha_eff)
    xg, wg = _gauss_rule(_GAUSS_ORDER)
    prev = None
    m = _GRADED_M0
    while m <= _GRADED_M_MAX:
        edges = length * (np.arange(m + 1) / m) ** r
        lengths = np.diff(edges)
        pts = edges[:-1, None] + lengths[:, None] * xg[None, :]
        weights = lengths[:, None] * wg[None, :]
        val = float(np.sum(f(pts.ravel()).reshape(pts.shape) * weights))
        if prev is not None:
            err = abs(val - prev)
            if err <= 3.0 * rtol * max(abs(val), 1e-300) or err <= 1e-15:
                return val, err
        prev = val
        m *= 2
    raise QuadratureError(
        f"graded quadrature did not converge within {_GRADED_M_MAX} cells "
        f"(alpha_eff={alpha_eff:.4g}, length={length:.4g})"
    )


def _smooth_integral(f, a: float, b: float, rtol: float = _QUAD_RTOL) -> float:
    """Adaptive quadrature for an integrand without singularities inside [a, b]."""
    if b <= a:
        return 0.0
    val, abserr = _scipy_integrate.quad(
        lambda u: float(f(np.asarray([u]))[0]), a, b,
        epsabs=1e-14, epsrel=rtol, limit=500,
    )
    if abserr > max(1e-12, 100 * rtol * abs(val)) and abs(val) > 1e-13:
        raise QuadratureError(
            f"adaptive quadrature error {abserr:.2e} too large for value {val:.6e}"
        )
    return val


# ---------------------------------------------------------------------------
# Cell integrals and norms
# ---------------------------------------------------------------------------

def cell_integral(kernel: KernelSpec, a: float, b: float, t: float) -> float:
    """Integral of K(s, t) in s over one grid cell [a, b], 0 <= a < b <= t.

    Pure power-law profiles use the closed-form antiderivative; otherwise the
    integral is computed adaptively, switching to a graded mesh whenever the
    cell touches the singular diagonal (b == t).
    """
    if not (0.0 <= a < b <= t <= kernel.horizon + 1e-12):
        raise DomainError(f"need 0 <= a < b <= t <= T, got a={a}, b={b}, t={t}")

    if kernel.power_law is not None:
        c, alpha = kernel.power_law
        return _power_cell(c, alpha, t - b, t - a)

    touches_diagonal = b >= t - 1e-15 * max(1.0, t)

    if kernel.is_convolution:
        prof = kernel.profile
        lo, hi = t - b, t - a
        if touches_diagonal and kernel.is_singular:
            val, _ = _graded_mesh_integral(prof, hi, kernel.singularity_alpha)
            return val
        return _smooth_integral(prof, lo, hi)

    def g(u):
        return kernel.general_eval(t - u, np.full_like(u, t))

    lo, hi = t - b, t - a
    if touches_diagonal and kernel.is_singular:
        val, _ = _graded_mesh_integral(g, hi, kernel.singularity_alpha)
        return val
    return _smooth_integral(g, lo, hi)


def _power_cell(c: float, alpha: float, lo: float, hi: float) -> float:
    """Closed form of integral of c * u**-alpha over [lo, hi], lo >= 0."""
    if alpha >= 1.0 and lo <= 0.0:
        raise DivergentIntegral(f"power-law cell with alpha={alpha} diverges at 0")
    if alpha == 1.0:
        return c * (math.log(hi) - math.log(lo))
    e = 1.0 - alpha
    return c / e * (hi ** e - lo ** e)


def lq_norm(kernel: KernelSpec, t: float, q: float) -> float:
    """L^q norm of K(., t) over [0, t]: (integral of |K(s,t)|^q ds)**(1/q).

    Raises DivergentIntegral when a declared power-law singularity makes
    alpha * q >= 1.
    """
    if not (0.0 < t <= kernel.horizon + 1e-12):
        raise DomainError(f"t must lie in (0, T], got {t}")
    if q < 1.0:
        raise ValueError(f"q must be >= 1, got {q}")
    alpha = kernel.singularity_alpha or 0.0
    if alpha * q >= 1.0:
        raise DivergentIntegral(
            f"{kernel.label}: L^{q:g} norm diverges (alpha*q = {alpha * q:.4g} >= 1)"
        )
    if kernel.power_law is not None:
        c, al = kernel.power_law
        val = _power_cell(abs(c) ** q, al * q, 0.0, t)
        return val ** (1.0 / q)

    if kernel.is_convolution:
        def g(u):
            return np.abs(kernel.profile(u)) ** q
    else:
        def g(u):
            return np.abs(kernel.general_eval(t - u, np.full_like(u, t))) ** q

    if alpha > 0.0:
        val, _ = _graded_mesh_integral(g, t, alpha * q)
    else:
        val = _smooth_integral(g, 0.0, t)
    return val ** (1.0 / q)


# ---------------------------------------------------------------------------
# Assumption certificates
# ---------------------------------------------------------------------------

def check_base_integrability(k_mu: KernelSpec, k_sigma: KernelSpec,
                             grid: Sequence[float]) -> KernelCheckReport:
    """Certify the base integrability of the kernel pair on a time grid:
    the drift kernel in L^1 and the diffusion kernel in L^2 for every grid t.

    A divergent norm yields a failed report, not an exception.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise DomainError("grid must be a nonempty subset of (0, T]")
    max_l1 = 0.0
    max_l2 = 0.0
    notes = []
    passed = True
    witness = None
    for t in grid:
        try:
            max_l1 = max(max_l1, lq_norm(k_mu, float(t), 1.0))
        except DivergentIntegral as exc:
            passed, witness = False, (float(t), "mu")
            notes.append(str(exc))
            break
        try:
            max_l2 = max(max_l2, lq_norm(k_sigma, float(t), 2.0))
        except DivergentIntegral as exc:
            passed, witness = False, (float(t), "sigma")
            notes.append(str(exc))
            break
    return KernelCheckReport(
        assumption_id="kernel-base-integrability",
        passed=passed,
        worst_ratio=0.0 if passed else math.inf,
        witness=witness,
        grid_meta={"n_points": int(grid.size), "t_max": float(grid.max())},
        measured={"max_l1_mu": max_l1, "max_l2_sigma": max_l2},
        notes=notes,
    )


def dyadic_pair_grid(horizon: float, n_scales: int = 10, n_bases: int = 4,
                     coarsest: Optional[float] = None) -> list[tuple[float, float]]:
    """Build (t, t') pairs whose gaps run down a dyadic ladder.

    For each of n_scales gaps h_k = coarsest / 2**k, n_bases base points t
    are spread over [T/4, T - h_k]; used by check_regularity.
    """
    if coarsest is None:
        coarsest = horizon / 8.0
    pairs = []
    for k in range(n_scales):
        h = coarsest / 2 ** k
        bases = np.linspace(horizon / 4.0, horizon - h, n_bases)
        for t in bases:
            pairs.append((float(t), float(t + h)))
    return pairs


def _increment_integral(kernel: KernelSpec, t: float, t2: float, q: float) -> float:
    """Integral over [0, t] of |K(s, t') - K(s, t)|^q ds (the first summand
    of the kernel increment bound); singular at s = t like (t - s)^(-alpha q).
    """
    alpha = kernel.singularity_alpha or 0.0
    if alpha * q >= 1.0:
        raise DivergentIntegral(
            f"{kernel.label}: increment integral diverges (alpha*q >= 1)"
        )

    if kernel.is_convolution:
        prof = kernel.profile
        gap = t2 - t

        def g(u):  # u = t - s
            return np.abs(prof(u + gap) - prof(u)) ** q
    else:
        def g(u):
            s = t - u
            return np.abs(
                kernel.general_eval(s, np.full_like(u, t2))
                - kernel.general_eval(s, np.full_like(u, t))
            ) ** q

    if alpha > 0.0:
        val, _ = _graded_mesh_integral(g, t, alpha * q)
    else:
        val = _smooth_integral(g, 0.0, t)
    return val


def _tail_integral(kernel: KernelSpec, t: float, t2: float, q: float) -> float:
    """Integral over [t, t'] of |K(s, t')|^q ds (the second summand)."""
    alpha = kernel.singularity_alpha or 0.0
    if alpha * q >= 1.0:
        raise DivergentIntegral(
            f"{kernel.label}: tail integral diverges (alpha*q >= 1)"
        )
    if kernel.power_law is not None:
        c, al = kernel.power_law
        return _power_cell(abs(c) ** q, al * q, 0.0, t2 - t)

    if kernel.is_convolution:
        def g(u):  # u = t' - s
            return np.abs(kernel.profile(u)) ** q
    else:
        def g(u):
            return np.abs(kernel.general_eval(t2 - u, np.full_like(u, t2))) ** q

    if alpha > 0.0:
        val, _ = _graded_mesh_integral(g, t2 - t, alpha * q)
    else:
        val = _smooth_integral(g, 0.0, t2 - t)
    return val


def _loglog_slope(h: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """Least-squares slope and R^2 of log v against log h (positive v only)."""
    mask = v > 0
    if mask.sum() < 2:
        return math.inf, 1.0
    x = np.log(h[mask])
    y = np.log(v[mask])
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), r2


_SLOPE_TOL = 0.02
_MIN_DYADIC_SCALES = 8


def check_regularity(k_mu: KernelSpec, k_sigma: KernelSpec,
                     params: RegularityParams,
                     pair_grid: Sequence[tuple[float, float]]) -> KernelCheckReport:
    """Certify the kernel increment bounds on a grid of (t, t') pairs.

    For each pair the increment and tail integrals of both kernels are
    computed with exponents p/(p-1) (drift) and 2p/(p-2) (diffusion) and held
    against C_p |t'-t|**e with e = gamma*p/(p-1), resp. 2*gamma*p/(p-2).
    When no constant is supplied the smallest one fitting the grid is
    reported.  Passing additionally requires that the measured log-log slope
    of each integral sum in the gap is at least the required exponent minus
    a slope tolerance, so that the ratio cannot blow up as the gap shrinks.
    """
    pairs = [(float(t), float(t2)) for t, t2 in pair_grid]
    if any(not (0 <= t < t2 <= max(k_mu.horizon, k_sigma.horizon) + 1e-12)
           for t, t2 in pairs):
        raise DomainError("pair_grid entries must satisfy 0 <= t < t' <= T")
    gaps = np.asarray([t2 - t for t, t2 in pairs])
    n_scales = len(set(np.round(np.log2(gaps), 6)))
    if n_scales < _MIN_DYADIC_SCALES:
        raise GridTooCoarse(
            f"need >= {_MIN_DYADIC_SCALES} dyadic gap scales, got {n_scales}"
        )

    p, gamma = params.p, params.gamma
    q_mu = p / (p - 1.0)
    q_sig = 2.0 * p / (p - 2.0)
    exp_mu = gamma * q_mu
    exp_sig = gamma * q_sig

    rows = {
        "mu": {"q": q_mu, "exp": exp_mu, "kernel": k_mu},
        "sigma": {"q": q_sig, "exp": exp_sig, "kernel": k_sigma},
    }
    measured: dict = {"p": p, "gamma": gamma}
    notes: list[str] = []
    passed = True
    worst_ratio = 0.0
    witness = None

    for name, row in rows.items():
        try:
            inc = np.array([_increment_integral(row["kernel"], t, t2, row["q"])
                            for t, t2 in pairs])
            tail = np.array([_tail_integral(row["kernel"], t, t2, row["q"])
                             for t, t2 in pairs])
        except DivergentIntegral as exc:
            notes.append(str(exc))
            measured[f"{name}_divergent"] = True
            passed = False
            worst_ratio = math.inf
            continue
        total = inc + tail
        ratios = total / gaps ** row["exp"]
        fitted = float(np.max(ratios)) if len(ratios) else 0.0
        measured[f"{name}_fitted_constant"] = fitted
        # per-gap medians give a noise-resistant scaling estimate
        uniq = np.unique(np.round(np.log2(gaps), 6))
        med_total = np.array([np.median(total[np.isclose(np.round(np.log2(gaps), 6), u)])
                              for u in uniq])
        med_tail = np.array([np.median(tail[np.isclose(np.round(np.log2(gaps), 6), u)])
                             for u in uniq])
        h_uniq = 2.0 ** uniq
        slope, r2 = _loglog_slope(h_uniq, med_total)
        tail_slope, _ = _loglog_slope(h_uniq, med_tail)
        measured[f"{name}_slope"] = slope
        measured[f"{name}_slope_r2"] = r2
        measured[f"{name}_tail_slope"] = tail_slope
        measured[f"{name}_required_exponent"] = row["exp"]
        if slope < row["exp"] - _SLOPE_TOL:
            passed = False
            notes.append(
                f"{name}: slope {slope:.4f} below required exponent "
                f"{row['exp']:.4f} - {_SLOPE_TOL}"
            )
        if params.C_p is not None:
            ratio = fitted / params.C_p
            if ratio > worst_ratio:
                worst_ratio = ratio
                idx = int(np.argmax(ratios))
                witness = pairs[idx]
            if ratio > 1.0 + _REPORT_TOL:
                passed = False
                notes.append(f"{name}: fitted constant {fitted:.4g} exceeds C_p")

    if params.C_p is None and passed:
        worst_ratio = 1.0  # by definition of the fitted constant
        measured["C_p_fitted"] = max(
            measured.get("mu_fitted_constant", 0.0),
            measured.get("sigma_fitted_constant", 0.0),
        )

    return KernelCheckReport(
        assumption_id="kernel-regularity",
        passed=passed,
        worst_ratio=worst_ratio,
        witness=witness,
        grid_meta={"n_pairs": len(pairs), "n_dyadic_scales": int(n_scales)},
        measured=measured,
        notes=notes,
    )


def check_structural(k_mu: KernelSpec, k_sigma: KernelSpec, p_struct: float,
                     require_branch: Optional[str] = None,
                     grid: Optional[Sequence[float]] = None) -> KernelCheckReport:
    """Certify the structural hypotheses used by the identity diagnostics.

    The drift kernel must be bounded in L^1 uniformly in its second argument
    (the sup over the grid is reported as the fitted constant).  The
    diffusion kernel must satisfy at least one of two branches:

    * "smooth": bounded, absolutely continuous in s, with the L^p_struct norm
      of its s-derivative bounded uniformly in t;
    * "convolution": convolution form with a square-integrable profile.

    require_branch forces one branch; requesting "smooth" without a declared
    derivative raises MissingDerivative.
    """
    if p_struct <= 1:
        raise ValueError(f"p_struct must exceed 1, got {p_struct}")
    if require_branch not in (None, "smooth", "convolution"):
        raise ValueError(f"unknown branch {require_branch!r}")
    T = k_sigma.horizon
    if grid is None:
        grid = np.linspace(T / 16.0, T, 16)
    grid = np.asarray(grid, dtype=float)

    measured: dict = {}
    notes: list[str] = []
    passed = True

    # drift kernel: uniform L^1 bound
    try:
        c_mu = max(lq_norm(k_mu, float(t), 1.0) for t in grid)
        measured["mu_l1_sup"] = c_mu
    except DivergentIntegral as exc:
        notes.append(str(exc))
        measured["mu_l1_sup"] = math.inf
        passed = False

    # diffusion kernel, branch "smooth"
    branch_smooth = False
    if require_branch == "smooth" and k_sigma.partial1 is None:
        raise MissingDerivative(
            f"{k_sigma.label}: smooth branch requested but no s-derivative declared"
        )
    if k_sigma.partial1 is not None and k_sigma.bound is not None:
        def deriv_q(t):
            def g(s):
                return np.abs(k_sigma.partial1(s, np.full_like(s, t))) ** p_struct
            return _smooth_integral(g, 0.0, float(t)) ** (1.0 / p_struct)

        dnorm = max(deriv_q(t) for t in grid)
        measured["sigma_partial1_lp_sup"] = dnorm
        measured["sigma_bound"] = k_sigma.bound
        branch_smooth = math.isfinite(dnorm)

    # diffusion kernel, branch "convolution"
    branch_conv = False
    if k_sigma.is_convolution:
        try:
            l2 = lq_norm(k_sigma, T, 2.0)
            measured["sigma_profile_l2"] = l2
            branch_conv = math.isfinite(l2)
        except DivergentIntegral as exc:
            notes.append(str(exc))
            measured["sigma_profile_l2"] = math.inf

    measured["branch_smooth"] = branch_smooth
    measured["branch_convolution"] = branch_conv
    if require_branch == "smooth":
        sigma_ok = branch_smooth
    elif require_branch == "convolution":
        sigma_ok = branch_conv
    else:
        sigma_ok = branch_smooth or branch_conv
    if not sigma_ok:
        passed = False
        notes.append("diffusion kernel satisfies neither structural branch")

    return KernelCheckReport(
        assumption_id="kernel-structural",
        passed=passed,
        worst_ratio=0.0 if passed else math.inf,
        witness=None,
        grid_meta={"n_points": int(grid.size), "p_struct": p_struct},
        measured=measured,
        notes=notes,
    )
