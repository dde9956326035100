"""Monte Carlo engine for one-dimensional stochastic Volterra equations.

The scheme is an explicit left-point rule on a uniform grid t_i = i T / N,

    X_{t_i} = x0(t_i) + sum_{j<i} Kbar_mu[i,j] (A_{j+1} - A_j)
                      + sum_{j<i} Kbar_sig[i,j] (M_{j+1} - M_j),

    A_{j+1} = A_j + mu(t_j, X_{t_j}) dt,
    M_{j+1} = M_j + sigma(t_j, X_{t_j}) dB_j,

where Kbar are per-cell kernel weights: exact cell averages
cell_integral(K, t_j, t_{j+1}, t_i) / dt for the "kernel_averaged" scheme,
or point values K(t_j, t_i) for "left_point".  Cell averaging never touches
the singular diagonal, so the engine silently switches a singular kernel to
"kernel_averaged" and records the substitution in the run log.

Reproducibility contract
------------------------
* Driving noise comes from per-path counter-based streams keyed by
  (master seed, path index), so path p is identical no matter how paths are
  chunked or scheduled.
* Every sum over increments goes through the canonical compiled kernels in
  :mod:`volterra_lab._conv`; the convolution consumes the stored-process
  differences A_{j+1} - A_j (not the raw products), so re-applying the same
  weights to np.diff(A), np.diff(M) reproduces X bit for bit.  That is what
  :func:`reconstruct` does.
* Ensembles are bitwise reproducible for equal (seed, N, paths, scheme,
  model), independent of worker counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import _conv
from .coefficients import Coefficient, mollify
from .errors import GridMismatch, NonFiniteState, VolterraError
from .kernels import KernelSpec, cell_integral, check_base_integrability, kernel_eval

__all__ = [
    "SimConfig",
    "PathBundle",
    "Ensemble",
    "make_initial_curve",
    "build_weights",
    "simulate",
    "simulate_mollified_sequence",
    "reconstruct",
    "reconstruct_ensemble",
]

_CHUNK = 8192          # fixed path-chunk width; never depends on thread count
_ABORT_FRACTION = 1e-3  # run fails if more paths than this blow up

SCHEMES = ("kernel_averaged", "left_point")


# ---------------------------------------------------------------------------
# Configuration and results
# ---------------------------------------------------------------------------

def _zero_curve(t):
    return np.zeros_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class SimConfig:
    """Grid, ensemble size, seed, scheme and initial input curve."""

    T: float
    steps: int
    paths: int
    seed: int
    scheme: str = "kernel_averaged"
    x0: Callable = _zero_curve

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.steps < 2:
            raise ValueError("steps must be >= 2")
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")

    @property
    def dt(self) -> float:
        return self.T / self.steps

    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.steps + 1)


def make_initial_curve(family: str, **params) -> Callable:
    """Built-in continuous initial input curves x0(t)."""
    if family == "constant":
        c = float(params.pop("c", 0.0))
        if params:
            raise ValueError(f"unexpected parameters: {sorted(params)}")
        return lambda t: np.full_like(np.asarray(t, dtype=float), c)
    if family == "linear":
        a = float(params.pop("a", 0.0))
        b = float(params.pop("b", 0.0))
        if params:
            raise ValueError(f"unexpected parameters: {sorted(params)}")
        return lambda t: a + b * np.asarray(t, dtype=float)
    if family == "cos":
        amp = float(params.pop("amplitude", 1.0))
        freq = float(params.pop("freq", 1.0))
        if params:
            raise ValueError(f"unexpected parameters: {sorted(params)}")
        return lambda t: amp * np.cos(freq * np.asarray(t, dtype=float))
    raise ValueError(f"unknown initial curve family {family!r}")


@dataclass
class PathBundle:
    """One simulated trajectory set on the uniform grid.

    Z = A + M at every grid point, A_0 = M_0 = Z_0 = 0; A is the running
    left-point sum of mu dt, M of sigma dB.  The fields are views into the
    parent ensemble's arrays.
    """

    grid: np.ndarray
    X: np.ndarray
    A: Optional[np.ndarray]
    M: Optional[np.ndarray]
    Z: Optional[np.ndarray]
    dB: Optional[np.ndarray]
    seed: int
    path_index: int
    scheme_mu: str
    scheme_sig: str
    mu_skipped: bool
    sigma_skipped: bool

    @property
    def dt(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def n_steps(self) -> int:
        return len(self.grid) - 1


@dataclass
class Ensemble:
    """Struct-of-arrays collection of simulated paths plus run metadata."""

    grid: np.ndarray
    seed: int
    scheme_mu: str
    scheme_sig: str
    X: np.ndarray
    A: Optional[np.ndarray] = None
    M: Optional[np.ndarray] = None
    Z: Optional[np.ndarray] = None
    dB: Optional[np.ndarray] = None
    valid: Optional[np.ndarray] = None
    aborted: list = field(default_factory=list)
    mu_skipped: bool = False
    sigma_skipped: bool = False
    run_log: list = field(default_factory=list)

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    @property
    def n_steps(self) -> int:
        return self.X.shape[1] - 1

    @property
    def dt(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def T(self) -> float:
        return float(self.grid[-1])

    def bundle(self, p: int) -> PathBundle:
        """Zero-copy view of one path."""
        pick = lambda arr: None if arr is None else arr[p]
        return PathBundle(
            grid=self.grid,
            X=self.X[p],
            A=pick(self.A),
            M=pick(self.M),
            Z=pick(self.Z),
            dB=pick(self.dB),
            seed=self.seed,
            path_index=p,
            scheme_mu=self.scheme_mu,
            scheme_sig=self.scheme_sig,
            mu_skipped=self.mu_skipped,
            sigma_skipped=self.sigma_skipped,
        )

    def bundles(self) -> Iterable[PathBundle]:
        for p in range(self.n_paths):
            yield self.bundle(p)

    def valid_X(self) -> np.ndarray:
        if self.valid is None or bool(np.all(self.valid)):
            return self.X
        return self.X[self.valid]


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

@lru_cache(maxsize=16)
def build_weights(kernel: KernelSpec, T: float, N: int, scheme: str) -> np.ndarray:
    """Lower-triangular weight matrix W[i, j], i = 0..N, j = 0..N-1 (j < i).

    "kernel_averaged": W[i, j] = cell_integral(K, t_j, t_{j+1}, t_i) / dt
    (exact cell average, defined even when K blows up on the diagonal);
    "left_point": W[i, j] = K(t_j, t_i).
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    dt = T / N
    W = np.zeros((N + 1, N))
    grid = np.linspace(0.0, T, N + 1)

    if kernel.is_convolution:
        if scheme == "left_point":
            gaps = grid[1:]  # gap k dt, k = 1..N
            vals = np.asarray(kernel.profile(gaps), dtype=float)
            for i in range(1, N + 1):
                W[i, :i] = vals[i - 1::-1]
            return W
        # cell masses over [(k-1) dt, k dt], k = 1..N
        masses = np.empty(N)
        if kernel.power_law is not None:
            c, alpha = kernel.power_law
            e = 1.0 - alpha
            edges = grid ** e
            masses[:] = c / e * np.diff(edges)
        else:
            # gap mass k: profile integral over ((k-1) dt, k dt]
            masses[0] = cell_integral(kernel, 0.0, dt, dt)
            for k in range(2, N + 1):
                masses[k - 1] = cell_integral(kernel, 0.0, dt, grid[k])
        cell_avg = masses / dt
        for i in range(1, N + 1):
            W[i, :i] = cell_avg[i - 1::-1]
        return W

    # general two-argument kernel
    if scheme == "left_point":
        for i in range(1, N + 1):
            W[i, :i] = kernel_eval(kernel, grid[:i], np.full(i, grid[i]))
        return W
    xg, wg = np.polynomial.legendre.leggauss(12)
    xg01 = (xg + 1.0) / 2.0
    wg01 = wg / 2.0
    for i in range(1, N + 1):
        t_i = grid[i]
        if i >= 2:
            # interior cells: fixed Gauss rule per cell, vectorized
            lefts = grid[: i - 1]
            s_nodes = lefts[:, None] + dt * xg01[None, :]
            vals = kernel.general_eval(s_nodes, np.full_like(s_nodes, t_i))
            W[i, : i - 1] = vals @ wg01
        # diagonal-touching cell via adaptive/graded quadrature
        W[i, i - 1] = cell_integral(kernel, grid[i - 1], t_i, t_i) / dt
    return W


def _effective_scheme(kernel: KernelSpec, requested: str, run_log: list, tag: str) -> str:
    if requested == "left_point" and kernel.is_singular:
        run_log.append(
            f"{tag}: left_point scheme is undefined for the singular kernel "
            f"{kernel.label}; substituted kernel_averaged"
        )
        return "kernel_averaged"
    return requested


# ---------------------------------------------------------------------------
# Driving noise
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def _draw_increments(seed: int, p_lo: int, p_hi: int, n_steps: int, dt: float) -> np.ndarray:
    """Brownian increments for paths [p_lo, p_hi): row p is drawn from the
    counter-based stream keyed (seed, p), independent of chunk boundaries."""
    out = np.empty((p_hi - p_lo, n_steps))
    for p in range(p_lo, p_hi):
        key = np.array([seed & _MASK64, p & _MASK64], dtype=np.uint64)
        gen = np.random.Generator(np.random.Philox(key=key))
        out[p - p_lo] = gen.standard_normal(n_steps)
    out *= math.sqrt(dt)
    return out


# ---------------------------------------------------------------------------
# Core stepping loop
# ---------------------------------------------------------------------------

def _advance_chunk(n_paths, Wmu, Wsig, x0g, grid, dt, use_mu, use_sig,
                   mu=None, sigma=None, dB=None, dA=None, dM=None,
                   A_out=None, M_out=None, first_bad=None):
    """March one chunk of paths through the grid and return X.

    Simulation mode: mu/sigma/dB given; increments dA, dM are produced on the
    fly and written into the supplied arrays.  Reconstruction mode: mu and
    sigma are None and dA/dM are given.  Both modes run the identical
    arithmetic for X, which is the bitwise reconstruction guarantee.
    """
    producing = mu is not None or sigma is not None
    N = len(grid) - 1
    B = _conv.BLOCK
    X = np.empty((n_paths, N + 1))
    X[:, 0] = x0g[0]

    zeros_col = np.zeros(n_paths)
    Dh = np.zeros((n_paths, B)) if use_mu else None
    Sh = np.zeros((n_paths, B)) if use_sig else None
    d_tri = np.empty(n_paths) if use_mu else None
    s_tri = np.empty(n_paths) if use_sig else None

    a_run = np.zeros(n_paths)
    m_run = np.zeros(n_paths)
    if producing:
        if A_out is not None:
            A_out[:, 0] = 0.0
        if M_out is not None:
            M_out[:, 0] = 0.0
        _produce_increments(0, grid, dt, X[:, 0], use_mu, use_sig, mu, sigma,
                            dB, dA, dM, a_run, m_run, A_out, M_out)

    for i in range(1, N + 1):
        b0 = ((i - 1) // B) * B
        if i - 1 == b0:
            i_hi = min(b0 + B, N) + 1
            if use_mu:
                if b0 > 0:
                    _conv.hist_block(Wmu, dA, b0, i, i_hi, Dh)
                else:
                    Dh[:, :] = 0.0
            if use_sig:
                if b0 > 0:
                    _conv.hist_block(Wsig, dM, b0, i, i_hi, Sh)
                else:
                    Sh[:, :] = 0.0
        k = i - 1 - b0
        if use_mu:
            _conv.tri_col(Wmu, dA, b0, i, d_tri)
            d_col = Dh[:, k] + d_tri
        if use_sig:
            _conv.tri_col(Wsig, dM, b0, i, s_tri)
            s_col = Sh[:, k] + s_tri
        if use_mu and use_sig:
            x_col = (x0g[i] + d_col) + s_col
        elif use_mu:
            x_col = x0g[i] + d_col
        elif use_sig:
            x_col = x0g[i] + s_col
        else:
            x_col = x0g[i] + zeros_col
        X[:, i] = x_col

        if first_bad is not None:
            bad = ~np.isfinite(x_col)
            if bad.any():
                newly = bad & (first_bad < 0)
                first_bad[newly] = i

        if producing and i < N:
            _produce_increments(i, grid, dt, x_col, use_mu, use_sig, mu, sigma,
                                dB, dA, dM, a_run, m_run, A_out, M_out)
    return X


def _produce_increments(j, grid, dt, x_col, use_mu, use_sig, mu, sigma,
                        dB, dA, dM, a_run, m_run, A_out, M_out):
    """Left-point increments at step j: the convolution consumes the
    differences of the stored running sums, so np.diff on the stored A and M
    recovers exactly what the scheme saw."""
    t_j = grid[j]
    if use_mu:
        raw = np.asarray(mu.eval(t_j, x_col), dtype=float) * dt
        a_next = a_run + raw
        dA[:, j] = a_next - a_run
        a_run[:] = a_next
        if A_out is not None:
            A_out[:, j + 1] = a_next
    if use_sig:
        raw = np.asarray(sigma.eval(t_j, x_col), dtype=float) * dB[:, j]
        m_next = m_run + raw
        dM[:, j] = m_next - m_run
        m_run[:] = m_next
        if M_out is not None:
            M_out[:, j + 1] = m_next


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------

def simulate(cfg: SimConfig, mu: Coefficient, sigma: Coefficient,
             k_mu: KernelSpec, k_sigma: KernelSpec,
             keep: Sequence[str] = ("A", "M", "Z", "dB"),
             check_preconditions: bool = True) -> Ensemble:
    """Simulate an ensemble of SVE paths.

    keep selects which process arrays are stored besides X; drop entries to
    cut memory on large moment-only runs.  Raises NonFiniteState if more than
    0.1% of paths leave the finite range (those paths are excluded from the
    valid mask either way).
    """
    keep = tuple(keep)
    for item in keep:
        if item not in ("A", "M", "Z", "dB"):
            raise ValueError(f"unknown keep entry {item!r}")
    if "Z" in keep and not ("A" in keep and "M" in keep):
        raise ValueError("keeping Z requires keeping both A and M")
    run_log: list[str] = []
    if check_preconditions:
        probe = np.linspace(cfg.T / 8.0, cfg.T, 6)
        rep = check_base_integrability(k_mu, k_sigma, probe)
        if not rep.passed:
            raise VolterraError(
                "kernel pair fails base integrability; " + "; ".join(rep.notes)
            )

    grid = cfg.grid()
    N = cfg.steps
    dt = cfg.dt
    x0g = np.asarray(cfg.x0(grid), dtype=float)
    if x0g.shape != grid.shape:
        raise ValueError("x0 must be vectorized: x0(grid) must match the grid shape")

    scheme_mu = _effective_scheme(k_mu, cfg.scheme, run_log, "drift kernel")
    scheme_sig = _effective_scheme(k_sigma, cfg.scheme, run_log, "diffusion kernel")
    use_mu = not mu.is_zero
    use_sig = not sigma.is_zero
    Wmu = build_weights(k_mu, cfg.T, N, scheme_mu) if use_mu else None
    Wsig = build_weights(k_sigma, cfg.T, N, scheme_sig) if use_sig else None

    Mc = cfg.paths
    X = np.empty((Mc, N + 1))
    A = np.zeros((Mc, N + 1)) if "A" in keep else None
    M = np.zeros((Mc, N + 1)) if "M" in keep else None
    dB_all = np.empty((Mc, N)) if "dB" in keep else None
    first_bad_all = np.full(Mc, -1, dtype=np.int64)

    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for lo in range(0, Mc, _CHUNK):
            hi = min(lo + _CHUNK, Mc)
            dB = _draw_increments(cfg.seed, lo, hi, N, dt)
            c = hi - lo
            dA = np.zeros((c, N)) if use_mu else None
            dM = np.zeros((c, N)) if use_sig else None
            first_bad = first_bad_all[lo:hi]
            X[lo:hi] = _advance_chunk(
                c, Wmu, Wsig, x0g, grid, dt, use_mu, use_sig,
                mu=mu, sigma=sigma, dB=dB, dA=dA, dM=dM,
                A_out=None if A is None else A[lo:hi],
                M_out=None if M is None else M[lo:hi],
                first_bad=first_bad,
            )
            if dB_all is not None:
                dB_all[lo:hi] = dB

    aborted = [(int(p), int(first_bad_all[p])) for p in np.nonzero(first_bad_all >= 0)[0]]
    valid = first_bad_all < 0
    if len(aborted) > _ABORT_FRACTION * Mc:
        raise NonFiniteState(
            f"{len(aborted)} of {Mc} paths left the finite range "
            f"(first at path {aborted[0][0]}, step {aborted[0][1]})"
        )
    if aborted:
        run_log.append(f"{len(aborted)} path(s) aborted on non-finite state; excluded from valid mask")

    Z = A + M if "Z" in keep else None

    return Ensemble(
        grid=grid,
        seed=cfg.seed,
        scheme_mu=scheme_mu,
        scheme_sig=scheme_sig,
        X=X,
        A=A,
        M=M,
        Z=Z,
        dB=dB_all,
        valid=valid,
        aborted=aborted,
        mu_skipped=not use_mu,
        sigma_skipped=not use_sig,
        run_log=run_log,
    )


def simulate_mollified_sequence(cfg: SimConfig, mu: Coefficient, sigma: Coefficient,
                                k_mu: KernelSpec, k_sigma: KernelSpec,
                                levels: Sequence[int],
                                quadrature_order: Optional[int] = None,
                                keep: Sequence[str] = ("A", "M", "Z", "dB"),
                                check_preconditions: bool = True) -> dict:
    """Simulate the Lipschitz approximating sequence on coupled noise.

    Every level reuses the identical per-path Brownian increments (the seed
    is part of the stream key), so pathwise differences between levels
    measure only the coefficient approximation.
    """
    out = {}
    for n in sorted(int(n) for n in levels):
        out[n] = simulate(
            cfg,
            mollify(mu, n, quadrature_order),
            mollify(sigma, n, quadrature_order),
            k_mu, k_sigma,
            keep=keep,
            check_preconditions=check_preconditions,
        )
        check_preconditions = False  # same kernels for every level
    return out


def _reconstruct_block(n_paths, x0g, grid, Wmu, Wsig, dA, dM, use_mu, use_sig):
    return _advance_chunk(n_paths, Wmu, Wsig, x0g, grid, float(grid[1] - grid[0]),
                          use_mu, use_sig, dA=dA, dM=dM)


def reconstruct(x0: Callable, k_mu: KernelSpec, k_sigma: KernelSpec,
                bundle: PathBundle) -> np.ndarray:
    """Rebuild the state path from the bundle's A and M processes:

        Xtilde_i = x0(t_i) + sum_{j<i} Kbar_mu[i,j] (A_{j+1} - A_j)
                           + sum_{j<i} Kbar_sig[i,j] (M_{j+1} - M_j).

    For an engine-generated bundle this reproduces bundle.X bitwise: the
    same weights and the same canonical sums are applied to the same
    increments.
    """
    if bundle.A is None or bundle.M is None:
        raise VolterraError("reconstruct needs the bundle's A and M processes")
    grid = bundle.grid
    N = len(grid) - 1
    x0g = np.asarray(x0(grid), dtype=float)
    if x0g.shape != grid.shape:
        raise GridMismatch("x0(grid) does not match the bundle grid")
    use_mu = not bundle.mu_skipped
    use_sig = not bundle.sigma_skipped
    Wmu = build_weights(k_mu, float(grid[-1]), N, bundle.scheme_mu) if use_mu else None
    Wsig = build_weights(k_sigma, float(grid[-1]), N, bundle.scheme_sig) if use_sig else None
    dA = np.diff(bundle.A)[None, :] if use_mu else None
    dM = np.diff(bundle.M)[None, :] if use_sig else None
    X = _reconstruct_block(1, x0g, grid, Wmu, Wsig, dA, dM, use_mu, use_sig)
    return X[0]


def reconstruct_ensemble(x0: Callable, k_mu: KernelSpec, k_sigma: KernelSpec,
                         ensemble: Ensemble) -> np.ndarray:
    """Vectorized reconstruct over all paths; returns an (Mc, N+1) array."""
    if ensemble.A is None or ensemble.M is None:
        raise VolterraError("reconstruct needs the ensemble's A and M processes")
    grid = ensemble.grid
    N = ensemble.n_steps
    x0g = np.asarray(x0(grid), dtype=float)
    use_mu = not ensemble.mu_skipped
    use_sig = not ensemble.sigma_skipped
    Wmu = build_weights(k_mu, float(grid[-1]), N, ensemble.scheme_mu) if use_mu else None
    Wsig = build_weights(k_sigma, float(grid[-1]), N, ensemble.scheme_sig) if use_sig else None
    Mc = ensemble.n_paths
    out = np.empty((Mc, N + 1))
    for lo in range(0, Mc, _CHUNK):
        hi = min(lo + _CHUNK, Mc)
        dA = np.diff(ensemble.A[lo:hi], axis=1) if use_mu else None
        dM = np.diff(ensemble.M[lo:hi], axis=1) if use_sig else None
        out[lo:hi] = _reconstruct_block(hi - lo, x0g, grid, Wmu, Wsig, dA, dM, use_mu, use_sig)
    return out
