"""Run configuration files.

A run is described by one TOML file with four tables:

    [model]    x0, mu, sigma, kernel_mu, kernel_sigma sub-tables, each with a
               "family" key plus family parameters
    [sim]      T, steps, paths, seed, scheme
    [checks]   run = [list of check names], plus per-check parameter tables
    [output]   directory, formats

See README for the full grammar.  Validation failures raise ConfigError with
the offending key in the message.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .coefficients import Coefficient, make_coefficient
from .engine import SCHEMES, SimConfig, make_initial_curve
from .errors import ConfigError
from .kernels import KernelSpec, RegularityParams, make_kernel

CHECK_NAMES = (
    "kernel-assumptions",
    "martingale",
    "qv",
    "holder",
    "moments",
    "ibp",
    "fubini",
    "converge",
)

_COEFF_FAMILIES = ("constant", "linear", "sqrt_abs", "cir_drift", "sin_tx", "table")
_KERNEL_FAMILIES = ("constant", "fractional", "exponential", "lipschitz_profile")
_X0_FAMILIES = ("constant", "linear", "cos")


@dataclass
class RunConfig:
    """Parsed and validated run description."""

    text: str                  # original file contents (archived verbatim)
    sim: SimConfig
    mu: Coefficient
    sigma: Coefficient
    k_mu: KernelSpec
    k_sigma: KernelSpec
    x0: Callable
    checks: list = field(default_factory=list)
    check_params: dict = field(default_factory=dict)
    output_dir: str = "runs"
    formats: tuple = ("json",)


def load_config(path, seed_override: Optional[int] = None,
                out_override: Optional[str] = None) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text, seed_override=seed_override, out_override=out_override)


def parse_config(text: str, seed_override: Optional[int] = None,
                 out_override: Optional[str] = None) -> RunConfig:
    try:
        data = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc

    model = _table(data, "model")
    sim_tab = _table(data, "sim")
    checks_tab = data.get("checks", {})
    output_tab = data.get("output", {})

    T = _positive_float(sim_tab, "sim.T", "T", default=1.0)
    steps = _int_at_least(sim_tab, "sim.steps", "steps", 2, default=256)
    paths = _int_at_least(sim_tab, "sim.paths", "paths", 1, default=1000)
    seed = int(sim_tab.get("seed", 0)) if seed_override is None else int(seed_override)
    scheme = sim_tab.get("scheme", "kernel_averaged")
    if scheme not in SCHEMES:
        raise ConfigError(f"sim.scheme must be one of {SCHEMES}, got {scheme!r}")

    x0 = _build_x0(_table(model, "model.x0"))
    mu = _build_coefficient(_table(model, "model.mu"), "model.mu")
    sigma = _build_coefficient(_table(model, "model.sigma"), "model.sigma")
    k_mu = _build_kernel(_table(model, "model.kernel_mu"), "model.kernel_mu", T)
    k_sigma = _build_kernel(_table(model, "model.kernel_sigma"), "model.kernel_sigma", T)

    try:
        sim = SimConfig(T=T, steps=steps, paths=paths, seed=seed, scheme=scheme, x0=x0)
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from exc

    checks = list(checks_tab.get("run", []))
    for name in checks:
        if name not in CHECK_NAMES:
            raise ConfigError(
                f"checks.run contains unknown check {name!r}; valid: {CHECK_NAMES}"
            )
    check_params = _validate_check_params(checks_tab, checks, T)

    out_dir = str(output_tab.get("directory", "runs")) if out_override is None else out_override
    formats = tuple(output_tab.get("formats", ["json"]))
    for fmt in formats:
        if fmt not in ("json", "csv"):
            raise ConfigError(f"output.formats entries must be 'json' or 'csv', got {fmt!r}")

    return RunConfig(
        text=text, sim=sim, mu=mu, sigma=sigma, k_mu=k_mu, k_sigma=k_sigma,
        x0=x0, checks=checks, check_params=check_params,
        output_dir=out_dir, formats=formats,
    )


# ---------------------------------------------------------------------------
# Table helpers
# ---------------------------------------------------------------------------

def _table(data: dict, dotted: str) -> dict:
    key = dotted.split(".")[-1]
    if key not in data or not isinstance(data[key], dict):
        raise ConfigError(f"missing table [{dotted}]")
    return data[key]


def _positive_float(tab: dict, dotted: str, key: str, default=None) -> float:
    val = tab.get(key, default)
    if val is None:
        raise ConfigError(f"{dotted} is required")
    val = float(val)
    if val <= 0:
        raise ConfigError(f"{dotted} must be positive, got {val}")
    return val


def _int_at_least(tab: dict, dotted: str, key: str, floor: int, default=None) -> int:
    val = tab.get(key, default)
    if val is None:
        raise ConfigError(f"{dotted} is required")
    val = int(val)
    if val < floor:
        raise ConfigError(f"{dotted} must be >= {floor}, got {val}")
    return val


def _family(tab: dict, dotted: str, allowed) -> tuple[str, dict]:
    fam = tab.get("family")
    if fam is None:
        raise ConfigError(f"{dotted}.family is required")
    if fam not in allowed:
        raise ConfigError(f"{dotted}.family must be one of {allowed}, got {fam!r}")
    params = {k: v for k, v in tab.items() if k != "family"}
    return fam, params


def _build_x0(tab: dict) -> Callable:
    fam, params = _family(tab, "model.x0", _X0_FAMILIES)
    try:
        return make_initial_curve(fam, **params)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"model.x0: {exc}") from exc


def _build_coefficient(tab: dict, dotted: str) -> Coefficient:
    fam, params = _family(tab, dotted, _COEFF_FAMILIES)
    try:
        return make_coefficient(fam, **params)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{dotted}: {exc}") from exc


def _build_kernel(tab: dict, dotted: str, horizon: float) -> KernelSpec:
    fam, params = _family(tab, dotted, _KERNEL_FAMILIES)
    if fam == "fractional":
        alpha = params.get("alpha")
        if alpha is None:
            raise ConfigError(f"{dotted}.alpha is required for the fractional family")
        if not 0.0 <= float(alpha) < 1.0:
            raise ConfigError(f"{dotted}.alpha must lie in [0, 1), got {alpha}")
    try:
        return make_kernel(fam, horizon=horizon, **params)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{dotted}: {exc}") from exc


def _validate_check_params(checks_tab: dict, checks: list, T: float) -> dict:
    params: dict[str, Any] = {}

    reg = checks_tab.get("regularity", {})
    if "kernel-assumptions" in checks and reg:
        p = reg.get("p")
        gamma = reg.get("gamma")
        if p is None or gamma is None:
            raise ConfigError("checks.regularity needs both p and gamma")
        if float(p) <= 4.0:
            raise ConfigError(f"checks.regularity.p must exceed 4, got {p}")
        try:
            rp = RegularityParams(p=float(p), gamma=float(gamma),
                                  C_p=(float(reg["C_p"]) if "C_p" in reg else None))
        except ValueError as exc:
            raise ConfigError(f"checks.regularity: {exc}") from exc
        params["regularity"] = rp
    if "p_struct" in reg:
        params["p_struct"] = float(reg["p_struct"])

    hol = checks_tab.get("holder", {})
    params["holder_p"] = float(hol.get("p", 2.0))
    if params["holder_p"] < 1:
        raise ConfigError("checks.holder.p must be >= 1")
    if "gamma" in hol:
        params["holder_gamma"] = float(hol["gamma"])

    mom = checks_tab.get("moments", {})
    params["moments_q"] = float(mom.get("q", 2.0))
    if params["moments_q"] < 1:
        raise ConfigError("checks.moments.q must be >= 1")

    conv = checks_tab.get("converge", {})
    levels = conv.get("levels", [2, 4, 8, 16])
    if "converge" in checks:
        levels = [int(n) for n in levels]
        if len(levels) < 1 or any(n < 1 for n in levels):
            raise ConfigError("checks.converge.levels must be positive integers")
        if sorted(set(levels)) != sorted(levels):
            raise ConfigError("checks.converge.levels must be distinct")
    params["converge_levels"] = levels
    probe = conv.get("probe_time", T)
    if not 0.0 <= float(probe) <= T:
        raise ConfigError(f"checks.converge.probe_time must lie in [0, T], got {probe}")
    params["converge_probe"] = float(probe)

    mart = checks_tab.get("martingale", {})
    params["martingale_min_paths"] = int(mart.get("min_paths", 1000))

    ibp = checks_tab.get("ibp", {})
    params["ibp_paths"] = int(ibp.get("paths", 8))
    fub = checks_tab.get("fubini", {})
    params["fubini_paths"] = int(fub.get("paths", 8))

    return params
