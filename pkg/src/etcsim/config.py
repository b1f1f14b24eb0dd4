"""Declarative run configuration: file parsing, resolution, digests.

A config file (JSON or TOML, picked by extension) carries three sections.
`plant` gives A, B, K, Q and the disturbance bound nu. `performance`
gives the envelope: beta either as a number or as a fraction of the
closed-loop Lyapunov rate, Vd0 either as a number or as a margin over the
initial state's Lyapunov value, V0 as a number or "auto", plus margins
and the optional look-ahead T and lag budget TM. `scenario` names the
trigger regime and the run parameters (initial states, horizon, step,
bit budget, delay, disturbance signal, per-event bit overrides).

A config's digest is the SHA-256 of its canonical JSON form, so the same
logical config hashes identically no matter which platform wrote it or
whether it was JSON or TOML on disk.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import __version__
from .design import (
    DesignConstants,
    PerformanceSpec,
    PlantSpec,
    derive_constants,
)
from .errors import ConfigError
from .mat_core import solve_lyapunov, sym_eig_extrema
from .simulate import DelayModel, Disturbance, ScenarioConfig

__all__ = [
    "RunManifest",
    "ResolvedConfig",
    "config_digest",
    "constants_dump",
    "derive_from_config",
    "load_config",
    "load_raw",
    "resolve_config",
]

_TOP_KEYS = {"plant", "performance", "scenario"}
_PLANT_KEYS = {"A", "B", "K", "Q", "nu"}
_PERF_KEYS = {"beta", "Vd0", "V0", "a", "sigma", "T", "TM"}
_SCEN_KEYS = {
    "scenario",
    "x0",
    "xhat0",
    "horizon",
    "step",
    "t0",
    "de0",
    "pbar",
    "delay",
    "disturbance",
    "pk_override",
}


def load_raw(path) -> dict:
    """Parse a JSON or TOML config file into a plain dict."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    suffix = path.suffix.lower()
    try:
        if suffix == ".json":
            with open(path, "rb") as fh:
                raw = json.load(fh)
        elif suffix == ".toml":
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        else:
            raise ConfigError(
                f"unrecognized config extension {suffix!r}; use .json or .toml"
            )
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"config file {path} does not parse: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table/object")
    return raw


def config_digest(raw: dict) -> str:
    """SHA-256 over the canonical JSON serialization of the parsed config."""
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canon.encode("ascii")).hexdigest()


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(
            f"unknown field(s) in {where} section: {', '.join(sorted(unknown))}"
        )


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"{where} section is missing required field {key!r}")
    return section[key]


def _plant_from(raw: dict) -> PlantSpec:
    sec = _require(raw, "plant", "config")
    _check_keys(sec, _PLANT_KEYS, "plant")
    return PlantSpec(
        A=_require(sec, "A", "plant"),
        B=_require(sec, "B", "plant"),
        K=_require(sec, "K", "plant"),
        Q=_require(sec, "Q", "plant"),
        nu=float(sec.get("nu", 0.0)),
    )


def _closed_loop_rate(plant: PlantSpec) -> float:
    """lam_min(Q)/lam_max(P): the Lyapunov decay rate the feedback certifies."""
    P = solve_lyapunov(plant.Abar, plant.Q)
    lam_m_Q, _ = sym_eig_extrema(plant.Q)
    _, lam_M_P = sym_eig_extrema(P)
    return lam_m_Q / lam_M_P


def _initial_level(plant: PlantSpec, raw: dict) -> float:
    scen = raw.get("scenario")
    if not scen or "x0" not in scen:
        raise ConfigError(
            "Vd0 given as initial_margin needs scenario.x0 to take the margin over"
        )
    P = solve_lyapunov(plant.Abar, plant.Q)
    x0 = np.asarray(scen["x0"], dtype=float)
    return float(x0 @ P @ x0)


def _perf_from(raw: dict, plant: PlantSpec) -> tuple[PerformanceSpec, float | None, float | None]:
    """Performance spec plus the optional look-ahead T and lag budget TM."""
    sec = _require(raw, "performance", "config")
    _check_keys(sec, _PERF_KEYS, "performance")

    beta = _require(sec, "beta", "performance")
    if isinstance(beta, dict):
        _check_keys(beta, {"rate_fraction"}, "performance.beta")
        frac = float(_require(beta, "rate_fraction", "performance.beta"))
        if not 0.0 < frac < 1.0:
            raise ConfigError("beta rate_fraction must lie in (0, 1)")
        beta = frac * _closed_loop_rate(plant)
    else:
        beta = float(beta)

    vd0 = _require(sec, "Vd0", "performance")
    if isinstance(vd0, dict):
        _check_keys(vd0, {"initial_margin"}, "performance.Vd0")
        margin = float(_require(vd0, "initial_margin", "performance.Vd0"))
        if margin <= 1.0:
            raise ConfigError("Vd0 initial_margin must exceed 1")
        vd0 = margin * _initial_level(plant, raw)
    else:
        vd0 = float(vd0)

    v0 = sec.get("V0")
    if v0 == "auto":
        v0 = None  # the design picks: 0 undisturbed, the admissible floor otherwise
    elif v0 is not None:
        v0 = float(v0)

    perf = PerformanceSpec(
        Vd0=vd0,
        beta=beta,
        a=float(sec.get("a", 1.2)),
        sigma=float(sec.get("sigma", 0.9)),
        V0=v0,
    )
    T = float(sec["T"]) if "T" in sec else None
    TM = float(sec["TM"]) if "TM" in sec else None
    return perf, T, TM


def _delay_from(spec, where: str = "scenario.delay") -> DelayModel:
    if spec is None:
        return DelayModel.zero()
    _check_keys(spec, {"kind", "value", "per_bit", "cap"}, where)
    kind = _require(spec, "kind", where)
    if kind == "zero":
        return DelayModel.zero()
    if kind == "constant":
        return DelayModel.constant(float(_require(spec, "value", where)))
    if kind == "proportional":
        return DelayModel.proportional(
            per_bit=float(_require(spec, "per_bit", where)),
            cap=float(spec.get("cap", math.inf)),
        )
    raise ConfigError(f"unknown delay kind {kind!r}")


def _disturbance_from(spec, plant: PlantSpec, where: str = "scenario.disturbance"):
    if spec is None:
        return None
    _check_keys(spec, {"kind", "nu", "omega", "knots_t", "knots_v"}, where)
    kind = _require(spec, "kind", where)
    nu = float(spec.get("nu", plant.nu))
    if nu > plant.nu * (1.0 + 1e-12):
        raise ConfigError(
            f"disturbance amplitude {nu:.6g} exceeds the plant bound {plant.nu:.6g}"
        )
    if kind == "zero":
        return Disturbance.zero(plant.n)
    if kind == "sincos":
        return Disturbance.sincos(nu, omega=float(spec.get("omega", 0.5)))
    if kind == "table":
        return Disturbance.table(
            knots_t=_require(spec, "knots_t", where),
            knots_v=_require(spec, "knots_v", where),
            nu=nu,
        )
    raise ConfigError(f"unknown disturbance kind {kind!r}")


def _scenario_from(raw: dict, plant: PlantSpec) -> ScenarioConfig | None:
    sec = raw.get("scenario")
    if sec is None:
        return None
    _check_keys(sec, _SCEN_KEYS, "scenario")
    pk_raw = sec.get("pk_override")
    pk = None
    if pk_raw is not None:
        try:
            pk = {int(k): int(v) for k, v in pk_raw.items()}
        except (TypeError, ValueError, AttributeError) as exc:
            raise ConfigError(
                "pk_override must map event numbers to bit counts"
            ) from exc
    kwargs = dict(
        scenario=_require(sec, "scenario", "scenario"),
        x0=_require(sec, "x0", "scenario"),
        xhat0=_require(sec, "xhat0", "scenario"),
        horizon=float(_require(sec, "horizon", "scenario")),
        delay=_delay_from(sec.get("delay")),
        disturbance=_disturbance_from(sec.get("disturbance"), plant),
        pk_override=pk,
    )
    if "step" in sec:
        kwargs["step"] = float(sec["step"])
    if "t0" in sec:
        kwargs["t0"] = float(sec["t0"])
    if "de0" in sec:
        kwargs["de0"] = float(sec["de0"])
    if "pbar" in sec:
        kwargs["pbar"] = int(sec["pbar"])
    try:
        return ScenarioConfig(**kwargs)
    except ValueError as exc:  # e.g. an unknown scenario name
        raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class ResolvedConfig:
    """A parsed config with every symbolic field made concrete."""

    raw: dict
    digest: str
    plant: PlantSpec
    perf: PerformanceSpec
    scenario: ScenarioConfig | None
    T: float | None
    TM: float | None


def resolve_config(raw: dict) -> ResolvedConfig:
    """Turn a parsed config dict into typed specs; raises ConfigError."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table/object")
    _check_keys(raw, _TOP_KEYS, "top-level")
    plant = _plant_from(raw)
    perf, T, TM = _perf_from(raw, plant)
    scenario = _scenario_from(raw, plant)
    return ResolvedConfig(
        raw=raw,
        digest=config_digest(raw),
        plant=plant,
        perf=perf,
        scenario=scenario,
        T=T,
        TM=TM,
    )


def load_config(path) -> ResolvedConfig:
    return resolve_config(load_raw(path))


def derive_from_config(resolved: ResolvedConfig) -> DesignConstants:
    """Derive the constant set a resolved config describes."""
    pbar = resolved.scenario.pbar if resolved.scenario is not None else None
    return derive_constants(
        resolved.plant,
        resolved.perf,
        T=resolved.T,
        pbar=pbar,
        TM=resolved.TM,
    )


def constants_dump(consts: DesignConstants) -> dict:
    """Every derived constant as JSON-serializable values, for audit."""

    def _mat(M) -> list:
        return np.asarray(M, dtype=float).tolist()

    return {
        "plant": {
            "A": _mat(consts.plant.A),
            "B": _mat(consts.plant.B),
            "K": _mat(consts.plant.K),
            "Q": _mat(consts.plant.Q),
            "nu": consts.plant.nu,
        },
        "performance": {
            "Vd0": consts.perf.Vd0,
            "beta": consts.perf.beta,
            "a": consts.perf.a,
            "sigma": consts.perf.sigma,
            "V0": consts.V0,
        },
        "P": _mat(consts.P),
        "lam_m_P": consts.lam_m_P,
        "lam_M_P": consts.lam_M_P,
        "lam_m_Q": consts.lam_m_Q,
        "norm_P2": consts.norm_P2,
        "norm_A2": consts.norm_A2,
        "norm_Ainf": consts.norm_Ainf,
        "W": consts.W,
        "w": consts.w,
        "theta": consts.theta,
        "theta_bar": consts.theta_bar,
        "c": consts.c,
        "c1": consts.c1,
        "c2": consts.c2,
        "c3": consts.c3,
        "gamma11": consts.gamma11,
        "T": consts.T,
        "t_star": consts.t_star,
        "TM": consts.TM,
        "pbar": consts.pbar,
    }


@dataclass
class RunManifest:
    """Audit record written beside every simulation's output files."""

    config_digest: str
    library_version: str
    scenario: str | None
    constants: dict
    outputs: dict

    @classmethod
    def create(cls, resolved: ResolvedConfig, consts: DesignConstants, outputs: dict) -> "RunManifest":
        return cls(
            config_digest=resolved.digest,
            library_version=__version__,
            scenario=resolved.scenario.scenario.value if resolved.scenario else None,
            constants=constants_dump(consts),
            outputs={k: str(v) for k, v in outputs.items()},
        )

    def to_dict(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "library_version": self.library_version,
            "scenario": self.scenario,
            "constants": self.constants,
            "outputs": self.outputs,
        }

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, path) -> "RunManifest":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"manifest not found: {path}")
        with open(path) as fh:
            data = json.load(fh)
        try:
            return cls(
                config_digest=data["config_digest"],
                library_version=data["library_version"],
                scenario=data.get("scenario"),
                constants=data["constants"],
                outputs=data.get("outputs", {}),
            )
        except KeyError as exc:
            raise ConfigError(f"manifest {path} is missing field {exc}") from exc
