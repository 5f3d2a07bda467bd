"""Run configuration: TOML file values merged with command-line overrides."""

from __future__ import annotations

import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any, Literal

from subtori.errors import ConfigError

if TYPE_CHECKING:
    from subtori.scenarios import Scenario
    from subtori.series import Dims

Mode = Literal["check", "sweep", "iterate", "verify"]
MODES = ("check", "sweep", "iterate", "verify")


@dataclass
class RunConfig:
    """Everything one ``subtori`` invocation needs."""

    scenario: str = "example-4.1-line"
    """Builtin scenario name or path to a scenario TOML file."""

    mode: Mode = "check"
    """What to run: ``check``, ``sweep``, ``iterate`` or ``verify``."""

    lam: list[tuple[float, ...]] = field(default_factory=list)
    """Parameter points; the scenario default when empty."""

    grid: int | None = None
    """Chart grid resolution per axis (overrides the scenario's)."""

    gammas: list[float] = field(default_factory=lambda: [0.1])
    """Diophantine constants: the sweep ladder, the first one seeds iterations."""

    tau: float | None = None
    """Diophantine exponent (scenario default when unset)."""

    eps0: float | None = None
    """Initial normalized perturbation size (scenario default when unset)."""

    eps_ceiling: float = 1e-4
    """Largest ``eps0`` an iteration accepts."""

    steps: int = 4
    """Number of KAM steps."""

    min_steps: int = 1
    """An iteration that stops on a hypothesis before this many steps exits nonzero."""

    D_y: int = 2  # noqa: N815
    """Total ``(y, u)`` degree of the generator."""

    lie_tol: float = 1e-3
    """Relative tolerance of the Lie series."""

    C_slack: float = 10.0  # noqa: N815
    """Constant absorbed into measured bounds."""

    hypothesis_mode: Literal["measured", "literal", "record"] = "measured"
    """Which reading of H1-H4 gates a step."""

    seed: int | None = None
    """Seed of the random perturbation (scenario default when unset)."""

    s0: float | None = None
    """Explicit initial polydisk radius; ``eps0 * gamma0**G`` when unset."""

    r0: float = 0.5
    """Initial strip width."""

    amplitude_mode: Literal["scaled", "absolute"] = "scaled"
    """``scaled``: ``|P| = eps0 s0^2 gamma0^G``; ``absolute``: ``|P| = eps0``."""

    k_scan_cap: int = 24
    """Cap on the Fourier cutoff of membership scans and of the truncation."""

    series_k_cap: int | None = None
    """Fourier cap on intermediate Lie series terms."""

    series_degree_cap: int | None = 6
    """Degree cap on intermediate Lie series terms."""

    sweep_K: int = 10  # noqa: N815
    """Fourier cutoff of resonance sweeps."""

    out: Path | None = None
    """Output directory for reports and CSV files."""

    verify_T: float = 100.0  # noqa: N815
    """Integration horizon for elliptic tori."""

    verify_T_hyp: float = 5.0  # noqa: N815
    """Integration horizon for tori with hyperbolic normal directions."""

    verify_tol: float = 1e-10
    """Integrator tolerance."""

    verify_seeds: int = 10
    """Number of seed points on the torus."""

    deviation_budget: float = 1e-5
    """Largest accepted ``(y, u)`` deviation along verified trajectories."""

    workers: int = 1
    """Worker processes for grid sweeps."""

    def with_scenario_defaults(self, scenario: Scenario) -> RunConfig:
        """Fill the unset ``tau``, ``eps0`` and ``seed`` from the scenario."""
        defaults = scenario.defaults
        return replace(
            self,
            tau=defaults.tau if self.tau is None else self.tau,
            eps0=defaults.eps0 if self.eps0 is None else self.eps0,
            seed=defaults.seed if self.seed is None else self.seed,
        )

    def validate(self, dims: Dims, rank_deficient: bool) -> None:
        """Check ranges and the Diophantine exponent for this phase space.

        Raises:
            ConfigError: A value is out of range
        """
        n = dims.n
        if self.tau is not None:
            floor = n * (n - 1) - 1 if rank_deficient else n - 1
            if self.tau <= floor:
                kind = "rank-deficient" if rank_deficient else "nonsingular"
                msg = f"tau={self.tau} must exceed {floor} for {kind} A with n={n}"
                raise ConfigError(msg)
        for gamma in self.gammas:
            if not 0.0 < gamma < 1.0:
                msg = f"gamma must lie in (0, 1), got {gamma}"
                raise ConfigError(msg)
        if not self.gammas:
            msg = "at least one gamma is required"
            raise ConfigError(msg)
        if self.eps0 is not None and not 0.0 <= self.eps0 < 1.0:
            msg = f"eps0 must lie in [0, 1), got {self.eps0}"
            raise ConfigError(msg)
        for name in ("steps", "min_steps", "D_y"):
            if getattr(self, name) < 0:
                msg = f"{name} must be nonnegative, got {getattr(self, name)}"
                raise ConfigError(msg)
        if self.mode not in MODES:
            msg = f"unknown mode {self.mode!r}, expected one of {', '.join(MODES)}"
            raise ConfigError(msg)
        if self.workers < 1:
            msg = f"workers must be >= 1, got {self.workers}"
            raise ConfigError(msg)
        if self.grid is not None and self.grid < 2:
            msg = f"grid must be >= 2, got {self.grid}"
            raise ConfigError(msg)


_VERIFY_KEYS = {
    "T": "verify_T",
    "T_hyp": "verify_T_hyp",
    "tol": "verify_tol",
    "seeds": "verify_seeds",
    "deviation_budget": "deviation_budget",
}


def _lam_points(value: Any) -> list[tuple[float, ...]]:
    if not isinstance(value, list):
        msg = f"lam must be a list of numbers or of points, got {value!r}"
        raise ConfigError(msg)
    if all(isinstance(v, (int, float)) for v in value):
        return [tuple(float(v) for v in value)] if value else []
    if all(isinstance(v, list) for v in value):
        return [tuple(float(x) for x in point) for point in value]
    msg = f"lam must be a list of numbers or of points, got {value!r}"
    raise ConfigError(msg)


def _coerce(name: str, value: Any) -> Any:
    if name == "lam":
        return _lam_points(value)
    if name == "gammas":
        values = value if isinstance(value, (list, tuple)) else [value]
        return [float(v) for v in values]
    if name == "out":
        return Path(value)
    return value


def load_config(config_path: Path | None = None, **overrides: Any) -> RunConfig:
    """Load configuration from file and CLI overrides.

    Args:
        config_path: Optional TOML file with a ``[run]`` table and an optional
            ``[verify]`` table
        **overrides: Field values from the command line; ``None`` means unset

    Returns:
        RunConfig with merged settings

    Raises:
        ConfigError: The file is not valid TOML or names an unknown key
    """
    config = RunConfig()
    known = {f.name for f in fields(RunConfig)}

    if config_path is not None:
        try:
            with Path(config_path).open("rb") as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            msg = f"invalid config file {config_path}: {e}"
            raise ConfigError(msg) from e
        except OSError as e:
            msg = f"cannot read config file {config_path}: {e}"
            raise ConfigError(msg) from e

        unknown_tables = set(data) - {"run", "verify"}
        if unknown_tables:
            msg = f"unknown config tables {sorted(unknown_tables)}"
            raise ConfigError(msg)
        for key, value in data.get("run", {}).items():
            if key not in known or key.startswith("verify_"):
                msg = f"unknown key {key!r} in [run]"
                raise ConfigError(msg)
            setattr(config, key, _coerce(key, value))
        for key, value in data.get("verify", {}).items():
            if key not in _VERIFY_KEYS:
                msg = f"unknown key {key!r} in [verify]"
                raise ConfigError(msg)
            setattr(config, _VERIFY_KEYS[key], value)

    # CLI values win over file values
    for key, value in overrides.items():
        if key not in known:
            msg = f"unknown option {key!r}"
            raise ConfigError(msg)
        if value is None or (isinstance(value, (list, tuple)) and not value):
            continue
        setattr(config, key, _coerce(key, value) if key != "lam" else list(value))

    return config
