"""Built-in model problems, random perturbations and the scenario file format.

A scenario bundles an integrable Hamiltonian ``N(y, u)`` written as polynomial
text, a parameter chart ``lam -> y(lam)`` and the non-degeneracy verdicts the
checkers are expected to reproduce on it.
"""

from __future__ import annotations

import itertools
import json
import logging
import re
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
from dataclasses import dataclass, field
from functools import cached_property, partial
from pathlib import Path
from typing import TYPE_CHECKING, Any, Literal

import numpy as np

from subtori.divisors import StepBudget, initial_budget, lattice_ball
from subtori.errors import ScenarioFormatError
from subtori.model import (
    ModelHamiltonian,
    NormalFormMap,
    ParamChart,
    SpectrumClass,
    pullback_to_chart,
    select_chart_minor,
)
from subtori.polynomials import PolynomialMap, parse_hamiltonian
from subtori.series import Dims, FTSeries, NormWeights, majorant_norm, realify, scale

if TYPE_CHECKING:
    from collections.abc import Callable, Mapping, Sequence

    from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

ChartKind = Literal["line", "parabola"]
AmplitudeMode = Literal["scaled", "absolute"]

SPECTRUM_CLASSES = ("elliptic", "hyperbolic", "mixed", "none")


@dataclass(frozen=True)
class ConditionExpectations:
    """Verdicts the condition checkers must reproduce on a scenario."""

    A1_prime: bool  # noqa: N815
    """Whether the frequency map has full rank along the chart."""

    A_singular: bool  # noqa: N815
    """Whether the action Hessian is rank deficient on the chart."""

    d: int
    """Rank of the action Hessian."""

    minor: tuple[int, ...]
    """0-based indices of the principal minor of ``A`` (the locked frequencies)."""

    spectrum_class: SpectrumClass
    """Class of the normal spectrum."""


@dataclass(frozen=True)
class PerturbationSpec:
    """Shape of the random perturbation attached by :func:`initial_model`."""

    k_max: int = 8
    """Largest l1 Fourier order."""

    degree_max: int = 3
    """Largest total ``(y, u)`` degree."""

    modes: int = 24
    """Number of random monomials before symmetrization."""


@dataclass(frozen=True)
class ScenarioDefaults:
    """Run constants a scenario suggests when the caller gives none."""

    lam: tuple[float, ...] | None = None
    """Parameter point; the chart center when unset."""

    eps0: float = 1e-8
    gamma0: float = 0.1
    tau: float = 3.0
    seed: int = 0


@dataclass(frozen=True)
class Scenario:
    """An integrable Hamiltonian on a parameter chart with its expected verdicts."""

    name: str
    dims: Dims
    hamiltonian: str
    """Polynomial text of ``N`` in ``y1..yn, u1, v1, ...``."""

    chart: ParamChart
    constants: Mapping[str, float] = field(default_factory=dict)
    """Named constants substituted into the Hamiltonian and the chart map."""

    expectations: ConditionExpectations | None = None
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    defaults: ScenarioDefaults = field(default_factory=ScenarioDefaults)
    description: str = ""

    def __post_init__(self) -> None:
        if self.chart.n != self.dims.n:
            msg = f"chart maps into R^{self.chart.n} but the scenario has n={self.dims.n}"
            raise ScenarioFormatError(msg, field="chart.map")

    @cached_property
    def N_full(self) -> FTSeries:  # noqa: N802
        return parse_hamiltonian(self.dims, self.hamiltonian, self.constants)

    @cached_property
    def nf_map(self) -> NormalFormMap:
        return NormalFormMap(self.N_full)

    @cached_property
    def minor(self) -> tuple[int, ...]:
        """Chart-wide principal minor of ``A``, selected at the box center."""
        return select_chart_minor(self.chart, self.nf_map)

    @property
    def spectrum_class(self) -> SpectrumClass | None:
        return self.expectations.spectrum_class if self.expectations else None

    @property
    def rank_deficient(self) -> bool:
        return len(self.minor) < self.dims.n

    def default_lam(self) -> NDArray[np.float64]:
        if self.defaults.lam is not None:
            return np.asarray(self.defaults.lam, dtype=float)
        return self.chart.center


# ---------------------------------------------------------------------------
# Built-in examples
# ---------------------------------------------------------------------------


def _line_or_parabola(chart_kind: ChartKind) -> list[str]:
    if chart_kind == "line":
        return ["a1*lam", "a2*lam"]
    if chart_kind == "parabola":
        return ["a1*lam", "a2*lam**2"]
    msg = f"unknown chart kind {chart_kind!r}, expected 'line' or 'parabola'"
    raise ValueError(msg)


def example_4_1(a1: float = 1.0, a2: float = 1.0, chart_kind: ChartKind = "line") -> Scenario:
    """One elliptic normal pair over a curve in a plane of actions.

    ``N = y1 + y2^2/2 + sqrt(2)/2 (u^2 + v^2)``, so ``A = diag(0, 1)`` is singular
    and only the second frequency can be kept. The frequency map has full rank
    along the curve exactly when ``a2 != 0``.
    """
    constants = {"a1": float(a1), "a2": float(a2)}
    chart_map = PolynomialMap.parse(_line_or_parabola(chart_kind), 1, constants)
    chart = ParamChart((1.0,), (2.0,), chart_map)
    return Scenario(
        name=f"example-4.1-{chart_kind}",
        dims=Dims(2, 1),
        hamiltonian="y1 + y2**2/2 + sqrt(2)/2*(u**2 + v**2)",
        chart=chart,
        constants=constants,
        expectations=ConditionExpectations(
            A1_prime=a2 != 0.0,
            A_singular=True,
            d=1,
            minor=(1,),
            spectrum_class="elliptic",
        ),
        defaults=ScenarioDefaults(lam=(1.3,)),
        description="elliptic, A singular (d=1), second frequency locked",
    )


def example_4_2(a1: float = 1.0, a2: float = 1.0, chart_kind: ChartKind = "line") -> Scenario:
    """Two elliptic normal pairs with ``A = diag(1, 2 y2)``.

    The frequency map has full rank along the curve exactly when ``a1 a2 != 0``;
    ``A`` is nonsingular on the chart when ``a2 != 0`` and then both
    frequencies are kept.
    """
    constants = {"a1": float(a1), "a2": float(a2)}
    chart_map = PolynomialMap.parse(_line_or_parabola(chart_kind), 1, constants)
    chart = ParamChart((1.0,), (2.0,), chart_map)
    singular = a2 == 0.0
    return Scenario(
        name=f"example-4.2-{chart_kind}",
        dims=Dims(2, 2),
        hamiltonian="y1**2/2 + y2**3/3 + sqrt(2)/2*(u1**2 + v1**2) + sqrt(3)/2*(u2**2 + v2**2)",
        chart=chart,
        constants=constants,
        expectations=ConditionExpectations(
            A1_prime=a1 * a2 != 0.0,
            A_singular=singular,
            d=1 if singular else 2,
            minor=(0,) if singular else (0, 1),
            spectrum_class="elliptic",
        ),
        perturbation=PerturbationSpec(k_max=2, degree_max=2),
        defaults=ScenarioDefaults(lam=(1.55,)),
        description="elliptic, A nonsingular, all frequencies locked",
    )


def example_4_3(a: float = 1.0) -> Scenario:
    """Hyperbolic tori on the plane ``y3 = a`` of a three-action system.

    Raises:
        ValueError: ``a == 0``, where the frequency map loses rank
    """
    if a == 0.0:
        msg = "the hyperplane y3 = a needs a != 0"
        raise ValueError(msg)
    constants = {"a": float(a)}
    chart = ParamChart(
        (1.0, 1.0), (2.0, 2.0), PolynomialMap.parse(["lam1", "lam2", "a"], 2, constants), grid=41
    )
    return Scenario(
        name="example-4.3",
        dims=Dims(3, 2),
        hamiltonian="(y1**2 + y2**2 + y3**2)/2 + (u1**2 - v1**2)/2 + u2**2/2 - 3*v2**2/2",
        chart=chart,
        constants=constants,
        expectations=ConditionExpectations(
            A1_prime=True,
            A_singular=False,
            d=3,
            minor=(0, 1, 2),
            spectrum_class="hyperbolic",
        ),
        perturbation=PerturbationSpec(k_max=4, degree_max=2),
        defaults=ScenarioDefaults(lam=(1.41421356, 1.73205081)),
        description="hyperbolic, A = I, resonance sets are lines",
    )


BUILTIN_SCENARIOS: dict[str, Callable[[], Scenario]] = {
    "example-4.1-line": partial(example_4_1, chart_kind="line"),
    "example-4.1-parabola": partial(example_4_1, chart_kind="parabola"),
    "example-4.2-line": partial(example_4_2, chart_kind="line"),
    "example-4.2-parabola": partial(example_4_2, chart_kind="parabola"),
    "example-4.3": example_4_3,
}


def resolve_scenario(source: str | Path) -> Scenario:
    """A builtin by name, otherwise a scenario file.

    Raises:
        ScenarioFormatError: Neither a builtin name nor a readable scenario file
    """
    if isinstance(source, str) and source in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[source]()
    path = Path(source)
    if not path.is_file():
        known = ", ".join(BUILTIN_SCENARIOS)
        msg = f"{source!s} is neither a builtin scenario ({known}) nor a file"
        raise ScenarioFormatError(msg, field="scenario")
    return load_scenario(path)


# ---------------------------------------------------------------------------
# Perturbations
# ---------------------------------------------------------------------------


def monomial_exponents(variables: int, degree_max: int) -> NDArray[np.int64]:
    """Exponent rows over ``variables`` unknowns with total degree at most ``degree_max``."""
    rows = [np.zeros(variables, dtype=np.int64)]
    for total in range(1, degree_max + 1):
        for combo in itertools.combinations_with_replacement(range(variables), total):
            rows.append(np.bincount(combo, minlength=variables).astype(np.int64))
    return np.array(rows, dtype=np.int64).reshape(-1, variables)


def random_perturbation(
    dims: Dims,
    K_max: int,  # noqa: N803
    degree_max: int,
    amplitude: float,
    seed: int,
    weights: NormWeights,
    *,
    modes: int = 24,
) -> FTSeries:
    """A real trigonometric polynomial of majorant norm ``amplitude`` at ``weights``.

    Monomials are drawn without replacement from the half lattice ``|k| <= K_max``
    (plus ``k = 0``) times all ``(y, u)`` exponents of degree ``<= degree_max``,
    leaving out the ``k = 0`` cells of degree 0 and 1. Each drawn term gets a
    weighted contribution of random size, so no degree dominates the norm.

    Raises:
        ValueError: ``amplitude`` is negative or the shape admits no monomial
    """
    if amplitude < 0.0:
        msg = f"amplitude must be nonnegative, got {amplitude}"
        raise ValueError(msg)
    if amplitude == 0.0:
        return FTSeries.zero(dims)
    ball = lattice_ball(dims.n, K_max)
    first = ball[np.arange(ball.shape[0]), np.argmax(ball != 0, axis=1)]
    ks = ball[first >= 0]
    exponents = monomial_exponents(dims.n + dims.normal, degree_max)
    zero_k = (ks == 0).all(axis=1)
    low_degree = exponents.sum(axis=1) <= 1
    admissible = np.argwhere(~(zero_k[:, None] & low_degree[None, :]))
    if admissible.shape[0] == 0:
        msg = f"no admissible monomial with K_max={K_max}, degree_max={degree_max}"
        raise ValueError(msg)

    rng = np.random.default_rng(seed)
    picks = rng.choice(admissible.shape[0], size=min(modes, admissible.shape[0]), replace=False)
    rows = admissible[np.sort(picks)]
    keys = np.hstack([ks[rows[:, 0]], exponents[rows[:, 1]]])
    size = rng.uniform(0.1, 1.0, rows.shape[0])
    phase = rng.uniform(0.0, 2.0 * np.pi, rows.shape[0])
    phase[(keys[:, : dims.n] == 0).all(axis=1)] = 0.0
    log_weight = np.abs(keys[:, : dims.n]).sum(axis=1) * weights.r + keys[:, dims.n :].sum(
        axis=1
    ) * np.log(weights.s)
    coeffs = size * np.exp(1j * phase - log_weight)
    series = realify(FTSeries(dims, keys, coeffs))
    norm = majorant_norm(series, weights)
    logger.debug("random perturbation: %d terms, raw norm %.3e", len(series), norm)
    return scale(series, amplitude / norm)


def perturbation_amplitude(
    dims: Dims, budget: StepBudget, eps0: float, mode: AmplitudeMode = "scaled"
) -> float:
    """``eps0 s0^2 gamma0^G`` in ``scaled`` mode, ``eps0`` itself in ``absolute`` mode."""
    if eps0 == 0.0:
        return 0.0
    if mode == "scaled":
        return budget.scale(dims)
    if mode == "absolute":
        return eps0
    msg = f"unknown amplitude mode {mode!r}"
    raise ValueError(msg)


def initial_model(
    scenario: Scenario,
    lam: ArrayLike | None = None,
    *,
    eps0: float | None = None,
    gamma0: float | None = None,
    tau: float | None = None,
    r0: float = 0.5,
    s0: float | None = None,
    eps_nominal: float = 1e-8,
    seed: int | None = None,
    k_max: int | None = None,
    degree_max: int | None = None,
    modes: int | None = None,
    amplitude_mode: AmplitudeMode = "scaled",
) -> tuple[ModelHamiltonian, StepBudget]:
    """Pull the scenario back at ``lam`` and attach a random perturbation.

    With ``eps0 == 0`` the budget ladder starts from ``eps_nominal`` and the
    perturbation is empty.

    Returns:
        Tuple of (model at ``lam``, step-0 budget)
    """
    defaults = scenario.defaults
    perturbation = scenario.perturbation
    eps0 = defaults.eps0 if eps0 is None else eps0
    gamma0 = defaults.gamma0 if gamma0 is None else gamma0
    tau = defaults.tau if tau is None else tau
    seed = defaults.seed if seed is None else seed
    if not 0.0 <= eps0 < 1.0:
        msg = f"eps0 must lie in [0, 1), got {eps0}"
        raise ValueError(msg)
    point = scenario.default_lam() if lam is None else np.asarray(lam, dtype=float)
    eps_budget = eps0 if eps0 > 0.0 else eps_nominal

    base = pullback_to_chart(
        scenario.N_full,
        FTSeries.zero(scenario.dims),
        scenario.chart,
        point,
        eps0=eps_budget,
        gamma0=gamma0,
        r0=r0,
        s0=s0,
        minor=scenario.minor,
    )
    dims = scenario.dims
    budget = initial_budget(
        dims, r0=r0, s0=base.weights.s, gamma0=gamma0, eps0=eps_budget, tau=tau
    )
    amplitude = perturbation_amplitude(dims, budget, eps0, amplitude_mode)
    P = random_perturbation(  # noqa: N806
        dims,
        perturbation.k_max if k_max is None else k_max,
        perturbation.degree_max if degree_max is None else degree_max,
        amplitude,
        seed,
        base.weights,
        modes=perturbation.modes if modes is None else modes,
    )
    logger.info(
        "%s at lam=%s: s0=%.3e, |P|=%.3e, minor=%s",
        scenario.name,
        point.tolist(),
        base.weights.s,
        amplitude,
        scenario.minor,
    )
    return ModelHamiltonian(base.N, base.P + P, base.weights), budget


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    msg = f"cannot write {value!r} to a scenario file"
    raise TypeError(msg)


def _toml_table(name: str | None, entries: Mapping[str, Any]) -> list[str]:
    lines = [f"[{name}]"] if name else []
    lines.extend(f"{key} = {_toml_value(value)}" for key, value in entries.items())
    return [*lines, ""]


def dumps_scenario(scenario: Scenario) -> str:
    lines = _toml_table(None, {"name": scenario.name, "description": scenario.description})
    lines += _toml_table("dims", {"n": scenario.dims.n, "m": scenario.dims.m})
    lines += _toml_table("hamiltonian", {"expression": scenario.hamiltonian})
    if scenario.constants:
        lines += _toml_table("constants", {k: float(v) for k, v in scenario.constants.items()})
    chart = scenario.chart
    lines += _toml_table(
        "chart",
        {
            "map": list(chart.map.texts),
            "lower": list(chart.lower),
            "upper": list(chart.upper),
            "grid": chart.grid,
        },
    )
    if scenario.expectations is not None:
        exp = scenario.expectations
        lines += _toml_table(
            "expectations",
            {
                "A1_prime": exp.A1_prime,
                "A_singular": exp.A_singular,
                "d": exp.d,
                "minor": list(exp.minor),
                "spectrum": exp.spectrum_class,
            },
        )
    perturbation = scenario.perturbation
    lines += _toml_table(
        "perturbation",
        {
            "k_max": perturbation.k_max,
            "degree_max": perturbation.degree_max,
            "modes": perturbation.modes,
        },
    )
    defaults = scenario.defaults
    entries: dict[str, Any] = {}
    if defaults.lam is not None:
        entries["lam"] = [float(v) for v in defaults.lam]
    entries |= {
        "eps0": defaults.eps0,
        "gamma0": defaults.gamma0,
        "tau": defaults.tau,
        "seed": defaults.seed,
    }
    lines += _toml_table("defaults", entries)
    return "\n".join(lines).rstrip() + "\n"


def dump_scenario(scenario: Scenario, path: Path) -> None:
    path.write_text(dumps_scenario(scenario))


def _require(table: Mapping[str, Any], key: str, prefix: str) -> Any:
    name = f"{prefix}.{key}" if prefix else key
    if key not in table:
        msg = "missing required field"
        raise ScenarioFormatError(msg, field=name)
    return table[key]


def _table(data: Mapping[str, Any], key: str, *, required: bool = True) -> dict[str, Any]:
    if key not in data:
        if required:
            msg = "missing required table"
            raise ScenarioFormatError(msg, field=key)
        return {}
    value = data[key]
    if not isinstance(value, dict):
        msg = "expected a table"
        raise ScenarioFormatError(msg, field=key)
    return value


def _floats(value: Any, name: str) -> tuple[float, ...]:
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) for v in value):
        msg = "expected a list of numbers"
        raise ScenarioFormatError(msg, field=name)
    return tuple(float(v) for v in value)


def _decode_line(error: tomllib.TOMLDecodeError) -> int | None:
    line = getattr(error, "lineno", None)
    if line is not None:
        return int(line)
    match = re.search(r"line (\d+)", str(error))
    return int(match.group(1)) if match else None


def loads_scenario(text: str) -> Scenario:
    """Parse scenario TOML.

    Raises:
        ScenarioFormatError: Invalid TOML (with its line number), a missing
            field (named), or an expression that does not parse
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        msg = f"invalid TOML: {e}"
        raise ScenarioFormatError(msg, line=_decode_line(e)) from e

    name = str(_require(data, "name", ""))
    dims_table = _table(data, "dims")
    try:
        dims = Dims(int(_require(dims_table, "n", "dims")), int(_require(dims_table, "m", "dims")))
    except ValueError as e:
        raise ScenarioFormatError(str(e), field="dims") from e
    hamiltonian = str(_require(_table(data, "hamiltonian"), "expression", "hamiltonian"))
    constants = {str(k): float(v) for k, v in _table(data, "constants", required=False).items()}

    chart_table = _table(data, "chart")
    texts = _require(chart_table, "map", "chart")
    if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
        msg = "expected a list of expressions"
        raise ScenarioFormatError(msg, field="chart.map")
    lower = _floats(_require(chart_table, "lower", "chart"), "chart.lower")
    upper = _floats(_require(chart_table, "upper", "chart"), "chart.upper")
    try:
        chart = ParamChart(
            lower,
            upper,
            PolynomialMap.parse(texts, len(lower), constants),
            grid=int(chart_table.get("grid", 101)),
        )
    except ValueError as e:
        if isinstance(e, ScenarioFormatError):
            raise
        raise ScenarioFormatError(str(e), field="chart") from e

    expectations = None
    if "expectations" in data:
        table = _table(data, "expectations")
        spectrum = str(_require(table, "spectrum", "expectations"))
        if spectrum not in SPECTRUM_CLASSES:
            msg = f"unknown spectrum class {spectrum!r}"
            raise ScenarioFormatError(msg, field="expectations.spectrum")
        expectations = ConditionExpectations(
            A1_prime=bool(_require(table, "A1_prime", "expectations")),
            A_singular=bool(_require(table, "A_singular", "expectations")),
            d=int(_require(table, "d", "expectations")),
            minor=tuple(int(i) for i in _require(table, "minor", "expectations")),
            spectrum_class=spectrum,  # type: ignore[arg-type]
        )

    spec_table = _table(data, "perturbation", required=False)
    perturbation = PerturbationSpec(
        k_max=int(spec_table.get("k_max", PerturbationSpec.k_max)),
        degree_max=int(spec_table.get("degree_max", PerturbationSpec.degree_max)),
        modes=int(spec_table.get("modes", PerturbationSpec.modes)),
    )
    defaults_table = _table(data, "defaults", required=False)
    lam = defaults_table.get("lam")
    defaults = ScenarioDefaults(
        lam=_floats(lam, "defaults.lam") if lam is not None else None,
        eps0=float(defaults_table.get("eps0", ScenarioDefaults.eps0)),
        gamma0=float(defaults_table.get("gamma0", ScenarioDefaults.gamma0)),
        tau=float(defaults_table.get("tau", ScenarioDefaults.tau)),
        seed=int(defaults_table.get("seed", ScenarioDefaults.seed)),
    )
    scenario = Scenario(
        name=name,
        dims=dims,
        hamiltonian=hamiltonian,
        chart=chart,
        constants=constants,
        expectations=expectations,
        perturbation=perturbation,
        defaults=defaults,
        description=str(data.get("description", "")),
    )
    # parse errors in N surface here rather than on first use
    _ = scenario.N_full
    return scenario


def load_scenario(path: Path) -> Scenario:
    return loads_scenario(Path(path).read_text())

