"""One KAM step and the iteration driver.

A step truncates the perturbation, solves the homological equation for the
averaging generator, applies the generator by Lie series, translates the
actions to lock the selected frequency components and reads off the new
normal form. Every step records its hypotheses twice: the literal inequality
from the step constants and a measured counterpart taken from the series.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Literal, NamedTuple

import numpy as np

from subtori import series_io
from subtori.divisors import (
    MelnikovCertificate,
    StepBudget,
    melnikov_scan,
    next_budget,
    tail_integral_bound,
)
from subtori.errors import (
    HypothesisError,
    LieSeriesDivergenceError,
    ResonanceExit,
    SingularNormalFormError,
)
from subtori.homological import DivisorGuard, DivisorRecord, Generator, build_generator
from subtori.model import ModelHamiltonian, NormalForm, integrable_part
from subtori.series import (
    FTSeries,
    NormWeights,
    average_over_torus,
    constant,
    constant_term,
    gradient,
    hessian,
    linear_form,
    majorant_norm,
    partial_derivative,
    poisson_bracket,
    prune,
    quadratic_form,
    shift_actions,
    truncate,
)

if TYPE_CHECKING:
    from collections.abc import Iterator, Sequence
    from pathlib import Path

    from numpy.typing import ArrayLike, NDArray

    from subtori.series import Dims

logger = logging.getLogger(__name__)

HypothesisMode = Literal["measured", "literal", "record"]
StopReason = Literal["steps", "target", "hypothesis"]

HYPOTHESES = ("H1", "H2", "H3", "H4")
LOCK_TOL = 1e-12


@dataclass(frozen=True)
class StepTolerances:
    """Numerical knobs of a step."""

    D_y: int = 2  # noqa: N815
    """Total ``(l, p)`` degree of the generator."""

    lie_tol: float = 1e-3
    """Lie series stops once a term is below ``lie_tol`` times the next budget."""

    J_max: int = 12  # noqa: N815
    """Largest Lie series order."""

    C_slack: float = 10.0  # noqa: N815
    """Constant absorbed into every measured bound."""

    hypothesis_mode: HypothesisMode = "measured"
    """Which side of H1-H4 gates a step."""

    series_k_cap: int | None = None
    """Fourier cap on intermediate Lie series terms."""

    series_degree_cap: int | None = 6
    """Degree cap on intermediate Lie series terms."""

    prune: float = 1e-6
    """Intermediate terms below ``prune`` times the next budget are dropped."""

    k_scan_cap: int = 24
    """Cap on the Fourier cutoff of membership scans and of ``R``."""

    def __post_init__(self) -> None:
        if self.D_y < 0:
            msg = f"D_y must be nonnegative, got {self.D_y}"
            raise ValueError(msg)
        if self.J_max < 1:
            msg = f"J_max must be >= 1, got {self.J_max}"
            raise ValueError(msg)
        if self.k_scan_cap < 1:
            msg = f"k_scan_cap must be >= 1, got {self.k_scan_cap}"
            raise ValueError(msg)
        if self.hypothesis_mode not in ("measured", "literal", "record"):
            msg = f"unknown hypothesis mode {self.hypothesis_mode!r}"
            raise ValueError(msg)

    def scan_cutoff(self, budget: StepBudget) -> int:
        return min(budget.K_eff, self.k_scan_cap)


# ---------------------------------------------------------------------------
# Hypotheses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HypothesisCheck:
    """Both readings of one step hypothesis."""

    name: str
    literal_lhs: float
    literal_rhs: float
    measured_lhs: float
    measured_rhs: float
    strict: bool = False
    detail: str = ""

    def _holds(self, lhs: float, rhs: float) -> bool:
        return lhs < rhs if self.strict else lhs <= rhs

    @property
    def literal_passed(self) -> bool:
        return self._holds(self.literal_lhs, self.literal_rhs)

    @property
    def measured_passed(self) -> bool:
        return self._holds(self.measured_lhs, self.measured_rhs)

    def gates(self, mode: HypothesisMode) -> bool:
        """Whether the step may proceed under ``mode``."""
        if mode == "record":
            return True
        return self.literal_passed if mode == "literal" else self.measured_passed

    def to_dict(self) -> dict[str, Any]:
        return {
            "literal": {
                "lhs": self.literal_lhs,
                "rhs": self.literal_rhs,
                "passed": self.literal_passed,
            },
            "measured": {
                "lhs": self.measured_lhs,
                "rhs": self.measured_rhs,
                "passed": self.measured_passed,
            },
        }


class Displacement(NamedTuple):
    """Majorants of the generator's vector field on the step domain."""

    angle: float
    """``max_j |dF/dy_j|``: how far angles move."""

    action: float
    """``max(|dF/dx_j|, |dF/du_a|)``: how far actions and normal variables move."""


def displacement_bound(F: FTSeries, weights: NormWeights) -> Displacement:  # noqa: N803
    """Majorant of ``|X_F|`` on ``D(r, s)``, split into angle and action parts."""
    dims = F.dims
    angle = max(
        (majorant_norm(partial_derivative(F, "y", j), weights) for j in range(dims.n)),
        default=0.0,
    )
    action = max(
        [majorant_norm(partial_derivative(F, "x", j), weights) for j in range(dims.n)]
        + [majorant_norm(partial_derivative(F, "u", a), weights) for a in range(dims.normal)],
        default=0.0,
    )
    return Displacement(angle, action)


def check_hypotheses(
    dims: Dims,
    budget: StepBudget,
    N: NormalForm,  # noqa: N803
    *,
    tail_norm: float,
    neumann_ratio: float,
    displacement: Displacement,
    P_plus_norm: float | None = None,  # noqa: N803
    C_slack: float = 10.0,  # noqa: N803
) -> dict[str, HypothesisCheck]:
    """Record H1-H3, and H4 once ``P_plus_norm`` is known.

    The literal sides use the step constants (``Gamma`` summed up to
    ``K_eff``); the measured sides use the series actually produced. The
    measured tail bound is ``C_slack eps^2 s^2 gamma^G`` at the step's own
    ``s`` and ``gamma``; H4 compares ``|P+|`` with the next budget.
    """
    n = dims.n
    gap = budget.r - budget.r_plus
    allowed = C_slack * budget.next_scale(dims)
    tail_allowed = C_slack * budget.eps * budget.scale(dims)
    a_norm = float(np.linalg.norm(N.A, 2)) if N.A.size else 0.0
    eps_gamma_s = budget.eps * (budget.Gamma + 1.0) * budget.s
    angle_room = gap / 8.0
    action_room = budget.alpha * budget.s / 8.0

    checks = {
        "H1": HypothesisCheck(
            "H1",
            literal_lhs=tail_integral_bound(n, budget.K_eff, budget.r, budget.r_plus),
            literal_rhs=budget.eps,
            measured_lhs=tail_norm,
            measured_rhs=tail_allowed,
            detail="truncation tail against eps^2 s^2 gamma^G",
        ),
        "H2": HypothesisCheck(
            "H2",
            literal_lhs=2.0 * a_norm * budget.s,
            literal_rhs=budget.gamma / float(budget.K_eff) ** (budget.tau + 1.0),
            measured_lhs=neumann_ratio,
            measured_rhs=0.5,
            detail="Neumann series for the y-dependent divisors",
        ),
        "H3": HypothesisCheck(
            "H3",
            literal_lhs=eps_gamma_s,
            literal_rhs=min(angle_room, action_room),
            measured_lhs=max(displacement.angle / angle_room, displacement.action / action_room),
            measured_rhs=1.0,
            strict=True,
            detail="domain containment of the generator flow",
        ),
    }
    if P_plus_norm is not None:
        checks["H4"] = HypothesisCheck(
            "H4",
            literal_lhs=budget.eps ** (2.0 / 9.0) * budget.Gamma,
            literal_rhs=1.0,
            measured_lhs=P_plus_norm,
            measured_rhs=allowed,
            detail="contraction of the new perturbation",
        )
    return checks


def _gate(
    checks: dict[str, HypothesisCheck],
    names: Sequence[str],
    mode: HypothesisMode,
    report: StepReport | None = None,
) -> None:
    for name in names:
        check = checks[name]
        if check.gates(mode):
            continue
        if mode == "literal":
            lhs, rhs = check.literal_lhs, check.literal_rhs
        else:
            lhs, rhs = check.measured_lhs, check.measured_rhs
        raise HypothesisError(name, lhs, rhs, f"{mode}: {check.detail}", report=report)


# ---------------------------------------------------------------------------
# Truncation and Lie series
# ---------------------------------------------------------------------------


class Truncation(NamedTuple):
    R: FTSeries
    tail: FTSeries
    tail_bound: float
    """Majorant of ``P - R`` at the shrunk weights."""


def truncate_remainder(
    P: FTSeries,  # noqa: N803
    budget: StepBudget,
    K: int | None = None,  # noqa: N803
) -> Truncation:
    """Split ``P`` into ``R`` (``|k| <= K``, degree <= 2) and the tail.

    ``K`` defaults to the budget's ``K_eff``.
    """
    cutoff = budget.K_eff if K is None else K
    R = truncate(P, cutoff, 2)  # noqa: N806
    tail = P - R
    return Truncation(R, tail, majorant_norm(tail, budget.next_weights))


@dataclass(frozen=True)
class LieSeries:
    """Result of ``H o phi_F^1`` split as ``base + correction``."""

    base: FTSeries
    correction: FTSeries
    """Sum of the ``j >= 1`` terms."""
    orders_used: int
    dropped_norm: float
    term_norms: tuple[float, ...] = ()

    @property
    def series(self) -> FTSeries:
        return self.base + self.correction


def lie_series(
    H: FTSeries,  # noqa: N803
    F: FTSeries,  # noqa: N803
    *,
    weights: NormWeights,
    tolerance: float,
    J_max: int = 12,  # noqa: N803
    prune_threshold: float = 0.0,
    k_cap: float | None = None,
    degree_cap: float | None = None,
) -> LieSeries:
    """``sum_j ad^j H / j!`` with ``ad G = {G, F}``.

    Each term is pruned at ``weights`` and the series stops at the first term
    whose majorant is below ``tolerance`` or at ``J_max``.

    Raises:
        LieSeriesDivergenceError: A term (order >= 2) is no smaller than the one
            before while still above ``tolerance``
    """
    if not F:
        return LieSeries(H, FTSeries.zero(H.dims, real=H.real), 0, 0.0)
    term = H
    pieces: list[FTSeries] = []
    norms: list[float] = []
    dropped = 0.0
    order = 0
    for j in range(1, J_max + 1):
        term = poisson_bracket(term, F, k_cap=k_cap, degree_cap=degree_cap) * (1.0 / j)
        term, lost = prune(term, weights, prune_threshold)
        dropped += lost
        size = majorant_norm(term, weights)
        order = j
        if j >= 2 and size >= norms[-1] and size >= tolerance:
            msg_detail = f"order {j} term {size:.3e} did not decrease from {norms[-1]:.3e}"
            raise LieSeriesDivergenceError("lie", size, norms[-1], msg_detail)
        norms.append(size)
        pieces.append(term)
        if size < tolerance or not term:
            break
    else:
        logger.warning(
            "Lie series reached J_max=%d with last term %.3e > tolerance %.3e",
            J_max,
            norms[-1],
            tolerance,
        )
    correction = FTSeries.zero(H.dims, real=H.real)
    for piece in pieces:
        correction = correction + piece
    logger.debug("Lie series: %d orders, term norms %s", order, [f"{v:.2e}" for v in norms])
    return LieSeries(H, correction, order, dropped, tuple(norms))


def averaging_transform(
    H: FTSeries,  # noqa: N803
    generator: Generator | FTSeries,
    budget: StepBudget,
    tols: StepTolerances | None = None,
) -> LieSeries:
    """``H o phi_F^1`` by Lie series, with tolerance relative to the next budget."""
    tols = tols or StepTolerances()
    F = generator.F if isinstance(generator, Generator) else generator  # noqa: N806
    scale = budget.next_scale(H.dims)
    return lie_series(
        H,
        F,
        weights=budget.next_weights,
        tolerance=tols.lie_tol * scale,
        J_max=tols.J_max,
        prune_threshold=tols.prune * scale,
        k_cap=tols.series_k_cap,
        degree_cap=tols.series_degree_cap,
    )


def first_order_defect(
    lie: LieSeries,
    R: FTSeries,  # noqa: N803
    F: FTSeries,  # noqa: N803
    integrable: FTSeries | None = None,
    overflow: FTSeries | None = None,
) -> FTSeries:
    """``H o phi_F^1`` minus its first-order image.

    The image is ``N + [R] - <p001, u> - <p011 y, u> + (P - R)``, plus
    ``I + {I, F}`` when ``H`` carries an integrable part ``I`` and the
    homological ``overflow`` above the generator's degree cap. Everything left
    is of second order in ``P``. The subtraction is done on the correction so
    ``N`` never cancels against itself.
    """
    zero_mode = (R.k == 0).all(axis=1) & (R.p.sum(axis=1) == 1)
    defect = lie.correction + R - average_over_torus(R) + R.select(zero_mode)
    if integrable:
        defect = defect - poisson_bracket(integrable, F)
    if overflow:
        defect = defect - overflow
    return defect


def first_order_allowance(
    budget: StepBudget, dims: Dims, eps: float, C_slack: float  # noqa: N803
) -> float:
    """``C_slack eps^2 s^2 gamma^G`` with ``eps`` at least the budget's."""
    size = max(eps, budget.eps)
    return C_slack * size**2 * budget.s**2 * budget.gamma**dims.gamma_exponent


# ---------------------------------------------------------------------------
# Translation
# ---------------------------------------------------------------------------


class Translation(NamedTuple):
    N_plus: NormalForm
    P_plus: FTSeries
    y_star: NDArray[np.float64]
    psi: FTSeries
    """Low-order ``k = 0`` leftovers of the shift, moved into ``P_plus``."""


def translation_step(Q: FTSeries, N: NormalForm) -> Translation:  # noqa: N803
    """Translate actions so the minor components of the frequency stay fixed.

    ``Q`` is the transformed Hamiltonian minus ``N``; it is passed separately so
    the new perturbation never comes from subtracting the order-one normal form.
    With ``d = 0`` the translation is skipped.

    Raises:
        SingularNormalFormError: The principal minor is singular
    """
    dims = N.dims
    average = average_over_torus(Q)
    p010 = gradient(average, "y").real
    p020 = hessian(average, "y").real
    p002 = hessian(average, "u").real

    y_star = np.zeros(dims.n)
    if N.d:
        minor = list(N.minor_indices)
        try:
            y_star[minor] = np.linalg.solve(N.A_minor, -p010[minor])
        except np.linalg.LinAlgError as e:
            msg = f"principal minor {N.minor_indices} is singular"
            raise SingularNormalFormError(msg) from e

    shifted = shift_actions(Q, y_star)
    e_plus = N.e + float(N.omega @ y_star) + 0.5 * float(y_star @ N.A @ y_star)
    e_plus += constant_term(shifted).real
    omega_plus = N.omega + p010 + N.A @ y_star
    N_plus = N.updated(e=e_plus, omega=omega_plus, A=N.A + p020, M=N.M + p002)  # noqa: N806

    absorbed = (
        constant(dims, constant_term(shifted).real)
        + linear_form(dims, "y", p010)
        + quadratic_form(dims, "y", p020)
    )
    if dims.m:
        absorbed = absorbed + quadratic_form(dims, "u", p002)
    P_plus = shifted - absorbed  # noqa: N806
    leftovers = (P_plus.k == 0).all(axis=1) & (P_plus.degrees <= 2)
    return Translation(N_plus, P_plus, y_star, P_plus.select(leftovers))


# ---------------------------------------------------------------------------
# Step
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepReport:
    """Everything measured in one step."""

    step: int
    budget: StepBudget
    norms: dict[str, float]
    hypotheses: dict[str, HypothesisCheck]
    drift: dict[str, float]
    freq_lock: float
    lie_orders_used: int
    dropped_tail_norm: float
    k_scan: int
    divisor_count: int
    max_neumann_ratio: float
    eps_measured: float
    """``|P| / (s^2 gamma^G)`` at the step weights."""
    eps_measured_plus: float
    """``|P+| / (s+^2 gamma+^G)`` at the next weights."""
    y_star: tuple[float, ...]
    omega_plus: tuple[float, ...]

    @property
    def lock_ok(self) -> bool:
        scale = 1.0 + max((abs(v) for v in self.omega_plus), default=0.0)
        return self.freq_lock <= LOCK_TOL * scale

    @property
    def contraction_ok(self) -> bool:
        if self.eps_measured == 0.0:
            return self.eps_measured_plus == 0.0
        return self.eps_measured_plus <= self.eps_measured ** (10.0 / 9.0)

    def passed(self, mode: HypothesisMode) -> bool:
        return all(check.gates(mode) for check in self.hypotheses.values())

    def to_dict(self) -> dict[str, Any]:
        b = self.budget
        return {
            "step": self.step,
            "budget": {
                "r": b.r,
                "s": b.s,
                "gamma": b.gamma,
                "eps": b.eps,
                "K_plus": b.K_plus,
                "K_eff": b.K_eff,
                "log_Gamma": b.log_Gamma,
                "r_plus": b.r_plus,
                "s_plus": b.s_plus,
                "gamma_plus": b.gamma_plus,
                "eps_plus": b.eps_plus,
            },
            "norms": dict(self.norms),
            "hypotheses": {name: check.to_dict() for name, check in self.hypotheses.items()},
            "drift": dict(self.drift),
            "freq_lock": self.freq_lock,
            "lock_ok": self.lock_ok,
            "lie_orders_used": self.lie_orders_used,
            "dropped_tail_norm": self.dropped_tail_norm,
            "k_scan": self.k_scan,
            "divisor_count": self.divisor_count,
            "max_neumann_ratio": self.max_neumann_ratio,
            "eps_measured": self.eps_measured,
            "eps_measured_plus": self.eps_measured_plus,
            "contraction_ok": self.contraction_ok,
            "y_star": list(self.y_star),
            "omega_plus": list(self.omega_plus),
        }


@dataclass(frozen=True)
class StepResult:
    model: ModelHamiltonian
    generator: Generator
    report: StepReport
    budget: StepBudget
    """Budget of the following step."""


def _normalized(norm: float, s: float, gamma: float, dims: Dims) -> float:
    return norm / (s**2 * gamma**dims.gamma_exponent)


def _matrix_drift(before: NDArray[np.float64], after: NDArray[np.float64]) -> float:
    return float(np.abs(after - before).max(initial=0.0))


def kam_step(
    model: ModelHamiltonian,
    budget: StepBudget,
    tols: StepTolerances | None = None,
) -> StepResult:
    """One KAM step from ``model`` at ``budget``.

    Raises:
        HypothesisError: A gating hypothesis fails (the report so far is attached)
        ResonantDivisorError: A divisor is below its floor
        LieSeriesDivergenceError: The Lie series stops decreasing
    """
    tols = tols or StepTolerances()
    model = model.split_integrable()
    N, P, integrable = model.N, model.P, model.integrable  # noqa: N806
    dims = N.dims
    weights = budget.weights
    next_weights = budget.next_weights
    k_scan = tols.scan_cutoff(budget)

    truncation = truncate_remainder(P, budget, k_scan)
    guard = DivisorGuard(budget.gamma, budget.tau)
    generator = build_generator(
        N, truncation.R, guard, tols.D_y, s=budget.s, residual_weights=weights
    )
    displacement = displacement_bound(generator.F, weights)
    checks = check_hypotheses(
        dims,
        budget,
        N,
        tail_norm=truncation.tail_bound,
        neumann_ratio=generator.max_neumann_ratio,
        displacement=displacement,
        C_slack=tols.C_slack,
    )
    _gate(checks, ("H1", "H2", "H3"), tols.hypothesis_mode)

    H = N.to_series() + P  # noqa: N806
    Q = P  # noqa: N806
    if integrable is not None:
        H, Q = H + integrable, Q + integrable  # noqa: N806
    lie = averaging_transform(H, generator, budget, tols)

    P_norm = majorant_norm(P, weights)  # noqa: N806
    eps_measured = _normalized(P_norm, budget.s, budget.gamma, dims)
    defect = majorant_norm(
        first_order_defect(
            lie, truncation.R, generator.F, integrable, overflow=generator.overflow
        ),
        next_weights,
    )
    defect_allowed = first_order_allowance(budget, dims, eps_measured, tols.C_slack)
    if defect > defect_allowed and tols.hypothesis_mode != "record":
        raise HypothesisError(
            "first-order",
            defect,
            defect_allowed,
            "transformed Hamiltonian departs from N + [R] + (P - R) at first order",
        )

    translation = translation_step(Q + lie.correction, N)
    N_plus = translation.N_plus  # noqa: N806
    integrable_plus, P_plus = integrable_part(translation.P_plus)  # noqa: N806
    generator = generator.with_translation(translation.y_star)

    P_plus_norm = majorant_norm(P_plus, next_weights)  # noqa: N806
    checks = check_hypotheses(
        dims,
        budget,
        N,
        tail_norm=truncation.tail_bound,
        neumann_ratio=generator.max_neumann_ratio,
        displacement=displacement,
        P_plus_norm=P_plus_norm,
        C_slack=tols.C_slack,
    )
    minor = list(N.minor_indices)
    freq_lock = float(np.abs(N_plus.omega[minor] - N.omega[minor]).max()) if minor else 0.0
    lemma_scale = budget.eps * budget.scale(dims)
    report = StepReport(
        step=budget.step,
        budget=budget,
        norms={
            "P": P_norm,
            "R": majorant_norm(truncation.R, weights),
            "P_minus_R": truncation.tail_bound,
            "tail_constant": truncation.tail_bound / lemma_scale if lemma_scale > 0 else 0.0,
            "F": majorant_norm(generator.F, weights),
            "P_plus": P_plus_norm,
            "I": majorant_norm(integrable, weights) if integrable is not None else 0.0,
            "first_order": defect,
            "first_order_bound": defect_allowed,
        },
        hypotheses=checks,
        drift={
            "e": abs(N_plus.e - N.e),
            "omega": _matrix_drift(N.omega, N_plus.omega),
            "A": _matrix_drift(N.A, N_plus.A),
            "M": _matrix_drift(N.M, N_plus.M),
            "y_star": float(np.abs(translation.y_star).max(initial=0.0)),
        },
        freq_lock=freq_lock,
        lie_orders_used=lie.orders_used,
        dropped_tail_norm=lie.dropped_norm,
        k_scan=k_scan,
        divisor_count=len(generator.divisor_log),
        max_neumann_ratio=generator.max_neumann_ratio,
        eps_measured=eps_measured,
        eps_measured_plus=_normalized(P_plus_norm, budget.s_plus, budget.gamma_plus, dims),
        y_star=tuple(float(v) for v in translation.y_star),
        omega_plus=tuple(float(v) for v in N_plus.omega),
    )
    if not report.lock_ok:
        logger.warning("step %d: frequency lock drifted by %.3e", budget.step, freq_lock)
    logger.info(
        "step %d: |P|=%.3e |P+|=%.3e eps %.3e -> %.3e, lock %.1e",
        budget.step,
        P_norm,
        P_plus_norm,
        report.eps_measured,
        report.eps_measured_plus,
        freq_lock,
    )
    _gate(checks, ("H4",), tols.hypothesis_mode, report)

    following = next_budget(dims, budget)
    model_plus = ModelHamiltonian(
        N_plus, P_plus, following.weights, integrable_plus if integrable_plus else None
    )
    return StepResult(model_plus, generator, report, following)


# ---------------------------------------------------------------------------
# Chains and iteration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainLink:
    F: FTSeries
    y_star: NDArray[np.float64]
    divisor_log: tuple[DivisorRecord, ...] = field(default=(), repr=False, compare=False)
    """Solved cells of the step (not serialized)."""


@dataclass
class TransformChain:
    """The links ``(F_nu, y*_nu)`` of ``Psi = Phi_1 o ... o Phi_nu``.

    Each ``Phi`` maps ``z`` to ``phi_F^1(z + y*)`` (the shift acts on actions).
    """

    links: list[ChainLink] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.links)

    def __iter__(self) -> Iterator[ChainLink]:
        return iter(self.links)

    def append(self, generator: Generator) -> None:
        self.links.append(
            ChainLink(
                generator.F, np.asarray(generator.y_star, dtype=float), generator.divisor_log
            )
        )

    def dumps(self) -> str:
        return series_io.dumps_chain([(link.F, link.y_star) for link in self.links])

    @classmethod
    def loads(cls, text: str) -> TransformChain:
        return cls([ChainLink(F, y_star) for F, y_star in series_io.loads_chain(text)])

    def dump(self, path: Path) -> None:
        path.write_text(self.dumps())

    @classmethod
    def load(cls, path: Path) -> TransformChain:
        return cls.loads(path.read_text())


@dataclass(frozen=True)
class IterationResult:
    chain: TransformChain
    reports: list[StepReport]
    model: ModelHamiltonian
    """Model after the last completed step."""
    budget: StepBudget
    """Budget the next step would use."""
    stop_reason: StopReason
    failure: HypothesisError | None = None

    @property
    def steps(self) -> int:
        return len(self.reports)


def membership_scan(
    model: ModelHamiltonian,
    budget: StepBudget,
    tols: StepTolerances,
    lam: Sequence[float] | None = None,
) -> MelnikovCertificate:
    """Melnikov scan of the current normal form at the budget's ``gamma``."""
    return melnikov_scan(
        model.N, None, budget.gamma, budget.tau, tols.scan_cutoff(budget), half=True, lam=lam
    )


def run_iteration(
    model: ModelHamiltonian,
    budget: StepBudget,
    steps: int,
    *,
    target_eps: float | None = None,
    tols: StepTolerances | None = None,
    lam: Sequence[float] | None = None,
    check_membership: bool = True,
) -> IterationResult:
    """Iterate :func:`kam_step` up to ``steps`` times.

    Stops early when the measured normalized size of ``P`` falls below
    ``target_eps`` or at the first failed hypothesis.

    Raises:
        ResonanceExit: The parameter fails the membership scan before a step;
            the partial result is attached as ``partial``
    """
    tols = tols or StepTolerances()
    chain = TransformChain()
    reports: list[StepReport] = []
    current, current_budget = model, budget

    def partial(reason: StopReason, failure: HypothesisError | None = None) -> IterationResult:
        return IterationResult(chain, reports, current, current_budget, reason, failure)

    for _ in range(steps):
        if check_membership:
            certificate = membership_scan(current, current_budget, tols, lam)
            if not certificate.passed:
                worst = certificate.worst()
                logger.warning(
                    "step %d: resonance at k=%s l=%s, margin %.3e < %.3e",
                    current_budget.step,
                    worst.k,
                    worst.l,
                    worst.margin,
                    worst.threshold,
                )
                raise ResonanceExit(current_budget.step, certificate, partial=partial("steps"))
        try:
            result = kam_step(current, current_budget, tols)
        except HypothesisError as e:
            logger.warning("step %d stopped: %s", current_budget.step, e)
            return partial("hypothesis", e)
        reports.append(result.report)
        chain.append(result.generator)
        current, current_budget = result.model, result.budget
        if target_eps is not None and result.report.eps_measured_plus <= target_eps:
            return partial("target")
    return partial("steps")


@dataclass(frozen=True)
class TelescopedBound:
    """Cumulative drift of one quantity against its summed formula bound."""

    step: int
    quantity: str
    measured: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.measured <= self.bound


def _drift_scale(quantity: str, budget: StepBudget, dims: Dims) -> float:
    base = budget.eps * budget.gamma**dims.gamma_exponent
    return base if quantity in ("A", "M") else base * budget.s


def telescoped_bounds(
    reports: Sequence[StepReport], dims: Dims, C_slack: float = 10.0  # noqa: N803
) -> list[TelescopedBound]:
    """Running sums of every drift next to ``C_slack * sum eps s gamma^G``-type bounds.

    ``e``, ``omega`` and ``y*`` scale with ``eps s gamma^G``; ``A`` and ``M``
    with ``eps gamma^G``.
    """
    quantities = ("e", "omega", "A", "M", "y_star")
    measured = dict.fromkeys(quantities, 0.0)
    bound = dict.fromkeys(quantities, 0.0)
    out: list[TelescopedBound] = []
    for report in reports:
        scale_omega = 1.0 + max((abs(v) for v in report.omega_plus), default=0.0)
        for quantity in quantities:
            measured[quantity] += report.drift[quantity]
            factor = scale_omega if quantity == "e" else 1.0
            bound[quantity] += C_slack * factor * _drift_scale(quantity, report.budget, dims)
            out.append(TelescopedBound(report.step, quantity, measured[quantity], bound[quantity]))
    return out


def frequency_drift(
    reports: Sequence[StepReport], omega0: ArrayLike, minor: Sequence[int]
) -> float:
    """Largest deviation of the locked components from ``omega0`` over a run."""
    if not minor or not reports:
        return 0.0
    base = np.asarray(omega0, dtype=float)[list(minor)]
    return max(
        float(np.abs(np.asarray(report.omega_plus)[list(minor)] - base).max())
        for report in reports
    )


def scaled_lock_tolerance(omega: ArrayLike) -> float:
    return LOCK_TOL * (1.0 + float(np.abs(np.asarray(omega, dtype=float)).max(initial=0.0)))

