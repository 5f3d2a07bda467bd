"""Dynamical check of the tori produced by an iteration.

Seeds on ``T^n x {0} x {0}`` are pushed through the transform chain into the
coordinates of the initial model, integrated along its flow and pulled back.
The generator flows are integrated numerically here, independently of the Lie
series used by the engine.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy.integrate import solve_ivp

from subtori.errors import IntegrationError
from subtori.series import FTSeries, evaluate_many, partial_derivative

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

    from subtori.engine import ChainLink, TransformChain
    from subtori.series import Dims

logger = logging.getLogger(__name__)

METHOD = "DOP853"


class VectorField:
    """``x' = H_y``, ``y' = -H_x``, ``u' = J^T H_u`` for a real series ``H``.

    All derivative series are stacked into one term table so a whole batch of
    points is evaluated with a single matrix product.
    """

    def __init__(self, H: FTSeries, *, sign: float = 1.0) -> None:  # noqa: N803
        if not H.real:
            msg = "vector fields need a real-flagged Hamiltonian"
            raise ValueError(msg)
        self.dims = H.dims
        n, m = self.dims.n, self.dims.m
        parts: list[tuple[FTSeries, int, float]] = []
        for j in range(n):
            parts.append((partial_derivative(H, "y", j), j, sign))
            parts.append((partial_derivative(H, "x", j), n + j, -sign))
        for q in range(m):
            u_index, v_index = 2 * q, 2 * q + 1
            parts.append((partial_derivative(H, "u", v_index), 2 * n + u_index, -sign))
            parts.append((partial_derivative(H, "u", u_index), 2 * n + v_index, sign))
        keys = [part.keys for part, _, _ in parts]
        coeffs = [part.coeffs * factor for part, _, factor in parts]
        rows = [np.full(len(part), row, dtype=np.int64) for part, row, _ in parts]
        self._keys = np.concatenate([np.zeros((0, self.dims.width), dtype=np.int64), *keys])
        self._coeffs = np.concatenate([np.zeros(0, dtype=np.complex128), *coeffs])
        term_rows = np.concatenate([np.zeros(0, dtype=np.int64), *rows])
        self._scatter = np.zeros((term_rows.shape[0], self.dimension))
        self._scatter[np.arange(term_rows.shape[0]), term_rows] = 1.0

    @property
    def dimension(self) -> int:
        return 2 * self.dims.n + self.dims.normal

    def many(self, states: ArrayLike) -> NDArray[np.float64]:
        """Evaluate at ``(P, 2n + 2m)`` states."""
        z = np.asarray(states, dtype=float).reshape(-1, self.dimension)
        out = np.zeros_like(z)
        if self._coeffs.shape[0] == 0:
            return out
        n = self.dims.n
        k = self._keys[:, :n]
        powers = self._keys[:, n:]
        phase = np.exp(1j * (z[:, :n] @ k.T))
        monomial = np.prod(z[:, None, n:] ** powers[None, :, :], axis=2)
        values = (phase * monomial * self._coeffs[None, :]).real
        return values @ self._scatter

    def __call__(self, t: float, z: NDArray[np.float64]) -> NDArray[np.float64]:  # noqa: ARG002
        return self.many(z).reshape(-1)


def vector_field(H: FTSeries) -> VectorField:  # noqa: N803
    return VectorField(H)


def split_state(dims: Dims, states: ArrayLike) -> tuple[NDArray[np.float64], ...]:
    """Split ``(P, 2n + 2m)`` states into ``x``, ``y``, ``u``."""
    z = np.asarray(states, dtype=float).reshape(-1, 2 * dims.n + dims.normal)
    return z[:, : dims.n], z[:, dims.n : 2 * dims.n], z[:, 2 * dims.n :]


def energy(H: FTSeries, states: ArrayLike) -> NDArray[np.float64]:  # noqa: N803
    x, y, u = split_state(H.dims, states)
    return evaluate_many(H, x, y, u).real


@dataclass(frozen=True)
class TrajectorySample:
    """One integrated trajectory, in the coordinates of the integrated Hamiltonian."""

    t: NDArray[np.float64]
    states: NDArray[np.float64]
    """Shape ``(len(t), 2n + 2m)``."""
    energy: NDArray[np.float64]
    deviation: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    """Distance of the pulled-back state from the torus (empty when not computed)."""
    deviation_rows: NDArray[np.int64] = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    """Sample rows at which ``deviation`` was measured."""
    complete: bool = True
    message: str = ""

    @property
    def energy_drift(self) -> float:
        if self.energy.shape[0] == 0:
            return 0.0
        return float(np.abs(self.energy - self.energy[0]).max())

    def with_deviation(self, deviation: ArrayLike, rows: ArrayLike) -> TrajectorySample:
        return TrajectorySample(
            self.t,
            self.states,
            self.energy,
            np.asarray(deviation, dtype=float),
            np.asarray(rows, dtype=np.int64),
            self.complete,
            self.message,
        )

    def deviation_column(self) -> NDArray[np.float64]:
        """Deviation per sample row, ``nan`` where it was not measured."""
        column = np.full(self.t.shape[0], np.nan)
        column[self.deviation_rows] = self.deviation
        return column


def integrate(
    vector: VectorField,
    z0: ArrayLike,
    T: float,  # noqa: N803
    tol: float,
    *,
    samples: int = 401,
    hamiltonian: FTSeries | None = None,
) -> TrajectorySample:
    """Integrate ``vector`` from ``z0`` over ``[0, T]`` with DOP853.

    A failed integration returns the samples reached so far with
    ``complete=False``.
    """
    if tol <= 0:
        msg = f"tolerance must be positive, got {tol}"
        raise ValueError(msg)
    t_eval = np.linspace(0.0, T, samples)
    sol = solve_ivp(
        vector,
        (0.0, T),
        np.asarray(z0, dtype=float).reshape(-1),
        method=METHOD,
        t_eval=t_eval,
        rtol=tol,
        atol=tol,
    )
    states = sol.y.T
    values = energy(hamiltonian, states) if hamiltonian is not None else np.zeros(0)
    if sol.status != 0:
        reached = sol.t[-1] if sol.t.size else 0.0
        logger.warning("integration stopped at t=%.3g: %s", reached, sol.message)
    return TrajectorySample(sol.t, states, values, complete=sol.status == 0, message=sol.message)


def _flow(
    vector: VectorField, points: NDArray[np.float64], duration: float, tol: float
) -> NDArray[np.float64]:
    if duration == 0.0 or points.shape[0] == 0:
        return points.copy()
    sol = solve_ivp(
        vector,
        (0.0, duration),
        points.reshape(-1),
        method=METHOD,
        t_eval=[duration],
        rtol=tol,
        atol=tol,
    )
    if sol.status != 0 or sol.y.shape[1] == 0:
        msg = f"generator flow failed: {sol.message}"
        raise IntegrationError(msg)
    return sol.y[:, -1].reshape(points.shape)


def generator_flow(
    F: FTSeries,  # noqa: N803
    points: ArrayLike,
    time: float,
    tol: float = 1e-12,
) -> NDArray[np.float64]:
    """``phi_F^time`` applied to a batch of points.

    The Lie transform uses ``dG/dt = {G, F}``, so ``phi_F^t`` is the
    time ``-t`` map of the physical flow of ``F``.

    Raises:
        IntegrationError: The flow could not be integrated
    """
    dims = F.dims
    pts = np.asarray(points, dtype=float).reshape(-1, 2 * dims.n + dims.normal)
    return _flow(VectorField(F, sign=-1.0), pts, time, tol)


def _translate(link: ChainLink, points: NDArray[np.float64], sign: float) -> NDArray[np.float64]:
    n = link.F.dims.n
    out = points.copy()
    out[:, n : 2 * n] += sign * link.y_star
    return out


def link_forward(link: ChainLink, points: ArrayLike, tol: float = 1e-12) -> NDArray[np.float64]:
    """``Phi(z) = phi_F^1(z + y*)``."""
    dims = link.F.dims
    pts = np.asarray(points, dtype=float).reshape(-1, 2 * dims.n + dims.normal)
    return generator_flow(link.F, _translate(link, pts, 1.0), 1.0, tol)


def link_inverse(link: ChainLink, points: ArrayLike, tol: float = 1e-12) -> NDArray[np.float64]:
    dims = link.F.dims
    pts = np.asarray(points, dtype=float).reshape(-1, 2 * dims.n + dims.normal)
    return _translate(link, generator_flow(link.F, pts, -1.0, tol), -1.0)


def chain_forward(
    chain: TransformChain, points: ArrayLike, tol: float = 1e-12
) -> NDArray[np.float64]:
    """``Psi = Phi_1 o ... o Phi_nu``: final coordinates to original ones."""
    out = np.asarray(points, dtype=float)
    for link in reversed(chain.links):
        out = link_forward(link, out, tol)
    return out


def chain_inverse(
    chain: TransformChain, points: ArrayLike, tol: float = 1e-12
) -> NDArray[np.float64]:
    out = np.asarray(points, dtype=float)
    for link in chain.links:
        out = link_inverse(link, out, tol)
    return out


def chain_round_trip(chain: TransformChain, points: ArrayLike, tol: float = 1e-12) -> float:
    """Largest ``|Psi^-1(Psi(z)) - z|`` over ``points``."""
    start = np.asarray(points, dtype=float)
    back = chain_inverse(chain, chain_forward(chain, start, tol), tol)
    return float(np.abs(back - start.reshape(back.shape)).max(initial=0.0))


def rotation_vector(
    t: ArrayLike, angles: ArrayLike, *, wrapped: bool = False
) -> NDArray[np.float64]:
    """Least-squares slope of the angle track over ``[T/2, T]``."""
    times = np.asarray(t, dtype=float)
    track = np.asarray(angles, dtype=float).reshape(times.shape[0], -1)
    if wrapped:
        track = np.unwrap(track, axis=0)
    tail = times >= times[-1] / 2.0
    if tail.sum() < 2:
        msg = "need at least two samples in [T/2, T]"
        raise ValueError(msg)
    design = np.column_stack([times[tail], np.ones(int(tail.sum()))])
    solution, *_ = np.linalg.lstsq(design, track[tail], rcond=None)
    return solution[0]


def torus_seeds(dims: Dims, count: int, seed: int = 0) -> NDArray[np.float64]:
    """``count`` random points on ``T^n x {0} x {0}``."""
    rng = np.random.default_rng(seed)
    points = np.zeros((count, 2 * dims.n + dims.normal))
    points[:, : dims.n] = rng.uniform(0.0, 2.0 * np.pi, size=(count, dims.n))
    return points


@dataclass(frozen=True)
class VerificationReport:
    max_deviation: float
    rotation: NDArray[np.float64]
    """Mean rotation vector over the seeds."""
    rotation_spread: float
    lock_error: float
    """Largest ``|rotation_i - omega_i|`` over the locked components."""
    energy_drift: float
    T: float
    deviation_budget: float
    samples: list[TrajectorySample] = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.deviation_budget

    def to_dict(self) -> dict[str, object]:
        return {
            "max_deviation": self.max_deviation,
            "deviation_budget": self.deviation_budget,
            "passed": self.passed,
            "rotation": self.rotation.tolist(),
            "rotation_spread": self.rotation_spread,
            "lock_error": self.lock_error,
            "energy_drift": self.energy_drift,
            "T": self.T,
            "seeds": len(self.samples),
        }


def verify_torus(
    chain: TransformChain,
    H0: FTSeries,  # noqa: N803
    *,
    omega: ArrayLike,
    minor: Sequence[int] = (),
    seeds: int = 10,
    T: float = 100.0,  # noqa: N803
    tol: float = 1e-10,
    samples: int = 401,
    deviation_samples: int = 21,
    deviation_budget: float = 1e-5,
    seed: int = 0,
) -> VerificationReport:
    """Integrate torus seeds under ``H0`` and measure invariance and rotation.

    Args:
        chain: Transform chain of a finished iteration (may be empty)
        H0: Initial model Hamiltonian, in the coordinates the chain maps into
        omega: Reference frequencies for the locked components
        minor: Locked components
        seeds: Number of seed points on the torus
        T: Integration horizon
        tol: Integrator tolerance
        samples: Output samples per trajectory
        deviation_samples: Samples at which the state is pulled back
        deviation_budget: Allowed deviation from the torus
        seed: Seed of the angle draws

    Raises:
        IntegrationError: A trajectory or a pull-back flow failed
    """
    dims = H0.dims
    start = chain_forward(chain, torus_seeds(dims, seeds, seed), tol)
    flow_field = VectorField(H0)
    pick = np.unique(np.linspace(0, samples - 1, deviation_samples).round().astype(int))

    trajectories: list[TrajectorySample] = []
    rotations: list[NDArray[np.float64]] = []
    for z0 in start:
        sample = integrate(flow_field, z0, T, tol, samples=samples, hamiltonian=H0)
        if not sample.complete:
            msg = f"trajectory integration failed: {sample.message}"
            raise IntegrationError(msg, sample)
        pulled = chain_inverse(chain, sample.states[pick], tol)
        _, y, u = split_state(dims, pulled)
        deviation = np.abs(np.concatenate([y, u], axis=1)).max(axis=1, initial=0.0)
        trajectories.append(sample.with_deviation(deviation, pick))
        rotations.append(rotation_vector(sample.t, sample.states[:, : dims.n]))

    stacked = np.array(rotations)
    rotation = stacked.mean(axis=0)
    reference = np.asarray(omega, dtype=float)
    locked = list(minor)
    lock_error = float(np.abs(rotation[locked] - reference[locked]).max()) if locked else 0.0
    report = VerificationReport(
        max_deviation=max(float(s.deviation.max(initial=0.0)) for s in trajectories),
        rotation=rotation,
        rotation_spread=float(np.ptp(stacked, axis=0).max(initial=0.0)),
        lock_error=lock_error,
        energy_drift=max(s.energy_drift for s in trajectories),
        T=T,
        deviation_budget=deviation_budget,
        samples=trajectories,
    )
    logger.info(
        "verify: deviation %.3e (budget %.1e), rotation %s, lock error %.2e",
        report.max_deviation,
        deviation_budget,
        np.array2string(rotation, precision=8),
        lock_error,
    )
    return report
