"""Density-matrix engine for repeated protocol bursts with electron reset.

One repetition applies n_periods protocol periods coherently, discards the
electron (optical reinitialisation), lets the nuclei precess for a wait
interval under the Hamiltonian conditioned on the fresh electron state and
re-tensors that electron state back on. Nuclear polarisations are recorded
once per repetition at the end of that cycle.

Sweeps and schedules layer loops over single runs: a sweep runs the same
burst pattern at many periods from a fresh thermal state each time; a
schedule chains stages at different periods on one evolving state.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import ConvergenceCap, NoConvergence, NotHermitian, ValidationError
from .linalg import kron, partial_trace
from .protocols import PulseSequence, SequenceBuilder, period_unitary
from .spins import SpinRegister, _embed, build_operators

STATE_TOL = 1e-9


@dataclass(frozen=True)
class DensityState:
    """A density matrix over the electron-nuclei space of a register."""

    rho: np.ndarray
    register: SpinRegister

    def __post_init__(self) -> None:
        rho = np.asarray(self.rho, dtype=complex)
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        dim = self.register.dim
        if rho.shape != (dim, dim):
            raise ValidationError(
                f"rho: expected shape {(dim, dim)} for this register, got {rho.shape}"
            )

    def validate(self) -> None:
        """Check hermiticity, unit trace and positivity to 1e-9."""
        rho = self.rho
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm > STATE_TOL:
            raise NotHermitian(f"density matrix hermiticity defect {herm:.3e}")
        tr = rho.trace()
        if abs(tr - 1.0) > STATE_TOL:
            raise NoConvergence(f"density matrix trace drifted to {tr:.12g}")
        min_eig = float(np.linalg.eigvalsh(rho)[0])
        if min_eig < -STATE_TOL:
            raise NoConvergence(f"density matrix lost positivity: min eigenvalue {min_eig:.3e}")

    def nuclear_polarisations(self) -> np.ndarray:
        """<I_z> per nucleus, ordered as the register lists them."""
        ops = build_operators(self.register)
        return np.array(
            [float(np.real(np.trace(self.rho @ site.z))) for site in ops.nuclei]
        )


@dataclass(frozen=True)
class ProtocolRun:
    """Burst pattern of one repetition loop.

    reinit_state selects which electron basis state the reset prepares:
    0 for the upper branch (m_s = +1/2 here), 1 for the lower.
    """

    sequence: PulseSequence
    n_periods: int
    repetitions: int
    wait_us: float = 0.0
    reinit_state: int = 0
    check_state: bool = True

    def __post_init__(self) -> None:
        if self.n_periods < 1:
            raise ValidationError(f"n_periods: must be >= 1, got {self.n_periods}")
        if self.repetitions < 1:
            raise ValidationError(f"repetitions: must be >= 1, got {self.repetitions}")
        if self.wait_us < 0:
            raise ValidationError(f"wait_us: must be >= 0, got {self.wait_us}")
        if self.reinit_state not in (0, 1):
            raise ValidationError(f"reinit_state: must be 0 or 1, got {self.reinit_state}")


def initial_state(register: SpinRegister, reinit_state: int = 0) -> DensityState:
    """Electron in the reset state, nuclei maximally mixed (room temperature)."""
    if reinit_state not in (0, 1):
        raise ValidationError(f"reinit_state: must be 0 or 1, got {reinit_state}")
    n_dim = register.dim // 2
    electron = np.zeros((2, 2), dtype=complex)
    electron[reinit_state, reinit_state] = 1.0
    rho = kron(electron, np.eye(n_dim, dtype=complex) / n_dim)
    return DensityState(rho=rho, register=register)


@lru_cache(maxsize=64)
def _nuclear_wait_eig(register: SpinRegister, reinit_state: int):
    """Eigendecomposition of the nuclear-only Hamiltonian during the wait.

    With the electron parked in its reset state each nucleus sees its
    dressed Zeeman term plus the transverse field s A_perp I_x, s = +-1/2.
    """
    n = len(register.nuclei)
    dim = 2**n
    s = 0.5 if reinit_state == 0 else -0.5
    h = np.zeros((dim, dim), dtype=complex)
    iz2 = np.array([[0.5, 0.0], [0.0, -0.5]], dtype=complex)
    ix2 = np.array([[0.0, 0.5], [0.5, 0.0]], dtype=complex)
    for i, spin in enumerate(register.nuclei):
        h += (register.larmor - spin.a_parallel / 2.0) * _embed(iz2, i, n)
        h += s * spin.a_perp * _embed(ix2, i, n)
    w, v = np.linalg.eigh(h)
    return w, v


@lru_cache(maxsize=64)
def _nuclear_z_ops(register: SpinRegister) -> tuple[np.ndarray, ...]:
    n = len(register.nuclei)
    iz2 = np.array([[0.5, 0.0], [0.0, -0.5]], dtype=complex)
    return tuple(_embed(iz2, i, n) for i in range(n))


def run_protocol(
    run: ProtocolRun,
    register: SpinRegister,
    state: DensityState | None = None,
) -> tuple[DensityState, np.ndarray]:
    """Execute the repetition loop; return the final state and the history.

    The history has shape (repetitions, n_nuclei): <I_z> of every nucleus
    at the end of each repetition, after the wait and electron reset.
    """
    if state is None:
        state = initial_state(register, run.reinit_state)
    elif state.register != register:
        raise ValidationError("state was built for a different register")

    u = period_unitary(run.sequence, register)
    u_burst = np.linalg.matrix_power(u, run.n_periods)
    u_burst_dag = u_burst.conj().T

    electron = np.zeros((2, 2), dtype=complex)
    electron[run.reinit_state, run.reinit_state] = 1.0
    dims = (2,) + (2,) * len(register.nuclei)
    z_ops = _nuclear_z_ops(register)

    if run.wait_us > 0 and register.nuclei:
        w, v = _nuclear_wait_eig(register, run.reinit_state)
        u_wait = (v * np.exp(-1j * w * run.wait_us)) @ v.conj().T
    else:
        u_wait = None

    rho = state.rho
    history = np.empty((run.repetitions, len(register.nuclei)))
    for rep in range(run.repetitions):
        rho = u_burst @ rho @ u_burst_dag
        rho_nuc = partial_trace(rho, dims, 0)
        if u_wait is not None:
            rho_nuc = u_wait @ rho_nuc @ u_wait.conj().T
        rho = kron(electron, rho_nuc)
        if run.check_state:
            DensityState(rho=rho, register=register).validate()
        for i, z in enumerate(z_ops):
            history[rep, i] = float(np.real(np.trace(rho_nuc @ z)))
    return DensityState(rho=rho, register=register), history


@dataclass(frozen=True)
class PolarisationTrace:
    """Final per-spin polarisations across a sweep of protocol periods."""

    periods: np.ndarray
    labels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        periods = np.asarray(self.periods, dtype=float)
        values = np.asarray(self.values, dtype=float)
        periods.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "periods", periods)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(self.labels))
        if values.shape != (periods.size, len(self.labels)):
            raise ValidationError(
                f"values: expected shape {(periods.size, len(self.labels))}, got {values.shape}"
            )
        if values.size and (values.min() < -0.5 - STATE_TOL or values.max() > 0.5 + STATE_TOL):
            raise ValidationError("values: spin-1/2 polarisations must lie in [-1/2, 1/2]")

    @property
    def total(self) -> np.ndarray:
        return self.values.sum(axis=1)


def _sweep_point(
    builder: SequenceBuilder,
    register: SpinRegister,
    t: float,
    n_periods: int,
    repetitions: int,
    wait_us: float,
    reinit_state: int,
    check_state: bool,
) -> tuple[float, np.ndarray]:
    seq = builder(t)
    run = ProtocolRun(
        sequence=seq,
        n_periods=n_periods,
        repetitions=repetitions,
        wait_us=wait_us,
        reinit_state=reinit_state,
        check_state=check_state,
    )
    _, history = run_protocol(run, register)
    return seq.period, history[-1]


def sweep_trace(
    builder: SequenceBuilder,
    register: SpinRegister,
    periods: np.ndarray,
    n_periods: int,
    repetitions: int,
    wait_us: float = 0.0,
    reinit_state: int = 0,
    workers: int = 1,
    check_state: bool = True,
) -> PolarisationTrace:
    """Run the repetition loop from a fresh thermal state at every period.

    ``builder`` maps each grid value to a PulseSequence; the trace axis
    records the period of the sequence actually built. With workers > 1
    the points are farmed out to a process pool; results keep grid order
    either way.
    """
    periods = np.asarray(periods, dtype=float)
    if periods.ndim != 1 or periods.size == 0:
        raise ValidationError("periods: need a non-empty 1-d grid")
    if workers < 1:
        raise ValidationError(f"workers: must be >= 1, got {workers}")
    args = [
        (builder, register, float(t), n_periods, repetitions, wait_us, reinit_state, check_state)
        for t in periods
    ]
    if workers == 1:
        results = [_sweep_point(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, *zip(*args)))
    axis = np.array([r[0] for r in results])
    values = np.vstack([r[1] for r in results])
    labels = tuple(s.label for s in register.nuclei)
    return PolarisationTrace(periods=axis, labels=labels, values=values)


@dataclass(frozen=True)
class ScheduleStage:
    """One leg of a staged protocol: a period, how many repetitions, and an
    optional override of the burst length."""

    period: float
    repetitions: int
    n_periods: int | None = None

    def __post_init__(self) -> None:
        if not self.period > 0:
            raise ValidationError(f"period: must be > 0, got {self.period}")
        if self.repetitions < 1:
            raise ValidationError(f"repetitions: must be >= 1, got {self.repetitions}")
        if self.n_periods is not None and self.n_periods < 1:
            raise ValidationError(f"n_periods: must be >= 1, got {self.n_periods}")


@dataclass(frozen=True)
class ScheduleResult:
    """Per-repetition record of a staged run on one evolving state."""

    times: np.ndarray
    stage_index: np.ndarray
    periods: np.ndarray
    labels: tuple[str, ...]
    values: np.ndarray
    final_state: DensityState

    @property
    def total(self) -> np.ndarray:
        return self.values.sum(axis=1)


def run_schedule(
    builder: SequenceBuilder,
    register: SpinRegister,
    stages: tuple[ScheduleStage, ...],
    n_periods: int,
    wait_us: float = 0.0,
    reinit_state: int = 0,
    check_state: bool = True,
) -> ScheduleResult:
    """Chain stages at different periods, carrying the nuclear state over.

    The recorded time axis accumulates repetitions * (burst + wait) wall
    time per stage; polarisations are logged once per repetition as in
    run_protocol.
    """
    if not stages:
        raise ValidationError("stages: need at least one stage")
    state = initial_state(register, reinit_state)
    rows = []
    times = []
    stage_idx = []
    stage_periods = []
    t_now = 0.0
    for idx, stage in enumerate(stages):
        n_p = stage.n_periods if stage.n_periods is not None else n_periods
        seq = builder(stage.period)
        run = ProtocolRun(
            sequence=seq,
            n_periods=n_p,
            repetitions=stage.repetitions,
            wait_us=wait_us,
            reinit_state=reinit_state,
            check_state=check_state,
        )
        state, history = run_protocol(run, register, state)
        rep_time = n_p * seq.period + wait_us
        for r in range(stage.repetitions):
            t_now += rep_time
            times.append(t_now)
            stage_idx.append(idx)
            stage_periods.append(seq.period)
        rows.append(history)
    return ScheduleResult(
        times=np.array(times),
        stage_index=np.array(stage_idx, dtype=int),
        periods=np.array(stage_periods),
        labels=tuple(s.label for s in register.nuclei),
        values=np.vstack(rows),
        final_state=state,
    )


#: Consecutive repetitions whose change must stay below tolerance before the
#: envelope is declared converged.
_ENVELOPE_WINDOW = 10


def asymptotic_envelope(
    run: ProtocolRun,
    register: SpinRegister,
    tol: float = 1e-8,
    max_repetitions: int = 100_000,
) -> tuple[float, int, bool]:
    """Drive the repetition loop until the summed polarisation stalls.

    Returns (summed polarisation, repetitions used, converged). The run's
    own repetition count sets the block size per convergence check. If the
    cap is hit first a warning is emitted and converged is False.
    """
    if tol <= 0:
        raise ValidationError(f"tol: must be > 0, got {tol}")
    if max_repetitions < 1:
        raise ValidationError(f"max_repetitions: must be >= 1, got {max_repetitions}")
    state = initial_state(register, run.reinit_state)
    total_prev = None
    below = 0
    done = 0
    block = replace(run, repetitions=min(run.repetitions, max_repetitions))
    while done < max_repetitions:
        reps = min(block.repetitions, max_repetitions - done)
        state, history = run_protocol(replace(block, repetitions=reps), register, state)
        totals = history.sum(axis=1)
        for value in totals:
            if total_prev is not None and abs(value - total_prev) < tol:
                below += 1
            else:
                below = 0
            total_prev = value
            done += 1
            if below >= _ENVELOPE_WINDOW:
                return float(value), done, True
    warnings.warn(
        f"asymptotic envelope not settled after {max_repetitions} repetitions",
        ConvergenceCap,
        stacklevel=2,
    )
    return float(total_prev), done, False


def _fmt(x: float) -> str:
    return format(x, ".12g")


def write_trace_csv(trace: PolarisationTrace, path: str) -> None:
    """Write a sweep as CSV: tau_us, period_us, one column per spin, total."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau_us", "period_us", *trace.labels, "total"])
        for i, period in enumerate(trace.periods):
            row = [_fmt(period / 4.0), _fmt(period)]
            row.extend(_fmt(v) for v in trace.values[i])
            row.append(_fmt(float(trace.values[i].sum())))
            writer.writerow(row)


def write_schedule_csv(result: ScheduleResult, path: str) -> None:
    """Write a staged run as CSV: time_us, stage, period_us, spins, total."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_us", "stage", "period_us", *result.labels, "total"])
        for i in range(result.times.size):
            row = [
                _fmt(float(result.times[i])),
                str(int(result.stage_index[i])),
                _fmt(float(result.periods[i])),
            ]
            row.extend(_fmt(v) for v in result.values[i])
            row.append(_fmt(float(result.values[i].sum())))
            writer.writerow(row)
