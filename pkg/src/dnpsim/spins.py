"""Spin register, embedded operators, and the static rotating-frame Hamiltonian.

The joint space is electron (x) nucleus_1 (x) ... (x) nucleus_N with the
electron factor first. The electron is the {|0>, |-1>} two-level subspace
with S_z eigenvalues +1/2 and -1/2; the hyperfine term is conditioned on
S_z, so the model is pure dephasing for the electron (no electron flips in
the static Hamiltonian).

Config ingestion converts kHz coupling columns to rad/us (x 2 pi 1e-3) and
derives the Larmor frequency from the field when it is not given directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import yaml

from .errors import DimensionOverflow, ParseError, ValidationError
from .linalg import hermitian_eigensolve, kron

KHZ_TO_RAD_PER_US = 2.0 * np.pi * 1e-3
GYROMAGNETIC_13C_KHZ_PER_G = 1.0705
DEFAULT_B_FIELD_GAUSS = 403.0
MAX_NUCLEI_IN_JOINT_SPACE = 7

_S_Z = np.array([[0.5, 0.0], [0.0, -0.5]], dtype=complex)
_S_X = np.array([[0.0, 0.5], [0.5, 0.0]], dtype=complex)
_S_Y = np.array([[0.0, -0.5j], [0.5j, 0.0]], dtype=complex)
_S_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
_S_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
_ID2 = np.eye(2, dtype=complex)


def larmor_from_field(b_field_gauss: float) -> float:
    """Larmor frequency in rad/us for a 13C nucleus at the given field."""
    return KHZ_TO_RAD_PER_US * GYROMAGNETIC_13C_KHZ_PER_G * b_field_gauss


@dataclass(frozen=True)
class NuclearSpin:
    """One spin-1/2 nucleus: label plus hyperfine components in rad/us.

    a_parallel is the component along the quantisation axis (may be
    negative); a_perp is the transverse component and is non-negative by
    convention (its azimuth is a free gauge).
    """

    label: str
    a_parallel: float
    a_perp: float

    def __post_init__(self) -> None:
        if not self.label:
            raise ValidationError("label: must be a non-empty string")
        if self.a_perp < 0:
            raise ValidationError(f"{self.label}.a_perp: must be >= 0, got {self.a_perp}")


@dataclass(frozen=True)
class SpinRegister:
    """Larmor frequency plus an ordered tuple of nuclei.

    b_field_gauss is provenance only; physics reads ``larmor``. The joint
    Hilbert dimension is 2**(1+N); operator construction (not the register
    itself) enforces the N <= 7 cap so that large coupling tables remain
    loadable for per-nucleus frequency work.
    """

    larmor: float
    nuclei: tuple[NuclearSpin, ...]
    b_field_gauss: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "nuclei", tuple(self.nuclei))
        if not self.larmor > 0:
            raise ValidationError(f"larmor: must be > 0, got {self.larmor}")
        labels = [n.label for n in self.nuclei]
        if len(set(labels)) != len(labels):
            dupes = sorted({x for x in labels if labels.count(x) > 1})
            raise ValidationError(f"nuclei labels: duplicated {dupes}")
        for n in self.nuclei:
            if abs(n.a_parallel) >= self.larmor:
                raise ValidationError(
                    f"{n.label}.a_parallel: |{n.a_parallel}| must stay below larmor {self.larmor}"
                )
            if n.a_perp >= self.larmor:
                raise ValidationError(
                    f"{n.label}.a_perp: {n.a_perp} must stay below larmor {self.larmor}"
                )

    @property
    def dim(self) -> int:
        return 2 ** (1 + len(self.nuclei))

    def nucleus(self, label: str) -> NuclearSpin:
        for n in self.nuclei:
            if n.label == label:
                return n
        raise ValidationError(f"label: no nucleus named {label!r} in register")

    def subset(self, labels: list[str] | tuple[str, ...]) -> "SpinRegister":
        """New register keeping only the named nuclei, in the given order."""
        return SpinRegister(
            larmor=self.larmor,
            nuclei=tuple(self.nucleus(lb) for lb in labels),
            b_field_gauss=self.b_field_gauss,
        )


@dataclass(frozen=True)
class SiteOperators:
    """Spin-1/2 operators for one site, embedded in the joint space."""

    z: np.ndarray
    x: np.ndarray
    y: np.ndarray
    plus: np.ndarray
    minus: np.ndarray


@dataclass(frozen=True)
class SpinOperatorSet:
    electron: SiteOperators
    nuclei: tuple[SiteOperators, ...]
    dim: int


def _embed(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    out = np.array([[1.0 + 0.0j]])
    for k in range(n_sites):
        out = kron(out, op if k == site else _ID2)
    out.setflags(write=False)
    return out


def _site_operators(site: int, n_sites: int) -> SiteOperators:
    return SiteOperators(
        z=_embed(_S_Z, site, n_sites),
        x=_embed(_S_X, site, n_sites),
        y=_embed(_S_Y, site, n_sites),
        plus=_embed(_S_PLUS, site, n_sites),
        minus=_embed(_S_MINUS, site, n_sites),
    )


@lru_cache(maxsize=64)
def build_operators(register: SpinRegister) -> SpinOperatorSet:
    """Embed all single-site operators into the joint space.

    Raises
    ------
    DimensionOverflow
        If the register holds more than 7 nuclei (dim > 256).
    """
    n = len(register.nuclei)
    if n > MAX_NUCLEI_IN_JOINT_SPACE:
        raise DimensionOverflow(
            f"{n} nuclei would need dimension {2 ** (1 + n)}; the joint-space cap is 256"
        )
    n_sites = 1 + n
    return SpinOperatorSet(
        electron=_site_operators(0, n_sites),
        nuclei=tuple(_site_operators(1 + k, n_sites) for k in range(n)),
        dim=2**n_sites,
    )


def static_hamiltonian(register: SpinRegister, ops: SpinOperatorSet | None = None) -> np.ndarray:
    """Rotating-frame static Hamiltonian.

    H0 = sum_n (omega_L - A_par_n / 2) Iz_n + Sz sum_n A_perp_n Ix_n.

    The parallel coupling dresses the nuclear Zeeman term so that every
    nucleus precesses at its resonant frequency omega_I in both electron
    branches; only the transverse coupling is conditioned on the electron.
    In the electron lower block the per-nucleus Hamiltonian is therefore
    (omega_L - A_par/2) Iz - (A_perp/2) Ix, with eigensplitting omega_I.

    Hermitian and block-diagonal in the electron basis.
    """
    if ops is None:
        ops = build_operators(register)
    h = np.zeros((ops.dim, ops.dim), dtype=complex)
    sz = ops.electron.z
    for spin, site in zip(register.nuclei, ops.nuclei):
        h += (register.larmor - spin.a_parallel / 2.0) * site.z
        h += spin.a_perp * (sz @ site.x)
    h.setflags(write=False)
    return h


def precession_frequency(nucleus: NuclearSpin, larmor: float) -> float:
    """Resonant precession frequency omega_I in rad/us.

    omega_I = sqrt((omega_L - A_par/2)^2 + (A_perp/2)^2), the splitting of
    the nuclear sub-Hamiltonian conditioned on the electron lower state.
    """
    if not larmor > 0:
        raise ValidationError(f"larmor: must be > 0, got {larmor}")
    return float(np.hypot(larmor - nucleus.a_parallel / 2.0, nucleus.a_perp / 2.0))


@lru_cache(maxsize=256)
def static_hamiltonian_eig(register: SpinRegister):
    """Cached eigendecomposition of H0, shared by propagators."""
    return hermitian_eigensolve(static_hamiltonian(register))


_TOP_LEVEL_KEYS = {"larmor_rad_per_us", "b_field_gauss", "nuclei"}
_NUCLEUS_KEYS = {"label", "a_parallel_khz", "a_perp_khz"}


def _require_number(value, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{field}: expected a number, got {value!r}")
    return float(value)


def load_register(source: str) -> SpinRegister:
    """Parse a YAML register config into a SpinRegister.

    Top-level fields: ``larmor_rad_per_us`` (optional), ``b_field_gauss``
    (optional), ``nuclei`` (list of ``{label, a_parallel_khz, a_perp_khz}``).
    Couplings are given in kHz and converted to rad/us. When
    ``larmor_rad_per_us`` is absent the Larmor frequency is derived from
    ``b_field_gauss`` (default 403 G).

    Raises
    ------
    ParseError
        Malformed YAML; the message carries the line number.
    ValidationError
        A missing, unknown, or out-of-range field; the message names it.
    """
    try:
        data = yaml.safe_load(source)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f"line {mark.line + 1}" if mark is not None else "unknown line"
        raise ParseError(f"config parse failed at {line}: {exc}") from exc

    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValidationError(f"config root: expected a mapping, got {type(data).__name__}")
    unknown = sorted(set(data) - _TOP_LEVEL_KEYS)
    if unknown:
        raise ValidationError(f"unknown top-level field(s): {', '.join(unknown)}")

    b_field = data.get("b_field_gauss")
    if b_field is not None:
        b_field = _require_number(b_field, "b_field_gauss")
        if b_field <= 0:
            raise ValidationError(f"b_field_gauss: must be > 0, got {b_field}")
    if "larmor_rad_per_us" in data:
        larmor = _require_number(data["larmor_rad_per_us"], "larmor_rad_per_us")
        if larmor <= 0:
            raise ValidationError(f"larmor_rad_per_us: must be > 0, got {larmor}")
    else:
        larmor = larmor_from_field(b_field if b_field is not None else DEFAULT_B_FIELD_GAUSS)

    raw_nuclei = data.get("nuclei", [])
    if raw_nuclei is None:
        raw_nuclei = []
    if not isinstance(raw_nuclei, list):
        raise ValidationError("nuclei: expected a list")
    nuclei = []
    for i, row in enumerate(raw_nuclei):
        where = f"nuclei[{i}]"
        if not isinstance(row, dict):
            raise ValidationError(f"{where}: expected a mapping")
        unknown = sorted(set(row) - _NUCLEUS_KEYS)
        if unknown:
            raise ValidationError(f"{where}: unknown field(s): {', '.join(unknown)}")
        missing = sorted(_NUCLEUS_KEYS - set(row))
        if missing:
            raise ValidationError(f"{where}: missing field(s): {', '.join(missing)}")
        label = row["label"]
        if not isinstance(label, str) or not label:
            raise ValidationError(f"{where}.label: expected a non-empty string")
        a_par = _require_number(row["a_parallel_khz"], f"{where}.a_parallel_khz")
        a_perp = _require_number(row["a_perp_khz"], f"{where}.a_perp_khz")
        if a_perp < 0:
            raise ValidationError(f"{where}.a_perp_khz: must be >= 0, got {a_perp}")
        nuclei.append(
            NuclearSpin(
                label=label,
                a_parallel=a_par * KHZ_TO_RAD_PER_US,
                a_perp=a_perp * KHZ_TO_RAD_PER_US,
            )
        )

    return SpinRegister(larmor=larmor, nuclei=tuple(nuclei), b_field_gauss=b_field)


def load_register_file(path: str) -> SpinRegister:
    with open(path, "r", encoding="utf-8") as fh:
        return load_register(fh.read())
