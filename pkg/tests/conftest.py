"""Shared fixtures: the bundled coupling table and registers built from it."""
from __future__ import annotations

from pathlib import Path

import pytest

from dnpsim import load_register

LARMOR = 2.7106474  # rad/us at the working field

# label, A_par/2pi (kHz), A_perp/2pi (kHz), tabulated precession (rad/us)
TABLE27 = [
    ("C0", 213.153, 3.0, 2.04),
    ("C1", -36.308, 26.62, 2.83),
    ("C2", 20.569, 41.51, 2.65),
    ("C3", -11.346, 59.21, 2.75),
    ("C4", 8.029, 21.0, 2.69),
    ("C5", 24.399, 24.81, 2.64),
    ("C6", -48.58, 9.0, 2.86),
    ("C7", 14.58, 10.0, 2.67),
    ("C8", 7.683, 4.0, 2.69),
    ("C9", -20.72, 12.0, 2.78),
    ("C10", -23.22, 13.0, 2.78),
    ("C11", -13.961, 9.0, 2.75),
    ("C12", -31.25, 8.0, 2.81),
    ("C13", -14.07, 13.0, 2.76),
    ("C15", -5.62, 5.0, 2.73),
    ("C16", -19.815, 5.3, 2.77),
    ("C17", -4.66, 7.0, 2.73),
    ("C18", 17.643, 8.6, 2.66),
    ("C20", -8.32, 3.0, 2.74),
    ("C21", -9.79, 5.0, 2.74),
    ("C22", 1.212, 13.0, 2.71),
    ("C23", 2.69, 11.0, 2.70),
    ("C24", -3.177, 2.0, 2.72),
    ("C25", -4.039, 0.5, 2.72),
    ("C26", -4.225, 0.771, 2.72),
    ("C27", -3.873, 1.247, 2.72),
    ("C28", -3.618, 9.472, 2.72),
]

COUPLINGS = {label: (az, ax) for label, az, ax, _ in TABLE27}

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def register_text(labels, larmor: float = LARMOR) -> str:
    lines = [f"larmor_rad_per_us: {larmor}", "nuclei:"]
    for label in labels:
        az, ax = COUPLINGS[label]
        lines.append(f"  - {{label: {label}, a_parallel_khz: {az}, a_perp_khz: {ax}}}")
    return "\n".join(lines) + "\n"


def make_register(*labels, larmor: float = LARMOR):
    return load_register(register_text(labels, larmor))


@pytest.fixture(scope="session")
def reg_c3():
    return make_register("C3")


@pytest.fixture(scope="session")
def reg_c21():
    return make_register("C21")


@pytest.fixture(scope="session")
def reg_c3_c21():
    return make_register("C3", "C21")


@pytest.fixture(scope="session")
def reg_c3_c16():
    return make_register("C3", "C16")


@pytest.fixture(scope="session")
def reg_c4_c8():
    return make_register("C4", "C8")


@pytest.fixture(scope="session")
def reg_c3_c4_c8():
    return make_register("C3", "C4", "C8")


@pytest.fixture(scope="session")
def reg_twins():
    """Two spins with identical couplings (the degenerate-pair scenario)."""
    az, ax = COUPLINGS["C21"]
    text = (
        f"larmor_rad_per_us: {LARMOR}\n"
        "nuclei:\n"
        f"  - {{label: D1, a_parallel_khz: {az}, a_perp_khz: {ax}}}\n"
        f"  - {{label: D2, a_parallel_khz: {az}, a_perp_khz: {ax}}}\n"
    )
    return load_register(text)
