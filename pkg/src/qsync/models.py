"""Builders for the three concrete systems and their preset scenarios.

All three models are expressed in dimensionless units of a declared
reference rate (cavity decay kappa for the cavity-qubit systems, the first
oscillator frequency omega1 for the coupled van der Pol pair); times are in
units of its inverse.

cavity_qubit
    Two cavities, one qubit each, in the frame rotating at the drive
    frequency: detunings Delta_j (cavities) and delta_j (qubits), coherent
    hopping J between the cavities, qubit-cavity coupling g0 in the
    excitation-exchanging form i*g0*(a^dag sigma_minus - a sigma_plus), and
    a weak drive Omega on qubit 1 only.  Both cavities decay at kappa.

reduced_qubit
    The two-qubit limit of the above when the resonant common cavity mode
    is adiabatically eliminated: a single collective decay channel with
    jump (sigma_minus^1 + sigma_minus^2)/sqrt(2) at rate gamma_eff =
    g0^2/kappa, plus the detuning/drive Hamiltonian.

vdp
    Two quantum van der Pol oscillators: linear gain (jump a^dag, rate
    Omega_j), two-photon loss (jump a^2, rate kappa_j), and the pair-
    creating coupling i*J*(a1^dag a2^dag - a1 a2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lindblad import Dissipator, ModelSpec
from .opalg import (
    DensityMatrix,
    Operator,
    SpaceLayout,
    destroy,
    embed,
    momentum,
    pauli,
    position,
)

PRESET_NAMES = ("fig2a", "fig2b", "fig2c", "fig3")


@dataclass(frozen=True)
class CavityQubitParams:
    """Full model parameters, all rates in units of kappa."""

    delta1: float        # cavity 1 detuning
    delta2: float        # cavity 2 detuning
    deltaq1: float       # qubit 1 detuning
    deltaq2: float       # qubit 2 detuning
    g0: float            # qubit-cavity coupling
    J: float             # cavity-cavity hopping
    Omega: float         # drive amplitude on qubit 1
    kappa: float = 1.0   # cavity decay (the reference rate)
    Nc: int = 4          # Fock truncation per cavity

    def __post_init__(self):
        if self.Nc < 3:
            raise ValueError(f"cavity truncation Nc must be >= 3, got {self.Nc}")
        if self.g0 < 0 or self.kappa < 0:
            raise ValueError("g0 and kappa must be >= 0")


@dataclass(frozen=True)
class ReducedQubitParams:
    """Collective-decay two-qubit model parameters, in units of kappa."""

    deltaq1: float
    deltaq2: float
    Omega: float
    gamma_eff: float     # collective decay rate g0^2/kappa

    def __post_init__(self):
        if self.gamma_eff <= 0:
            raise ValueError(f"gamma_eff must be > 0, got {self.gamma_eff}")


@dataclass(frozen=True)
class VdpParams:
    """Coupled van der Pol pair parameters, in units of omega1."""

    omega1: float
    omega2: float
    J: float             # pair-creating coupling
    Omega1: float        # linear gain rates
    Omega2: float
    kappa1: float        # two-photon loss rates
    kappa2: float
    N: int = 12          # Fock truncation per mode

    def __post_init__(self):
        if self.N < 6:
            raise ValueError(f"vdP truncation N must be >= 6, got {self.N}")
        for name in ("omega1", "omega2", "J", "Omega1", "Omega2", "kappa1", "kappa2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def pauli_catalog() -> list[tuple[str, Operator]]:
    """Single-qubit observables analyzed for synchronization."""
    return [
        ("sigma_x", pauli("x")),
        ("sigma_y", pauli("y")),
        ("sigma_z", pauli("z")),
    ]


def moment_catalog(n: int) -> list[tuple[str, Operator]]:
    """Single-mode moments up to quadratic order on an n-level truncation.

    The quadratic entries are matrix polynomials of the truncated x and p,
    so algebraic identities like [x, x2] = 0 hold exactly on the truncated
    space.
    """
    x = position(n)
    p = momentum(n)
    a = destroy(n)
    return [
        ("x", x),
        ("p", p),
        ("n", a.dag() @ a),
        ("x2", x @ x),
        ("p2", p @ p),
        ("xpsym", 0.5 * (x @ p + p @ x)),
    ]


def _pair_observables(layout, catalog, slots=(0, 1)) -> list[tuple[str, Operator]]:
    obs = []
    for name, op in catalog:
        for k, slot in enumerate(slots, start=1):
            obs.append((f"{name}_{k}", embed(op, layout, slot)))
    return obs


def build_cavity_qubit(p: CavityQubitParams) -> ModelSpec:
    layout = SpaceLayout((2, 2, p.Nc, p.Nc), ("qubit1", "qubit2", "cav1", "cav2"))
    sm = [embed(pauli("minus"), layout, j) for j in (0, 1)]
    sp = [embed(pauli("plus"), layout, j) for j in (0, 1)]
    sz = [embed(pauli("z"), layout, j) for j in (0, 1)]
    a = [embed(destroy(p.Nc), layout, j) for j in (2, 3)]

    h = (
        p.delta1 * (a[0].dag() @ a[0])
        + p.delta2 * (a[1].dag() @ a[1])
        + 0.5 * p.deltaq1 * sz[0]
        + 0.5 * p.deltaq2 * sz[1]
        + p.J * (a[0].dag() @ a[1] + a[0] @ a[1].dag())
        + p.Omega * (sp[0] + sm[0])
    )
    # Same coupling sign on both qubits, so the resonant symmetric cavity
    # mode couples to the symmetric collective lowering operator and the
    # reduced_qubit model below is the correct adiabatic limit.
    for j in (0, 1):
        h = h + 1j * p.g0 * (a[j].dag() @ sm[j] - a[j] @ sp[j])

    dissipators = (Dissipator(p.kappa, a[0]), Dissipator(p.kappa, a[1]))
    observables = tuple(_pair_observables(layout, pauli_catalog()))
    return ModelSpec(layout, h, dissipators, observables, reference_rate=p.kappa)


def build_reduced_qubit(p: ReducedQubitParams) -> ModelSpec:
    layout = SpaceLayout((2, 2), ("qubit1", "qubit2"))
    sm = [embed(pauli("minus"), layout, j) for j in (0, 1)]
    sz = [embed(pauli("z"), layout, j) for j in (0, 1)]
    sx1 = embed(pauli("x"), layout, 0)

    h = 0.5 * p.deltaq1 * sz[0] + 0.5 * p.deltaq2 * sz[1] + p.Omega * sx1
    collective_lower = (sm[0] + sm[1]) / np.sqrt(2.0)
    dissipators = (Dissipator(p.gamma_eff, collective_lower),)
    observables = tuple(_pair_observables(layout, pauli_catalog()))
    return ModelSpec(layout, h, dissipators, observables, reference_rate=1.0)


def build_vdp(p: VdpParams) -> ModelSpec:
    layout = SpaceLayout((p.N, p.N), ("mode1", "mode2"))
    a1 = embed(destroy(p.N), layout, 0)
    a2 = embed(destroy(p.N), layout, 1)

    h = (
        p.omega1 * (a1.dag() @ a1)
        + p.omega2 * (a2.dag() @ a2)
        + 1j * p.J * (a1.dag() @ a2.dag() - a1 @ a2)
    )
    dissipators = (
        Dissipator(p.Omega1, a1.dag()),
        Dissipator(p.Omega2, a2.dag()),
        Dissipator(p.kappa1, a1 @ a1),
        Dissipator(p.kappa2, a2 @ a2),
    )
    observables = list(_pair_observables(layout, moment_catalog(p.N)))
    # Joint relative-quadrature second moments feed the complete-
    # synchronization figure of merit S_c = 1/<x_minus^2 + p_minus^2>.
    x = [embed(position(p.N), layout, j) for j in (0, 1)]
    pm = [embed(momentum(p.N), layout, j) for j in (0, 1)]
    xm = (x[0] - x[1]) / np.sqrt(2.0)
    pmm = (pm[0] - pm[1]) / np.sqrt(2.0)
    observables.append(("xminus2", xm @ xm))
    observables.append(("pminus2", pmm @ pmm))
    return ModelSpec(layout, h, dissipators, tuple(observables), reference_rate=p.omega1)


def cavity_mode_matrix(p: CavityQubitParams) -> np.ndarray:
    """Quadratic form of the coupled cavities in the rotating frame.

    Its eigenvalues are the normal-mode detunings; for delta1 = delta2 =
    Delta they are Delta +/- J.
    """
    return np.array([[p.delta1, p.J], [p.J, p.delta2]], dtype=float)


# Scenario registry.  Parameters and initial states follow the three
# synchronization regimes of the cavity-qubit system and the van der Pol
# transient; run windows are chosen so that the analysis window (see
# preset_analysis) contains a few periods of the slowest synchronized
# oscillation while the final state is close to stationary.

_FIG2_QUBIT1 = (np.sqrt(0.9), np.sqrt(0.1))
_FIG2_QUBIT2 = (np.sqrt(0.7), np.sqrt(0.3))


@dataclass(frozen=True)
class AnalysisDefaults:
    """Per-preset analysis configuration consumed by the CLI.

    threshold_overrides relax individual lock criteria where a preset's
    physics requires it (short transient windows limit the attainable
    frequency-estimate precision); every value used ends up in the report.
    """

    window: tuple[float, float] | None   # None: final half of the samples
    catalog: str                         # 'pauli' or 'moments:<N>'
    mutual_info_pair: tuple[int, int] = (0, 1)
    threshold_overrides: dict = None

    def __post_init__(self):
        if self.threshold_overrides is None:
            object.__setattr__(self, "threshold_overrides", {})


@dataclass(frozen=True)
class _PresetEntry:
    params: object
    t_end: float
    sample_dt: float
    analysis: AnalysisDefaults


_PRESETS: dict[str, _PresetEntry] = {
    "fig2a": _PresetEntry(
        CavityQubitParams(delta1=10.0, delta2=10.0, deltaq1=0.0, deltaq2=0.0,
                          g0=0.5, J=-10.0, Omega=5e-4),
        t_end=3000.0, sample_dt=2.0,
        analysis=AnalysisDefaults(window=(300.0, 1100.0), catalog="pauli"),
    ),
    "fig2b": _PresetEntry(
        CavityQubitParams(delta1=10.0, delta2=10.0, deltaq1=0.0, deltaq2=0.0,
                          g0=0.5, J=-10.0, Omega=0.0),
        t_end=3000.0, sample_dt=2.0,
        analysis=AnalysisDefaults(window=(800.0, 2400.0), catalog="pauli"),
    ),
    "fig2c": _PresetEntry(
        CavityQubitParams(delta1=10.0, delta2=22.5, deltaq1=0.08, deltaq2=0.02,
                          g0=0.5, J=-10.0, Omega=1e-3),
        t_end=1000.0, sample_dt=0.5,
        # Window covers the lifetime of the inter-qubit excitation-exchange
        # transient (decay time ~160, period ~120).
        analysis=AnalysisDefaults(window=(20.0, 300.0), catalog="pauli"),
    ),
    "fig3": _PresetEntry(
        VdpParams(omega1=1.0, omega2=1.0, J=0.5, Omega1=1e-3, Omega2=1e-3,
                  kappa1=2.0, kappa2=2.0, N=12),
        t_end=20.0, sample_dt=0.02,
        # ~2 quadrature periods fit in the transient window, which limits
        # per-column frequency estimates to a few percent; the lock
        # tolerance is relaxed accordingly.
        analysis=AnalysisDefaults(window=(2.0, 12.0), catalog="moments:12",
                                  threshold_overrides={"tol_freq": 0.05}),
    ),
}


def preset_initial_amplitudes(name: str) -> list[tuple[float, ...]]:
    """Per-factor initial amplitude lists (ground first) for a preset."""
    entry = _preset_entry(name)
    if isinstance(entry.params, CavityQubitParams):
        vacuum = tuple([1.0] + [0.0] * (entry.params.Nc - 1))
        return [_FIG2_QUBIT1, _FIG2_QUBIT2, vacuum, vacuum]
    n = entry.params.N
    mode1 = tuple([0.5, np.sqrt(0.75)] + [0.0] * (n - 2))
    mode2 = tuple([np.sqrt(0.05), np.sqrt(0.95)] + [0.0] * (n - 2))
    return [mode1, mode2]


def _preset_entry(name: str) -> _PresetEntry:
    try:
        return _PRESETS[name]
    except KeyError:
        raise ValueError(
            f"unknown preset '{name}' (known: {', '.join(PRESET_NAMES)})"
        ) from None


def preset(name: str):
    """Return (model, initial state, t_end, sample_dt) for a named scenario."""
    entry = _preset_entry(name)
    if isinstance(entry.params, CavityQubitParams):
        model = build_cavity_qubit(entry.params)
    else:
        model = build_vdp(entry.params)
    rho0 = DensityMatrix.product_state(model.layout, preset_initial_amplitudes(name))
    return model, rho0, entry.t_end, entry.sample_dt


def preset_params(name: str):
    """The parameter dataclass behind a preset (for config echoes)."""
    return _preset_entry(name).params


def preset_run_defaults(name: str) -> tuple[float, float]:
    """(t_end, sample_dt) for a preset."""
    entry = _preset_entry(name)
    return entry.t_end, entry.sample_dt


def preset_analysis(name: str) -> AnalysisDefaults:
    return _preset_entry(name).analysis
