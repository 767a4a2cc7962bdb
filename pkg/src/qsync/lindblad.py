"""Time integration of Lindblad master equations, with a dense oracle.

Generator convention: each dissipation channel (rate, L) contributes

    rate * (2 L rho L^dag - L^dag L rho - rho L^dag L)

so the printed rate multiplies the full 2 L rho L^dag form (no extra 1/2).

`evolve` advances rho with an embedded Dormand-Prince 5(4) adaptive stepper
and records observable expectations on a uniform sample grid.  At every
sample rho is re-Hermitized ((rho + rho^dag)/2) and its trace renormalized
only when it drifts beyond 1e-10; this explicit policy keeps runs
bit-reproducible for identical tolerance settings.  A truncation guard
aborts the run when the top Fock level of any bosonic factor (dimension
>= 3) accumulates more than `guard_threshold` population.

`dense_liouvillian` / `propagate_dense` build the column-stacked
superoperator and advance with scipy's scaling-and-squaring matrix
exponential.  That path shares no stepping code with `evolve` and serves as
the independent cross-validation oracle for small systems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import expm

from .opalg import DensityMatrix, Operator, SpaceLayout, partial_trace, von_neumann_entropy

DEFAULT_REL_TOL = 1e-8
DEFAULT_ABS_TOL = 1e-10
GUARD_THRESHOLD = 1e-4
RENORM_THRESHOLD = 1e-10
ORACLE_CAP = 16

# Dense BLAS beats csr matvec chains below this dimension (measured).
_SPARSE_DIM_CUTOFF = 96


class TruncationError(RuntimeError):
    """Top Fock level of a bosonic factor exceeded the population guard."""


class StepSizeUnderflowError(RuntimeError):
    """Adaptive stepper could not meet tolerances with a representable step."""


@dataclass(frozen=True)
class Tolerances:
    rel: float = DEFAULT_REL_TOL
    abs: float = DEFAULT_ABS_TOL

    def __post_init__(self):
        if self.rel <= 0 or self.abs <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class Dissipator:
    """One dissipation channel: rate >= 0 and jump operator L."""

    rate: float
    jump: Operator

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"dissipator rate must be >= 0, got {self.rate}")


@dataclass(frozen=True)
class ModelSpec:
    """Hamiltonian + dissipators + named Hermitian observables.

    All rates and frequencies are dimensionless multiples of
    `reference_rate` (for example the cavity decay rate, or the first
    oscillator frequency); times are in units of its inverse.
    """

    layout: SpaceLayout
    hamiltonian: Operator
    dissipators: tuple[Dissipator, ...]
    observables: tuple[tuple[str, Operator], ...]
    reference_rate: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "dissipators", tuple(self.dissipators))
        object.__setattr__(self, "observables", tuple(self.observables))
        if self.hamiltonian.layout != self.layout:
            raise ValueError("hamiltonian layout does not match model layout")
        h = self.hamiltonian.matrix
        h_defect = float(np.max(np.abs(h - h.conj().T)))
        if h_defect > 1e-10:
            raise ValueError(f"hamiltonian must be Hermitian (defect {h_defect:.3g})")
        names = [name for name, _ in self.observables]
        if len(set(names)) != len(names):
            raise ValueError("observable names must be unique")
        for name, op in self.observables:
            if op.layout != self.layout:
                raise ValueError(f"observable '{name}' layout does not match model")
            if not op.is_hermitian:
                raise ValueError(f"observable '{name}' must be Hermitian")
        for dis in self.dissipators:
            if dis.jump.layout != self.layout:
                raise ValueError("dissipator jump layout does not match model")

    @property
    def dim(self) -> int:
        return self.layout.dim

    def observable_names(self) -> list[str]:
        return [name for name, _ in self.observables]


@dataclass
class Trajectory:
    """Sampled run: uniform time grid, real expectations, diagnostics."""

    times: np.ndarray
    values: np.ndarray               # [sample, observable]
    names: list[str]
    trace_errors: np.ndarray         # |tr rho - 1| before the per-sample fix
    min_eigenvalues: np.ndarray
    final_state: DensityMatrix
    mutual_info: np.ndarray | None = None
    states: list[DensityMatrix] | None = None

    def column(self, name: str) -> np.ndarray:
        try:
            idx = self.names.index(name)
        except ValueError:
            raise KeyError(f"trajectory has no observable '{name}'") from None
        return self.values[:, idx]

    @property
    def max_trace_error(self) -> float:
        return float(np.max(self.trace_errors))

    @property
    def min_eigenvalue(self) -> float:
        return float(np.min(self.min_eigenvalues))


def _detect_embedded_band(mat: np.ndarray, factors: tuple[int, ...]):
    """Recognize I x B x I with single-band B (ladder-type jump operator).

    Returns (pre, d, post, band, weights) where B[i, i+band] = weights[i],
    or None when the matrix is not of that form.  Reconstruction is compared
    bitwise, so this is a pure fast-path dispatch with no tolerance.
    """
    total = mat.shape[0]
    for slot, d in enumerate(factors):
        pre = int(np.prod(factors[:slot], initial=1))
        post = int(np.prod(factors[slot + 1:], initial=1))
        if pre * d * post != total:  # inconsistent layout; cannot happen
            return None
        block = mat[: d * post: post, : d * post: post]
        recon = np.kron(np.eye(pre), np.kron(block, np.eye(post)))
        if not np.array_equal(recon, mat):
            continue
        nz = np.argwhere(block != 0)
        if len(nz) == 0:
            return (pre, d, post, 0, np.zeros(d, dtype=complex))
        offsets = {int(j - i) for i, j in nz}
        if len(offsets) != 1:
            return None
        band = offsets.pop()
        weights = np.zeros(d, dtype=complex)
        for i, j in nz:
            weights[i] = block[i, j]
        return (pre, d, post, band, weights)
    return None


class _RhsOps:
    """Precompiled right-hand side rho -> G rho + (G rho)^dag + sum L rho L^dag.

    G = -iH - sum_k rate_k L_k^dag L_k; the jump terms use scaled operators
    sqrt(2 rate_k) L_k.  Hermiticity of the output is structural, so the
    integrated state stays Hermitian to roundoff without per-step fixing.

    Ladder-type jumps embedded on a single factor (a, a^dag, a^2, ...) are
    applied as strided shift-multiplies; L rho L^dag only moves population
    along one Fock axis, so the full matrix sandwich is never needed.
    """

    def __init__(self, model: ModelSpec):
        h = model.hamiltonian.matrix
        g = -1j * h.astype(complex)
        jumps = []
        for dis in model.dissipators:
            lmat = dis.jump.matrix
            g = g - dis.rate * (lmat.conj().T @ lmat)
            if dis.rate > 0:
                jumps.append(np.sqrt(2.0 * dis.rate) * np.asarray(lmat, dtype=complex))
        d = self.dim = model.dim
        self._dense = model.dim < _SPARSE_DIM_CUTOFF
        self.g_op = np.ascontiguousarray(g) if self._dense else sparse.csr_matrix(g)

        factors = model.layout.factors
        self._band_jumps = []
        self._mat_jumps = []
        for lmat in jumps:
            band = _detect_embedded_band(lmat, factors)
            if band is not None:
                pre, dd, post, k, v = band
                lo_dst, hi_dst = max(0, -k), dd - max(0, k)
                lo_src, hi_src = max(0, k), dd - max(0, -k)
                if hi_dst <= lo_dst:
                    continue  # jump annihilates everything on this truncation
                w = np.outer(v[lo_dst:hi_dst], v[lo_dst:hi_dst].conj())
                w6 = w.reshape(1, hi_dst - lo_dst, 1, 1, hi_dst - lo_dst, 1)
                self._band_jumps.append(
                    ((pre, dd, post), slice(lo_dst, hi_dst), slice(lo_src, hi_src), w6)
                )
            elif self._dense:
                self._mat_jumps.append(
                    (np.ascontiguousarray(lmat), np.ascontiguousarray(lmat.conj().T))
                )
            else:
                self._mat_jumps.append(
                    (sparse.csr_matrix(lmat), sparse.csr_matrix(lmat.conj().T))
                )
        self._t1 = np.empty((d, d), dtype=complex)
        self._t2 = np.empty((d, d), dtype=complex)
        self._t3 = np.empty((d, d), dtype=complex)

    def apply(self, rho: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """G rho + (G rho)^dag + sum_k L_k rho L_k^dag into `out`."""
        if out is None:
            out = np.empty_like(rho)
        t1, t2, t3 = self._t1, self._t2, self._t3
        if self._dense:
            np.matmul(self.g_op, rho, out=t1)
            np.conjugate(t1, out=t2)
            np.add(t1, t2.T, out=out)
            for left, right in self._mat_jumps:
                np.matmul(left, rho, out=t1)
                np.matmul(t1, right, out=t3)
                out += t3
        else:
            t1 = self.g_op @ rho
            np.conjugate(t1, out=t2)
            np.add(t1, t2.T, out=out)
            for left, right in self._mat_jumps:
                out += (left @ rho) @ right
        for (pre, dd, post), dst, src, w6 in self._band_jumps:
            shape = (pre, dd, post, pre, dd, post)
            r6 = rho.reshape(shape)
            o6 = out.reshape(shape)
            o6[:, dst, :, :, dst, :] += w6 * r6[:, src, :, :, src, :]
        return out


def rhs(model: ModelSpec, rho: DensityMatrix) -> np.ndarray:
    """d rho/dt for the model's generator; traceless and Hermitian."""
    if rho.layout != model.layout:
        raise ValueError("state layout does not match model layout")
    return _RhsOps(model).apply(np.asarray(rho.matrix, dtype=complex))


# Dormand-Prince 5(4) tableau (FSAL).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([], dtype=float),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_ERR = np.array(
    [
        35 / 384 - 5179 / 57600,
        0.0,
        500 / 1113 - 7571 / 16695,
        125 / 192 - 393 / 640,
        -2187 / 6784 + 92097 / 339200,
        11 / 84 - 187 / 2100,
        -1 / 40,
    ]
)
_SAFETY = 0.9
_FAC_MIN = 0.2
_FAC_MAX = 5.0
_BETA = 0.04
_ALPHA = 0.2 - 0.75 * _BETA


class _Dopri5:
    """Adaptive 5(4) stepper over density matrices, FSAL, PI step control.

    Internally the state is a flat view; stage combinations run as BLAS
    gemv against a preallocated stage block, which dominates the non-RHS
    cost at the dimensions this package targets.
    """

    def __init__(self, fun2d, rel_tol: float, abs_tol: float, dim: int):
        self.fun2d = fun2d          # fun2d(rho, out) -> out
        self.rel = rel_tol
        self.abs = abs_tol
        self.dim = dim
        n = dim * dim
        self.K = np.empty((7, n), dtype=complex)
        self._ys = np.empty(n, dtype=complex)
        self._acc = np.empty(n, dtype=complex)
        self._a_rows = [np.ascontiguousarray(a, dtype=complex) for a in _DP_A]
        self._e_row = np.ascontiguousarray(_DP_ERR, dtype=complex)
        self.h = None
        self.err_prev = 1.0
        self.k_valid = False        # K[0] holds f(y) carried over (FSAL)

    def _f(self, y_flat: np.ndarray, out_flat: np.ndarray):
        d = self.dim
        self.fun2d(y_flat.reshape(d, d), out_flat.reshape(d, d))

    def _initial_step(self, y, span):
        f0 = self.K[0]
        scale = self.abs + self.rel * np.abs(y)
        d0 = np.sqrt(np.mean(np.abs(y / scale) ** 2))
        d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
        h0 = 1e-6 if d1 < 1e-15 else 0.01 * d0 / d1
        h0 = min(h0, span)
        self._f(y + h0 * f0, self.K[1])
        d2 = np.sqrt(np.mean(np.abs((self.K[1] - f0) / scale) ** 2)) / h0
        dmax = max(d1, d2)
        h1 = (0.01 / dmax) ** 0.2 if dmax > 1e-15 else h0 * 100
        return min(100 * h0, h1, span)

    def advance(self, rho: np.ndarray, t0: float, t1: float) -> np.ndarray:
        """Integrate from t0 to t1, landing exactly on t1; returns a new matrix."""
        d = self.dim
        y = np.array(rho, dtype=complex).reshape(-1)
        k, ys, acc = self.K, self._ys, self._acc
        if not self.k_valid:
            self._f(y, k[0])
            self.k_valid = True
        if self.h is None:
            self.h = self._initial_step(y, t1 - t0)
        t = t0
        rejects = 0
        while t < t1:
            h = min(self.h, t1 - t)
            if h < 1e-14 * max(abs(t), 1.0):
                raise StepSizeUnderflowError(
                    f"step size underflow at t={t:.6g} (h={h:.3g})"
                )
            for s in range(1, 7):
                np.dot(self._a_rows[s], k[:s], out=acc)
                np.multiply(acc, h, out=acc)
                np.add(y, acc, out=ys)
                self._f(ys, k[s])
            # the last stage input is the 5th-order solution (FSAL pair)
            np.dot(self._e_row, k, out=acc)
            np.multiply(acc, h, out=acc)
            scale = self.abs + self.rel * np.maximum(np.abs(y), np.abs(ys))
            ratio = np.abs(acc)
            ratio /= scale
            err = float(np.sqrt(np.mean(ratio * ratio)))
            if err <= 1.0:
                t += h
                np.copyto(y, ys)
                np.copyto(k[0], k[6])
                err = max(err, 1e-10)
                fac = _SAFETY * err ** (-_ALPHA) * self.err_prev ** _BETA
                self.h = h * min(_FAC_MAX, max(_FAC_MIN, fac))
                self.err_prev = err
                rejects = 0
            else:
                self.h = h * max(_FAC_MIN, _SAFETY * err ** -0.2)
                rejects += 1
                if rejects > 50:
                    raise StepSizeUnderflowError(
                        f"50 consecutive step rejections at t={t:.6g}; "
                        "tolerances cannot be met"
                    )
        return y.reshape(d, d)

    def invalidate_fsal(self):
        self.k_valid = False


def _top_level_masks(layout: SpaceLayout) -> list[tuple[str, np.ndarray]]:
    """Diagonal masks selecting the top level of each factor with dim >= 3."""
    masks = []
    dim = layout.dim
    idx = np.arange(dim)
    for slot, d in enumerate(layout.factors):
        if d < 3:
            continue
        stride = int(np.prod(layout.factors[slot + 1:], initial=1))
        level = (idx // stride) % d
        masks.append((layout.labels[slot], level == d - 1))
    return masks


def _mutual_info_from_pair(rho2: DensityMatrix) -> float:
    sa = von_neumann_entropy(partial_trace(rho2, [0]))
    sb = von_neumann_entropy(partial_trace(rho2, [1]))
    sab = von_neumann_entropy(rho2)
    return sa + sb - sab


def evolve(
    model: ModelSpec,
    rho0: DensityMatrix,
    t_end: float,
    sample_dt: float,
    tolerances: Tolerances | None = None,
    *,
    mutual_info_pair: tuple[int, int] | None = None,
    keep_states: bool = False,
    guard_threshold: float = GUARD_THRESHOLD,
) -> Trajectory:
    """Integrate the master equation and sample on a uniform grid.

    Parameters
    ----------
    t_end, sample_dt:
        Run length and sample spacing (t_end must be an integer multiple).
    mutual_info_pair:
        Optional pair of factor slots; records the mutual information
        between them at every sample.
    keep_states:
        Store the sampled density matrices (memory scales with n*D^2).
    """
    if tolerances is None:
        tolerances = Tolerances()
    if t_end <= 0 or sample_dt <= 0:
        raise ValueError("t_end and sample_dt must be positive")
    if rho0.layout != model.layout:
        raise ValueError("initial state layout does not match model layout")
    if rho0.trace_error() > 1e-8:
        raise ValueError(f"initial state trace error {rho0.trace_error():.3g} > 1e-8")
    if rho0.hermiticity_defect() > 1e-10:
        raise ValueError("initial state is not Hermitian to 1e-10")
    n_samples = int(round(t_end / sample_dt))
    if n_samples < 1 or abs(n_samples * sample_dt - t_end) > 1e-9 * max(t_end, 1.0):
        raise ValueError("t_end must be a positive integer multiple of sample_dt")

    ops = _RhsOps(model)
    stepper = _Dopri5(ops.apply, tolerances.rel, tolerances.abs, model.dim)
    obs = [(name, np.ascontiguousarray(op.matrix)) for name, op in model.observables]
    guards = _top_level_masks(model.layout)
    times = np.arange(n_samples + 1) * sample_dt

    values = np.empty((n_samples + 1, len(obs)))
    trace_errors = np.empty(n_samples + 1)
    min_eigs = np.empty(n_samples + 1)
    mi = np.empty(n_samples + 1) if mutual_info_pair is not None else None
    states: list[DensityMatrix] | None = [] if keep_states else None

    y = np.array(rho0.matrix, dtype=complex)
    max_imag = 0.0

    def record(i: int, y: np.ndarray) -> np.ndarray:
        nonlocal max_imag
        tr = np.trace(y)
        trace_errors[i] = abs(tr - 1.0)
        y = 0.5 * (y + y.conj().T)
        tr_real = np.trace(y).real
        if abs(tr_real - 1.0) > RENORM_THRESHOLD:
            y = y / tr_real
        min_eigs[i] = np.linalg.eigvalsh(y)[0]
        for j, (_, mat) in enumerate(obs):
            val = np.einsum("ij,ji->", y, mat)
            max_imag = max(max_imag, abs(val.imag))
            values[i, j] = val.real
        for label, mask in guards:
            pop = float(np.sum(y.real.diagonal()[mask]))
            if pop > guard_threshold:
                raise TruncationError(
                    f"top Fock level of factor '{label}' reached population "
                    f"{pop:.3g} > {guard_threshold:.3g} at t={times[i]:.6g}; "
                    "raise the truncation"
                )
        if mi is not None:
            rho2 = partial_trace(DensityMatrix(model.layout, y), mutual_info_pair)
            mi[i] = _mutual_info_from_pair(rho2)
        if states is not None:
            states.append(DensityMatrix(model.layout, y))
        return y

    y = record(0, y)
    stepper.invalidate_fsal()
    for i in range(1, n_samples + 1):
        y = stepper.advance(y, times[i - 1], times[i])
        y = record(i, y)
        stepper.invalidate_fsal()

    if max_imag > 1e-8:
        raise RuntimeError(
            f"observable expectation acquired imaginary part {max_imag:.3g}"
        )
    return Trajectory(
        times=times,
        values=values,
        names=[name for name, _ in obs],
        trace_errors=trace_errors,
        min_eigenvalues=min_eigs,
        final_state=DensityMatrix(model.layout, y),
        mutual_info=mi,
        states=states,
    )


def dense_liouvillian(model: ModelSpec, cap: int = ORACLE_CAP) -> np.ndarray:
    """Column-stacked superoperator matrix (D^2 x D^2), for D <= cap.

    Column stacking means vec(rho) = rho.ravel(order='F'), for which
    vec(A rho B) = (B^T kron A) vec(rho).
    """
    d = model.dim
    if d > cap:
        raise ValueError(f"dense Liouvillian capped at dimension {cap}, model has {d}")
    eye = np.eye(d, dtype=complex)
    h = model.hamiltonian.matrix
    liou = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for dis in model.dissipators:
        l = dis.jump.matrix
        ldl = l.conj().T @ l
        liou += dis.rate * (
            2.0 * np.kron(l.conj(), l) - np.kron(eye, ldl) - np.kron(ldl.T, eye)
        )
    return liou


def propagate_dense(
    model: ModelSpec, rho0: DensityMatrix, times, cap: int = ORACLE_CAP
) -> list[DensityMatrix]:
    """Oracle propagation exp(L t) vec(rho0) at the given times."""
    if rho0.layout != model.layout:
        raise ValueError("initial state layout does not match model layout")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be a non-empty strictly increasing 1-D grid")
    liou = dense_liouvillian(model, cap=cap)
    d = model.dim
    vec = rho0.matrix.ravel(order="F").astype(complex)
    out = []
    prop_cache: dict[float, np.ndarray] = {}
    t_prev = 0.0
    for t in times:
        dt = t - t_prev
        if dt > 0:
            if dt not in prop_cache:
                prop_cache[dt] = expm(liou * dt)
            vec = prop_cache[dt] @ vec
        t_prev = t
        out.append(DensityMatrix(model.layout, vec.reshape(d, d, order="F")))
    return out
