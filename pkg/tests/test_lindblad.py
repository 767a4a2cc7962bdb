import numpy as np
import pytest

from qsync.lindblad import (
    Dissipator,
    ModelSpec,
    Tolerances,
    TruncationError,
    dense_liouvillian,
    evolve,
    propagate_dense,
    rhs,
)
from qsync.models import ReducedQubitParams, VdpParams, build_reduced_qubit, build_vdp
from qsync.opalg import (
    DensityMatrix,
    Operator,
    SpaceLayout,
    destroy,
    pauli,
    purity,
)


def single_qubit_decay(kappa=1.0):
    lay = SpaceLayout((2,), ("q",))
    h = Operator(lay, np.zeros((2, 2)))
    return ModelSpec(
        layout=lay,
        hamiltonian=h,
        dissipators=(Dissipator(kappa, pauli("minus", "q")),),
        observables=(("sigma_z", pauli("z", "q")),),
    )


def rabi_qubit(omega):
    lay = SpaceLayout((2,), ("q",))
    return ModelSpec(
        layout=lay,
        hamiltonian=Operator(lay, omega * pauli("x", "q").matrix),
        dissipators=(),
        observables=(("sigma_z", pauli("z", "q")),),
    )


def excited(lay):
    return DensityMatrix.product_state(lay, [(0, 1)])


def random_model_and_state(rng, dims=(2, 3), n_dissipators=2):
    lay = SpaceLayout(dims, tuple(f"f{i}" for i in range(len(dims))))
    d = lay.dim

    def rand_mat():
        return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))

    hm = rand_mat()
    h = Operator(lay, 0.5 * (hm + hm.conj().T))
    dis = tuple(
        Dissipator(float(rng.uniform(0.1, 1.0)), Operator(lay, rand_mat()))
        for _ in range(n_dissipators)
    )
    model = ModelSpec(lay, h, dis, observables=())
    m = rand_mat()
    rho = m @ m.conj().T
    rho = DensityMatrix(lay, rho / np.trace(rho).real)
    return model, rho


class TestRhs:
    def test_excited_state_decay_slope(self):
        # closed form: rho_ee(t) = exp(-2 kappa t), so d(rho_ee)/dt = -2 kappa
        kappa = 0.7
        model = single_qubit_decay(kappa)
        deriv = rhs(model, excited(model.layout))
        assert deriv[1, 1].real == pytest.approx(-2 * kappa, rel=1e-12)
        assert deriv[0, 0].real == pytest.approx(2 * kappa, rel=1e-12)

    def test_pure_unitary_when_no_dissipators(self):
        model = rabi_qubit(0.8)
        rho = DensityMatrix.product_state(model.layout, [(1, 0)])
        deriv = rhs(model, rho)
        h = model.hamiltonian.matrix
        expected = -1j * (h @ rho.matrix - rho.matrix @ h)
        assert np.allclose(deriv, expected, atol=1e-14)

    def test_traceless_and_hermitian_on_random_inputs(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            model, rho = random_model_and_state(rng)
            deriv = rhs(model, rho)
            assert abs(np.trace(deriv)) < 1e-12
            assert np.max(np.abs(deriv - deriv.conj().T)) < 1e-12

    def test_layout_mismatch_rejected(self):
        model = single_qubit_decay()
        bad = DensityMatrix(SpaceLayout((3,), ("m",)), np.eye(3) / 3)
        with pytest.raises(ValueError):
            rhs(model, bad)


class TestEvolve:
    def test_rabi_oscillation_analytic(self):
        # from |g> under Omega*sigma_x: <sigma_z>(t) = -cos(2 Omega t)
        omega = 0.9
        model = rabi_qubit(omega)
        rho0 = DensityMatrix.product_state(model.layout, [(1, 0)])
        traj = evolve(model, rho0, 10.0, 0.05)
        expected = -np.cos(2 * omega * traj.times)
        assert np.max(np.abs(traj.column("sigma_z") - expected)) < 1e-6

    def test_excited_decay_matches_closed_form(self):
        kappa = 0.4
        model = single_qubit_decay(kappa)
        traj = evolve(model, excited(model.layout), 5.0, 0.25)
        # rho_ee = (1 + <sigma_z>)/2 = exp(-2 kappa t)
        pop = (1 + traj.column("sigma_z")) / 2
        assert np.max(np.abs(pop - np.exp(-2 * kappa * traj.times))) < 1e-7

    def test_vacuum_is_fixed_point(self):
        n = 4
        lay = SpaceLayout((n,), ("m",))
        a = destroy(n, "m")
        model = ModelSpec(
            lay,
            Operator(lay, np.zeros((n, n))),
            (Dissipator(0.8, a),),
            observables=(("n", a.dag() @ a),),
        )
        rho0 = DensityMatrix.product_state(lay, [(1,) + (0,) * (n - 1)])
        traj = evolve(model, rho0, 3.0, 0.5)
        assert np.max(np.abs(traj.column("n"))) < 1e-12
        assert np.max(np.abs(traj.final_state.matrix - rho0.matrix)) < 1e-12

    def test_trace_and_positivity_diagnostics(self):
        model = build_reduced_qubit(ReducedQubitParams(0.1, 0.05, 2e-3, 0.25))
        rho0 = DensityMatrix.product_state(
            model.layout, [(np.sqrt(0.9), np.sqrt(0.1)), (np.sqrt(0.7), np.sqrt(0.3))]
        )
        traj = evolve(model, rho0, 50.0, 0.5)
        assert traj.max_trace_error < 1e-8
        assert traj.min_eigenvalue > -1e-8

    def test_self_convergence_under_tolerance_halving(self):
        model = build_reduced_qubit(ReducedQubitParams(0.05, 0.0, 1e-3, 0.25))
        rho0 = DensityMatrix.product_state(
            model.layout, [(np.sqrt(0.9), np.sqrt(0.1)), (np.sqrt(0.7), np.sqrt(0.3))]
        )
        base = evolve(model, rho0, 40.0, 1.0, Tolerances(rel=1e-8, abs=1e-10))
        fine = evolve(model, rho0, 40.0, 1.0, Tolerances(rel=5e-9, abs=5e-11))
        assert np.max(np.abs(base.values - fine.values)) < 1e-6

    def test_truncation_guard_fires(self):
        # strong resonant drive on a tiny Fock space overflows the top level
        n = 3
        lay = SpaceLayout((n,), ("m",))
        a = destroy(n, "m")
        drive = 1j * (a.dag() - a)
        model = ModelSpec(
            lay,
            Operator(lay, 2.0 * drive.matrix),
            (Dissipator(0.05, a),),
            observables=(),
        )
        rho0 = DensityMatrix.product_state(lay, [(1, 0, 0)])
        with pytest.raises(TruncationError):
            evolve(model, rho0, 5.0, 0.25)

    def test_guard_ignores_qubit_factors(self):
        # dimension-2 factors are not Fock-truncated; full excitation is fine
        model = rabi_qubit(1.0)
        rho0 = DensityMatrix.product_state(model.layout, [(1, 0)])
        traj = evolve(model, rho0, 3.0, 0.1)
        assert traj.times[-1] == pytest.approx(3.0)

    def test_t_end_must_be_multiple_of_sample_dt(self):
        model = rabi_qubit(1.0)
        rho0 = DensityMatrix.product_state(model.layout, [(1, 0)])
        with pytest.raises(ValueError):
            evolve(model, rho0, 1.0, 0.3)

    def test_mutual_info_recording(self):
        model = build_reduced_qubit(ReducedQubitParams(0.0, 0.0, 0.0, 0.25))
        rho0 = DensityMatrix.product_state(
            model.layout, [(np.sqrt(0.9), np.sqrt(0.1)), (np.sqrt(0.7), np.sqrt(0.3))]
        )
        traj = evolve(model, rho0, 20.0, 1.0, mutual_info_pair=(0, 1))
        assert traj.mutual_info is not None
        assert traj.mutual_info[0] == pytest.approx(0.0, abs=1e-9)  # product state
        assert np.all(traj.mutual_info > -1e-9)

    def test_keep_states(self):
        model = rabi_qubit(0.5)
        rho0 = DensityMatrix.product_state(model.layout, [(1, 0)])
        traj = evolve(model, rho0, 2.0, 0.5, keep_states=True)
        assert len(traj.states) == 5
        assert np.allclose(traj.states[-1].matrix, traj.final_state.matrix)


class TestDenseOracle:
    def test_liouvillian_matches_rhs_on_vectorized_inputs(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            model, rho = random_model_and_state(rng)
            liou = dense_liouvillian(model)
            direct = rhs(model, rho)
            via_matrix = (liou @ rho.matrix.ravel(order="F")).reshape(
                model.dim, model.dim, order="F"
            )
            assert np.max(np.abs(direct - via_matrix)) < 1e-12

    def test_decay_liouvillian_has_steady_state(self):
        model = single_qubit_decay(0.5)
        liou = dense_liouvillian(model)
        eigs = np.linalg.eigvals(liou)
        assert np.min(np.abs(eigs)) < 1e-12

    def test_zero_time_propagation_is_identity(self):
        model = single_qubit_decay(0.5)
        rho0 = excited(model.layout)
        out = propagate_dense(model, rho0, [0.0])
        assert np.max(np.abs(out[0].matrix - rho0.matrix)) < 1e-15

    def test_cap_enforced(self):
        model = build_vdp(VdpParams(1, 1, 0.1, 0.01, 0.01, 0.3, 0.3, N=6))
        with pytest.raises(ValueError):
            dense_liouvillian(model)

    def test_evolve_agrees_with_oracle_on_reduced_model(self):
        model = build_reduced_qubit(ReducedQubitParams(0.05, 0.02, 1e-3, 0.25))
        rho0 = DensityMatrix.product_state(
            model.layout, [(np.sqrt(0.9), np.sqrt(0.1)), (np.sqrt(0.7), np.sqrt(0.3))]
        )
        t_final = 20.0
        oracle = propagate_dense(model, rho0, [t_final])[0]
        traj = evolve(model, rho0, t_final, t_final / 4)
        assert np.max(np.abs(traj.final_state.matrix - oracle.matrix)) < 1e-6


class TestContraction:
    def test_trace_distance_between_evolving_states_contracts(self):
        # CPTP evolution cannot increase the trace distance of two states
        from qsync.opalg import trace_distance

        model = build_reduced_qubit(ReducedQubitParams(0.0, 0.0, 0.0, 0.25))
        rho_a = DensityMatrix.product_state(
            model.layout, [(np.sqrt(0.9), np.sqrt(0.1)), (np.sqrt(0.7), np.sqrt(0.3))]
        )
        rho_b = DensityMatrix.product_state(model.layout, [(1, 0), (0, 1)])
        ta = evolve(model, rho_a, 30.0, 1.0, keep_states=True)
        tb = evolve(model, rho_b, 30.0, 1.0, keep_states=True)
        dists = [trace_distance(a, b) for a, b in zip(ta.states, tb.states)]
        diffs = np.diff(dists)
        assert np.all(diffs <= 1e-9)

    def test_purity_bounded(self):
        model = build_reduced_qubit(ReducedQubitParams(0.0, 0.0, 0.0, 0.25))
        rho0 = DensityMatrix.product_state(
            model.layout, [(np.sqrt(0.9), np.sqrt(0.1)), (np.sqrt(0.7), np.sqrt(0.3))]
        )
        traj = evolve(model, rho0, 30.0, 1.0, keep_states=True)
        for state in traj.states:
            assert 0.25 - 1e-12 <= purity(state) <= 1.0 + 1e-12
