import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcms.core import ModelParams
from fcms.errors import NumericalError, UndefinedRecoveryError
from fcms.spectral import (
    charpoly3,
    critical_beta,
    eig2,
    eig_small,
    full_jacobian,
    jacobian_2x2,
    lambda_curve,
    recovery_time_theory,
    reduced_jacobian,
    rotation_angle,
    spectral_radius,
    spectral_report,
    stability_criterion,
)

entry = st.floats(min_value=-10, max_value=10, allow_nan=False)


def _match(ours, reference, tol):
    ref = list(reference)
    for z in ours:
        k = int(np.argmin([abs(z - r) for r in ref]))
        assert abs(z - ref[k]) <= tol
        ref.pop(k)


class TestJacobian:
    def test_baseline_entries(self, baseline):
        np.testing.assert_array_equal(reduced_jacobian(baseline), [[0.9, 0.5], [-0.02, 1.0]])

    def test_determinant(self, baseline):
        j = reduced_jacobian(baseline)
        assert np.linalg.det(j) == pytest.approx(0.9 + 4 * 0.01 * 0.25, abs=1e-15)

    def test_full_projects_to_reduced(self):
        p = ModelParams(beta=1.2, alpha=(0.4, 0.4))
        full = full_jacobian(p)
        # d = x1 - x2 and S coordinates
        proj = np.array([[0.0, 0.0, 1.0], [1.0, -1.0, 0.0]])
        lift = np.array([[0.0, 0.5], [0.0, -0.5], [1.0, 0.0]])
        np.testing.assert_allclose(proj @ full @ lift, reduced_jacobian(p), atol=1e-15)


class TestEig2:
    def test_baseline(self, baseline):
        eigs = eig2(reduced_jacobian(baseline))
        assert eigs[0].real == pytest.approx(0.95, abs=1e-15)
        assert abs(eigs[0].imag) == pytest.approx(math.sqrt(0.0075), abs=1e-15)
        assert eigs[0] == eigs[1].conjugate()
        assert abs(eigs[0]) == pytest.approx(0.9539392014169456, abs=1e-12)

    def test_identity(self):
        assert eig2(np.eye(2)) == (1.0, 1.0)

    def test_real_distinct(self):
        assert eig2([[2.0, 0.0], [0.0, 0.5]]) == (2.0, 0.5)

    @given(a=entry, b=entry, c=entry, d=entry)
    @settings(max_examples=300)
    def test_against_numpy(self, a, b, c, d):
        m = np.array([[a, b], [c, d]])
        scale = max(1.0, np.max(np.abs(m)))
        _match(eig2(m), np.linalg.eigvals(m), 1e-6 * scale)


class TestEigSmall:
    def test_diagonal(self):
        eigs = eig_small(np.diag([0.2, -0.7, 0.5]))
        assert [round(z.real, 12) for z in eigs] == [-0.7, 0.5, 0.2]

    def test_baseline_full(self, baseline):
        eigs = eig_small(full_jacobian(baseline))
        _match(eigs, [1.0, *eig2(reduced_jacobian(baseline))], 1e-12)

    def test_charpoly(self):
        m = np.arange(9.0).reshape(3, 3) + np.eye(3)
        a2, a1, a0 = charpoly3(m)
        np.testing.assert_allclose(np.poly(m)[1:], [a2, a1, a0], atol=1e-10)

    @given(st.lists(entry, min_size=9, max_size=9))
    @settings(max_examples=300)
    def test_against_numpy(self, values):
        m = np.array(values).reshape(3, 3)
        scale = max(1.0, np.max(np.abs(m)))
        try:
            eigs = eig_small(m)
        except NumericalError:
            # defective matrices: numpy's own answer is perturbed by ~sqrt(eps)
            return
        _match(eigs, np.linalg.eigvals(m), 1e-5 * scale)

    def test_rejects_nonfinite(self):
        with pytest.raises(NumericalError):
            eig_small(np.full((3, 3), np.nan))


class TestThreshold:
    def test_beta_c(self, baseline):
        assert critical_beta(baseline) == pytest.approx(1.5811388300841898, abs=1e-12)

    def test_boundary_unit_radius(self, baseline):
        bc = critical_beta(baseline)
        assert spectral_radius(jacobian_2x2(bc, 0.1, 0.01)) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("beta, rho", [
        (0.5, math.sqrt(0.91)),
        (1.41, math.sqrt(0.979524)),
        (1.55, math.sqrt(0.9961)),
        (1.65, math.sqrt(1.0089)),
    ])
    def test_lambda_curve(self, baseline, beta, rho):
        [(b, r)] = lambda_curve(baseline, [beta])
        assert b == beta and r == pytest.approx(rho, abs=1e-12)

    @given(gamma=st.floats(0.01, 0.99), eta=st.floats(1e-3, 0.1), beta=st.floats(0.01, 10))
    def test_complex_pair_modulus(self, gamma, eta, beta):
        # complex regime: |lambda|^2 = det
        j = jacobian_2x2(beta, gamma, eta)
        tr, det = np.trace(j), np.linalg.det(j)
        if tr * tr < 4 * det:
            assert spectral_radius(j) == pytest.approx(math.sqrt(det), rel=1e-12)

    @pytest.mark.parametrize("beta, expected", [(0.5, True), (1.58, True), (1.59, False), (1.65, False)])
    def test_criterion(self, baseline, beta, expected):
        from dataclasses import replace
        assert stability_criterion(replace(baseline, beta=beta)) is expected


class TestRecovery:
    def test_values(self):
        assert recovery_time_theory(ModelParams(beta=0.5)) == pytest.approx(21.2065, abs=1e-4)
        assert recovery_time_theory(ModelParams(beta=1.55)) == pytest.approx(511.82, abs=1e-2)

    def test_supercritical(self):
        with pytest.raises(UndefinedRecoveryError):
            recovery_time_theory(ModelParams(beta=1.65))

    def test_rotation_angle(self, baseline):
        assert rotation_angle(baseline) == pytest.approx(math.atan2(math.sqrt(0.0075), 0.95), abs=1e-14)


class TestReport:
    def test_baseline(self, baseline):
        rep = spectral_report(baseline)
        d = rep.to_dict()
        assert sorted(d) == ["beta_c", "criterion_satisfied", "eigenvalues", "rho", "stable", "tau_theory"]
        assert d["rho"] == pytest.approx(0.95394, abs=1e-5)
        assert d["stable"] and d["criterion_satisfied"]
        assert d["beta_c"] == pytest.approx(1.58114, abs=1e-5)

    def test_supercritical(self):
        rep = spectral_report(ModelParams(beta=1.65))
        assert not rep.stable and rep.tau_theory is None
        assert rep.rho == pytest.approx(1.00444, abs=1e-5)

    def test_heterogeneous_uses_full(self):
        p = ModelParams(alpha=(0.0, 5.0))
        rep = spectral_report(p)
        assert len(rep.eigenvalues) == 3
        _match(rep.eigenvalues, np.linalg.eigvals(full_jacobian(p)), 1e-10)
        assert cmath.isclose(max(rep.eigenvalues, key=abs), rep.eigenvalues[0])
