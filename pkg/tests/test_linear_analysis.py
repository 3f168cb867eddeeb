import numpy as np
import pytest
import scipy.integrate
import scipy.linalg

from conftest import random_state
from vfpns import dynamics as dyn
from vfpns import linear_analysis as la
from vfpns import spatial_spectral as sp
from vfpns import velocity_basis as vb
from vfpns.params import ModelParams
from vfpns.state_energy import SystemState


@pytest.fixture(scope="module")
def t6():
    return vb.enumerate_truncation(3, 6)


def random_mode_states(size, count, rng):
    return rng.standard_normal((size, count)) + 1j * rng.standard_normal((size, count))


# -- mode matrix ---------------------------------------------------------------------

def test_mode_matrix_matches_linear_rhs(grid3, trunc3, params, rng):
    s = random_state(grid3, trunc3, 1.0, rng)
    rhs = dyn.linear_rhs(s, params).stack()
    x = s.stack()
    for m in [(0, 0, 0), (1, 0, 0), (1, -2, 3), (-3, 2, 2)]:
        mm = la.build_mode_matrix(grid3.dk * np.array(m, float), trunc3, params)
        idx = (slice(None),) + tuple(np.mod(m, grid3.n))
        assert np.max(np.abs(mm.matrix @ x[idx] - rhs[idx])) <= 1e-12 * max(1, np.max(np.abs(rhs[idx])))


def test_mode_matrix_structure(trunc3, params):
    zero = la.build_mode_matrix(np.zeros(3), trunc3, params)
    assert np.all(zero.matrix.imag == 0)
    mm = la.build_mode_matrix(np.array([0.3, -1.2, 0.7]), trunc3, params)
    n = len(trunc3)
    transport = mm.matrix[:n, :n] + np.diag(trunc3.degrees)
    assert np.allclose(transport, -transport.conj().T)
    with pytest.raises(ValueError):
        la.build_mode_matrix(np.zeros(2), trunc3, params)


@pytest.mark.parametrize("N", [4, 6])
def test_kernel_at_zero_wavenumber(N, params):
    trunc = vb.enumerate_truncation(3, N)
    mm = la.build_mode_matrix(np.zeros(3), trunc, params)
    assert la.kernel_dimension(mm) == 3 + 2
    assert la.spectral_abscissa(mm, exclude_conserved=True) == pytest.approx(-2.0, abs=1e-12)
    assert la.spectral_abscissa(mm) == pytest.approx(0.0, abs=1e-12)
    # b - u relaxes with rate 2
    x = np.zeros(mm.size)
    x[1], x[len(trunc) + 1] = 1.0, -1.0
    assert np.allclose(mm.matrix @ x, -2 * x)
    # micro modes e_alpha with |alpha| = m >= 2 decouple with eigenvalue -m
    for alpha in [(2, 0, 0), (1, 1, 0), (2, 1, 1)]:
        e = np.zeros(mm.size)
        e[trunc.index_of(alpha)] = 1.0
        assert np.allclose(mm.matrix @ e, -sum(alpha) * e)


def test_abscissa_of_diagonal_matrix():
    assert la.spectral_abscissa(np.diag([-1.0, -3.0])) == -1.0


@pytest.mark.parametrize("N", [4, 6, 8])
def test_no_kernel_away_from_zero(N, params):
    trunc = vb.enumerate_truncation(3, N)
    for km in (0.05, 1.0, 20.0):
        assert la.spectral_abscissa(la.build_mode_matrix(np.array([km, 0, 0]), trunc, params)) < 0


def test_gap_shape(t6, params):
    kmags = np.geomspace(0.05, 20, 12)
    rates, c = la.gap_survey(kmags, t6, params)
    assert c > 0
    assert np.all(rates >= c * kmags ** 2 / (1 + kmags ** 2) * (1 - 1e-12))
    # saturation: the rate stays bounded away from zero at large |k|
    assert rates[-1] > 0.5 * c


# -- propagator ----------------------------------------------------------------------

@pytest.mark.parametrize("km,t", [(0.3, 0.7), (2.0, 3.0), (7.5, 0.05)])
def test_propagator_matches_reference_integration(trunc3, params, rng, km, t):
    direction = rng.standard_normal(3)
    mm = la.build_mode_matrix(km * direction / np.linalg.norm(direction), trunc3, params)
    x0 = random_mode_states(mm.size, 1, rng)[:, 0]
    sol = scipy.integrate.solve_ivp(lambda _, y: mm.matrix @ y, (0, t), x0, method="DOP853",
                                    rtol=1e-13, atol=1e-15)
    ref = sol.y[:, -1]
    assert np.linalg.norm(la.propagator(mm, t) @ x0 - ref) <= 1e-10 * np.linalg.norm(ref)


# -- Lyapunov functional -------------------------------------------------------------

def test_lyapunov_zero_and_plain_norm(trunc3, params, rng):
    k = np.array([0.4, 1.0, -0.2])
    size = len(trunc3) + 4
    assert la.lyapunov_value(k, np.zeros(size), trunc3, 0.1, 0.1, params.dp1) == 0
    x = random_mode_states(size, 5, rng)
    n = len(trunc3)
    plain = (np.sum(np.abs(x[:n]) ** 2, axis=0) + params.dp1 * np.abs(x[n]) ** 2
             + np.sum(np.abs(x[n + 1:]) ** 2, axis=0))
    assert np.allclose(la.lyapunov_value(k, x, trunc3, 0.0, 0.0, params.dp1), plain)


def test_lyapunov_equivalent_to_plain_norm(trunc3, params, rng):
    size = len(trunc3) + 4
    n = len(trunc3)
    worst = np.inf
    for _ in range(10):
        k = rng.standard_normal(3) * rng.uniform(0.05, 20)
        x = random_mode_states(size, 100, rng)
        plain = (np.sum(np.abs(x[:n]) ** 2, axis=0) + params.dp1 * np.abs(x[n]) ** 2
                 + np.sum(np.abs(x[n + 1:]) ** 2, axis=0))
        worst = min(worst, np.min(la.lyapunov_value(k, x, trunc3, 0.1, 0.1, params.dp1) / plain))
    assert worst >= 0.5


def test_lyapunov_form_reproduces_value(trunc3, params, rng):
    k = np.array([1.0, -0.5, 2.0])
    h = la.lyapunov_form(k, trunc3, 0.1, 0.1, params.dp1)
    assert np.allclose(h, h.conj().T)
    x = random_mode_states(h.shape[0], 4, rng)
    quad = np.real(np.einsum("ij,ik,jk->k", h, x.conj(), x))
    assert np.allclose(quad, la.lyapunov_value(k, x, trunc3, 0.1, 0.1, params.dp1))


# -- gap certificate -----------------------------------------------------------------

def test_certificate_single_k(trunc3, params):
    cert = la.gap_certificate([1.0], trunc3, params)
    assert cert.lam > 0 and not cert.searched
    # cannot beat the slowest eigenmode: lambda |k|^2/(1+|k|^2) <= 2 r(k)
    rates, _ = la.gap_survey([1.0], trunc3, params, direction=[1, 0, 0])
    assert cert.lam * 0.5 <= 2 * rates[0] * (1 + 1e-9)
    assert set(cert.to_dict()) == {"lambda_hat", "tau4", "tau5", "searched", "per_k"}


def test_certificate_micro_mode_decay(trunc3, params):
    cert = la.gap_certificate([1.0], trunc3, params)
    k = np.array([1.0, 0.0, 0.0])
    mm = la.build_mode_matrix(k, trunc3, params)
    x0 = np.zeros(mm.size, complex)
    x0[trunc3.index_of((2, 0, 0))] = 1.0
    rate = min(1.0, cert.lam / 2)
    e0 = la.lyapunov_value(k, x0, trunc3, cert.tau4, cert.tau5, params.dp1)
    for t in (0.5, 2.0, 10.0, 50.0):
        et = la.lyapunov_value(k, la.propagator(mm, t) @ x0, trunc3, cert.tau4, cert.tau5, params.dp1)
        assert et <= np.exp(-rate * t) * e0


def test_certificate_is_scale_invariant(trunc3, params):
    a = la.gap_certificate([0.5, 2.0], trunc3, params, trials=3)
    b = la.gap_certificate([0.5, 2.0], trunc3, params, trials=3)
    assert a.lam == b.lam
    with pytest.raises(ValueError):
        la.gap_certificate([0.0], trunc3, params)


def test_lyapunov_value_is_quadratic(trunc3, params, rng):
    k = np.array([0.7, 0.0, 0.0])
    x = random_mode_states(len(trunc3) + 4, 3, rng)
    v1 = la.lyapunov_value(k, x, trunc3, 0.1, 0.1, params.dp1)
    v2 = la.lyapunov_value(k, 2 * x, trunc3, 0.1, 0.1, params.dp1)
    assert np.allclose(v2, 4 * v1)


# -- decay curves and fits -----------------------------------------------------------

def test_decay_fit_examples():
    t = np.linspace(0, 1000, 400)
    fit = la.fit_decay_exponent(t, (1 + t) ** -0.75, (10, 1000))
    assert fit.fitted_exponent == pytest.approx(-0.75, abs=1e-3)
    assert fit.residual < 1e-10
    t2 = np.linspace(10, 100, 50)
    assert la.fit_decay_exponent(t2, np.exp(-t2)).fitted_exponent < -5
    assert abs(la.fit_decay_exponent(t, np.full_like(t, 3.0)).fitted_exponent) < 1e-6
    with pytest.raises(ValueError):
        la.fit_decay_exponent(t, -np.ones_like(t))
    rate, r2 = la.fit_exponential_rate(t2, 2 * np.exp(-0.3 * t2))
    assert rate == pytest.approx(0.3, rel=1e-12) and r2 == pytest.approx(1.0)


def test_decay_curve_rejects_anisotropic_profile(trunc3, params):
    vec = np.zeros(len(trunc3) + 4)
    vec[1] = 1.0
    with pytest.raises(ValueError):
        la.semigroup_decay_curve([1.0], trunc3, params, vector=vec)


def test_decay_curve_warns_on_truncated_tail(trunc3, params):
    with pytest.warns(RuntimeWarning):
        la.semigroup_decay_curve([1.0], trunc3, params, kmax=0.5, shells=20)


def test_high_frequency_profile_steepens(trunc3, params):
    # data supported on |k| >= 1: gap-limited, no algebraic tail
    times = np.geomspace(1, 200, 25)
    env = lambda km: np.where(km >= 1.0, np.exp(-(km - 2) ** 2), 0.0)  # noqa: E731
    vals = la.semigroup_decay_curve(times, trunc3, params, envelope=env, kmin=0.5, kmax=8,
                                    shells=80)
    early = la.fit_decay_exponent(times, vals, (1, 10)).fitted_exponent
    late = la.fit_decay_exponent(times, vals, (50, 200)).fitted_exponent
    assert late < early < -0.75 and late < -5


def test_decay_curve_single_shell_matches_propagator(trunc3, params):
    # one shell, trivial weight: the curve reduces to the propagated vector norm
    vec = la.radial_profile(trunc3)
    mm = la.build_mode_matrix(np.array([0.8, 0, 0]), trunc3, params)
    ref = np.sum(np.abs(la.propagator(mm, 3.0) @ vec) ** 2)
    assert la._evolved_norms_sq(mm.matrix, vec, np.array([3.0]))[0] == pytest.approx(ref, rel=1e-10)
    assert la._evolved_norms_sq(mm.matrix, vec, np.array([3.0]), max_cond=0.0)[0] == \
        pytest.approx(ref, rel=1e-10)
