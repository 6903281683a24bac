import numpy as np
import pytest
from scipy.integrate import cumulative_trapezoid

from helpers import circ, coherence_track, spin_tracks
from holoq.adiabatic import (
    CrossoverSetup,
    adiabatic_evolve,
    crossover_time,
    exact_evolve,
    ladder_integrate,
    max_ratio_curve,
)
from holoq.errors import GapCollapseError, HoloqError, StabilityError
from holoq.geophase import abelian_phase, gauge_transform
from holoq.models import JordanChainModel, SpinHalfModel, circle_path, coherence_track_index
from holoq.path import ParameterPath, SmoothBlockTrack, sample_family, track_blocks
from holoq.superop import devectorize, vectorize
from oracles import propagate

DEPH = SpinHalfModel(B=1.0, theta=np.pi / 3, channel="dephasing", beta=0.1)


def imbalanced_state(model, weight=0.8):
    w = model.W(model.path(16).at(0.0))
    psi = np.sqrt(weight) * w[:, 0] + np.sqrt(1 - weight) * w[:, 1]
    return vectorize(np.outer(psi, psi.conj()), model.basis)


# --- exact integration ------------------------------------------------------------

def test_zero_generator_keeps_state():
    path = circle_path(32)
    res = exact_evolve(lambda r: np.zeros((4, 4)), path, 10.0, np.arange(4.0))
    assert np.all(res.states == np.arange(4.0))
    assert res.method == "exact"


def test_static_diagonal_generator_is_exponential():
    lam = np.array([0.0, -0.3, 0.7j, -0.1 - 0.4j])
    T = 3.0
    res = exact_evolve(lambda r: np.diag(lam), circle_path(64), T, np.ones(4), n_steps=2000)
    expect = np.exp(np.outer(res.s, lam) * T)
    assert np.max(np.abs(res.states - expect)) <= 1e-10


def test_matches_independent_propagator():
    rho0 = DEPH.initial_state()
    path = DEPH.path(256)
    res = exact_evolve(DEPH, path, 20.0, rho0)
    ref = propagate(lambda s: DEPH(path.at(s)).matrix, 20.0, rho0.coefficients, n=8192)
    err = np.linalg.norm(res.final - ref)
    assert err <= 1e-5
    # the half-step estimate should be the right size
    assert err / 3 <= res.error_estimate <= 3 * err


def test_trace_and_hermiticity_preserved():
    for channel in ("dephasing", "spontaneous-emission", "bit-flip"):
        m = DEPH.with_(channel=channel, beta=0.3)
        res = exact_evolve(m, m.path(64), 15.0, m.initial_state())
        assert np.max(np.abs(res.states[:, 0] - res.states[0, 0])) <= 1e-8
        for v in res.states[::37]:
            rho = devectorize(v, m.basis)
            assert np.max(np.abs(rho - rho.conj().T)) <= 1e-8


def test_closed_evolution_is_unitary():
    m = DEPH.with_(channel="none", beta=0.0)
    res = exact_evolve(m, m.path(64), 30.0, m.initial_state(), n_steps=4096)
    norms = np.linalg.norm(res.states, axis=1)
    assert np.max(np.abs(norms - norms[0])) <= 1e-8


def test_stability_refusal():
    with pytest.raises(StabilityError) as info:
        exact_evolve(DEPH, DEPH.path(64), 500.0, DEPH.initial_state(), n_steps=100)
    assert info.value.suggested_steps >= 500
    with pytest.raises(ValueError):
        exact_evolve(DEPH, DEPH.path(64), -1.0, DEPH.initial_state())


# --- adiabatic evolution -----------------------------------------------------------

def test_closed_eigenstate_stays_instantaneous_eigenstate():
    m = DEPH.with_(channel="none", beta=0.0)
    path = m.path(256)
    w0 = m.W(path.at(0.0))
    rho0 = vectorize(np.outer(w0[:, 0], w0[:, 0].conj()), m.basis)
    res = adiabatic_evolve(m, path, 40.0, rho0)
    for k in (0, 50, 128, 256):
        w = m.W(path.at(res.s[k]))
        target = np.outer(w[:, 0], w[:, 0].conj())
        assert np.max(np.abs(devectorize(res.states[k], m.basis) - target)) <= 1e-10


def test_coherence_picks_up_dynamical_and_geometric_phase():
    T = 200.0
    tracks = spin_tracks("dephasing", 0.1)
    track = coherence_track("dephasing", 0.1)
    res = adiabatic_evolve(DEPH, DEPH.path(1024), T, DEPH.initial_state(), tracks=tracks)
    c0 = track.left[0, 0] @ res.states[0]
    c1 = track.left[-1, 0] @ res.states[-1]
    lam = track.eigenvalues[0]
    geometric = np.angle(c1 / c0) - T * lam.imag
    # the amplitudes carry the grid transfer product, not the extrapolated value
    grid = abelian_phase(track, extrapolate=False).gamma.real
    assert circ(geometric, grid) <= 1e-9
    assert circ(geometric, -np.pi) <= 1e-4
    assert np.isclose(abs(c1 / c0), np.exp(T * lam.real), rtol=1e-8)


def test_adiabatic_error_shrinks_with_T():
    rho0 = DEPH.initial_state()
    path = DEPH.path(1024)
    tracks = spin_tracks("dephasing", 0.1)
    errs = []
    for T in (5.0, 20.0, 80.0):
        ex = exact_evolve(DEPH, path, T, rho0)
        ad = adiabatic_evolve(DEPH, path, T, rho0, tracks=tracks)
        errs.append(np.linalg.norm(ex.final - ad.final))
    assert errs[0] > errs[1] > errs[2]


def test_adiabatic_error_is_first_order_in_inverse_time():
    # the leading deviation is a population offset left behind at s = 0, O(1/T)
    rho0 = DEPH.initial_state()
    path = DEPH.path(1024)
    tracks = spin_tracks("dephasing", 0.1)
    scaled = []
    for T in (320.0, 640.0):
        ex = exact_evolve(DEPH, path, T, rho0)
        ad = adiabatic_evolve(DEPH, path, T, rho0, tracks=tracks)
        scaled.append(T * np.linalg.norm(ex.final - ad.final))
    assert abs(scaled[1] - scaled[0]) <= 0.02 * scaled[1]


def test_adiabatic_state_is_physical():
    res = adiabatic_evolve(DEPH, DEPH.path(256), 30.0, DEPH.initial_state())
    assert res.method == "adiabatic"
    assert np.max(np.abs(res.states[:, 0] - res.states[0, 0])) <= 1e-8
    for v in res.states[::64]:
        rho = devectorize(v, DEPH.basis)
        assert np.max(np.abs(rho - rho.conj().T)) <= 1e-8


# --- ladder ------------------------------------------------------------------------

def _constant_chain(n=64, phase=None):
    rng = np.random.default_rng(1)
    s = np.arange(n + 1) / n
    d = rng.normal(size=(2, 4)) + 1j * rng.normal(size=(2, 4))
    e = np.linalg.inv(np.vstack([d, rng.normal(size=(2, 4))]))[:, :2].T
    f = np.ones(n + 1) if phase is None else np.exp(1j * phase(s))
    right = f[:, None, None] * d[None]
    left = f.conj()[:, None, None] * e[None]
    return SmoothBlockTrack(0, 0, s, np.full(n + 1, 0.3j), right, left, True, 1e-9, 1)


def test_ladder_pure_feeding():
    track = _constant_chain()
    T = 7.0
    p = ladder_integrate([track], T, [0.2, 0.5 - 0.1j])
    assert np.allclose(p[:, 1], 0.5 - 0.1j, atol=1e-13)
    assert np.allclose(p[:, 0], 0.2 + track.s * T * (0.5 - 0.1j), atol=1e-12)


def test_ladder_without_feeding_reduces_to_abelian_phase():
    phi = lambda s: 0.8 * np.sin(2 * np.pi * s)  # noqa: E731
    errs = []
    for n in (256, 512, 1024):
        track = _constant_chain(n, phi)
        p = ladder_integrate([track], 5.0, [1.0, 0.0])
        assert np.allclose(p[:, 1], 0)
        errs.append(np.max(np.abs(p[:, 0] - np.exp(-1j * phi(track.s)))))
    # fourth-order in the grid spacing
    assert errs[0] / errs[1] >= 12 and errs[1] / errs[2] >= 12
    assert errs[2] <= 1e-9


def test_ladder_matches_projected_exact_evolution():
    m = JordanChainModel()
    path = m.path(512)
    tracks = track_blocks(sample_family(path, m), cluster_tol=m.cluster_tol)
    chain = [t for t in tracks if t.chain_length == 2][0]
    T = 100.0
    p0 = np.array([0.3 + 0.1j, 0.02 - 0.01j])
    lad = ladder_integrate([chain], T, p0)
    ex = exact_evolve(m, path, T, chain.right[0].T @ p0, n_steps=4 * 512)
    dyn = np.exp(T * cumulative_trapezoid(chain.eigenvalues, chain.s, initial=0.0))
    proj = np.einsum("kid,kd->ki", chain.left, ex.states[::4]) / dyn[:, None]
    assert np.max(np.abs(proj - lad)) <= 1e-4


def test_ladder_stability_refusal():
    with pytest.raises(StabilityError):
        ladder_integrate([_constant_chain(16)], 1e4, [0.0, 1.0])
    with pytest.raises(ValueError):
        ladder_integrate([_constant_chain(16)], 1.0, [0.0, 1.0, 2.0])


def test_adiabatic_evolve_handles_chains():
    m = JordanChainModel()
    path = m.path(256)
    T = 20.0
    tracks = track_blocks(sample_family(path, m), cluster_tol=m.cluster_tol)
    rho0 = np.array([1.0, 0.5j, -0.2, 0.1])
    ad = adiabatic_evolve(m, path, T, rho0, tracks=tracks)
    ex = exact_evolve(m, path, T, rho0, n_steps=1024)
    # blocks are exactly decoupled in this family, so the approximation is exact
    assert np.linalg.norm(ad.final - ex.final) <= 1e-6


# --- crossover -----------------------------------------------------------------------

def test_static_model_has_zero_crossover():
    m = DEPH
    b0 = m.path(16).at(0.2)
    path = ParameterPath(lambda s: b0, 64)
    rep = max_ratio_curve(m, path, [5.0, 50.0])
    assert np.all(rep.crossover == 0)
    assert np.all(rep.max_ratio == 0)


def test_decoupled_static_blocks():
    path = circle_path(32)
    rep = max_ratio_curve(lambda r: np.diag([0.0, -1.0, 2j]), path, [1.0, 10.0],
                          rho0=np.ones(3))
    assert np.all(rep.crossover == 0)
    assert crossover_time(lambda r: np.diag([0.0, -1.0, 2j]), path, 3.0, 1,
                          rho0=np.ones(3)) == 0.0


def test_gap_collapse():
    path = circle_path(32)
    with pytest.raises(GapCollapseError):
        CrossoverSetup(lambda r: np.diag([0.0, 1e-11, -1.0]), path, rho0=np.ones(3),
                       cluster_tol=1e-12)


def test_chain_blocks_rejected():
    m = JordanChainModel()
    with pytest.raises(HoloqError):
        CrossoverSetup(m, m.path(64), rho0=np.ones(4), cluster_tol=m.cluster_tol)


def test_model_without_initial_state_needs_rho0():
    with pytest.raises(HoloqError):
        CrossoverSetup(lambda r: np.diag([0.0, -1.0]), circle_path(16))


def test_report_is_finite_and_nonnegative():
    rep = max_ratio_curve(DEPH, DEPH.path(256), np.linspace(5, 100, 7))
    assert rep.crossover.shape == (7, 4)
    assert np.all(np.isfinite(rep.crossover)) and np.all(rep.crossover >= 0)
    assert rep.metadata["channel"] == "dephasing"
    with pytest.raises(ValueError):
        max_ratio_curve(DEPH, DEPH.path(64), [])


def test_closed_system_crossover_stays_bounded():
    closed = DEPH.with_(channel="none", beta=0.0)
    rho0 = imbalanced_state(closed)
    setup = CrossoverSetup(closed, closed.path(512), rho0=rho0)
    tc = np.array([max(setup.crossover_time(T, a) for a in range(4))
                   for T in (10.0, 100.0, 1000.0, 5000.0)])
    assert np.max(tc) <= 2 * np.max(tc[:1]) + 1.0


def test_open_system_dominates_and_window_appears():
    rho0 = imbalanced_state(DEPH)
    grid = np.array([5.0, 20.0, 50.0, 100.0, 200.0, 400.0])
    open_curve = max_ratio_curve(DEPH, DEPH.path(512), grid, rho0=rho0).max_ratio
    closed = DEPH.with_(channel="none", beta=0.0)
    closed_curve = max_ratio_curve(closed, closed.path(512), grid, rho0=rho0).max_ratio
    assert np.all(open_curve[-3:] > closed_curve[-3:])
    # decreasing at first, growing again later: a finite adiabatic window
    k = int(np.argmin(open_curve))
    assert 0 < k < len(grid) - 1
    assert open_curve[-1] > open_curve[k]


def test_stronger_field_gives_smaller_ratio():
    grid = np.linspace(5, 100, 8)
    weak = max_ratio_curve(DEPH, DEPH.path(256), grid).max_ratio
    strong = max_ratio_curve(DEPH.with_(B=2.0), DEPH.with_(B=2.0).path(256), grid).max_ratio
    assert np.all(strong <= weak)


def test_crossover_invariant_under_partner_rescaling():
    tracks = list(spin_tracks("spontaneous-emission", 0.1, n=256))
    rho0 = DEPH.initial_state()
    model = DEPH.with_(channel="spontaneous-emission")
    base = CrossoverSetup(model, model.path(256), rho0=rho0, tracks=tracks)
    alpha = coherence_track_index(tracks)
    s = tracks[0].s
    scaled = []
    for t in tracks:
        if t.label == alpha:
            scaled.append(t)
            continue
        f = np.exp(0.3 * np.sin(2 * np.pi * s + t.label)) * np.exp(1j * np.cos(2 * np.pi * s))
        scaled.append(gauge_transform([t], f)[0])
    moved = CrossoverSetup(model, model.path(256), rho0=rho0, tracks=scaled)
    for T in (10.0, 60.0):
        a, b = base.crossover_time(T, alpha), moved.crossover_time(T, alpha)
        assert abs(a - b) <= 1e-8 * max(1.0, a)
