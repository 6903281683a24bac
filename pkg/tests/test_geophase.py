import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from helpers import (
    circ,
    coherence_track,
    degenerate_cluster,
    multiset_distance,
    smooth_loop_function,
    spin_tracks,
)
from holoq.errors import (
    DegeneracyError,
    NotDegenerateError,
    ResolutionError,
    SingularGaugeError,
)
from holoq.geophase import (
    abelian_phase,
    circular_distance,
    closed_limit_phase,
    connection_matrix,
    gauge_transform,
    wilson_loop,
    wrap,
)
from holoq.models import DegenerateModel, SpinHalfModel, coherence_track_index
from holoq.path import ParameterPath, SmoothBlockTrack, sample_family, track_blocks

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_wrap_representative():
    assert wrap(np.pi) == -np.pi
    assert wrap(-np.pi) == -np.pi
    assert np.isclose(wrap(3 * np.pi / 2), -np.pi / 2)
    assert wrap(np.pi - 1e-7) == -np.pi
    assert wrap(-np.pi + 1e-7) == -np.pi
    assert np.isclose(wrap(np.pi - 1e-3), np.pi - 1e-3)
    assert np.isclose(circular_distance(np.pi - 1e-9, -np.pi), 1e-9)


def test_closed_spin_block_phase_is_minus_pi():
    ph = abelian_phase(coherence_track())
    assert circ(ph.real, -np.pi) <= 1e-9
    assert abs(ph.imag) <= 1e-10
    assert ph.extrapolated and ph.n_grid == 1024


def test_wilson_matches_abelian_for_single_block():
    track = coherence_track()
    w = wilson_loop([track])
    assert w.G == 1
    assert abs(w.eigenvalues[0] - np.exp(1j * abelian_phase(track).gamma)) <= 1e-8


def test_constant_path_has_zero_phase():
    m = SpinHalfModel(channel="dephasing", beta=0.1)
    b0 = m.path(16).at(0.1)
    p = ParameterPath(lambda s: b0, 64)
    tracks = track_blocks(sample_family(p, m))
    for t in tracks:
        if t.multiplicity == 1:
            assert abs(abelian_phase(t).gamma) <= 1e-14


def test_dephasing_leaves_phase_unchanged():
    ref = abelian_phase(coherence_track()).gamma
    got = abelian_phase(coherence_track("dephasing", 0.1)).gamma
    assert circ(got.real, ref.real) <= 1e-6
    assert abs(got.imag - ref.imag) <= 1e-6


@settings(max_examples=8)
@given(st.floats(min_value=0.2, max_value=np.pi - 0.2))
def test_theta_sweep_matches_cosine_law(theta):
    tracks = spin_tracks(theta=theta, n=256)
    up = abelian_phase(tracks[coherence_track_index(tracks, True)]).real
    down = abelian_phase(tracks[coherence_track_index(tracks, False)]).real
    assert circ(up, 2 * np.pi * np.cos(theta)) <= 1e-6
    assert circ(down, -2 * np.pi * np.cos(theta)) <= 1e-6


def test_symmetric_scheme_is_second_order_before_extrapolation():
    exact = -np.pi
    errs = [abs(wrap(abelian_phase(coherence_track(n=n), extrapolate=False).real - exact))
            for n in (128, 256, 512, 1024)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.5) & (ratios < 4.5))


def test_extrapolated_convergence():
    ns = (128, 256, 512, 1024, 2048)
    g = [abelian_phase(coherence_track("dephasing", 0.1, n=n)).gamma for n in ns]
    diffs = [abs(b - a) for a, b in zip(g, g[1:])]
    for n, d in zip(ns, diffs):
        assert d <= 0.01 / n ** 2
    # the extrapolated scheme converges faster than second order
    for a, b in zip(diffs[:2], diffs[1:3]):
        assert b <= a / 8


def test_forward_scheme_converges():
    ph = abelian_phase(coherence_track(), scheme="forward")
    assert circ(ph.real, -np.pi) <= 1e-3
    with pytest.raises(ValueError):
        abelian_phase(coherence_track(), scheme="backward")


def test_path_reversal_negates_phase():
    m = SpinHalfModel()
    fwd = abelian_phase(coherence_track(n=512)).real
    rev_tracks = track_blocks(sample_family(m.path(512).reversed(), m))
    rev = abelian_phase(rev_tracks[coherence_track_index(rev_tracks)]).real
    assert circ(rev, -fwd) <= 1e-8


def test_reparametrization_independence():
    m = SpinHalfModel(channel="dephasing", beta=0.1)
    path = m.path(1024).reparametrized(lambda s: s * s)
    tracks = track_blocks(sample_family(path, m))
    got = abelian_phase(tracks[coherence_track_index(tracks)]).gamma
    ref = abelian_phase(coherence_track("dephasing", 0.1)).gamma
    assert circ(got.real, ref.real) <= 1e-6
    assert abs(got.imag - ref.imag) <= 1e-6


def test_degenerate_block_rejected():
    cluster = degenerate_cluster(2)
    with pytest.raises(DegeneracyError):
        abelian_phase(cluster[0])


def test_coarse_gauge_raises_resolution_error():
    track = coherence_track(n=32)
    s = track.s
    wild = np.exp(2.5 * np.sin(2 * np.pi * s)) * np.exp(4j * np.cos(2 * np.pi * s))
    with pytest.raises(ResolutionError):
        abelian_phase(gauge_transform([track], wild)[0])


# --- connection and Wilson loop ---------------------------------------------------

def test_connection_reduces_to_abelian_integrand():
    track = coherence_track(n=1024)
    ds = 1 / 1024
    for k in (0, 100, 517):
        a = connection_matrix([track], k)[0, 0]
        f = track.left[k, 0] @ track.right[k + 1, 0]
        assert abs(a * ds - np.log(f)) <= 50 * ds ** 2


def test_constant_tracks_have_zero_connection_and_identity_wilson():
    rng = np.random.default_rng(0)
    d = rng.normal(size=(2, 4)) + 1j * rng.normal(size=(2, 4))
    full = np.vstack([d, rng.normal(size=(2, 4))])
    e = np.linalg.inv(full)[:, :2].T
    s = np.arange(65) / 64
    tracks = [SmoothBlockTrack(j, 0, s, np.full(65, 0.5j), np.tile(d[j], (65, 1, 1)),
                               np.tile(e[j], (65, 1, 1)), True, 1e-9, 2) for j in range(2)]
    assert np.allclose(connection_matrix(tracks, 10), 0)
    assert np.allclose(wilson_loop(tracks).wilson, np.eye(2), atol=1e-14)


@pytest.mark.parametrize("G", [2, 3])
def test_connection_matches_closed_system_oracle(G):
    m = DegenerateModel(G)
    n = 16384
    tracks = m.tracks(n)
    for k in (0, 3000, 9001):
        got = connection_matrix(tracks, k, central=True)
        assert np.max(np.abs(got - m.connection(k / n))) <= 1e-6


def test_connection_requires_common_eigenvalue():
    tracks = spin_tracks("dephasing", 0.1, n=64)
    with pytest.raises(NotDegenerateError):
        connection_matrix([tracks[0], tracks[-1]], 3)


@pytest.mark.parametrize("G", [2, 3])
def test_wilson_loop_matches_ode_oracle(G):
    m = DegenerateModel(G)
    w = wilson_loop(degenerate_cluster(G))
    oracle = np.linalg.eigvals(m.wilson_oracle(4000))
    got = w.eigenvalues
    assert multiset_distance(got, oracle) <= 1e-6
    # the analytic-gauge tracks give the oracle matrix itself
    direct = wilson_loop(m.tracks(512)).wilson
    assert np.max(np.abs(direct - m.wilson_oracle(4000))) <= 1e-6


def _random_gauge(rng, g, n_grid):
    fns = [[smooth_loop_function(rng) for _ in range(g)] for _ in range(g)]
    gns = [[smooth_loop_function(rng) for _ in range(g)] for _ in range(g)]
    s = np.arange(n_grid + 1) / n_grid
    om = np.array([[[0.4 * fns[i][j](x) + 1j * 0.4 * gns[i][j](x) for j in range(g)]
                    for i in range(g)] for x in s])
    om = np.array([expm(o) for o in om])  # invertible everywhere
    om[-1] = om[0]
    return om


@settings(max_examples=15)
@given(seeds)
def test_wilson_eigenvalues_gauge_invariant(seed):
    rng = np.random.default_rng(seed)
    cluster = degenerate_cluster(2)
    om = _random_gauge(rng, 2, cluster[0].n_grid)
    u = wilson_loop(cluster).wilson
    moved = wilson_loop(gauge_transform(cluster, om)).wilson
    assert multiset_distance(np.linalg.eigvals(moved), np.linalg.eigvals(u)) <= 1e-6
    o0 = om[0]
    expect = np.linalg.inv(o0.T) @ u @ o0.T
    assert np.max(np.abs(moved - expect)) <= 1e-8


@settings(max_examples=15)
@given(seeds)
def test_scalar_gauge_leaves_phase_unchanged(seed):
    rng = np.random.default_rng(seed)
    track = coherence_track("dephasing", 0.1, n=256)
    chi, nu = smooth_loop_function(rng), smooth_loop_function(rng)
    om = np.array([np.exp(chi(x)) * np.exp(1j * nu(x)) for x in track.s])
    om[-1] = om[0]
    moved = gauge_transform([track], om)[0]
    assert np.max(np.abs(np.einsum("kd,kd->k", moved.left[:, 0], moved.right[:, 0]) - 1)) <= 1e-10
    a, b = abelian_phase(track).gamma, abelian_phase(moved).gamma
    assert abs(a.real - b.real) <= 1e-8 and abs(a.imag - b.imag) <= 1e-8


def test_identity_gauge_is_noop():
    cluster = degenerate_cluster(2)
    same = gauge_transform(cluster, lambda s: np.eye(2))
    for a, b in zip(cluster, same):
        assert np.allclose(a.right, b.right) and np.allclose(a.left, b.left)


def test_singular_gauge_rejected():
    cluster = degenerate_cluster(2)
    with pytest.raises(SingularGaugeError):
        gauge_transform(cluster, lambda s: np.array([[1, 1], [1, 1.0]]))
    with pytest.raises(ValueError):
        gauge_transform(cluster, lambda s: np.diag([1.0 + s, 1.0]))


# --- closed-system reference -----------------------------------------------------

def test_equator_berry_phases():
    m = SpinHalfModel(theta=np.pi / 2)
    res = closed_limit_phase(m.hamiltonian, m.path(512))
    assert circ(res.phases[1], np.pi) <= 1e-8
    assert circ(res.phases[0], -np.pi) <= 1e-8


def test_closed_difference_matches_open_block():
    m = SpinHalfModel()
    res = closed_limit_phase(m.hamiltonian, m.path(1024))
    diff = res.difference(0, 1)
    assert circ(diff, -np.pi) <= 1e-6
    assert circ(abelian_phase(coherence_track()).real, diff) <= 1e-6
    assert np.allclose(res.differences, -res.differences.T)


def test_closed_limit_rejects_degenerate_hamiltonian():
    p = ParameterPath(lambda s: np.array([np.cos(2 * np.pi * s), np.sin(2 * np.pi * s)]), 32)
    with pytest.raises(DegeneracyError):
        closed_limit_phase(lambda r: np.eye(2) * r[0], p)
