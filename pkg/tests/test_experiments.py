import numpy as np
import pytest

from dipspin import analysis
from dipspin.dynamics import Mode
from dipspin.experiments import (
    InitialState,
    prepare_initial,
    random_unit_vectors,
    run_echo,
    run_fid,
    run_pake,
    run_scaling,
)
from dipspin.geometry import MAGIC_ANGLE, build_cubic_lattice, build_line


@pytest.mark.parametrize(
    "kwargs",
    [dict(polarization=1.2), dict(polarization=-0.1), dict(axis=(1, 1, 0)), dict(placement="middle")],
)
def test_initial_state_validation(kwargs):
    with pytest.raises(ValueError):
        InitialState(**kwargs)


def test_random_unit_vectors_are_unit_and_isotropic():
    v = random_unit_vectors(20000, np.random.default_rng(0))
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-14)
    # uniform on the sphere: each component has mean 0 and variance 1/3
    assert np.all(np.abs(v.mean(axis=0)) < 4 * np.sqrt(1 / 3 / 20000))
    np.testing.assert_allclose(v.var(axis=0), 1 / 3, rtol=0.03)


def test_full_polarization():
    sys = prepare_initial(build_cubic_lattice(3, 3, 3), InitialState(1.0))
    np.testing.assert_array_equal(sys.moments, np.tile([1.0, 0, 0], (27, 1)))


@pytest.mark.parametrize("placement", ["scattered", "lowest"])
def test_aligned_count_and_norms(placement):
    sys = prepare_initial(build_cubic_lattice(10, 10, 10), InitialState(0.7, seed=3, placement=placement))
    aligned = np.all(sys.moments == [1.0, 0, 0], axis=1)
    assert aligned.sum() == 700
    np.testing.assert_allclose(np.linalg.norm(sys.moments, axis=1), 1.0, atol=1e-14)
    if placement == "lowest":
        assert aligned[:700].all()
    else:
        assert not aligned[:700].all()


def test_polarization_098_statistics():
    # mean of 20 uniform-sphere x-components adds std sqrt(1/3)*sqrt(20)/1000 to 0.98
    sys0 = build_cubic_lattice(10, 10, 10)
    ex0 = np.array([prepare_initial(sys0, InitialState(0.98, seed=s)).moments[:, 0].mean() for s in range(200)])
    assert np.all(np.abs(ex0 - 0.98) < 0.013)
    expected_std = np.sqrt(1 / 3) * np.sqrt(20) / 1000
    assert abs(ex0.std() / expected_std - 1) < 0.2
    assert abs(ex0.mean() - 0.98) < 4 * expected_std / np.sqrt(200)


def test_zero_polarization_is_isotropic():
    sys = prepare_initial(build_cubic_lattice(20, 20, 20), InitialState(0.0, seed=1))
    assert abs(sys.moments[:, 0].mean()) < 4 * np.sqrt(1 / 3 / 8000)


def test_preparation_is_deterministic():
    base = build_cubic_lattice(4, 4, 4)
    a = prepare_initial(base, InitialState(0.5, seed=9)).moments
    b = prepare_initial(base, InitialState(0.5, seed=9)).moments
    c = prepare_initial(base, InitialState(0.5, seed=10)).moments
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_custom_axis():
    sys = prepare_initial(build_line(5), InitialState(1.0, axis=(0.0, 1.0, 0.0)))
    np.testing.assert_array_equal(sys.moments[:, 1], 1.0)


def test_single_spin_fid_never_decays():
    traj = run_fid(dims=(1, 1, 1), periodic=True, init=InitialState(1.0), t_end=3.0)
    np.testing.assert_allclose(np.abs(traj.ex), 1.0, atol=1e-15)


def test_fid_is_bit_reproducible():
    a = run_fid(dims=(3, 3, 3), t_end=0.5, init=InitialState(0.7, seed=4))
    b = run_fid(dims=(3, 3, 3), t_end=0.5, init=InitialState(0.7, seed=4))
    np.testing.assert_array_equal(a.mean_moment, b.mean_moment)
    np.testing.assert_array_equal(a.energy, b.energy)


def test_fid_lab_frame_option():
    traj = run_fid(dims=(2, 2, 2), t_end=0.2, mode="lab-full", p_d=0.05)
    assert traj.mode is Mode.LAB_FULL
    # Larmor precession dominates: e^x changes sign within a fraction of t~ = 2 pi p_d
    assert traj.ex.min() < 0 < traj.ex.max()


def test_two_spin_echo_recurs_exactly():
    traj = run_echo(dims=(1, 1, 2), periodic=False, init=InitialState(0.5, seed=2), tau=5.0, k=1.0, t_end=10.0)
    assert traj.mode is Mode.ROTATING_SECULAR
    start = traj.mean_moment[0]
    np.testing.assert_allclose(traj.mean_moment[-1], start, atol=1e-9)


def test_echo_default_length_covers_the_echo():
    traj = run_echo(dims=(2, 2, 2), tau=1.0, k=0.5)
    assert traj.times[-1] == pytest.approx(1.0 + 2.0 + 1.0)
    assert 3.0 in traj.times


def test_pake_magic_pair_has_single_line():
    traj = run_pake(theta=MAGIC_ANGLE, p_d=0.01, t_end=15.0, sample_every=40)
    spec = analysis.spectrum(traj, window="hann", zero_pad=8)
    assert analysis.peak_split(spec) is None


def test_pake_rejects_short_line():
    with pytest.raises(ValueError):
        run_pake(n_spins=1)


def test_scaling_counts_and_threads():
    counts = (2, 5, 9)
    serial = run_scaling(counts, t_end=0.5)
    threaded = run_scaling(counts, t_end=0.5, workers=3)
    assert [t.final_moments.shape[0] for t in serial] == list(counts)
    for a, b in zip(serial, threaded):
        np.testing.assert_array_equal(a.mean_moment, b.mean_moment)
    with pytest.raises(ValueError):
        run_scaling((1, 5))


def test_two_spin_line_does_not_decay():
    (traj,) = run_scaling((2,), t_end=20.0)
    assert analysis.half_life(traj) is None
