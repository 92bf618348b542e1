import numpy as np
import pytest
from sklearn.base import clone

from tendonfinger import (
    CycleDataset,
    ParseError,
    RankDeficientData,
    StiffnessEstimator,
    ValidationError,
    conditioning_report,
    fit_stiffness,
    synthesize_cycles,
)
from tendonfinger.stiffness import design_matrix, probe_directions

K2 = np.array([[0.445, 0.0543], [0.0543, 0.409]])
K3 = np.array([[0.569, 0.0553, 0.0323], [0.0553, 0.696, 0.0755], [0.0323, 0.0755, 0.809]])


@pytest.mark.parametrize("k", [K2, K3], ids=["2d", "3d"])
def test_noiseless_recovery_with_hysteresis(k):
    data = synthesize_cycles(k, hysteresis=0.1, noise_sigma=0.0)
    fit = fit_stiffness(data)
    np.testing.assert_allclose(fit.matrix, k, atol=1e-12)
    np.testing.assert_allclose(fit.hysteresis_offset, 0.1, atol=1e-12)
    assert fit.residual_rms < 1e-12
    assert fit.n_samples == len(data)


def test_offsets_cancel_without_hysteresis_term():
    # balanced strokes: ignoring the offset still recovers K exactly
    data = synthesize_cycles(K2, hysteresis=0.2)
    fit = fit_stiffness(data, fit_hysteresis=False)
    np.testing.assert_allclose(fit.matrix, K2, atol=1e-12)
    assert fit.residual_rms == pytest.approx(0.2, rel=1e-9)


def test_fit_is_symmetric_and_stderr_shrinks_with_data():
    small = fit_stiffness(synthesize_cycles(K2, 0.1, 0.02, n_cycles=1, seed=3))
    large = fit_stiffness(synthesize_cycles(K2, 0.1, 0.02, n_cycles=8, seed=3))
    assert np.array_equal(small.matrix, small.matrix.T)
    assert np.all(large.stderr < small.stderr)


def test_sample_order_and_unit_scaling_invariance():
    data = synthesize_cycles(K3, 0.1, 0.02, seed=7)
    base = StiffnessEstimator().fit(data.displacement, data.force, data.direction)
    perm = np.random.default_rng(0).permutation(len(data))
    shuffled = StiffnessEstimator().fit(data.displacement[perm], data.force[perm], data.direction[perm])
    np.testing.assert_allclose(shuffled.stiffness_, base.stiffness_, rtol=1e-10)
    # displacement in 10x units divides K by 10 and leaves offsets alone
    scaled = StiffnessEstimator().fit(10 * data.displacement, data.force, data.direction)
    np.testing.assert_allclose(scaled.stiffness_, base.stiffness_ / 10, rtol=1e-10)
    np.testing.assert_allclose(scaled.hysteresis_offset_, base.hysteresis_offset_, rtol=1e-10)


def test_estimator_follows_sklearn_conventions():
    est = StiffnessEstimator(rank_tol=1e-8)
    assert clone(est).get_params() == {"fit_hysteresis": True, "rank_tol": 1e-8}
    data = synthesize_cycles(K2, 0.0, 0.01, seed=1)
    est.fit(data.displacement, data.force)
    assert est.n_features_in_ == 2
    assert est.predict(data.displacement).shape == data.force.shape
    assert est.score(data.displacement, data.force) > 0.99
    with pytest.raises(ValidationError):
        est.predict(np.zeros((3, 3)))


def test_unfitted_predict_raises():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        StiffnessEstimator().predict(np.zeros((2, 2)))


def test_rank_deficient_displacements_name_the_missing_direction():
    t = np.linspace(-2, 2, 40)
    dx = np.column_stack([t, np.zeros_like(t)])
    with pytest.raises(RankDeficientData) as exc:
        StiffnessEstimator().fit(dx, dx @ K2)
    np.testing.assert_allclose(np.abs(exc.value.null_direction), [0.0, 1.0], atol=1e-12)


def test_offsets_need_stroke_flags():
    data = synthesize_cycles(K2)
    with pytest.raises(RankDeficientData):
        StiffnessEstimator().fit(data.displacement, data.force, np.zeros(len(data)))


def test_too_few_samples():
    dx = np.eye(2)
    with pytest.raises(ValidationError):
        StiffnessEstimator().fit(dx, dx @ K2, [1, -1])


def test_design_matrix_layout():
    a = design_matrix([[1.0, 2.0]], [1.0])
    # columns: k_xx, k_xy, k_yy, h_x, h_y; rows: f_x, f_y
    np.testing.assert_array_equal(a, [[1, 2, 0, 1, 0], [0, 1, 2, 0, 1]])
    with pytest.raises(ValidationError):
        design_matrix([[1.0, 2.0]], [0.5])


def test_probe_directions_cover_axes_and_diagonals():
    dirs = probe_directions(3)
    assert len(dirs) == 9
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0)


def test_synthesis_is_deterministic_and_bounded():
    a = synthesize_cycles(K2, 0.1, 0.05, seed=11)
    b = synthesize_cycles(K2, 0.1, 0.05, seed=11)
    c = synthesize_cycles(K2, 0.1, 0.05, seed=12)
    assert np.array_equal(a.force, b.force)
    assert not np.array_equal(a.force, c.force)
    assert np.max(np.linalg.norm(a.displacement, axis=1)) < 2.0
    assert set(np.unique(a.direction)) == {-1.0, 1.0}
    with pytest.raises(ValidationError):
        synthesize_cycles(np.array([[1.0, 0.2], [0.1, 1.0]]))
    with pytest.raises(ValidationError):
        synthesize_cycles(K2, amplitude=0.0)


def test_csv_round_trip():
    data = synthesize_cycles(K3, 0.1, 0.02, seed=2)
    text = data.to_csv()
    assert text.splitlines()[0] == "dx_mm,dy_mm,dz_mm,fx_N,fy_N,fz_N,cycle,direction"
    back = CycleDataset.from_csv(text)
    assert np.array_equal(back.displacement, data.displacement)
    assert np.array_equal(back.force, data.force)
    assert np.array_equal(back.direction, data.direction)
    np.testing.assert_array_equal(fit_stiffness(back).matrix, fit_stiffness(data).matrix)


@pytest.mark.parametrize("text", [
    "",
    "a,b,c\n",
    "dx_mm,dy_mm,fx_N,fy_N,cycle,stroke\n",
    "dx_mm,dy_mm,fx_N,fy_N,cycle,direction\n1,2,3\n",
    "dx_mm,dy_mm,fx_N,fy_N,cycle,direction\n1,x,3,4,0,forward\n",
    "dx_mm,dy_mm,fx_N,fy_N,cycle,direction\n1,0,3,4,0,sideways\n",
    "dx_mm,dy_mm,fx_N,fy_N,cycle,direction\n",
])
def test_csv_parse_errors(text):
    with pytest.raises(ParseError):
        CycleDataset.from_csv(text)


def test_dataset_invariants():
    dx = np.array([[0.5, 0.0], [-0.5, 0.0]])
    ok = CycleDataset(dx, dx, [0, 0], [1, -1])
    assert len(ok) == 2 and ok.dimension == 2
    with pytest.raises(ValidationError):
        CycleDataset(dx, dx, [0, 0], [1, 1])  # one stroke only
    with pytest.raises(ValidationError):
        CycleDataset(dx * 10, dx, [0, 0], [1, -1])  # beyond the 3 mm bound
    with pytest.raises(ValidationError):
        CycleDataset(np.ones((2, 4)), np.ones((2, 4)), [0, 0], [1, -1])
    with pytest.raises(ValidationError):
        CycleDataset(dx, dx[:1], [0, 0], [1, -1])


def test_conditioning_report():
    rep = conditioning_report(K3)
    assert np.all(np.diff(rep.eigenvalues) > 0)
    np.testing.assert_allclose(rep.principal_axes.T @ rep.principal_axes, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(K3 @ rep.principal_axes, rep.principal_axes * rep.eigenvalues, atol=1e-12)
    assert rep.well_conditioned
    assert not conditioning_report(np.diag([1.0, 4.0])).well_conditioned
    assert conditioning_report(np.diag([1.0, 4.0]), threshold=5.0).well_conditioned
    assert conditioning_report(np.diag([0.0, 1.0])).condition_number == float("inf")
    with pytest.raises(ValidationError):
        conditioning_report(np.array([[1.0, 0.5], [0.0, 1.0]]))
    d = rep.to_dict()
    assert d["units"] == "N/mm" and len(d["principal_axes"]) == 3
