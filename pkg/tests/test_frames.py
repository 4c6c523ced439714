from __future__ import annotations

import numpy as np
import pytest

from src.core.errors import ContractViolation
from src.frames.builders import (
    FrameNet,
    FrameProvenance,
    FrameSet,
    build_constant_frames,
    build_learned_frames,
    build_pca_frames,
    build_random_frames,
    frame_vectors,
    learned_frame_vectors,
    learned_frames,
)
from src.frames.envelope import envelope
from src.frames.gram_schmidt import complete_frame, gram_schmidt_pair, orthonormal_pairs, seeded_directions
from src.frames.metrics import frame_stability_metrics
from src.frames.refinement import FrameRefiner, refine_frames, rotations_from_outputs
from src.geometry.graph import radius_graph
from src.geometry.point_cloud import PointCloud
from src.netcore import tape as T
from src.netcore.gradcheck import gradient_check
from src.reps.representation import FeatureBlock, random_orthogonal
from src.reps.spec import parse_rep_spec
from tests.conftest import build_cloud

pytestmark = pytest.mark.unit

FRAME_RADIUS = 0.8
CLOUD_SEEDS = range(100, 120)


def invariant_scalars(cloud: PointCloud) -> np.ndarray:
    return cloud.features["f"].values[:, :2]


def test_envelope_values():
    assert envelope(0.0, 1.0) == 1.0
    assert envelope(1.0, 1.0) == 0.0
    assert envelope(3.0, 1.0) == 0.0
    assert envelope(1.0, 2.0, 5) == 99 / 128
    np.testing.assert_array_equal(envelope(np.array([0.0, 1.0, 2.0]), 2.0), [1.0, 99 / 128, 0.0])


def test_envelope_is_smooth_at_cutoff():
    h = 1e-6
    for r_c in (0.5, 1.0, 2.0):
        assert abs(envelope(r_c - h, r_c)) < 1e-4
        assert abs((envelope(r_c, r_c) - envelope(r_c - h, r_c)) / h) < 1e-4


def test_envelope_contract():
    with pytest.raises(ContractViolation):
        envelope(0.5, 0.0)
    with pytest.raises(ContractViolation):
        envelope(0.5, 1.0, p=0)


@pytest.mark.parametrize(
    "v1, v2, n1, n2",
    [
        ((2.0, 0.0, 0.0), (1.0, 1.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)),
        ((0.0, 3.0, 4.0), (0.0, 0.0, 1.0), (0.0, 0.6, 0.8), (0.0, -0.8, 0.6)),
    ],
)
def test_gram_schmidt_examples(rng, v1, v2, n1, n2):
    a, b = gram_schmidt_pair(v1, v2, rng)
    np.testing.assert_allclose(a, n1, atol=1e-12)
    np.testing.assert_allclose(b, n2, atol=1e-12)


def test_parallel_vectors_get_a_seeded_direction():
    a, b = gram_schmidt_pair([1.0, 1.0, 0.0], [2.0, 2.0, 0.0], np.random.default_rng(5))
    a2, b2 = gram_schmidt_pair([1.0, 1.0, 0.0], [2.0, 2.0, 0.0], np.random.default_rng(5))
    assert abs(a @ b) < 1e-12
    assert abs(np.linalg.norm(b) - 1.0) < 1e-12
    np.testing.assert_array_equal(b, b2)
    np.testing.assert_array_equal(a, a2)


def test_degenerate_rows_stay_orthonormal():
    v1 = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [1.0, 0.0, 0.0]])
    v2 = np.array([[1.0, 0.0, 0.0], [2.0, 4.0, 6.0], [0.0, 1e-12, 0.0]])
    n1, n2 = orthonormal_pairs(v1, v2, seeded_directions(3))
    np.testing.assert_allclose(np.linalg.norm(n1.data, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(n2.data, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.sum(n1.data * n2.data, axis=1), 0.0, atol=1e-12)
    again, _ = orthonormal_pairs(v1, v2, seeded_directions(3))
    np.testing.assert_array_equal(n1.data, again.data)


def test_parallel_rows_at_large_scale():
    v1 = np.array([[1e12, 0.0, 0.0], [3.0, 0.0, 0.0]])
    v2 = np.array([[2e12, 0.0, 0.0], [6.0, 1e-9, 0.0]])
    n1, n2 = orthonormal_pairs(v1, v2, seeded_directions(11))
    np.testing.assert_allclose(n1.data, [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]], atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(n2.data, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.sum(n1.data * n2.data, axis=1), 0.0, atol=1e-12)


def test_complete_frame_handedness():
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    right = complete_frame(e1, e2, [0.0, 0.0, 2.0])
    np.testing.assert_array_equal(right, np.eye(3))
    left = complete_frame(e1, e2, [0.0, 0.0, -2.0])
    np.testing.assert_array_equal(left[2], [0.0, 0.0, -1.0])
    assert np.linalg.det(left) == pytest.approx(-1.0)
    np.testing.assert_array_equal(complete_frame(e1, e2, [1.0, 1.0, 0.0]), np.eye(3))
    with pytest.raises(ContractViolation):
        complete_frame(e1, [1.0, 1.0, 0.0], [0.0, 0.0, 1.0])


def constant_frame_net(rng, weights=(1.0, 0.0), radius=2.0) -> FrameNet:
    phi = FrameNet(0, radius, rng, hidden=(4,), radial_k=4)
    phi.mlp.layers[-1].weight.data[:] = 0.0
    phi.mlp.layers[-1].bias.data = np.array(weights)
    return phi


def test_single_neighbour_frame_vectors(rng):
    graph = radius_graph(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), 2.0)
    v1, v2 = learned_frame_vectors(graph, 0, constant_frame_net(rng), np.zeros((2, 0)))
    np.testing.assert_array_equal(v1, [-99 / 128, 0.0, 0.0])
    np.testing.assert_array_equal(v2, np.zeros(3))


def test_symmetric_pair_cancels(rng):
    graph = radius_graph(np.array([[0.0, 0.0, 0.0], [0.4, 0.3, 0.0], [-0.4, -0.3, 0.0]]), 0.9)
    phi = FrameNet(0, 0.9, rng, hidden=(4,), radial_k=4)
    v1, v2 = learned_frame_vectors(graph, 0, phi, np.zeros((3, 0)))
    np.testing.assert_allclose(v1, 0.0, atol=1e-15)
    np.testing.assert_allclose(v2, 0.0, atol=1e-15)


def test_frame_vectors_are_equivariant(rng, cloud, transforms):
    phi = FrameNet(2, FRAME_RADIUS, rng, hidden=(8,), radial_k=4)
    scalars = invariant_scalars(cloud)
    v1, v2 = frame_vectors(radius_graph(cloud, FRAME_RADIUS), phi, scalars)
    for Q, t in transforms:
        moved = cloud.transformed(Q, t)
        w1, w2 = frame_vectors(radius_graph(moved, FRAME_RADIUS), phi, scalars)
        np.testing.assert_allclose(w1.data, v1.data @ Q.T, atol=1e-10)
        np.testing.assert_allclose(w2.data, v2.data @ Q.T, atol=1e-10)


@pytest.mark.parametrize("cloud_seed", CLOUD_SEEDS)
def test_learned_frames_follow_the_cloud(rng, transforms, cloud_seed):
    cloud = build_cloud(np.random.default_rng(cloud_seed))
    phi = FrameNet(2, FRAME_RADIUS, rng, hidden=(8,), radial_k=4)
    scalars = invariant_scalars(cloud)
    base = build_learned_frames(cloud, radius_graph(cloud, FRAME_RADIUS), phi, scalars, seed=0)
    assert base.provenance is FrameProvenance.LEARNED
    np.testing.assert_allclose(np.abs(base.determinants()), 1.0, atol=1e-10)
    for Q, t in transforms:
        moved = cloud.transformed(Q, t)
        frames = build_learned_frames(moved, radius_graph(moved, FRAME_RADIUS), phi, scalars, seed=0)
        np.testing.assert_allclose(frames.frames, base.frames @ Q.T, atol=1e-10)
        np.testing.assert_allclose(frames.determinants(), base.determinants() * np.linalg.det(Q), atol=1e-10)


def test_local_coordinates_are_invariant(rng, cloud, transforms):
    phi = FrameNet(2, FRAME_RADIUS, rng, hidden=(8,), radial_k=4)
    block = cloud.features["f"]
    base = build_learned_frames(cloud, radius_graph(cloud, FRAME_RADIUS), phi, invariant_scalars(cloud))
    local = T.raw(T.einsum("nab,nb->na", base.frames, block.values[:, 3:6]))
    for Q, t in transforms:
        moved = cloud.transformed(Q, t)
        frames = build_learned_frames(moved, radius_graph(moved, FRAME_RADIUS), phi, invariant_scalars(moved))
        moved_local = T.raw(T.einsum("nab,nb->na", frames.frames, moved.features["f"].values[:, 3:6]))
        np.testing.assert_allclose(moved_local, local, atol=1e-10)


def test_learned_frames_need_three_dimensions(rng):
    graph = radius_graph(rng.uniform(size=(5, 2)), 1.0)
    with pytest.raises(ContractViolation):
        learned_frames(graph, FrameNet(0, 1.0, rng, hidden=(4,), radial_k=4), np.zeros((5, 0)), seed=0)


def test_frame_net_gradients(rng, cloud):
    phi = FrameNet(2, FRAME_RADIUS, rng, hidden=(6,), radial_k=4)
    graph = radius_graph(cloud, FRAME_RADIUS)
    scalars = invariant_scalars(cloud)
    projection = rng.standard_normal((cloud.num_nodes, 3, 3))

    result = gradient_check(
        lambda: T.vsum(learned_frames(graph, phi, scalars, seed=0) * projection),
        phi.parameters(),
        names=[name for name, _ in phi.named_parameters()],
        max_entries=6,
    )
    assert result.passed(1e-6), result


def test_pca_frames_coplanar_neighbourhood(rng):
    plane = np.column_stack([rng.uniform(-0.3, 0.3, size=(12, 2)), np.zeros(12)])
    cloud = PointCloud(positions=plane)
    frames = build_pca_frames(cloud, radius_graph(cloud, 2.0))
    np.testing.assert_allclose(np.abs(frames.frames[:, 2, 2]), 1.0, atol=1e-12)


@pytest.mark.parametrize("cloud_seed", CLOUD_SEEDS)
def test_pca_frames_follow_the_cloud(transforms, cloud_seed):
    cloud = build_cloud(np.random.default_rng(cloud_seed), rep=None)
    base = build_pca_frames(cloud, radius_graph(cloud, 0.9))
    for Q, t in transforms:
        moved = cloud.transformed(Q, t)
        frames = build_pca_frames(moved, radius_graph(moved, 0.9))
        np.testing.assert_allclose(frames.frames, base.frames @ Q.T, atol=1e-8)


def test_pca_frames_isotropic_neighbourhood():
    simplex = np.array([[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]])
    cloud = PointCloud(positions=np.vstack([np.zeros(3), simplex]))
    frames = build_pca_frames(cloud, radius_graph(cloud, 2.0))
    assert frames.num_nodes == 5
    np.testing.assert_allclose(frames.frames[0] @ frames.frames[0].T, np.eye(3), atol=1e-10)


def test_random_and_constant_frames(rng):
    first = build_random_frames(6, np.random.default_rng(4))
    np.testing.assert_array_equal(first.frames, build_random_frames(6, np.random.default_rng(4)).frames)
    assert np.all(build_random_frames(6, rng, "SO(d)").determinants() > 0)

    identity = build_constant_frames(5, np.eye(3))
    assert identity.provenance is FrameProvenance.IDENTITY
    np.testing.assert_array_equal(identity.frames, np.broadcast_to(np.eye(3), (5, 3, 3)))

    R = random_orthogonal(rng)
    constant = build_constant_frames(5, R)
    assert constant.provenance is FrameProvenance.CONSTANT
    relative = np.einsum("iab,jcb->ijac", constant.frames, constant.frames)
    np.testing.assert_allclose(relative, np.broadcast_to(np.eye(3), (5, 5, 3, 3)), atol=1e-12)


def test_frame_set_rejects_non_orthogonal():
    with pytest.raises(ContractViolation):
        FrameSet(frames=np.full((1, 3, 3), 0.5), provenance=FrameProvenance.RANDOM)
    assert len(build_constant_frames(2, np.eye(3)).to_json()[0]) == 9


def test_identity_refinement(rng):
    spec = parse_rep_spec("1x0n+1x1n+1x1p")
    refiner = FrameRefiner(spec.width, rng, hidden=(4,))
    refiner.mlp.layers[-1].weight.data[:] = 0.0
    frames = build_random_frames(4, rng)
    features = FeatureBlock(rng.standard_normal((4, spec.width)), spec)
    refined, moved = refine_frames(frames, features, refiner)
    np.testing.assert_array_equal(refined.frames, frames.frames)
    np.testing.assert_array_equal(moved.values, features.values)


def test_refinement_is_a_proper_rotation(rng):
    U = rotations_from_outputs(rng.standard_normal((50, 6)))
    np.testing.assert_allclose(np.linalg.det(U.data), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.einsum("nab,ncb->nac", U.data, U.data), np.broadcast_to(np.eye(3), (50, 3, 3)), atol=1e-12)

    spec = parse_rep_spec("2x0n+1x1n")
    frames = build_random_frames(8, rng)
    features = FeatureBlock(rng.standard_normal((8, spec.width)), spec)
    refined, moved = refine_frames(frames, features, FrameRefiner(spec.width, rng, hidden=(4,)))
    np.testing.assert_allclose(refined.determinants(), frames.determinants(), atol=1e-12)
    np.testing.assert_array_equal(moved.values[:, :2], features.values[:, :2])
    with pytest.raises(ContractViolation):
        rotations_from_outputs(rng.standard_normal((3, 5)))


def test_stability_metrics(rng):
    frames = build_random_frames(5, rng)
    same = frame_stability_metrics(frames, frames)
    assert same.frobenius == pytest.approx(0.0)
    np.testing.assert_allclose(same.axis_cosines, (1.0, 1.0, 1.0))

    negated = FrameSet(frames=-frames.frames, provenance=frames.provenance)
    flipped = frame_stability_metrics(frames, negated)
    assert flipped.frobenius == pytest.approx(2 * np.sqrt(3))
    np.testing.assert_allclose(flipped.axis_cosines, (-1.0, -1.0, -1.0))

    half_turn = FrameSet(frames=np.diag([1.0, -1.0, -1.0]) @ frames.frames, provenance=frames.provenance)
    np.testing.assert_allclose(frame_stability_metrics(frames, half_turn).axis_cosines, (1.0, -1.0, -1.0))

    with pytest.raises(ContractViolation):
        frame_stability_metrics(frames, build_random_frames(4, rng))
