import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abcdprgm.model import (
    Graph,
    GroupAssignment,
    LatentState,
    StarLatentState,
    alpha_update,
    build_B,
    build_C,
    build_design_matrix,
    compute_attractors,
    in_simplex,
    lift_to_star,
    project_to_beta,
)
from abcdprgm.simulator import step_alpha_star


def random_simplex(rng, n, p):
    return rng.dirichlet(np.ones(p + 1), size=n)[:, :p]


def random_graph(rng, n, prob=0.3):
    U = np.triu((rng.random((n, n)) < prob).astype(float), 1)
    return U + U.T


def brute_attractors(Z, Y, labels):
    n, p = Z.shape
    Aw, Ab = np.zeros((n, p)), np.zeros((n, p))
    for i in range(n):
        w = [j for j in range(n) if j != i and Y[i, j] and labels[j] == labels[i]]
        b = [j for j in range(n) if j != i and Y[i, j] and labels[j] != labels[i]]
        if w:
            Aw[i] = Z[w].mean(axis=0)
        if b:
            Ab[i] = Z[b].mean(axis=0)
    return Aw, Ab


# -- types -------------------------------------------------------------------

def test_star_state_rejects_bad_rows():
    with pytest.raises(ValueError):
        StarLatentState(np.array([[0.5, 0.6]]))
    with pytest.raises(ValueError):
        StarLatentState(np.array([[-0.1, 1.1]]))
    s = StarLatentState(np.array([[0.2, 0.3, 0.5]]))
    assert s.p == 2 and np.allclose(s.Z, [[0.2, 0.3]])


def test_graph_validation():
    with pytest.raises(ValueError):
        Graph(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        Graph(np.array([[1, 0], [0, 0]]))
    with pytest.raises(ValueError):
        Graph(np.array([[0, 2], [2, 0]]))
    assert Graph(np.array([[0, 1], [1, 0]])).n == 2


def test_group_assignment_needs_two_labels():
    with pytest.raises(ValueError):
        GroupAssignment(np.zeros(4, dtype=int))
    g = GroupAssignment(np.array([0, 0, 1]))
    assert g.n_groups == 2
    assert g.same_group()[0, 1] and not g.same_group()[0, 2]


def test_latent_state_validity_flag():
    Z = LatentState(np.array([[0.2, 0.3], [0.9, 0.4], [-0.1, 0.2]]))
    assert Z.is_valid().tolist() == [True, False, False]


# -- lift_to_star ------------------------------------------------------------

def test_lift_examples():
    assert np.array_equal(lift_to_star(np.zeros(2)), [0, 0, 1])
    assert np.allclose(lift_to_star([0.2, 0.3]), [0.2, 0.3, 0.5], atol=1e-15)
    assert np.array_equal(lift_to_star(np.zeros((3, 2))), np.tile([0, 0, 1.0], (3, 1)))


def test_lift_rejects_outside_rows():
    with pytest.raises(ValueError):
        lift_to_star([0.7, 0.4])
    with pytest.raises(ValueError):
        lift_to_star([-0.01, 0.4])
    # inside the tolerance is accepted
    assert lift_to_star([-1e-10, 0.5]).sum() == pytest.approx(1.0, abs=1e-15)


@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_lift_rows_sum_to_one(p, seed):
    Z = random_simplex(np.random.default_rng(seed), 7, p)
    Zs = lift_to_star(Z)
    assert np.allclose(Zs.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(Zs[:, :p], Z, atol=1e-15)
    StarLatentState(Zs)


# -- attractors --------------------------------------------------------------

def test_attractors_three_node_hand_case():
    Z = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    Y = np.ones((3, 3)) - np.eye(3)
    Aw, Ab = compute_attractors(Z, Y, np.array(["a", "a", "b"]))
    assert np.array_equal(Aw[0], Z[1])
    assert np.array_equal(Ab[0], Z[2])
    assert np.array_equal(Aw[2], [0, 0])  # only member of its group
    assert np.allclose(Ab[2], [0.5, 0.5])


def test_attractors_empty_graph():
    rng = np.random.default_rng(0)
    Aw, Ab = compute_attractors(random_simplex(rng, 6, 2), np.zeros((6, 6)), np.arange(6) % 2)
    assert not Aw.any() and not Ab.any()


def test_zero_neighbor_convention():
    rng = np.random.default_rng(1)
    n = 20
    Z, Y, labels = random_simplex(rng, n, 3), random_graph(rng, n, 0.5), np.arange(n) % 3
    same = labels == labels[0]
    Y[0, same] = Y[same, 0] = 0
    Aw, Ab = compute_attractors(Z, Y, labels)
    assert np.array_equal(Aw[0], np.zeros(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.integers(1, 3), st.integers(2, 4), st.integers(0, 2**31 - 1))
def test_attractors_match_brute_force_and_stay_in_simplex(n, p, K, seed):
    rng = np.random.default_rng(seed)
    Z, Y, labels = random_simplex(rng, n, p), random_graph(rng, n), rng.integers(0, K, n)
    Aw, Ab = compute_attractors(Z, Y, labels)
    Bw, Bb = brute_attractors(Z, Y, labels)
    assert np.allclose(Aw, Bw, atol=1e-14) and np.allclose(Ab, Bb, atol=1e-14)
    for A in (Aw, Ab):
        nz = A.any(axis=1)
        assert in_simplex(A[nz], 1e-12).all()


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 30), st.integers(0, 2**31 - 1))
def test_attractors_label_permutation_equivariance(n, seed):
    rng = np.random.default_rng(seed)
    Z, Y = random_simplex(rng, n, 2), random_graph(rng, n)
    labels = rng.integers(0, 3, n)
    relabel = rng.permutation(3)[labels] + 10
    a = compute_attractors(Z, Y, labels)
    b = compute_attractors(Z, Y, relabel)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_attractors_shape_mismatch():
    with pytest.raises(ValueError):
        compute_attractors(np.zeros((3, 2)), np.zeros((4, 4)), [0, 1, 0])


# -- design matrix / B / C ---------------------------------------------------

def test_design_matrix_examples():
    X = build_design_matrix([[0.1, 0.2]], [[0, 0]], [[0.3, 0.3]])
    assert np.array_equal(X, [[0.1, 0.2, 0, 0, 0.3, 0.3, 1]])
    X0 = build_design_matrix(np.zeros((4, 2)), np.zeros((4, 2)), np.zeros((4, 2)))
    assert np.array_equal(X0[:, :-1], np.zeros((4, 6))) and np.array_equal(X0[:, -1], np.ones(4))
    with pytest.raises(ValueError):
        build_design_matrix(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)))


def test_build_B_examples():
    assert not build_B(np.zeros(4), 3).any()
    B = build_B([1, 0, 0, 0], 1)
    assert np.array_equal(B, [[1, -1], [0, 0], [0, 0], [0, 1]])
    assert build_B([1, 2, 3, 4], 2).shape == (7, 3)


def test_build_B_validation():
    with pytest.raises(ValueError):
        build_B([1, 2, 3], 2)
    with pytest.raises(ValueError):
        build_B([1, 2, 3, np.inf], 2)
    with pytest.raises(ValueError):
        build_B([1, 2, 3, 4], 0)


def test_build_C_p1_rows():
    C = build_C(1)
    assert C.shape == (8, 4)
    assert np.array_equal(C[0], [1, 0, 0, 0])    # B[0, 0]
    assert np.array_equal(C[7], [1, 1, 1, 1])    # B[3, 1], row-major index 3*2 + 1
    assert not (C @ np.zeros(4)).any()


@pytest.mark.parametrize("p", [1, 2, 3, 5])
def test_C_full_rank_and_round_trip(p):
    C = build_C(p)
    assert np.linalg.matrix_rank(C) == 4
    rng = np.random.default_rng(p)
    for _ in range(100):
        beta = rng.normal(scale=3, size=4)
        Bv = build_B(beta, p).ravel()
        # sequential summation reproduces the lift bit for bit; BLAS may reorder
        assert np.array_equal(Bv, (C * beta).sum(axis=1))
        assert np.max(np.abs(Bv - C @ beta)) <= 1e-12
        assert np.allclose(project_to_beta(build_B(beta, p).ravel(), p), beta, atol=1e-12)


def test_kronecker_vectorization_identity():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n, p = rng.integers(1, 8), rng.integers(1, 4)
        X, B = rng.normal(size=(n, 3 * p + 1)), rng.normal(size=(3 * p + 1, p + 1))
        lhs = (X @ B).ravel()
        rhs = np.kron(X, np.eye(p + 1)) @ B.ravel()
        assert np.max(np.abs(lhs - rhs)) <= 1e-12


# -- alpha update -------------------------------------------------------------

def test_alpha_update_trivial_cases():
    X = np.random.default_rng(0).random((5, 7))
    assert np.array_equal(alpha_update(X, np.zeros((7, 3))), np.ones((5, 3)))
    x = np.zeros((1, 7))
    x[0, -1] = 1
    B = np.zeros((7, 3))
    B[-1] = np.log(2)
    assert np.allclose(alpha_update(x, B), 2.0, rtol=1e-15)


def test_alpha_update_clamps_and_reports():
    X = np.ones((2, 4))
    B = np.full((4, 2), 300.0)
    rep = {}
    a = alpha_update(X, B, report=rep)
    assert rep["clamped"] == 4
    assert np.all(np.isfinite(a)) and np.allclose(a, np.exp(700.0))
    rep = {}
    alpha_update(X, np.zeros((4, 2)), report=rep)
    assert rep["clamped"] == 0


@pytest.mark.parametrize("p", [1, 2, 3])
def test_alpha_via_B_matches_star_space(p):
    rng = np.random.default_rng(10 + p)
    n = 40
    Z, Y, labels = random_simplex(rng, n, p), random_graph(rng, n), np.arange(n) % 3
    Aw, Ab = compute_attractors(Z, Y, labels)
    for _ in range(10):
        beta = rng.normal(scale=2, size=4)
        via_B = alpha_update(build_design_matrix(Z, Aw, Ab), build_B(beta, p))
        star = np.exp(beta[0] * lift_to_star(Z) + beta[1] * lift_to_star(Aw)
                      + beta[2] * lift_to_star(Ab) + beta[3])
        assert np.allclose(via_B, star, rtol=1e-12, atol=0)
        oracle = step_alpha_star(lift_to_star(Z), Y, labels, beta)
        assert np.allclose(via_B, oracle, rtol=1e-12, atol=0)
