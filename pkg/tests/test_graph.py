from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdsp.graph import (
    ChebFilter,
    Graph,
    GraphError,
    adjacency_from_geography,
    build_laplacian,
    chebyshev_response,
    is_connected,
    materialize_filter,
    read_edge_list,
    write_edge_list,
)

from conftest import random_sd


def test_path_p2_laplacian(p2):
    sd = build_laplacian(p2)
    np.testing.assert_array_equal(sd.laplacian, [[1, -1], [-1, 1]])
    np.testing.assert_allclose(sd.eigvals, [0.0, 2.0], atol=1e-15)
    assert sd.lambda_max == pytest.approx(2.0, abs=1e-15)


def test_triangle_spectrum(k3):
    sd = build_laplacian(k3)
    np.testing.assert_array_equal(sd.laplacian, 3 * np.eye(3) - np.ones((3, 3)))
    np.testing.assert_allclose(sd.eigvals, [0.0, 3.0, 3.0], atol=1e-12)


def test_reconstruction_random_10_nodes():
    sd = random_sd(3, 10)
    u, lam = sd.eigvecs, sd.eigvals
    assert np.max(np.abs(sd.laplacian - u @ np.diag(lam) @ u.T)) < 1e-12
    np.testing.assert_allclose(u.T @ u, np.eye(10), atol=1e-12)
    assert np.all(np.diff(lam) >= 0)


def test_sign_convention_and_determinism():
    a, b = random_sd(5, 12), random_sd(5, 12)
    assert np.array_equal(a.eigvecs, b.eigvecs)
    for col in a.eigvecs.T:
        first = col[np.flatnonzero(np.abs(col) > 1e-10)[0]]
        assert first > 0


def test_identity_filter(p2):
    sd = build_laplacian(p2)
    np.testing.assert_array_equal(materialize_filter(sd, ChebFilter.identity()), np.eye(2))


def test_first_order_term_on_p2(p2):
    sd = build_laplacian(p2)
    np.testing.assert_allclose(materialize_filter(sd, (0, 1, 0)), [[0, -1], [-1, 0]], atol=1e-15)


def test_p2_mixed_coefficients_by_hand(p2):
    # L~ = [[0,-1],[-1,0]], T2 = 2 L~^2 - I = I, so F = 0.7 I + 0.3 L~
    sd = build_laplacian(p2)
    f = materialize_filter(sd, ChebFilter((0.5, 0.3, 0.2)))
    np.testing.assert_allclose(f, [[0.7, -0.3], [-0.3, 0.7]], atol=1e-15)


def test_filter_matches_spectral_evaluation():
    sd = random_sd(11, 9)
    theta = (0.4, -1.1, 0.25)
    lam_t = 2 * sd.eigvals / sd.lambda_max - 1
    direct = sd.eigvecs @ np.diag(chebyshev_response(theta, lam_t)) @ sd.eigvecs.T
    np.testing.assert_allclose(materialize_filter(sd, theta), direct, atol=1e-12)


def test_filter_rejects_wrong_length():
    sd = random_sd(0, 4)
    with pytest.raises(ValueError):
        materialize_filter(sd, (1.0, 2.0))


coef = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(st.tuples(coef, coef, coef), st.tuples(coef, coef, coef), coef, coef)
def test_filter_is_linear_in_theta(t1, t2, a, b):
    sd = random_sd(2, 7)
    lhs = materialize_filter(sd, a * np.array(t1) + b * np.array(t2))
    rhs = a * materialize_filter(sd, t1) + b * materialize_filter(sd, t2)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + np.max(np.abs(lhs))) * 10


@settings(max_examples=30, deadline=None)
@given(st.tuples(coef, coef, coef), st.integers(0, 50))
def test_filter_commutes_with_laplacian(theta, seed):
    sd = random_sd(seed, 8)
    f, lap = materialize_filter(sd, theta), sd.laplacian
    bound = 1e-8 * np.linalg.norm(lap, 2) * max(np.linalg.norm(f, 2), 1e-300)
    assert np.max(np.abs(f @ lap - lap @ f)) <= bound


def test_edge_list_p2():
    g = adjacency_from_geography([(0, 1)], n=2)
    np.testing.assert_array_equal(g.adjacency, [[0, 1], [1, 0]])


def test_edge_list_dedup():
    a = adjacency_from_geography([(0, 1)])
    b = adjacency_from_geography([(0, 1), (1, 0)])
    np.testing.assert_array_equal(a.adjacency, b.adjacency)


def test_bundled_california_counties_connected():
    path = resources.files("gdsp") / "data" / "ca_counties.txt"
    g = read_edge_list(path)
    assert g.n == 58 and g.adjacency.shape == (58, 58)
    assert is_connected(g.adjacency)
    assert g.labels[0] == "Alameda" and g.labels[-1] == "Yuba"
    assert len(set(g.labels)) == 58
    assert int(g.adjacency.sum()) // 2 == 139


def test_edge_file_round_trip(tmp_path):
    g = adjacency_from_geography([(0, 1), (1, 2), (2, 3), (0, 3)], labels=["a", "b", "c", "d"])
    write_edge_list(g, tmp_path / "g.txt")
    back = read_edge_list(tmp_path / "g.txt")
    np.testing.assert_array_equal(back.adjacency, g.adjacency)
    assert back.labels == ("a", "b", "c", "d")


@pytest.mark.parametrize("adj, msg", [
    ([[0, 1], [0, 0]], "symmetric"),
    ([[1, 1], [1, 0]], "self-loop"),
    ([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], "connected"),
    ([[0, -1], [-1, 0]], "negative"),
])
def test_invalid_graphs_rejected(adj, msg):
    with pytest.raises(GraphError, match=msg):
        Graph(np.array(adj, dtype=float))


def test_bad_edge_line(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("0 1\n1 2 3\n")
    with pytest.raises(GraphError, match="bad.txt:2"):
        read_edge_list(p)
