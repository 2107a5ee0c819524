import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import REL_TOL, numerical_grad, rel_error
from lbpcnn.tsne import (
    EmbeddingConfig,
    conditional_row,
    emit_scatter_svg,
    input_affinities,
    kl_divergence,
    kl_gradient,
    load_feature_csv,
    row_entropy,
    scatter_svg,
    student_q,
    tsne_embed,
)


def random_joint(n, rng):
    A = rng.random((n, n))
    P = A + A.T
    np.fill_diagonal(P, 0)
    return P / P.sum()


def test_simplex_vertices_have_equal_affinities():
    X = np.eye(4)
    P = input_affinities(X, perplexity=2.0)
    off = P[~np.eye(4, dtype=bool)]
    np.testing.assert_allclose(off, off[0], rtol=1e-12)


def test_affinity_matrix_laws(rng):
    X = rng.normal(size=(30, 5))
    P = input_affinities(X, perplexity=5.0)
    assert abs(P.sum() - 1) < 1e-10
    np.testing.assert_array_equal(P, P.T)
    assert np.all(np.diag(P) == 0) and np.all(P >= 0)


def test_row_entropy_matches_perplexity(rng):
    X = rng.normal(size=(25, 4))
    _, sigmas = input_affinities(X, perplexity=6.0, return_sigmas=True)
    d = np.sum((X[:, None] - X[None]) ** 2, axis=-1)
    for i in range(len(X)):
        row = np.delete(d[i], i)
        # independent recomputation of p_{j|i} from the returned bandwidth
        w = np.exp(-row / (2 * sigmas[i] ** 2))
        p = w / w.sum()
        h = -np.sum(p[p > 0] * np.log(p[p > 0]))
        assert abs(h - np.log(6.0)) < 1e-5
        assert abs(row_entropy(conditional_row(row, sigmas[i])) - np.log(6.0)) < 1e-5


def test_duplicate_points_are_allowed(rng):
    X = rng.normal(size=(12, 3))
    X[3] = X[4]
    P = input_affinities(X, perplexity=3.0)
    assert np.all(np.isfinite(P)) and abs(P.sum() - 1) < 1e-10


@pytest.mark.parametrize("perplexity", [1.0, 0.5, 11.0])
def test_perplexity_range(rng, perplexity):
    with pytest.raises(ValueError):
        input_affinities(rng.normal(size=(12, 3)), perplexity)


def test_rejects_degenerate_inputs():
    with pytest.raises(ValueError):
        input_affinities(np.ones((6, 2)), 2.0)
    with pytest.raises(ValueError):
        input_affinities(np.array([[0.0], [np.nan], [1.0], [2.0]]), 1.5)


def test_q_laws(rng):
    Q, _ = student_q(rng.normal(size=(15, 2)))
    assert abs(Q.sum() - 1) < 1e-12 and np.all(np.diag(Q) == 0) and np.all(Q >= 0)
    np.testing.assert_allclose(Q, Q.T)


@pytest.mark.parametrize("seed", range(5))
def test_kl_gradient_finite_difference(seed):
    rng = np.random.default_rng(seed)
    P = random_joint(10, rng)
    Y = rng.normal(size=(10, 2))
    num = numerical_grad(lambda: kl_divergence(P, Y), Y)
    assert rel_error(kl_gradient(P, Y), num) < REL_TOL


def test_equidistant_triangle():
    X = np.eye(3) * 5
    Y, trace = tsne_embed(X, EmbeddingConfig(perplexity=1.5, iterations=1000, seed=2))
    d = [np.linalg.norm(Y[i] - Y[j]) for i, j in [(0, 1), (0, 2), (1, 2)]]
    assert max(d) / min(d) - 1 < 0.01


def test_kl_decreases_and_stays_nonnegative(rng):
    X = rng.normal(size=(50, 10))
    Y, trace = tsne_embed(X, EmbeddingConfig())
    assert Y.shape == (50, 2) and len(trace) == 500
    assert trace[-1] < trace[0]
    assert min(trace) >= 0


def test_permutation_equivariance(rng):
    X = rng.normal(size=(20, 4))
    init = np.random.default_rng(1).normal(0, 1e-4, (20, 2))
    perm = rng.permutation(20)
    # short run: rounding differences from reordered sums grow chaotically later
    cfg = EmbeddingConfig(perplexity=5, iterations=10)
    Y, _ = tsne_embed(X, cfg, init=init)
    Yp, _ = tsne_embed(X[perm], cfg, init=init[perm])
    np.testing.assert_allclose(Yp, Y[perm], atol=1e-8)


def test_embedding_is_seeded(rng):
    X = rng.normal(size=(15, 3))
    a, _ = tsne_embed(X, EmbeddingConfig(perplexity=4, iterations=50, seed=3))
    b, _ = tsne_embed(X, EmbeddingConfig(perplexity=4, iterations=50, seed=3))
    assert np.array_equal(a, b)


def test_svg_markers_and_wellformedness(tmp_path):
    emit_scatter_svg(np.array([[0.0, 1.0], [2.0, -1.0]]), ["normal", "glaucoma"], tmp_path / "a.svg")
    root = ET.parse(tmp_path / "a.svg").getroot()
    circles = root.findall("{http://www.w3.org/2000/svg}circle")
    assert len(circles) == 2
    assert circles[0].get("fill") != circles[1].get("fill")
    for c in circles:
        assert 0 <= float(c.get("cx")) <= 480 and 0 <= float(c.get("cy")) <= 480


def test_svg_is_deterministic():
    Y = np.random.default_rng(0).normal(size=(10, 2))
    labels = ["a<b"] * 5 + ["c&d"] * 5
    assert scatter_svg(Y, labels) == scatter_svg(Y, labels)
    ET.fromstring(scatter_svg(Y, labels).split("\n", 1)[1])


def test_svg_length_mismatch():
    with pytest.raises(ValueError):
        scatter_svg(np.zeros((2, 2)), ["a"])


def test_feature_csv(tmp_path):
    (tmp_path / "f.csv").write_text("# features\n1,2,3\n4,5,6\n")
    np.testing.assert_array_equal(load_feature_csv(tmp_path / "f.csv"), [[1, 2, 3], [4, 5, 6]])


@settings(max_examples=25, deadline=None)
@given(st.integers(6, 20), st.integers(1, 5), st.integers(0, 2**32))
def test_affinities_hold_for_random_clouds(n, dims, seed):
    X = np.random.default_rng(seed).normal(size=(n, dims))
    P = input_affinities(X, min(3.0, (n - 1) / 3))
    assert abs(P.sum() - 1) < 1e-10 and np.all(np.diag(P) == 0)
    np.testing.assert_array_equal(P, P.T)
    Y = np.random.default_rng(seed + 1).normal(size=(n, 2))
    assert kl_divergence(P, Y) >= 0
