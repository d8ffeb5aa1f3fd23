import numpy as np
import pytest

from stokesmg.assembly import ProblemParams, TaylorHoodSpace, build_system
from stokesmg.mesh import build_hierarchy
from stokesmg.transfer import build_prolongation


@pytest.fixture(scope="session")
def hierarchy3():
    return build_hierarchy(3)


@pytest.fixture(scope="session")
def spaces3(hierarchy3):
    return [TaylorHoodSpace(lv) for lv in hierarchy3.levels]


@pytest.fixture(scope="session")
def transfers3(spaces3):
    return [None] + [
        build_prolongation(spaces3[k - 1], spaces3[k])
        for k in range(1, len(spaces3))
    ]


@pytest.fixture(scope="session")
def systems3_beta1(spaces3):
    params = ProblemParams(beta=1.0)
    return [build_system(s, params) for s in spaces3]


def locate_barycentric(space, x, y):
    """Brute-force point location: triangle index and barycentric
    coordinates of each query point.  Test-only helper, independent of the
    package's transfer/assembly internals."""
    pts = np.stack([np.ravel(x), np.ravel(y)], axis=1)
    verts = space.level.vertex_coords[space.level.tri_vertices]  # (T,3,2)
    tri = np.full(pts.shape[0], -1)
    bary = np.zeros((pts.shape[0], 3))
    for t in range(verts.shape[0]):
        p0, p1, p2 = verts[t]
        mat = np.array([[p1[0] - p0[0], p2[0] - p0[0]],
                        [p1[1] - p0[1], p2[1] - p0[1]]])
        rel = pts - p0
        lam12 = np.linalg.solve(mat, rel.T).T
        lam0 = 1.0 - lam12.sum(axis=1)
        lam = np.column_stack([lam0, lam12])
        inside = np.all(lam >= -1e-12, axis=1) & (tri < 0)
        tri[inside] = t
        bary[inside] = lam[inside]
    assert np.all(tri >= 0), "point outside the mesh"
    return tri, bary


def eval_p2_function(space, coeffs, x, y):
    """Evaluate a scalar quadratic FE function (coefficients over all
    quadratic nodes) at arbitrary points, with locally coded shape
    functions."""
    tri, lam = locate_barycentric(space, x, y)
    l0, l1, l2 = lam[:, 0], lam[:, 1], lam[:, 2]
    shapes = np.column_stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1,
    ])
    nodes = space.tri_p2[tri]
    vals = np.sum(coeffs[nodes] * shapes, axis=1)
    return vals.reshape(np.shape(x))
