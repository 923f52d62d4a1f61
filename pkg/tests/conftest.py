import numpy as np
import pytest

from avatarfit.mesh import TriMesh, vertex_graph_from_edges
from avatarfit.synth import SynthPreset, icosphere, make_model


@pytest.fixture
def single_triangle():
    return TriMesh(vertices=[[0, 0, 0], [1, 0, 0], [0, 1, 0]], faces=[[0, 1, 2]])


@pytest.fixture
def two_triangles():
    # two triangles sharing the edge (1, 2)
    return TriMesh(
        vertices=[[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]],
        faces=[[0, 1, 2], [1, 3, 2]],
    )


def unit_path_graph(n):
    edges = [(i, i + 1) for i in range(n - 1)]
    return vertex_graph_from_edges(n, edges, np.ones(n - 1))


@pytest.fixture
def path5():
    return unit_path_graph(5)


@pytest.fixture(scope="session")
def sphere_mesh():
    return icosphere(subdivisions=2, radius=1.0)


@pytest.fixture(scope="session")
def sphere_model():
    return make_model(SynthPreset(kind="sphere"))


@pytest.fixture(scope="session")
def chain_model():
    return make_model(SynthPreset(kind="cylinder_chain", n_joints=3))


@pytest.fixture(scope="session")
def biped_model():
    return make_model(SynthPreset(kind="capsule_biped"))


def random_mesh(n_pts=40, seed=0):
    """Random convex-hull mesh: well-formed, irregular triangles."""
    from scipy.spatial import ConvexHull

    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n_pts, 3))
    hull = ConvexHull(pts)
    verts = pts[hull.vertices]
    remap = {old: new for new, old in enumerate(hull.vertices)}
    faces = np.vectorize(remap.get)(hull.simplices)
    return TriMesh(vertices=verts, faces=faces)
