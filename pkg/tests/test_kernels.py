"""Backend contracts: the pure-NumPy and compiled kernels must agree, and
both must match independent oracles (numpy.roots, dense NumPy algebra)."""

import numpy as np
import pytest

from scalepose import _kernels as kernels
from scalepose._kernels import _pure
from scalepose.geometry import random_rotation

HAVE_NATIVE = "native" in kernels.available_backends()

BACKENDS = [_pure]
if HAVE_NATIVE:
    from scalepose._kernels import _native

    BACKENDS.append(_native)


@pytest.fixture(params=[b.__name__.rsplit(".", 1)[-1] for b in BACKENDS])
def backend(request):
    for b in BACKENDS:
        if b.__name__.endswith(request.param):
            return b
    raise AssertionError


def _roots_oracle(coeffs):
    r = np.roots(coeffs)
    real = np.sort(r[np.abs(r.imag) < 1e-7].real)
    out = []
    for x in real:
        if not out or abs(x - out[-1]) > 1e-8 * (1 + abs(x)):
            out.append(x)
    return np.asarray(out)


class TestQuarticRoots:
    def test_random_quartics_match_numpy_roots(self, backend):
        rng = np.random.default_rng(0)
        for _ in range(500):
            c = rng.normal(size=5)
            mine = backend.quartic_roots(*c)
            oracle = _roots_oracle(c)
            assert len(mine) == len(oracle)
            if len(mine):
                assert np.max(np.abs(mine - oracle)) < 1e-7

    def test_known_factored_roots(self, backend):
        # (x-1)(x-2)(x-3)(x-4) = x^4 - 10x^3 + 35x^2 - 50x + 24
        roots = backend.quartic_roots(1, -10, 35, -50, 24)
        assert np.allclose(roots, [1, 2, 3, 4], atol=1e-10)

    def test_no_real_roots(self, backend):
        # (x^2+1)(x^2+4) has no real roots
        assert len(backend.quartic_roots(1, 0, 5, 0, 4)) == 0

    def test_biquadratic(self, backend):
        # x^4 - 5x^2 + 4 = (x^2-1)(x^2-4)
        roots = backend.quartic_roots(1, 0, -5, 0, 4)
        assert np.allclose(roots, [-2, -1, 1, 2], atol=1e-10)

    def test_double_root_merged(self, backend):
        # (x-1)^2 (x-3)(x-5)
        roots = backend.quartic_roots(1, -10, 32, -38, 15)
        assert len(roots) == 3
        assert np.allclose(roots, [1, 3, 5], atol=1e-6)

    def test_degenerate_leading_coefficients(self, backend):
        assert np.allclose(backend.quartic_roots(0, 1, -6, 11, -6), [1, 2, 3], atol=1e-9)
        assert np.allclose(backend.quartic_roots(0, 0, 1, -3, 2), [1, 2], atol=1e-10)
        assert np.allclose(backend.quartic_roots(0, 0, 0, 2, -4), [2], atol=1e-12)
        assert len(backend.quartic_roots(0, 0, 0, 0, 0)) == 0

    @pytest.mark.skipif(not HAVE_NATIVE, reason="native backend not built")
    def test_backend_parity(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            c = rng.normal(size=5) * rng.choice([1e-3, 1.0, 1e3])
            a = _pure.quartic_roots(*c)
            b = _native.quartic_roots(*c)
            assert len(a) == len(b)
            if len(a):
                assert np.max(np.abs(a - b)) < 1e-9 * (1 + np.max(np.abs(a)))


def _p3p_instance(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(3, 3))
    pts[:, 2] = np.abs(pts[:, 2]) + 1.2
    dist = np.linalg.norm(pts, axis=1)
    bearings = pts / dist[:, None]
    return pts, bearings, dist


class TestP3PDistances:
    def test_recovers_true_distances(self, backend):
        for seed in range(300):
            pts, bearings, dist = _p3p_instance(seed)
            sets = backend.p3p_distance_sets(pts, bearings)
            assert len(sets) >= 1
            best = min(np.max(np.abs(s - dist)) for s in sets)
            assert best < 1e-8

    def test_all_solutions_satisfy_constraints(self, backend):
        for seed in range(50):
            pts, bearings, _ = _p3p_instance(seed)
            d01 = np.dot(bearings[0], bearings[1])
            d02 = np.dot(bearings[0], bearings[2])
            d12 = np.dot(bearings[1], bearings[2])
            a2 = np.sum((pts[1] - pts[2]) ** 2)
            b2 = np.sum((pts[0] - pts[2]) ** 2)
            c2 = np.sum((pts[0] - pts[1]) ** 2)
            for s1, s2, s3 in backend.p3p_distance_sets(pts, bearings):
                assert abs(s2 * s2 + s3 * s3 - 2 * s2 * s3 * d12 - a2) < 1e-8 * (a2 + b2 + c2)
                assert abs(s1 * s1 + s3 * s3 - 2 * s1 * s3 * d02 - b2) < 1e-8 * (a2 + b2 + c2)
                assert abs(s1 * s1 + s2 * s2 - 2 * s1 * s2 * d01 - c2) < 1e-8 * (a2 + b2 + c2)
                assert s1 > 0 and s2 > 0 and s3 > 0

    def test_degenerate_triangle_returns_empty(self, backend):
        pts = np.array([[0.0, 0, 1], [0.0, 0, 1], [1.0, 0, 2]])
        bearings = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        assert len(backend.p3p_distance_sets(pts, bearings)) == 0

    @pytest.mark.skipif(not HAVE_NATIVE, reason="native backend not built")
    def test_backend_parity(self):
        for seed in range(200):
            pts, bearings, _ = _p3p_instance(seed)
            a = _pure.p3p_distance_sets(pts, bearings)
            b = _native.p3p_distance_sets(pts, bearings)
            assert a.shape == b.shape
            if a.size:
                assert np.max(np.abs(a - b)) < 1e-9


class TestReprojectionKernels:
    def _setup(self, seed, n=40):
        rng = np.random.default_rng(seed)
        rot = random_rotation(rng)
        t = np.array([0.1, -0.05, 1.5]) + 0.1 * rng.normal(size=3)
        obj = rng.uniform(-0.2, 0.2, size=(n, 3))
        pix = rng.uniform([0, 0], [640, 480], size=(n, 2))
        return rot, t, obj, pix

    def test_matches_manual_projection(self, backend):
        rot, t, obj, pix = self._setup(2)
        err = backend.reprojection_errors(rot, t, obj, pix, 577.5, 577.5, 319.5, 239.5)
        cam = obj @ rot.T + t
        expected = np.hypot(
            577.5 * cam[:, 0] / cam[:, 2] + 319.5 - pix[:, 0],
            577.5 * cam[:, 1] / cam[:, 2] + 239.5 - pix[:, 1],
        )
        assert np.max(np.abs(err - expected)) < 1e-9

    def test_behind_camera_is_inf(self, backend):
        rot = np.eye(3)
        obj = np.array([[0.0, 0.0, -2.0], [0.0, 0.0, 2.0]])
        err = backend.reprojection_errors(rot, np.zeros(3), obj, np.zeros((2, 2)), 100, 100, 0, 0)
        assert np.isinf(err[0]) and np.isfinite(err[1])

    def test_normal_eqs_match_explicit_jacobian(self, backend, camera):
        from scalepose.geometry import RigidPose
        from scalepose.pnp import reprojection_residuals_jacobian

        rot, t, obj, pix = self._setup(3)
        jtj, jtr, cost, n_valid = backend.reprojection_normal_eqs(
            rot, t, obj, pix, camera.fx, camera.fy, camera.cx, camera.cy
        )
        res, jac, ok = reprojection_residuals_jacobian(RigidPose(rot, t), pix, obj, camera)
        assert n_valid == int(np.count_nonzero(ok))
        assert np.max(np.abs(jtj - jac.T @ jac)) < 1e-6 * max(1.0, np.abs(jtj).max())
        assert np.max(np.abs(jtr - jac.T @ res)) < 1e-6 * max(1.0, np.abs(jtr).max())
        assert abs(cost - res @ res) < 1e-9 * max(1.0, cost)

    @pytest.mark.skipif(not HAVE_NATIVE, reason="native backend not built")
    def test_backend_parity(self, camera):
        for seed in range(50):
            rot, t, obj, pix = self._setup(seed)
            args = (rot, t, obj, pix, camera.fx, camera.fy, camera.cx, camera.cy)
            ea = _pure.reprojection_errors(*args)
            eb = _native.reprojection_errors(*args)
            assert np.allclose(ea, eb, rtol=1e-12, atol=1e-12, equal_nan=True)
            ja, ga, ca, na = _pure.reprojection_normal_eqs(*args)
            jb, gb, cb, nb = _native.reprojection_normal_eqs(*args)
            assert na == nb
            assert np.max(np.abs(ja - jb)) < 1e-7 * max(1.0, np.abs(ja).max())
            assert np.max(np.abs(ga - gb)) < 1e-7 * max(1.0, np.abs(ga).max())
            assert abs(ca - cb) < 1e-9 * max(1.0, ca)


class TestPointsInBox:
    def test_boundary_is_inside(self, backend):
        pts = np.array([[0.5, 0.0, 0.0], [0.5 + 1e-9, 0.0, 0.0]])
        mask = backend.points_in_box_mask(pts, np.eye(3), np.zeros(3), np.array([0.5, 0.5, 0.5]))
        assert mask[0] and not mask[1]

    def test_matches_manual_transform(self, backend):
        rng = np.random.default_rng(4)
        rot = random_rotation(rng)
        t = rng.normal(size=3)
        he = rng.uniform(0.2, 1.0, size=3)
        pts = rng.normal(size=(500, 3))
        mask = backend.points_in_box_mask(pts, rot, t, he)
        local = (pts - t) @ rot
        expected = np.all(np.abs(local) <= he, axis=1)
        assert np.array_equal(mask, expected)

    @pytest.mark.skipif(not HAVE_NATIVE, reason="native backend not built")
    def test_backend_parity(self):
        rng = np.random.default_rng(5)
        rot = random_rotation(rng)
        t = rng.normal(size=3)
        he = rng.uniform(0.2, 1.0, size=3)
        pts = rng.normal(size=(2000, 3))
        assert np.array_equal(
            _pure.points_in_box_mask(pts, rot, t, he),
            _native.points_in_box_mask(pts, rot, t, he),
        )


class TestBackendSelection:
    def test_switch_and_restore(self):
        original = kernels.backend_name()
        previous = kernels.use_backend("pure")
        try:
            assert kernels.backend_name() == "pure"
            assert previous == original
            roots = kernels.quartic_roots(1, 0, -1, 0, 0)
            assert np.allclose(roots, [-1, 0, 1])
        finally:
            kernels.use_backend(original)

    def test_unknown_backend_rejected(self):
        with pytest.raises(ValueError):
            kernels.use_backend("fortran")
