"""Perspective-n-Point pose solving on metric model points.

The pose path of the decoupled pipeline: once canonical-space model points
have been scaled to metric size, the object pose is recovered purely from
2D-3D correspondences, so errors in the scale estimate cannot bend the
rotation (scaling model points by alpha leaves every reprojection
unchanged when the translation scales by alpha with them).

Solvers:

* :func:`solve_pnp_minimal` -- P3P on three points plus a disambiguation
  point, the engine inside RANSAC;
* :func:`solve_pnp_lsq`     -- DLT initialization + Gauss-Newton refinement
  for 6+ correspondences;
* :func:`refine_pnp`        -- Gauss-Newton reprojection refinement;
* :func:`ransac_pnp`        -- robust loop with adaptive termination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .errors import (
    ConsensusNotFound,
    DegenerateSample,
    DivergedBehindCamera,
    InsufficientCorrespondences,
    NonPositiveScale,
    NoRealSolution,
    RankDeficient,
)
from .geometry import CameraIntrinsics, RigidPose, nearest_rotation, rotation_from_rotvec

MINIMAL_SAMPLE_SIZE = 4

# Gauss-Newton termination (step norm, cost decrease, iteration cap).
GN_STEP_TOL = 1e-10
GN_COST_TOL = 1e-12
GN_MAX_ITERATIONS = 50


@dataclass(frozen=True)
class Correspondence2D3D:
    """One 2D pixel / 3D metric model point pair."""

    image: tuple[float, float]
    model: tuple[float, float, float]


def split_correspondences(correspondences):
    """Stack a list of :class:`Correspondence2D3D` into (N,2)/(N,3) arrays."""
    image = np.array([c.image for c in correspondences], dtype=np.float64).reshape(-1, 2)
    model = np.array([c.model for c in correspondences], dtype=np.float64).reshape(-1, 3)
    return image, model


@dataclass(frozen=True)
class RansacConfig:
    reprojection_threshold: float = 2.0
    max_iterations: int = 1000
    confidence: float = 0.999
    rng_seed: int = 0

    def __post_init__(self):
        if not self.reprojection_threshold > 0:
            raise ValueError(f"reprojection_threshold must be > 0, got {self.reprojection_threshold}")
        if not 0 < self.confidence < 1:
            raise ValueError(f"confidence must be in (0, 1), got {self.confidence}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass(frozen=True)
class PnPResult:
    """Robust solve output: pose, per-correspondence inlier mask, mean
    reprojection error over the inliers, and iterations executed."""

    pose: RigidPose
    inlier_mask: np.ndarray
    mean_reprojection_error: float
    iterations_used: int

    def __post_init__(self):
        mask = np.asarray(self.inlier_mask, dtype=bool).copy()
        mask.flags.writeable = False
        object.__setattr__(self, "inlier_mask", mask)

    @property
    def inlier_count(self):
        return int(np.count_nonzero(self.inlier_mask))


def scale_model_points(scale, points):
    """Scale canonical-space model points to metric size (``s * P``)."""
    if not scale > 0:
        raise NonPositiveScale(f"scale must be positive, got {scale}")
    return np.asarray(points, dtype=np.float64) * float(scale)


def _validate_inputs(image_points, model_points):
    image = np.ascontiguousarray(image_points, dtype=np.float64)
    model = np.ascontiguousarray(model_points, dtype=np.float64)
    if image.ndim != 2 or image.shape[1] != 2:
        raise ValueError(f"image points must be (N, 2), got {image.shape}")
    if model.ndim != 2 or model.shape[1] != 3:
        raise ValueError(f"model points must be (N, 3), got {model.shape}")
    if image.shape[0] != model.shape[0]:
        raise ValueError(
            f"correspondence count mismatch: {image.shape[0]} pixels vs {model.shape[0]} points"
        )
    if not (np.all(np.isfinite(image)) and np.all(np.isfinite(model))):
        raise ValueError("correspondences contain non-finite values")
    return image, model


def _bearings(image_points, k: CameraIntrinsics):
    rays = np.empty((image_points.shape[0], 3))
    rays[:, 0] = (image_points[:, 0] - k.cx) / k.fx
    rays[:, 1] = (image_points[:, 1] - k.cy) / k.fy
    rays[:, 2] = 1.0
    return rays / np.linalg.norm(rays, axis=1, keepdims=True)


def _rigid_from_triangle(src, dst):
    """Exact rigid transform mapping triangle ``src`` onto ``dst`` (triad
    frames); returns None when either triangle is degenerate."""

    def frame(p):
        e1 = p[1] - p[0]
        n1 = np.linalg.norm(e1)
        if n1 == 0:
            return None
        e1 = e1 / n1
        w = np.cross(e1, p[2] - p[0])
        nw = np.linalg.norm(w)
        if nw < 1e-12 * n1 * max(1.0, np.linalg.norm(p[2] - p[0])):
            return None
        w = w / nw
        return np.column_stack([e1, np.cross(w, e1), w])

    fs = frame(src)
    fd = frame(dst)
    if fs is None or fd is None:
        return None
    rot = fd @ fs.T
    t = dst.mean(axis=0) - rot @ src.mean(axis=0)
    return nearest_rotation(rot), t


def solve_pnp_minimal(image_points, model_points, intrinsics):
    """P3P minimal solver over exactly four correspondences.

    The first three points feed Grunert's triangle construction (up to four
    distance solutions); the fourth point disambiguates. Candidates where
    any of the four points falls at non-positive camera depth are dropped,
    and the survivors are ordered by the fourth point's reprojection error.

    Returns a non-empty list of :class:`RigidPose`.

    Raises
    ------
    DegenerateSample
        Collinear 3D triple among the first three points.
    NoRealSolution
        No candidate survives (no real quartic root or all fail cheirality).
    """
    image, model = _validate_inputs(image_points, model_points)
    if image.shape[0] != MINIMAL_SAMPLE_SIZE:
        raise ValueError(f"minimal solver needs exactly 4 correspondences, got {image.shape[0]}")

    tri = model[:3]
    area2 = np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0]))
    edge = max(np.linalg.norm(tri[1] - tri[0]), np.linalg.norm(tri[2] - tri[0]))
    if area2 <= 1e-10 * edge * edge:
        raise DegenerateSample("first three model points are (near-)collinear")

    rays = _bearings(image, intrinsics)
    distance_sets = kernels.p3p_distance_sets(tri, rays[:3])

    scored = []
    for s in distance_sets:
        cam_pts = s[:, None] * rays[:3]
        fit = _rigid_from_triangle(tri, cam_pts)
        if fit is None:
            continue
        rot, t = fit
        depths = model @ rot.T[:, 2] + t[2]
        if np.any(depths <= 0):
            continue
        err = kernels.reprojection_errors(
            rot, t, model[3:4], image[3:4], intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy
        )[0]
        scored.append((float(err), RigidPose(rot, t)))

    if not scored:
        raise NoRealSolution("no P3P candidate passed cheirality")
    scored.sort(key=lambda item: item[0])
    return [pose for _, pose in scored]


def solve_pnp_lsq(image_points, model_points, intrinsics):
    """Least-squares PnP: DLT over normalized coordinates, nearest-SO(3)
    projection of the linear rotation, then Gauss-Newton refinement.

    Requires >= 6 correspondences in a non-degenerate configuration.

    Raises
    ------
    InsufficientCorrespondences, RankDeficient, DivergedBehindCamera
    """
    image, model = _validate_inputs(image_points, model_points)
    n = image.shape[0]
    if n < 6:
        raise InsufficientCorrespondences(f"least-squares PnP needs >= 6 correspondences, got {n}")

    xn = (image[:, 0] - intrinsics.cx) / intrinsics.fx
    yn = (image[:, 1] - intrinsics.cy) / intrinsics.fy

    a = np.zeros((2 * n, 12))
    homog = np.column_stack([model, np.ones(n)])
    a[0::2, 0:4] = homog
    a[0::2, 8:12] = -xn[:, None] * homog
    a[1::2, 4:8] = homog
    a[1::2, 8:12] = -yn[:, None] * homog

    _, sv, vt = np.linalg.svd(a, full_matrices=False)
    # rank 11 required for a unique (up to scale) projection matrix
    if sv[-2] <= 1e-10 * sv[0]:
        raise RankDeficient(
            "DLT design matrix has a degenerate null space (coplanar or otherwise degenerate points)"
        )
    m = vt[-1].reshape(3, 4)
    if np.linalg.det(m[:, :3]) < 0:
        m = -m
    u, s, v2t = np.linalg.svd(m[:, :3])
    rot = u @ v2t
    if np.linalg.det(rot) < 0:
        rot = u @ np.diag([1.0, 1.0, -1.0]) @ v2t
    lam = s.mean()
    t = m[:, 3] / lam
    initial = RigidPose(nearest_rotation(rot), t)
    return refine_pnp(initial, image, model, intrinsics)


def refine_pnp(initial, image_points, model_points, intrinsics, full_output=False):
    """Gauss-Newton minimization of the total squared reprojection error.

    The rotation is updated through axis-angle increments on the tangent
    space (re-orthonormalized each step); steps that would increase the
    cost are halved up to 10 times before giving up, so the returned cost
    never exceeds the initial cost. Terminates on step norm < 1e-10, cost
    decrease < 1e-12, or 50 iterations.

    With ``full_output=True`` returns ``(pose, info)`` where info carries
    ``cost_history`` (cost after the initial evaluation and each accepted
    step) and ``iterations``.

    Raises
    ------
    DivergedBehindCamera
        If fewer than 4 points have positive depth under ``initial``.
    """
    image, model = _validate_inputs(image_points, model_points)
    k = intrinsics
    rot = initial.rotation.copy()
    t = initial.translation.copy()

    jtj, jtr, cost, n_valid = kernels.reprojection_normal_eqs(
        rot, t, model, image, k.fx, k.fy, k.cx, k.cy
    )
    if n_valid < MINIMAL_SAMPLE_SIZE:
        raise DivergedBehindCamera(
            f"initial pose leaves only {n_valid} point(s) at positive depth"
        )
    history = [cost]
    iterations = 0
    for _ in range(GN_MAX_ITERATIONS):
        try:
            step = -np.linalg.solve(jtj, jtr)
        except np.linalg.LinAlgError:
            ridge = 1e-12 * max(np.trace(jtj), 1.0)
            step = -np.linalg.solve(jtj + ridge * np.eye(6), jtr)

        accepted = False
        alpha = 1.0
        for _ in range(10):
            delta = alpha * step
            cand_rot = nearest_rotation(rotation_from_rotvec(delta[:3]) @ rot)
            cand_t = t + delta[3:]
            cand = kernels.reprojection_normal_eqs(
                cand_rot, cand_t, model, image, k.fx, k.fy, k.cx, k.cy
            )
            if cand[3] >= n_valid and cand[2] < cost:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break

        iterations += 1
        decrease = cost - cand[2]
        rot, t = cand_rot, cand_t
        jtj, jtr, cost, n_valid = cand
        history.append(cost)
        if np.linalg.norm(delta) < GN_STEP_TOL or decrease < GN_COST_TOL:
            break

    pose = RigidPose(rot, t)
    if full_output:
        return pose, {"cost_history": history, "iterations": iterations, "final_cost": cost}
    return pose


def reprojection_residuals_jacobian(pose, image_points, model_points, intrinsics):
    """Residual vector and analytic Jacobian of the refinement cost.

    Residuals are (2k,) for the k points at positive depth; the Jacobian is
    (2k, 6) over the local parameters (axis-angle increment, translation
    increment) evaluated at zero. Kept independent of the kernel backends
    so tests can cross-check both against finite differences.
    """
    image, model = _validate_inputs(image_points, model_points)
    k = intrinsics
    rx = model @ pose.rotation.T
    pc = rx + pose.translation
    ok = pc[:, 2] > 0
    rx, pc, px = rx[ok], pc[ok], image[ok]
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    invz = 1.0 / z

    res = np.empty(2 * len(px))
    res[0::2] = k.fx * x * invz + k.cx - px[:, 0]
    res[1::2] = k.fy * y * invz + k.cy - px[:, 1]

    jac = np.empty((2 * len(px), 6))
    au = k.fx * invz
    bu = -k.fx * x * invz * invz
    av = k.fy * invz
    cv = -k.fy * y * invz * invz
    jac[0::2, 0] = bu * rx[:, 1]
    jac[0::2, 1] = au * rx[:, 2] - bu * rx[:, 0]
    jac[0::2, 2] = -au * rx[:, 1]
    jac[0::2, 3] = au
    jac[0::2, 4] = 0.0
    jac[0::2, 5] = bu
    jac[1::2, 0] = -av * rx[:, 2] + cv * rx[:, 1]
    jac[1::2, 1] = -cv * rx[:, 0]
    jac[1::2, 2] = av * rx[:, 0]
    jac[1::2, 3] = 0.0
    jac[1::2, 4] = av
    jac[1::2, 5] = cv
    return res, jac, ok


def _adaptive_iteration_bound(inlier_ratio, confidence):
    w4 = inlier_ratio ** MINIMAL_SAMPLE_SIZE
    if w4 >= 1.0:
        return 0
    if w4 <= 0.0:
        return math.inf
    denom = math.log1p(-w4)
    return math.ceil(math.log1p(-confidence) / denom)


def ransac_pnp(image_points, model_points, intrinsics, config=None):
    """RANSAC over minimal P3P samples with Gauss-Newton polish.

    Per iteration ``i`` the 4-point sample is drawn from a fresh generator
    seeded with (rng_seed, i), so the sample sequence is a pure function of
    the config and results are reproducible bit for bit. A hypothesis
    beats the incumbent on higher inlier count, then lower mean inlier
    error (earlier iteration wins exact ties). The iteration budget shrinks
    adaptively from the best inlier ratio and the requested confidence.

    The final pose is refined on the best consensus set and the inlier mask
    is recomputed against the refined pose.

    Raises
    ------
    InsufficientCorrespondences
        Fewer than 4 correspondences.
    ConsensusNotFound
        No hypothesis reached 4 inliers.
    """
    image, model = _validate_inputs(image_points, model_points)
    cfg = config or RansacConfig()
    n = image.shape[0]
    if n < MINIMAL_SAMPLE_SIZE:
        raise InsufficientCorrespondences(
            f"RANSAC needs >= {MINIMAL_SAMPLE_SIZE} correspondences, got {n}"
        )
    k = intrinsics

    best_count = 0
    best_mean = math.inf
    best_pose = None
    best_mask = None
    needed = math.inf
    iteration = 0
    while iteration < cfg.max_iterations and iteration < needed:
        rng = np.random.default_rng((cfg.rng_seed, iteration))
        sample = rng.choice(n, size=MINIMAL_SAMPLE_SIZE, replace=False)
        iteration += 1
        try:
            candidates = solve_pnp_minimal(image[sample], model[sample], k)
        except (DegenerateSample, NoRealSolution):
            continue
        for pose in candidates:
            errors = kernels.reprojection_errors(
                pose.rotation, pose.translation, model, image, k.fx, k.fy, k.cx, k.cy
            )
            mask = errors < cfg.reprojection_threshold
            count = int(np.count_nonzero(mask))
            if count == 0:
                continue
            mean_err = float(errors[mask].mean())
            if count > best_count or (count == best_count and mean_err < best_mean):
                best_count, best_mean = count, mean_err
                best_pose, best_mask = pose, mask
                needed = _adaptive_iteration_bound(count / n, cfg.confidence)

    if best_pose is None or best_count < MINIMAL_SAMPLE_SIZE:
        raise ConsensusNotFound(
            f"best consensus has {best_count} inlier(s) after {iteration} iteration(s)"
        )

    refined = refine_pnp(best_pose, image[best_mask], model[best_mask], k)
    errors = kernels.reprojection_errors(
        refined.rotation, refined.translation, model, image, k.fx, k.fy, k.cx, k.cy
    )
    final_mask = errors < cfg.reprojection_threshold
    if not np.any(final_mask):
        raise ConsensusNotFound("refined pose lost all inliers")
    mean_err = float(errors[final_mask].mean())
    return PnPResult(refined, final_mask, mean_err, iteration)
