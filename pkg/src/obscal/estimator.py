"""Error-state Kalman filter with online rotational IMU-camera calibration.

The filter carries the full state

    orientation q_IG, gyro bias, velocity, accel bias, position,
    extrinsic rotation q_CI, and the in-state landmark positions,

with landmarks kept inside the state (the layout the observability
analysis assumes) rather than marginalized per window.  Only the
rotational extrinsic is calibrated online; the camera-IMU translation is
a known constant.  Jacobians are evaluated at the current estimate on
purpose: consistency fixes such as first-estimates Jacobians would mask
the very degeneracies this filter is used to study.

Error-state conventions match :mod:`obscal.observability` exactly (same
layout, same multiplicative orientation errors), and the per-step
transition used for covariance propagation composes to the analysis
module's transition matrix over any interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import chi2

from .so3 import Rotation, Rpy, rotation_from_rpy, rotation_error_rpy, skew
from .trajectory import TrajectorySpec, KinematicSample, sample
from .sensors import (
    GRAVITY,
    FeatureMap,
    ImuNoise,
    generate_imu,
    observe_features,
    observe_global_pose,
    point_in_camera,
)
from .observability import ErrorStateLayout


@dataclass(frozen=True)
class FilterPriors:
    """Initial 1-sigma uncertainties. The extrinsic prior must cover the
    perturbation range so innovation gating stays consistent."""

    sigma_theta: float = 1e-3          # rad
    sigma_bias_gyro: float = 2e-3      # rad/s
    sigma_velocity: float = 1e-2       # m/s
    sigma_bias_accel: float = 2e-2     # m/s^2
    sigma_position: float = 1e-2       # m
    sigma_extrinsic: float = math.radians(5.0)
    sigma_feature: float = 0.5         # m, triangulated landmark insertion


@dataclass(frozen=True)
class EstimatorParams:
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())
    imu_noise: ImuNoise = ImuNoise()
    # filter-side bearing noise: kept moderately above the simulated pixel
    # noise (2e-3) so relinearization error during the calibration
    # transient stays inside the modeled measurement uncertainty
    pixel_sigma: float = 3.5e-3
    sigma_global_pos: float = 0.1
    sigma_global_rot: float = 0.1
    priors: FilterPriors = FilterPriors()
    chi2_confidence: float = 0.95
    max_features: int = 30
    min_parallax_deg: float = 1.0
    parallax_inflation: float = 2.0    # demanded parallax per unit extrinsic sigma
    # Gauss-Newton relinearizations per camera epoch (1 = standard EKF)
    camera_update_iterations: int = 1
    # small pseudo random walk on the (physically constant) extrinsic keeps
    # the calibration gain from starving before the nonlinear transient of a
    # large initial misalignment has been worked off
    extrinsic_process_sigma: float = 5e-4   # rad/sqrt(s)
    # covariance-matching term: while camera innovations run statistically
    # hot (linearization transient), the extrinsic variance is topped up in
    # proportion to the excess, annealing to zero as consistency returns
    adaptive_extrinsic_inflation: float = 2e-6   # rad^2 per unit excess per epoch
    drop_after_s: float = 3.0
    divergence_cov: float = 1e6
    max_perturbation_deg: float = 5.0
    enforce_perturbation_range: bool = True


@dataclass
class _Candidate:
    bearing: np.ndarray
    r_gi: np.ndarray        # estimated IMU orientation (IMU->global) at view time
    p_i: np.ndarray         # estimated IMU position at view time
    t: float


@dataclass
class FilterState:
    t: float
    q_IG: Rotation
    bias_gyro: np.ndarray
    velocity: np.ndarray
    bias_accel: np.ndarray
    position: np.ndarray
    q_CI: Rotation
    p_CI: np.ndarray                       # known constant, not estimated
    feature_ids: list[int]
    feature_positions: np.ndarray          # (F, 3)
    P: np.ndarray
    candidates: dict = field(default_factory=dict)
    last_seen: dict = field(default_factory=dict)

    @property
    def layout(self) -> ErrorStateLayout:
        return ErrorStateLayout(len(self.feature_ids))

    @property
    def dim(self) -> int:
        return 18 + 3 * len(self.feature_ids)


def init_filter(kin0: KinematicSample, bias_gyro, bias_accel,
                r_ci_true: Rotation, p_ci, perturbation,
                params: EstimatorParams) -> FilterState:
    """Start the filter at the true state with a perturbed extrinsic.

    The perturbation (roll, pitch, yaw in degrees) is applied as a
    camera-frame rotation on the left of the true extrinsic, so the
    initial calibration error read back through ``rotation_error_rpy``
    equals the perturbation itself.
    """
    pert = np.asarray(perturbation, dtype=float)
    if params.enforce_perturbation_range and np.any(
            np.abs(pert) > params.max_perturbation_deg + 1e-12):
        raise ValueError(
            f"perturbation {pert} outside +/-{params.max_perturbation_deg} deg")
    q_ci = rotation_from_rpy(pert) @ r_ci_true
    pr = params.priors
    p = np.zeros((18, 18))
    p[0:3, 0:3] = pr.sigma_theta ** 2 * np.eye(3)
    p[3:6, 3:6] = pr.sigma_bias_gyro ** 2 * np.eye(3)
    p[6:9, 6:9] = pr.sigma_velocity ** 2 * np.eye(3)
    p[9:12, 9:12] = pr.sigma_bias_accel ** 2 * np.eye(3)
    p[12:15, 12:15] = pr.sigma_position ** 2 * np.eye(3)
    p[15:18, 15:18] = pr.sigma_extrinsic ** 2 * np.eye(3)
    return FilterState(
        t=kin0.t,
        q_IG=kin0.R_IG,
        bias_gyro=np.asarray(bias_gyro, dtype=float).copy(),
        velocity=kin0.v.copy(),
        bias_accel=np.asarray(bias_accel, dtype=float).copy(),
        position=kin0.p.copy(),
        q_CI=q_ci,
        p_CI=np.asarray(p_ci, dtype=float).copy(),
        feature_ids=[],
        feature_positions=np.zeros((0, 3)),
        P=p,
    )


# ---------------------------------------------------------------------------
# measurement models (shared with the observability analysis)


def camera_jacobian(r_ig: Rotation, p_i: np.ndarray, r_ci: Rotation,
                    p_ci: np.ndarray, p_f: np.ndarray,
                    layout: ErrorStateLayout,
                    feature_index: int) -> np.ndarray | None:
    """Bearing-measurement Jacobian (2 x dim) at the given linearization point.

    Returns None when the feature sits at or behind the camera plane.
    """
    rci = r_ci.matrix
    rig = r_ig.matrix
    w = rig @ (np.asarray(p_f, dtype=float) - p_i)     # lever arm, IMU frame
    pc = rci @ w + np.asarray(p_ci, dtype=float)
    x, y, z = pc
    if z <= 1e-6:
        return None
    j = np.array([[1.0 / z, 0.0, -x / (z * z)],
                  [0.0, 1.0 / z, -y / (z * z)]])
    rot_cam = rci @ rig
    h = np.zeros((2, layout.dim))
    h[:, layout.block("theta")] = j @ rci @ skew(w)
    h[:, layout.block("position")] = -(j @ rot_cam)
    h[:, layout.block("extrinsic")] = j @ skew(pc - p_ci)
    h[:, layout.feature(feature_index)] = j @ rot_cam
    return h


def predict_bearing(state: FilterState, p_f: np.ndarray) -> np.ndarray | None:
    pc = state.q_CI.matrix @ (state.q_IG.matrix @ (p_f - state.position)) + state.p_CI
    if pc[2] <= 1e-6:
        return None
    return pc[:2] / pc[2]


def global_pose_jacobian(layout: ErrorStateLayout) -> np.ndarray:
    """Pose-measurement Jacobian: identity on the orientation and position
    error blocks (orientation rows first)."""
    h = np.zeros((6, layout.dim))
    h[0:3, layout.block("theta")] = np.eye(3)
    h[3:6, layout.block("position")] = np.eye(3)
    return h


# ---------------------------------------------------------------------------
# propagation


def _phi_step(r_gi_mid: np.ndarray, a_hat_mid: np.ndarray,
              omega_mid: np.ndarray, dt: float) -> np.ndarray:
    """Per-step inertial transition: 3rd-order expansion of exp(F dt).

    Exact for straight-line motion (F is then nilpotent of index 4) and
    O(dt^4)-accurate otherwise, which keeps long compositions consistent
    with the analysis module's RK4-integrated transition.
    """
    f = np.zeros((15, 15))
    f[0:3, 0:3] = -skew(omega_mid)
    f[0:3, 3:6] = -np.eye(3)
    f[6:9, 0:3] = -r_gi_mid @ skew(a_hat_mid)
    f[6:9, 9:12] = -r_gi_mid
    f[12:15, 6:9] = np.eye(3)
    fdt = f * dt
    fdt2 = fdt @ fdt
    return np.eye(15) + fdt + 0.5 * fdt2 + (fdt2 @ fdt) / 6.0


def propagate(state: FilterState, omega0, accel0, omega1, accel1,
              dt: float, params: EstimatorParams) -> np.ndarray:
    """Strapdown mean propagation plus covariance update over one IMU step.

    Uses the samples bracketing the step (trapezoidal specific force,
    midpoint rate).  Returns the 15x15 per-step transition core so callers
    can cross-check long-horizon composition against the analysis module.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = params.gravity
    w_hat0 = omega0 - state.bias_gyro
    w_hat1 = omega1 - state.bias_gyro
    w_bar = 0.5 * (w_hat0 + w_hat1)
    a_hat0 = accel0 - state.bias_accel
    a_hat1 = accel1 - state.bias_accel

    r_gi0 = state.q_IG.matrix.T
    q_ig_new = Rotation.exp(-w_bar * dt) @ state.q_IG
    r_gi1 = q_ig_new.matrix.T

    a_g0 = r_gi0 @ a_hat0 + g
    a_g1 = r_gi1 @ a_hat1 + g
    state.position = state.position + state.velocity * dt \
        + dt * dt * (2.0 * a_g0 + a_g1) / 6.0
    state.velocity = state.velocity + 0.5 * dt * (a_g0 + a_g1)
    state.q_IG = q_ig_new

    r_gi_mid = r_gi0 @ Rotation.exp(w_bar * (0.5 * dt)).matrix
    phi = _phi_step(r_gi_mid, 0.5 * (a_hat0 + a_hat1), w_bar, dt)

    noise = params.imu_noise
    q = np.zeros(15)
    q[0:3] = noise.gyro_density ** 2 * dt
    q[3:6] = noise.gyro_walk ** 2 * dt
    q[6:9] = noise.accel_density ** 2 * dt
    q[9:12] = noise.accel_walk ** 2 * dt

    p = state.P
    core = phi @ p[:15, :15] @ phi.T
    core[np.diag_indices(15)] += q
    p[:15, :15] = 0.5 * (core + core.T)
    if p.shape[0] > 15:
        p[:15, 15:] = phi @ p[:15, 15:]
        p[15:, :15] = p[:15, 15:].T
    qe = params.extrinsic_process_sigma ** 2 * dt
    p[15, 15] += qe
    p[16, 16] += qe
    p[17, 17] += qe
    state.t += dt
    return phi


# ---------------------------------------------------------------------------
# updates


def _inject(state: FilterState, dx: np.ndarray):
    state.q_IG = Rotation.exp(-dx[0:3]) @ state.q_IG
    state.bias_gyro = state.bias_gyro + dx[3:6]
    state.velocity = state.velocity + dx[6:9]
    state.bias_accel = state.bias_accel + dx[9:12]
    state.position = state.position + dx[12:15]
    state.q_CI = Rotation.exp(-dx[15:18]) @ state.q_CI
    if len(state.feature_ids):
        state.feature_positions = state.feature_positions + dx[18:].reshape(-1, 3)


def _mean_snapshot(state: FilterState):
    return (state.q_IG, state.bias_gyro.copy(), state.velocity.copy(),
            state.bias_accel.copy(), state.position.copy(), state.q_CI,
            state.feature_positions.copy())


def _restore_mean(state: FilterState, snap):
    (state.q_IG, state.bias_gyro, state.velocity, state.bias_accel,
     state.position, state.q_CI, state.feature_positions) = (
        snap[0], snap[1].copy(), snap[2].copy(), snap[3].copy(),
        snap[4].copy(), snap[5], snap[6].copy())


def _apply_update(state: FilterState, h: np.ndarray, r: np.ndarray,
                  meas_var: np.ndarray):
    p = state.P
    pht = p @ h.T
    s = h @ pht
    s[np.diag_indices(s.shape[0])] += meas_var
    k = np.linalg.solve(s, pht.T).T
    dx = k @ r
    p_new = p - k @ pht.T
    state.P = 0.5 * (p_new + p_new.T)
    _inject(state, dx)


def _iterated_update(state: FilterState, build_hr, meas_var: np.ndarray,
                     iterations: int):
    """Gauss-Newton iterated EKF update around the prior mean.

    ``build_hr(state)`` re-evaluates the stacked Jacobian and residual at
    the current iterate.  With one iteration this is the standard EKF
    update; more iterations relinearize, which matters when the initial
    extrinsic misalignment is large compared to the bearing noise.
    """
    prior = _mean_snapshot(state)
    d = np.zeros(state.dim)
    k = pht = None
    for _ in range(max(1, iterations)):
        built = build_hr(state)
        if built is None:
            break
        h, r = built
        pht = state.P @ h.T          # P stays the prior covariance throughout
        s = h @ pht
        s[np.diag_indices(s.shape[0])] += meas_var
        k = np.linalg.solve(s, pht.T).T
        d = k @ (r + h @ d)
        _restore_mean(state, prior)
        _inject(state, d)
    if k is not None:
        p_new = state.P - k @ pht.T
        state.P = 0.5 * (p_new + p_new.T)


def _triangulate_two_view(b1, r_gc1, c1, b2, r_gc2, c2):
    """Midpoint triangulation from two bearings; None if ill-conditioned
    or the point lands behind either camera."""
    rays = []
    for b, r_gc in ((b1, r_gc1), (b2, r_gc2)):
        ray = r_gc @ np.array([b[0], b[1], 1.0])
        rays.append(ray / np.linalg.norm(ray))
    a = np.zeros((3, 3))
    rhs = np.zeros(3)
    for ray, c in zip(rays, (c1, c2)):
        proj = np.eye(3) - np.outer(ray, ray)
        a += proj
        rhs += proj @ c
    try:
        p = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError:
        return None
    for r_gc, c in ((r_gc1, c1), (r_gc2, c2)):
        if (r_gc.T @ (p - c))[2] <= 1e-3:
            return None
    return p


def _camera_pose_estimate(state: FilterState):
    r_gi = state.q_IG.matrix.T
    r_gc = r_gi @ state.q_CI.matrix.T
    center = state.position - r_gi @ (state.q_CI.matrix.T @ state.p_CI)
    return r_gc, center


def _insert_feature(state: FilterState, fid: int, p_f: np.ndarray,
                    g: np.ndarray, cov_extra: np.ndarray):
    """Augment the state with a triangulated landmark, correlated.

    ``g`` (3 x dim) is the sensitivity of the triangulated position to the
    current error state; the cross-covariance it induces keeps innovation
    gating consistent even when the extrinsic is badly initialized.
    ``cov_extra`` adds the bearing-noise-driven part on top.
    """
    old = state.P
    n = old.shape[0]
    gp = g @ old
    p = np.zeros((n + 3, n + 3))
    p[:n, :n] = old
    p[n:, :n] = gp
    p[:n, n:] = gp.T
    p[n:, n:] = g @ gp.T + cov_extra
    state.P = 0.5 * (p + p.T)
    state.feature_ids.append(fid)
    state.feature_positions = np.vstack([state.feature_positions, p_f])


def _drop_features(state: FilterState, stale_ids: list[int]):
    if not stale_ids:
        return
    keep = [i for i, fid in enumerate(state.feature_ids) if fid not in stale_ids]
    cols = list(range(18)) + [18 + 3 * i + j for i in keep for j in range(3)]
    state.P = state.P[np.ix_(cols, cols)]
    state.feature_positions = state.feature_positions[keep]
    state.feature_ids = [state.feature_ids[i] for i in keep]
    for fid in stale_ids:
        state.last_seen.pop(fid, None)


def update_camera(state: FilterState, observations,
                  params: EstimatorParams) -> int:
    """EKF update from one epoch of bearing observations.

    Known landmarks are updated in one batch after a per-feature
    chi-square gate (2 DoF at the configured confidence).  Unknown
    features are buffered and initialized by two-view triangulation once
    their rays subtend the minimum parallax; triangulation failure defers
    the feature, it is never fatal.  Returns the number of bearings used.
    """
    gate = chi2.ppf(params.chi2_confidence, df=2)
    var = params.pixel_sigma ** 2
    known, unknown = [], []
    index_of = {fid: i for i, fid in enumerate(state.feature_ids)}
    for obs in observations:
        state.last_seen[obs.feature_id] = obs.t
        (known if obs.feature_id in index_of else unknown).append(obs)
    for obs in unknown:
        _process_candidate(state, obs, params)

    # features initialized this epoch already consumed their observation
    # during triangulation; they join the update from the next epoch on
    layout = state.layout
    accepted = []
    meas_var = []
    mahal = []
    for obs in known:
        slot = index_of[obs.feature_id]
        h = camera_jacobian(state.q_IG, state.position, state.q_CI,
                            state.p_CI, state.feature_positions[slot],
                            layout, slot)
        if h is None:
            continue
        z_hat = predict_bearing(state, state.feature_positions[slot])
        r = obs.bearing - z_hat
        s = h @ state.P @ h.T + var * np.eye(2)
        m = float(r @ np.linalg.solve(s, r))
        mahal.append(m)
        # chi-square test at the configured confidence; failing bearings
        # are deweighted (noise inflated until marginally consistent)
        # rather than discarded, so the large consistent innovations of
        # the calibration transient keep informing the filter while gross
        # outliers still lose essentially all influence
        w = 1.0 if m <= gate else m / gate
        accepted.append((obs, slot))
        meas_var.extend([var * w, var * w])

    if mahal and params.adaptive_extrinsic_inflation > 0:
        # innovations hotter than their chi-square expectation signal an
        # over-confident filter; re-open the extrinsic variance accordingly
        excess = max(0.0, float(np.mean(mahal)) / 2.0 - 1.0)
        if excess > 0.0:
            bump = params.adaptive_extrinsic_inflation * excess
            state.P[15, 15] += bump
            state.P[16, 16] += bump
            state.P[17, 17] += bump

    if accepted:
        def build_hr(st):
            rows, residuals = [], []
            for obs, slot in accepted:
                h = camera_jacobian(st.q_IG, st.position, st.q_CI,
                                    st.p_CI, st.feature_positions[slot],
                                    layout, slot)
                z_hat = predict_bearing(st, st.feature_positions[slot])
                if h is None or z_hat is None:
                    return None
                rows.append(h)
                residuals.append(obs.bearing - z_hat)
            return np.vstack(rows), np.concatenate(residuals)

        _iterated_update(state, build_hr, np.asarray(meas_var),
                         params.camera_update_iterations)

    in_state = set(state.feature_ids)
    stale = [fid for fid, seen in state.last_seen.items()
             if fid in in_state and state.t - seen > params.drop_after_s]
    _drop_features(state, stale)
    return len(accepted) * 2


def _tri_from_errors(cand: _Candidate, obs, state: FilterState,
                     dtheta, dp, deps, view: str = "both"):
    """Triangulate with view poses perturbed by an error-state offset.

    The extrinsic perturbation always applies to both views (it is one
    static parameter); the pose perturbation applies to the anchor view,
    the current view, or both, per ``view``.
    """
    e_th = Rotation.exp(np.asarray(dtheta, dtype=float)).matrix
    e_ep = Rotation.exp(np.asarray(deps, dtype=float)).matrix
    r_ic0 = state.q_CI.matrix.T @ e_ep
    poses = []
    for tag, r_gi, p_i, bearing in (
            ("anchor", cand.r_gi, cand.p_i, cand.bearing),
            ("current", state.q_IG.matrix.T, state.position, obs.bearing)):
        if view in ("both", tag):
            r_gc = r_gi @ e_th @ r_ic0
            center = p_i + dp - r_gc @ state.p_CI
        else:
            r_gc = r_gi @ r_ic0
            center = p_i - r_gc @ state.p_CI
        poses.append((bearing, r_gc, center))
    return _triangulate_two_view(*poses[0], *poses[1])


def _tri_sensitivities(cand: _Candidate, obs, state: FilterState):
    """Sensitivity of the triangulated point to the current error state.

    Central finite differences of the full two-view triangulation, with
    pose and extrinsic errors shared by both views (the extrinsic is one
    static parameter; the pose errors drift slowly between the views).
    This captures the parallax-amplified depth sensitivity to a shared
    extrinsic-rotation error that a single-view linearization misses.
    """
    eps = 1e-6
    zero = np.zeros(3)
    g = np.zeros((3, state.dim))
    plan = [
        ("dtheta", slice(0, 3)),
        ("dp", slice(12, 15)),
        ("deps", slice(15, 18)),
    ]
    for key, sl in plan:
        for j in range(3):
            d = np.zeros(3)
            d[j] = eps
            args = {"dtheta": zero, "dp": zero, "deps": zero}
            args[key] = d
            hi = _tri_from_errors(cand, obs, state, **args)
            args[key] = -d
            lo = _tri_from_errors(cand, obs, state, **args)
            if hi is None or lo is None:
                return None
            g[:, sl][:, j] = (hi - lo) / (2.0 * eps)
    return g


def _process_candidate(state: FilterState, obs, params: EstimatorParams):
    r_gi_now = state.q_IG.matrix.T
    cand = state.candidates.get(obs.feature_id)
    if cand is None:
        state.candidates[obs.feature_id] = _Candidate(
            obs.bearing.copy(), r_gi_now, state.position.copy(), obs.t)
        return
    if len(state.feature_ids) >= params.max_features:
        return
    r_ic = state.q_CI.matrix.T
    ray0 = (cand.r_gi @ r_ic) @ np.array([cand.bearing[0], cand.bearing[1], 1.0])
    ray1 = (r_gi_now @ r_ic) @ np.array([obs.bearing[0], obs.bearing[1], 1.0])
    cosang = np.clip(ray0 @ ray1 / (np.linalg.norm(ray0) * np.linalg.norm(ray1)),
                     -1.0, 1.0)
    parallax = math.acos(cosang)
    # a shared ray-direction error (miscalibrated extrinsic) displaces the
    # two-view intersection by ~ depth * err / tan(parallax); ask for enough
    # parallax that the triangulate-then-relinearize step stays sane, and
    # relax the demand as the extrinsic estimate converges
    sigma_ext = math.sqrt(float(np.mean(np.diag(state.P)[15:18])))
    required = max(math.radians(params.min_parallax_deg),
                   math.atan(params.parallax_inflation * sigma_ext))
    if parallax < required:
        return
    zero = np.zeros(3)
    p_f = _tri_from_errors(cand, obs, state, zero, zero, zero)
    if p_f is None:
        # keep the newer view as the anchor and wait for a better pair
        state.candidates[obs.feature_id] = _Candidate(
            obs.bearing.copy(), r_gi_now, state.position.copy(), obs.t)
        return
    g = _tri_sensitivities(cand, obs, state)
    if g is None:
        return
    center = state.position - r_gi_now @ (r_ic @ state.p_CI)
    ray = p_f - center
    depth = float(np.linalg.norm(ray))
    ray = ray / max(depth, 1e-9)
    sigma_lat = max(params.priors.sigma_feature, 2.0 * depth * params.pixel_sigma)
    sigma_depth = max(params.priors.sigma_feature,
                      1.5 * depth * params.pixel_sigma
                      / max(math.tan(parallax), 1e-3))
    basis = _ray_basis(ray)
    cov_extra = basis @ np.diag([sigma_lat ** 2, sigma_lat ** 2,
                                 sigma_depth ** 2]) @ basis.T
    _insert_feature(state, obs.feature_id, p_f, g, cov_extra)
    del state.candidates[obs.feature_id]


def _ray_basis(ray: np.ndarray) -> np.ndarray:
    """Orthonormal basis with the ray direction as the third column."""
    helper = np.array([1.0, 0.0, 0.0])
    if abs(ray[0]) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(ray, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(ray, e1)
    return np.column_stack([e1, e2, ray])


def update_global_pose(state: FilterState, obs, params: EstimatorParams):
    """EKF update from one absolute pose observation."""
    layout = state.layout
    h = global_pose_jacobian(layout)
    rel = obs.R_meas @ state.q_IG.inverse()
    r = np.concatenate([-rel.log(), obs.p_meas - state.position])
    var = np.concatenate([
        np.full(3, params.sigma_global_rot ** 2),
        np.full(3, params.sigma_global_pos ** 2),
    ])
    _apply_update(state, h, r, var)


# ---------------------------------------------------------------------------
# full runs


@dataclass(frozen=True)
class SimulationSettings:
    duration: float = 60.0
    imu_rate: float = 400.0
    cam_rate: float = 10.0
    global_rate: float = 10.0
    imu_noise: ImuNoise = ImuNoise()
    pixel_sigma: float = 2e-3
    sigma_global_pos: float = 0.1
    sigma_global_rot: float = 0.1
    bias_gyro0: np.ndarray = field(
        default_factory=lambda: np.array([4e-4, -3e-4, 5e-4]))
    bias_accel0: np.ndarray = field(
        default_factory=lambda: np.array([5e-3, -8e-3, 6e-3]))


@dataclass
class CalibrationRun:
    """Rotational-extrinsic error history of one simulated run."""

    mode: str
    trajectory: str
    case: str
    perturbation: tuple
    t: np.ndarray
    errors_deg: np.ndarray        # (n, 3) signed roll/pitch/yaw
    diverged: bool
    hygiene: dict | None = None

    @property
    def final_abs_errors(self) -> np.ndarray:
        return np.abs(self.errors_deg[-1])

    def metadata(self) -> dict:
        return {
            "mode": self.mode,
            "trajectory": self.trajectory,
            "case": self.case,
            "perturbation_deg": list(self.perturbation),
            "final_abs_errors_deg": [float(x) for x in self.final_abs_errors],
            "diverged": self.diverged,
            "num_samples": int(self.t.shape[0]),
        }

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t_s,roll_err_deg,pitch_err_deg,yaw_err_deg\n")
            for i in range(self.t.shape[0]):
                e = self.errors_deg[i]
                fh.write(f"{self.t[i]:.9g},{e[0]:.9g},{e[1]:.9g},{e[2]:.9g}\n")


def _check_divergence(state: FilterState, limit: float) -> bool:
    d = np.diag(state.P)
    return bool(not np.all(np.isfinite(d)) or np.max(d) > limit
                or not np.all(np.isfinite(state.q_IG.q)))


def run_calibration(mode: str,
                    spec: TrajectorySpec,
                    r_ci_true: Rotation,
                    p_ci,
                    perturbation,
                    fmap: FeatureMap,
                    params: EstimatorParams,
                    sim: SimulationSettings,
                    seed_imu=1, seed_pixel=2, seed_global=3,
                    trajectory_label: str = "", case_label: str = "",
                    record_hygiene: bool = False) -> CalibrationRun:
    """Simulate one full run and return the calibration-error time series.

    IMU at ``sim.imu_rate``, camera (and global pose when ``mode`` is
    ``"global"``) at their own rates; errors are recorded at camera
    epochs.  Divergence (NaN or covariance blow-up) flags the run and
    preserves the partial series.
    """
    if mode not in ("pure", "global"):
        raise ValueError(f"unknown mode {mode!r}")
    if len(fmap) == 0:
        raise ValueError("feature map is empty; estimator refuses to start")
    imu = generate_imu(spec, sim.imu_rate,
                       (sim.bias_gyro0, sim.bias_accel0),
                       sim.imu_noise, seed=seed_imu,
                       gravity=params.gravity, duration=sim.duration)
    rng_px = np.random.default_rng(seed_pixel)
    rng_gp = np.random.default_rng(seed_global)

    cam_stride = int(round(sim.imu_rate / sim.cam_rate))
    glob_stride = int(round(sim.imu_rate / sim.global_rate))
    kin0 = sample(spec, 0.0)
    state = init_filter(kin0, sim.bias_gyro0, sim.bias_accel0,
                        r_ci_true, p_ci, perturbation, params)
    dt = 1.0 / sim.imu_rate

    times, errors = [], []
    hygiene = {"max_asymmetry": 0.0, "min_eig_ratio": np.inf} if record_hygiene else None
    diverged = False
    n = len(imu)
    for i in range(n):
        if i % cam_stride == 0 or (mode == "global" and i % glob_stride == 0):
            kin = sample(spec, float(imu.t[i]))
            if i % cam_stride == 0:
                obs = observe_features(fmap, kin, r_ci_true, p_ci,
                                       sim.pixel_sigma, rng_px)
                update_camera(state, obs, params)
            if mode == "global" and i % glob_stride == 0:
                gobs = observe_global_pose(kin, sim.sigma_global_pos,
                                           sim.sigma_global_rot, rng_gp)
                update_global_pose(state, gobs, params)
            if record_hygiene:
                p = state.P
                scale = max(1.0, float(np.abs(p).max()))
                hygiene["max_asymmetry"] = max(
                    hygiene["max_asymmetry"], float(np.abs(p - p.T).max()) / scale)
                eig = np.linalg.eigvalsh(0.5 * (p + p.T))
                hygiene["min_eig_ratio"] = min(
                    hygiene["min_eig_ratio"], float(eig[0] / max(np.trace(p), 1e-300)))
            if i % cam_stride == 0:
                err = rotation_error_rpy(state.q_CI, r_ci_true)
                times.append(float(imu.t[i]))
                errors.append(err.as_array())
            if _check_divergence(state, params.divergence_cov):
                diverged = True
                break
        if i < n - 1:
            propagate(state, imu.omega[i], imu.accel[i],
                      imu.omega[i + 1], imu.accel[i + 1], dt, params)

    return CalibrationRun(
        mode=mode,
        trajectory=trajectory_label,
        case=case_label,
        perturbation=tuple(float(x) for x in np.asarray(perturbation, dtype=float)),
        t=np.asarray(times),
        errors_deg=np.asarray(errors),
        diverged=diverged,
        hygiene=hygiene,
    )
