"""Observability-matrix construction and numerical null-space analysis.

The error state is ordered

    [ dtheta(3) | db_g(3) | dv(3) | db_a(3) | dp(3) | dtheta_ext(3) | dp_f(3F) ]

with the multiplicative orientation errors defined by

    R_IG_true = exp(-skew(dtheta))     R_IG_hat
    R_CI_true = exp(-skew(dtheta_ext)) R_CI_hat

and additive errors elsewhere.  Under the physical accelerometer model
``a_m = R_IG (a - g) + b_a`` with gravity g = [0, 0, -9.81], the
continuous error dynamics are

    d(dtheta)/dt = -skew(w) dtheta - db_g
    d(dv)/dt     = -R_GI skew(a_hat) dtheta - R_GI db_a
    d(dp)/dt     = dv

and the state transition matrix over [t1, tk] is block upper-triangular
with identity calibration/feature blocks.  The camera rows of the
observability matrix factor as  Xi_k @ [G1, G2, -I dt, G3, -I, G4, I]
where the Gamma blocks have closed forms in the true kinematics; the
global-pose rows are rows of Phi selected by the pose measurement
Jacobian.  Stacking many epochs and analyzing the right null space by SVD
exposes which error directions no measurement can correct.

Stacks are equilibrated (diagonal column and row scalings) during
assembly; scalings leave the null space untouched while making singular
values and candidate residuals comparable across heterogeneous row blocks
despite the dt^2/dt^3 growth of the double-integrated entries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .so3 import Rotation, skew
from .sensors import GRAVITY, CameraModel, FeatureMap, point_in_camera
from .trajectory import TrajectorySpec, KinematicSample, sample


class ErrorStateLayout:
    """Column bookkeeping for the ordered error-state blocks."""

    INERTIAL_DIM = 15
    _NAMED = {
        "theta": slice(0, 3),
        "bias_gyro": slice(3, 6),
        "velocity": slice(6, 9),
        "bias_accel": slice(9, 12),
        "position": slice(12, 15),
        "extrinsic": slice(15, 18),
    }

    def __init__(self, num_features: int):
        if num_features < 0:
            raise ValueError("num_features must be nonnegative")
        self.num_features = num_features
        self.dim = 18 + 3 * num_features

    def block(self, name: str) -> slice:
        return self._NAMED[name]

    def feature(self, i: int) -> slice:
        if not 0 <= i < self.num_features:
            raise IndexError(f"feature index {i} out of range")
        return slice(18 + 3 * i, 21 + 3 * i)

    def __eq__(self, other) -> bool:
        return isinstance(other, ErrorStateLayout) and other.dim == self.dim


@dataclass
class TransitionMatrix:
    """Error-state transition over [t1, tk].

    Only the 15x15 inertial core is non-trivial; the extrinsic and feature
    blocks are exactly identity, so the full matrix is materialized on
    demand.  Named views follow the block naming Phi_I{row}{col} over the
    inertial blocks (1=dtheta, 2=db_g, 3=dv, 4=db_a, 5=dp).
    """

    t1: float
    tk: float
    core: np.ndarray                 # (15, 15)
    layout: ErrorStateLayout

    def _view(self, r: int, c: int) -> np.ndarray:
        return self.core[3 * (r - 1):3 * r, 3 * (c - 1):3 * c]

    @property
    def phi_i11(self): return self._view(1, 1)

    @property
    def phi_i12(self): return self._view(1, 2)

    @property
    def phi_i31(self): return self._view(3, 1)

    @property
    def phi_i32(self): return self._view(3, 2)

    @property
    def phi_i34(self): return self._view(3, 4)

    @property
    def phi_i51(self): return self._view(5, 1)

    @property
    def phi_i52(self): return self._view(5, 2)

    @property
    def phi_i53(self): return self._view(5, 3)

    @property
    def phi_i54(self): return self._view(5, 4)

    @property
    def dt(self) -> float:
        return self.tk - self.t1

    def full(self) -> np.ndarray:
        m = np.eye(self.layout.dim)
        m[:15, :15] = self.core
        return m

    def compose(self, earlier: "TransitionMatrix") -> "TransitionMatrix":
        """Phi(tk, t1) from Phi(tk, tm) and Phi(tm, t1)."""
        if abs(earlier.tk - self.t1) > 1e-9:
            raise ValueError("intervals do not chain")
        return TransitionMatrix(earlier.t1, self.tk,
                                self.core @ earlier.core, self.layout)


def _kin_provider(spec: TrajectorySpec, gravity: np.ndarray) -> Callable:
    """Fast accessor t -> (R_GI, a_hat, omega) for building F(t).

    Straight-line profiles keep identity orientation and zero rate, which
    avoids the exponential-map work in the hot integration loop.
    """
    g = np.asarray(gravity, dtype=float)
    eye = np.eye(3)
    zero = np.zeros(3)
    if spec.is_straight_line:
        def provider(t: float):
            return eye, spec.acceleration(t) - g, zero
    else:
        def provider(t: float):
            kin = sample(spec, t)
            r_ig = kin.R_IG.matrix
            return r_ig.T, r_ig @ (kin.a - g), kin.omega
    return provider


def _f_matrix(provider, t: float) -> np.ndarray:
    r_gi, a_hat, omega = provider(t)
    f = np.zeros((15, 15))
    f[0:3, 0:3] = -skew(omega)
    f[0:3, 3:6] = -np.eye(3)
    f[6:9, 0:3] = -r_gi @ skew(a_hat)
    f[6:9, 9:12] = -r_gi
    f[12:15, 6:9] = np.eye(3)
    return f


def _rk4_advance(core: np.ndarray, provider, t: float, h: float,
                 f0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    fm = _f_matrix(provider, t + 0.5 * h)
    f1 = _f_matrix(provider, t + h)
    k1 = f0 @ core
    k2 = fm @ (core + 0.5 * h * k1)
    k3 = fm @ (core + 0.5 * h * k2)
    k4 = f1 @ (core + h * k3)
    return core + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4), f1


def compute_phi_sequence(spec: TrajectorySpec, times: Sequence[float],
                         layout: ErrorStateLayout | None = None,
                         gravity: np.ndarray = GRAVITY,
                         substep: float = 1e-3) -> list[TransitionMatrix]:
    """Phi(times[j], times[0]) for every j, by one incremental integration.

    The matrix ODE dPhi/dt = F(t) Phi is advanced with classical RK4 at
    ``substep`` resolution along the exact trajectory kinematics.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("need at least one timestamp")
    if np.any(np.diff(times) < 0):
        raise ValueError("timestamps must be monotone non-decreasing")
    layout = layout or ErrorStateLayout(0)
    provider = _kin_provider(spec, gravity)

    out = []
    core = np.eye(15)
    t = float(times[0])
    f_t = _f_matrix(provider, t)
    for target in times:
        target = float(target)
        while t < target - 1e-12:
            h = min(substep, target - t)
            core, f_t = _rk4_advance(core, provider, t, h, f_t)
            t += h
        out.append(TransitionMatrix(float(times[0]), target, core.copy(), layout))
    return out


def compute_phi(spec: TrajectorySpec, t1: float, tk: float,
                layout: ErrorStateLayout | None = None,
                gravity: np.ndarray = GRAVITY,
                substep: float = 1e-3) -> TransitionMatrix:
    """State transition matrix over [t1, tk] along the true kinematics."""
    if tk < t1:
        raise ValueError("tk must be >= t1")
    return compute_phi_sequence(spec, [t1, tk], layout, gravity, substep)[-1]


# ---------------------------------------------------------------------------
# observability rows


@dataclass(frozen=True)
class GammaBlocks:
    """Camera-row coefficient blocks at epoch k (all 3x3)."""

    gamma1: np.ndarray
    gamma2: np.ndarray
    gamma3: np.ndarray
    gamma4: np.ndarray
    dt: float


def compute_gamma(kin1: KinematicSample, kink: KinematicSample,
                  phi: TransitionMatrix, p_f: np.ndarray, r_ci: Rotation,
                  gravity: np.ndarray = GRAVITY) -> GammaBlocks:
    """Closed-form camera-row blocks for one (epoch, feature) pair.

    gamma1 couples the epoch-1 orientation error into the bearing through
    the gravity-compensated double integration of the tilt; its sign
    convention matches the physical accelerometer model (gravity vector
    pointing down enters with -1/2 g dt^2).
    """
    g = np.asarray(gravity, dtype=float)
    dt = phi.dt
    r_gi1 = kin1.R_IG.matrix.T
    r_gik = kink.R_IG.matrix.T
    lever_k = skew(p_f - kink.p)
    gamma1 = skew(p_f - kin1.p - kin1.v * dt - 0.5 * g * dt * dt) @ r_gi1
    gamma2 = lever_k @ r_gik @ phi.phi_i12 - phi.phi_i52
    gamma3 = -phi.phi_i54
    gamma4 = lever_k @ r_gik @ r_ci.matrix.T
    return GammaBlocks(gamma1, gamma2, gamma3, gamma4, dt)


def projection_rows(kin: KinematicSample, p_f: np.ndarray, r_ci: Rotation,
                    p_ci: np.ndarray) -> np.ndarray | None:
    """Xi_k: bearing Jacobian times the global-to-camera rotation (2x3).

    Returns None when the feature projects behind the camera.
    """
    pc = point_in_camera(np.asarray(p_f, dtype=float), kin, r_ci, p_ci)
    x, y, z = pc
    if z <= 1e-6:
        return None
    j = np.array([[1.0 / z, 0.0, -x / (z * z)],
                  [0.0, 1.0 / z, -y / (z * z)]])
    return j @ r_ci.matrix @ kin.R_IG.matrix


def build_pure_vio_rows(gammas: GammaBlocks, xi: np.ndarray | None,
                        layout: ErrorStateLayout,
                        feature_index: int) -> np.ndarray:
    """Camera observability rows Xi_k @ [G1, G2, -I dt, G3, -I, G4, .., I, ..].

    ``xi`` of None keeps the unprojected 3-row coefficient block.
    """
    block = np.zeros((3, layout.dim))
    block[:, 0:3] = gammas.gamma1
    block[:, 3:6] = gammas.gamma2
    block[:, 6:9] = -np.eye(3) * gammas.dt
    block[:, 9:12] = gammas.gamma3
    block[:, 12:15] = -np.eye(3)
    block[:, 15:18] = gammas.gamma4
    block[:, layout.feature(feature_index)] = np.eye(3)
    if xi is None:
        return block
    return xi @ block


def build_global_rows(phi: TransitionMatrix,
                      layout: ErrorStateLayout) -> tuple[np.ndarray, np.ndarray]:
    """Global-pose observability rows: (orientation rows, position rows).

    These are the dtheta and dp rows of Phi(k, 1), i.e. the pose
    measurement Jacobian times the transition matrix.
    """
    orient = np.zeros((3, layout.dim))
    orient[:, 0:3] = phi.phi_i11
    orient[:, 3:6] = phi.phi_i12
    pos = np.zeros((3, layout.dim))
    pos[:, 0:3] = phi.phi_i51
    pos[:, 3:6] = phi.phi_i52
    pos[:, 6:9] = phi.phi_i53
    pos[:, 9:12] = phi.phi_i54
    pos[:, 12:15] = np.eye(3)
    return orient, pos


# ---------------------------------------------------------------------------
# candidate directions


def candidate_n1(d: np.ndarray, r_ci: Rotation, r_gi: np.ndarray,
                 feature_positions: np.ndarray, p_i1: np.ndarray,
                 layout: ErrorStateLayout) -> np.ndarray:
    """Straight-line degeneracy direction tied to the motion axis d.

    Nonzero only in the extrinsic block (R_CI d) and, per feature,
    -skew(p_f - p_I1) R_GI d.  Requires unit d.
    """
    d = np.asarray(d, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("d must be a unit vector")
    feature_positions = np.atleast_2d(np.asarray(feature_positions, dtype=float))
    if feature_positions.shape[0] != layout.num_features:
        raise ValueError("feature count does not match layout")
    n = np.zeros(layout.dim)
    n[layout.block("extrinsic")] = r_ci.matrix @ d
    gd = np.asarray(r_gi, dtype=float) @ d
    for i in range(layout.num_features):
        n[layout.feature(i)] = -skew(feature_positions[i] - p_i1) @ gd
    return n


def candidate_n2(r_ig: np.ndarray, r_ci: Rotation,
                 gravity: np.ndarray, layout: ErrorStateLayout) -> np.ndarray:
    """Constant-velocity degeneracy directions (3 columns, all extrinsic DoF).

    Columns couple orientation, accelerometer bias and extrinsic errors:
    [R_IG; 0; 0; R_IG skew(g); 0; -R_CI R_IG; 0] with gravity g pointing
    down.  The accelerometer-bias block sign follows the physical
    measurement model used throughout the package.
    """
    r_ig = np.asarray(r_ig, dtype=float)
    g = np.asarray(gravity, dtype=float)
    cols = np.zeros((layout.dim, 3))
    cols[layout.block("theta")] = r_ig
    cols[layout.block("bias_accel")] = r_ig @ skew(g)
    cols[layout.block("extrinsic")] = -(r_ci.matrix @ r_ig)
    return cols


def gauge_directions(kin1: KinematicSample, feature_positions: np.ndarray,
                     gravity: np.ndarray, layout: ErrorStateLayout) -> np.ndarray:
    """The four global-gauge directions of pure VIO (dim x 4).

    Columns 0-2: rigid translation of trajectory and features.  Column 3:
    rigid rotation of the world about the gravity axis.
    """
    feature_positions = np.atleast_2d(np.asarray(feature_positions, dtype=float))
    g = np.asarray(gravity, dtype=float)
    cols = np.zeros((layout.dim, 4))
    cols[layout.block("position"), 0:3] = np.eye(3)
    for i in range(layout.num_features):
        cols[layout.feature(i), 0:3] = np.eye(3)
    cols[layout.block("theta"), 3] = kin1.R_IG.matrix @ g
    cols[layout.block("velocity"), 3] = skew(g) @ kin1.v
    cols[layout.block("position"), 3] = skew(g) @ kin1.p
    for i in range(layout.num_features):
        cols[layout.feature(i), 3] = skew(g) @ feature_positions[i]
    return cols


def classify_unobservable_dof(d: np.ndarray, r_ci: Rotation,
                              tol: float = 0.1):
    """Flag which extrinsic rotation axes are degenerate for motion axis d.

    Returns ``(flags, u)`` with ``u = R_CI d`` expressed in the camera
    frame and ``flags[i] = |u_i| > tol`` ordered (roll, pitch, yaw).  With
    ``tol < 1/sqrt(3)`` at least one axis is always flagged.
    """
    d = np.asarray(d, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("d must be a unit vector")
    if not 0.0 < tol < 1.0 / np.sqrt(3.0):
        raise ValueError("tol must lie in (0, 1/sqrt(3)) so the flags stay meaningful")
    u = r_ci.matrix @ d
    flags = tuple(bool(abs(ui) > tol) for ui in u)
    return flags, u


# ---------------------------------------------------------------------------
# stacked matrix and null-space analysis


@dataclass
class ObservabilityMatrix:
    """Stacked observability rows with per-block provenance.

    Raw rows mix magnitudes across five orders (double-integrated blocks
    grow like dt^2 and dt^3 over a 60 s horizon), which makes a fixed
    relative singular-value cutoff meaningless.  ``balance`` therefore
    equilibrates the stack with diagonal scalings: columns to unit norm,
    then rows to unit norm.  Diagonal scalings change neither the null
    space nor the rank, only the conditioning; null vectors of the
    balanced matrix map back through the stored column scale.
    """

    layout: ErrorStateLayout
    feature_positions: np.ndarray
    times: np.ndarray
    mode: str
    form: str
    kin1: KinematicSample
    balance: bool = True
    _blocks: list = field(default_factory=list)
    _prov: list = field(default_factory=list)
    _cache: np.ndarray | None = None
    _col_scale: np.ndarray | None = None

    def add_block(self, rows: np.ndarray, k: int, source: str,
                  feature_id: int | None = None):
        if rows.shape[1] != self.layout.dim:
            raise ValueError("row block width does not match layout")
        self._blocks.append(np.atleast_2d(rows))
        self._prov.append((k, source, feature_id, rows.shape[0]))
        self._cache = None

    @property
    def provenance(self) -> list:
        return list(self._prov)

    def _assemble(self):
        if not self._blocks:
            raise ValueError("empty observability matrix")
        m = np.vstack(self._blocks)
        if self.balance:
            col = np.linalg.norm(m, axis=0)
            col_scale = 1.0 / np.maximum(col, 1e-300)
            m = m * col_scale[None, :]
            row = np.linalg.norm(m, axis=1, keepdims=True)
            m = m / np.maximum(row, 1e-300)
        else:
            col_scale = np.ones(m.shape[1])
        self._cache = m
        self._col_scale = col_scale

    @property
    def matrix(self) -> np.ndarray:
        """The balanced stack used for all numerical analysis."""
        if self._cache is None:
            self._assemble()
        return self._cache

    @property
    def column_scale(self) -> np.ndarray:
        """Diagonal D_c with matrix = D_r @ raw @ D_c."""
        if self._col_scale is None:
            self._assemble()
        return self._col_scale

    @property
    def raw_matrix(self) -> np.ndarray:
        return np.vstack(self._blocks)

    @property
    def num_rows(self) -> int:
        return sum(b.shape[0] for b in self._blocks)

    def map_candidate(self, v: np.ndarray) -> np.ndarray:
        """Express an error-state direction in balanced column coordinates."""
        v = np.asarray(v, dtype=float)
        return (v.T / self.column_scale).T


def default_tol_policy(sigma_max: float, shape: tuple) -> float:
    """Singular values below sigma_max * max(shape) * 1e-10 count as zero."""
    return sigma_max * max(shape) * 1e-10


@dataclass
class NullSpaceReport:
    dim: int
    num_rows: int
    rank: int
    singular_values: np.ndarray
    null_basis: np.ndarray            # (dim, null_dim), orthonormal
    ext_projection: np.ndarray        # (3, null_dim)
    ext_null_dim: int
    rank_threshold: float
    candidate_residuals: dict

    @property
    def null_dim(self) -> int:
        return self.null_basis.shape[1]

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "num_rows": self.num_rows,
            "rank": self.rank,
            "null_dim": self.null_dim,
            "ext_null_dim": self.ext_null_dim,
            "rank_threshold": self.rank_threshold,
            "singular_values": [float(s) for s in self.singular_values],
            "candidate_residuals": {
                k: [float(x) for x in np.atleast_1d(v)]
                for k, v in self.candidate_residuals.items()
            },
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), **kwargs)


def candidate_residual(m: np.ndarray, v: np.ndarray,
                       sigma_max: float | None = None) -> np.ndarray:
    """Per-column relative residual ||M v|| / (||M||_2 ||v||)."""
    v = np.atleast_2d(np.asarray(v, dtype=float).T).T  # (dim, c)
    if sigma_max is None:
        sigma_max = np.linalg.norm(m, 2)
    num = np.linalg.norm(m @ v, axis=0)
    den = sigma_max * np.linalg.norm(v, axis=0)
    return num / np.maximum(den, 1e-300)


def null_space(obs: ObservabilityMatrix,
               tol_policy: Callable = default_tol_policy,
               candidates: dict | None = None,
               ext_tol: float = 1e-8) -> NullSpaceReport:
    """SVD-based rank/null analysis of a stacked observability matrix.

    Rank is decided on the balanced stack; the null basis is mapped back
    to error-state coordinates and re-orthonormalized there, and the
    unobservable-extrinsic-DoF count is the rank of its projection onto
    the extrinsic-rotation block.  Candidate directions are scored in
    balanced coordinates so one tolerance applies across all row blocks.
    """
    m = obs.matrix
    full = m.shape[0] < m.shape[1]   # economy SVD already spans the null space when rows >= cols
    _, s, vt = np.linalg.svd(m, full_matrices=full)
    sigma_max = float(s[0]) if s.size else 0.0
    threshold = tol_policy(sigma_max, m.shape)
    rank = int(np.sum(s > threshold))
    basis = obs.column_scale[:, None] * vt[rank:].T
    if basis.shape[1]:
        basis, _ = np.linalg.qr(basis)
    ext = basis[obs.layout.block("extrinsic"), :]
    if ext.size:
        ext_s = np.linalg.svd(ext, compute_uv=False)
        ext_dim = int(np.sum(ext_s > ext_tol))
    else:
        ext_dim = 0
    residuals = {}
    for name, cand in (candidates or {}).items():
        residuals[name] = candidate_residual(m, obs.map_candidate(cand), sigma_max)
    return NullSpaceReport(
        dim=obs.layout.dim,
        num_rows=m.shape[0],
        rank=rank,
        singular_values=s,
        null_basis=basis,
        ext_projection=ext,
        ext_null_dim=ext_dim,
        rank_threshold=threshold,
        candidate_residuals=residuals,
    )


# ---------------------------------------------------------------------------
# high-level assembly


def build_observability_stack(spec: TrajectorySpec,
                              features,
                              r_ci: Rotation,
                              p_ci: np.ndarray,
                              times: Sequence[float],
                              mode: str = "pure",
                              form: str = "gamma",
                              gravity: np.ndarray = GRAVITY,
                              camera: CameraModel | None = None,
                              balance: bool = True,
                              substep: float = 1e-3,
                              phi_seq: list[TransitionMatrix] | None = None,
                              min_views: int = 2) -> ObservabilityMatrix:
    """Assemble the stacked observability matrix over keyframe ``times``.

    ``features`` is a FeatureMap or an (F, 3) array of global positions.
    ``form`` chooses between the closed-form coefficient rows ("gamma")
    and the measurement-Jacobian chain H_k @ Phi(k, 1) ("jacobian"); the
    two must agree on the extrinsic null structure.  Features visible from
    fewer than ``min_views`` epochs are excluded so they cannot inject
    spurious depth-type null directions.
    """
    if mode not in ("pure", "global"):
        raise ValueError(f"unknown mode {mode!r}")
    if form not in ("gamma", "jacobian"):
        raise ValueError(f"unknown form {form!r}")
    if isinstance(features, FeatureMap):
        positions = features.positions
        camera = camera or features.envelope.camera
    else:
        positions = np.atleast_2d(np.asarray(features, dtype=float))
        camera = camera or CameraModel()
    times = np.asarray(times, dtype=float)
    kins = [sample(spec, float(t)) for t in times]

    # visibility table gates both row emission and feature inclusion
    vis = np.zeros((len(times), positions.shape[0]), dtype=bool)
    for k, kin in enumerate(kins):
        for f in range(positions.shape[0]):
            vis[k, f] = camera.in_view(point_in_camera(positions[f], kin, r_ci, p_ci))
    keep = np.flatnonzero(vis.sum(axis=0) >= min_views)
    positions = positions[keep]
    vis = vis[:, keep]

    layout = ErrorStateLayout(positions.shape[0])
    if phi_seq is None:
        phi_seq = compute_phi_sequence(spec, times, layout, gravity, substep)

    if form == "jacobian":
        from .estimator import camera_jacobian   # deferred: estimator imports this module

    obs = ObservabilityMatrix(layout=layout, feature_positions=positions,
                              times=times, mode=mode, form=form,
                              kin1=kins[0], balance=balance)
    for k, kin in enumerate(kins):
        phi = TransitionMatrix(phi_seq[k].t1, phi_seq[k].tk,
                               phi_seq[k].core, layout)
        if form == "jacobian":
            phi_full = phi.full()
        for f in range(positions.shape[0]):
            if not vis[k, f]:
                continue
            if form == "gamma":
                gam = compute_gamma(kins[0], kin, phi, positions[f], r_ci, gravity)
                xi = projection_rows(kin, positions[f], r_ci, p_ci)
                if xi is None:
                    continue
                rows = build_pure_vio_rows(gam, xi, layout, f)
            else:
                h = camera_jacobian(kin.R_IG, kin.p, r_ci, p_ci,
                                    positions[f], layout, f)
                if h is None:
                    continue
                rows = h @ phi_full
            obs.add_block(rows, k, "camera-feature", f)
        if mode == "global":
            orient, pos = build_global_rows(phi, layout)
            obs.add_block(orient, k, "global-orientation")
            obs.add_block(pos, k, "global-position")
    return obs
