"""Tensor subspace estimation of elevation, delay and azimuth.

The pipeline sums the focused per-beam tensors, optionally smooths them
to decorrelate coherent paths, extracts a truncated-HOSVD signal subspace,
solves the two shift-invariance equations by TLS-ESPRIT (layers give the
elevation, subcarriers the delay), pairs the eigenvalues through shared
eigenvectors and finally scans a MUSIC spectrum over azimuth.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .array import SPEED_OF_LIGHT, horizontal_steering
from .beamspace import qdft_matrix
from .tensor import truncated_hosvd, unfold

PAIRING_COND_LIMIT = 1e8
MANIFOLD_TOL = 1e-6
DEFAULT_GRID = 360


class EstimationError(RuntimeError):
    """Raised when a step of the estimator cannot produce a result."""


def assemble(beams):
    """Sum the focused per-beam tensors over the sweep axis.

    Parameters
    ----------
    beams : ndarray of shape ``(M_b, M_vd, M_hd, M_f, M_t)`` or a sequence
        of equally shaped order-4 tensors.
    """
    if isinstance(beams, np.ndarray):
        if beams.ndim != 5:
            raise ValueError("expected an order-5 stack of per-beam tensors")
        return beams.sum(axis=0)
    beams = list(beams)
    if not beams:
        raise ValueError("no beams to assemble")
    shape = np.shape(beams[0])
    for b in beams[1:]:
        if np.shape(b) != shape:
            raise ValueError(f"beam shape {np.shape(b)} != {shape}")
    return np.sum(beams, axis=0)


@dataclass(frozen=True)
class SmoothingPlan:
    """Subarray counts along the layers (`n_v`), the virtual horizontal
    subarrays built from shifted layers (`n_h`) and the subcarriers (`n_f`)."""

    n_v: int = 1
    n_h: int = 1
    n_f: int = 1

    def __post_init__(self):
        if min(self.n_v, self.n_h, self.n_f) < 1:
            raise ValueError("subarray counts must be positive")

    @property
    def n_subarrays(self):
        return self.n_v * self.n_h * self.n_f

    def smoothed_layers(self, m_vd):
        return m_vd - self.n_v - self.n_h + 2

    def smoothed_subcarriers(self, m_f):
        return m_f - self.n_f + 1

    def check(self, shape, k=None):
        m_vd, m_hd, m_f, _ = shape
        mv = self.smoothed_layers(m_vd)
        mf = self.smoothed_subcarriers(m_f)
        need = 2 if k is None else k + 1
        if mv < need or mf < need:
            raise ValueError(
                f"plan {self} leaves {mv} layers and {mf} subcarriers; need >= {need}"
            )
        if k is not None and self.n_h > 1 and (self.n_h < k or m_hd < k):
            raise ValueError("horizontal smoothing needs n_h >= K and M_hd >= K")


def default_plan(k, coherent):
    """``(1, K, 1)`` when some paths are coherent, no smoothing otherwise."""
    return SmoothingPlan(1, k, 1) if coherent else SmoothingPlan()


def spatial_smooth(y, plan):
    """Concatenate shifted subtensors along the time mode.

    Subtensor ``(n_v, n_h, n_f)`` keeps layers starting at ``n_v + n_h - 2``
    and subcarriers starting at ``n_f - 1`` (zero-based). The loop order is
    `n_v` outermost and `n_f` innermost.
    """
    y = np.asarray(y)
    plan.check(y.shape)
    mv = plan.smoothed_layers(y.shape[0])
    mf = plan.smoothed_subcarriers(y.shape[2])
    parts = []
    for nv in range(plan.n_v):
        for nh in range(plan.n_h):
            start = nv + nh
            for nf in range(plan.n_f):
                parts.append(y[start:start + mv, :, nf:nf + mf, :])
    return np.concatenate(parts, axis=3)


@dataclass(frozen=True)
class SubspaceModel:
    """Signal subspace tensor and the pieces MUSIC needs.

    Attributes
    ----------
    u_s : ndarray, shape ``(M_v', M_hd, M_f', K)``
    factors : tuple of the four retained factor matrices
    horizontal_noise : ndarray, shape ``(M_hd, M_hd - K)``
        Orthonormal complement of the mode-2 signal subspace.
    mode_singular_values : tuple of arrays
    """

    u_s: np.ndarray
    factors: tuple
    horizontal_noise: np.ndarray
    mode_singular_values: tuple


def _complement(u):
    q, _ = np.linalg.qr(u, mode="complete")
    return q[:, u.shape[1]:]


def signal_subspace(y_ss, k, method="gram"):
    """Truncated-HOSVD signal subspace of rank `k` in every mode.

    ``u_s = core x_1 U_v x_2 U_h x_3 U_f``, i.e. the data projected on the
    three spatial/frequency subspaces and compressed to `k` columns in time.
    `method` selects how the factors are computed (see ``truncated_hosvd``).
    """
    y_ss = np.asarray(y_ss)
    if k < 1:
        raise ValueError("K must be at least 1")
    if any(k >= e for e in y_ss.shape[:3]) or k > y_ss.shape[3]:
        raise ValueError(f"K={k} too large for a tensor of shape {y_ss.shape}")
    model = truncated_hosvd(y_ss, (k, k, k, k), method)
    u_s = model.core
    for n in range(3):
        u_s = np.moveaxis(np.tensordot(model.factors[n], u_s, axes=(1, n)), 0, n)
    return SubspaceModel(
        u_s=u_s,
        factors=model.factors,
        horizontal_noise=_complement(model.factors[1]),
        mode_singular_values=model.mode_singular_values,
    )


def matrix_subspace(y_ss, k):
    """Matrix baseline: subspace from the SVD of the time-mode unfolding only."""
    y_ss = np.asarray(y_ss)
    if k < 1 or any(k >= e for e in y_ss.shape[:3]) or k > y_ss.shape[3]:
        raise ValueError(f"K={k} too large for a tensor of shape {y_ss.shape}")
    y4 = unfold(y_ss, 3)
    u, s, _ = np.linalg.svd(y4, full_matrices=False)
    u_t = u[:, :k]
    u_s = np.moveaxis(np.tensordot(u_t.conj().T, y_ss, axes=(1, 3)), 0, 3)
    uh, _, _ = np.linalg.svd(unfold(u_s, 1), full_matrices=True)
    return SubspaceModel(
        u_s=u_s,
        factors=(None, uh[:, :k], None, u_t),
        horizontal_noise=uh[:, k:],
        mode_singular_values=(None, None, None, s),
    )


def _selected_unfoldings(u_s, mode):
    if u_s.shape[mode] < 2:
        raise ValueError(f"mode {mode} needs at least two entries for a shift")
    first = np.take(u_s, np.arange(u_s.shape[mode] - 1), axis=mode)
    second = np.take(u_s, np.arange(1, u_s.shape[mode]), axis=mode)
    return unfold(first, 3).T, unfold(second, 3).T


def tls_shift_invariance(u_s, mode, method="tls"):
    """Solve ``u_s[1:] = u_s[:-1] x_4 Psi`` along `mode` (0 or 2).

    Parameters
    ----------
    u_s : ndarray, order 4 with ``K`` columns in the last mode
    mode : int
        0 for the layer shift, 2 for the subcarrier shift.
    method : {"tls", "ls"}

    Returns
    -------
    psi : ndarray, shape ``(K, K)``
        Its eigenvalues are the per-path shift phases.
    """
    if mode not in (0, 2):
        raise ValueError("shift invariance is defined for modes 0 and 2")
    k = u_s.shape[3]
    e1, e2 = _selected_unfoldings(u_s, mode)
    if method == "ls":
        return (np.linalg.pinv(e1) @ e2).T
    if method != "tls":
        raise ValueError(f"unknown method {method!r}")
    w = np.hstack([e1, e2])
    _, v = np.linalg.eigh(w.conj().T @ w)
    v = v[:, ::-1]
    v12 = v[:k, k:]
    v22 = v[k:, k:]
    if np.linalg.cond(v22) > 1 / np.finfo(float).eps:
        raise EstimationError("singular TLS block: paths share a shift phase")
    return (-v12 @ np.linalg.inv(v22)).T


def elevation_from_eig(lam, f_ref, spacing_m):
    """Elevation from a layer-shift eigenvalue.

    Returns
    -------
    theta : float
    clamped : bool
        True when the cosine fell slightly outside ``[-1, 1]`` and was clipped.
    """
    arg = (1j * SPEED_OF_LIGHT * np.log(complex(lam)) / (2 * np.pi * f_ref * spacing_m)).real
    if abs(arg) > 1 + MANIFOLD_TOL:
        raise EstimationError(f"cos(theta) = {arg:.6g} is off the array manifold")
    clamped = abs(arg) > 1
    return float(np.arccos(np.clip(arg, -1.0, 1.0))), bool(clamped)


def delay_from_eig(lam, delta_f):
    """Delay in ``[0, 1/delta_f)`` from a subcarrier-shift eigenvalue."""
    tau = -np.angle(lam) / (2 * np.pi * delta_f)
    return float(np.mod(tau, 1.0 / delta_f))


def pair_parameters(psi_v, psi_f, return_vectors=False):
    """Pair the eigenvalues of two matrices that share eigenvectors.

    Returns
    -------
    lam_v, lam_f : ndarray, shape ``(K,)``
    method : str
        ``"shared"`` or ``"matched"`` when the eigenvector matrix was too
        ill-conditioned and eigenvectors were matched by correlation.
    e : ndarray, shape ``(K, K)``
        Eigenvectors of `psi_v`, column ``k`` for ``lam_v[k]``. Only
        returned with ``return_vectors=True``.
    """
    lam_v, e = np.linalg.eig(psi_v)
    if np.linalg.cond(e) <= PAIRING_COND_LIMIT:
        lam_f = np.diag(np.linalg.solve(e, psi_f @ e))
        method = "shared"
    else:
        warnings.warn("eigenvector matrix is ill-conditioned; pairing by correlation")
        lam_f_raw, e_f = np.linalg.eig(psi_f)
        en = e / np.linalg.norm(e, axis=0)
        efn = e_f / np.linalg.norm(e_f, axis=0)
        rows, cols = linear_sum_assignment(-np.abs(en.conj().T @ efn))
        lam_f = np.empty_like(lam_f_raw)
        lam_f[rows] = lam_f_raw[cols]
        method = "matched"
    if return_vectors:
        return lam_v, lam_f, method, e
    return lam_v, lam_f, method


def path_responses(u_s, e):
    """Per-path horizontal beamspace responses implied by the subspace.

    With ``Psi_v = E Lambda E^-1`` the columns of ``U_s(4)^T E^-T`` are the
    vectorized steering tensors of the individual paths, up to scale. The
    leading mode-2 singular vector of each is returned as a row.
    """
    m_v, m_h, m_f, k = u_s.shape
    cols = unfold(u_s, 3).T @ np.linalg.inv(e).T
    out = np.empty((k, m_h), dtype=complex)
    for i in range(k):
        t = cols[:, i].reshape(m_v, m_h, m_f)
        u, _, _ = np.linalg.svd(unfold(t, 1), full_matrices=False)
        out[i] = u[:, 0]
    return out


def azimuth_grid(n_grid):
    return 2 * np.pi * np.arange(n_grid) / n_grid


def horizontal_manifold(theta, phis, f, geo, p_max):
    """Unit-norm beamspace steering columns ``B^H a_h(theta, phi, f)``."""
    b = qdft_matrix(geo.m_h, p_max)
    a = horizontal_steering(theta, np.asarray(phis)[:, None], f, geo).T
    s = b.conj().T @ a
    return s / np.linalg.norm(s, axis=0)


def music_spectrum(noise, theta, f, geo, p_max, n_grid=DEFAULT_GRID):
    """``1 / ||U_n^H a(phi)||^2`` over a uniform azimuth grid."""
    phis = azimuth_grid(n_grid)
    return phis, _spectrum(noise, horizontal_manifold(theta, phis, f, geo, p_max))


def _spectrum(noise, a):
    proj = np.sum(np.abs(noise.conj().T @ a) ** 2, axis=0)
    return 1.0 / np.maximum(proj, np.finfo(float).tiny)


def _parabolic_offset(s, i):
    n = len(s)
    y0, y1, y2 = np.log(s[(i - 1) % n]), np.log(s[i]), np.log(s[(i + 1) % n])
    den = y0 - 2 * y1 + y2
    if den >= 0:
        return 0.0
    return 0.5 * (y0 - y2) / den


def _local_maxima(s):
    return np.flatnonzero((s > np.roll(s, 1)) & (s > np.roll(s, -1)))


def music_azimuth(noise, thetas, f, geo, p_max, n_grid=DEFAULT_GRID, refine=False, guides=None):
    """Azimuth of each path from the MUSIC spectrum at its elevation.

    Without `guides` the global maximum is taken. Paths whose elevations
    have nearly equal ``sin(theta)`` see the same spectrum, with a peak at
    each of their azimuths; `guides` (one beamspace response per path, as
    returned by ``path_responses``) then picks, among the local maxima, the
    one whose steering column best matches the path's own response.

    Returns
    -------
    phis : ndarray, shape ``(K,)``
    peaks : ndarray, shape ``(K,)``
    """
    if n_grid < 64:
        raise ValueError("azimuth grid needs at least 64 points")
    step = 2 * np.pi / n_grid
    grid = azimuth_grid(n_grid)
    phis = np.empty(len(thetas))
    peaks = np.empty(len(thetas))
    for k, th in enumerate(thetas):
        a = horizontal_manifold(th, grid, f, geo, p_max)
        sp = _spectrum(noise, a)
        maxima = _local_maxima(sp)
        if len(maxima) == 0:
            warnings.warn(f"MUSIC spectrum for path {k} has no resolved peak")
            i = int(np.argmax(sp))
        elif guides is None or len(maxima) == 1:
            i = int(maxima[np.argmax(sp[maxima])])
        else:
            i = int(maxima[np.argmax(np.abs(guides[k].conj() @ a[:, maxima]))])
        offset = _parabolic_offset(sp, i) if refine else 0.0
        phis[k] = np.mod(grid[i] + offset * step, 2 * np.pi)
        peaks[k] = sp[i]
    return phis, peaks


@dataclass(frozen=True)
class EstimationResult:
    elevations: np.ndarray
    delays: np.ndarray
    azimuths: np.ndarray
    eig_v: np.ndarray
    eig_f: np.ndarray
    music_peaks: np.ndarray
    singular_values: tuple
    clamped: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))
    pairing: str = "shared"

    @property
    def k(self):
        return len(self.elevations)

    @property
    def eigenvalue_moduli(self):
        return np.abs(np.concatenate([self.eig_v, self.eig_f]))


def estimate(y, k, cfg, geo, p_max, plan=None, n_grid=DEFAULT_GRID, method="tls",
             subspace="tensor", refine=False, peak_select="steering"):
    """Elevation, delay and azimuth of `k` paths from the measurement tensor.

    Parameters
    ----------
    y : ndarray, shape ``(M_vd, M_hd, M_f, M_t)``
        Focused and assembled measurements.
    k : int
    cfg : SystemConfig
    geo : UCyAGeometry
    p_max : int
    plan : SmoothingPlan, optional
        No smoothing by default.
    n_grid : int
        Azimuth grid size.
    method : {"tls", "ls"}
    subspace : {"tensor", "matrix"}
        ``"matrix"`` keeps only the time-mode SVD.
    refine : bool
        Parabolic interpolation of the MUSIC peak.
    peak_select : {"steering", "max"}
        How a MUSIC peak is chosen for each path: the local maximum that
        best matches the path's own response from the subspace, or the
        global maximum.
    """
    y = np.asarray(y)
    if k < 1:
        raise ValueError("K must be at least 1")
    if y.ndim != 4 or y.shape[1] != 2 * p_max + 1 or y.shape[2] != cfg.m_f:
        raise ValueError(f"measurement shape {y.shape} does not match the configuration")
    if not np.all(np.isfinite(y)):
        raise ValueError("measurement tensor has non-finite entries")
    plan = plan or SmoothingPlan()
    plan.check(y.shape, k)
    y_ss = spatial_smooth(y, plan)
    if subspace == "tensor":
        model = signal_subspace(y_ss, k)
    elif subspace == "matrix":
        model = matrix_subspace(y_ss, k)
    else:
        raise ValueError(f"unknown subspace {subspace!r}")
    if peak_select not in ("steering", "max"):
        raise ValueError(f"unknown peak selection {peak_select!r}")
    psi_v = tls_shift_invariance(model.u_s, 0, method)
    psi_f = tls_shift_invariance(model.u_s, 2, method)
    lam_v, lam_f, pairing, e = pair_parameters(psi_v, psi_f, return_vectors=True)
    f_ref = cfg.frequencies[cfg.reference_index]
    el = [elevation_from_eig(lv, f_ref, geo.layer_spacing_m) for lv in lam_v]
    thetas = np.array([e[0] for e in el])
    clamped = np.array([e[1] for e in el])
    delays = np.array([delay_from_eig(lf, cfg.subcarrier_spacing_hz) for lf in lam_f])
    guides = path_responses(model.u_s, e) if peak_select == "steering" else None
    phis, peaks = music_azimuth(model.horizontal_noise, thetas, f_ref, geo, p_max,
                                n_grid, refine, guides)
    return EstimationResult(
        elevations=thetas, delays=delays, azimuths=phis, eig_v=lam_v, eig_f=lam_f,
        music_peaks=peaks, singular_values=model.mode_singular_values,
        clamped=clamped, pairing=pairing,
    )
