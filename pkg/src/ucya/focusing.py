"""Unitary focusing matrices that align every subcarrier's array manifold
with the manifold at the reference subcarrier (orthogonal Procrustes)."""
from dataclasses import dataclass

import numpy as np

from .array import sweep_phase, vertical_steering
from .beamspace import bessel_j, mode_orders, ring_argument
from .tensor import RANK_RTOL

DEFAULT_N_B = 16


def theta_grid(m_b, n_b, n_beams, window="interval"):
    """Elevation fitting grid for zero-based sweep beam `m_b`.

    ``window="interval"`` samples the nominal interval,
    ``theta_j = pi m_b / M_b + pi j / (M_b N_b)`` for ``j = 0..N_b-1``.
    ``window="capture"`` spreads `n_b` points evenly over the widened
    window the beam actually captures, clipped to ``[0, pi]``.
    """
    width = np.pi / n_beams
    if window == "interval":
        return m_b * width + width * np.arange(n_b) / n_b
    if window == "capture":
        lo = max(m_b * width - width / 2, 0.0)
        hi = min((m_b + 1) * width + width / 2, np.pi)
        return np.linspace(lo, hi, n_b)
    raise ValueError(f"unknown grid window {window!r}")


def build_g_h(f, p_max, geo, grid):
    """``(2P+1) x N_b`` Bessel matrix ``[J_p(gamma_f(theta_j))]``.

    Only the elevation enters; azimuth is absent from the horizontal manifold
    magnitudes.
    """
    gamma = ring_argument(np.asarray(grid), f, geo)
    return bessel_j(mode_orders(p_max)[:, None], gamma[None, :])


def build_g_v(f, geo, grid, weights=None):
    """``M_v x N_b`` matrix of vertical steering columns at frequency `f`.

    `weights`, if given, is the diagonal of a digital weight matrix ``W``
    and the columns become ``W^H a_v``.
    """
    g = np.stack([vertical_steering(t, f, geo) for t in grid], axis=1)
    if weights is not None:
        g = np.asarray(weights).conj()[:, None] * g
    return g


def solve_focusing(g, g0, rtol=RANK_RTOL):
    """Unitary ``T`` minimizing ``||T g - g0||_F``.

    ``T = V U^H`` from the SVD ``g g0^H = U S V^H``. When ``g g0^H`` is rank
    deficient, the null-space part is chosen as the unitary map between the
    two null spaces closest to the identity, which makes the result
    independent of the SVD's basis choice.
    """
    g = np.asarray(g)
    g0 = np.asarray(g0)
    if g.shape != g0.shape:
        raise ValueError(f"shape mismatch {g.shape} vs {g0.shape}")
    m = g @ g0.conj().T
    u, s, vh = np.linalg.svd(m)
    if s[0] == 0:
        raise ValueError("g g0^H is identically zero")
    v = vh.conj().T
    r = int(np.sum(s > rtol * s[0]))
    t = v[:, :r] @ u[:, :r].conj().T
    if r < m.shape[0]:
        un = u[:, r:]
        vn = v[:, r:]
        a, _, bh = np.linalg.svd(un.conj().T @ vn)
        w = bh.conj().T @ a.conj().T
        t = t + vn @ w @ un.conj().T
    return t


def reference_index(cfg):
    return cfg.reference_index


@dataclass(frozen=True)
class FocusingSet:
    """Focusing matrices per (subcarrier, sweep beam).

    Attributes
    ----------
    t_v : ndarray, shape ``(M_f, M_b, M_v, M_v)``
    t_h : ndarray, shape ``(M_f, M_b, 2P+1, 2P+1)``
    n_b : int
    f0_index : int
    """

    t_v: np.ndarray
    t_h: np.ndarray
    n_b: int
    f0_index: int

    def max_unitarity_error(self):
        errs = []
        for t in (self.t_v, self.t_h):
            eye = np.eye(t.shape[-1])
            gram = np.einsum("...ji,...jk->...ik", t.conj(), t)
            errs.append(np.linalg.norm(gram - eye, axis=(-2, -1)).max())
        return float(max(errs))


def design_focusing(cfg, geo, bf, n_b=DEFAULT_N_B, vertical=True, horizontal=False,
                    window="interval"):
    """Solve every focusing problem for the given configuration.

    The vertical target is the reference-subcarrier steering matrix; the data
    it acts on has already had its digital weights removed, so the weights do
    not enter ``G_v``. The horizontal problem fits the Bessel matrices. A
    disabled direction gets identity matrices.
    """
    freqs = cfg.frequencies
    i0 = cfg.reference_index
    m_hd = bf.m_hd
    t_v = np.broadcast_to(np.eye(geo.m_v, dtype=complex),
                          (cfg.m_f, cfg.m_b, geo.m_v, geo.m_v)).copy()
    t_h = np.broadcast_to(np.eye(m_hd, dtype=complex),
                          (cfg.m_f, cfg.m_b, m_hd, m_hd)).copy()
    for mb in range(cfg.m_b):
        grid = theta_grid(mb, n_b, cfg.m_b, window)
        gv0 = build_g_v(freqs[i0], geo, grid)
        gh0 = build_g_h(freqs[i0], bf.p_max, geo, grid)
        for mf, f in enumerate(freqs):
            if mf == i0:
                continue
            if vertical:
                t_v[mf, mb] = solve_focusing(build_g_v(f, geo, grid), gv0)
            if horizontal:
                t_h[mf, mb] = solve_focusing(build_g_h(f, bf.p_max, geo, grid), gh0)
    return FocusingSet(t_v=t_v, t_h=t_h, n_b=n_b, f0_index=i0)


def apply_focusing(x, focusing, bf, cfg):
    """Remove digital weights and sweep phases, then focus.

    Parameters
    ----------
    x : ndarray, shape ``(M_b, M_vd, M_hd, M_f, M_t)``
        Per-beam received tensors.

    Returns
    -------
    ndarray of the same shape.
    """
    x = np.asarray(x)
    n_b, m_vd, m_hd, m_f, _ = x.shape
    if (n_b, m_f) != (cfg.m_b, cfg.m_f) or (m_vd, m_hd) != (bf.m_vd, bf.m_hd):
        raise ValueError(f"tensor shape {x.shape} does not match configuration")
    freqs = cfg.frequencies
    out = np.empty_like(x, dtype=complex)
    for mb in range(n_b):
        for mf, f in enumerate(freqs):
            tv = focusing.t_v[mf, mb] * bf.vertical_offset(mf, mb)[None, :]
            th = focusing.t_h[mf, mb] * bf.horizontal_offset(mf, mb)[None, :]
            s = x[mb, :, :, mf, :]
            undo_sweep = np.conj(sweep_phase(f, mb, cfg.sweep_interval_s))
            out[mb, :, :, mf, :] = undo_sweep * np.einsum("ij,jkt,lk->ilt", tv, s, th)
    return out
