"""Q-DFT hybrid beamformer for a UCyA.

Each ring of ``M_h`` elements is combined by ``2P+1`` DFT phase modes; the
layers pass through unchanged (``B_vab = I``), so ``M_v (2P+1)`` RF chains
remain. Digital weights are diagonal per (subcarrier, sweep beam).
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import jv

from .array import SPEED_OF_LIGHT, horizontal_steering, vertical_steering


def bessel_j(p, x):
    """Bessel function of the first kind ``J_p(x)`` for integer `p`."""
    p = np.asarray(p)
    if not np.issubdtype(p.dtype, np.integer):
        if not np.all(p == np.round(p)):
            raise ValueError("Bessel order must be an integer")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("Bessel argument must be finite")
    return jv(p, x)


def ring_argument(theta, f, geo):
    """``gamma = 2 pi f r sin(theta) / c``."""
    return 2 * np.pi * f * geo.radius_m * np.sin(theta) / SPEED_OF_LIGHT


def default_p_max(geo, f_hz):
    """Truncation order ``floor(2 pi f r / c)``."""
    return int(np.floor(2 * np.pi * f_hz * geo.radius_m / SPEED_OF_LIGHT))


def mode_orders(p_max):
    return np.arange(-p_max, p_max + 1)


def qdft_matrix(m_h, p_max):
    """``M_h x (2P+1)`` matrix with entries ``exp(-j 2 pi m p / M_h)``.

    Column ``p + P`` holds phase mode ``p`` for ``p = -P..P``.
    """
    if p_max < 0:
        raise ValueError("p_max must be nonnegative")
    if m_h < 2 * p_max + 1:
        raise ValueError(f"M_h={m_h} < 2P+1={2 * p_max + 1}: DFT bins alias")
    m = np.arange(m_h)[:, None]
    p = mode_orders(p_max)[None, :]
    return np.exp(-2j * np.pi * m * p / m_h)


def beamspace_response(theta, phi, f, geo, p_max):
    """Bessel approximation of ``qdft_matrix^H @ horizontal_steering``.

    Entry ``p + P`` is ``sqrt(M_h) j^p J_p(gamma) exp(+j p phi)``. The phase
    sign follows from expanding the steering vector with the Jacobi-Anger
    identity and projecting on the conjugated DFT column.
    """
    if geo.m_h < geo.min_ring_size(f):
        raise ValueError(
            f"M_h={geo.m_h} below the Q-DFT bound {geo.min_ring_size(f)} at f={f}"
        )
    p = mode_orders(p_max)
    gamma = ring_argument(theta, f, geo)
    return np.sqrt(geo.m_h) * (1j ** p) * bessel_j(p, gamma) * np.exp(1j * p * phi)


def jacobi_anger_response(theta, phi, f, geo, p_max, q_max=None):
    """Exact ``B^H a_h`` as an aliased Jacobi-Anger series.

    Returns the main term and the aliasing residual separately, both of
    length ``2P+1``. The sum of the two equals the exact product up to the
    series truncation at ``|q| <= q_max`` (default ``8 M_h``).
    """
    m_h = geo.m_h
    if q_max is None:
        q_max = 8 * m_h
    gamma = ring_argument(theta, f, geo)
    main = np.zeros(2 * p_max + 1, dtype=complex)
    residual = np.zeros(2 * p_max + 1, dtype=complex)
    for i, p in enumerate(mode_orders(p_max)):
        # orders q that land on bin p after sampling the ring at M_h points
        for q in range(p - (q_max // m_h + 1) * m_h, q_max + 1, m_h):
            if abs(q) > q_max:
                continue
            term = np.sqrt(m_h) * (1j ** (q % 4)) * bessel_j(q, gamma) * np.exp(1j * q * phi)
            if q == p:
                main[i] += term
            else:
                residual[i] += term
    return main, residual


def suppressed_bin_ratio(theta, phi, f, geo, p_max):
    """Largest DFT bin with ``|p| > P`` relative to the largest kept bin.

    All ``M_h`` bins of the ring DFT are evaluated exactly. Returns
    ``(ratio, n_suppressed)``; when ``M_h = 2P+1`` there is no suppressed
    bin and the ratio is 0.
    """
    m_h = geo.m_h
    a = horizontal_steering(theta, phi, f, geo)
    # centered bin orders -floor((M_h-1)/2) .. ceil((M_h-1)/2)
    p = np.arange(m_h) - (m_h - 1) // 2
    dft = np.exp(2j * np.pi * np.outer(p, np.arange(m_h)) / m_h) @ a
    kept = np.abs(p) <= p_max
    dropped = ~kept
    n_dropped = int(dropped.sum())
    if n_dropped == 0:
        return 0.0, 0
    return float(np.abs(dft[dropped]).max() / np.abs(dft[kept]).max()), n_dropped


def sweep_directions(n_beams):
    """Centre elevation ``pi (m_b + 1/2) / M_b`` of each sweep interval."""
    return np.pi * (np.arange(n_beams) + 0.5) / n_beams


@dataclass(frozen=True)
class BeamformerSet:
    """Analog and digital combining weights.

    Attributes
    ----------
    b_hab : ndarray, shape ``(M_h, 2P+1)``
        Q-DFT analog matrix of every ring.
    p_max : int
    b_vdb : ndarray, shape ``(M_f, M_b, M_v)``
        Diagonals of the vertical digital weights.
    b_hdb : ndarray, shape ``(M_f, M_b, 2P+1)``
        Diagonals of the horizontal digital weights.
    """

    b_hab: np.ndarray
    p_max: int
    b_vdb: np.ndarray
    b_hdb: np.ndarray

    def __post_init__(self):
        if self.b_hab.shape[1] != 2 * self.p_max + 1:
            raise ValueError("analog matrix width must be 2P+1")
        if self.b_hdb.shape[-1] != self.b_hab.shape[1]:
            raise ValueError("horizontal digital weights do not match 2P+1")
        if self.b_vdb.shape[:2] != self.b_hdb.shape[:2]:
            raise ValueError("vertical and horizontal weights disagree on (M_f, M_b)")
        if np.any(self.b_vdb == 0) or np.any(self.b_hdb == 0):
            raise ValueError("digital weights must be nonzero")

    @property
    def m_v(self):
        return self.b_vdb.shape[-1]

    @property
    def m_h(self):
        return self.b_hab.shape[0]

    @property
    def m_hd(self):
        return 2 * self.p_max + 1

    @property
    def m_vd(self):
        return self.m_v

    @property
    def m_bsd(self):
        return self.m_v * self.m_hd

    @property
    def m_bsr(self):
        """RF-chain count ``M_v (2P+1)``."""
        return self.m_v * self.m_hd

    @property
    def b_vab(self):
        return np.eye(self.m_v)

    def analog_matrix(self):
        return np.kron(self.b_vab, self.b_hab)

    def digital_matrix(self, mf, mb):
        return np.kron(np.diag(self.b_vdb[mf, mb]), np.diag(self.b_hdb[mf, mb]))

    def full_matrix(self, mf, mb):
        """``(B_vab B_vdb) kron (B_hab B_hdb)``, shape ``(M_v M_h, M_bsd)``."""
        return np.kron(self.b_vab @ np.diag(self.b_vdb[mf, mb]),
                       self.b_hab @ np.diag(self.b_hdb[mf, mb]))

    def combine(self, a, mf, mb):
        """Kronecker-factored ``full_matrix(mf, mb)^H @ a``."""
        a = np.asarray(a)
        if a.shape[-1] != self.m_v * self.m_h:
            raise ValueError(f"input length {a.shape[-1]} != {self.m_v * self.m_h}")
        x = a.reshape(a.shape[:-1] + (self.m_v, self.m_h))
        x = x @ self.b_hab.conj()
        x = x * self.b_hdb[mf, mb].conj()
        x = x * self.b_vdb[mf, mb].conj()[:, None]
        return x.reshape(a.shape[:-1] + (self.m_bsd,))

    def vertical_offset(self, mf, mb):
        """Diagonal of ``(B_vdb^H)^-1``, which undoes the vertical weights."""
        return 1.0 / self.b_vdb[mf, mb].conj()

    def horizontal_offset(self, mf, mb):
        return 1.0 / self.b_hdb[mf, mb].conj()


def design_digital(cfg, geo, p_max, directions=None):
    """Digital weight diagonals for every (subcarrier, sweep beam).

    Vertical weights are the steering vector toward the sweep direction at
    that subcarrier (unit norm), so ``b^H a_v`` is a matched filter.
    Horizontal weights are uniform.

    Returns
    -------
    b_vdb : ndarray, shape ``(M_f, M_b, M_v)``
    b_hdb : ndarray, shape ``(M_f, M_b, 2P+1)``
    """
    if directions is None:
        directions = sweep_directions(cfg.m_b)
    directions = np.asarray(directions, dtype=float)
    if directions.shape != (cfg.m_b,):
        raise ValueError(f"need {cfg.m_b} sweep directions")
    freqs = cfg.frequencies
    b_vdb = np.empty((cfg.m_f, cfg.m_b, geo.m_v), dtype=complex)
    for mf, f in enumerate(freqs):
        for mb, th in enumerate(directions):
            b_vdb[mf, mb] = vertical_steering(th, f, geo)
    n = 2 * p_max + 1
    b_hdb = np.full((cfg.m_f, cfg.m_b, n), 1 / np.sqrt(n), dtype=complex)
    return b_vdb, b_hdb


def design_beamformers(cfg, geo, p_max=None, use_f_max=False):
    """Build the Q-DFT analog matrix and matched digital weights.

    `p_max` defaults to ``floor(2 pi f r / c)`` at ``f0`` (or at the highest
    subcarrier with ``use_f_max=True``).
    """
    if p_max is None:
        p_max = default_p_max(geo, cfg.f_max if use_f_max else cfg.f0_hz)
    b_hab = qdft_matrix(geo.m_h, p_max)
    b_vdb, b_hdb = design_digital(cfg, geo, p_max)
    return BeamformerSet(b_hab=b_hab, p_max=p_max, b_vdb=b_vdb, b_hdb=b_hdb)


def beam_pattern(theta, mf, mb, bf, cfg, geo):
    """Vertical response ``|b_vdb^H a_v(theta)|`` of one sweep beam."""
    f = cfg.frequencies[mf]
    return np.array([abs(np.vdot(bf.b_vdb[mf, mb], vertical_steering(t, f, geo)))
                     for t in np.atleast_1d(theta)])


def apply_hybrid(a, bf, mf, mb):
    """Beamspace vector of length ``M_bsd`` for a full-array field `a`."""
    return bf.combine(a, mf, mb)
