"""Uniform cylindrical array (UCyA) geometry, steering vectors and OFDM
signal synthesis for a vertically swept hybrid receiver."""
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

# elevation separation below which two paths share an ESPRIT phase
DEGENERATE_ELEVATION_TOL = 1e-9


@dataclass(frozen=True)
class UCyAGeometry:
    """M_v stacked uniform circular arrays of M_h elements each.

    Layer m_v sits at height ``(m_v - 1) * layer_spacing_m``; element m_h of
    each ring sits at central angle ``2*pi*(m_h - 1)/M_h``.
    """

    m_v: int
    m_h: int
    radius_m: float
    layer_spacing_m: float

    def __post_init__(self):
        if self.m_v < 2 or self.m_h < 3:
            raise ValueError("need m_v >= 2 and m_h >= 3")
        if self.radius_m <= 0 or self.layer_spacing_m <= 0:
            raise ValueError("radius and layer spacing must be positive")

    @property
    def n_antennas(self):
        return self.m_v * self.m_h

    @classmethod
    def in_wavelengths(cls, m_v, m_h, f0_hz, radius=2.0, spacing=0.5):
        lam = SPEED_OF_LIGHT / f0_hz
        return cls(m_v=m_v, m_h=m_h, radius_m=radius * lam, layer_spacing_m=spacing * lam)

    def min_ring_size(self, f_hz):
        """Smallest M_h allowed by the Q-DFT condition at frequency `f_hz`."""
        return int(np.floor(4 * np.pi * f_hz * self.radius_m / SPEED_OF_LIGHT))


@dataclass(frozen=True)
class SystemConfig:
    """OFDM and sweep parameters.

    Subcarrier ``m`` (zero-based) sits at
    ``f0_hz - bandwidth_hz/2 + m * subcarrier_spacing_hz``.
    """

    f0_hz: float = 28e9
    bandwidth_hz: float = 800e6
    m_f: int = 8
    subcarrier_spacing_hz: float = 100e6
    m_t: int = 16
    m_b: int = 4
    sweep_interval_s: float = 1e-4
    snr_db: float = np.inf
    pathloss_exponent: float = 2.1
    seed: int = 0

    def __post_init__(self):
        if self.m_f < 2 or self.m_t < 2 or self.m_b < 1:
            raise ValueError("need m_f >= 2, m_t >= 2, m_b >= 1")
        if self.subcarrier_spacing_hz <= 0:
            raise ValueError("subcarrier spacing must be positive")
        if np.any(self.frequencies <= 0):
            raise ValueError("all subcarrier frequencies must be positive")

    @property
    def frequencies(self):
        m = np.arange(self.m_f)
        return self.f0_hz - self.bandwidth_hz / 2 + m * self.subcarrier_spacing_hz

    @property
    def f_max(self):
        return float(self.frequencies.max())

    @property
    def reference_index(self):
        """Subcarrier closest to ``f0_hz`` (first one on ties)."""
        return int(np.argmin(np.abs(self.frequencies - self.f0_hz)))

    @property
    def max_delay_s(self):
        return 1.0 / self.subcarrier_spacing_hz

    @property
    def noiseless(self):
        return not np.isfinite(self.snr_db)


@dataclass(frozen=True)
class Path:
    azimuth_rad: float
    elevation_rad: float
    delay_s: float
    power: float = 1.0
    coherence_group: int = 0


@dataclass(frozen=True)
class SourceScene:
    """Ground-truth paths plus one unit-modulus symbol stream per coherence group.

    `symbols` maps a coherence-group id to an ``(m_t,)`` complex array.
    """

    paths: tuple
    symbols: dict = field(default_factory=dict)

    @property
    def k(self):
        return len(self.paths)

    @property
    def azimuths(self):
        return np.array([p.azimuth_rad for p in self.paths])

    @property
    def elevations(self):
        return np.array([p.elevation_rad for p in self.paths])

    @property
    def delays(self):
        return np.array([p.delay_s for p in self.paths])

    @property
    def groups(self):
        return np.array([p.coherence_group for p in self.paths], dtype=int)

    def has_coherent_paths(self):
        _, counts = np.unique(self.groups, return_counts=True)
        return bool(np.any(counts > 1))

    def validate(self, cfg, geo=None, m_hd=None):
        for p in self.paths:
            if not 0 <= p.azimuth_rad < 2 * np.pi:
                raise ValueError(f"azimuth {p.azimuth_rad} outside [0, 2pi)")
            if not 0 < p.elevation_rad < np.pi:
                raise ValueError(f"elevation {p.elevation_rad} outside (0, pi)")
            if not 0 <= p.delay_s < cfg.max_delay_s:
                raise ValueError(f"delay {p.delay_s} outside [0, {cfg.max_delay_s})")
            if p.power <= 0:
                raise ValueError("path power must be positive")
            if p.coherence_group not in self.symbols:
                raise ValueError(f"no symbols for coherence group {p.coherence_group}")
        for g, s in self.symbols.items():
            if np.shape(s) != (cfg.m_t,):
                raise ValueError(f"group {g} needs {cfg.m_t} symbols")
        el = np.sort(self.elevations)
        if np.any(np.diff(el) < DEGENERATE_ELEVATION_TOL):
            raise ValueError("two paths share an elevation; ESPRIT cannot separate them")
        if geo is not None:
            limit = min(geo.m_v, m_hd if m_hd is not None else geo.m_h, cfg.m_f, cfg.m_t)
            if self.k >= limit:
                raise ValueError(f"K={self.k} must be below {limit}")


def qpsk_symbols(rng, n):
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4, n)))


def random_scene(rng, cfg, k, n_coherent=0, elevation_range=(np.radians(20), np.radians(160)),
                 min_separation=np.radians(3), delay_margin=0.05, power=1.0):
    """Draw `k` paths at random; the first `n_coherent` share one symbol stream."""
    if n_coherent == 1 or n_coherent > k:
        raise ValueError("n_coherent must be 0 or between 2 and k")
    lo, hi = elevation_range
    for _ in range(1000):
        el = rng.uniform(lo, hi, k)
        if k < 2 or np.min(np.diff(np.sort(el))) >= min_separation:
            break
    else:
        raise RuntimeError("could not place elevations with the requested separation")
    az = rng.uniform(0, 2 * np.pi, k)
    tmax = cfg.max_delay_s
    tau = rng.uniform(delay_margin * tmax, (1 - delay_margin) * tmax, k)
    groups = [0 if i < n_coherent else i for i in range(k)]
    symbols = {g: qpsk_symbols(rng, cfg.m_t) for g in sorted(set(groups))}
    paths = tuple(Path(float(a), float(e), float(t), power, g)
                  for a, e, t, g in zip(az, el, tau, groups))
    return SourceScene(paths=paths, symbols=symbols)


def vertical_steering(theta, f, geo):
    """Steering vector over the M_v ring layers, unit norm."""
    if np.any(np.asarray(f) <= 0):
        raise ValueError("frequency must be positive")
    m = np.arange(geo.m_v)
    phase = 2 * np.pi / SPEED_OF_LIGHT * f * geo.layer_spacing_m * m * np.cos(theta)
    return np.exp(-1j * phase) / np.sqrt(geo.m_v)


def horizontal_steering(theta, phi, f, geo):
    """Steering vector over the M_h elements of one ring, unit norm."""
    if np.any(np.asarray(f) <= 0):
        raise ValueError("frequency must be positive")
    varphi = 2 * np.pi * np.arange(geo.m_h) / geo.m_h
    gamma = 2 * np.pi / SPEED_OF_LIGHT * f * geo.radius_m * np.sin(theta)
    return np.exp(1j * gamma * np.cos(phi - varphi)) / np.sqrt(geo.m_h)


def full_steering(theta, phi, f, geo):
    """Full array steering vector, vertical index slowest."""
    return np.kron(vertical_steering(theta, f, geo), horizontal_steering(theta, phi, f, geo))


def delay_phase(tau, f):
    return np.exp(-2j * np.pi * f * tau)


def sweep_phase(f, m_b, tau_b):
    """Phase picked up by sweep beam `m_b` (zero-based) after ``m_b * tau_b``."""
    return np.exp(-2j * np.pi * f * m_b * tau_b)


def delay_sweep_factor(tau, f, m_b, tau_b):
    """Product of the delay and sweep phases for zero-based beam `m_b`."""
    return delay_phase(tau, f) * sweep_phase(f, m_b, tau_b)


def beam_window(m_b, n_beams):
    """Elevation interval captured by zero-based beam `m_b`.

    The nominal interval ``[pi*m_b/M_b, pi*(m_b+1)/M_b)`` widened by half an
    interval on each side, so neighbouring beams overlap.
    """
    width = np.pi / n_beams
    return m_b * width - width / 2, (m_b + 1) * width + width / 2


def captured_by(theta, m_b, n_beams):
    lo, hi = beam_window(m_b, n_beams)
    return lo <= theta < hi


def pathloss(delay_s, exponent, d0=1.0):
    """Log-distance pathloss ``(d/d0)^exponent`` with ``d = c*tau`` floored at `d0`."""
    d = np.maximum(SPEED_OF_LIGHT * np.asarray(delay_s), d0)
    return (d / d0) ** exponent


def path_amplitudes(scene, cfg):
    """Per-path symbol matrix S of shape ``(m_t, K)``."""
    if scene.k == 0:
        return np.zeros((cfg.m_t, 0), dtype=complex)
    rho = pathloss(scene.delays, cfg.pathloss_exponent)
    gains = np.array([p.power for p in scene.paths]) / np.sqrt(rho)
    s = np.stack([scene.symbols[g] for g in scene.groups], axis=1)
    return s * gains


def clean_snapshots(scene, cfg, geo, bf):
    """Noiseless post-beamforming samples, shape ``(m_b, m_f, m_t, M_bsd)``."""
    freqs = cfg.frequencies
    s = path_amplitudes(scene, cfg)
    x = np.zeros((cfg.m_b, cfg.m_f, cfg.m_t, bf.m_bsd), dtype=complex)
    for b in range(cfg.m_b):
        members = [k for k, p in enumerate(scene.paths) if captured_by(p.elevation_rad, b, cfg.m_b)]
        if not members:
            continue
        for mf, f in enumerate(freqs):
            cols = []
            for k in members:
                p = scene.paths[k]
                a = full_steering(p.elevation_rad, p.azimuth_rad, f, geo)
                g = delay_sweep_factor(p.delay_s, f, b, cfg.sweep_interval_s)
                cols.append(g * bf.combine(a, mf, b))
            resp = np.stack(cols, axis=1)
            x[b, mf] = s[:, members] @ resp.T
    return x


def noise_variance(clean, snr_db):
    """Noise power for the requested average per-stream SNR."""
    if not np.isfinite(snr_db):
        return 0.0
    p_sig = float(np.mean(np.abs(clean) ** 2))
    return p_sig / 10 ** (snr_db / 10)


def complex_gaussian(rng, shape, variance):
    """Circular complex Gaussian samples with ``E|n|^2 = variance``."""
    scale = np.sqrt(variance / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synthesize(scene, cfg, geo, bf, rng=None, sigma2=None):
    """Received post-beamforming samples x[m_b, m_f, m_t, :] with AWGN.

    Parameters
    ----------
    scene : SourceScene
    cfg : SystemConfig
    geo : UCyAGeometry
    bf : BeamformerSet
    rng : numpy.random.Generator, optional
        Defaults to ``default_rng(cfg.seed)``.
    sigma2 : float, optional
        Noise power; derived from ``cfg.snr_db`` when omitted.

    Returns
    -------
    x : ndarray, shape ``(m_b, m_f, m_t, M_bsd)``
    sigma2 : float
    """
    if bf.m_v != geo.m_v or bf.m_h != geo.m_h:
        raise ValueError("beamformer does not match the array geometry")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    x = clean_snapshots(scene, cfg, geo, bf)
    if sigma2 is None:
        if cfg.noiseless:
            sigma2 = 0.0
        elif not np.any(x):
            raise ValueError("no signal power to set the SNR against; pass sigma2")
        else:
            sigma2 = noise_variance(x, cfg.snr_db)
    if sigma2 > 0:
        x = x + complex_gaussian(rng, x.shape, sigma2)
    return x, sigma2


def per_beam_tensor(x, m_vd, m_hd):
    """Rearrange snapshots into tensors of shape ``(m_b, M_vd, M_hd, M_f, M_t)``.

    Accepts ``(m_b, m_f, m_t, M_bsd)`` or a single beam ``(m_f, m_t, M_bsd)``.
    """
    x = np.asarray(x)
    if x.shape[-1] != m_vd * m_hd:
        raise ValueError(f"snapshot length {x.shape[-1]} != {m_vd} * {m_hd}")
    lead = x.shape[:-1]
    t = x.reshape(lead + (m_vd, m_hd))
    return np.moveaxis(t, (-2, -1), (-4, -3))


def flatten_beam_tensor(t):
    """Inverse of :func:`per_beam_tensor`."""
    t = np.moveaxis(np.asarray(t), (-4, -3), (-2, -1))
    return t.reshape(t.shape[:-2] + (-1,))
