"""End-to-end receiver: beamforming design, synthesis, focusing, estimation."""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .array import per_beam_tensor, synthesize
from .beamspace import design_beamformers
from .estimator import DEFAULT_GRID, assemble, default_plan, estimate
from .focusing import DEFAULT_N_B, apply_focusing, design_focusing


@dataclass(frozen=True)
class Receiver:
    """Fixed hardware and preprocessing for one configuration.

    Building the beamformers and focusing matrices is the expensive part of
    setup, so a receiver is built once and reused across trials.
    """

    cfg: object
    geo: object
    bf: object
    focusing: object

    @classmethod
    def build(cls, cfg, geo, p_max=None, n_b=DEFAULT_N_B, focus_vertical=True,
              focus_horizontal=True, grid_window="interval"):
        bf = design_beamformers(cfg, geo, p_max)
        fs = design_focusing(cfg, geo, bf, n_b=n_b, vertical=focus_vertical,
                             horizontal=focus_horizontal, window=grid_window)
        return cls(cfg=cfg, geo=geo, bf=bf, focusing=fs)

    def measurement_tensor(self, x):
        """Raw snapshots ``(M_b, M_f, M_t, M_bsd)`` to the assembled tensor."""
        t = per_beam_tensor(x, self.bf.m_vd, self.bf.m_hd)
        return assemble(apply_focusing(t, self.focusing, self.bf, self.cfg))

    def observe(self, scene, rng=None, sigma2=None):
        x, sigma2 = synthesize(scene, self.cfg, self.geo, self.bf, rng, sigma2)
        return self.measurement_tensor(x), sigma2

    def estimate(self, y, k, plan=None, coherent=False, n_grid=DEFAULT_GRID,
                 method="tls", subspace="tensor", refine=False, peak_select="steering"):
        if plan is None:
            plan = default_plan(k, coherent)
        return estimate(y, k, self.cfg, self.geo, self.bf.p_max, plan=plan, n_grid=n_grid,
                        method=method, subspace=subspace, refine=refine,
                        peak_select=peak_select)

    def run(self, scene, rng=None, **kwargs):
        """Synthesize `scene`, then estimate its paths."""
        y, _ = self.observe(scene, rng)
        kwargs.setdefault("coherent", scene.has_coherent_paths())
        return self.estimate(y, scene.k, **kwargs)


def match_paths(scene, result, delay_period):
    """Optimal truth-to-estimate assignment and per-path absolute errors.

    Returns
    -------
    order : ndarray
        ``order[i]`` is the estimate index assigned to true path ``i``.
    errors : ndarray, shape ``(K, 3)``
        Elevation, azimuth (wrapped) and delay (wrapped modulo the period)
        errors.
    """
    cost, err = error_matrix(scene.elevations, scene.azimuths, scene.delays,
                             result.elevations, result.azimuths, result.delays, delay_period)
    rows, cols = linear_sum_assignment(cost)
    order = np.empty(scene.k, dtype=int)
    order[rows] = cols
    return order, err[np.arange(scene.k), order]


def wrapped_diff(a, b, period):
    d = np.mod(np.asarray(a) - np.asarray(b), period)
    return np.minimum(d, period - d)


def error_matrix(th, ph, tau, th_hat, ph_hat, tau_hat, delay_period):
    """Pairwise errors between true and estimated paths.

    The assignment cost is the sum of squared elevation, azimuth and
    delay-phase errors, all in radians; the delay phase is
    ``2 pi tau / delay_period``.
    """
    e_th = np.abs(th[:, None] - th_hat[None, :])
    e_ph = wrapped_diff(ph[:, None], ph_hat[None, :], 2 * np.pi)
    e_tau = wrapped_diff(tau[:, None], tau_hat[None, :], delay_period)
    cost = e_th ** 2 + e_ph ** 2 + (2 * np.pi * e_tau / delay_period) ** 2
    return cost, np.stack([e_th, e_ph, e_tau], axis=-1)
