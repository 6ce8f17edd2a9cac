"""Configuration files, seeded Monte-Carlo sweeps, RMSE tables and a
complexity probe."""
import csv
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .array import (SPEED_OF_LIGHT, Path, SourceScene, SystemConfig, UCyAGeometry,
                    qpsk_symbols, random_scene)
from .estimator import (EstimationError, SmoothingPlan, signal_subspace, music_azimuth,
                        pair_parameters, tls_shift_invariance, elevation_from_eig,
                        delay_from_eig, default_plan)
from .pipeline import Receiver, match_paths
from .tensor import cp_tensor

EIG_MODULUS_RANGE = (0.2, 5.0)
SWEEP_AXES = ("snr_db", "m_v", "k", "p_max")

RECORD_COLUMNS = (
    "sweep_value", "trial", "path", "theta_true_deg", "theta_est_deg", "phi_true_deg",
    "phi_est_deg", "tau_true_ns", "tau_est_ns", "theta_err_deg", "phi_err_deg",
    "tau_err_ns", "failed",
)
SUMMARY_COLUMNS = (
    "sweep_value", "rmse_theta_deg", "rmse_phi_deg", "rmse_tau_ns", "failure_rate", "trials",
)


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _float(s):
    return float(s.strip())


def _floats(s):
    return tuple(float(v) for v in s.split(",") if v.strip())


def _ints(s):
    return tuple(int(v) for v in s.split(",") if v.strip())


def _str(s):
    return s.strip()


# key -> parser; angles in degrees, delays in nanoseconds
CONFIG_KEYS = {
    # geometry
    "m_v": int, "m_h": int, "radius_m": _float, "layer_spacing_m": _float,
    # system
    "f0_hz": _float, "bandwidth_hz": _float, "m_f": int, "subcarrier_spacing_hz": _float,
    "m_t": int, "m_b": int, "sweep_interval_s": _float, "snr_db": _float,
    "pathloss_exponent": _float, "seed": int,
    # receiver
    "p_max": int, "n_b": int, "focus_vertical": _bool, "focus_horizontal": _bool,
    "grid_window": _str,
    # estimator
    "n_grid": int, "method": _str, "subspace": _str, "refine": _bool, "smoothing": _str,
    "peak_select": _str,
    # random scene
    "k": int, "n_coherent": int, "elevation_min_deg": _float, "elevation_max_deg": _float,
    "min_separation_deg": _float,
    # explicit scene (comma lists, one entry per path)
    "azimuth_deg": _floats, "elevation_deg": _floats, "delay_ns": _floats,
    "power": _floats, "coherence_group": _ints,
    # experiment
    "sweep_axis": _str, "sweep_values": _floats, "trials": int, "workers": int,
}


def parse_config(text):
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys raise."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key}: {exc}") from None
    return out


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to run (a sweep of) Monte-Carlo trials.

    Defaults are the desk-scale setup: 8 layers of 25 elements, P = 12,
    8 subcarriers 100 MHz apart around 28 GHz, 16 frames, 4 sweep beams and
    3 incoherent paths.
    """

    cfg: SystemConfig = field(default_factory=SystemConfig)
    m_v: int = 8
    m_h: int = 25
    radius_wavelengths: float = 2.0
    spacing_wavelengths: float = 0.5
    radius_m: float = None
    layer_spacing_m: float = None
    p_max: int = None
    n_b: int = 16
    focus_vertical: bool = True
    focus_horizontal: bool = True
    grid_window: str = "interval"
    n_grid: int = 360
    method: str = "tls"
    subspace: str = "tensor"
    refine: bool = False
    peak_select: str = "steering"
    smoothing: str = "auto"
    k: int = 3
    n_coherent: int = 0
    elevation_range_deg: tuple = (20.0, 160.0)
    min_separation_deg: float = 3.0
    scene: SourceScene = None
    sweep_axis: str = "snr_db"
    sweep_values: tuple = (math.inf,)
    trials: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.sweep_values:
            raise ValueError("sweep values must not be empty")
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"sweep axis must be one of {SWEEP_AXES}")

    @property
    def seed(self):
        return self.cfg.seed

    def geometry(self):
        lam = SPEED_OF_LIGHT / self.cfg.f0_hz
        r = self.radius_m if self.radius_m is not None else self.radius_wavelengths * lam
        h = (self.layer_spacing_m if self.layer_spacing_m is not None
             else self.spacing_wavelengths * lam)
        return UCyAGeometry(m_v=self.m_v, m_h=self.m_h, radius_m=r, layer_spacing_m=h)

    def at(self, value):
        """Copy of the spec with the sweep axis set to `value`."""
        if self.sweep_axis == "snr_db":
            return replace(self, cfg=replace(self.cfg, snr_db=float(value)))
        if self.sweep_axis == "m_v":
            return replace(self, m_v=int(value))
        if self.sweep_axis == "k":
            return replace(self, k=int(value))
        return replace(self, p_max=int(value))

    def plan(self, coherent):
        if self.smoothing == "auto":
            return default_plan(self.k, coherent)
        return SmoothingPlan(*(int(v) for v in self.smoothing.split(",")))

    def receiver(self):
        return _cached_receiver(self.cfg, self.geometry(), self.p_max, self.n_b,
                                self.focus_vertical, self.focus_horizontal, self.grid_window)

    def draw_scene(self, rng):
        if self.scene is not None:
            return self.scene
        lo, hi = np.radians(self.elevation_range_deg)
        return random_scene(rng, self.cfg, self.k, n_coherent=self.n_coherent,
                            elevation_range=(lo, hi),
                            min_separation=np.radians(self.min_separation_deg))


@lru_cache(maxsize=32)
def _cached_receiver(cfg, geo, p_max, n_b, focus_vertical, focus_horizontal, grid_window):
    return Receiver.build(cfg, geo, p_max=p_max, n_b=n_b, focus_vertical=focus_vertical,
                          focus_horizontal=focus_horizontal, grid_window=grid_window)


def spec_from_mapping(m):
    """Build an :class:`ExperimentSpec` from parsed configuration keys."""
    m = dict(m)
    sys_keys = ("f0_hz", "bandwidth_hz", "m_f", "subcarrier_spacing_hz", "m_t", "m_b",
                "sweep_interval_s", "snr_db", "pathloss_exponent", "seed")
    sys_kw = {k: m.pop(k) for k in sys_keys if k in m}
    if "bandwidth_hz" not in sys_kw and ("m_f" in sys_kw or "subcarrier_spacing_hz" in sys_kw):
        base = SystemConfig()
        sys_kw["bandwidth_hz"] = (sys_kw.get("m_f", base.m_f)
                                  * sys_kw.get("subcarrier_spacing_hz", base.subcarrier_spacing_hz))
    cfg = SystemConfig(**sys_kw)
    kw = {"cfg": cfg}
    lo = m.pop("elevation_min_deg", None)
    hi = m.pop("elevation_max_deg", None)
    if lo is not None or hi is not None:
        d = ExperimentSpec.elevation_range_deg
        kw["elevation_range_deg"] = (lo if lo is not None else d[0], hi if hi is not None else d[1])
    path_keys = ("azimuth_deg", "elevation_deg", "delay_ns", "power", "coherence_group")
    path_kw = {k: m.pop(k) for k in path_keys if k in m}
    if path_kw:
        kw["scene"] = explicit_scene(cfg, **path_kw)
        kw["k"] = kw["scene"].k
        if "k" in m and m["k"] != kw["k"]:
            raise ValueError("k disagrees with the number of explicit paths")
        m.pop("k", None)
    if "sweep_values" in m:
        m["sweep_values"] = tuple(m["sweep_values"])
    kw.update(m)
    return ExperimentSpec(**kw)


def explicit_scene(cfg, azimuth_deg, elevation_deg, delay_ns, power=None, coherence_group=None):
    k = len(azimuth_deg)
    if len(elevation_deg) != k or len(delay_ns) != k:
        raise ValueError("azimuth_deg, elevation_deg and delay_ns need the same length")
    power = power or (1.0,) * k
    groups = coherence_group or tuple(range(k))
    if len(power) != k or len(groups) != k:
        raise ValueError("power and coherence_group need one entry per path")
    rng = np.random.default_rng(cfg.seed)
    symbols = {g: qpsk_symbols(rng, cfg.m_t) for g in sorted(set(groups))}
    paths = tuple(Path(float(np.radians(a)), float(np.radians(e)), float(t) * 1e-9, float(p), int(g))
                  for a, e, t, p, g in zip(azimuth_deg, elevation_deg, delay_ns, power, groups))
    scene = SourceScene(paths=paths, symbols=symbols)
    scene.validate(cfg)
    return scene


@dataclass(frozen=True)
class TrialRecord:
    """One trial: truth, matched estimates and absolute errors per path.

    Estimates and errors are NaN when the trial failed.
    """

    sweep_value: float
    trial: int
    theta_true: np.ndarray
    phi_true: np.ndarray
    tau_true: np.ndarray
    theta_est: np.ndarray
    phi_est: np.ndarray
    tau_est: np.ndarray
    errors: np.ndarray
    failed: bool

    def rows(self):
        for i in range(len(self.theta_true)):
            yield (
                self.sweep_value, self.trial, i,
                np.degrees(self.theta_true[i]), np.degrees(self.theta_est[i]),
                np.degrees(self.phi_true[i]), np.degrees(self.phi_est[i]),
                self.tau_true[i] * 1e9, self.tau_est[i] * 1e9,
                np.degrees(self.errors[i, 0]), np.degrees(self.errors[i, 1]),
                self.errors[i, 2] * 1e9, int(self.failed),
            )


def trial_seed(master, trial):
    # independent of the sweep point: every point sees the same scenes and
    # the same unit-variance noise draws (common random numbers)
    return np.random.SeedSequence([master, trial])


def is_failure(result):
    lo, hi = EIG_MODULUS_RANGE
    mod = result.eigenvalue_moduli
    return bool(np.any(mod < lo) or np.any(mod > hi) or not np.all(np.isfinite(mod)))


def run_trial(spec, value, point, trial):
    """Run a single seeded trial of `spec` at sweep `value`."""
    s = spec.at(value)
    rng = np.random.default_rng(trial_seed(spec.seed, trial))
    scene = s.draw_scene(rng)
    rx = s.receiver()
    k = scene.k
    nan = np.full(k, np.nan)
    failed = False
    try:
        y, _ = rx.observe(scene, rng)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = rx.estimate(y, k, plan=s.plan(scene.has_coherent_paths()), n_grid=s.n_grid,
                              method=s.method, subspace=s.subspace, refine=s.refine,
                              peak_select=s.peak_select)
        failed = is_failure(res)
    except (EstimationError, ValueError, np.linalg.LinAlgError):
        failed = True
        res = None
    if failed:
        est = (nan, nan, nan)
        errors = np.full((k, 3), np.nan)
    else:
        order, errors = match_paths(scene, res, s.cfg.max_delay_s)
        est = (res.elevations[order], res.azimuths[order], res.delays[order])
    return TrialRecord(
        sweep_value=float(value), trial=trial,
        theta_true=scene.elevations, phi_true=scene.azimuths, tau_true=scene.delays,
        theta_est=est[0], phi_est=est[1], tau_est=est[2], errors=errors, failed=failed,
    )


def _run_job(args):
    return run_trial(*args)


def run_experiment(spec):
    """Run every trial of every sweep point.

    Returns
    -------
    records : list of TrialRecord, ordered by (sweep point, trial)
    summary : list of dict, one per sweep point
    """
    jobs = [(spec, v, i, t) for i, v in enumerate(spec.sweep_values) for t in range(spec.trials)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            records = list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * spec.workers))))
    else:
        records = [_run_job(j) for j in jobs]
    return records, summarize(records, spec.sweep_values)


def summarize(records, sweep_values):
    """RMSE per parameter over successful trials and all their paths."""
    out = []
    for v in sweep_values:
        rec = [r for r in records if r.sweep_value == float(v)]
        ok = [r for r in rec if not r.failed]
        if ok:
            err = np.concatenate([r.errors for r in ok], axis=0)
            rmse = np.sqrt(np.mean(err ** 2, axis=0))
        else:
            rmse = np.full(3, np.nan)
        out.append({
            "sweep_value": float(v),
            "rmse_theta_deg": float(np.degrees(rmse[0])),
            "rmse_phi_deg": float(np.degrees(rmse[1])),
            "rmse_tau_ns": float(rmse[2] * 1e9),
            "failure_rate": (len(rec) - len(ok)) / len(rec) if rec else float("nan"),
            "trials": len(rec),
        })
    return out


def trial_rmse(records):
    """Per-trial RMSE over paths, shape ``(n_trials, 3)``; NaN rows for failures."""
    return np.array([np.sqrt(np.mean(r.errors ** 2, axis=0)) for r in records])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_records(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            for row in r.rows():
                w.writerow([_fmt(v) for v in row])


def write_summary(summary, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in summary:
            w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])


def paired_subspace_trials(spec, value, subspaces=("tensor", "matrix")):
    """Per-trial elevation RMSE for several subspace methods on the same data.

    Returns
    -------
    dict mapping subspace name to an array of per-trial elevation RMSE
    (NaN when the trial failed).
    """
    s = spec.at(value)
    rx = s.receiver()
    out = {name: np.full(spec.trials, np.nan) for name in subspaces}
    for t in range(spec.trials):
        rng = np.random.default_rng(trial_seed(spec.seed, t))
        scene = s.draw_scene(rng)
        y, _ = rx.observe(scene, rng)
        for name in subspaces:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    res = rx.estimate(y, scene.k, plan=s.plan(scene.has_coherent_paths()),
                                      n_grid=s.n_grid, method=s.method, subspace=name,
                                      refine=s.refine, peak_select=s.peak_select)
            except (EstimationError, ValueError, np.linalg.LinAlgError):
                continue
            if is_failure(res):
                continue
            _, err = match_paths(scene, res, s.cfg.max_delay_s)
            out[name][t] = np.sqrt(np.mean(err[:, 0] ** 2))
    return out


def _probe_tensor(rng, p_max, m_v, m_f, m_t, k, snr_db=20.0):
    shape = (m_v, 2 * p_max + 1, m_f, m_t)
    factors = [rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k)) for n in shape]
    y = cp_tensor(factors)
    noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    scale = np.linalg.norm(y) / np.linalg.norm(noise) / 10 ** (snr_db / 20)
    return y + scale * noise


def complexity_probe(sizes, repeats=5, n_grid=50, seed=0):
    """Wall-clock time of the decomposition and estimation stages.

    Parameters
    ----------
    sizes : iterable of ``(P, M_v, M_f, M_t, K)``
    repeats : int
        The minimum over this many runs is reported.
    n_grid : int
        Azimuth grid size used in the estimation stage.

    Returns
    -------
    list of dict with keys ``p_max, m_v, m_f, m_t, k, decomposition_s,
    estimation_s, total_s``.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for p_max, m_v, m_f, m_t, k in sizes:
        geo = UCyAGeometry(m_v=m_v, m_h=max(2 * p_max + 1, 3), radius_m=1e-2, layer_spacing_m=5e-3)
        y = _probe_tensor(rng, p_max, m_v, m_f, m_t, k)
        t_dec = []
        t_est = []
        signal_subspace(y, k)  # warm-up
        for _ in range(repeats):
            t0 = time.perf_counter()
            model = signal_subspace(y, k)
            t1 = time.perf_counter()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                psi_v = tls_shift_invariance(model.u_s, 0)
                psi_f = tls_shift_invariance(model.u_s, 2)
                lam_v, lam_f, _ = pair_parameters(psi_v, psi_f)
                th = []
                for lv in lam_v:
                    try:
                        th.append(elevation_from_eig(lv, 28e9, geo.layer_spacing_m)[0])
                    except EstimationError:
                        th.append(np.pi / 2)
                [delay_from_eig(lf, 1e8) for lf in lam_f]
                music_azimuth(model.horizontal_noise, th, 28e9, geo, p_max,
                              n_grid=max(n_grid, 64))
            t2 = time.perf_counter()
            t_dec.append(t1 - t0)
            t_est.append(t2 - t1)
        dec = min(t_dec)
        est = min(t_est)
        rows.append({"p_max": p_max, "m_v": m_v, "m_f": m_f, "m_t": m_t, "k": k,
                     "decomposition_s": dec, "estimation_s": est, "total_s": dec + est})
    return rows


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


PROBE_STAGES = ("Channel decomposition", "Parameter estimation", "Total")


def format_probe(rows):
    """Table with one block per size and the three stage rows."""
    lines = []
    for r in rows:
        lines.append(f"P={r['p_max']} M_v={r['m_v']} M_f={r['m_f']} M_t={r['m_t']} K={r['k']}")
        for name, key in zip(PROBE_STAGES, ("decomposition_s", "estimation_s", "total_s")):
            lines.append(f"  {name:<22s} {r[key] * 1e3:10.3f} ms")
    return "\n".join(lines)
