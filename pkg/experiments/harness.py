"""
Epsilon-ladder experiments.

Pipeline of the validity scan:
  1) Integrate the amplitude equation once on the slow torus (it does not depend on eps),
     with snapshots at T_k = k T_star / snapshots.
  2) For every M in M_list (eps = P/M, run concurrently): build psi/phi, start the
     Swift–Hohenberg run at psi(0) + d eps^2 * perturbation, integrate to T_star/eps^2 with
     snapshots at t_k = T_k / eps^2, and record sup over snapshots of the error norms.
  3) Fit log-log slopes over the ladder.

A failing ladder point is logged and flagged; the remaining points still run.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from shlab.approx import Ansatz, error_components, error_equation_check, residual
from shlab.config import RunConfig
from shlab.errors import BlowUpError, FitError, LabError
from shlab.glsolver import (
    GLSystem,
    GLTrajectory,
    band_limit,
    gl_cubic_coefficient,
    initial_amplitude,
    simulate_gl,
)
from shlab.kernel import KernelMeasure
from shlab.shsolver import SHProblem, SHTrajectory, simulate_sh
from shlab.spectral import PeriodicGrid, SpectralField, TorusGrid, c_norm, random_field

logger = logging.getLogger(__name__)

# remainder of the prefactor decomposition should decay at least this fast
REMAINDER_SLOPE_FLOOR = 3.5


# ======== Slope fits ========

@dataclass
class SlopeFit:
    slope: float
    intercept: float
    residual: float     # RMS of log-residuals
    stderr: float
    ci_low: float
    ci_high: float
    n: int

    @property
    def constant(self) -> float:
        """Fitted C in value ~ C eps^slope."""
        return math.exp(self.intercept)


def fit_slope(points: Sequence[Tuple[float, float]]) -> SlopeFit:
    """Least squares on (log eps, log value) with a 95% confidence interval."""
    pts = list(points)
    if len(pts) < 3:
        raise FitError(f"need at least 3 points, got {len(pts)}")
    eps = np.array([p[0] for p in pts], dtype=float)
    val = np.array([p[1] for p in pts], dtype=float)
    if np.any(eps <= 0) or np.any(val <= 0) or not np.all(np.isfinite(val)):
        raise FitError(f"slope fit needs positive finite values, got {val.tolist()}")
    x, y = np.log(eps), np.log(val)
    fit = stats.linregress(x, y)
    resid = y - (fit.intercept + fit.slope * x)
    half = float(stats.t.ppf(0.975, len(pts) - 2) * fit.stderr)
    return SlopeFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        residual=float(np.sqrt(np.mean(resid ** 2))),
        stderr=float(fit.stderr),
        ci_low=float(fit.slope) - half,
        ci_high=float(fit.slope) + half,
        n=len(pts),
    )


# ======== Result container ========

@dataclass
class ScanResult:
    kind: str
    rows: List[Dict[str, float]] = field(default_factory=list)
    slopes: Dict[str, dict] = field(default_factory=dict)
    spreads: Dict[str, float] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)
    config_digest: str = ""
    per_time: Optional[pd.DataFrame] = None

    def __post_init__(self):
        self.sort()

    def sort(self) -> None:
        self.rows.sort(key=lambda r: -r["eps"])

    @property
    def partial(self) -> bool:
        return bool(self.flags)

    def to_frame(self) -> pd.DataFrame:
        self.sort()
        return pd.DataFrame(self.rows)

    def column(self, name: str) -> List[Tuple[float, float]]:
        return [(r["eps"], r[name]) for r in self.rows if name in r and r[name] is not None
                and np.isfinite(r[name])]

    def ratio_spread(self, name: str, power: float) -> float:
        """max/min of value / eps^power across the ladder."""
        ratios = [v / e ** power for e, v in self.column(name) if v > 0]
        if len(ratios) < 2:
            return float("nan")
        return max(ratios) / min(ratios)

    def fit(self, name: str) -> None:
        pts = [(e, v) for e, v in self.column(name) if v > 0]
        if len(pts) < 3:
            logger.warning("Наклон %s не вычислен: точек %d < 3", name, len(pts))
            return
        try:
            self.slopes[name] = asdict(fit_slope(pts))
        except FitError as e:
            logger.warning("Наклон %s не вычислен: %s", name, e)
            return
        logger.info("Наклон %s: %.3f [%.3f, %.3f]", name, self.slopes[name]["slope"],
                    self.slopes[name]["ci_low"], self.slopes[name]["ci_high"])

    def summary(self) -> dict:
        return {"kind": self.kind, "slopes": self.slopes, "spreads": self.spreads,
                "flags": self.flags, "config_digest": self.config_digest}


# ======== Shared setup ========

@dataclass
class AmplitudeRun:
    trajectory: GLTrajectory
    gamma: float
    band: int
    grid: PeriodicGrid
    Q: KernelMeasure
    K: KernelMeasure


def slow_times(config: RunConfig) -> np.ndarray:
    return config.T_star * np.arange(config.snapshots + 1) / config.snapshots


def run_amplitude(config: RunConfig) -> AmplitudeRun:
    """The amplitude trajectory shared by all ladder points."""
    Q, K = config.kernel_Q(), config.kernel_K()
    gamma = gl_cubic_coefficient(Q, K)
    grid = PeriodicGrid(config.P, config.slow_points)
    band = config.initial.band if config.initial.band is not None else band_limit(config.P, config.eps_max)
    spec = config.initial
    A0 = initial_amplitude(spec.preset, grid, gamma, band, amplitude=spec.amplitude,
                           width=spec.width, modulation=spec.modulation)
    n_steps = config.snapshots * config.gl_substeps
    dT = config.T_star / n_steps
    logger.info("Амплитудное уравнение: gamma=%.6g, пресет=%s, полоса=%d, шагов=%d",
                gamma, spec.preset, band, n_steps)
    traj = simulate_gl(GLSystem(gamma, grid, A0, config.T_star, dT),
                       snapshot_stride=config.gl_substeps, n_steps=n_steps)
    return AmplitudeRun(traj, gamma, band, grid, Q, K)


def fast_grid(config: RunConfig, M: int) -> TorusGrid:
    return TorusGrid.for_M(M, config.points_per_period, config.N_override)


def sh_stride(config: RunConfig, eps: float) -> Tuple[int, float]:
    """Steps per snapshot and the effective dt so that snapshots land on T_k / eps^2."""
    span = config.T_star / (eps ** 2 * config.snapshots)
    stride = max(1, int(math.ceil(span / config.dt - 1e-9)))
    return stride, span / stride


def perturbation(grid: PeriodicGrid, seed: int, cutoff: float = 2.0) -> SpectralField:
    """Fixed-seed random real field with |kappa| <= cutoff and unit C^4 norm."""
    rng = np.random.default_rng(seed)
    w = random_field(grid, rng, mask=np.abs(grid.kappa) <= cutoff, real=True)
    norm = c_norm(w, 4)
    return w * (1.0 / norm) if norm > 0 else w


def initial_field(config: RunConfig, ansatz: Ansatz, M: int) -> SpectralField:
    psi0 = ansatz.snapshot(0.0).psi
    if config.d == 0:
        return psi0
    return psi0 + config.d * ansatz.eps ** 2 * perturbation(ansatz.grid, config.seed + M)


def fine_window(ansatz: Ansatz, u_start: SpectralField, t_start: float, h: float) -> SHTrajectory:
    """Three snapshots t_start, t_start + h, t_start + 2h with step h."""
    problem = SHProblem(ansatz.grid, ansatz.eps, ansatz.Q, ansatz.K, u_start, 2 * h, h)
    traj = simulate_sh(problem, snapshot_stride=1, n_steps=2)
    traj.times = [t_start + t for t in traj.times]
    return traj


# ======== Validity scan ========

def _validity_point(config: RunConfig, amp: AmplitudeRun, M: int) -> Dict[str, float]:
    started = time.perf_counter()
    eps = config.P / M
    grid = fast_grid(config, M)
    ansatz = Ansatz(eps, grid, amp.trajectory, amp.Q, amp.K)
    stride, dt = sh_stride(config, eps)
    u0 = initial_field(config, ansatz, M)
    problem = SHProblem(grid, eps, amp.Q, amp.K, u0, config.T_star / eps ** 2, dt)
    logger.info("SH eps=%.4g: M=%d N=%d dt=%.4g шагов=%d", eps, M, grid.N, dt, stride * config.snapshots)
    traj = simulate_sh(problem, snapshot_stride=stride, n_steps=stride * config.snapshots)

    row: Dict[str, float] = {"eps": eps, "M": M, "N": grid.N, "dt": dt,
                             "blowup": 0.0 if traj.completed else 1.0}
    sup = {"u_psi_c4": 0.0, "u_phi_c4": 0.0, "es_res_c1": 0.0, "ec_res_c1": 0.0, "D": 0.0}
    for t, u in zip(traj.times, traj.fields):
        snap = ansatz.snapshot(t)
        comps = error_components(u, snap.phi, eps)
        report = residual(ansatz, t)
        sup["u_psi_c4"] = max(sup["u_psi_c4"], c_norm(u - snap.psi, 4))
        sup["u_phi_c4"] = max(sup["u_phi_c4"], c_norm(comps.R, 4))
        sup["es_res_c1"] = max(sup["es_res_c1"], report.norms["es_res_c1"])
        sup["ec_res_c1"] = max(sup["ec_res_c1"], report.norms["ec_res_c1"])
        sup["D"] = max(sup["D"], comps.norms["D"])
    row.update(sup)

    if traj.completed and len(traj.times) > 2:
        mid = len(traj.times) // 2
        try:
            window = fine_window(ansatz, traj.fields[mid], traj.times[mid], dt)
            row["eq_defect"] = error_equation_check(window, ansatz, window.times[1])
        except LabError as e:
            logger.warning("Проверка уравнения ошибки eps=%.4g пропущена: %s", eps, e)
    row["wall_s"] = time.perf_counter() - started
    logger.info("eps=%.4g: sup|u-psi|_C4=%.4e, D=%.4e (%.1f с)", eps, row["u_psi_c4"], row["D"], row["wall_s"])
    return row


def _run_ladder(config: RunConfig, worker, label: str, result: ScanResult) -> None:
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        futures = {M: pool.submit(worker, M) for M in config.M_list}
        for M, fut in futures.items():
            try:
                row = fut.result()
                # wall-clock stays out of the rows so scan.csv is reproducible
                result.timings[f"M={M}_s"] = row.pop("wall_s", float("nan"))
                result.rows.append(row)
            except (LabError, FloatingPointError) as e:
                msg = f"{label} M={M}: {e}"
                logger.error("Ошибка точки лестницы %s", msg)
                result.flags.append(msg)
    result.sort()


def run_validity_scan(config: RunConfig) -> ScanResult:
    started = time.perf_counter()
    result = ScanResult("validity", config_digest=config.digest())
    amp = run_amplitude(config)
    result.timings["amplitude_s"] = time.perf_counter() - started
    if not amp.trajectory.completed:
        result.flags.append(f"amplitude blow-up: {amp.trajectory.blowup}")
        logger.error("Амплитуда разрушилась до T_star, сканирование прервано: %s", amp.trajectory.blowup)
        return result

    _run_ladder(config, lambda M: _validity_point(config, amp, M), "validity", result)
    for row in result.rows:
        if row.get("blowup"):
            result.flags.append(f"SH blow-up at eps={row['eps']:.4g}")
    for name in ("u_psi_c4", "u_phi_c4", "es_res_c1", "ec_res_c1"):
        result.fit(name)
    result.spreads["u_psi_c4/eps^2"] = result.ratio_spread("u_psi_c4", 2.0)
    result.spreads["D"] = result.ratio_spread("D", 0.0)
    result.timings["total_s"] = time.perf_counter() - started
    return result


# ======== Residual scan ========

def _residual_point(config: RunConfig, amp: AmplitudeRun, M: int) -> Tuple[Dict[str, float], pd.DataFrame]:
    started = time.perf_counter()
    eps = config.P / M
    ansatz = Ansatz(eps, fast_grid(config, M), amp.trajectory, amp.Q, amp.K)
    records = []
    pairing = 0.0
    for T in slow_times(config):
        report = residual(ansatz, T / eps ** 2)
        pairing = max(pairing, report.pairing_defect())
        records.append({"eps": eps, "t": T / eps ** 2, "T": T, **report.norms})
    per_time = pd.DataFrame(records)
    row: Dict[str, float] = {"eps": eps, "M": M}
    for col in per_time.columns:
        if col not in ("eps", "t", "T"):
            row[col] = float(per_time[col].max())
    row["pairing_defect"] = pairing
    row["wall_s"] = time.perf_counter() - started
    logger.info("Невязка eps=%.4g: |E_s Res|=%.3e |E_c Res|=%.3e", eps, row["es_res_c1"], row["ec_res_c1"])
    return row, per_time


def run_residual_scan(config: RunConfig) -> ScanResult:
    started = time.perf_counter()
    result = ScanResult("residual", config_digest=config.digest())
    amp = run_amplitude(config)
    if not amp.trajectory.completed:
        result.flags.append(f"amplitude blow-up: {amp.trajectory.blowup}")
        logger.error("Амплитуда разрушилась до T_star: %s", amp.trajectory.blowup)
        return result

    frames: Dict[int, pd.DataFrame] = {}

    def worker(M: int) -> Dict[str, float]:
        row, per_time = _residual_point(config, amp, M)
        frames[M] = per_time
        return row

    _run_ladder(config, worker, "residual", result)
    if frames:
        result.per_time = pd.concat([frames[M] for M in sorted(frames)], ignore_index=True)
    for name in ("es_res_c1", "ec_res_c1", "a023_c1", "a1_c1", "remainder_c1", "phi_minus_psi_c4"):
        result.fit(name)
    for name in ("delta_c_c1", "delta_s_c1", "phi_s_c4"):
        result.spreads[name] = result.ratio_spread(name, 0.0)
    rem = result.slopes.get("remainder_c1")
    if rem is not None and rem["slope"] < REMAINDER_SLOPE_FLOOR:
        logger.warning("Остаток разложения по a_l убывает медленнее eps^%.1f: наклон %.3f",
                       REMAINDER_SLOPE_FLOOR, rem["slope"])
    result.timings["total_s"] = time.perf_counter() - started
    return result


def blowup_summary(err: Optional[BlowUpError]) -> Optional[dict]:
    if err is None:
        return None
    return {"step": err.step, "time": err.time, "reason": err.reason}
