#!/usr/bin/env python3
"""
Командная строка лаборатории Swift-Hohenberg / Ginzburg-Landau.

Использование:
  python lab.py [--config PATH] [--out DIR] [--seed N] [--threads N] [--log-level L] <команда>

Команды:
  coeffs          коэффициенты q_n, k_n и gamma
  filters export  профили срезающих функций
  simulate-sh     одна траектория SH для заданного M
  simulate-gl     траектория амплитудного уравнения
  residual        сканирование невязки по eps
  validate        сканирование оценки аппроксимации по eps
  lemmas          рандомизированные проверки лемм
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np
import pandas as pd

from experiments.harness import (
    ScanResult,
    blowup_summary,
    fast_grid,
    initial_field,
    run_amplitude,
    run_residual_scan,
    run_validity_scan,
    sh_stride,
)
from experiments.lemmas import run_lemma_suite
from experiments.persist import build_manifest, ensure_dir, write_csv_atomic, write_json_atomic, write_npz_atomic
from shlab.approx import Ansatz
from shlab.config import RunConfig, load_config
from shlab.errors import LabError
from shlab.glsolver import gl_cubic_coefficient
from shlab.kernel import coefficient_table
from shlab.shsolver import SHProblem, simulate_sh
from shlab.spectral import CUTOFF_NAMES, cutoff_values

logger = logging.getLogger("lab")

DEFAULT_OUT = "runs/latest"


def setup_logging(out_dir: Path, level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(out_dir / "lab.log", encoding="utf-8"),
            logging.StreamHandler()
        ]
    )


# ======== Commands ========
# Each command returns the list of written files and may add timings/flags for the manifest.

def cmd_coeffs(config: RunConfig, args, out: Path, meta: dict) -> List[Path]:
    Q, K = config.kernel_Q(), config.kernel_K()
    q, k = coefficient_table(Q, 3), coefficient_table(K, 3)
    payload = {f"q{n}": q[n] for n in range(4)}
    payload.update({f"k{n}": k[n] for n in range(4)})
    payload["gamma"] = gl_cubic_coefficient(Q, K)
    logger.info("gamma = %.12g", payload["gamma"])
    return [write_json_atomic(payload, out / "coeffs.json")]


def cmd_filters(config: RunConfig, args, out: Path, meta: dict) -> List[Path]:
    grid = fast_grid(config, args.M or config.M_list[0])
    kappa = np.sort(grid.kappa)
    frame = pd.DataFrame({"kappa": kappa, **{name: cutoff_values(name, kappa) for name in CUTOFF_NAMES}})
    return [write_csv_atomic(frame, out / "filters.csv")]


def cmd_simulate_gl(config: RunConfig, args, out: Path, meta: dict) -> List[Path]:
    amp = run_amplitude(config)
    traj = amp.trajectory
    if traj.blowup is not None:
        meta["flags"].append(f"amplitude blow-up: {blowup_summary(traj.blowup)}")
    A = np.array([f.samples for f in traj.fields])
    npz = write_npz_atomic(out / "gl_trajectory.npz", T=np.asarray(traj.times), X=amp.grid.x, A=A,
                           gamma=np.float64(amp.gamma))
    final = traj.final.samples
    frame = pd.DataFrame({"X": amp.grid.x, "re": final.real, "im": final.imag, "abs": np.abs(final)})
    return [npz, write_csv_atomic(frame, out / "gl_final.csv")]


def cmd_simulate_sh(config: RunConfig, args, out: Path, meta: dict) -> List[Path]:
    M = args.M or config.M_list[0]
    eps = config.P / M
    amp = run_amplitude(config)
    if amp.trajectory.blowup is not None:
        meta["flags"].append(f"amplitude blow-up: {blowup_summary(amp.trajectory.blowup)}")
        logger.error("Амплитуда разрушилась, SH не запускается")
        return []
    grid = fast_grid(config, M)
    ansatz = Ansatz(eps, grid, amp.trajectory, amp.Q, amp.K)
    stride, dt = sh_stride(config, eps)
    u0 = initial_field(config, ansatz, M)
    problem = SHProblem(grid, eps, amp.Q, amp.K, u0, config.T_star / eps ** 2, dt)
    traj = simulate_sh(problem, snapshot_stride=stride, n_steps=stride * config.snapshots)
    if traj.blowup is not None:
        meta["flags"].append(f"SH blow-up: {blowup_summary(traj.blowup)}")
    u = np.array([f.values for f in traj.fields])
    npz = write_npz_atomic(out / "sh_snapshots.npz", t=np.asarray(traj.times), x=grid.x, u=u,
                           sup=np.asarray(traj.sup_norms), c4=np.asarray(traj.c4_norms),
                           eps=np.float64(eps), dt=np.float64(traj.dt))
    frame = pd.DataFrame({"x": grid.x, "u": traj.final.values})
    return [npz, write_csv_atomic(frame, out / "sh_final.csv")]


def _write_scan(result: ScanResult, out: Path, meta: dict) -> List[Path]:
    meta["timings"].update(result.timings)
    meta["flags"].extend(result.flags)
    if not result.rows:
        return []
    written = [write_csv_atomic(result.to_frame(), out / "scan.csv"),
               write_json_atomic(result.summary(), out / "slopes.json")]
    if result.per_time is not None:
        written.append(write_csv_atomic(result.per_time, out / "residual_by_time.csv"))
    return written


def cmd_residual(config: RunConfig, args, out: Path, meta: dict) -> List[Path]:
    return _write_scan(run_residual_scan(config), out, meta)


def cmd_validate(config: RunConfig, args, out: Path, meta: dict) -> List[Path]:
    return _write_scan(run_validity_scan(config), out, meta)


def cmd_lemmas(config: RunConfig, args, out: Path, meta: dict) -> List[Path]:
    report, timings = run_lemma_suite(config)
    meta["timings"].update(timings)
    failed = [name for name, r in report["checks"].items() if not r["passed"]]
    if failed:
        meta["flags"].append(f"failed checks: {', '.join(failed)}")
    return [write_json_atomic(report, out / "lemmas.json")]


COMMANDS: Dict[str, Callable] = {
    "coeffs": cmd_coeffs,
    "filters": cmd_filters,
    "simulate-sh": cmd_simulate_sh,
    "simulate-gl": cmd_simulate_gl,
    "residual": cmd_residual,
    "validate": cmd_validate,
    "lemmas": cmd_lemmas,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Лаборатория нелокального уравнения Swift-Hohenberg")
    parser.add_argument("--config", help="YAML/JSON файл конфигурации")
    parser.add_argument("--out", default=DEFAULT_OUT, help="каталог результатов")
    parser.add_argument("--seed", type=int, help="переопределяет seed из конфигурации")
    parser.add_argument("--threads", type=int, help="число потоков для лестницы eps")
    parser.add_argument("--log-level", default="INFO", help="DEBUG, INFO, WARNING, ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("coeffs", help="q0..q3, k0..k3 и gamma в coeffs.json")
    filters = sub.add_parser("filters", help="профили срезающих функций")
    filters.add_argument("action", choices=["export"])
    filters.add_argument("--M", type=int, help="M сетки (по умолчанию первое из M_list)")
    sh = sub.add_parser("simulate-sh", help="траектория SH")
    sh.add_argument("--M", type=int, help="M сетки (по умолчанию первое из M_list)")
    sub.add_parser("simulate-gl", help="траектория амплитудного уравнения")
    sub.add_parser("residual", help="сканирование невязки")
    sub.add_parser("validate", help="сканирование оценки аппроксимации")
    sub.add_parser("lemmas", help="проверки лемм")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = ensure_dir(args.out)
    setup_logging(out, args.log_level)

    try:
        config = load_config(args.config, {"seed": args.seed, "threads": args.threads})
    except LabError as e:
        logger.error("Ошибка конфигурации: %s", e)
        return 1

    command = args.command if args.command != "filters" else "filters export"
    logger.info("Команда %s, конфигурация %s", command, config.digest()[:12])
    meta: dict = {"timings": {}, "flags": []}
    started = time.perf_counter()
    try:
        written = COMMANDS[args.command](config, args, out, meta)
    except LabError as e:
        logger.error("Команда %s завершилась с ошибкой: %s", command, e)
        meta["flags"].append(str(e))
        written = []
    meta["timings"]["command_s"] = time.perf_counter() - started

    manifest = build_manifest(command, config.digest(), config.model_dump(mode="json"),
                              timings=meta["timings"], flags=meta["flags"],
                              outputs=[p.name for p in written])
    write_json_atomic(manifest, out / "manifest.json")
    for path in written:
        logger.info("Записан файл %s", path)
    if not written:
        logger.error("Команда %s не создала ни одного файла результатов", command)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
