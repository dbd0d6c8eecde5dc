"""Command line entry point: ``projtomo {plan,simulate,reconstruct,optics,sweep}``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 I/O or unreadable input file.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .errors import ConfigInvalid, NumericFailure, TomographyError
from .measurement import exact_expectations, load_records, sample_expectations, save_records
from .optics import ProbeSpec, optics_tomography, probe_shift_equivalence_check
from .representations import (
    ExpectationMap,
    MeasurementPlan,
    ReconstructionReport,
    load_plan,
    minimal_plan,
    operator_basis_plan,
    reconstruct_minimal,
    reconstruct_operator_basis,
    redundant_plan,
    save_plan,
)
from .state import DensityMatrix, density_to_json, fidelity, save_density, trace_distance

log = logging.getLogger("projtomo")

EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 2, 3, 4


class InputFileError(TomographyError):
    pass


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def build_plan(cfg: ExperimentConfig) -> MeasurementPlan:
    dim = cfg["dim"]
    if cfg.mode == "operator_basis":
        return operator_basis_plan(dim)
    if cfg["three_state"]:
        return redundant_plan(dim, cfg.angles, cfg.gamma)
    return minimal_plan(dim, cfg.angles)


def reconstruct(cfg: ExperimentConfig, plan: MeasurementPlan, data) -> ReconstructionReport:
    if cfg.mode == "operator_basis":
        return reconstruct_operator_basis(plan, data)
    return reconstruct_minimal(plan, data, weighted=cfg["weighted"])


def metrics(rho_hat: DensityMatrix, rho_true: DensityMatrix | None) -> dict:
    if rho_true is None:
        return {}
    return {
        "fidelity": fidelity(rho_hat, rho_true),
        "trace_distance": trace_distance(rho_hat, rho_true),
        "max_element_error": float(np.abs(rho_hat.matrix - rho_true.matrix).max()),
    }


def _run_report(cfg, report: ReconstructionReport, rho_true, started: float, extra=None) -> dict:
    out = {
        "tool_version": __version__,
        "config": cfg.raw,
        "scheme": report.scheme,
        "condition_summary": report.condition_summary,
        "metrics": metrics(report.rho_hat, rho_true),
        "rho_hat": density_to_json(report.rho_hat),
        "raw_hermitian": {"re": report.raw_hermitian.real.tolist(),
                          "im": report.raw_hermitian.imag.tolist()},
        "timing_s": time.perf_counter() - started,
    }
    if extra:
        out.update(extra)
    return out


def _element_rows(rho_hat: DensityMatrix, rho_true: DensityMatrix | None, resid: np.ndarray):
    dim = rho_hat.dim
    for n in range(dim):
        for m in range(dim):
            est = rho_hat.matrix[n, m]
            row = [n, m, _fmt(est.real), _fmt(est.imag)]
            if rho_true is not None:
                tru = rho_true.matrix[n, m]
                row += [_fmt(tru.real), _fmt(tru.imag), _fmt(abs(est - tru))]
            else:
                row += ["", "", ""]
            row.append(_fmt(resid[n, m]))
            yield row


def _emit(cfg, out: Path, report, rho_true, started, shots, extra=None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    save_density(report.rho_hat, out / "rho_hat.json")
    if rho_true is not None:
        save_density(rho_true, out / "rho_true.json")
    run = _run_report(cfg, report, rho_true, started, extra)
    m = run["metrics"]
    _write_csv(out / "metrics.csv", ["shots", "fidelity", "trace_distance", "max_element_error"],
               [["" if shots is None else shots, _fmt(m.get("fidelity")),
                 _fmt(m.get("trace_distance")), _fmt(m.get("max_element_error"))]])
    _write_csv(out / "elements.csv",
               ["n", "m", "est_re", "est_im", "true_re", "true_im", "abs_error", "residual"],
               _element_rows(report.rho_hat, rho_true, report.per_element_residual))
    (out / "report.json").write_text(json.dumps(run, indent=1))
    return run


# ---------------------------------------------------------------------------
# subcommands


def cmd_plan(cfg: ExperimentConfig, args) -> int:
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    if cfg.mode == "optics":
        dim = cfg.raw.get("dim", cfg["cutoff"] + 1)
        probes = []
        for d in range(1, dim):
            for label, a in (("a", 1.0), ("b", 1j)):
                pr = ProbeSpec(d, 0, a)
                probes.append({"label": f"{label}_{pr.label}", "n": pr.n, "m": pr.m,
                               "a_re": pr.a.real, "a_im": pr.a.imag})
        (out / "plan.json").write_text(json.dumps({"cutoff": cfg["cutoff"], "probes": probes}, indent=1))
        print(f"{len(probes)} probe states")
        return 0
    plan = build_plan(cfg)
    save_plan(plan, out / "plan.json")
    print(f"{len(plan)} projectors")
    return 0


def _read_plan(path: Path) -> MeasurementPlan:
    try:
        return load_plan(path)
    except (ValueError, KeyError, TypeError, TomographyError) as exc:
        raise InputFileError(f"{path}: {exc}") from None


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    if cfg.mode == "optics":
        raise ConfigInvalid("simulate applies to projector plans; use the optics subcommand")
    plan = _read_plan(Path(args.plan) if args.plan else cfg.out / "plan.json")
    rho = cfg.state()
    shots = None if args.exact else cfg.shot_config()
    data = exact_expectations(rho, plan) if shots is None else sample_expectations(rho, plan, shots)
    cfg.out.mkdir(parents=True, exist_ok=True)
    save_records(data, cfg.out / "expectations.csv")
    print(f"{len(data)} expectations ({'exact' if shots is None else f'{shots.shots} shots'})")
    return 0


def cmd_reconstruct(cfg: ExperimentConfig, args) -> int:
    started = time.perf_counter()
    path = Path(args.expectations) if args.expectations else cfg.out / "expectations.csv"
    try:
        data: ExpectationMap = load_records(path)
    except TomographyError as exc:
        raise InputFileError(f"{path}: {exc}") from None
    plan = data.plan()
    if "dim" in cfg.raw and cfg["dim"] != plan.dim:
        raise ConfigInvalid(f"config dim {cfg['dim']} but expectations cover dim {plan.dim}")
    report = reconstruct(cfg, plan, data)
    rho_true = cfg.state() if "dim" in cfg.raw else None
    shots = next((r.shots for r in data.records() if r.shots), None)
    run = _emit(cfg, cfg.out, report, rho_true, started, shots)
    print(json.dumps(run["metrics"]))
    return 0


def cmd_optics(cfg: ExperimentConfig, args) -> int:
    if cfg.mode != "optics":
        raise ConfigInvalid("optics subcommand needs mode 'optics'")
    started = time.perf_counter()
    ocfg = cfg.optics
    rho = cfg.state()
    noise = None if args.exact else cfg.shot_config()
    eta = cfg["efficiency"]
    report = optics_tomography(rho, ocfg, noise, efficiency=eta)
    out = cfg.out
    extra = {"bands": [{**r, "value": [r["value"].real, r["value"].imag],
                        "true": [r["true"].real, r["true"].imag]}
                       for r in report.diagnostics["bands"]]}
    if args.check_probe_shift:
        ps = cfg["probe_shift"]
        shift = probe_shift_equivalence_check(rho, ps["offsets"], ocfg, ps["band"])
        extra["probe_shift"] = {"band": shift.band, "offsets": list(shift.offsets),
                                "max_discrepancy": shift.max_discrepancy}
    run = _emit(cfg, out, report, rho, started, None if noise is None else noise.shots, extra)
    _write_csv(out / "bands.csv",
               ["band", "M", "N", "est_re", "est_im", "true_re", "true_im", "abs_error", "p_spread", "n_p"],
               [[r["band"], r["M"], r["N"], _fmt(r["value"].real), _fmt(r["value"].imag),
                 _fmt(r["true"].real), _fmt(r["true"].imag), _fmt(abs(r["value"] - r["true"])),
                 _fmt(r["spread"]), r["n_p"]] for r in report.diagnostics["bands"]])
    if args.check_probe_shift:
        rows = []
        for t, vals in shift.values.items():
            for k, v in enumerate(vals):
                rows.append([shift.band, t, k + shift.band, k, _fmt(v.real), _fmt(v.imag)])
        _write_csv(out / "probe_shift.csv", ["band", "offset", "M", "N", "est_re", "est_im"], rows)
        print(f"probe-shift max discrepancy {shift.max_discrepancy:.3e}")
    print(json.dumps(run["metrics"]))
    return 0


def _trial_seed(seed: int, level_idx: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, level_idx, trial]).generate_state(1)[0])


def _offdiag_mse(est: np.ndarray, true: np.ndarray) -> float:
    iu = np.triu_indices(true.shape[0], 1)
    return float(np.mean(np.abs(est[iu] - true[iu]) ** 2))


def run_trial(task) -> tuple:
    """One sweep cell; module-level so worker processes can unpickle it."""
    raw, base_dir, level, seed = task
    cfg = ExperimentConfig(raw, base_dir=Path(base_dir))
    rho = cfg.state()
    shots = cfg.shot_config(level, seed)
    if cfg.mode == "optics":
        rep = optics_tomography(rho, cfg.optics, shots)
        return trace_distance(rep.rho_hat, rho), None, None
    plan = build_plan(cfg)
    rep = reconstruct(cfg, plan, sample_expectations(rho, plan, shots))
    td = trace_distance(rep.rho_hat, rho)
    if not raw["sweep"]["compare_three_state"] or cfg.mode != "minimal":
        return td, None, None
    two = minimal_plan(cfg["dim"], cfg.angles)
    three = redundant_plan(cfg["dim"], cfg.angles, cfg.gamma)
    est2 = reconstruct_minimal(two, sample_expectations(rho, two, shots)).raw_hermitian
    est3 = reconstruct_minimal(three, sample_expectations(rho, three, shots),
                               weighted=cfg["weighted"]).raw_hermitian
    return td, _offdiag_mse(est2, rho.matrix), _offdiag_mse(est3, rho.matrix)


def sweep_rows(cfg: ExperimentConfig) -> list[list[str]]:
    sw = cfg["sweep"]
    levels = sw["shot_levels"]
    if len(levels) < 2:
        raise ConfigInvalid("sweep needs at least two shot levels")
    trials = sw["trials"]
    tasks = [(cfg.raw, str(cfg.base_dir), lvl, _trial_seed(cfg.seed, li, t))
             for li, lvl in enumerate(levels) for t in range(trials)]
    if sw["workers"] > 1:
        with ProcessPoolExecutor(sw["workers"]) as pool:
            results = list(pool.map(run_trial, tasks))
    else:
        results = [run_trial(t) for t in tasks]
    rows = []
    compare = sw["compare_three_state"] and cfg.mode == "minimal"
    for li, lvl in enumerate(levels):
        chunk = results[li * trials:(li + 1) * trials]
        td = np.array([r[0] for r in chunk])
        row = [lvl, trials, _fmt(td.mean()), _fmt(td.std(ddof=1)) if trials > 1 else ""]
        if compare:
            row += [_fmt(np.mean([r[1] for r in chunk])), _fmt(np.mean([r[2] for r in chunk]))]
        rows.append(row)
    return rows


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    rows = sweep_rows(cfg)
    header = ["shots", "trials", "mean_trace_distance", "std_trace_distance"]
    if cfg["sweep"]["compare_three_state"] and cfg.mode == "minimal":
        header += ["mse_two_state", "mse_three_state"]
    cfg.out.mkdir(parents=True, exist_ok=True)
    _write_csv(cfg.out / "sweep.csv", header, rows)
    print(f"wrote {cfg.out / 'sweep.csv'} ({len(rows)} levels)")
    return 0


COMMANDS = {"plan": cmd_plan, "simulate": cmd_simulate, "reconstruct": cmd_reconstruct,
            "optics": cmd_optics, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="projtomo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--seed", type=int, help="overrides the config seed and TOMO_SEED")
        p.add_argument("--out", help="output directory (overrides config 'out')")
        p.add_argument("--exact", action="store_true", help="use exact expectations / histograms")
        if name == "simulate":
            p.add_argument("--plan", help="plan JSON (default OUT/plan.json)")
        if name == "reconstruct":
            p.add_argument("--expectations", help="expectation CSV (default OUT/expectations.csv)")
        if name == "optics":
            p.add_argument("--check-probe-shift", action="store_true")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config, args.seed)
        if args.out:
            cfg.raw["out"] = args.out
        return COMMANDS[args.command](cfg, args)
    except ConfigInvalid as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except NumericFailure as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except (OSError, InputFileError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except TomographyError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
