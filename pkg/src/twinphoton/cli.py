"""Command-line entry point: ``twinphoton <command> [options]``.

Exit codes: 0 success, 1 a built-in check failed, 2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .elements import Arm
from .experiments import (
    CoincidenceScan,
    MonteCarlo,
    QwpCoincidence,
    QwpIntensityScan,
    angle_grid,
    qwp_experiment_a,
    qwp_experiment_b,
    run_coincidence_scan,
    verify_rules,
)
from .models import (
    CELL_NAMES,
    BellSource,
    CircularPair,
    ModelKind,
    Source,
    StationSetting,
    analytic_joint,
    parse_source,
    polaroid_joint,
)
from .report import Report, angle_out
from .rng import check_seed
from .states import BellKind
from .stats import (
    DEFAULT_CHSH_ANGLES,
    chi2_quantile,
    chi_square_gof,
    chsh,
    correlation_E,
    estimate_cell,
    run_trials,
)

COMMANDS = ("analytic", "simulate", "scan", "chsh", "verify-rules", "experiment-a",
            "experiment-b", "compare")
FORMATS = ("table", "csv", "json")
SEED_ENV = "TWINPHOTON_SEED"
DEFAULT_SEED = 1729
DEFAULT_TRIALS = 100_000
CONFIG_KEYS = ("model", "source", "theta-a", "theta-b", "angles", "trials", "seed", "format",
               "output", "degrees", "workers")

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: ModelKind
    source: Source
    angles: tuple[float, ...]
    trials: int | None
    seed: int
    output_format: str = "table"
    output_path: str | None = None
    workers: int = 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twinphoton",
                                description="Polarization-entangled photon pair simulator.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="file of 'key = value' lines; flags take precedence")
    p.add_argument("--model", choices=[m.value for m in ModelKind])
    p.add_argument("--source", help="phi-plus, phi-minus, psi-plus, psi-minus or circular-pair")
    p.add_argument("--theta-a", dest="theta_a")
    p.add_argument("--theta-b", dest="theta_b", help="one angle, or a comma list for scan")
    p.add_argument("--angles", help="comma-separated angle list")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--degrees", action="store_true", default=None,
                   help="read input angles as degrees (reports stay in radians)")
    p.add_argument("--format", dest="format", choices=FORMATS)
    p.add_argument("--output", help="write the report here instead of stdout")
    p.add_argument("--workers", type=int, help="threads for Monte Carlo shards")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def _floats(text: str, degrees: bool) -> list[float]:
    try:
        vals = [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise UsageError(f"invalid angle list {text!r}") from None
    if any(not math.isfinite(v) for v in vals):
        raise UsageError("angles must be finite")
    return [math.radians(v) if degrees else v for v in vals]


def _bool(text: str | bool) -> bool:
    if isinstance(text, bool):
        return text
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"invalid boolean {text!r}")


def _int(text, name: str) -> int:
    try:
        return int(text)
    except (TypeError, ValueError):
        raise UsageError(f"invalid integer for {name}: {text!r}") from None


def parse_config(argv: Sequence[str], environ: dict[str, str] | None = None) -> RunConfig:
    """Merge defaults, environment seed, config file and flags (highest wins)."""
    environ = os.environ if environ is None else environ
    parser = build_parser()
    args = parser.parse_args(list(argv))
    try:
        return _resolve(args, environ)
    except UsageError as exc:
        parser.error(str(exc))


def _resolve(args: argparse.Namespace, environ) -> RunConfig:
    file_vals = read_config_file(args.config) if args.config else {}
    flag_vals = {
        "model": args.model, "source": args.source, "theta-a": args.theta_a,
        "theta-b": args.theta_b, "angles": args.angles, "trials": args.trials,
        "seed": args.seed, "format": args.format, "output": args.output,
        "degrees": args.degrees, "workers": args.workers,
    }
    merged = dict(file_vals)
    merged.update({k: v for k, v in flag_vals.items() if v is not None})
    cmd = args.command

    default_model = ModelKind.LOCAL_CIRCULAR if cmd == "experiment-a" else ModelKind.STANDARD_QM
    try:
        model = ModelKind(merged["model"]) if "model" in merged else default_model
    except ValueError:
        raise UsageError(f"unknown model {merged['model']!r}") from None
    if "source" in merged:
        try:
            source = parse_source(merged["source"])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    elif model is ModelKind.STANDARD_QM:
        source = BellSource(BellKind.PHI_PLUS)
    else:
        source = CircularPair()
    if model is ModelKind.STANDARD_QM and not isinstance(source, BellSource):
        raise UsageError("standard-qm needs a Bell-state source")

    degrees = _bool(merged.get("degrees", False))
    angles = _command_angles(cmd, merged, degrees)

    if "seed" in merged:
        seed = _int(merged["seed"], "seed")
    elif SEED_ENV in environ:
        seed = _int(environ[SEED_ENV], SEED_ENV)
    else:
        seed = DEFAULT_SEED
    try:
        seed = check_seed(seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    trials = _int(merged["trials"], "trials") if "trials" in merged else None
    if trials is None and cmd in ("simulate", "compare"):
        trials = DEFAULT_TRIALS
    if trials is not None and trials < 1:
        raise UsageError("trials must be at least 1")

    fmt = merged.get("format", "table")
    if fmt not in FORMATS:
        raise UsageError(f"unknown format {fmt!r}")
    workers = _int(merged.get("workers", 1), "workers")
    if workers < 1:
        raise UsageError("workers must be at least 1")
    return RunConfig(cmd, model, source, tuple(angles), trials, seed, fmt,
                     merged.get("output"), workers)


def _command_angles(cmd: str, vals: dict, degrees: bool) -> list[float]:
    listed = _floats(vals["angles"], degrees) if "angles" in vals else None
    ta = _floats(vals["theta-a"], degrees) if "theta-a" in vals else None
    tb = _floats(vals["theta-b"], degrees) if "theta-b" in vals else None
    if cmd in ("analytic", "simulate"):
        if listed is not None and ta is None and tb is None:
            if len(listed) != 2:
                raise UsageError(f"{cmd} needs exactly two angles")
            return listed
        if ta is None or tb is None or len(ta) != 1 or len(tb) != 1:
            raise UsageError(f"{cmd} needs --theta-a and --theta-b")
        return ta + tb
    if cmd == "scan":
        grid = tb if tb is not None else listed
        if ta is None or len(ta) != 1 or not grid:
            raise UsageError("scan needs --theta-a and a theta-b grid (--theta-b or --angles)")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise UsageError("theta-b grid must be strictly increasing")
        return ta + grid
    if cmd == "chsh":
        if listed is None:
            return list(DEFAULT_CHSH_ANGLES)
        if len(listed) != 4:
            raise UsageError("chsh needs four angles: a, a', b, b'")
        return listed
    if cmd in ("experiment-a", "compare"):
        default = angle_grid(360, 2 * math.pi) if cmd == "experiment-a" else angle_grid(24)
        grid = listed if listed is not None else default
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise UsageError("angle grid must be non-empty and strictly increasing")
        return grid
    if cmd == "experiment-b":
        if listed is None:
            return [0.0, 0.0]
        if len(listed) != 2:
            raise UsageError("experiment-b takes two plate-axis angles (A, B)")
        return listed
    if listed or ta or tb:
        raise UsageError(f"{cmd} takes no angles")
    return []


# --- execution -------------------------------------------------------------------

def _metadata(cfg: RunConfig) -> dict:
    return {
        "command": cfg.command,
        "model": cfg.model.value,
        "source": cfg.source.name,
        "angles": [angle_out(a) for a in cfg.angles],
        "trials": cfg.trials,
        "seed": cfg.seed,
        "version": __version__,
    }


def _joint_fields(j) -> dict:
    return {f"p_{c}": v for c, v in zip(CELL_NAMES, j.cells())}


def _analytic(cfg: RunConfig) -> tuple[Report, bool]:
    rep = Report(_metadata(cfg), ("model", "source", "theta_a", "theta_b", "p_pp", "p_pa",
                                  "p_ap", "p_aa", "E"))
    ta, tb = cfg.angles
    j = polaroid_joint(cfg.model, cfg.source, ta, tb)
    rep.add(model=cfg.model.value, source=cfg.source.name, theta_a=angle_out(ta),
            theta_b=angle_out(tb), E=correlation_E(j), **_joint_fields(j))
    rep.summary = {"marginal_a": j.marginal_a, "marginal_b": j.marginal_b}
    return rep, True


def _simulate(cfg: RunConfig) -> tuple[Report, bool]:
    cols = ("model", "source", "theta_a", "theta_b", "seed", "trials", "cell", "count",
            "frequency", "ci_low", "ci_high", "analytic", "within_4sigma")
    rep = Report(_metadata(cfg), cols)
    ta, tb = cfg.angles
    sa, sb = StationSetting.polaroid(ta), StationSetting.polaroid(tb)
    j = analytic_joint(cfg.model, cfg.source, sa, sb)
    tally = run_trials(cfg.model, cfg.source, sa, sb, cfg.trials, cfg.seed, workers=cfg.workers)
    n = tally.n_total
    all_ok = True
    for cell, p in zip(CELL_NAMES, j.cells()):
        est = estimate_cell(tally, cell)
        ok = abs(est.frequency - p) <= 4 * math.sqrt(p * (1 - p) / n) if 0 < p < 1 \
            else tally.count(cell) == round(p * n)
        all_ok = all_ok and ok
        rep.add(model=cfg.model.value, source=cfg.source.name, theta_a=angle_out(ta),
                theta_b=angle_out(tb), seed=cfg.seed, trials=n, cell=cell,
                count=tally.count(cell), frequency=est.frequency, ci_low=est.ci_low,
                ci_high=est.ci_high, analytic=p, within_4sigma=ok)
    gof = chi_square_gof(tally, j)
    rep.summary = {"chi2": gof.statistic, "dof": gof.dof, "p_value": gof.p_value,
                   "model_violation": gof.violation, "consistent": all_ok and not gof.violation}
    return rep, all_ok and not gof.violation


def _scan(cfg: RunConfig) -> tuple[Report, bool]:
    cols = ("model", "source", "theta_a", "theta_b", "p_pp", "p_pa", "p_ap", "p_aa", "E",
            "n_pp", "n_pa", "n_ap", "n_aa")
    rep = Report(_metadata(cfg), cols)
    mc = MonteCarlo(cfg.trials, cfg.seed) if cfg.trials else None
    spec = CoincidenceScan(cfg.source, cfg.model, cfg.angles[0], cfg.angles[1:], mc)
    for row in run_coincidence_scan(spec):
        counts = {}
        if row.tally is not None:
            counts = {f"n_{c}": v for c, v in zip(CELL_NAMES, row.tally.counts())}
        rep.add(model=cfg.model.value, source=cfg.source.name, theta_a=angle_out(spec.theta_a),
                theta_b=angle_out(row.theta_b), E=correlation_E(row.joint),
                **_joint_fields(row.joint), **counts)
    return rep, True


def _chsh(cfg: RunConfig) -> tuple[Report, bool]:
    rep = Report(_metadata(cfg), ("model", "source", "term", "theta_a", "theta_b", "E"))
    a, a2, b, b2 = cfg.angles
    res = chsh(cfg.model, cfg.source, a, a2, b, b2, n=cfg.trials,
               seed=cfg.seed if cfg.trials else None, workers=cfg.workers)
    terms = [("E(a,b)", a, b, res.e_ab), ("E(a,b')", a, b2, res.e_ab2),
             ("E(a',b)", a2, b, res.e_a2b), ("E(a',b')", a2, b2, res.e_a2b2)]
    for name, ta, tb, e in terms:
        rep.add(model=cfg.model.value, source=cfg.source.name, term=name,
                theta_a=angle_out(ta), theta_b=angle_out(tb), E=e)
    rep.summary = {"s": res.s, "within_classical_bound": res.within_classical_bound,
                   "classical_bound": 2.0, "quantum_bound": 2 * math.sqrt(2),
                   "mode": "empirical" if cfg.trials else "analytic"}
    return rep, True


def _verify_rules(cfg: RunConfig) -> tuple[Report, bool]:
    cols = ("bell_state", "found_slope", "found_offset", "found_rule", "listed_slope",
            "listed_offset", "listed_rule", "agrees")
    rep = Report(_metadata(cfg), cols)
    checks = verify_rules()
    for c in checks:
        rep.add(bell_state=c.kind.value, found_slope=c.found.slope,
                found_offset=angle_out(c.found.offset), found_rule=c.found.describe(),
                listed_slope=c.listed.slope, listed_offset=angle_out(c.listed.offset),
                listed_rule=c.listed.describe(), agrees=c.agrees)
    flagged = [c.kind.value for c in checks if not c.agrees]
    phi_ok = all(c.agrees for c in checks if c.kind in (BellKind.PHI_PLUS, BellKind.PHI_MINUS))
    rep.summary = {"phi_rules_reproduced": phi_ok, "discrepancies": flagged}
    return rep, phi_ok


def _experiment_a(cfg: RunConfig) -> tuple[Report, bool]:
    cols = ("model", "source", "arm", "theta", "pass_probability", "frequency")
    rep = Report(_metadata(cfg), cols)
    mc = MonteCarlo(cfg.trials, cfg.seed) if cfg.trials else None
    spec = QwpIntensityScan(cfg.angles, cfg.model, cfg.source, Arm.NU1, monte_carlo=mc)
    rows = qwp_experiment_a(spec)
    for r in rows:
        rep.add(model=cfg.model.value, source=cfg.source.name, arm=spec.arm.value,
                theta=angle_out(r.theta), pass_probability=r.pass_probability,
                frequency=r.frequency)
    spread = max(abs(r.pass_probability - 0.5) for r in rows)
    constant = spread < 1e-12
    rep.summary = {"max_deviation_from_half": spread, "constant": constant}
    ok = constant
    if mc is not None:
        emp = max(abs(r.frequency - 0.5) for r in rows)
        rep.summary["max_empirical_deviation"] = emp
        rep.summary["empirical_within_0.01"] = emp <= 0.01
        ok = ok and emp <= 0.01
    return rep, ok


def _experiment_b(cfg: RunConfig) -> tuple[Report, bool]:
    cols = ("model", "source", "frame", "detector_a", "detector_b", "probability", "count")
    rep = Report(_metadata(cfg), cols)
    mc = MonteCarlo(cfg.trials, cfg.seed) if cfg.trials else None
    res = qwp_experiment_b(QwpCoincidence(cfg.model, cfg.source, cfg.angles[0], cfg.angles[1], mc))
    labels = ("R", "L")
    ok = True
    for frame, mat in (("matched", res.matched), ("lab", res.lab)):
        for i, la in enumerate(labels):
            for k, lb in enumerate(labels):
                count = None
                if frame == "matched" and res.matched_tallies is not None:
                    count = res.matched_tallies[i][k].n_pp
                    if mat[i, k] == 0.0 and count != 0:
                        ok = False
                rep.add(model=cfg.model.value, source=cfg.source.name, frame=frame,
                        detector_a=la, detector_b=lb, probability=float(mat[i, k]), count=count)
    diag = bool(np.allclose(res.matched, np.diag([0.5, 0.5]), atol=1e-12, rtol=0))
    rep.summary = {"matched_diagonal": diag, "zero_cells_silent": ok}
    return rep, ok


def _compare(cfg: RunConfig) -> tuple[Report, bool]:
    rep = Report(_metadata(cfg), ("section", "subject", "metric", "value"))
    grid = cfg.angles
    worst = 0.0
    sources: list[tuple[str, Source, BellKind]] = [
        (k.value, BellSource(k), k) for k in BellKind
    ] + [("circular-pair", CircularPair(), BellKind.PHI_PLUS)]
    for name, src, kind in sources:
        diff = 0.0
        for ta in grid:
            for tb in grid:
                qm = polaroid_joint(ModelKind.STANDARD_QM, BellSource(kind), ta, tb).as_array()
                cr = polaroid_joint(ModelKind.CORRELATED_RULE, src, ta, tb).as_array()
                diff = max(diff, float(np.max(np.abs(qm - cr))))
        worst = max(worst, diff)
        rep.add(section="equivalence", subject=f"correlated-rule:{name} vs standard-qm:{kind.value}",
                metric="max_abs_cell_difference", value=diff)
    equivalent = worst <= 1e-12

    par = StationSetting.polaroid(0.0)
    phi = BellSource(BellKind.PHI_PLUS)
    qm = analytic_joint(ModelKind.STANDARD_QM, phi, par, par)
    lc = analytic_joint(ModelKind.LOCAL_CIRCULAR, CircularPair(), par, par)
    tally = run_trials(ModelKind.LOCAL_CIRCULAR, CircularPair(), par, par, cfg.trials, cfg.seed,
                       workers=cfg.workers)
    gof = chi_square_gof(tally, qm)
    q999 = chi2_quantile(0.999, max(gof.dof, 1))
    distinguished = gof.violation or gof.statistic > q999
    for subject, metric, value in [
        ("standard-qm:phi-plus", "p_pp_parallel", qm.p_pp),
        ("local-circular:circular-pair", "p_pp_parallel", lc.p_pp),
        ("local-circular sample vs standard-qm", "chi2", gof.statistic),
        ("local-circular sample vs standard-qm", "dof", gof.dof),
        ("local-circular sample vs standard-qm", "chi2_q999", q999),
        ("local-circular sample vs standard-qm", "forbidden_cells_observed", gof.violation),
    ]:
        rep.add(section="divergence", subject=subject, metric=metric, value=value)
    for model, src in [(ModelKind.STANDARD_QM, phi), (ModelKind.CORRELATED_RULE, CircularPair()),
                       (ModelKind.LOCAL_CIRCULAR, CircularPair())]:
        rep.add(section="chsh", subject=f"{model.value}:{src.name}", metric="s",
                value=chsh(model, src, *DEFAULT_CHSH_ANGLES).s)
    rep.summary = {"equivalent": equivalent, "max_equivalence_difference": worst,
                   "local_circular_distinguished": distinguished}
    return rep, equivalent and distinguished


_HANDLERS = {
    "analytic": _analytic, "simulate": _simulate, "scan": _scan, "chsh": _chsh,
    "verify-rules": _verify_rules, "experiment-a": _experiment_a,
    "experiment-b": _experiment_b, "compare": _compare,
}


def execute(cfg: RunConfig) -> tuple[Report, int]:
    report, ok = _HANDLERS[cfg.command](cfg)
    return report, EXIT_OK if ok else EXIT_CHECK


def emit(report: Report, cfg: RunConfig) -> int:
    text = report.render(cfg.output_format)
    if cfg.output_path is None:
        sys.stdout.write(text)
        return EXIT_OK
    try:
        with open(cfg.output_path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        print(f"twinphoton: cannot write {cfg.output_path}: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    cfg = parse_config(sys.argv[1:] if argv is None else argv)
    try:
        report, code = execute(cfg)
    except ValueError as exc:
        print(f"twinphoton: {exc}", file=sys.stderr)
        return EXIT_USAGE
    io_code = emit(report, cfg)
    return io_code if io_code != EXIT_OK else code


if __name__ == "__main__":
    sys.exit(main())
