"""Command-line front end.

Every subcommand reads a flat ``key = value`` config file, validates it
against the command's key table (reporting every bad key at once), runs,
and writes its artifacts plus ``manifest.json`` into ``--out``.  Failures
print one JSON line on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

EXIT_CONFIG = 2
EXIT_RUNTIME = 1


class ConfigError(ValueError):
    def __init__(self, problems: dict[str, str]):
        self.problems = problems
        super().__init__("; ".join(f"{k}: {v}" for k, v in problems.items()))


# -- value parsers --------------------------------------------------------------


def _int_list(s: str) -> list[int]:
    return [int(v) for v in s.replace(",", " ").split()]


def _float_list(s: str) -> list[float]:
    return [float(v) for v in s.replace(",", " ").split()]


def _opt_float(s: str) -> float | None:
    return None if s.strip().lower() in ("", "none") else float(s)


def _opt_int(s: str) -> int | None:
    return None if s.strip().lower() in ("", "none") else int(s)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _choice(*options: str) -> Callable[[str], str]:
    def parse(s: str) -> str:
        v = s.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v

    return parse


def _vectors(s: str) -> list[list[float]]:
    """``"0.1, 0.2; 0.3, 0.4"`` -> two vectors."""
    out = [_float_list(part) for part in s.split(";") if part.strip()]
    if not out:
        raise ValueError("empty")
    return out


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    doc: str = ""


_SCHEME = {
    "q": Key(int, 2, "patch steps Q (1: linear hats, 2: higher-order patches)"),
    "s": Key(int, 2, "hop s"),
    "p": Key(int, 2, "polynomial order P"),
}

SCHEMA: dict[str, dict[str, Key]] = {
    "train": {
        "function": Key(str, "separable3d", "synthetic function id (ignored when data is set)"),
        "data": Key(str, "", "CSV dataset path"),
        "n_inputs": Key(int, 3, "input count for synthetic functions"),
        "n_samples": Key(int, 8000, "LHS sample count"),
        "model": Key(_choice("full", "tucker", "cp"), "cp", "model kind"),
        "nodes": Key(_int_list, [21], "nodes per dimension (one value is broadcast)"),
        "modes": Key(_int_list, [2], "CP modes M, or Tucker modes per dimension"),
        **_SCHEME,
        "epochs": Key(int, 500),
        "batch_size": Key(int, 128),
        "lr": Key(float, 1e-3),
        "stop_mse": Key(_opt_float, 4e-4, "stop when train MSE reaches this; none disables"),
        "train_fraction": Key(float, 0.8),
        "optimizer": Key(_choice("adam", "sgd"), "adam"),
    },
    "solve-poisson": {
        "nodes": Key(int, 41),
        **{k: Key(int, 1) for k in ("q", "s", "p")},
        "method": Key(_choice("galerkin", "energy"), "galerkin"),
        "quad_order": Key(_opt_int, None, "Gauss points per segment; none picks the default"),
    },
    "convergence": {
        "node_counts": Key(_int_list, [41, 81, 161, 321]),
        **{k: Key(int, 1) for k in ("q", "s", "p")},
    },
    "solve-heat": {
        "n_x": Key(int, 64),
        "n_t": Key(int, 64),
        "n_power": Key(int, 8),
        "n_absorptivity": Key(int, 8),
        "modes": Key(int, 16),
        **_SCHEME,
        "n_colloc": Key(int, 1000, "(t, Pw, eta) samples per epoch"),
        "epochs": Key(int, 3000),
        "lr": Key(float, 1e-2),
        "lr_final": Key(float, 1e-4),
        "length": Key(float, 1e-3),
        "t_final": Key(float, 4e-3),
        "diffusivity": Key(float, 5e-6),
        "speed": Key(float, 0.2),
        "beam_radius": Key(float, 1e-4),
        "power_bounds": Key(_float_list, [100.0, 200.0]),
        "absorptivity_bounds": Key(_float_list, [0.3, 0.6]),
        "initial_temperature": Key(float, 0.0, "uniform IC; the BC takes the same value"),
        "fd_nx": Key(int, 129, "FD oracle spatial nodes"),
        "fd_stride": Key(int, 4, "compare every n-th FD time level"),
    },
    "calibrate": {
        "checkpoint": Key(str, "", "model checkpoint (JSON)"),
        "observations": Key(_vectors, None, "output vectors separated by ';'"),
        "free": Key(_int_list, [], "0-based free input indices (empty: all)"),
        "fixed": Key(_float_list, [], "values for every input; free entries ignored"),
        "starts": Key(int, 50),
        "iterations": Key(int, 1000),
        "lr": Key(float, 2e-2),
        "lr_final": Key(float, 1e-7),
        "report": Key(_bool, False, "also write the basin report"),
        "probe_density": Key(int, 41),
    },
    "gradcheck": {
        "kinds": Key(lambda s: [_choice("full", "tucker", "cp")(v) for v in s.replace(",", " ").split()], ["full", "tucker", "cp"]),
        "instances": Key(int, 100),
        "probes": Key(int, 24),
    },
}
for _table in SCHEMA.values():
    _table["seed"] = Key(int, 0)


def parse_config(command: str, text: str = "", seed: int | None = None) -> dict[str, Any]:
    """Resolve a config text against the command's key table.

    Unknown keys, unparseable values and failed cross-checks are all
    collected before raising :class:`ConfigError`.
    """
    table = SCHEMA[command]
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str
    problems: dict[str, str] = {}
    try:
        cp.read_string("[run]\n" + text)
    except configparser.DuplicateOptionError as e:
        raise ConfigError({e.option: "duplicate key"}) from None
    except configparser.Error as e:
        raise ConfigError({"<syntax>": str(e).splitlines()[0]}) from None
    for section in cp.sections():
        if section != "run":
            problems[f"[{section}]"] = "sections are not supported"
    raw = dict(cp["run"])
    resolved = {k: key.default for k, key in table.items()}
    for k, v in raw.items():
        if k not in table:
            problems[k] = "unknown key"
            continue
        try:
            resolved[k] = table[k].parse(v)
        except (TypeError, ValueError) as e:
            problems[k] = f"bad value {v!r} ({e})"
    if seed is not None:
        resolved["seed"] = seed
    for k, msg in _cross_check(command, resolved).items():
        problems.setdefault(k, msg)
    if problems:
        raise ConfigError(problems)
    return resolved


def _cross_check(command: str, c: dict) -> dict[str, str]:
    bad = {}
    for k, v in c.items():
        if k in ("epochs", "batch_size", "n_samples", "starts", "iterations", "instances", "probes", "n_colloc"):
            if isinstance(v, int) and v < 1:
                bad[k] = "must be positive"
        if k in ("lr", "lr_final") and not v > 0:
            bad[k] = "must be positive"
    if "q" in c:
        from .grid import PatchScheme

        try:
            PatchScheme(c["q"], c["s"], c["p"])
        except ValueError as e:
            bad["q"] = bad["s"] = bad["p"] = str(e)
    if command == "train":
        if not 0 < c["train_fraction"] < 1:
            bad["train_fraction"] = "must lie in (0, 1)"
        if not c["nodes"] or min(c["nodes"]) < 2:
            bad["nodes"] = "need at least 2 nodes per dimension"
        if not c["modes"] or min(c["modes"]) < 1:
            bad["modes"] = "modes must be positive"
    if command == "convergence" and len(c["node_counts"]) < 3:
        bad["node_counts"] = "need at least 3 node counts"
    if command == "solve-heat":
        for k in ("power_bounds", "absorptivity_bounds"):
            if len(c[k]) != 2 or not c[k][1] > c[k][0]:
                bad[k] = "need two increasing values"
        if c["modes"] < 1:
            bad["modes"] = "must be positive"
    if command == "calibrate":
        if not c["checkpoint"]:
            bad["checkpoint"] = "required"
        if c["observations"] is None:
            bad["observations"] = "required"
    return bad


# -- commands -------------------------------------------------------------------


def _scheme(c):
    from .grid import PatchScheme

    return PatchScheme(c["q"], c["s"], c["p"])


def cmd_train(c: dict, out: Path) -> list[Path]:
    from .grid import uniform_product_grid
    from .model import init_model, save_checkpoint
    from .trainer import TrainConfig, fmt, lhs_sample, load_csv, metrics, train, write_history

    if c["data"]:
        ds = load_csv(c["data"])
    else:
        ds = lhs_sample(c["function"], c["n_samples"], seed=c["seed"], n_inputs=c["n_inputs"])
    I = ds.n_inputs
    nodes = c["nodes"] * I if len(c["nodes"]) == 1 else c["nodes"]
    if len(nodes) != I:
        raise ConfigError({"nodes": f"need 1 or {I} values"})
    modes = c["modes"][0] if c["model"] == "cp" or len(c["modes"]) == 1 else c["modes"]
    model = init_model(c["model"], uniform_product_grid(nodes), _scheme(c), modes=modes, seed=c["seed"], n_outputs=ds.n_outputs)
    cfg = TrainConfig(
        epochs=c["epochs"],
        batch_size=c["batch_size"],
        lr=c["lr"],
        stop_mse=c["stop_mse"],
        seed=c["seed"],
        train_fraction=c["train_fraction"],
        optimizer=c["optimizer"],
    )
    res = train(model, ds, cfg)
    paths = [save_checkpoint(res.model, out / "checkpoint.json"), write_history(res.history, out / "history.csv")]
    tr, te = metrics(res.model, ds.subset(res.train_idx)), metrics(res.model, ds.subset(res.test_idx))
    rows = [("train_mse", fmt(tr["mse"])), ("test_mse", fmt(te["mse"]))]
    rows += [(f"test_r2_{l + 1}", "" if r is None else fmt(r)) for l, r in enumerate(te["r2"])]
    rows += [("epochs_run", str(res.history[-1][0])), ("converged_epoch", "" if res.converged_epoch is None else str(res.converged_epoch))]
    paths.append(_write_rows(out / "metrics.csv", ["metric", "value"], rows))
    return paths


def cmd_solve_poisson(c: dict, out: Path) -> list[Path]:
    import numpy as np

    from .grid import build_uniform_grid
    from .solver import PoissonProblem, h1_error, manufactured_u, solve_poisson_energy, solve_poisson_galerkin
    from .trainer import fmt

    problem = PoissonProblem()
    grid = build_uniform_grid(problem.lo, problem.hi, c["nodes"])
    q = c["quad_order"]
    if c["method"] == "galerkin":
        model = solve_poisson_galerkin(grid, _scheme(c), problem, q)
    else:
        model = solve_poisson_energy(grid, _scheme(c), problem=problem, quad_order=q).model
    x = grid.nodes
    u = model.evaluate(x[:, None])[:, 0]
    rows = [(fmt(a), fmt(b), fmt(e)) for a, b, e in zip(x, u, manufactured_u(x))]
    err = h1_error(model)
    return [
        _write_rows(out / "solution.csv", ["x", "u", "u_exact"], rows),
        _write_rows(out / "error.csv", ["metric", "value"], [("h1_error", fmt(err)), ("max_nodal_error", fmt(float(np.max(np.abs(u - manufactured_u(x))))))]),
    ]


def cmd_convergence(c: dict, out: Path) -> list[Path]:
    from .plot import write_loglog_svg
    from .solver import convergence_study

    scheme = _scheme(c)
    rep = convergence_study(scheme, c["node_counts"])
    svg = write_loglog_svg(
        out / "convergence.svg",
        [r[1] for r in rep.rows],
        [r[2] for r in rep.rows],
        slope=rep.slope,
        title=f"H1 error, Q={scheme.q_steps} s={scheme.hop} P={scheme.poly_order}",
        xlabel="degrees of freedom",
        ylabel="relative H1 error",
    )
    return [rep.write_csv(out / "convergence.csv"), svg]


def cmd_solve_heat(c: dict, out: Path) -> list[Path]:
    from .model import save_checkpoint
    from .solver import HeatSolveConfig, HeatSTPProblem, compare_corners, imposition_errors, solve_heat_stp, write_slice_csv
    from .trainer import fmt

    T0 = c["initial_temperature"]
    problem = HeatSTPProblem(
        length=c["length"],
        t_final=c["t_final"],
        diffusivity=c["diffusivity"],
        speed=c["speed"],
        beam_radius=c["beam_radius"],
        power_bounds=tuple(c["power_bounds"]),
        absorptivity_bounds=tuple(c["absorptivity_bounds"]),
        initial_temperature=T0,
        boundary_temperature=(T0, T0),
    )
    cfg = HeatSolveConfig(
        n_x=c["n_x"],
        n_t=c["n_t"],
        n_power=c["n_power"],
        n_absorptivity=c["n_absorptivity"],
        modes=c["modes"],
        scheme=_scheme(c),
        n_colloc=c["n_colloc"],
        epochs=c["epochs"],
        lr=c["lr"],
        lr_final=c["lr_final"],
        seed=c["seed"],
    )
    sol = solve_heat_stp(problem, cfg)
    paths = [save_checkpoint(sol.model, out / "checkpoint.json")]
    paths.append(_write_rows(out / "history.csv", ["epoch", "loss"], [(str(e), fmt(v)) for e, v in sol.history]))
    rows = []
    for k, cc in enumerate(compare_corners(sol, c["fd_nx"], c["fd_stride"])):
        paths.append(write_slice_csv(cc.x, cc.t, cc.predicted, out / f"slice_{k}.csv"))
        paths.append(write_slice_csv(cc.x, cc.t, cc.reference, out / f"fd_{k}.csv"))
        rows.append((str(k), fmt(cc.power), fmt(cc.absorptivity), fmt(cc.r2)))
    ic, bc = imposition_errors(sol)
    paths.append(_write_rows(out / "r2.csv", ["corner", "power", "absorptivity", "r2"], rows))
    paths.append(_write_rows(out / "imposition.csv", ["metric", "value"], [("ic_max_error", fmt(ic)), ("bc_max_error", fmt(bc))]))
    return paths


def cmd_calibrate(c: dict, out: Path) -> list[Path]:
    import numpy as np

    from .calibrate import CalibrationConfig, CalibrationProblem, calibrate, identifiability_report
    from .model import load_checkpoint
    from .trainer import fmt, to_model_inputs

    model = load_checkpoint(c["checkpoint"])
    I = model.n_inputs
    fixed = None
    if c["fixed"]:
        if len(c["fixed"]) != I:
            raise ConfigError({"fixed": f"need {I} values"})
        fixed = to_model_inputs(model, np.array(c["fixed"]))[0] if "input_bounds" in model.meta else np.array(c["fixed"])
    free = c["free"] or None
    if free is not None and any(not 0 <= i < I for i in free):
        raise ConfigError({"free": f"indices must lie in [0, {I - 1}]"})
    problem = CalibrationProblem(model, c["observations"], free=free, fixed=fixed, starts=c["starts"], seed=c["seed"])
    cfg = CalibrationConfig(iterations=c["iterations"], lr=c["lr"], lr_final=c["lr_final"])
    res = calibrate(problem, cfg)
    paths = [res.write_csv(out / "calibration.csv")]
    if res.x_star_raw is not None:
        paths.append(_write_rows(out / "x_star_raw.csv", [f"x_{i + 1}" for i in range(I)], [[fmt(v) for v in res.x_star_raw]]))
    if c["report"]:
        rep = identifiability_report(problem, density=c["probe_density"], config=cfg)
        rows = [[str(k + 1), fmt(b.objective), str(b.members)] + [fmt(v) for v in b.point] for k, b in enumerate(rep.basins)]
        paths.append(_write_rows(out / "basins.csv", ["rank", "objective", "members"] + [f"x_{i + 1}" for i in range(I)], rows))
    return paths


def cmd_gradcheck(c: dict, out: Path) -> list[Path]:
    from .audit import gradient_audit
    from .trainer import fmt

    rows = []
    for k, kind in enumerate(c["kinds"]):
        r = gradient_audit(kind, c["instances"], seed=c["seed"] + k, n_probes=c["probes"])
        rows.append((kind, str(r.instances), fmt(r.grad_params_max_rel), fmt(r.grad_input_max_rel)))
    return [_write_rows(out / "gradcheck.csv", ["kind", "instances", "grad_params_max_rel", "grad_input_max_rel"], rows)]


COMMANDS: dict[str, Callable[[dict, Path], list[Path]]] = {
    "train": cmd_train,
    "solve-poisson": cmd_solve_poisson,
    "convergence": cmd_convergence,
    "solve-heat": cmd_solve_heat,
    "calibrate": cmd_calibrate,
    "gradcheck": cmd_gradcheck,
}


# -- plumbing -------------------------------------------------------------------


def _write_rows(path: Path, header, rows) -> Path:
    import csv

    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, config: dict, artifacts: list[Path]) -> Path:
    from . import __version__

    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "artifacts": {p.name: _sha256(p) for p in sorted(artifacts)},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _fail(kind: str, message: str, code: int, keys=None) -> int:
    err = {"status": "error", "kind": kind, "message": message}
    if keys is not None:
        err["keys"] = keys
    print(json.dumps(err, sort_keys=True), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="inn", description="Interpolating neural network runs.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="key = value config file")
        sp.add_argument("--out", type=Path, required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    threads = os.environ.get("INN_THREADS")
    if threads is not None and not (threads.isdigit() and int(threads) > 0):
        return _fail("environment", f"INN_THREADS must be a positive integer, got {threads!r}", EXIT_CONFIG, ["INN_THREADS"])
    try:
        text = args.config.read_text() if args.config else ""
    except OSError as e:
        return _fail("config", f"cannot read config: {e}", EXIT_CONFIG, ["--config"])
    try:
        config = parse_config(args.command, text, args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        artifacts = COMMANDS[args.command](config, args.out)
    except ConfigError as e:
        return _fail("config", str(e), EXIT_CONFIG, sorted(e.problems))
    except Exception as e:  # noqa: BLE001 - reported as a machine-readable line
        return _fail(type(e).__name__, str(e), EXIT_RUNTIME)
    write_manifest(args.out, args.command, config, artifacts)
    print(json.dumps({"status": "ok", "command": args.command, "out": str(args.out)}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
