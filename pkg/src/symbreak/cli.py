"""Command-line runner: ``symbreak fringe|detect|scaling|bcs``.

Configuration comes from a JSON file holding one object per experiment
(``{"fringe": {...}, "detect": {...}}``), overridden by ``--param KEY=VALUE``
flags (VALUE parsed as JSON).  Every output file starts with a metadata header
recording the resolved configuration and seed, so reruns are byte-identical.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bcs, detection, experiments, fluctuations, modes

log = logging.getLogger("symbreak")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "fringe": {
        "model": {"variant": "ring", "n_fringes": 4, "L": 1.0},
        "N": 100,
        "thetas": [0.0],
        "t": 0.0,
        "n_points": 1025,
    },
    "detect": {
        "model": {"variant": "ring", "n_fringes": 4, "L": 1.0},
        "N": 500,
        "n_detect": 1000,
        "t": 0.0,
        "n_runs": 200,
        "phase_bins": 36,
        "density_bins": 32,
    },
    "scaling": {
        "model": {"variant": "ring", "n_fringes": 4, "L": 1.0},
        "position": 0.03,
        "dV": 0.01,
        "theta": 0.0,
        "N_values": [100, 1000, 10000],
        "superposition_N": [100, 200, 400],
        "theorem_N": [16, 64, 256, 1024, 4096],
        "bcs_M": [64, 256, 1024, 4096],
        "bcs_bandwidth": 20.0,
        "bcs_coupling": 1.0,
    },
    "bcs": {
        "gap": 1.0,
        "bandwidth": 50.0,
        "M": 2000,
        "tunneling_sq": 1e-4,
        "dtheta": 1.0,
        "overlap_base_M": 100,
        "overlap_copies": [1, 2, 4, 8, 16, 32],
        "convergence": [[50.0, 500], [50.0, 2000], [1000.0, 8000], [2000.0, 8000]],
        "n_theta": 73,
        "n_sectors": 72,
        "measured_theta": 1.5707963267948966,
    },
}


def build_model(desc):
    desc = dict(desc)
    variant = desc.pop("variant", None)
    try:
        if variant == "ring":
            if "k" in desc:
                return modes.RingModes(k=float(desc["k"]), L=float(desc.get("L", 1.0)))
            return modes.RingModes.with_fringes(int(desc.get("n_fringes", 4)), float(desc.get("L", 1.0)))
        if variant == "gaussian":
            return modes.GaussianModes(omega=float(desc["omega"]), d=float(desc["d"]),
                                       mass=float(desc.get("mass", 1.0)))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad model parameters: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown model variant {variant!r}")


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _positive_int(cfg, key, minimum=1):
    v = cfg[key]
    _require(isinstance(v, int) and not isinstance(v, bool) and v >= minimum,
             f"{key} must be an integer >= {minimum}, got {v!r}")


def validate(command, cfg):
    """Check every parameter against module preconditions before computing."""
    if command in ("fringe", "detect", "scaling"):
        build_model(cfg["model"])
    if command == "fringe":
        _positive_int(cfg, "N")
        _require(len(cfg["thetas"]) >= 1, "thetas must be nonempty")
        _positive_int(cfg, "n_points", 2)
        _require(cfg["t"] >= 0, "t must be >= 0")
    elif command == "detect":
        _positive_int(cfg, "N")
        _positive_int(cfg, "n_runs")
        _require(isinstance(cfg["n_detect"], int) and 0 <= cfg["n_detect"] <= 2 * cfg["N"],
                 "n_detect must lie in [0, 2N]")
        _positive_int(cfg, "phase_bins")
        _positive_int(cfg, "density_bins")
    elif command == "scaling":
        for key in ("N_values", "superposition_N", "theorem_N", "bcs_M"):
            _require(len(cfg[key]) >= 3, f"{key} needs at least 3 points")
            _require(all(isinstance(n, int) and n >= 1 for n in cfg[key]),
                     f"{key} entries must be positive integers")
        _require(cfg["dV"] > 0, "dV must be positive")
        _require(cfg["bcs_bandwidth"] > 0, "bcs_bandwidth must be positive")
        lo, hi = build_model(cfg["model"]).domain(0.0)
        _require(lo <= cfg["position"] <= hi, "position outside the model domain")
    elif command == "bcs":
        _require(cfg["gap"] > 0, "gap must be positive")
        _require(cfg["tunneling_sq"] >= 0, "tunneling_sq must be >= 0")
        _positive_int(cfg, "M")
        _require(cfg["bandwidth"] >= 10 * cfg["gap"], "bandwidth must be >= 10 gap")
        for W, M in cfg["convergence"]:
            _require(W >= 10 * cfg["gap"] and int(M) >= 1, f"bad convergence point {(W, M)}")
        _require(0 < np.mod(cfg["dtheta"], 2 * np.pi), "dtheta must be nonzero mod 2 pi")
        _positive_int(cfg, "n_sectors")
        _positive_int(cfg, "n_theta", 2)


class Writer:
    def __init__(self, out_dir, command, cfg, seed):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.meta = {"command": command, "config": cfg, "seed": seed}
        self.header = [
            f"symbreak {command}",
            "config: " + json.dumps(cfg, sort_keys=True),
            f"seed: {seed}",
        ]
        self.files = []

    def csv(self, name, body):
        text = "".join(f"# {h}\n" for h in self.header) + body
        self._write(name, text)

    def table(self, name, columns, rows):
        lines = [",".join(columns)]
        for row in rows:
            lines.append(",".join(_fmt(x) for x in row))
        self.csv(name, "\n".join(lines) + "\n")

    def json(self, name, payload):
        doc = {"meta": self.meta}
        doc.update(payload)
        self._write(name, json.dumps(doc, indent=2, ensure_ascii=False) + "\n")

    def _write(self, name, text):
        path = self.out / name
        path.write_text(text, encoding="utf-8")
        self.files.append(str(path))


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _strip_header(csv_text):
    return "".join(line + "\n" for line in csv_text.splitlines() if not line.startswith("#"))


def cmd_fringe(cfg, w: Writer, threads):
    model = build_model(cfg["model"])
    t = cfg["t"]
    lo, hi = model.domain(t)
    grid = np.linspace(lo, hi, cfg["n_points"])
    flat = modes.no_fringe_profile(model, cfg["N"], t, grid)
    w.csv("no_fringe.csv", _strip_header(flat.to_csv()))
    summary = []
    for i, theta in enumerate(cfg["thetas"]):
        prof = modes.fringe_profile(model, cfg["N"], theta, t, grid)
        w.csv(f"fringe_{i:03d}.csv", _strip_header(prof.to_csv()))
        summary.append({"index": i, "theta": float(theta), "visibility": modes.visibility(prof),
                        "integral": prof.integrate()})
    w.json("fringe_summary.json", {"no_fringe_integral": flat.integrate(), "profiles": summary})


def cmd_detect(cfg, w: Writer, threads):
    model = build_model(cfg["model"])
    seed = w.meta["seed"]
    single = detection.run_detection(cfg["N"], cfg["n_detect"], model, cfg["t"],
                                     detection.run_seed(seed, 0))
    w.json("detection_run.json", {"run": single.to_dict()})
    w.csv("detection_positions.csv", single.positions_csv())
    w.table("visibility_trajectory.csv", ["detection", "visibility", "phase"],
            [(i + 1, 2 * abs(z), np.mod(-np.angle(z), 2 * np.pi))
             for i, z in enumerate(single.order_parameter_trajectory)])
    report = detection.run_ensemble(cfg["N"], cfg["n_detect"], model, cfg["t"], cfg["n_runs"], seed,
                                    threads=threads, n_phase_bins=cfg["phase_bins"],
                                    n_density_bins=cfg["density_bins"])
    w.json("ensemble.json", {"ensemble": report.to_dict()})
    w.csv("phase_histogram.csv", report.histogram_csv())
    w.csv("average_density.csv", report.density_csv())
    w.table("runs.csv", ["run", "seed", "phase", "visibility"],
            [(i, s, np.nan if p is None else p, v)
             for i, (s, p, v) in enumerate(zip(report.seeds, report.phases, report.visibilities))])


def cmd_scaling(cfg, w: Writer, threads):
    model = build_model(cfg["model"])
    dens = experiments.density_fluctuation_scan(model, cfg["N_values"], cfg["position"], cfg["dV"],
                                                theta=cfg["theta"])
    w.csv("density_scaling.csv", dens.to_csv())
    sup = experiments.superposition_variance_scan(model, cfg["superposition_N"], cfg["position"], cfg["dV"])
    w.table("superposition_variance.csv",
            ["N", "exact_variance", "predicted_variance", "relative_error", "phase_state_variance"],
            [(int(r[0]), *r[1:]) for r in sup])
    sup_slope = fluctuations.fit_loglog_slope(sup[:, 0], np.sqrt(sup[:, 1]) / sup[:, 0])

    iid = fluctuations.scaling_scan(fluctuations.iid_qubit_family(), cfg["theorem_N"])
    cat = fluctuations.scaling_scan(fluctuations.two_branch_family(), cfg["theorem_N"])
    W = cfg["bcs_bandwidth"]
    pair = fluctuations.scaling_scan(
        fluctuations.bcs_pair_current_family(lambda M: bcs.BcsModel.uniform(W, 1.0, M),
                                             coupling=cfg["bcs_coupling"]),
        cfg["bcs_M"])
    w.csv("theorem_iid.csv", iid.to_csv())
    w.csv("theorem_two_branch.csv", cat.to_csv())
    w.csv("bcs_pair_current.csv", pair.to_csv())
    w.json("exponents.json", {"exponents": {
        "density_phase_state": dens.slope,
        "density_uniform_superposition": sup_slope,
        "iid_product": iid.slope,
        "two_branch_superposition": cat.slope,
        "bcs_pair_current": pair.slope,
    }})


def cmd_bcs(cfg, w: Writer, threads):
    gap = cfg["gap"]
    base = bcs.BcsModel.uniform(cfg["bandwidth"], gap, cfg["overlap_base_M"])
    scan = bcs.overlap_decay_scan(base, cfg["overlap_copies"], cfg["dtheta"])
    w.csv("overlap_decay.csv", scan.to_csv())

    rows = []
    for W, M in cfg["convergence"]:
        side = bcs.BcsModel.uniform(W, gap, int(M))
        j = bcs.JunctionModel(side, side, cfg["tunneling_sq"])
        disc = bcs.ab_critical_current(j, threads=threads)
        quad = bcs.continuum_critical_current(j)
        ab = bcs.ambegaokar_baratoff_current(j)
        rows.append((W, int(M), disc, quad, ab, disc / quad, disc / ab))
    w.table("critical_current.csv",
            ["W", "M", "discrete", "quadrature", "ambegaokar_baratoff", "discrete_over_quadrature", "ab_ratio"],
            rows)

    side = bcs.BcsModel.uniform(cfg["bandwidth"], gap, cfg["M"])
    J_S = bcs.ab_critical_current(bcs.JunctionModel(side, side, cfg["tunneling_sq"]), threads=threads)
    thetas = np.linspace(0, 2 * np.pi, cfg["n_theta"])
    w.table("current_phase.csv", ["theta", "current"], zip(thetas, bcs.josephson_current(J_S, thetas)))

    state = bcs.uniform_sectors(cfg["n_sectors"])
    before = bcs.measurement_outcome_distribution(state, J_S, n_bins=cfg["n_sectors"])
    w.table("outcome_distribution.csv", ["theta_bin", "probability", "current"], before)
    post = bcs.sector_project(state, cfg["measured_theta"])
    after = bcs.measurement_outcome_distribution(post, J_S, n_bins=cfg["n_sectors"])
    w.json("projection.json", {"projection": {
        "J_S": J_S,
        "measured_theta": cfg["measured_theta"],
        "sectors_before": int(state.weights.size),
        "sectors_after": int(post.weights.size),
        "relative_phase_bins_after": int(np.count_nonzero(after[:, 1] > 0)),
        "expected_current_before": bcs.expected_current(state, J_S),
        "expected_current_after": bcs.expected_current(post, J_S),
        "mean_phase_histogram_after": [float(p) for p in bcs.mean_phase_histogram(post)],
    }})


COMMANDS = {"fringe": cmd_fringe, "detect": cmd_detect, "scaling": cmd_scaling, "bcs": cmd_bcs}


def resolve_config(command, config_path=None, params=()):
    cfg = copy.deepcopy(DEFAULTS[command])
    if config_path:
        try:
            data = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown experiment(s) in config: {sorted(unknown)}")
        cfg.update(data.get(command, {}))
    for item in params:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        try:
            cfg[key] = json.loads(raw)
        except json.JSONDecodeError:
            cfg[key] = raw
    extra = set(cfg) - set(DEFAULTS[command])
    if extra:
        raise ConfigError(f"unknown parameter(s) for {command}: {sorted(extra)}")
    return cfg


def make_parser():
    parser = argparse.ArgumentParser(prog="symbreak", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed (default: config or 0)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker count (fallback: $SYMBREAK_THREADS, then 1)")
    parser.add_argument("--out-dir", default="symbreak_out")
    parser.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help="override one experiment parameter (VALUE parsed as JSON)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("SYMBREAK_THREADS", "1"))
    try:
        cfg = resolve_config(args.command, args.config, args.param)
        seed = args.seed if args.seed is not None else 0
        validate(args.command, cfg)
        if threads < 1:
            raise ConfigError("threads must be >= 1")
    except (ConfigError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    writer = Writer(args.out_dir, args.command, cfg, seed)
    try:
        COMMANDS[args.command](cfg, writer, threads)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for f in writer.files:
        log.info("wrote %s", f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
