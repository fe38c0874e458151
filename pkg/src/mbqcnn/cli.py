"""Experiment runner: ``python -m mbqcnn <command>`` or the ``mbqcnn`` script.

Every command resolves its settings from built-in defaults, then an
optional ``--config`` JSON file, then explicit flags.  Outputs are CSV or
JSON; each CSV opens with a ``# config_sha256=...`` comment and each JSON
document carries the same hash under ``config_hash``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import gadgets
from . import models as M
from . import physics as P
from . import train as T

log = logging.getLogger("mbqcnn")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
DISTANCE_TOL = 1e-9

SPECIES = {"setosa": 0.0, "versicolor": 0.5, "virginica": 1.0}
IRIS_SHA256 = "9cc1c345c71bcc9b486b74cbf6063fa66f4bb5e0f603a4b3c3471ec2e5e8e355"


class ValidationError(ValueError):
    """Bad input data or configuration (exit status 1)."""


# -- iris data -------------------------------------------------------------------


@dataclass(frozen=True)
class IrisRecord:
    sepal_length: float
    sepal_width: float
    petal_length: float
    petal_width: float
    species: str

    @property
    def features(self) -> np.ndarray:
        return np.array([self.sepal_length, self.sepal_width, self.petal_length, self.petal_width])

    @property
    def label(self) -> float:
        return SPECIES[self.species]


def bundled_iris_path() -> Path:
    path = Path(str(resources.files("mbqcnn") / "data" / "iris.csv"))
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    if digest != IRIS_SHA256:
        raise ValidationError(f"bundled iris file checksum mismatch ({digest})")
    return path


def _species_key(raw: str) -> str:
    s = raw.strip().strip('"').lower()
    return s[5:] if s.startswith("iris-") else s


def load_iris(path=None) -> list:
    """Read 150 records (50 per species); the header row is optional."""
    path = Path(path) if path is not None else bundled_iris_path()
    records = []
    with path.open(newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and _is_header(row):
                continue
            if len(row) != 5:
                raise ValidationError(f"{path}:{lineno}: expected 5 columns, got {len(row)}")
            try:
                feats = [float(c) for c in row[:4]]
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: non-numeric feature") from None
            if not all(math.isfinite(v) and v > 0 for v in feats):
                raise ValidationError(f"{path}:{lineno}: features must be finite and positive")
            species = _species_key(row[4])
            if species not in SPECIES:
                raise ValidationError(f"{path}:{lineno}: unknown species {row[4].strip()!r}")
            records.append(IrisRecord(*feats, species))
    if len(records) != 150:
        raise ValidationError(f"{path}: expected 150 records, found {len(records)}")
    counts = {s: sum(r.species == s for r in records) for s in SPECIES}
    if any(c != 50 for c in counts.values()):
        raise ValidationError(f"{path}: expected 50 records per species, found {counts}")
    return records


def _is_header(row: Sequence[str]) -> bool:
    try:
        float(row[0])
        return False
    except ValueError:
        return True


def split_iris(records: Sequence[IrisRecord], seed: int = 0) -> tuple[list, list]:
    """40 train / 10 test per species from a seeded within-class shuffle."""
    rng = np.random.default_rng(seed)
    train, test = [], []
    for s in SPECIES:
        group = [r for r in records if r.species == s]
        if len(group) != 50:
            raise ValidationError(f"species {s} has {len(group)} records, need 50")
        order = rng.permutation(50)
        train += [group[k] for k in order[:40]]
        test += [group[k] for k in order[40:]]
    return train, test


def iris_dataset(records: Sequence[IrisRecord], minmax: Optional[tuple] = None) -> T.Dataset:
    x = np.array([M.encode_iris(r.features, r.label, minmax).state.amplitudes for r in records])
    return T.Dataset(x, [r.label for r in records], T.THREE_CLASS)


def feature_range(records: Sequence[IrisRecord]) -> tuple:
    f = np.array([r.features for r in records])
    return f.min(axis=0), f.max(axis=0)


def haldane_dataset(samples: Sequence[P.HaldaneSample]) -> T.Dataset:
    return T.Dataset(np.array([s.ground_state.amplitudes for s in samples]),
                     [s.label for s in samples], T.BINARY)


# -- configuration -----------------------------------------------------------------

COMMON = {"seed": 0, "out": "results", "epochs": None, "fd_step": 1e-3, "repeats": 5}

DEFAULTS = {
    "verify-gadgets": {"trials": {"L4": 100, "E8": 20, "UIJ": 50, "VIJ": 50}},
    "haldane-gen": {"n_sites": 3, "grid_side": 6},
    "haldane-train": {"n_sites": 3, "grid_side": 6, "epochs": 500},
    "phase-map": {"n_sites": 3, "grid_side": 6, "eval_side": 12, "epochs": 500, "model": None},
    "iris-train": {"model": "all", "epochs": 100, "minmax": False, "iris_path": None},
    "grad-study": {"counts": [8, 16, 32, 64, 128, 256, 512, 1024], "iris_path": None,
                   "cnn_range": "angle"},
}

FLAG_KEYS = ("seed", "out", "epochs", "fd_step", "repeats")


def resolve_config(command: str, config_path: Optional[str], flags: dict) -> dict:
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[command])
    if config_path:
        try:
            doc = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {config_path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ValidationError("config must be a JSON object")
        unknown = sorted(set(doc) - set(cfg))
        if unknown:
            raise ValidationError(f"unknown config keys for {command}: {', '.join(unknown)}")
        cfg.update(doc)
    cfg.update({k: v for k, v in flags.items() if v is not None})
    cfg["command"] = command
    for key in ("iris_path", "model"):
        value = cfg.get(key)
        if key == "model" and command != "phase-map":
            continue
        if value and not Path(value).is_file():
            raise ValidationError(f"{key} {value!r} does not exist")
    if cfg.get("fd_step") is not None and cfg["fd_step"] <= 0:
        raise ValidationError("fd_step must be positive")
    if cfg.get("repeats") is not None and cfg["repeats"] < 1:
        raise ValidationError("repeats must be >= 1")
    if cfg.get("epochs") is not None and cfg["epochs"] < 0:
        raise ValidationError("epochs must be >= 0")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def _comment(cfg: dict) -> str:
    return f"config_sha256={config_hash(cfg)}"


def _write_json(path: Path, doc: dict, cfg: dict) -> None:
    doc = {"config_hash": config_hash(cfg), **doc}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def _r12(x: float) -> float:
    """Round to 12 significant digits for JSON output."""
    return float(f"{x:.12g}") if math.isfinite(x) else x


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _train_cfg(cfg: dict, seed: Optional[int] = None) -> T.TrainingConfig:
    return T.TrainingConfig(epochs=int(cfg["epochs"]), fd_step=float(cfg["fd_step"]),
                            seed=int(cfg["seed"] if seed is None else seed),
                            repeats=int(cfg["repeats"]))


def _check_side(side: int) -> None:
    if side < 2:
        raise ValidationError("grid_side must be >= 2")
    if side not in (6, 9, 12):
        warnings.warn(f"grid side {side} is outside the standard set (6, 9, 12)")


# -- commands -------------------------------------------------------------------


def cmd_verify_gadgets(cfg: dict) -> int:
    out = _outdir(cfg)
    results = []
    for kind, trials in cfg["trials"].items():
        r = gadgets.verify_gadget(kind, int(trials), int(cfg["seed"]))
        r["pass"] = bool(r["max_distance"] <= DISTANCE_TOL)
        results.append(r)
        log.info("%s: max distance %.3g (%s)", kind, r["max_distance"], "pass" if r["pass"] else "FAIL")
    _write_json(out / "gadgets.json", {"seed": cfg["seed"], "tolerance": DISTANCE_TOL,
                                       "gadgets": results}, cfg)
    return EXIT_OK if all(r["pass"] for r in results) else EXIT_VALIDATION


def _haldane_sets(cfg: dict):
    side = int(cfg["grid_side"])
    _check_side(side)
    train = P.make_grid_dataset(int(cfg["n_sites"]), side)
    test = P.make_test_grid(int(cfg["n_sites"]), side, seed=int(cfg["seed"]))
    return train, test


def cmd_haldane_gen(cfg: dict) -> int:
    out = _outdir(cfg)
    train, test = _haldane_sets(cfg)
    P.write_dataset(train, out / "haldane_train.csv", out / "amplitudes_train", _comment(cfg))
    P.write_dataset(test, out / "haldane_test.csv", out / "amplitudes_test", _comment(cfg))
    return EXIT_OK


def _train_haldane(cfg: dict):
    train, test = _haldane_sets(cfg)
    dtr, dte = haldane_dataset(train), haldane_dataset(test)
    if int(cfg["n_sites"]) != 3:
        raise ValidationError("the 2x5 lattice model takes 3-site ground states")
    model = M.ClusterModel.init(M.haldane_lattice(), np.random.default_rng(int(cfg["seed"])))
    trace = T.train(model, dtr, dte, _train_cfg(cfg))
    return model.with_params(trace.final_params), trace, train, test


def cmd_haldane_train(cfg: dict) -> int:
    out = _outdir(cfg)
    model, trace, train, test = _train_haldane(cfg)
    P.write_dataset(train, out / "haldane_train.csv", None, _comment(cfg))
    T.write_trace(trace, out / "haldane_trace.csv", _comment(cfg))
    (out / "haldane_model.json").write_text(M.model_to_json(model) + "\n")
    last = trace.records[-1] if trace.records else None
    _write_json(out / "haldane_summary.json", {
        "seed": cfg["seed"], "epochs": cfg["epochs"], "fd_step": cfg["fd_step"],
        "n_params": model.n_params,
        "final_train_loss": _r12(T.mse_loss(model, haldane_dataset(train))),
        "final_test_accuracy": _r12(T.accuracy(model, haldane_dataset(test))),
        "last_recorded_loss": _r12(last.train_loss) if last else None,
    }, cfg)
    return EXIT_OK


def omega_grid(model: M.ClusterModel, n_sites: int, side: int) -> P.PhaseGrid:
    h1s, h2s = P.grid_axes(side)
    samples = [P.make_sample(n_sites, a, b) for a in h1s for b in h2s]
    vals = model.predict_batch(haldane_dataset(samples).inputs).reshape(side, side)
    sops = np.array([s.sop for s in samples]).reshape(side, side)
    return P.PhaseGrid(h1s, h2s, vals), P.PhaseGrid(h1s, h2s, sops)


def _write_grid(grid: P.PhaseGrid, path: Path, comment: str) -> None:
    rows = [(a, b, grid.values[i, j]) for i, a in enumerate(grid.h1_over_j)
            for j, b in enumerate(grid.h2_over_j)]
    T._write_rows(path, ["h1_over_j", "h2_over_j", "value"], rows, comment)


def _write_points(points, path: Path, comment: str) -> None:
    T._write_rows(path, ["h1_over_j", "h2_over_j"], points, comment)


def cmd_phase_map(cfg: dict) -> int:
    out = _outdir(cfg)
    if cfg.get("model"):
        model = M.model_from_json(Path(cfg["model"]).read_text())
    else:
        model, trace, _, _ = _train_haldane(cfg)
        T.write_trace(trace, out / "haldane_trace.csv", _comment(cfg))
    side = int(cfg["eval_side"])
    omega, sop = omega_grid(model, int(cfg["n_sites"]), side)
    _write_grid(omega, out / "omega_grid.csv", _comment(cfg))
    _write_grid(sop, out / "sop_grid.csv", _comment(cfg))
    model_pts, sop_pts = P.phase_boundary(omega), P.phase_boundary(sop)
    _write_points(model_pts, out / "boundary_model.csv", _comment(cfg))
    _write_points(sop_pts, out / "boundary_sop.csv", _comment(cfg))
    spacing = float(sop.h2_over_j[1] - sop.h2_over_j[0])
    frac, worst = P.boundary_agreement(model_pts, sop_pts, spacing)
    _write_json(out / "phase_map_summary.json", {
        "seed": cfg["seed"], "eval_side": side, "grid_spacing": _r12(spacing),
        "model_points": len(model_pts), "sop_points": len(sop_pts),
        "agreement_fraction": _r12(frac), "max_deviation": _r12(worst),
    }, cfg)
    return EXIT_OK


def make_iris_model(kind: str, rng: np.random.Generator):
    if kind == "mbqcnn":
        return M.ClusterModel.init(M.iris_lattice(), rng)
    if kind == "qcnn":
        return M.QcnnModel.init(rng)
    if kind == "cnn":
        return M.CnnModel.init(rng)
    raise ValidationError(f"unknown model {kind!r}")


def run_iris(kind: str, cfg: dict, records=None) -> tuple[list, dict]:
    """Train ``cfg['repeats']`` seeded copies; repeat ``k`` uses seed + k for the split too."""
    records = records if records is not None else load_iris(cfg.get("iris_path"))
    traces, finals = [], []
    for k in range(int(cfg["repeats"])):
        seed = int(cfg["seed"]) + k
        tr, te = split_iris(records, seed)
        mm = feature_range(records) if cfg.get("minmax") else None
        dtr, dte = iris_dataset(tr, mm), iris_dataset(te, mm)
        model = make_iris_model(kind, np.random.default_rng(seed))
        trace = T.train(model, dtr, dte, _train_cfg(cfg, seed))
        final = model.with_params(trace.final_params)
        traces.append(trace)
        finals.append({"seed": seed, "train_loss": T.mse_loss(final, dtr),
                       "test_accuracy": T.accuracy(final, dte),
                       "epochs_to_0.05": trace.epochs_to_loss(0.05)})
    proto = make_iris_model(kind, np.random.default_rng(0))
    summary = {
        "n_params": proto.n_params,
        "count_discrepancy": bool(getattr(proto, "count_discrepancy", False)),
        "final": finals,
        "mean_test_accuracy": float(np.mean([f["test_accuracy"] for f in finals])),
        "mean_train_loss": float(np.mean([f["train_loss"] for f in finals])),
    }
    return traces, summary


def cmd_iris_train(cfg: dict) -> int:
    out = _outdir(cfg)
    records = load_iris(cfg.get("iris_path"))
    kinds = ["mbqcnn", "qcnn", "cnn"] if cfg["model"] == "all" else [cfg["model"]]
    summary = {"seed": cfg["seed"], "fd_step": cfg["fd_step"], "epochs": cfg["epochs"],
               "repeats": cfg["repeats"], "models": {}}
    for kind in kinds:
        traces, s = run_iris(kind, cfg, records)
        for k, trace in enumerate(traces):
            T.write_trace(trace, out / f"iris_{kind}_trace_{k}.csv", _comment(cfg))
        T.write_aggregate(traces, out / f"iris_{kind}_aggregate.csv", _comment(cfg))
        summary["models"][kind] = s
    _write_json(out / "iris_summary.json", summary, cfg)
    return EXIT_OK


def grad_families(cnn_range: str = "angle"):
    """(name, builder from vector, parameter count, draw range) for the three iris models."""
    topo = M.iris_lattice()
    proto_c = M.ClusterModel(topo, np.zeros(topo.n_params))
    cnn = M.CnnModel.zeros()
    cnn_lo, cnn_hi = (0.0, 2 * math.pi) if cnn_range == "angle" else (-1.0, 1.0)
    return [
        ("mbqcnn", proto_c.with_params, topo.n_params, (0.0, 2 * math.pi)),
        ("qcnn", M.QcnnModel.from_vector, 28, (0.0, 2 * math.pi)),
        ("cnn", cnn.with_params, cnn.n_params, (cnn_lo, cnn_hi)),
    ]


def run_grad_study(cfg: dict, records=None) -> dict:
    records = records if records is not None else load_iris(cfg.get("iris_path"))
    tr, _ = split_iris(records, int(cfg["seed"]))
    data = iris_dataset(tr)
    results = {}
    for name, build, n, (lo, hi) in grad_families(cfg.get("cnn_range", "angle")):
        results[name] = T.avg_gradient_magnitude(build, n, data, cfg["counts"], int(cfg["seed"]),
                                                 float(cfg["fd_step"]), lo, hi)
    return results


def tail_ordering(results: dict) -> dict:
    tail = {k: v.log10_avg_grad[-1] for k, v in results.items()}
    converged = {k: abs(v.log10_avg_grad[-1] - v.log10_avg_grad[-2]) < 0.05
                 if len(v.log10_avg_grad) > 1 else False for k, v in results.items()}
    order = (tail["mbqcnn"] >= tail["qcnn"] >= tail["cnn"]) and tail["mbqcnn"] > tail["cnn"]
    return {"tail_log10": tail, "converged": converged, "ordering_pass": bool(order)}


def cmd_grad_study(cfg: dict) -> int:
    out = _outdir(cfg)
    results = run_grad_study(cfg)
    for name, res in results.items():
        T.write_grad_study(res, out / f"grad_{name}.csv", _comment(cfg))
    check = tail_ordering(results)
    _write_json(out / "grad_summary.json", {"seed": cfg["seed"], "counts": cfg["counts"], **check}, cfg)
    log.info("tail ordering MBQCNN >= QCNN > CNN: %s", "pass" if check["ordering_pass"] else "FAIL")
    return EXIT_OK


COMMANDS = {
    "verify-gadgets": cmd_verify_gadgets,
    "haldane-gen": cmd_haldane_gen,
    "haldane-train": cmd_haldane_train,
    "phase-map": cmd_phase_map,
    "iris-train": cmd_iris_train,
    "grad-study": cmd_grad_study,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mbqcnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--epochs", type=int)
        p.add_argument("--fd-step", dest="fd_step", type=float)
        p.add_argument("--repeats", type=int)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    flags = {k: getattr(args, k) for k in FLAG_KEYS}
    try:
        cfg = resolve_config(args.command, args.config, flags)
        return COMMANDS[args.command](cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - top-level runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
