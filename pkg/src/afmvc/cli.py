"""Command-line front end: ``afmvc {train,evaluate,ablate,sweep,bound-check,synth-data}``.

Exit codes: 0 success, 2 usage or configuration error, 3 training failure,
4 bound-lab domain error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .bounds import sweep as bound_sweep
from .bounds import theorem_bound, write_report
from .data import DatasetManifest, load_dataset, read_numeric_csv, write_dataset
from .errors import AFMVCError, DomainError, NonFiniteError
from .metrics import balance, evaluate
from .synthetic import make_biased, make_blobs
from .trainer import VARIANTS, TrainConfig, ablate, train, write_trace

EXIT_OK, EXIT_CONFIG, EXIT_TRAIN, EXIT_DOMAIN = 0, 2, 3, 4
METRICS = ("acc", "nmi", "bal")
# flag name -> TrainConfig field
OVERRIDES = {
    "lambda_c": float,
    "lambda_f": float,
    "epochs": int,
    "update_interval": int,
    "beta": float,
    "batch_size": int,
    "seed": int,
}


class ConfigError(AFMVCError):
    pass


@dataclass
class RunSpec:
    command: str
    manifest: Path | None = None
    config: Path | None = None
    overrides: dict = field(default_factory=dict)
    out: Path = Path("runs")
    repeats: int = 1

    def __post_init__(self):
        if self.repeats < 1:
            raise ConfigError(f"--repeats must be >= 1, got {self.repeats}")


def default_out() -> Path:
    return Path(os.environ.get("AFMVC_OUT", "runs"))


def _read_config_file(path) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a key/value mapping")
    # accept either a flat mapping or one nested under "train"
    return dict(raw.get("train", raw))


def resolve_config(spec: RunSpec, n_clusters: int | None = None) -> TrainConfig:
    """Layer defaults, then the manifest's cluster count, then the config file, then flags."""
    values = {} if n_clusters is None else {"n_clusters": n_clusters}
    if spec.config is not None:
        values.update(_read_config_file(spec.config))
    values.update(spec.overrides)
    try:
        return TrainConfig.from_dict(values)
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def _load(spec: RunSpec):
    if spec.manifest is None:
        raise ConfigError("--manifest is required")
    try:
        manifest = DatasetManifest.from_file(spec.manifest)
        return manifest, load_dataset(manifest)
    except FileNotFoundError as exc:
        raise ConfigError(f"missing file: {exc.filename or exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse manifest {spec.manifest}: {exc}") from exc


def _report(model, dataset) -> dict:
    if dataset.labels is None:
        return {"bal": balance(model.assignments, dataset.sensitive)}
    full = evaluate(model.assignments, dataset.labels, dataset.sensitive).as_dict()
    return {m: full[m] for m in METRICS}


def _summary(values: list[dict]) -> dict:
    out = {}
    for m in METRICS:
        xs = [v[m] for v in values if m in v]
        if xs:
            out[m] = {"mean": float(np.mean(xs)), "std": float(np.std(xs))}
    return out


def _dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_assignments(path, labels) -> None:
    with open(path, "w") as fh:
        fh.write("instance_index,cluster_id\n")
        for i, c in enumerate(labels):
            fh.write(f"{i},{int(c)}\n")


def cmd_train(spec: RunSpec) -> int:
    manifest, dataset = _load(spec)
    base = resolve_config(spec, manifest.n_clusters)
    spec.out.mkdir(parents=True, exist_ok=True)
    runs = []
    for r in range(spec.repeats):
        cfg = TrainConfig.from_dict({**base.to_dict(), "seed": base.seed + r})
        model = train(dataset, cfg)
        metrics = _report(model, dataset)
        run_dir = spec.out / f"seed_{cfg.seed}"
        run_dir.mkdir(exist_ok=True)
        _dump_json({"seed": cfg.seed, "config": cfg.to_dict(), "metrics": metrics}, run_dir / "results.json")
        write_trace(model.trace, run_dir / "trace.csv")
        _write_assignments(run_dir / "assignments.csv", model.assignments)
        runs.append(metrics)
        print(f"seed {cfg.seed}: " + " ".join(f"{k}={v:.4f}" for k, v in metrics.items()))
    aggregate = {"repeats": spec.repeats, "seeds": [base.seed + r for r in range(spec.repeats)],
                 "config_digest": base.digest(), "metrics": _summary(runs)}
    _dump_json(aggregate, spec.out / "aggregate.json")
    return EXIT_OK


def cmd_evaluate(spec: RunSpec, assignments: Path) -> int:
    _, dataset = _load(spec)
    if dataset.labels is None:
        raise ConfigError("evaluate needs a manifest with labels")
    try:
        table = read_numeric_csv(assignments, header=True)
    except FileNotFoundError as exc:
        raise ConfigError(f"missing file: {assignments}") from exc
    pred = table[:, -1].astype(np.int64)
    full = evaluate(pred, dataset.labels, dataset.sensitive).as_dict()
    metrics = {m: full[m] for m in METRICS}
    spec.out.mkdir(parents=True, exist_ok=True)
    _dump_json(metrics, spec.out / "metrics.json")
    print(" ".join(f"{k}={v:.4f}" for k, v in metrics.items()))
    return EXIT_OK


def _mark(flag: bool) -> str:
    return "✓" if flag else " "


def cmd_ablate(spec: RunSpec) -> int:
    manifest, dataset = _load(spec)
    base = resolve_config(spec, manifest.n_clusters)
    spec.out.mkdir(parents=True, exist_ok=True)
    rows = {}
    for variant in sorted(VARIANTS):
        per_seed = []
        for r in range(spec.repeats):
            cfg = TrainConfig.from_dict({**base.to_dict(), "seed": base.seed + r})
            per_seed.append(_report(ablate(dataset, cfg, variant), dataset))
        rows[variant] = _summary(per_seed)
    path = spec.out / "ablation.csv"
    with open(path, "w") as fh:
        fh.write("# variant  L_R  L_F  L_C\n")
        for variant, (use_r, use_f, use_c) in sorted(VARIANTS.items()):
            fh.write(f"# {variant}        {_mark(use_r)}    {_mark(use_f)}    {_mark(use_c)}\n")
        cols = [f"{m}_{s}" for m in METRICS for s in ("mean", "std")]
        fh.write("variant," + ",".join(cols) + "\n")
        for variant, summary in rows.items():
            cells = [repr(summary[m][s]) if m in summary else "" for m in METRICS for s in ("mean", "std")]
            fh.write(variant + "," + ",".join(cells) + "\n")
    print(path.read_text(), end="")
    return EXIT_OK


def log_grid(lo: float, hi: float, size: int) -> list[float]:
    return [float(x) for x in np.logspace(np.log10(lo), np.log10(hi), size)]


def cmd_sweep(spec: RunSpec, grid: list[float]) -> int:
    manifest, dataset = _load(spec)
    base = resolve_config(spec, manifest.n_clusters)
    spec.out.mkdir(parents=True, exist_ok=True)
    mats = {m: np.full((len(grid), len(grid)), np.nan) for m in METRICS}
    for i, lc in enumerate(grid):
        for j, lf in enumerate(grid):
            per_seed = []
            for r in range(spec.repeats):
                cfg = TrainConfig.from_dict({**base.to_dict(), "lambda_c": lc, "lambda_f": lf, "seed": base.seed + r})
                per_seed.append(_report(train(dataset, cfg), dataset))
            for m, stats in _summary(per_seed).items():
                mats[m][i, j] = stats["mean"]
            print(f"lambda_c={lc:g} lambda_f={lf:g}: " + " ".join(f"{m}={mats[m][i, j]:.4f}" for m in METRICS))
    for m, mat in mats.items():
        with open(spec.out / f"sweep_{m}.csv", "w") as fh:
            fh.write("lambda_c\\lambda_f," + ",".join(repr(x) for x in grid) + "\n")
            for lc, row in zip(grid, mat):
                fh.write(repr(lc) + "," + ",".join("" if np.isnan(v) else repr(float(v)) for v in row) + "\n")
    bal = mats["bal"]
    summary = {"grid": grid, "bal_variance": float(np.nanvar(bal)), "bal_range": float(np.nanmax(bal) - np.nanmin(bal))}
    _dump_json(summary, spec.out / "sweep_summary.json")
    print(f"BAL variance across grid: {summary['bal_variance']:.6g}")
    return EXIT_OK


def cmd_bound_check(out: Path, epsilons: list[float], trials: int, k: int, g: int, seed: int) -> int:
    for eps in epsilons:
        theorem_bound(eps)  # fail fast on the whole list before sampling
    rows = bound_sweep(k, g, epsilons, trials, seed)
    out.mkdir(parents=True, exist_ok=True)
    write_report(rows, out / "bound_report.csv")
    for r in rows:
        print(f"eps={r['epsilon']:g}: leading={r['leading_term']:.6f} max_I={r['max_I']:.3e} "
              f"mean_I={r['mean_I']:.3e} pinsker={r['pinsker_pass_rate']:.3f}")
    for r in rows:
        if r["epsilon"] == 0.1:
            print(f"eps=0.1 leading term {r['leading_term']:.4f} (reference value ~0.167)")
    return EXIT_OK


def cmd_synth_data(out: Path, kind: str, n: int, k: int, rho: float, p: float, seed: int, no_sensitive_feature: bool) -> int:
    if kind == "blobs":
        ds = make_blobs(n=n, k=k, p=p, seed=seed)
    else:
        ds = make_biased(n=n, rho=rho, k=k, sensitive_feature=not no_sensitive_feature, seed=seed)
    path = write_dataset(ds, out, n_clusters=k, stem=ds.name)
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="afmvc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def run_args(p):
        p.add_argument("--manifest", type=Path, help="dataset manifest (YAML)")
        p.add_argument("--config", type=Path, help="YAML mapping of TrainConfig fields")
        p.add_argument("--out", type=Path, default=None, help="output directory (default $AFMVC_OUT or ./runs)")
        p.add_argument("--repeats", type=int, default=1)
        for name, typ in OVERRIDES.items():
            p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)

    for name in ("train", "ablate", "sweep"):
        run_args(sub.add_parser(name))
    sweep = sub.choices["sweep"]
    sweep.add_argument("--grid-min", type=float, default=1e-3)
    sweep.add_argument("--grid-max", type=float, default=1e1)
    sweep.add_argument("--grid-size", type=int, default=5)

    ev = sub.add_parser("evaluate")
    ev.add_argument("--manifest", type=Path, required=True)
    ev.add_argument("--assignments", type=Path, required=True)
    ev.add_argument("--out", type=Path, default=None)

    bc = sub.add_parser("bound-check")
    bc.add_argument("--epsilons", type=lambda s: [float(x) for x in s.split(",")], default=[0.2, 0.1, 0.05, 0.01])
    bc.add_argument("--trials", type=int, default=10_000)
    bc.add_argument("--clusters", type=int, default=2)
    bc.add_argument("--groups", type=int, default=2)
    bc.add_argument("--seed", type=int, default=0)
    bc.add_argument("--out", type=Path, default=None)

    sd = sub.add_parser("synth-data")
    sd.add_argument("kind", choices=("blobs", "biased"))
    sd.add_argument("--n", type=int, default=None)
    sd.add_argument("--k", type=int, default=None)
    sd.add_argument("--rho", type=float, default=0.9)
    sd.add_argument("--p", type=float, default=0.5, help="Bernoulli rate of the blobs sensitive bit")
    sd.add_argument("--seed", type=int, default=0)
    sd.add_argument("--no-sensitive-feature", action="store_true")
    sd.add_argument("--out", type=Path, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out if args.out is not None else default_out()
    try:
        if args.command in ("train", "ablate", "sweep"):
            overrides = {k: getattr(args, k) for k in OVERRIDES if getattr(args, k) is not None}
            spec = RunSpec(args.command, args.manifest, args.config, overrides, out, args.repeats)
            if args.command == "train":
                return cmd_train(spec)
            if args.command == "ablate":
                return cmd_ablate(spec)
            if args.grid_size < 1 or not 0 < args.grid_min <= args.grid_max:
                raise ConfigError("grid needs 0 < grid-min <= grid-max and grid-size >= 1")
            return cmd_sweep(spec, log_grid(args.grid_min, args.grid_max, args.grid_size))
        if args.command == "evaluate":
            return cmd_evaluate(RunSpec("evaluate", args.manifest, out=out), args.assignments)
        if args.command == "bound-check":
            try:
                return cmd_bound_check(out, args.epsilons, args.trials, args.clusters, args.groups, args.seed)
            except DomainError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_DOMAIN
        defaults = {"blobs": (1000, 4), "biased": (2000, 2)}[args.kind]
        n = args.n if args.n is not None else defaults[0]
        k = args.k if args.k is not None else defaults[1]
        return cmd_synth_data(out, args.kind, n, k, args.rho, args.p, args.seed, args.no_sensitive_feature)
    except NonFiniteError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except (AFMVCError, ValueError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
