"""Pipeline CLI: train, explain, aggregate, sweep (those three in order), report.

Every stage is deterministic given the config: randomness flows from one
root seed (env var AGGREX_SEED overrides the config value), outputs land in
a run directory stamped with a hash of the effective config rather than a
timestamp, and files are written atomically. Per-cell wall times are kept
out of sweep.csv (they land in timings.csv, which the manifest lists but
does not hash) so reruns are byte-identical.

Exit codes: 0 success, 2 config error, 3 infeasible aggregation cell.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import aggregate as agg
from . import blackbox as bb
from .data import Dataset, FeatureSchema, load_dataset, standardize, synth_multiclass, write_dataset
from .explainer import LocalExplainer, train_local_explainer
from .sampler import derive_seed
from .tree import tree_from_lines, tree_to_lines, tree_to_rules

SEED_ENV_VAR = "AGGREX_SEED"

DEFAULT_CONFIG = {
    "seed": 0,
    "dataset": {
        "path": None,
        "standardize": True,
        "synth": {"n": 60, "m_cont": 4, "m_bin": 2, "classes": 5, "relevant": [0, 1, 4]},
        "schema": None,  # for path datasets: {"m_cont": int, "m_bin": int}
    },
    "blackbox": {"n_trees": 50},
    "sampler": {"N": 10000, "radii": [3.0, 7.0, 11.0, 15.0]},
    "filter": {"max_bins": 3, "eps_mi": 1e-9, "variant": "both"},
    "explainer": {"max_depth": 12, "min_leaf": 2},
    "aggregate": {
        "budgets": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
        "floors": [0.5, 0.7, 0.9],
        "solver": "both",
        "radius": None,  # default: first sampler radius
        "use_filtered": None,  # default: filtered when the variant produced any
        "inner_limit": 20,
        "export_lp": False,
    },
    "output_dir": "runs",
}


class ConfigError(ValueError):
    pass


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | None, overrides: dict) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = _deep_merge(cfg, json.load(fh))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
    cfg = _deep_merge(cfg, overrides)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}")
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    a = cfg["aggregate"]
    if not a["budgets"]:
        raise ConfigError("aggregate.budgets must be non-empty")
    if any(int(k) < 0 for k in a["budgets"]):
        raise ConfigError("budgets must be nonnegative")
    if not a["floors"]:
        raise ConfigError("aggregate.floors must be non-empty")
    if any(not (0.0 <= float(p) <= 1.0) for p in a["floors"]):
        raise ConfigError("every fidelity floor must lie in [0, 1]")
    if a["solver"] not in ("exact", "greedy", "both"):
        raise ConfigError(f"unknown solver {a['solver']!r}")
    if cfg["filter"]["variant"] not in ("filtered", "unfiltered", "both"):
        raise ConfigError(f"unknown filter variant {cfg['filter']['variant']!r}")
    if not cfg["sampler"]["radii"]:
        raise ConfigError("sampler.radii must be non-empty")
    if int(cfg["sampler"]["N"]) < 2:
        raise ConfigError("sampler.N must be at least 2")
    ds = cfg["dataset"]
    if ds["path"] is None and ds.get("synth") is None:
        raise ConfigError("dataset needs either a path or a synth block")
    if ds["path"] is not None and ds.get("schema") is None:
        raise ConfigError("path datasets need dataset.schema = {m_cont, m_bin}")


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def run_dir_for(cfg: dict) -> Path:
    stamp = hashlib.sha256(canonical_json(cfg).encode()).hexdigest()[:12]
    return Path(cfg["output_dir"]) / f"run-{stamp}"


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def update_manifest(cfg: dict, stage: str, outputs: list[str], unhashed: list[str] = ()) -> None:
    rd = run_dir_for(cfg)
    manifest_path = rd / "manifest.json"
    manifest = {
        "run_id": rd.name,
        "seed": cfg["seed"],
        "standardized": bool(cfg["dataset"]["standardize"]),
        "config": cfg,
        "stages": {},
        "hashes": {},
        "unhashed": [],
    }
    if manifest_path.exists():
        manifest.update(json.loads(manifest_path.read_text(encoding="utf-8")))
    manifest["stages"][stage] = {"outputs": sorted(set(outputs) | set(unhashed))}
    for name in outputs:
        manifest["hashes"][name] = _sha256(rd / name)
    manifest["unhashed"] = sorted(set(manifest["unhashed"]) | set(unhashed))
    _write_atomic(manifest_path, canonical_json(manifest))


def prepare_dataset(cfg: dict) -> Dataset:
    ds = cfg["dataset"]
    if ds["path"] is not None:
        sch = ds["schema"]
        schema = FeatureSchema.mixed(int(sch["m_cont"]), int(sch["m_bin"]))
        data = load_dataset(ds["path"], schema)
    else:
        sy = ds["synth"]
        data = synth_multiclass(
            seed=int(cfg["seed"]),
            n=int(sy["n"]),
            m_cont=int(sy["m_cont"]),
            m_bin=int(sy["m_bin"]),
            classes=int(sy["classes"]),
            relevant=tuple(sy["relevant"]),
        )
    if ds["standardize"]:
        data = standardize(data)
    return data


# -- stages -------------------------------------------------------------------

def cmd_train(cfg: dict) -> Path:
    rd = run_dir_for(cfg)
    rd.mkdir(parents=True, exist_ok=True)
    data = prepare_dataset(cfg)
    write_dataset(data, rd / "dataset_used.csv.tmp")
    os.replace(rd / "dataset_used.csv.tmp", rd / "dataset_used.csv")
    model = bb.train_bagged_forest(data, n_trees=int(cfg["blackbox"]["n_trees"]), seed=int(cfg["seed"]))
    bb.save_model(model, rd / "model.txt.tmp")
    os.replace(rd / "model.txt.tmp", rd / "model.txt")
    _write_atomic(rd / "config.json", canonical_json(cfg))
    update_manifest(cfg, "train", ["config.json", "dataset_used.csv", "model.txt"])
    return rd / "model.txt"


def _variants(cfg: dict) -> list[bool]:
    variant = cfg["filter"]["variant"]
    if variant == "filtered":
        return [True]
    if variant == "unfiltered":
        return [False]
    return [True, False]


def cmd_explain(cfg: dict) -> Path:
    rd = run_dir_for(cfg)
    model_path = rd / "model.txt"
    if not model_path.exists():
        raise ConfigError(f"missing model file {model_path}; run the train stage first")
    model = bb.load_model(model_path)
    data = prepare_dataset(cfg)
    records = []
    rules = []
    for slot, radius in enumerate(cfg["sampler"]["radii"]):
        for i in range(data.n):
            seed = derive_seed(int(cfg["seed"]), i, slot)
            for filtered in _variants(cfg):
                ex = train_local_explainer(
                    model,
                    data.X[i],
                    float(radius),
                    int(cfg["sampler"]["N"]),
                    max_bins=int(cfg["filter"]["max_bins"]),
                    filtered=filtered,
                    seed=seed,
                    schema=data.schema,
                    center_index=i,
                    max_depth=cfg["explainer"]["max_depth"],
                    min_leaf=int(cfg["explainer"]["min_leaf"]),
                    eps_mi=float(cfg["filter"]["eps_mi"]),
                )
                records.append(
                    {
                        "center_index": i,
                        "radius": float(radius),
                        "radius_slot": slot,
                        "filtered": filtered,
                        "selected_features": list(ex.selected_features),
                        "leaf_count": ex.leaf_count,
                        "train_fidelity": ex.train_fidelity,
                        "tree": tree_to_lines(ex.tree),
                    }
                )
                head = f"center {i} radius {radius} {'filtered' if filtered else 'unfiltered'}"
                rules.append(f"# {head}\n" + tree_to_rules(ex.tree, data.schema.names))
    _write_atomic(rd / "explainers.json", canonical_json({"explainers": records}))
    _write_atomic(rd / "explainers_rules.txt", "\n".join(rules))
    update_manifest(cfg, "explain", ["explainers.json", "explainers_rules.txt"])
    return rd / "explainers.json"


def _load_bundle_explainers(cfg: dict, data: Dataset) -> list[LocalExplainer]:
    rd = run_dir_for(cfg)
    bundle_path = rd / "explainers.json"
    if not bundle_path.exists():
        raise ConfigError(f"missing bundle {bundle_path}; run the explain stage first")
    bundle = json.loads(bundle_path.read_text(encoding="utf-8"))
    radius = cfg["aggregate"]["radius"]
    if radius is None:
        radius = cfg["sampler"]["radii"][0]
    want = cfg["aggregate"]["use_filtered"]
    if want is None:
        want_filtered = cfg["filter"]["variant"] != "unfiltered"
    else:
        want_filtered = bool(want)
    picked: dict[int, LocalExplainer] = {}
    for rec in bundle["explainers"]:
        if rec["radius"] != float(radius) or rec["filtered"] != want_filtered:
            continue
        tree, _ = tree_from_lines(rec["tree"])
        i = int(rec["center_index"])
        picked[i] = LocalExplainer(
            center_index=i,
            center=data.X[i],
            radius=float(rec["radius"]),
            selected_features=tuple(rec["selected_features"]),
            tree=tree,
            filtered=bool(rec["filtered"]),
            train_fidelity=float(rec["train_fidelity"]),
        )
    if len(picked) != data.n:
        raise ConfigError(
            f"bundle holds {len(picked)} explainers for radius {radius} "
            f"({'filtered' if want_filtered else 'unfiltered'}), dataset has {data.n} points"
        )
    return [picked[i] for i in range(data.n)]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def cmd_aggregate(cfg: dict) -> Path:
    rd = run_dir_for(cfg)
    model = bb.load_model(rd / "model.txt")
    data = prepare_dataset(cfg)
    explainers = _load_bundle_explainers(cfg, data)
    pool = agg.build_pool(data, explainers, model)
    acfg = cfg["aggregate"]
    solvers = ["exact", "greedy"] if acfg["solver"] == "both" else [acfg["solver"]]
    inner_limit = int(acfg["inner_limit"])
    (rd / "solutions").mkdir(parents=True, exist_ok=True)
    sweep_rows = []
    timing_rows = []
    outputs = ["sweep.csv"]
    unhashed = ["timings.csv"]
    infeasible = False
    for floor in acfg["floors"]:
        for budget in acfg["budgets"]:
            model_ip = agg.build_ip(pool, int(budget), float(floor))
            if acfg["export_lp"]:
                lp_name = f"solutions/model_K{budget}_phi{_fmt(float(floor))}.lp"
                agg.export_lp(model_ip, rd / lp_name)
                outputs.append(lp_name)
            for solver in solvers:
                if solver == "exact":
                    sol = agg.solve_exact(model_ip, pool, inner_limit=inner_limit)
                else:
                    sol = agg.solve_greedy(pool, int(budget), float(floor), inner_limit=inner_limit)
                violations = agg.verify_solution(pool, int(budget), float(floor), sol)
                if violations:
                    raise RuntimeError(
                        f"solver {solver} produced an invalid solution at K={budget}, phi={floor}: {violations}"
                    )
                if sol.status == "infeasible":
                    infeasible = True
                name = f"solutions/sol_K{budget}_phi{_fmt(float(floor))}_{solver}.json"
                _write_atomic(rd / name, canonical_json(sol.to_dict()))
                unhashed.append(name)
                sweep_rows.append(
                    [
                        budget,
                        _fmt(float(floor)),
                        solver,
                        sol.ip_coverage,
                        sol.ball_coverage,
                        _fmt(sol.claimed_min_fidelity),
                        _fmt(sol.ball_min_fidelity),
                        sol.status,
                        sol.nodes_explored,
                    ]
                )
                timing_rows.append([budget, _fmt(float(floor)), solver, _fmt(sol.wall_time_ms)])
    header = "K,phi,solver,ip_coverage,ball_coverage,min_fidelity,ball_min_fidelity,status,nodes_explored"
    _write_atomic(
        rd / "sweep.csv",
        header + "\n" + "\n".join(",".join(str(v) for v in row) for row in sweep_rows) + "\n",
    )
    _write_atomic(
        rd / "timings.csv",
        "K,phi,solver,wall_ms\n" + "\n".join(",".join(row_val for row_val in map(str, row)) for row in timing_rows) + "\n",
    )
    update_manifest(cfg, "aggregate", outputs, unhashed)
    if infeasible:
        raise InfeasibleAggregation("an aggregation cell reported infeasible")
    return rd / "sweep.csv"


class InfeasibleAggregation(RuntimeError):
    pass


def cmd_report(cfg: dict) -> list[Path]:
    rd = run_dir_for(cfg)
    sweep_path = rd / "sweep.csv"
    if not sweep_path.exists():
        raise ConfigError(f"missing inputs: {sweep_path}")
    lines = sweep_path.read_text(encoding="utf-8").strip().splitlines()
    header = lines[0].split(",")
    rows = [dict(zip(header, ln.split(","))) for ln in lines[1:]]
    series_keys = sorted({(r["solver"], r["phi"]) for r in rows})
    budgets = sorted({int(r["K"]) for r in rows})
    out_paths = []
    metrics = {
        "ip_coverage": "report_ip_coverage.csv",
        "ball_coverage": "report_ball_coverage.csv",
        "min_fidelity": "report_min_fidelity.csv",
        "ball_min_fidelity": "report_ball_min_fidelity.csv",
    }
    by_cell = {(int(r["K"]), r["solver"], r["phi"]): r for r in rows}
    for metric, fname in metrics.items():
        cols = ["K"] + [f"{solver}_phi{phi}" for solver, phi in series_keys]
        body = []
        for k in budgets:
            row = [str(k)]
            for solver, phi in series_keys:
                cell = by_cell.get((k, solver, phi))
                row.append(cell[metric] if cell else "")
            body.append(",".join(row))
        _write_atomic(rd / fname, ",".join(cols) + "\n" + "\n".join(body) + "\n")
        out_paths.append(rd / fname)
    update_manifest(cfg, "report", [p.name for p in out_paths])
    return out_paths


def cmd_sweep(cfg: dict) -> Path:
    cmd_train(cfg)
    cmd_explain(cfg)
    return cmd_aggregate(cfg)


# -- argument parsing ---------------------------------------------------------

def _parse_budgets(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aggrex", description=__doc__)
    p.add_argument("command", choices=["train", "explain", "aggregate", "sweep", "report"])
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--dataset-path")
    p.add_argument("--standardize", dest="standardize", action="store_true", default=None)
    p.add_argument("--no-standardize", dest="standardize", action="store_false")
    p.add_argument("--n-trees", type=int)
    p.add_argument("--samples", type=int, help="sampler.N")
    p.add_argument("--radii", help="comma-separated sampling radii")
    p.add_argument("--max-bins", type=int)
    p.add_argument("--eps-mi", type=float)
    p.add_argument("--variant", choices=["filtered", "unfiltered", "both"])
    p.add_argument("--max-depth", type=int)
    p.add_argument("--min-leaf", type=int)
    p.add_argument("--budgets", help="comma list or lo..hi range of K values")
    p.add_argument("--floors", help="comma-separated fidelity floors")
    p.add_argument("--solver", choices=["exact", "greedy", "both"])
    p.add_argument("--agg-radius", type=float, help="radius whose explainers feed aggregation")
    p.add_argument("--export-lp", action="store_true", default=None)
    return p


def overrides_from_args(args: argparse.Namespace) -> dict:
    out: dict = {}

    def put(path: list[str], value) -> None:
        if value is None:
            return
        node = out
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = value

    put(["seed"], args.seed)
    put(["output_dir"], args.output_dir)
    put(["dataset", "path"], args.dataset_path)
    put(["dataset", "standardize"], args.standardize)
    put(["blackbox", "n_trees"], args.n_trees)
    put(["sampler", "N"], args.samples)
    if args.radii is not None:
        put(["sampler", "radii"], [float(v) for v in args.radii.split(",") if v])
    put(["filter", "max_bins"], args.max_bins)
    put(["filter", "eps_mi"], args.eps_mi)
    put(["filter", "variant"], args.variant)
    put(["explainer", "max_depth"], args.max_depth)
    put(["explainer", "min_leaf"], args.min_leaf)
    if args.budgets is not None:
        put(["aggregate", "budgets"], _parse_budgets(args.budgets))
    if args.floors is not None:
        put(["aggregate", "floors"], [float(v) for v in args.floors.split(",") if v])
    put(["aggregate", "solver"], args.solver)
    put(["aggregate", "radius"], args.agg_radius)
    put(["aggregate", "export_lp"], args.export_lp)
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, overrides_from_args(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        if args.command == "train":
            out = cmd_train(cfg)
        elif args.command == "explain":
            out = cmd_explain(cfg)
        elif args.command == "aggregate":
            out = cmd_aggregate(cfg)
        elif args.command == "sweep":
            out = cmd_sweep(cfg)
        else:
            out = cmd_report(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleAggregation as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    elapsed = time.perf_counter() - t0
    if isinstance(out, list):
        for path in out:
            print(path)
    else:
        print(out)
    print(f"done in {elapsed:.1f}s", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
