"""Pipeline driver: one subcommand per stage, all outputs under a hashed run directory.

Every stage writes its files atomically and finishes with a
``<stage>.manifest.json`` recording the config hash, the rng seed and the
sha256 of each file it wrote. Downstream stages compare the manifests they
consume against the current config and warn on mismatch.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .analysis import (PowerLawFitError, degree_scaling, fit_power_law, intra_inter_degrees, p_sweep,
                       randomize_network)
from .chain import (GroundTruth, dump_ground_truth, dump_transactions, join_ground_truth, load_ground_truth,
                    load_transactions)
from .config import ConfigError, RunConfig, load_config
from .heuristics import build_context
from .lpa import cluster_size_distribution, dump_clustering, load_clustering, seeded_lpa
from .metrics import metrics_report, modularity
from .network import (CorrespondenceNetwork, build_network, degree_distribution, dump_edges, isolated_nodes,
                      load_edges, network_stats)
from .rng import derive_seed
from .sampling import SampleResult, TimeWindow, make_windows, semesters_from, slice_transactions, snowball_sample
from .synthgen import generate_chain

log = logging.getLogger("acn")

COMMANDS = ("generate", "sample", "build", "cluster", "metrics", "sweep", "randomize", "fit")


class StageError(RuntimeError):
    """A missing upstream artifact or an unusable input."""


# --------------------------------------------------------------------------
# file plumbing

def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


class Stage:
    """Collects written files and emits the manifest last."""

    def __init__(self, name: str, cfg: RunConfig, out_dir: Path, rng_seed: int):
        self.name, self.cfg, self.out_dir, self.rng_seed = name, cfg, out_dir, rng_seed
        self.files: dict[str, str] = {}
        self.upstream: dict[str, str] = {}

    @property
    def header(self) -> dict:
        return {"config_hash": self.cfg.stage_hash(self.name), "rng_seed": self.rng_seed, "stage": self.name}

    def write(self, rel: str, text: str) -> Path:
        path = self.out_dir / rel
        write_atomic(path, text)
        self.files[rel] = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return path

    def write_json(self, rel: str, obj: dict) -> Path:
        return self.write(rel, dumps_json({**self.header, **obj}))

    def require(self, stage: str, directory: Path) -> dict:
        """Load an upstream manifest, warning if it was produced under a different config."""
        path = directory / f"{stage}.manifest.json"
        if not path.exists():
            raise StageError(f"missing upstream artifact {path}; run `acn {stage}` first")
        manifest = json.loads(path.read_text(encoding="utf-8"))
        expected = self.cfg.stage_hash(stage)
        if manifest.get("config_hash") != expected:
            log.warning("upstream %s was built with config hash %s, current config gives %s",
                        stage, manifest.get("config_hash"), expected)
        for rel, digest in manifest.get("files", {}).items():
            f = directory / rel
            if not f.exists():
                raise StageError(f"upstream file {f} listed in {path.name} is missing")
            if sha256_file(f) != digest:
                log.warning("upstream file %s does not match its manifest digest", f)
        self.upstream[stage] = manifest.get("config_hash", "")
        return manifest

    def finish(self, extra: dict | None = None) -> Path:
        body = {**self.header, "files": dict(sorted(self.files.items())),
                "upstream": dict(sorted(self.upstream.items())), **(extra or {})}
        path = self.out_dir / f"{self.name}.manifest.json"
        write_atomic(path, dumps_json(body))
        return path


# --------------------------------------------------------------------------
# inputs

def _lpa_dir(cfg: RunConfig) -> Path:
    return cfg.run_dir / f"lpa-{cfg.stage_hash('cluster')}"


def _load_chain_and_gt(cfg: RunConfig, stage: Stage):
    if cfg.paths.chain:
        chain_path = Path(cfg.paths.chain)
        if not chain_path.exists():
            raise StageError(f"chain file {chain_path} does not exist")
        if not cfg.paths.ground_truth:
            raise StageError("paths.ground_truth is required with an external chain")
        gt_path = Path(cfg.paths.ground_truth)
        if not gt_path.exists():
            raise StageError(f"ground-truth file {gt_path} does not exist")
        fmt = cfg.paths.chain_format
    else:
        stage.require("generate", cfg.run_dir)
        chain_path, gt_path, fmt = cfg.run_dir / "chain.jsonl", cfg.run_dir / "ground_truth.csv", "jsonl"
    with open(chain_path, "rb") as f:
        chain = load_transactions(f, format=fmt)
    with open(gt_path, "rb") as f:
        gt = load_ground_truth(f)
    return chain, join_ground_truth(gt, chain)


def _windows(cfg: RunConfig) -> list[TimeWindow]:
    w = cfg.windows
    kinds = ("cumulative", "partial") if w.kind == "both" else (w.kind,)
    semesters = semesters_from(w.start, w.semesters)
    out = []
    for kind in kinds:
        try:
            out.extend(make_windows(semesters, kind, w.origin or None))
        except ValueError as exc:
            raise ConfigError(f"[windows] {exc}") from exc
    return out


def _network_names(cfg: RunConfig, stage: Stage) -> list[str]:
    manifest = stage.require("build", cfg.run_dir)
    return list(manifest["networks"])


def _load_network(cfg: RunConfig, name: str, gt: GroundTruth) -> CorrespondenceNetwork:
    base = cfg.run_dir / "networks"
    meta = json.loads((base / f"{name}.json").read_text(encoding="utf-8"))
    text = (base / f"{name}.edges.csv").read_text(encoding="utf-8")
    return load_edges(text, gt, TimeWindow.from_json(meta["window"]), meta.get("isolated_nodes", []))


def _selected(cfg: RunConfig, names: list[str]) -> str:
    # default: the widest window of the first kind built (the full cumulative one)
    kind = names[0].split("_")[0] if names else ""
    name = cfg.analysis.network or ([n for n in names if n.startswith(kind + "_")] or [""])[-1]
    if name not in names:
        raise StageError(f"network {name!r} not built; available: {', '.join(names) or 'none'}")
    return name


# --------------------------------------------------------------------------
# commands

def cmd_generate(cfg: RunConfig, jobs: int = 1) -> Path:
    if cfg.paths.chain:
        raise StageError("paths.chain points at an external ledger; nothing to generate")
    seed = derive_seed(cfg.rng_seed, "generate")
    stage = Stage("generate", cfg, cfg.run_dir, seed)
    ledger = generate_chain(cfg.generator_config(seed))
    stage.write("chain.jsonl", dump_transactions(ledger.chain))
    stage.write("ground_truth.csv", dump_ground_truth(ledger.ground_truth))
    stage.write("behavior_log.jsonl", ledger.dump_behavior_log())
    stage.write("spend_log.csv", ledger.dump_spend_log())
    stage.write_json("entities.json", {"entities": ledger.entity_attributes})
    return stage.finish({"transaction_count": len(ledger.chain), "address_count": len(ledger.ground_truth)})


def cmd_sample(cfg: RunConfig, jobs: int = 1) -> Path:
    seed = derive_seed(cfg.rng_seed, "sample")
    stage = Stage("sample", cfg, cfg.run_dir, seed)
    chain, gt = _load_chain_and_gt(cfg, stage)
    if cfg.sample.enabled:
        sample = snowball_sample(chain, gt, cfg.sample.seed_count, seed)
        body = sample.to_json()
    else:
        body = {"rng_seed": seed, "s0": [], "s1": [], "s2": [], "t0": [], "t1": [],
                "all_transactions": True}
    stage.write_json("sample.json", body)
    return stage.finish({"transaction_count": len(chain) if not cfg.sample.enabled
                         else len(set(body["t0"]) | set(body["t1"]))})


def _build_one(args):
    cfg, window, tx_ids = args
    chain, gt, ctx = _BUILD["chain"], _BUILD["gt"], _BUILD["ctx"]
    net = build_network(sorted(tx_ids), chain, ctx, cfg.heuristic_config(), gt, window,
                        retain_isolated=cfg.windows.retain_isolated)
    return window.name, dump_edges(net), {
        "window": window.to_json(),
        "transaction_count": len(tx_ids),
        "stats": network_stats(net),
        "degree_distribution": {str(k): v for k, v in degree_distribution(net).items()},
        "isolated_nodes": isolated_nodes(net),
    }


_BUILD: dict = {}


def _init_build(chain, gt, ctx):
    _BUILD.update(chain=chain, gt=gt, ctx=ctx)


def cmd_build(cfg: RunConfig, jobs: int = 1) -> Path:
    stage = Stage("build", cfg, cfg.run_dir, cfg.rng_seed)
    chain, gt = _load_chain_and_gt(cfg, stage)
    stage.require("sample", cfg.run_dir)
    sample = json.loads((cfg.run_dir / "sample.json").read_text(encoding="utf-8"))
    if sample.get("all_transactions"):
        tx_ids = {tx.tx_id for tx in chain}
    else:
        tx_ids = set(SampleResult.from_json(sample).transactions)
    hcfg = cfg.heuristic_config()
    ctx = build_context(chain, hcfg)
    tasks = [(cfg, w, slice_transactions(tx_ids, chain, w)) for w in _windows(cfg)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(min(jobs, len(tasks)), initializer=_init_build, initargs=(chain, gt, ctx)) as ex:
            results = list(ex.map(_build_one, tasks))
    else:
        _init_build(chain, gt, ctx)
        results = [_build_one(t) for t in tasks]
        _BUILD.clear()
    summary = {}
    for name, edges, meta in results:
        stage.write(f"networks/{name}.edges.csv", edges)
        stage.write_json(f"networks/{name}.json", {**meta, "heuristics": hcfg.to_dict()})
        summary[name] = meta["stats"]
    return stage.finish({"networks": summary})


def _cluster_one(cfg: RunConfig, name: str, gt: GroundTruth, seed: int):
    net = _load_network(cfg, name, gt)
    if net.node_count == 0:
        return net, None
    return net, seeded_lpa(net, gt, cfg.lpa.p, seed, cfg.lpa.max_iters, random_ties=cfg.lpa.random_ties)


def cmd_cluster(cfg: RunConfig, jobs: int = 1) -> Path:
    seed = derive_seed(cfg.rng_seed, "cluster")
    out = _lpa_dir(cfg)
    stage = Stage("cluster", cfg, out, seed)
    _, gt = _load_chain_and_gt(cfg, stage)
    summary = {}
    for name in _network_names(cfg, stage):
        net, c = _cluster_one(cfg, name, gt, seed)
        if c is None:
            stage.write(f"clusters/{name}.csv", "address,cluster_label,is_seed\n")
            meta = {"p": cfg.lpa.p, "rng_seed": seed, "iterations_used": 0, "converged": True,
                    "seed_count": 0, "cluster_count": 0}
        else:
            stage.write(f"clusters/{name}.csv", dump_clustering(c))
            meta = c.meta()
            meta["cluster_size_distribution"] = {str(k): v for k, v in cluster_size_distribution(c).items()}
        stage.write_json(f"clusters/{name}.json", {"network": name, "lpa": meta})
        summary[name] = {k: meta[k] for k in ("cluster_count", "converged", "iterations_used")}
    return stage.finish({"clusterings": summary})


def _load_clustering(out: Path, name: str, gt: GroundTruth):
    meta = json.loads((out / "clusters" / f"{name}.json").read_text(encoding="utf-8"))["lpa"]
    return load_clustering((out / "clusters" / f"{name}.csv").read_text(encoding="utf-8"), gt, meta)


def cmd_metrics(cfg: RunConfig, jobs: int = 1) -> Path:
    out = _lpa_dir(cfg)
    stage = Stage("metrics", cfg, out, derive_seed(cfg.rng_seed, "cluster"))
    _, gt = _load_chain_and_gt(cfg, stage)
    names = _network_names(cfg, stage)
    stage.require("cluster", out)
    summary = {}
    for name in names:
        net = _load_network(cfg, name, gt)
        c = _load_clustering(out, name, gt)
        try:
            report = metrics_report(net, c, gt)
        except ValueError as exc:
            stage.write_json(f"metrics/{name}.json", {"network": name, "skipped": str(exc)})
            summary[name] = None
            continue
        body = json.loads(report.to_json())
        body["network"] = name
        stage.write_json(f"metrics/{name}.json", body)
        stage.write(f"metrics/{name}.clusters.csv", report.per_cluster_csv())
        stage.write(f"metrics/{name}.entities.csv", report.per_entity_csv())
        summary[name] = report.scalars()
    return stage.finish({"metrics": summary})


def cmd_sweep(cfg: RunConfig, jobs: int = 1) -> Path:
    seed = derive_seed(cfg.rng_seed, "sweep")
    out = cfg.run_dir / f"sweep-{cfg.stage_hash('sweep')}"
    stage = Stage("sweep", cfg, out, seed)
    _, gt = _load_chain_and_gt(cfg, stage)
    name = _selected(cfg, _network_names(cfg, stage))
    net = _load_network(cfg, name, gt)
    result = p_sweep(net, gt, cfg.sweep.p_grid, cfg.sweep.repeats, seed, cfg.lpa.max_iters, jobs=jobs)
    stage.write(f"{name}.sweep.csv", result.to_csv())
    summary = {key: {repr(p): list(v) for p, v in result.summary(key).items()}
               for key in ("ami", "ari", "homogeneity", "modularity", "cluster_count")}
    converged = [bool(r["converged"]) for r in result.rows]
    stage.write_json(f"{name}.summary.json", {"network": name, "p_grid": list(cfg.sweep.p_grid),
                                              "repeats": cfg.sweep.repeats, "mean_sd": summary,
                                              "converged_fraction": sum(converged) / len(converged)})
    return stage.finish({"network": name})


def _randomize_one(args):
    net, swaps, seed, lpa_seed, max_iters = args
    r = randomize_network(net, swaps, seed)
    q = None
    if r.edges:
        q = modularity(r, seeded_lpa(r, GroundTruth({}), 0.0, lpa_seed, max_iters))
    return r, q


def cmd_randomize(cfg: RunConfig, jobs: int = 1) -> Path:
    seed = derive_seed(cfg.rng_seed, "randomize")
    out = cfg.run_dir / f"randomize-{cfg.stage_hash('randomize')}"
    stage = Stage("randomize", cfg, out, seed)
    _, gt = _load_chain_and_gt(cfg, stage)
    name = _selected(cfg, _network_names(cfg, stage))
    net = _load_network(cfg, name, gt)
    if net.edge_count < 2:
        raise StageError(f"network {name} has fewer than two edges; nothing to randomize")
    m = net.edge_count
    lpa_seed = derive_seed(seed, "lpa")
    tasks = []
    for i in range(1, cfg.analysis.randomize_count + 1):
        swaps = 4 * i * m if cfg.analysis.randomize_schedule == "escalating" else 4 * m
        tasks.append((net, swaps, derive_seed(seed, "replica", i), lpa_seed, cfg.lpa.max_iters))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(min(jobs, len(tasks))) as ex:
            results = list(ex.map(_randomize_one, tasks))
    else:
        results = [_randomize_one(t) for t in tasks]
    original_q = modularity(net, seeded_lpa(net, GroundTruth({}), 0.0, lpa_seed, cfg.lpa.max_iters))
    replicas = []
    for i, (r, q) in enumerate(results, start=1):
        rel = f"{name}.r{i}"
        stage.write(f"{rel}.edges.csv", dump_edges(r))
        stage.write_json(f"{rel}.json", {"network": name, "randomized": r.meta["randomized"], "lpa_modularity": q})
        replicas.append({"replica": i, **r.meta["randomized"], "lpa_modularity": q})
    qs = np.array([x["lpa_modularity"] for x in replicas], dtype=np.float64)
    stage.write_json(f"{name}.randomize.json", {
        "network": name, "schedule": cfg.analysis.randomize_schedule, "original_lpa_modularity": original_q,
        "replicas": replicas, "mean_randomized_modularity": float(qs.mean()),
        "sd_randomized_modularity": float(qs.std(ddof=1)) if qs.size > 1 else 0.0,
    })
    return stage.finish({"network": name})


def cmd_fit(cfg: RunConfig, jobs: int = 1) -> Path:
    lpa_out = _lpa_dir(cfg)
    out = cfg.run_dir / f"fit-{cfg.stage_hash('fit')}"
    stage = Stage("fit", cfg, out, derive_seed(cfg.rng_seed, "cluster"))
    _, gt = _load_chain_and_gt(cfg, stage)
    name = _selected(cfg, _network_names(cfg, stage))
    stage.require("cluster", lpa_out)
    net = _load_network(cfg, name, gt)
    c = _load_clustering(lpa_out, name, gt)
    sizes = list(cluster_size_distribution_expanded(c))
    body: dict = {"network": name, "cluster_count": len(sizes)}
    try:
        body["power_law"] = json.loads(fit_power_law(sizes, min_tail=cfg.analysis.fit_min_tail).to_json())
    except PowerLawFitError as exc:
        body["power_law"] = None
        body["power_law_error"] = str(exc)
    if net.edges:
        records = intra_inter_degrees(net, c)
        stage.write(f"{name}.intra_inter.csv", _intra_inter_csv(records))
        try:
            body["degree_scaling"] = degree_scaling(records)
        except ValueError as exc:
            body["degree_scaling"] = None
            body["degree_scaling_error"] = str(exc)
    stage.write_json(f"{name}.fit.json", body)
    return stage.finish({"network": name})


def cluster_size_distribution_expanded(c) -> list[int]:
    sizes = []
    for size, count in cluster_size_distribution(c).items():
        sizes.extend([size] * count)
    return sizes


def _intra_inter_csv(records) -> str:
    lines = ["cluster,size,intra_degree,inter_degree,connected"]
    for r in records:
        lines.append(f"{r.cluster},{r.size},{r.intra_degree},{r.inter_degree},{int(r.connected)}")
    return "\n".join(lines) + "\n"


HANDLERS = {
    "generate": cmd_generate, "sample": cmd_sample, "build": cmd_build, "cluster": cmd_cluster,
    "metrics": cmd_metrics, "sweep": cmd_sweep, "randomize": cmd_randomize, "fit": cmd_fit,
}


# --------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acn", description="Address correspondence network pipeline.")
    parser.add_argument("command", choices=COMMANDS + ("config",),
                        help="pipeline stage to run; `config` prints the resolved configuration")
    parser.add_argument("--config", help="INI configuration file (defaults apply when omitted)")
    parser.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPU count)")
    parser.add_argument("--seed", type=int, default=None, help="override the global rng_seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.command == "config":
            sys.stdout.write(cfg.to_ini())
            return 0
        jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
        if jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        manifest = HANDLERS[args.command](cfg, jobs)
    except ConfigError as exc:
        return _fail(args.command, "invalid_config", exc, 2)
    except (StageError, FileNotFoundError) as exc:
        return _fail(args.command, "missing_input", exc, 3)
    except (ValueError, KeyError, OSError) as exc:
        return _fail(args.command, type(exc).__name__, exc, 1)
    print(manifest)
    return 0


def _fail(command: str, kind: str, exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "command": command, "message": str(exc)}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
