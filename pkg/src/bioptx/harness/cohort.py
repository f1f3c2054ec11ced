"""Cohort synthesis, the grid experiment runner, report tables, and the
two-group significance comparison.

Every run writes a manifest (config, hash, seeds, versions) next to its
outputs so any table can be regenerated byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..anatomy import (AnatomySpec, LabelVolume, generate_synthetic,
                       lesion_volume_cc, load_volume, save_volume)
from ..env import BiopsyEnv, EnvConfig
from ..metrics import (EpisodeMetrics, aggregate, episode_metrics, table_rows,
                       two_sample_ttest, write_table_csv, write_table_json)
from ..policy import TrainConfig, evaluate_policy, load_policy, save_policy, train
from ..strategies import Perturbation, scout_episode, sweep_episode

SMALL_LESION_CC = 0.4         # small/large split threshold


def synth_cohort_specs(n_cases: int, seed: int,
                       volume_range_cc=(0.15, 0.6)) -> list[AnatomySpec]:
    """Deterministic cohort of synthetic cases: lesion volume uniform over
    the given range, lesion center jittered inside the gland."""
    rng = np.random.default_rng(seed)
    specs = []
    for _ in range(n_cases):
        cc = float(rng.uniform(*volume_range_cc))
        base = AnatomySpec(lesion_volume_cc=cc)
        for _ in range(100):
            offset = rng.normal(0.0, 6.0, size=3)
            spec = AnatomySpec(
                lesion_center_mm=tuple(np.asarray(base.prostate_center_mm) + offset),
                lesion_volume_cc=cc,
                seed=int(rng.integers(2 ** 31)),
            )
            try:
                spec.validate()
            except ValueError:
                continue
            specs.append(spec)
            break
        else:
            raise RuntimeError("could not place lesion inside gland")
    return specs


def write_cohort(specs: list[AnatomySpec], outdir) -> Path:
    """Save each case as BVOL plus a cases.json manifest; returns manifest path."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, spec in enumerate(specs):
        case_id = f"case_{k:03d}"
        vol = generate_synthetic(spec)
        save_volume(vol, outdir / f"{case_id}.bvol")
        entries.append({
            "id": case_id,
            "file": f"{case_id}.bvol",
            "lesion_cc": lesion_volume_cc(vol),
            "spec": asdict(spec),
        })
    manifest = outdir / "cases.json"
    manifest.write_text(json.dumps({"cases": entries}, indent=2, sort_keys=True))
    return manifest


def load_cohort(cases_dir) -> list[tuple[str, LabelVolume, dict]]:
    cases_dir = Path(cases_dir)
    meta = json.loads((cases_dir / "cases.json").read_text())
    out = []
    for entry in meta["cases"]:
        out.append((entry["id"], load_volume(cases_dir / entry["file"]), entry))
    return out


def _load_cohort_tolerant(cases_dir):
    """Per-case loading for the runner: unreadable cases become recorded
    failures instead of aborting the whole run."""
    cases_dir = Path(cases_dir)
    meta = json.loads((cases_dir / "cases.json").read_text())
    cases, failures = [], []
    for entry in meta["cases"]:
        try:
            cases.append((entry["id"], load_volume(cases_dir / entry["file"]),
                          entry))
        except Exception as e:
            failures.append({"case": entry["id"], "error": str(e)})
    return cases, failures


@dataclass
class ExperimentConfig:
    cases_dir: str
    strategy: str = "sweep"                  # sweep | scout | agent | human | remote
    biases: tuple = (0.0, 5.0, 10.0)
    sds: tuple = (0.0, 5.0, 10.0)
    episodes_per_cell: int = 3               # repeats per case per (bias, sd)
    env: EnvConfig = field(default_factory=EnvConfig)
    seed: int = 0
    outdir: str = "out"
    policy_dir: str | None = None            # agent: per-case checkpoints
    train: TrainConfig | None = None         # agent: train per case instead
    logs_in: str | None = None               # human/remote: pre-recorded logs
    eval_episodes: int = 5                   # agent episodes per case
    agent_row: dict | None = None            # precomputed agent aggregate
    workers: int = 1                         # case-parallel baseline workers


def _hash_config(cfg: ExperimentConfig) -> str:
    blob = json.dumps({**asdict(cfg), "env": asdict(cfg.env)},
                      sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _episode_seed(seed: int, case_idx: int, bias: float, sd: float, rep: int) -> int:
    key = f"{seed}:{case_idx}:{bias}:{sd}:{rep}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:4], "little")


def _baseline_case(args):
    """Every episode of one case in one (bias, sd) cell. Module-level and
    argument-packed so a process pool can run cases in parallel; outputs are
    deterministic functions of the derived seeds either way."""
    strategy, case_id, vol, entry, env_cfg, seed, ci, bias, sd, reps = args
    run = sweep_episode if strategy == "sweep" else scout_episode
    p = Perturbation(bias_mm=bias, sd_mm=sd)
    mets, logs, failures = [], [], []
    for rep in range(reps):
        eseed = _episode_seed(seed, ci, bias, sd, rep)
        try:
            env = BiopsyEnv(vol, env_cfg, case_id)
            env.reset(seed=eseed)
            log = run(env, p, np.random.default_rng(eseed + 1))
            if log.needles:
                mets.append(episode_metrics(log, entry["lesion_cc"]))
            logs.append(log)
        except Exception as e:         # keep the cohort going, record the case
            failures.append({"case": case_id, "rep": rep, "error": str(e)})
    return mets, logs, failures


def _run_baseline_cell(strategy, cases, cfg, bias, sd):
    """All episodes of one (bias, sd) grid cell; returns (metrics, logs, fails)."""
    jobs = [(strategy, case_id, vol, entry, cfg.env, cfg.seed, ci, bias, sd,
             cfg.episodes_per_cell)
            for ci, (case_id, vol, entry) in enumerate(cases)]
    if cfg.workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_baseline_case, jobs))
    else:
        results = [_baseline_case(j) for j in jobs]
    mets, logs, failures = [], [], []
    for m, l, f in results:            # case order fixed: outputs reproducible
        mets.extend(m)
        logs.extend(l)
        failures.extend(f)
    return mets, logs, failures


def _run_agent(cases, cfg, outdir):
    """Per-case agent row: evaluate stored checkpoints, or train each case's
    policy first when a train config is given (checkpoints land in the run
    output directory)."""
    mets, logs, failures = [], [], []
    for ci, (case_id, vol, entry) in enumerate(cases):
        try:
            if cfg.policy_dir is not None:
                params, _ = load_policy(Path(cfg.policy_dir) / f"{case_id}.ckpt")
            elif cfg.train is not None:
                def factory(v=vol, cid=case_id):
                    return BiopsyEnv(v, cfg.env, cid)
                result = train(factory, cfg.train,
                               seed=_episode_seed(cfg.seed, ci, -2, -2, 0))
                params = result.best_params
                ckpt_dir = Path(outdir) / "policies"
                ckpt_dir.mkdir(parents=True, exist_ok=True)
                save_policy(params, ckpt_dir / f"{case_id}.ckpt", cfg.train.hash())
            else:
                raise ValueError("agent strategy needs policy_dir or train config")
            env = BiopsyEnv(vol, cfg.env, case_id)
            env.reset(seed=_episode_seed(cfg.seed, ci, -1, -1, 0))
            _, _, case_logs = evaluate_policy(params, env, cfg.eval_episodes)
            for log in case_logs:
                if log.needles:
                    mets.append(episode_metrics(log, entry["lesion_cc"]))
                logs.append(log)
        except Exception as e:
            failures.append({"case": case_id, "error": str(e)})
    return mets, logs, failures


def _ingest_logs(cfg):
    """human/remote: episodes arrive as recorded JSONL logs (service/bridge
    write the same schema); metrics are recomputed from the records."""
    mets, failures = [], []
    for path in sorted(Path(cfg.logs_in).glob("*.jsonl")):
        try:
            recs = [json.loads(line) for line in path.read_text().splitlines() if line]
            if recs:
                mets.append(metrics_from_records(recs))
        except Exception as e:
            failures.append({"case": path.name, "error": str(e)})
    return mets, failures


def metrics_from_records(recs: list[dict]) -> EpisodeMetrics:
    """EpisodeMetrics recomputed from serialized step records alone."""
    from ..geometry import DEFAULT_GRID
    from ..metrics import needle_area, CCL_SIGNIFICANT_MM
    ccls = [r["ccl_mm"] for r in recs]
    hits = sum(1 for r in recs if r["hit"])
    positions = [DEFAULT_GRID.to_world(r["i"], r["j"]) for r in recs]
    positive = [c for c in ccls if c > 0]
    return EpisodeMetrics(
        hr_pct=100.0 * hits / len(recs),
        ccl_per_needle=ccls,
        ccl_mm=float(np.mean(positive)) if positive else 0.0,
        ccl_max_mm=max(ccls),
        significant=max(ccls) >= CCL_SIGNIFICANT_MM,
        na_mm2=needle_area(positions),
        needles_fired=len(recs),
    )


def run_cohort(cfg: ExperimentConfig) -> dict:
    """Run the configured strategy over the cohort; write JSONL logs, the
    grid table (CSV+JSON), per-cell metric samples, the small/large lesion
    split, and the run manifest. Returns paths plus the failure fraction."""
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cases, load_failures = _load_cohort_tolerant(cfg.cases_dir)

    results, samples, failures = [], {}, list(load_failures)
    n_attempted = len(load_failures)
    log_path = outdir / "episodes.jsonl"
    with open(log_path, "w") as logf:
        def emit(logs):
            for log in logs:
                for line in log.to_jsonl().splitlines():
                    logf.write(line + "\n")

        if cfg.strategy in ("sweep", "scout"):
            for bias in cfg.biases:
                for sd in cfg.sds:
                    mets, logs, fails = _run_baseline_cell(
                        cfg.strategy, cases, cfg, bias, sd)
                    n_attempted += len(cases) * cfg.episodes_per_cell
                    failures.extend(fails)
                    emit(logs)
                    if mets:
                        results.append({"strategy": cfg.strategy, "bias": bias,
                                        "sd": sd, "aggregate": aggregate(mets),
                                        "metrics": mets})
                    samples[f"{cfg.strategy}_b{bias:g}_sd{sd:g}"] = _sample_dict(mets)
        elif cfg.strategy == "agent":
            mets, logs, fails = _run_agent(cases, cfg, outdir)
            n_attempted += len(cases)
            failures.extend(fails)
            emit(logs)
            if mets:
                results.append({"strategy": "agent", "bias": "", "sd": "",
                                "aggregate": aggregate(mets), "metrics": mets})
            samples["agent"] = _sample_dict(mets)
        elif cfg.strategy in ("human", "remote"):
            mets, fails = _ingest_logs(cfg)
            n_attempted += max(len(mets) + len(fails), 1)
            failures.extend(fails)
            if mets:
                results.append({"strategy": cfg.strategy, "bias": "", "sd": "",
                                "aggregate": aggregate(mets), "metrics": mets})
            samples[cfg.strategy] = _sample_dict(mets)
        else:
            raise ValueError(f"unknown strategy {cfg.strategy!r}")

    rows = table_rows([{k: r[k] for k in ("strategy", "bias", "sd", "aggregate")}
                       for r in results])
    if cfg.agent_row is not None:
        rows.insert(0, cfg.agent_row)
    elif cfg.strategy != "agent":
        rows.insert(0, {"strategy": "agent", "bias": "", "sd": "",
                        "CCL(mm)": "", "HR(%)": "", "NA(mm2)": "", "n": 0})
    write_table_csv(rows, outdir / "table.csv")
    write_table_json([{k: r[k] for k in ("strategy", "bias", "sd", "aggregate")}
                      for r in results], outdir / "table.json")

    sizes = _size_split([m for r in results for m in r["metrics"]])
    write_table_csv(sizes, outdir / "lesion_size_table.csv")

    (outdir / "samples.json").write_text(json.dumps(samples, indent=2, sort_keys=True))
    fail_frac = len(failures) / max(n_attempted, 1)
    manifest = {
        "config": {**asdict(cfg), "env": asdict(cfg.env)},
        "config_hash": _hash_config(cfg),
        "versions": {"bioptx": __version__, "numpy": np.__version__},
        "failures": failures,
        "failure_fraction": fail_frac,
    }
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True, default=str))
    return {
        "table_csv": outdir / "table.csv",
        "table_json": outdir / "table.json",
        "sizes_csv": outdir / "lesion_size_table.csv",
        "samples": outdir / "samples.json",
        "logs": log_path,
        "manifest": outdir / "manifest.json",
        "failure_fraction": fail_frac,
    }


def _sample_dict(mets: list[EpisodeMetrics]) -> dict:
    return {
        "ccl_mm": [m.ccl_mm for m in mets],
        "hr_pct": [m.hr_pct for m in mets],
        "na_mm2": [m.na_mm2 for m in mets],
    }


def _size_split(mets: list[EpisodeMetrics]) -> list[dict]:
    """Small/large rows at the 0.4cc threshold (episodes missing a lesion
    volume are skipped)."""
    rows = []
    for name, keep in (("small(<0.4cc)", lambda cc: cc < SMALL_LESION_CC),
                       ("large(>=0.4cc)", lambda cc: cc >= SMALL_LESION_CC)):
        grp = [m for m in mets if m.lesion_volume_cc is not None and keep(m.lesion_volume_cc)]
        if grp:
            rows.extend(table_rows([{"strategy": name, "bias": "", "sd": "",
                                     "aggregate": aggregate(grp)}]))
        else:
            rows.append({"strategy": name, "bias": "", "sd": "",
                         "CCL(mm)": "", "HR(%)": "", "NA(mm2)": "", "n": 0})
    return rows


def _load_samples(path, cell=None) -> dict:
    """Flat {metric: [values]} from a sample file; cohort samples.json nests
    one such dict per grid cell, selected by ``cell`` (or implicitly when the
    file holds exactly one)."""
    data = json.loads(Path(path).read_text())
    if data and all(isinstance(v, dict) for v in data.values()):
        if cell is None:
            if len(data) == 1:
                cell = next(iter(data))
            else:
                raise ValueError(
                    f"{path} holds cells {sorted(data)}; pick one with --cell")
        if cell not in data:
            raise ValueError(f"{path} has no cell {cell!r}; "
                             f"available: {sorted(data)}")
        data = data[cell]
    return data


def compare(path_a, path_b, cell_a=None, cell_b=None) -> dict:
    """Two-sample t-test per shared metric between two sample files
    ({metric: [values]}, or a cohort samples.json plus a cell name); raises
    on mismatched metric names."""
    a = _load_samples(path_a, cell_a)
    b = _load_samples(path_b, cell_b)
    if set(a) != set(b):
        raise ValueError(f"metric names differ: {sorted(a)} vs {sorted(b)}")
    report = {}
    for name in sorted(a):
        t, df, p, degenerate = two_sample_ttest(a[name], b[name])
        report[name] = {"t": t, "df": df, "p": p,
                        "significant": bool(p < 0.05), "degenerate": degenerate}
    return report
