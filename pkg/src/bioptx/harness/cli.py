"""Command line: cohort synthesis, baseline grids, per-case training and
evaluation, significance comparison, the session service, and the stdio
bridge."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..anatomy import lesion_volume_cc, load_volume
from ..env import BiopsyEnv, EnvConfig
from ..metrics import aggregate, episode_metrics, table_rows, write_table_csv
from ..policy import (TrainConfig, evaluate_policy, load_policy, save_policy,
                      train, write_curve_csv)
from .bridge import run_bridge
from .cohort import (ExperimentConfig, compare, load_cohort, run_cohort,
                     synth_cohort_specs, write_cohort)


def _env_config(args) -> EnvConfig:
    kwargs = {}
    if getattr(args, "noise_sd", None) is not None:
        kwargs["noise_sd_mm"] = args.noise_sd
    if getattr(args, "env_seed", None) is not None:
        kwargs["seed"] = args.env_seed
    return EnvConfig(**kwargs)


def cmd_gen(args) -> int:
    specs = synth_cohort_specs(args.cases, args.seed,
                               (args.min_cc, args.max_cc))
    manifest = write_cohort(specs, args.out)
    print(f"wrote {args.cases} cases -> {manifest}")
    return 0


def cmd_baseline(args) -> int:
    grid = tuple(float(v) for v in args.grid.split(","))
    cfg = ExperimentConfig(
        cases_dir=args.cases,
        strategy=args.strategy,
        biases=grid,
        sds=grid,
        episodes_per_cell=args.episodes,
        env=_env_config(args),
        seed=args.seed,
        outdir=args.out,
    )
    paths = run_cohort(cfg)
    print(f"table -> {paths['table_csv']}")
    if paths["failure_fraction"] > 0.10:
        print(f"failure fraction {paths['failure_fraction']:.0%} exceeds 10%",
              file=sys.stderr)
        return 1
    return 0


def cmd_train(args) -> int:
    vol = load_volume(args.case)
    case_id = Path(args.case).stem
    env_cfg = _env_config(args)
    tc = TrainConfig(total_episodes=args.episodes,
                     rollout_steps=args.rollout,
                     eval_every=args.eval_every)

    def factory():
        return BiopsyEnv(vol, env_cfg, case_id)

    result = train(factory, tc, seed=args.seed, verbose=not args.quiet)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_policy(result.best_params, out, tc.hash())
    if args.curve:
        write_curve_csv(result.curve, args.curve)
    print(f"trained {result.episodes} episodes, best eval reward "
          f"{result.best_eval_reward:.2f} -> {out}")
    return 0


def cmd_eval(args) -> int:
    vol = load_volume(args.case)
    case_id = Path(args.case).stem
    params, _ = load_policy(args.policy)
    env = BiopsyEnv(vol, _env_config(args), case_id)
    env.reset(seed=args.seed)
    mean_r, hr, logs = evaluate_policy(params, env, args.episodes,
                                       np.random.default_rng(args.seed))
    mets = [episode_metrics(lg, lesion_volume_cc(vol)) for lg in logs if lg.needles]
    agg = aggregate(mets)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "episodes.jsonl", "w") as f:
        for lg in logs:
            text = lg.to_jsonl()
            if text:
                f.write(text + "\n")
    (outdir / "samples.json").write_text(json.dumps({
        "ccl_mm": [m.ccl_mm for m in mets],
        "hr_pct": [m.hr_pct for m in mets],
        "na_mm2": [m.na_mm2 for m in mets],
    }, indent=2, sort_keys=True))
    rows = table_rows([{"strategy": "agent", "bias": "", "sd": "",
                        "aggregate": agg}])
    write_table_csv(rows, outdir / "table.csv")
    print(f"eval: mean reward {mean_r:.2f}, HR {hr:.1f}% over {args.episodes} "
          f"episodes -> {outdir}")
    return 0


def cmd_compare(args) -> int:
    report = compare(args.a, args.b, args.cell_a or args.cell,
                     args.cell_b or args.cell)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_serve(args) -> int:
    import uvicorn
    from .service import create_app
    cases = {cid: vol for cid, vol, _ in load_cohort(args.cases)}
    app = create_app(cases, _env_config(args))
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_bridge(args) -> int:
    vol = load_volume(args.case)
    run_bridge(vol, _env_config(args), Path(args.case).stem,
               sys.stdin, sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bioptx",
                                description="template-guided biopsy workbench")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="synthesize a cohort of cases")
    g.add_argument("--out", required=True)
    g.add_argument("--cases", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--min-cc", type=float, default=0.15)
    g.add_argument("--max-cc", type=float, default=0.6)
    g.set_defaults(fn=cmd_gen)

    b = sub.add_parser("baseline", help="run a baseline strategy grid")
    b.add_argument("--cases", required=True)
    b.add_argument("--strategy", choices=["sweep", "scout"], default="sweep")
    b.add_argument("--grid", default="0,5,10", help="bias/sd values, comma separated")
    b.add_argument("--episodes", type=int, default=3, help="episodes per case per cell")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--noise-sd", type=float, default=None)
    b.add_argument("--out", default="out/baseline")
    b.set_defaults(fn=cmd_baseline)

    t = sub.add_parser("train", help="train a per-case PPO policy")
    t.add_argument("--case", required=True, help="BVOL case file")
    t.add_argument("--episodes", type=int, default=20000)
    t.add_argument("--rollout", type=int, default=2048)
    t.add_argument("--eval-every", type=int, default=500)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--noise-sd", type=float, default=None)
    t.add_argument("--out", default="out/policy.ckpt")
    t.add_argument("--curve", default=None, help="reward curve CSV path")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a trained policy on a case")
    e.add_argument("--case", required=True)
    e.add_argument("--policy", required=True)
    e.add_argument("--episodes", type=int, default=50)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--noise-sd", type=float, default=None)
    e.add_argument("--out", default="out/eval")
    e.set_defaults(fn=cmd_eval)

    c = sub.add_parser("compare", help="t-test between two metric sample files")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--cell", default=None,
                   help="grid cell to pick from cohort samples files")
    c.add_argument("--cell-a", default=None)
    c.add_argument("--cell-b", default=None)
    c.add_argument("--out", default=None)
    c.set_defaults(fn=cmd_compare)

    s = sub.add_parser("serve", help="run the session service")
    s.add_argument("--cases", required=True)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8770)
    s.add_argument("--noise-sd", type=float, default=None)
    s.set_defaults(fn=cmd_serve)

    br = sub.add_parser("bridge", help="speak bioptx/1 over stdio")
    br.add_argument("--case", required=True)
    br.add_argument("--noise-sd", type=float, default=None)
    br.add_argument("--env-seed", type=int, default=None)
    br.set_defaults(fn=cmd_bridge)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
