"""Command line entry point: ``safefl {train,eval,compare,sync-study,plot-data}``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys

from .config import ConfigError, load_config
from .experiments import compare, evaluate, run_training, sync_study
from .metrics import read_episodes, summarize, window_means, write_episodes, write_summary
from .sac import CheckpointError, NonFiniteLossError, SacConfig

log = logging.getLogger("safefl")


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _print_rows(rows: list[dict]) -> None:
    w = csv.writer(sys.stdout, lineterminator="\n")
    keys = list(rows[0].keys())
    w.writerow(keys)
    for r in rows:
        w.writerow([v if isinstance(v, str) else repr(float(v)) if isinstance(v, float) else v
                    for v in (r[k] for k in keys)])


def _env(args):
    cfg = load_config(args.env)
    if getattr(args, "jitter", None) is not None:
        import dataclasses
        cfg = cfg.with_overrides(emulator=dataclasses.replace(cfg.emulator, jitter=args.jitter))
    return cfg


def cmd_train(args) -> int:
    cfg = _env(args)
    sac_cfg = SacConfig(train_every=args.train_every, gradient_steps=args.gradient_steps,
                        batch_size=args.batch_size, warmup=args.warmup,
                        hidden=tuple(int(h) for h in _csv_list(args.hidden)) if args.hidden else None)
    _, hist = run_training(cfg, args.episodes, args.seed, out_csv=args.out, checkpoint=args.checkpoint,
                           sac_config=sac_cfg, progress_every=args.log_every)
    log.info("trained %d episodes, %d env steps", len(hist.episodes), hist.env_steps)
    return 0


def cmd_eval(args) -> int:
    cfg = _env(args)
    eps = evaluate(cfg, args.agent, args.episodes, args.seed, policy=args.policy)
    if args.out:
        write_episodes(args.out, eps)
    rows = [{"scheduler": args.agent, **summarize(eps)}]
    if args.summary:
        write_summary(args.summary, rows)
    else:
        _print_rows(rows)
    return 0


def cmd_compare(args) -> int:
    cfg = _env(args)
    rows = compare(cfg, _csv_list(args.agents), args.episodes, args.seed, policy=args.policy)
    if args.out:
        write_summary(args.out, rows)
    else:
        _print_rows(rows)
    if args.figure:
        from .plotting import plot_comparison
        plot_comparison(rows, args.figure)
    return 0


def cmd_sync(args) -> int:
    cfg = _env(args)
    rows = sync_study(cfg, args.h, args.episodes, args.seed, agent=args.agent, policy=args.policy)
    if args.out:
        write_summary(args.out, rows)
    else:
        _print_rows(rows)
    if args.figure:
        from .plotting import plot_sync
        plot_sync(rows, args.figure)
    return 0


def cmd_plot_data(args) -> int:
    windows = window_means(read_episodes(args.csv), args.window, args.workers)
    if args.out:
        write_summary(args.out, windows)
    else:
        _print_rows(windows)
    if args.figure:
        from .plotting import plot_training
        plot_training(windows, args.figure, title=f"averaged every {args.window} episodes")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="safefl", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, env_default="static5"):
        p.add_argument("--env", default=env_default, help="config file or preset name (e.g. static5, dynamic20)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--episodes", type=int, default=100)

    p = sub.add_parser("train", help="offline SAC training on the emulated environment")
    common(p, "dynamic5")
    p.add_argument("--out", help="per-episode CSV")
    p.add_argument("--checkpoint", help="policy checkpoint to write")
    p.add_argument("--jitter", type=float, default=0.05, help="emulator jitter during training")
    p.add_argument("--train-every", type=int, default=1000)
    p.add_argument("--gradient-steps", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--warmup", type=int, default=100)
    p.add_argument("--hidden", help="hidden layer widths, e.g. 256,256")
    p.add_argument("--log-every", type=int, default=1000)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate one scheduler")
    common(p)
    p.add_argument("--agent", choices=("bes", "rss", "gss", "sac"), required=True)
    p.add_argument("--policy", help="checkpoint for --agent sac")
    p.add_argument("--out", help="per-episode CSV")
    p.add_argument("--summary", help="summary CSV (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="several schedulers on shared seeds")
    common(p)
    p.add_argument("--agents", default="bes,rss,gss")
    p.add_argument("--policy")
    p.add_argument("--out", help="summary CSV (default: stdout)")
    p.add_argument("--figure", help="bar chart output (png/pdf/svg)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sync-study", help="worker- vs coordinator-side synchronization")
    common(p, "dynamic20")
    p.add_argument("--h", type=_floats, default=[13.0, 8.0, 6.0], help="deadlines in seconds, e.g. 13,8,6")
    p.add_argument("--agent", choices=("bes", "rss", "gss", "sac"), default="rss")
    p.add_argument("--policy")
    p.add_argument("--out")
    p.add_argument("--figure")
    p.set_defaults(func=cmd_sync)

    p = sub.add_parser("plot-data", help="window-average a training CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--window", type=int, default=2500)
    p.add_argument("--workers", type=int, help="worker count, enables per-worker columns")
    p.add_argument("--out")
    p.add_argument("--figure")
    p.set_defaults(func=cmd_plot_data)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, NonFiniteLossError, ValueError, OSError) as exc:
        print(f"safefl: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
