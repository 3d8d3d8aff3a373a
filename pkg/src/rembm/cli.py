"""Command-line frontend: build-rem, train, simulate and report subcommands
wiring the pipeline together.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__, sim
from .bm import write_decision_log
from .config import ConfigError, RunConfig
from .mdp import Policy, RewardParams
from .rem import Rem
from .ric import A1PolicyMessage, BmXapp, NonRtRic

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _policy_label(beta: float) -> str:
    if beta == 1.0:
        return "br-min"
    if beta == 0.0:
        return "rsrp-max"
    return f"policy-b{beta:g}"


def _comments(cfg: RunConfig, channel_seed, traffic_seed=None):
    seeds = f"channel_seed={channel_seed}"
    if traffic_seed is not None:
        seeds += f" traffic_seed={traffic_seed}"
    return [f"rembm {__version__}", f"{seeds} config_sha256={cfg.checksum()}"]


def cmd_build_rem(args) -> int:
    """Populate a REM by driving probe UEs along the road; write REMv1 file."""
    cfg = RunConfig.load(args.config)
    seed = args.seed if args.seed is not None else cfg.get("seeds", "channel_seed")
    chan = cfg.build_channel(seed)
    grid = cfg.build_grid()
    scenario = cfg.build_scenario()
    rem = sim.populate_rem(scenario, chan, grid, n_passes=args.passes, seed=seed,
                           linear_average=cfg.get("rem", "linear_average"))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rem.save(out)
    print(f"wrote {out} ({len(rem.rsrp.known_tiles())} mapped tiles, "
          f"checksum {rem.checksum()[:12]})")
    return EXIT_OK


def cmd_train(args) -> int:
    """Train a policy on a REM artifact and write the POLv1 file."""
    cfg = RunConfig.load(args.config)
    gamma = args.gamma if args.gamma is not None else cfg.get("solver", "gamma")
    params = RewardParams(beta=args.beta, delta_th_db=cfg.get("scenario", "delta_th_db"))
    message = NonRtRic.train(args.rem, params, gamma=gamma,
                             tol=cfg.get("solver", "tolerance"),
                             t_b_ms=cfg.get("scenario", "ssb_period_ms"))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(message.artifact)
    print(f"wrote {out} ({_policy_label(args.beta)}, trained on REM "
          f"{message.rem_checksum[:12]})")
    return EXIT_OK


def cmd_simulate(args) -> int:
    """Run one scenario with the chosen controller; write kpi/samples/trace CSVs."""
    cfg = RunConfig.load(args.config)
    channel_seed = (args.channel_seed if args.channel_seed is not None
                    else cfg.get("seeds", "channel_seed"))
    traffic_seed = args.seed if args.seed is not None else cfg.get("seeds", "traffic_seed")
    chan = cfg.build_channel(channel_seed)
    scenario = cfg.build_scenario(traffic_seed)
    grid = cfg.build_grid()

    xapp = None
    if args.controller == "baseline":
        controller = sim.BaselineController(args.delta_ho)
        label, delta_ho, beta = "baseline", args.delta_ho, None
    else:
        policy = Policy.load(args.policy)
        xapp = BmXapp(grid, delta_th_db=scenario.delta_th_db,
                      fallback_delta_ho_db=cfg.get("solver", "fallback_delta_ho_db"))
        message = A1PolicyMessage(artifact=policy.to_bytes(), beta=policy.beta,
                                  gamma=policy.gamma,
                                  rem_checksum=policy.rem_checksum)
        rem = Rem.load(args.rem) if args.rem else None
        xapp.deploy(message, rem)
        controller = xapp
        label, delta_ho, beta = _policy_label(policy.beta), None, policy.beta

    report = sim.run(scenario, controller, chan, label=label,
                     delta_ho_db=delta_ho, beta=beta)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    comments = _comments(cfg, channel_seed, traffic_seed)
    sim.write_kpi_csv(out / "kpi.csv", report, comments)
    sim.write_samples_csv(out / "rsrp_samples.csv", report, comments)
    sim.write_trace_csv(out / "trace.csv", report, comments)
    write_decision_log(out / "decisions.csv", report.decisions, comments)
    if xapp is not None:
        xapp.write_command_log(out / "e2_commands.log")
    print(f"{label}: {report.reselections_per_user_s:.3f} reselections/user/s, "
          f"{report.rlf_per_user_s:.3f} RLFs/user/s -> {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    """Summarize one or more simulation output directories."""
    from .report import format_summary_table, render_report
    runs = render_report(args.in_dir, out_dir=args.out, percentile=args.percentile,
                         comments=[f"rembm {__version__}",
                                   f"percentile={args.percentile:g}"])
    print(format_summary_table(runs, args.percentile))
    out = Path(args.out if args.out is not None else args.in_dir)
    print(f"\nwrote {out / 'summary.csv'} and figures (kpi_rates.png, "
          "rsrp_cdf.png, rsrp_trace.png)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rembm",
        description="Grid-of-Beams beam management: REM building, policy "
                    "training and scenario simulation.")
    parser.add_argument("--version", action="version", version=f"rembm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-rem", help="populate a REM from probe drives")
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--seed", type=int, help="channel seed override")
    p.add_argument("--passes", type=int, default=100,
                   help="probe passes per direction (default 100)")
    p.add_argument("--out", required=True, help="REM artifact output path")
    p.set_defaults(func=cmd_build_rem)

    p = sub.add_parser("train", help="train a beam policy on a REM artifact")
    p.add_argument("--config", required=True)
    p.add_argument("--rem", required=True, help="REMv1 artifact path")
    p.add_argument("--beta", type=float, required=True,
                   help="reward mix in [0,1]: 1=BR-MIN, 0=RSRP-MAX")
    p.add_argument("--gamma", type=float, help="discount factor override")
    p.add_argument("--out", required=True, help="POLv1 artifact output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", help="run the road scenario with a controller")
    p.add_argument("--config", required=True)
    p.add_argument("--controller", choices=("baseline", "policy"), required=True)
    p.add_argument("--delta-ho", type=float, dest="delta_ho",
                   help="baseline switching margin in dB")
    p.add_argument("--policy", help="POLv1 artifact (for --controller policy)")
    p.add_argument("--rem", help="REM artifact for policy checksum verification")
    p.add_argument("--seed", type=int, help="traffic seed override")
    p.add_argument("--channel-seed", type=int, dest="channel_seed",
                   help="channel seed override")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="summarize simulation outputs")
    p.add_argument("--in", dest="in_dir", required=True,
                   help="directory containing run output directories")
    p.add_argument("--percentile", type=float, default=0.10,
                   help="cell-edge percentile (default 0.10)")
    p.add_argument("--out", help="output directory (default: --in)")
    p.set_defaults(func=cmd_report)
    return parser


def _validate(parser, args):
    if args.command == "build-rem" and args.passes < 1:
        parser.error("--passes must be at least 1")
    if args.command == "train" and not 0.0 <= args.beta <= 1.0:
        parser.error("--beta must be within [0, 1]")
    if args.command == "simulate":
        if args.controller == "baseline" and args.delta_ho is None:
            parser.error("--controller baseline requires --delta-ho")
        if args.controller == "baseline" and args.delta_ho is not None and args.delta_ho <= 0:
            parser.error("--delta-ho must be strictly positive")
        if args.controller == "policy" and not args.policy:
            parser.error("--controller policy requires --policy")
    if args.command == "report" and not 0.0 < args.percentile <= 1.0:
        parser.error("--percentile must be in (0, 1]")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
