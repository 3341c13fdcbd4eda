"""Command-line entry points for the daemons and the offline tools.

Exit codes: 0 success, 2 configuration problem, 3 network problem,
4 optimizer did not converge.
"""

from __future__ import annotations

import argparse
import logging
import signal
import sys
import threading

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NETWORK = 3
EXIT_CONVERGENCE = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pqnsim",
        description="Software twin of a two-node entangled-photon network",
    )
    parser.add_argument("--config", help="INI config path (or set PQN_CONFIG)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("source-node", help="run the source-lab daemon")
    sub.add_parser("closet-node", help="run the remote basis-motor daemon")
    gateway = sub.add_parser("gateway", help="run the kiosk gateway daemon")
    gateway.add_argument("--static-dir", help="serve the kiosk page from this directory")

    run = sub.add_parser("run", help="request one run from a live source node")
    run.add_argument("--a", type=float, required=True)
    run.add_argument("--a-prime", type=float, required=True)
    run.add_argument("--integration", type=float, default=None)

    sweep = sub.add_parser("sweep", help="CHSH versus angle difference, to CSV")
    sweep.add_argument("--v", type=float, default=0.884, dest="visibility")
    sweep.add_argument("--steps", type=int, default=31)
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--integration", type=float, default=10.0)
    sweep.add_argument("--seed", type=int, default=0)

    trace = sub.add_parser("drift-trace", help="fiber drift trace, to CSV")
    trace.add_argument("--hours", type=float, default=18.0)
    trace.add_argument("--out", required=True)
    trace.add_argument("--seed", type=int, default=0)

    comp = sub.add_parser("compensate", help="align the paddle stack on a drifted link")
    comp.add_argument("--seed", type=int, default=0)
    comp.add_argument("--hours", type=float, default=12.0,
                      help="drift to accumulate before aligning")

    tomo = sub.add_parser("tomography", help="repeated source characterization, to CSV")
    tomo.add_argument("--settings", type=int, default=36, choices=[36])
    tomo.add_argument("--out", required=True)
    tomo.add_argument("--hours", type=float, default=20.0)
    tomo.add_argument("--seed", type=int, default=0)

    replay = sub.add_parser("replay-log", help="recompute results from a saved log")
    replay.add_argument("path")
    return parser


def _serve_forever(*daemons) -> int:
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *a: stop.set())
    signal.signal(signal.SIGTERM, lambda *a: stop.set())
    try:
        while not stop.wait(0.5):
            pass
    finally:
        for d in daemons:
            d.stop()
    return EXIT_OK


def _cmd_source_node(cfg) -> int:
    from .net.logstore import LogError
    from .net.nodes import SourceNode

    try:
        node = SourceNode(cfg)
        node.start()
    except LogError as exc:
        print(f"cannot start source node: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot start source node: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    try:
        node.connect_closet(cfg.nodes.closet_host, cfg.nodes.closet_port)
        print(f"source node on :{node.port}, remote motor connected")
    except OSError as exc:
        print(f"source node on :{node.port}; remote motor unreachable ({exc})")
    return _serve_forever(node)


def _cmd_closet_node(cfg) -> int:
    from .net.nodes import ClosetNode

    try:
        node = ClosetNode(cfg)
        node.start()
    except OSError as exc:
        print(f"cannot start closet node: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    print(f"closet node on :{node.port}")
    return _serve_forever(node)


def _cmd_gateway(cfg, static_dir) -> int:
    from .net.gateway_http import GatewayNode

    node = GatewayNode(cfg, log_path=cfg.nodes.log_path)
    if static_dir:
        node.static_dir = static_dir
    try:
        node.start()
    except OSError as exc:
        print(f"cannot start gateway: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    print(f"gateway on http://{cfg.kiosk.http_host}:{node.http_port}")
    return _serve_forever(node)


def _cmd_run(cfg, args) -> int:
    from .net.nodes import GatewayClient, SessionFailed

    integration = (
        args.integration if args.integration is not None
        else cfg.nodes.integration_default_s
    )
    try:
        client = GatewayClient(
            cfg.nodes.source_host, cfg.nodes.source_port, cfg.nodes.token
        )
    except OSError as exc:
        print(f"cannot reach source node: {exc}", file=sys.stderr)
        return EXIT_NETWORK

    def show(progress):
        print(f"  step {progress.step}/{progress.of}")

    try:
        result = client.run_chsh(
            args.a, args.a_prime, integration,
            step_timeout_s=cfg.nodes.step_timeout_s + integration + 30.0,
            on_progress=show,
        )
    except SessionFailed as failure:
        print(f"session failed: {failure}", file=sys.stderr)
        return EXIT_NETWORK
    except (TimeoutError, ConnectionError, OSError) as exc:
        print(f"network failure: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    finally:
        client.close()
    print(f"|S| = {result.s_value:.4f} +/- {result.sigma_s:.4f} "
          f"(delta = {result.settings.delta:.2f} deg, live)")
    return EXIT_OK


def _cmd_sweep(cfg, args) -> int:
    from .chsh import export_sweep_csv
    from .engine import sweep_angular_difference

    grid = np.linspace(0.0, 90.0, args.steps)
    rows = sweep_angular_difference(
        args.visibility, grid, integration_s=args.integration, seed=args.seed
    )
    export_sweep_csv(rows, args.out)
    print(f"wrote {len(rows)} sweep points to {args.out}")
    return EXIT_OK


def _cmd_drift_trace(cfg, args) -> int:
    from .channel import FiberChannel, drift_trace, export_drift_trace

    ch = FiberChannel(
        loss_db=cfg.channel.loss_db,
        wavelengths_nm=cfg.channel.wavelengths_nm,
        drift_rate_bound_deg_per_hr=cfg.channel.drift_rate_bound_deg_per_hr,
        seed=args.seed,
    )
    rows = drift_trace(ch, hours=args.hours)
    export_drift_trace(rows, args.out)
    print(f"wrote {len(rows)} trace rows to {args.out}")
    return EXIT_OK


def _cmd_compensate(cfg, args) -> int:
    from .channel import FiberChannel, SourceConfig
    from .compensation import optimize_compensation

    ch = FiberChannel(
        loss_db=cfg.channel.loss_db,
        wavelengths_nm=cfg.channel.wavelengths_nm,
        drift_rate_bound_deg_per_hr=cfg.channel.drift_rate_bound_deg_per_hr,
        seed=args.seed,
    )
    ch.advance(args.hours * 3600.0)
    src = SourceConfig(
        pair_rate_cps=cfg.source.pair_rate_cps,
        heralding_efficiency=cfg.source.heralding_efficiency,
        visibility=cfg.source.visibility,
    )
    report = optimize_compensation(ch, src, seed=args.seed)
    s = report.setting
    print(f"paddles: q1={s.q1_deg:.3f} h={s.h_deg:.3f} q2={s.q2_deg:.3f}")
    print(f"objective {report.objective_value:.3e} "
          f"(floor {report.mixedness_floor:.3e}), "
          f"visibilities {report.visibility_hv:.4f}/{report.visibility_da:.4f}, "
          f"{report.iterations} evaluations, {report.restarts_used} restarts")
    if not report.converged:
        print("did not converge within budget", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def _cmd_tomography(cfg, args) -> int:
    from .chsh import export_fidelity_csv, fidelity_series

    series = fidelity_series(
        visibility=cfg.source.visibility,
        hours=args.hours,
        pair_rate_cps=cfg.source.pair_rate_cps,
        seed=args.seed,
    )
    export_fidelity_csv(series, args.out)
    print(f"wrote {len(series)} fidelity points to {args.out}")
    return EXIT_OK


def _cmd_replay_log(args) -> int:
    from .chsh import MeasurementMatrix, chsh_from_matrix
    from .net.logstore import read_log

    entries = read_log(args.path)
    if not entries:
        print("no complete entries found", file=sys.stderr)
        return EXIT_CONFIG
    mismatches = 0
    for i, entry in enumerate(entries):
        tag = "live" if entry.live else "replayed"
        line = (f"[{i}] {entry.timestamp} delta={entry.settings.delta:7.2f} "
                f"|S|={entry.result.s_value:.4f}+/-{entry.result.sigma_s:.4f} {tag}")
        if entry.live and len(entry.records) == 16:
            recomputed = chsh_from_matrix(
                MeasurementMatrix(entry.settings, entry.records)
            )
            if abs(recomputed.s_value - entry.result.s_value) > 1e-9:
                line += "  MISMATCH"
                mismatches += 1
        print(line)
    print(f"{len(entries)} entries, {mismatches} mismatches")
    return EXIT_OK if mismatches == 0 else EXIT_CONFIG


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    from .net.config import ConfigError, load_config

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "source-node":
            return _cmd_source_node(cfg)
        if args.command == "closet-node":
            return _cmd_closet_node(cfg)
        if args.command == "gateway":
            return _cmd_gateway(cfg, args.static_dir)
        if args.command == "run":
            return _cmd_run(cfg, args)
        if args.command == "sweep":
            return _cmd_sweep(cfg, args)
        if args.command == "drift-trace":
            return _cmd_drift_trace(cfg, args)
        if args.command == "compensate":
            return _cmd_compensate(cfg, args)
        if args.command == "tomography":
            return _cmd_tomography(cfg, args)
        if args.command == "replay-log":
            return _cmd_replay_log(args)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
