"""Command-line front end: ``tcpuzzle <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import bench, game, harness, puzzle, simulator, wire
from .handshake import Mode, ServerConfig
from .scenario import ConfigError, load_scenario


class CLIError(Exception):
    pass


def _endpoint(text: str) -> tuple:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def _hexbytes(text: str) -> bytes:
    try:
        return bytes.fromhex(text.replace(":", " "))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a hex string: {text!r}") from None


def _block(args, name: str) -> bytes:
    """Option block from --<name> hex or --<name>-file (optionally file:entry)."""
    raw = getattr(args, name)
    path = getattr(args, f"{name}_file")
    if raw is not None:
        return raw
    if path is None:
        raise CLIError(f"give --{name} or --{name}-file")
    file, entry = path, ""
    if not Path(path).exists() and ":" in path:
        file, entry = path.rsplit(":", 1)
    blocks = wire.read_hex_blocks(file)
    if entry:
        if entry not in blocks:
            raise CLIError(f"{file}: no entry named {entry!r}")
        return blocks[entry]
    if len(blocks) != 1:
        raise CLIError(f"{file}: holds {len(blocks)} entries; pick one with {file}:<name>")
    return next(iter(blocks.values()))


def _flow(args) -> puzzle.FlowTuple:
    try:
        return puzzle.FlowTuple.parse(args.src, args.dst, args.isn)
    except ValueError as exc:
        raise CLIError(f"bad flow: {exc}") from None


# -- subcommands -------------------------------------------------------------------

def cmd_recommend(args) -> int:
    w_av, alpha = args.w_av, args.alpha
    if args.params:
        p = bench.read_parameters(args.params)
        w_av = w_av if w_av is not None else p.w_av
        alpha = alpha if alpha is not None else p.alpha
    if w_av is None or alpha is None:
        raise CLIError("need --w-av and --alpha (or a --params file providing them)")
    rec = game.recommend(w_av, alpha, args.k)
    print(f"ell* = {rec.ell:.2f} hashes per request")
    print(f"(k,m) = ({rec.k},{rec.m})  [k*2^(m-1) = {rec.k * 2 ** (rec.m - 1)}]")
    print(f"{'N':>8}  {'ell*(N)':>14}  {'rel. gap':>10}")
    for n, ell, gap in rec.corrections:
        print(f"{n:>8}  {ell:>14.2f}  {gap:>10.3e}")
    return 0


def cmd_challenge(args) -> int:
    params = puzzle.PuzzleParams(args.k, args.m, args.l)
    ch = puzzle.derive_challenge(args.secret, args.t, _flow(args), params)
    block = wire.encode_challenge(wire.ChallengeOption(params, ch.preimage,
                                                       None if args.no_timestamp else args.t))
    print(block.hex().upper())
    return 0


def cmd_solve(args) -> int:
    opt = wire.decode_challenge(_block(args, "challenge"))
    if opt.t is None and args.t is None:
        raise CLIError("challenge carries no timestamp; pass --t")
    t = opt.t if opt.t is not None else args.t
    counter = puzzle.HashCounter()
    sols = puzzle.solve(puzzle.Challenge(opt.preimage, t, opt.params), args.seed, counter)
    block = wire.encode_solution(wire.SolutionOption(args.mss, args.wscale, sols, t))
    print(block.hex().upper())
    print(f"# {counter.count} hashes", file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    params = puzzle.PuzzleParams(args.k, args.m, args.l)
    sol = wire.decode_solution(_block(args, "solution"), params.k, params.l)
    t = sol.t if sol.t is not None else args.t
    if t is None:
        raise CLIError("solution carries no timestamp; pass --t")
    now = args.now if args.now is not None else t
    result = puzzle.verify(args.secret, t, _flow(args), params, sol.solutions, now, args.expiry)
    print(result.value)
    return 0 if result is puzzle.VerifyResult.ACCEPT else 1


def cmd_simulate(args) -> int:
    config = load_scenario(args.scenario)
    if args.seed is not None:
        config.seed = args.seed
    log = simulator.run_scenario(config)
    baseline = name = None
    if args.baseline:
        base_cfg = load_scenario(args.baseline)
        base_cfg.seed = config.seed
        baseline, name = simulator.run_scenario(base_cfg), Path(args.baseline).stem
    csv_path, summary_path = simulator.export_metrics(log, args.out, baseline, name or "baseline")
    summary = json.loads(summary_path.read_text())
    print(f"wrote {csv_path} and {summary_path}")
    print(f"client completion ratio {summary['completion_ratio']}")
    if "attack" in summary:
        a = summary["attack"]
        print(f"during attack: completion {a['completion_ratio']}, "
              f"attacker cps {a['attacker_cps']:.2f} ({a['per_attacker_cps']:.2f} per attacker)")
    if "reduction" in summary:
        print(f"attacker-rate reduction vs {name}: {summary['reduction']['factor']}")
    return 0


def cmd_profile(args) -> int:
    budget_s = args.budget_ms / 1000.0
    report = bench.profile_hash_rate(args.duration, args.repeats, args.workers)
    w = bench.hashes_in_budget(report.rate, budget_s)
    print(f"hash rate {report.rate:,.0f} /s over {args.repeats} runs (spread {report.spread:.1%})")
    if report.per_worker:
        print("per worker: " + ", ".join(f"{r:,.0f}" for r in report.per_worker))
    print(f"hashes in {args.budget_ms:g} ms: {w:,.1f}")
    alpha = None
    if args.stress_csv:
        alpha = bench.alpha_from_stress_csv(args.stress_csv)
        print(f"alpha (tail-converged) = {alpha:.4f}")
    if args.out:
        bench.write_parameters(bench.ModelParameters(w, alpha, report.rate, budget_s), args.out)
        print(f"wrote {args.out}")
    return 0


def _server_config(args) -> ServerConfig:
    return ServerConfig(backlog=args.backlog, accept_capacity=args.accept_capacity,
                        puzzle_params=puzzle.PuzzleParams(args.k, args.m, args.l),
                        expiry_s=args.expiry, mode=Mode(args.mode),
                        puzzles_enabled_dynamically=not args.always_challenge)


def cmd_serve(args) -> int:
    srv = harness.serve(args.bind, _server_config(args), seed=args.seed,
                        admin_addr=args.admin)
    print(f"listening on {srv.address[0]}:{srv.address[1]}, "
          f"admin on {srv.admin_address[0]}:{srv.admin_address[1]}", flush=True)
    try:
        if args.duration is not None:
            time.sleep(args.duration)
        else:
            while True:
                time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        srv.close()
    return 0


def cmd_connect(args) -> int:
    res = harness.connect(args.server, args.strategy, args.timeout, seed=args.seed,
                          send_data=not args.no_data)
    extra = f", solved with {res.hashes} hashes" if res.challenged and res.hashes else ""
    print(f"{res.outcome.value} after {res.elapsed_s * 1000:.1f} ms"
          f"{' (challenged)' if res.challenged else ''}{extra}")
    return 0 if res.outcome is harness.Outcome.ACCEPTED else 1


# -- parser ---------------------------------------------------------------------------

def _add_flow(p) -> None:
    p.add_argument("--secret", type=_hexbytes, required=True, help="server secret (hex)")
    p.add_argument("--src", required=True, help="client a.b.c.d:port")
    p.add_argument("--dst", required=True, help="server a.b.c.d:port")
    p.add_argument("--isn", type=int, default=0)


def _add_params(p) -> None:
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--m", type=int, default=17)
    p.add_argument("--l", type=int, default=puzzle.DEFAULT_L)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tcpuzzle", description="Client-puzzle connection gating tools")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("recommend", help="difficulty from (w_av, alpha)")
    p.add_argument("--w-av", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--k", type=int, default=game.DEFAULT_K)
    p.add_argument("--params", help="parameter file written by 'profile'")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("challenge", help="derive a challenge option block")
    _add_flow(p)
    _add_params(p)
    p.add_argument("--t", type=int, required=True, help="timestamp (s)")
    p.add_argument("--no-timestamp", action="store_true", help="omit t from the block")
    p.set_defaults(func=cmd_challenge)

    p = sub.add_parser("solve", help="solve a challenge block, print the solution block")
    p.add_argument("--challenge", type=_hexbytes)
    p.add_argument("--challenge-file", help="hex block file, optionally file:entry")
    p.add_argument("--t", type=int, help="timestamp if the block has none")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mss", type=int, default=1460)
    p.add_argument("--wscale", type=int, default=7)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="check a solution block (exit 1 on reject)")
    _add_flow(p)
    _add_params(p)
    p.add_argument("--solution", type=_hexbytes)
    p.add_argument("--solution-file")
    p.add_argument("--t", type=int, help="timestamp if the block has none")
    p.add_argument("--now", type=int, help="verification time (default: t)")
    p.add_argument("--expiry", type=float, default=60.0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="run a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--baseline", help="second scenario for the reduction factor")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("profile", help="measure hash rate and derive w_av")
    p.add_argument("--budget-ms", type=float, default=400.0)
    p.add_argument("--duration", type=float, default=0.4, help="seconds per run")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--stress-csv", help="load,service_rate rows for alpha")
    p.add_argument("--out", help="write a parameter file")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("serve", help="run the UDP handshake server")
    p.add_argument("--bind", type=_endpoint, default=("127.0.0.1", 7777))
    p.add_argument("--admin", type=_endpoint, default=("127.0.0.1", 0))
    _add_params(p)
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.PUZZLES.value)
    p.add_argument("--backlog", type=int, default=64)
    p.add_argument("--accept-capacity", type=int, default=64)
    p.add_argument("--expiry", type=float, default=60.0)
    p.add_argument("--always-challenge", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float, help="stop after this many seconds")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("connect", help="one handshake against a server")
    p.add_argument("server", type=_endpoint)
    p.add_argument("--strategy", choices=("solve", "no_solve"), default="solve")
    p.add_argument("--timeout", type=float, default=5.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-data", action="store_true", help="do not send data after the ACK")
    p.set_defaults(func=cmd_connect)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CLIError, ConfigError, game.GameError, puzzle.PuzzleError, wire.OptionError,
            bench.BenchError, ValueError, OSError) as exc:
        print(f"tcpuzzle {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
