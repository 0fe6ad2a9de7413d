"""Command-line entry point: ``poq <subcommand>``.

Exit codes: 0 success, 2 configuration error, 3 protocol error,
4 self-test failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import socket
import sys
import time
from pathlib import Path

import numpy as np

from . import circuits, stats, tcf, wire
from .protocol import ExperimentConfig, ProtocolError, Tally, make_verifier, protocol_kind, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_PROTOCOL, EXIT_SELFTEST = 0, 2, 3, 4

log = logging.getLogger("poq")

RUN_KEYS = ("protocol", "instance", "shots_a", "shots_b", "mode", "prover", "seed", "compiled", "lwe_d_includes_b", "out")
RUN_DEFAULTS = {
    "instance": "paper:lwe0",
    "shots_a": 1000,
    "shots_b": 1000,
    "mode": "interactive",
    "prover": "honest",
    "seed": 0,
    "compiled": False,
    "lwe_d_includes_b": True,
}


class ConfigError(Exception):
    pass


def _add_run_flags(p: argparse.ArgumentParser, with_prover: bool = True) -> None:
    # defaults are None so a config file can fill gaps and the CLI still wins
    p.add_argument("--config", type=Path, help="JSON file with the same keys as the flags")
    p.add_argument("--protocol", choices=("lwe", "factoring"))
    p.add_argument("--instance", help="instance JSON file or paper:<id> (lwe0..lwe3, rabin8/15/16/21)")
    p.add_argument("--shots-a", type=int)
    p.add_argument("--shots-b", type=int)
    p.add_argument("--mode", choices=("interactive", "delayed"))
    if with_prover:
        p.add_argument("--prover", help="honest or cheater:<name>")
    p.add_argument("--seed", type=int)
    p.add_argument("--compiled", action="store_const", const=True, help="use the gate-compiled phase oracle")
    p.add_argument("--lwe-d-x-only", dest="lwe_d_includes_b", action="store_const", const=False,
                   help="score LWE branch B on the x bits of d only")
    p.add_argument("--out", type=Path, help="output directory")


def resolve_run_options(args: argparse.Namespace) -> dict:
    opts = dict(RUN_DEFAULTS)
    if getattr(args, "config", None):
        try:
            file_opts = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_opts, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(file_opts) - set(RUN_KEYS) - {"listen", "sessions", "timeout"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        opts.update(file_opts)
    for key in RUN_KEYS + ("listen", "sessions", "timeout"):
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    if opts["shots_a"] < 0 or opts["shots_b"] < 0:
        raise ConfigError("shot counts must be non-negative")
    return opts


def _experiment(opts: dict) -> tuple[ExperimentConfig, str, tcf.Instance]:
    cfg = ExperimentConfig(
        instance=str(opts["instance"]),
        shots_a=int(opts["shots_a"]),
        shots_b=int(opts["shots_b"]),
        mode=opts["mode"],
        prover=opts.get("prover", "honest"),
        seed=int(opts["seed"]),
        compiled=bool(opts["compiled"]),
        lwe_d_includes_b=bool(opts["lwe_d_includes_b"]),
    )
    try:
        inst, _, inst_id = tcf.load_instance(cfg.instance)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load instance {cfg.instance!r}: {exc}") from exc
    kind = protocol_kind(inst)
    if opts.get("protocol") and opts["protocol"] != kind:
        raise ConfigError(f"instance {inst_id} is a {kind} instance, not {opts['protocol']}")
    return cfg, inst_id, inst


def _tally_doc(kind: str, inst_id: str, mode: str, tally: Tally, domain_size: int) -> dict:
    return {"protocol": kind, "instance": inst_id, "mode": mode, "domain_size": domain_size, "tally": tally.to_json()}


def _write_outputs(out: Path | None, doc: dict, records) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / "tally.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    with open(out / "records.ndjson", "w") as fh:
        for rec in records:
            fh.write(rec.canonical() + "\n")
    rows = _rows_for(doc)
    if rows:
        (out / "report.csv").write_text(stats.rows_to_csv(rows))
        (out / "report.json").write_text(stats.rows_to_json(rows) + "\n")


def _rows_for(doc: dict) -> list[dict]:
    tally = Tally.from_json(doc["tally"])
    if tally.N_A == 0 or tally.N_B == 0:
        return []
    res = stats.analyze_tally(tally, doc["protocol"])
    return stats.report_rows(doc["instance"], doc["mode"], res, doc["domain_size"])


def _summary_line(doc: dict) -> str:
    t = Tally.from_json(doc["tally"])
    parts = [f"{doc['instance']} {doc['mode']}: N_A={t.N_A} p_A={t.p_A:.4f} N_B={t.N_B} p_B={t.p_B:.4f}"]
    if t.N_A and t.N_B:
        res = stats.analyze_tally(t, doc["protocol"])
        parts.append(f"q={res.q:.4f} sigma={res.sigma:.2f}")
    if t.discards:
        parts.append("discards=" + ",".join(f"{k}:{v}" for k, v in sorted(t.discards.items())))
    return " ".join(parts)


# -- subcommands ---------------------------------------------------------------


def cmd_keygen(args) -> int:
    if args.family == "lwe":
        rng = np.random.default_rng(args.seed)
        inst, td = tcf.lwe_keygen(args.m, args.n, args.modulus, args.sigma, rng)
    else:
        if args.p is None or args.q is None:
            raise ConfigError("rabin keygen needs --p and --q")
        inst, td = tcf.rabin_keygen(args.p, args.q, args.n_x, args.n_y)
    doc = tcf.instance_to_json(inst, td)
    if args.id:
        doc["id"] = args.id
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        args.out.write_text(text)
        if args.public:
            pub = inst.to_json()
            if args.id:
                pub["id"] = args.id
            args.public.write_text(json.dumps(pub, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_run(args) -> int:
    opts = resolve_run_options(args)
    cfg, inst_id, inst = _experiment(opts)
    try:
        tally, records = run_experiment(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    doc = _tally_doc(protocol_kind(inst), inst_id, cfg.mode, tally, inst.domain_size)
    _write_outputs(opts.get("out"), doc, records)
    print(_summary_line(doc))
    return EXIT_OK


def cmd_serve(args) -> int:
    opts = resolve_run_options(args)
    cfg, inst_id, inst = _experiment(opts)
    host, port = wire.parse_address(opts.get("listen") or "127.0.0.1:7433")
    sessions = int(opts.get("sessions") or 1)
    timeout = float(opts.get("timeout") or wire.DEFAULT_TIMEOUT)
    with socket.create_server((host, port)) as listener:
        log.info("listening on %s:%d", host, listener.getsockname()[1])
        results = wire.run_verifier_endpoint(lambda: make_verifier(cfg), listener, sessions, timeout)
    total = Tally()
    records = []
    failed = False
    for res in results:
        total = total.merge(res.tally)
        records.extend(res.records)
        if res.aborted:
            failed = True
            log.error("session %s aborted: %s", res.session, res.aborted)
    doc = _tally_doc(protocol_kind(inst), inst_id, cfg.mode, total, inst.domain_size)
    _write_outputs(opts.get("out"), doc, records)
    print(_summary_line(doc))
    return EXIT_PROTOCOL if failed else EXIT_OK


def cmd_prove(args) -> int:
    host, port = wire.parse_address(args.connect)
    deadline = time.monotonic() + args.wait
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=args.timeout)
            break
        except ConnectionRefusedError:
            if time.monotonic() >= deadline:
                raise
            time.sleep(0.05)
    chan = wire.Channel(sock, "", args.timeout)
    try:
        plog = wire.run_prover_endpoint(chan, args.prover, args.seed, args.compiled)
    finally:
        chan.close()
    if args.log:
        args.log.write_text("\n".join(plog.transcript) + "\n")
    accepted = sum(v == "accept" for _, v in plog.verdicts.values())
    print(f"{plog.instance_id}: {len(plog.verdicts)} verdicts, {accepted} accepted")
    if plog.error:
        log.error("session error: %s", plog.error)
        return EXIT_PROTOCOL
    return EXIT_OK


def _load_tally_doc(path: Path) -> dict:
    try:
        doc = json.loads(path.read_text())
        Tally.from_json(doc["tally"])
        for key in ("protocol", "instance", "mode", "domain_size"):
            doc[key]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: not a tally file ({exc})") from exc
    return doc


def cmd_stats(args) -> int:
    for path in args.tally:
        doc = _load_tally_doc(path)
        print(_summary_line(doc))
        for row in _rows_for(doc):
            print(f"  branch {row['branch']}: p={row['p']:.4f} N={row['N']} R={row['R']:.3f} "
                  f"(p_ideal={row['p_ideal']:.4f}, p_guess={row['p_guess']:.4f})")
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for path in args.tally:
        rows.extend(_rows_for(_load_tally_doc(path)))
    if args.csv:
        args.csv.write_text(stats.rows_to_csv(rows))
    if args.json:
        args.json.write_text(stats.rows_to_json(rows) + "\n")
    if not args.csv and not args.json:
        sys.stdout.write(stats.rows_to_csv(rows))
    return EXIT_OK


def _selftest_checks():
    from .protocol import ExperimentConfig as EC

    def phase_circuits():
        for N in (8, 15, 16, 21):
            inst, _ = tcf.paper_rabin(N)
            direct = circuits.build_factoring_commit(inst, compiled=False).commit_state()
            comp = circuits.build_factoring_commit(inst, compiled=True).commit_state()
            overlap = abs(np.vdot(direct.amplitudes, comp.amplitudes))
            if abs(overlap - 1) > 1e-9:
                return False
        return True

    def inversion():
        for N in (8, 15, 16, 21):
            inst, td = tcf.paper_rabin(N)
            for w in range(inst.N):
                wb = tcf.to_bits(w, inst.n_y)
                pre = [x for x in range(inst.domain_size) if tcf.rabin_eval(inst, x) == wb]
                got = tcf.rabin_invert(inst, td, wb)
                ok = isinstance(got, tcf.Claw) == (len(pre) == 2)
                if not ok or (isinstance(got, tcf.Claw) and sorted(pre) != [got.x0, got.x1]):
                    return False
        return True

    def honest_lwe():
        tally, _ = run_experiment(EC("paper:lwe0", 200, 200, "interactive", "honest", 1))
        return tally.k_A == tally.N_A and tally.k_B == tally.N_B

    def wire_fidelity():
        cfg = EC("paper:rabin15", 50, 100, "delayed", "honest", 5)
        res, _ = wire.loopback(lambda: make_verifier(cfg), "honest", 5)
        _, recs = run_experiment(cfg)
        return [r.canonical() for r in res.records] == [r.canonical() for r in recs]

    return [("phase oracle compiled == direct", phase_circuits),
            ("rabin inversion == enumeration", inversion),
            ("honest LWE prover always accepted", honest_lwe),
            ("wire run == in-process run", wire_fidelity)]


def cmd_selftest(args) -> int:
    failed = 0
    for name, check in _selftest_checks():
        t0 = time.perf_counter()
        ok = bool(check())
        failed += not ok
        print(f"[{'PASS' if ok else 'FAIL'}] {name} ({time.perf_counter() - t0:.2f}s)")
    return EXIT_SELFTEST if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poq", description="Interactive proofs of quantumness on a simulated prover.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="emit an instance file (with trapdoor)")
    p.add_argument("--family", choices=("lwe", "rabin"), required=True)
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--modulus", type=int, default=4, help="LWE modulus (power of two)")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--p", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--n-x", type=int, default=3)
    p.add_argument("--n-y", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--id")
    p.add_argument("--out", type=Path)
    p.add_argument("--public", type=Path, help="also write the trapdoor-free instance here")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("run", help="in-process experiment")
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve-verifier", help="verifier endpoint over TCP")
    _add_run_flags(p, with_prover=False)
    p.add_argument("--listen", help="HOST:PORT (default 127.0.0.1:7433)")
    p.add_argument("--sessions", type=int, help="number of prover sessions to serve")
    p.add_argument("--timeout", type=float, help="per-message timeout in seconds")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("prove", help="prover endpoint over TCP")
    p.add_argument("--connect", required=True, help="HOST:PORT")
    p.add_argument("--prover", default="honest")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--compiled", action="store_true")
    p.add_argument("--timeout", type=float, default=wire.DEFAULT_TIMEOUT)
    p.add_argument("--wait", type=float, default=0.0, help="keep retrying the connection for this many seconds")
    p.add_argument("--log", type=Path, help="write the message transcript here")
    p.set_defaults(func=cmd_prove)

    p = sub.add_parser("stats", help="q, sigma and R from tally files")
    p.add_argument("tally", nargs="+", type=Path)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("report", help="CSV/JSON report from tally files")
    p.add_argument("tally", nargs="+", type=Path)
    p.add_argument("--csv", type=Path)
    p.add_argument("--json", type=Path)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("selftest", help="quick structural checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, tcf.ConfigurationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProtocolError, wire.WireError, ConnectionError, TimeoutError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
