"""Command-line entry point.

Exit codes: 0 success, 1 bad input or config, 2 invariant violation or
replay mismatch, 3 no viable protocol.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence, TextIO

from .bft_select import DEFAULT_DIRECTIONS, Preferences, ProtocolProfile, select_protocol
from .config import NODE_NORMS, TASK_NORMS, ScenarioConfig, load_config
from .dsol import CrossChainNetwork
from .err import NodeRankingProfile, TaskRankingProfile, node_err_score, task_err_score
from .errors import BlockCloudError, ConfigError, NoViableProtocolError
from .sim import run_scenario

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT, EXIT_NO_PROTOCOL = 0, 1, 2, 3


def _dumps(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def _resolve_seed(cli_seed: int | None, cfg: ScenarioConfig | None = None) -> int:
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get("BLOCKCLOUD_SEED")
    if env:
        return int(env)
    if cfg is not None and cfg.seed is not None:
        return cfg.seed
    return 0


def _report_config_error(e: ConfigError, path: str, err: TextIO) -> None:
    for field, msg in e.errors:
        print(f"{path}: {field}: {msg}", file=err)


def _load_json(path: str) -> object:
    text = Path(path).read_text()
    if not text.strip():
        return None
    return json.loads(text)


# -- sim run / replay ----------------------------------------------------------------


def _run_one(path: str, seed: int | None) -> tuple[dict, list[str]]:
    cfg = load_config(path)
    return run_scenario(cfg, _resolve_seed(seed, cfg))


def _human_summary(path: str, s: dict) -> str:
    sup = s["supply"]
    rows = [
        ("scenario", path),
        ("seed", s["seed"]),
        ("blocks", s["blocks"]),
        ("finalized tasks", s["finalized_tasks"]),
        ("expired tasks", s["expired_tasks"]),
        ("simulated tps", s["sim_tps"]),
        ("supply", f"{sup['genesis']} + {sup['issued']} - {sup['burned']} = {sup['circulating']}"),
        ("tariff events", s["tariff_events"]),
        ("max wealth share", s["max_wealth_share"]),
        ("violations", len(s["violations"])),
    ]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def cmd_sim_run(args, out: TextIO, err: TextIO) -> int:
    paths = args.config
    if len(paths) > 1 and args.out and not Path(args.out).is_dir():
        Path(args.out).mkdir(parents=True, exist_ok=True)
    results: dict[str, tuple[dict, list[str]] | ConfigError] = {}

    def job(p: str):
        try:
            return p, _run_one(p, args.seed)
        except ConfigError as e:
            return p, e

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        for p, res in pool.map(job, paths):
            results[p] = res

    code = EXIT_OK
    for p in paths:
        res = results[p]
        if isinstance(res, ConfigError):
            _report_config_error(res, p, err)
            code = max(code, EXIT_INPUT) if code != EXIT_INVARIANT else code
            continue
        summary, lines = res
        text = "".join(line + "\n" for line in lines)
        if args.out:
            target = Path(args.out) / (Path(p).stem + ".jsonl") if len(paths) > 1 else Path(args.out)
            target.write_text(text)
        elif not args.summary:
            out.write(text)
        if args.summary:
            print(_human_summary(p, summary), file=out)
        if summary["violations"]:
            for v in summary["violations"]:
                print(f"{p}: invariant violated: {v}", file=err)
            code = EXIT_INVARIANT
    return code


def cmd_replay(args, out: TextIO, err: TextIO) -> int:
    try:
        _, lines = _run_one(args.config, args.seed)
    except ConfigError as e:
        _report_config_error(e, args.config, err)
        return EXIT_INPUT
    fresh = "".join(line + "\n" for line in lines)
    if args.log is None:
        out.write(fresh)
        return EXIT_OK
    recorded = Path(args.log).read_text()
    if recorded == fresh:
        print(f"replay identical: {len(lines)} records", file=out)
        return EXIT_OK
    old, new = recorded.splitlines(), fresh.splitlines()
    first = next((i for i, (a, b) in enumerate(zip(old, new)) if a != b), min(len(old), len(new)))
    print(f"replay differs at record {first + 1}", file=err)
    return EXIT_INVARIANT


# -- econ score ---------------------------------------------------------------------------


def _score_rows(doc: dict) -> list[tuple[str, str, float]]:
    if not isinstance(doc, dict) or set(doc) - {"tasks", "nodes"}:
        raise ConfigError([("<root>", "expected an object with 'tasks' and/or 'nodes'")])
    rows = []
    errors = []
    for kind, cls, norms, scorer in (("tasks", TaskRankingProfile, TASK_NORMS, task_err_score),
                                     ("nodes", NodeRankingProfile, NODE_NORMS, node_err_score)):
        for i, item in enumerate(doc.get(kind, [])):
            path = f"{kind}[{i}]"
            try:
                extra = set(item) - {"id", "scores", "weights", "norms"}
                if extra:
                    raise ValueError(f"unknown keys {sorted(extra)}")
                prof = cls.from_columns(item["scores"], item["weights"], item.get("norms", norms))
                rows.append((kind[:-1], str(item.get("id", f"{kind[:-1]}-{i}")), scorer(prof)))
            except (KeyError, TypeError, ValueError, BlockCloudError) as e:
                errors.append((path, str(e) or type(e).__name__))
    if errors:
        raise ConfigError(errors)
    return rows


def cmd_econ_score(args, out: TextIO, err: TextIO) -> int:
    try:
        doc = _load_json(args.config)
        rows = _score_rows(doc) if doc is not None else []
    except (OSError, json.JSONDecodeError) as e:
        print(f"{args.config}: {e}", file=err)
        return EXIT_INPUT
    except ConfigError as e:
        _report_config_error(e, args.config, err)
        return EXIT_INPUT
    for kind, rid, score in rows:
        if args.summary:
            print(f"{kind:<5} {rid:<20} {score:.6f}", file=out)
        else:
            print(_dumps({"kind": kind, "id": rid, "score": f"{score:.6f}"}), file=out)
    return EXIT_OK


# -- bft select ----------------------------------------------------------------------------------


def cmd_bft_select(args, out: TextIO, err: TextIO) -> int:
    try:
        doc = _load_json(args.config)
        if not isinstance(doc, dict):
            raise ValueError("expected an object")
        extra = set(doc) - {"profiles", "kci_prefs", "kpi_weights", "heuristic_weights", "directions"}
        if extra:
            raise ValueError(f"unknown keys {sorted(extra)}")
        profiles = [ProtocolProfile(p["name"], p["kci"], p["kpi"]) for p in doc["profiles"]]
        prefs = Preferences(doc["kci_prefs"], doc["kpi_weights"], doc.get("heuristic_weights"))
        n_kpi = len(prefs.kpi_weights)
        default_dirs = DEFAULT_DIRECTIONS if n_kpi == len(DEFAULT_DIRECTIONS) else ("higher",) * n_kpi
        directions = tuple(doc.get("directions", default_dirs))
        idx, ev = select_protocol(profiles, prefs, directions)
    except NoViableProtocolError as e:
        print(f"{args.config}: no viable protocol: {e}", file=err)
        return EXIT_NO_PROTOCOL
    except (OSError, KeyError, TypeError, ValueError, BlockCloudError) as e:
        print(f"{args.config}: {type(e).__name__}: {e}", file=err)
        return EXIT_INPUT
    E = [round(float(x), 12) for x in ev.E]
    if args.summary:
        for i, (name, e) in enumerate(zip(ev.names, E)):
            mark = "*" if i == idx else " "
            print(f"{mark} {i:<3} {name:<12} {e:.6f}", file=out)
    else:
        print(_dumps({"protocol": idx, "name": ev.names[idx], "E": E,
                      "C": [int(x) for x in ev.C], "P": [round(float(x), 12) for x in ev.P]}), file=out)
    return EXIT_OK


# -- xchain demo -----------------------------------------------------------------------------------


def cmd_xchain_demo(args, out: TextIO, err: TextIO) -> int:
    seed = _resolve_seed(args.seed)
    net = CrossChainNetwork(seed=seed)
    net.add_chain("A")
    net.add_chain("B")
    secret = f"deed-{seed}".encode()
    xa = net.mint("A", "art-1", "alice", public_data=b"painting", private_data=secret, value=1000)
    xb = net.mint("B", "bond-1", "bob", public_data=b"bond", private_data=b"coupon", value=1000)
    bxa, axb = net.exchange("A", xa.id, "B", xb.id, price=1000)
    restored = net.return_token("B", bxa.id, now=1_000_000)
    lines = [_dumps(rec) for rec in net.log]
    lines.append(_dumps({
        "step": "summary",
        "restored_byte_identical": restored.private_data == secret,
        "normal_per_base": dict(sorted(net.normal_instances().items())),
        "shadow_on_a": axb.id,
    }))
    text = "".join(line + "\n" for line in lines)
    if args.out:
        Path(args.out).write_text(text)
    else:
        out.write(text)
    return EXIT_OK


# -- parser --------------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blockcloud", description="BlockCloud simulator and utilities")
    sub = p.add_subparsers(dest="group", required=True)

    sim = sub.add_parser("sim", help="scenario simulation").add_subparsers(dest="cmd", required=True)
    run = sim.add_parser("run", help="run one or more scenarios")
    run.add_argument("--config", action="append", required=True, help="scenario JSON (repeatable)")
    run.add_argument("--seed", type=int, help="overrides config seed and BLOCKCLOUD_SEED")
    run.add_argument("--out", help="output file, or a directory when several configs are given")
    run.add_argument("--jobs", type=int, default=1, help="scenarios to run in parallel")
    run.add_argument("--summary", action="store_true", help="print a human-readable summary")
    run.set_defaults(func=cmd_sim_run)

    econ = sub.add_parser("econ", help="economic utilities").add_subparsers(dest="cmd", required=True)
    score = econ.add_parser("score", help="ERR scores for task and node profiles")
    score.add_argument("--config", required=True, help="profile JSON")
    score.add_argument("--summary", action="store_true")
    score.set_defaults(func=cmd_econ_score)

    bft = sub.add_parser("bft", help="consensus protocol selection").add_subparsers(dest="cmd", required=True)
    sel = bft.add_parser("select", help="choose a protocol from KCI/KPI matrices")
    sel.add_argument("--config", required=True, help="matrices JSON")
    sel.add_argument("--summary", action="store_true")
    sel.set_defaults(func=cmd_bft_select)

    xc = sub.add_parser("xchain", help="cross-chain exchange").add_subparsers(dest="cmd", required=True)
    demo = xc.add_parser("demo", help="exchange two tokens and return one")
    demo.add_argument("--seed", type=int)
    demo.add_argument("--out")
    demo.set_defaults(func=cmd_xchain_demo)

    rep = sub.add_parser("replay", help="rerun a scenario and compare with a recorded log")
    rep.add_argument("--config", required=True)
    rep.add_argument("--seed", type=int)
    rep.add_argument("--log", help="recorded log to compare against")
    rep.set_defaults(func=cmd_replay)
    return p


def main(argv: Sequence[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    return args.func(args, out, err)


if __name__ == "__main__":
    sys.exit(main())
