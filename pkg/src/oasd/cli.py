"""``oasd`` command line: gen, preprocess, pretrain, train, detect, eval, drift,
coldstart, bench.

Every command is deterministic given ``--seed`` and its inputs. Errors go to
stderr as one JSON line with ``code`` and ``message``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import IO, Iterable

from . import groupstats as gs
from .asdnet import Trainer, TrainConfig
from .detector import DetectionSession, detect_trajectory
from .errors import ConfigError, OasdError, ParseError, StreamError
from .estimator import OnlineSubtrajectoryDetector, profile_dims
from .experiments import (asdict_rows, bench_world, desk_world, drift_corpus, run_benchmark,
                          run_coldstart, run_drift, run_latency)
from .metrics import evaluate
from .policy import GREEDY, SAMPLE, Models
from .roadnet import dump_network, load_network
from .synthgen import SynthConfig, drift_scenario, generate
from .tensorcore import substream
from .trajio import Trajectory, dump_events, dump_trajectories, load_trajectories

log = logging.getLogger("oasd")

DEFAULTS = {
    "alpha": 0.5, "delta": 0.4, "delay_d": 8, "phi": 0.5, "slots": 24, "profile": "desk",
    "seed": 0, "xi": 2, "drop_rates": [0.0, 0.2, 0.4, 0.6, 0.8], "mode": GREEDY,
    "lr_rsr": 0.01, "lr_asd": 0.001, "pretrain_size": 1000, "pretrain_epochs": 5,
    "pretrain_policy_epochs": 100, "joint_size": 1000, "epochs_per_traj": 5,
    "eval_every": 200, "synth": {},
}
OVERRIDABLE = ("alpha", "delta", "delay_d", "phi", "slots", "profile", "seed", "xi",
               "drop_rates", "mode")


class UsageError(OasdError):
    code = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _rates(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad rate list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with defaults for any option")
    common.add_argument("--alpha", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--delay-d", dest="delay_d", type=int)
    common.add_argument("--phi", type=float)
    common.add_argument("--slots", type=int, help="time slots per day")
    common.add_argument("--profile", choices=["desk", "paper"])
    common.add_argument("--seed", type=int)
    common.add_argument("--xi", type=int, help="number of time partitions for drift")
    common.add_argument("--drop-rates", dest="drop_rates", type=_rates)
    common.add_argument("--mode", choices=[GREEDY, SAMPLE])

    p = _Parser(prog="oasd", description="Online anomalous subtrajectory detection")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic world")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--scenario", choices=["benchmark", "drift", "bench"], default="benchmark")

    pp = sub.add_parser("preprocess", parents=[common], help="build group statistics")
    pp.add_argument("--trajectories", required=True)
    pp.add_argument("--network")
    pp.add_argument("--out", required=True)

    for name, text in (("pretrain", "pretrain on noisy labels"),
                       ("train", "joint training")):
        t = sub.add_parser(name, parents=[common], help=text)
        t.add_argument("--network", required=True)
        t.add_argument("--trajectories", required=True)
        t.add_argument("--stats", required=True)
        t.add_argument("--model", help="starting checkpoint (default: fresh init)")
        t.add_argument("--out", required=True)
        t.add_argument("--log", help="JSONL training log")
        if name == "train":
            t.add_argument("--eval-set", help="labeled trajectories for model selection")

    d = sub.add_parser("detect", parents=[common], help="label trajectories online")
    d.add_argument("--network", required=True)
    d.add_argument("--stats", required=True)
    d.add_argument("--model", required=True)
    src = d.add_mutually_exclusive_group(required=True)
    src.add_argument("--trajectories", help="trajectory JSONL to replay point by point")
    src.add_argument("--stream", help="command JSONL ('-' for stdin)")
    d.add_argument("--out", help="events JSONL (default stdout)")
    d.add_argument("--labels-out", help="also write final labels as JSONL")

    e = sub.add_parser("eval", parents=[common], help="score detections")
    e.add_argument("--gt", required=True, help="trajectory JSONL with labels")
    e.add_argument("--pred", required=True, help="labels JSONL or events JSONL")
    e.add_argument("--out", help="EvalReport JSON (default stdout)")

    dr = sub.add_parser("drift", parents=[common], help="frozen vs fine-tuned over time")
    dr.add_argument("--network")
    dr.add_argument("--trajectories")
    dr.add_argument("--out")

    c = sub.add_parser("coldstart", parents=[common], help="F1 vs history drop rate")
    c.add_argument("--out")

    b = sub.add_parser("bench", parents=[common], help="per-point latency by length group")
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--out")
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{args.config}: {exc.msg}", line=exc.lineno) from None
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in OVERRIDABLE:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    for key in ("alpha", "delta", "phi"):
        if not 0.0 <= cfg[key] <= 1.0:
            raise ConfigError(f"{key} must lie in [0, 1], got {cfg[key]}")
    if cfg["delay_d"] < 0:
        raise ConfigError("delay-d must be >= 0")
    if cfg["xi"] < 1:
        raise ConfigError(f"xi must be >= 1, got {cfg['xi']}")
    profile_dims(cfg["profile"])
    return cfg


def detector_from(cfg: dict) -> OnlineSubtrajectoryDetector:
    return OnlineSubtrajectoryDetector(
        alpha=cfg["alpha"], delta=cfg["delta"], delay=cfg["delay_d"],
        slots_per_day=cfg["slots"], profile=cfg["profile"], lr_rsr=cfg["lr_rsr"],
        lr_policy=cfg["lr_asd"], pretrain_size=cfg["pretrain_size"],
        pretrain_epochs=cfg["pretrain_epochs"],
        pretrain_policy_epochs=cfg["pretrain_policy_epochs"], joint_size=cfg["joint_size"],
        epochs_per_traj=cfg["epochs_per_traj"], eval_every=cfg["eval_every"], phi=cfg["phi"],
        mode=cfg["mode"], seed=cfg["seed"])


def _synth(cfg: dict, base: SynthConfig) -> SynthConfig:
    fields = {**{k: getattr(base, k) for k in base.__dataclass_fields__},
              **cfg["synth"], "seed": cfg["seed"], "slots_per_day": cfg["slots"]}
    return SynthConfig.from_dict(fields)


def _open_out(path: str | None) -> IO[str]:
    return open(path, "w", encoding="utf-8") if path else sys.stdout


def _write_json(obj, path: str | None) -> None:
    text = json.dumps(obj, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _table_stream(args) -> IO[str]:
    # keep stdout machine-readable when the JSON report goes there
    return sys.stdout if args.out else sys.stderr


def _load_trajs(path: str, net=None) -> list[Trajectory]:
    with open(path, encoding="utf-8") as fh:
        return load_trajectories(fh, net, strict=True)


def _load_stats(path: str, cfg: dict) -> gs.StatsStore:
    with open(path, encoding="utf-8") as fh:
        store = gs.load_stats(fh)
    return store.with_thresholds(cfg["alpha"], cfg["delta"])


def cmd_gen(args, cfg) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.scenario == "drift":
        synth = _synth(cfg, SynthConfig())
        net, p1, p2, manifest = drift_scenario(synth)
        trajs = p1 + p2
    else:
        base = bench_world() if args.scenario == "bench" else desk_world()
        net, trajs, manifest = generate(_synth(cfg, base))
    with open(out / "network.json", "w", encoding="utf-8") as fh:
        dump_network(net, fh)
    with open(out / "trajectories.jsonl", "w", encoding="utf-8") as fh:
        dump_trajectories(trajs, fh)
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True) + "\n",
                                       encoding="utf-8")
    log.info("wrote %d trajectories over %d segments to %s", len(trajs), len(net), out)
    return 0


def cmd_preprocess(args, cfg) -> int:
    net = load_network(args.network) if args.network else None
    trajs = _load_trajs(args.trajectories, net)
    store = gs.build_stats(trajs, slots_per_day=cfg["slots"], alpha=cfg["alpha"],
                           delta=cfg["delta"])
    with open(args.out, "w", encoding="utf-8") as fh:
        gs.save_stats(store, fh)
    return 0


def _trainer(args, cfg, net) -> Trainer:
    if args.model:
        models = Models.load(args.model)
    else:
        models = Models.init(cfg["seed"], len(net), *profile_dims(cfg["profile"]),
                             profile=cfg["profile"])
    tcfg = TrainConfig(lr_rsr=cfg["lr_rsr"], lr_policy=cfg["lr_asd"],
                       pretrain_epochs=cfg["pretrain_epochs"],
                       pretrain_policy_epochs=cfg["pretrain_policy_epochs"],
                       epochs_per_traj=cfg["epochs_per_traj"], eval_every=cfg["eval_every"],
                       D=cfg["delay_d"], phi=cfg["phi"], seed=cfg["seed"])
    sink = open(args.log, "w", encoding="utf-8") if args.log else None
    return Trainer(models, net, tcfg, sink)


def cmd_pretrain(args, cfg) -> int:
    net = load_network(args.network)
    trajs = _load_trajs(args.trajectories, net)
    store = _load_stats(args.stats, cfg)
    tr = _trainer(args, cfg, net)
    n = min(cfg["pretrain_size"], len(trajs))
    picked = sorted(tr.shuffle_rng.choice(len(trajs), n, replace=False)) if n else []
    tr.pretrain(store, [trajs[i] for i in picked])
    with open(args.out, "w", encoding="utf-8") as fh:
        tr.models.save(fh)
    if tr.log_sink:
        tr.log_sink.close()
    return 0


def cmd_train(args, cfg) -> int:
    net = load_network(args.network)
    trajs = _load_trajs(args.trajectories, net)
    store = _load_stats(args.stats, cfg)
    evals = _load_trajs(args.eval_set, net) if args.eval_set else None
    tr = _trainer(args, cfg, net)
    joint = trajs if cfg["joint_size"] is None else trajs[:cfg["joint_size"]]
    models = tr.joint_train(store, joint, evals)
    with open(args.out, "w", encoding="utf-8") as fh:
        models.save(fh)
    if tr.log_sink:
        tr.log_sink.close()
    return 0


def _stream_commands(lines: Iterable[str]) -> Iterable[tuple[int, dict]]:
    for no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=no) from None
        if not isinstance(rec, dict) or len(rec) != 1 or next(iter(rec)) not in ("open", "point"):
            raise StreamError(f"line {no}: expected {{\"open\": ...}} or {{\"point\": ...}}")
        yield no, rec


def run_stream(models: Models, store: gs.StatsStore, net, lines: Iterable[str],
               sink: IO[str], mode: str = GREEDY, D: int = 8, seed: int = 0) -> dict:
    """Serve the open/point protocol; returns final labels per finished trajectory."""
    rng = substream(seed, "rollout") if mode == SAMPLE else None
    sessions: dict[str, DetectionSession] = {}
    finished = {}
    for no, rec in _stream_commands(lines):
        if "open" in rec:
            o = rec["open"]
            try:
                tid, sd, start = str(o["traj"]), o["sd"], int(o.get("start", 0))
            except (KeyError, TypeError, ValueError):
                raise StreamError(f"line {no}: open needs traj, sd, start") from None
            if tid in sessions or tid in finished:
                raise StreamError(f"line {no}: trajectory {tid!r} opened twice")
            if not isinstance(sd, list) or len(sd) != 2:
                raise StreamError(f"line {no}: sd must be [source, destination]")
            sessions[tid] = DetectionSession(models, store, net, tid, (str(sd[0]), str(sd[1])),
                                             start, mode=mode, D=D, rng=rng)
            continue
        pt = rec["point"]
        try:
            tid, seg, last = str(pt["traj"]), str(pt["seg"]), bool(pt.get("last", False))
        except (KeyError, TypeError):
            raise StreamError(f"line {no}: point needs traj and seg") from None
        sess = sessions.get(tid)
        if sess is None:
            raise StreamError(f"line {no}: trajectory {tid!r} is not open")
        events = sess.push(seg, is_last=last)
        dump_events(events, sink)
        sink.flush()
        if last:
            finished[tid] = sessions.pop(tid).final_labels
    if sessions:
        raise StreamError(f"input ended with open trajectories: {sorted(sessions)}")
    return finished


def cmd_detect(args, cfg) -> int:
    net = load_network(args.network)
    store = _load_stats(args.stats, cfg)
    models = Models.load(args.model)
    sink = _open_out(args.out)
    labels: dict[str, list[int]] = {}
    try:
        if args.trajectories:
            rng = substream(cfg["seed"], "rollout") if cfg["mode"] == SAMPLE else None
            for t in _load_trajs(args.trajectories, net):
                final, events = detect_trajectory(models, store, net, t, cfg["mode"],
                                                  cfg["delay_d"], rng)
                dump_events(events, sink)
                labels[t.id] = final
        else:
            src = sys.stdin if args.stream == "-" else open(args.stream, encoding="utf-8")
            try:
                labels = run_stream(models, store, net, src, sink, cfg["mode"],
                                    cfg["delay_d"], cfg["seed"])
            finally:
                if src is not sys.stdin:
                    src.close()
    finally:
        if sink is not sys.stdout:
            sink.close()
    if args.labels_out:
        with open(args.labels_out, "w", encoding="utf-8") as fh:
            for tid, row in labels.items():
                fh.write(json.dumps({"id": tid, "labels": row}) + "\n")
    return 0


def read_predictions(path: str, gt: dict[str, Trajectory]) -> dict[str, list[int]]:
    """Labels JSONL ({"id", "labels"}) or events JSONL, keyed by trajectory id."""
    preds: dict[str, list[int]] = {}
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, line=no) from None
            if "labels" in rec:
                preds[str(rec["id"])] = [int(v) for v in rec["labels"]]
                continue
            tid = str(rec.get("traj"))
            if tid not in gt:
                raise ParseError(f"prediction for unknown trajectory {tid!r}", line=no)
            row = preds.setdefault(tid, [0] * len(gt[tid]))
            if rec.get("event") == "anomaly":
                for k in range(int(rec["start_idx"]), int(rec["end_idx"]) + 1):
                    row[k] = 1
    return preds


def cmd_eval(args, cfg) -> int:
    gt = {t.id: t for t in _load_trajs(args.gt)}
    missing = [tid for tid, t in gt.items() if t.labels is None]
    if missing:
        raise ConfigError(f"ground truth lacks labels for {missing[:3]}")
    preds = read_predictions(args.pred, gt)
    corpus = [(tid, t.labels, preds.get(tid, [0] * len(t))) for tid, t in gt.items()]
    report = evaluate(corpus, cfg["phi"])
    _write_json(json.loads(report.to_json()), args.out)
    print(report.table(), file=_table_stream(args))
    return 0


def cmd_drift(args, cfg) -> int:
    if args.network and args.trajectories:
        net = load_network(args.network)
        trajs = _load_trajs(args.trajectories, net)
    else:
        net, trajs, _ = drift_corpus(cfg["seed"], **cfg["synth"])
    rows = run_drift(net, trajs, cfg["xi"], detector_from(cfg))
    _write_json({"xi": cfg["xi"], "rows": asdict_rows(rows)}, args.out)
    out = _table_stream(args)
    print(f"{'part':>4} {'n':>6} {'frozen':>8} {'tuned':>8}", file=out)
    for r in rows:
        print(f"{r.part:>4} {r.n:>6} {r.frozen_f1:>8.4f} {r.finetuned_f1:>8.4f}", file=out)
    return 0


def cmd_coldstart(args, cfg) -> int:
    res = run_benchmark(_synth(cfg, desk_world()), detector_from(cfg))
    rows = run_coldstart(res.detector, res.test, cfg["drop_rates"], cfg["seed"])
    _write_json({"rows": asdict_rows(rows)}, args.out)
    out = _table_stream(args)
    print(f"{'drop':>6} {'groups':>7} {'F1':>8}", file=out)
    for r in rows:
        print(f"{r.drop_rate:>6.2f} {r.groups:>7} {r.f1:>8.4f}", file=out)
    return 0


def cmd_bench(args, cfg) -> int:
    world = _synth(cfg, bench_world())
    net, trajs, _ = generate(world)
    det = detector_from({**cfg, "pretrain_size": 200, "joint_size": 0})
    det.fit(trajs, network=net)
    report = run_latency(det, trajs, args.repeats)
    _write_json(report, args.out)
    return 0


COMMANDS = {"gen": cmd_gen, "preprocess": cmd_preprocess, "pretrain": cmd_pretrain,
            "train": cmd_train, "detect": cmd_detect, "eval": cmd_eval, "drift": cmd_drift,
            "coldstart": cmd_coldstart, "bench": cmd_bench}


def _error(code: str, message: str) -> None:
    sys.stderr.write(json.dumps({"code": code, "message": message}) + "\n")


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("OASD_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        _error(exc.code, str(exc))
        return 2
    except OasdError as exc:
        _error(exc.code, str(exc))
        return 1
    except OSError as exc:
        _error("io_error", str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
