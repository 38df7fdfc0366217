"""Command-line frontend: ``rgcf train|evaluate|recommend|sweep``.

Every failure exits nonzero with one stderr line ``rgcf: error: <kind>: <message>``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .config import ConfigError, ModelConfig, load_config
from .data import InteractionDataset, load_dataset
from .evaluation import RankingReport, evaluate, rank_top_k
from .graph import build_adjacency, build_propagation
from .propagation import forward, score_all_items
from .snapshot import Snapshot, load_id_maps, load_snapshot, save_id_maps, save_snapshot
from .training import train

SWEEP_PARAMS = {"lambda": "lam", "L": "num_layers", "alpha": "alpha", "learning_rate": "learning_rate"}


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _config(config_path, seed) -> ModelConfig:
    cfg = load_config(config_path) if config_path else ModelConfig()
    return cfg.replace(seed=seed) if seed is not None else cfg


def _check_shape(snap: Snapshot, dataset: InteractionDataset) -> None:
    if (snap.num_users, snap.num_items) != dataset.shape:
        raise CliError("shape", f"snapshot has (users, items) = ({snap.num_users}, {snap.num_items}) "
                                f"but dataset has {dataset.shape}")


def cmd_train(config_path, data_dir, out_path, seed=None, log_path=None) -> Snapshot:
    cfg = _config(config_path, seed)
    dataset, user_map, item_map = load_dataset(data_dir, cfg.valid_fraction, cfg.seed)
    adjacency = build_adjacency(dataset)
    operator = build_propagation(adjacency, cfg.lam)
    log_path = Path(log_path) if log_path else Path(str(out_path) + ".log")
    with open(log_path, "w", encoding="utf-8", newline="\n") as log:
        state, _ = train(cfg, dataset, operator=operator, log=log)
    _, fe = forward(operator, state, cfg.num_layers, cfg.mode)
    snap = Snapshot.from_state(state, cfg.num_layers, cfg.lam, cfg.mode, fe)
    save_snapshot(out_path, snap)
    save_id_maps(out_path, user_map, item_map)
    return snap


def cmd_evaluate(snapshot_path, data_dir, ks: Sequence[int] = (20,), out_path=None,
                 detail_path=None, stream: TextIO | None = None) -> RankingReport:
    snap = load_snapshot(snapshot_path)
    # test ranking masks train and validation, so the split seed cannot change the report
    dataset, _, _ = load_dataset(data_dir)
    _check_shape(snap, dataset)
    if snap.e_star is not None:
        fe = snap.final_embeddings()
    else:
        operator = build_propagation(build_adjacency(dataset), snap.lam)
        _, fe = forward(operator, snap.state, snap.num_layers, snap.mode)
    report = evaluate(fe, snap.biases, dataset, ks=ks, per_user=detail_path is not None)
    text = report.to_text()
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    (stream or sys.stdout).write(text)
    if detail_path:
        Path(detail_path).write_text(report.per_user_tsv(), encoding="utf-8")
    return report


def cmd_recommend(snapshot_path, user_external_id, k: int, data_dir=None,
                  stream: TextIO | None = None) -> list[tuple[str, float]]:
    snap = load_snapshot(snapshot_path)
    user_map, item_map = load_id_maps(snapshot_path)
    try:
        u = user_map.lookup(user_external_id)
    except KeyError:
        raise CliError("unknown-user",
                       f"user {user_external_id!r} not in ID map ({len(user_map)} users; "
                       f"external IDs {user_map.external[0]}..{user_map.external[-1]})") from None
    exclude = np.array([], dtype=np.int64)
    if data_dir is not None:
        dataset, _, _ = load_dataset(data_dir)
        _check_shape(snap, dataset)
        seen = dataset.train.union(dataset.validation)
        exclude = seen.items[seen.users == u]
    fe = snap.final_embeddings()
    items = rank_top_k(fe, snap.biases, u, k, exclude) if k > 0 else []
    scores = score_all_items(fe, snap.biases, u)
    rows = [(str(item_map.external[i]), float(scores[i])) for i in items]
    out = stream or sys.stdout
    for item, s in rows:
        out.write(f"{item} {s!r}\n")
    return rows


def _parse_value(param: str, raw: str):
    return int(raw) if param == "L" else float(raw)


def cmd_sweep(param: str, values: Sequence[str], config_path, data_dir, out_path=None,
              seed=None, stream: TextIO | None = None) -> list[str]:
    if param not in SWEEP_PARAMS:
        raise CliError("usage", f"cannot sweep {param!r}; choose from {sorted(SWEEP_PARAMS)}")
    base = _config(config_path, seed)
    parsed = [_parse_value(param, v) for v in values]
    for v in parsed:
        base.set(param, v)  # validate the whole grid up front
    dataset, _, _ = load_dataset(data_dir, base.valid_fraction, base.seed)
    adjacency = build_adjacency(dataset)
    operators = {}
    rows = []
    out = stream or sys.stdout
    sink = open(out_path, "w", encoding="utf-8", newline="\n") if out_path else None
    try:
        for raw, value in zip(values, parsed):
            try:
                cfg = base.set(param, value)
                if cfg.lam not in operators:
                    operators[cfg.lam] = build_propagation(adjacency, cfg.lam)
                operator = operators[cfg.lam]
                state, report = train(cfg, dataset, operator=operator)
                _, fe = forward(operator, state, cfg.num_layers, cfg.mode)
                rr = evaluate(fe, state.biases, dataset, ks=(20,))
                row = f"{raw}\t{rr.recall[20]!r}\t{rr.ndcg[20]!r}\t{report.stopping_epoch}"
            except Exception as exc:  # one failed run must not stop the sweep
                logging.getLogger(__name__).warning("sweep value %s failed: %s", raw, exc)
                row = f"{raw}\tfailed\t{type(exc).__name__}: {exc}".replace("\n", " ")
            rows.append(row)
            out.write(row + "\n")
            if sink:
                sink.write(row + "\n")
                sink.flush()
    finally:
        if sink:
            sink.close()
    return rows


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"rgcf: error: usage: {message}\n")
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rgcf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model and write a snapshot")
    p.add_argument("--config")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True, help="snapshot path")
    p.add_argument("--seed", type=int)
    p.add_argument("--log", help="training log path (default: <out>.log)")

    p = sub.add_parser("evaluate", help="full-ranking recall/ndcg on the test split")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--k", type=int, action="append", help="cutoff; repeatable (default 20)")
    p.add_argument("--out", help="also write the report here")
    p.add_argument("--detail", help="per-user TSV output path")

    p = sub.add_parser("recommend", help="top-K items for one user")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--k", type=int, action="append")
    p.add_argument("--data-dir", help="exclude this dataset's seen items")

    p = sub.add_parser("sweep", help="train one model per parameter value")
    p.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--config")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            cmd_train(args.config, args.data_dir, args.out, args.seed, args.log)
        elif args.command == "evaluate":
            cmd_evaluate(args.snapshot, args.data_dir, args.k or [20], args.out, args.detail)
        elif args.command == "recommend":
            ks = args.k or [20]
            if len(ks) != 1:
                raise CliError("usage", "recommend takes a single --k")
            cmd_recommend(args.snapshot, args.user, ks[0], args.data_dir)
        elif args.command == "sweep":
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            cmd_sweep(args.param, values, args.config, args.data_dir, args.out, args.seed)
    except CliError as exc:
        return _fail(exc.kind, str(exc))
    except ConfigError as exc:
        return _fail("config", str(exc))
    except FileNotFoundError as exc:
        return _fail("missing-file", str(exc))
    except Exception as exc:
        return _fail(type(exc).__name__, str(exc))
    return 0


def _fail(kind: str, message: str) -> int:
    message = " ".join(message.split())
    sys.stderr.write(f"rgcf: error: {kind}: {message}\n")
    return 1


if __name__ == "__main__":
    sys.exit(main())
