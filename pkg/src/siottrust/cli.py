"""``siottrust`` command-line front end.

Every subcommand resolves an :class:`ExperimentConfig` (defaults, then a
``key=value`` file, then flags), runs one pipeline and writes CSV outputs
stamped with a manifest line. Exit codes: 0 success, 1 usage error,
2 data error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from .config import (ConfigError, ExperimentConfig, dump_config, field_types, load_config, manifest_line,
                     parse_value)
from .evaluation import build_pattern, score_test, split, sweep, write_sweep_csv
from .factorization import DivergenceError, save_factors, sgd_train
from .graph import RatingDomainError, RatingFileError, read_tsv
from .pattern import write_gamma_csv
from .simulation import (build_world, run_simulation, run_usecase, write_selections_csv, write_trajectory_csv,
                         write_usecase_csv, write_usecase_picks_csv)
from .social import write_distances_csv, write_edges_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGENCE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_config_flags(p: argparse.ArgumentParser, required_seed: bool = False) -> None:
    p.add_argument("--config", help="key=value config file (default: $SIOTTRUST_CONFIG)")
    p.add_argument("--out", help="output file or directory")
    group = p.add_argument_group("config overrides")
    for name in field_types():
        flag = "--" + name.replace("_", "-")
        if name == "seed":
            group.add_argument(flag, dest=f"cfg_{name}", required=required_seed, metavar="V")
        elif name == "maliciousness":
            group.add_argument(flag, "--lambda", dest=f"cfg_{name}", metavar="V")
        else:
            group.add_argument(flag, dest=f"cfg_{name}", metavar="V")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="siottrust", description="Social-network trust prediction experiments.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, needs_input, help_text in (
        ("ingest", True, "parse a rating TSV and print its summary"),
        ("social-net", True, "build the trustor friend graph and trust pattern"),
        ("train", True, "fit latent factors on every rating and write a checkpoint"),
        ("evaluate", True, "hold-out split, train, report accuracy metrics"),
        ("sweep", True, "evaluate a grid of model settings"),
        ("simulate", False, "run the hostile SIoT simulation"),
        ("usecase", False, "run the cold-start newcomer use case"),
    ):
        p = sub.add_parser(name, help=help_text)
        if needs_input:
            p.add_argument("input", help="rating TSV: trustor<TAB>trustee<TAB>rating (1-5)")
        _add_config_flags(p, required_seed=(name == "simulate"))
    return parser


def resolve_config(args) -> ExperimentConfig:
    overrides = {}
    for name in field_types():
        raw = getattr(args, f"cfg_{name}", None)
        if raw is not None:
            overrides[name] = parse_value(name, raw)
    return load_config(args.config, overrides)


def _header(command: str, cfg: ExperimentConfig) -> list[str]:
    return [manifest_line(command, cfg)]


def _out_dir(args, default: str) -> Path:
    d = Path(args.out or default)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_config(path: Path, command: str, cfg: ExperimentConfig) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {manifest_line(command, cfg)}\n")
        fh.write(dump_config(cfg))


def _write_kv_csv(path, rows, header_lines) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        w.writerows(rows)


def cmd_ingest(args, cfg):
    g = read_tsv(args.input)
    s = g.summary()
    print(f"users={s['users']} items={s['items']} ratings={s['ratings']} "
          f"density_pct={s['density_pct']:.6f} mean_ratings_per_user={s['mean_ratings_per_user']:.6f}")
    if args.out:
        _write_kv_csv(args.out, [(k, repr(v) if isinstance(v, float) else v) for k, v in s.items()],
                      _header("ingest", cfg))


def cmd_social_net(args, cfg):
    g = read_tsv(args.input)
    net, tp = build_pattern(g, cfg.model_settings())
    out = _out_dir(args, "social-net-out")
    hdr = _header("social-net", cfg)
    if net.distances is not None:
        write_distances_csv(net.distances, out / "distances.csv", hdr)
    write_edges_csv(net, out / "edges.csv", hdr)
    write_gamma_csv(tp, out / "gamma.csv", hdr)
    _write_config(out / "config.txt", "social-net", cfg)
    print(f"trustors={net.n} friend_edges={net.n_edges} threshold={net.threshold!r}")


def cmd_train(args, cfg):
    g = read_tsv(args.input)
    _, tp = build_pattern(g, cfg.model_settings())
    factors = sgd_train(g, tp, cfg.train_config())
    out = _out_dir(args, "train-out")
    hdr = _header("train", cfg)
    save_factors(factors, out / "factors.csv", hdr)
    with open(out / "loss.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {hdr[0]}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        w.writerows((k, repr(v)) for k, v in enumerate(factors.loss_history))
    _write_config(out / "config.txt", "train", cfg)
    print(f"epochs={cfg.epochs} final_loss={factors.loss_history[-1]!r}")


def cmd_evaluate(args, cfg):
    g = read_tsv(args.input)
    train_g, test = split(g, cfg.split_spec())
    _, tp = build_pattern(train_g, cfg.model_settings())
    factors = sgd_train(train_g, tp, cfg.train_config())
    rep = score_test(factors, tp, cfg.alpha, test, cfg.blended_prediction, cfg.external_scale)
    rows = [("rmse", repr(rep.rmse)), ("mae", repr(rep.mae)), ("coverage", repr(rep.coverage)),
            ("precision", repr(rep.precision)), ("f_measure", repr(rep.f_measure)), ("n_test", rep.n),
            ("rmse_max", repr(rep.rmse_max))]
    print(" ".join(f"{k}={v}" for k, v in rows))
    if args.out:
        _write_kv_csv(args.out, rows, _header("evaluate", cfg))


def cmd_sweep(args, cfg):
    g = read_tsv(args.input)
    grid = cfg.grid()
    results = sweep(g, grid, cfg.model_settings(), cfg.train_config(), cfg.split_seed, cfg.external_scale)
    path = args.out or "sweep.csv"
    write_sweep_csv(results, path, _header("sweep", cfg))
    print(f"points={len(results)} written={path}")


def cmd_simulate(args, cfg):
    sim = cfg.sim_config()
    world = build_world(sim)
    log = run_simulation(world, sim)
    out = _out_dir(args, "simulate-out")
    hdr = _header("simulate", cfg)
    write_trajectory_csv(log, out / "trajectory.csv", hdr)
    write_selections_csv(log.selections, out / "selections.csv", hdr)
    rows = [(k, j) for k, j in sorted(log.tracked.items())]
    rows += [(f"rejoins_{j}", c) for j, c in sorted(log.rejoins.items())]
    _write_kv_csv(out / "tracked.csv", rows, hdr)
    _write_config(out / "config.txt", "simulate", cfg)
    print(f"events={len(log.selections)} snapshots={len(log.hours())} tracked={log.tracked}")


def cmd_usecase(args, cfg):
    res = run_usecase(cfg.usecase_config())
    out = _out_dir(args, "usecase-out")
    hdr = _header("usecase", cfg)
    write_usecase_csv(res, out / "histogram.csv", hdr)
    write_usecase_picks_csv(res, out / "selections.csv", hdr)
    _write_config(out / "config.txt", "usecase", cfg)
    print("trust  " + " ".join(str(c) for c in res.trust_histogram()))
    print("random " + " ".join(str(c) for c in res.random_histogram()))


COMMANDS = {
    "ingest": cmd_ingest,
    "social-net": cmd_social_net,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "usecase": cmd_usecase,
}


def _fail(code: int, message: str) -> int:
    print(f"siottrust: error: {' '.join(str(message).split())}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        cfg = resolve_config(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except ConfigError as exc:
        return _fail(EXIT_USAGE, exc)
    except FileNotFoundError as exc:
        return _fail(EXIT_USAGE, f"config file not found: {exc.filename}")
    except (TypeError, ValueError) as exc:
        return _fail(EXIT_USAGE, f"invalid configuration: {exc}")
    if getattr(args, "input", None) is not None and not os.path.exists(args.input):
        return _fail(EXIT_DATA, f"input not found: {args.input}")
    try:
        COMMANDS[args.command](args, cfg)
    except DivergenceError as exc:
        return _fail(EXIT_DIVERGENCE, exc)
    except (RatingFileError, RatingDomainError) as exc:
        return _fail(EXIT_DATA, exc)
    except ConfigError as exc:
        return _fail(EXIT_USAGE, exc)
    except (TypeError, ValueError) as exc:
        return _fail(EXIT_USAGE, f"invalid configuration: {exc}")
    except OSError as exc:
        return _fail(EXIT_DATA, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
