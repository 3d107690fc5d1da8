"""Command line entry point.

    nedstats <ingest|synth|train|tag|stats|estimate|compare> [--config FILE] [flags]

Settings come from a flat ``key=value`` config file and are overridden by
flags. Data goes to files under ``--out``; diagnostics go to stderr.
Exit status is 0 on success, 1 on usage errors and 2 on data or
configuration errors.
"""
from __future__ import annotations

import argparse
import logging
import re
import sys
import zlib
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from nedstats.collective import SimplexError
from nedstats.corpus import CorpusError, load_corpus, save_corpus, spot_corpus, synth_corpus
from nedstats.kb import KBError, load_kb
from nedstats.local import TrainConfig, load_weights, save_weights, train_weights
from nedstats.pipeline import tag_corpus
from nedstats import ratio, stats

log = logging.getLogger("nedstats")

COMMANDS = ("ingest", "synth", "train", "tag", "stats", "estimate", "compare")


class UsageError(Exception):
    pass


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class RunConfig:
    kb_path: str | None = None
    corpus_path: str | None = None
    train_path: str | None = None
    weights_path: str | None = None
    groups_path: str | None = None
    out_dir: str = "."
    seed: int = 0
    window_k: int = 25
    epochs: int = 20
    rate: float = 0.01
    margin: float = 1.0
    solver: str = "local"
    restarts: int = 0
    tagger: str = "local"
    theta: str | None = None
    n_spots: int = 1000
    mmd_tol: float = 1e-14
    mmd_iters: int = 20_000
    eps: float = 0.01
    damping: float = 0.85
    ppr_tol: float = 1e-8
    center: int | None = None
    top_k: int = 10
    workers: int = 1
    respot: bool = False


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, raw):
    if raw is None:
        return None
    kind = _TYPES[name]
    try:
        if "bool" in kind:
            if isinstance(raw, bool):
                return raw
            if str(raw).lower() in ("1", "true", "yes", "on"):
                return True
            if str(raw).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(name, f"invalid value {raw!r}") from None
    return str(raw)


def read_config_file(path: str | Path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep:
                raise ConfigError(f"line {lineno}", "expected key=value")
            if key not in _TYPES:
                raise ConfigError(key, f"unknown config key (line {lineno})")
            values[key] = _coerce(key, value.strip())
    return values


def derive_seed(seed: int, stage: str) -> int:
    """Deterministic per-stage sub-seed."""
    ss = np.random.SeedSequence([seed, zlib.crc32(stage.encode())])
    return int(ss.generate_state(1)[0])


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nedstats", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.add_argument("--kb", dest="kb_path")
        p.add_argument("--corpus", dest="corpus_path")
        p.add_argument("--train", dest="train_path")
        p.add_argument("--weights", dest="weights_path")
        p.add_argument("--groups", dest="groups_path")
        p.add_argument("--out", dest="out_dir")
        p.add_argument("--seed")
        p.add_argument("--window", dest="window_k")
        p.add_argument("--epochs")
        p.add_argument("--rate")
        p.add_argument("--margin")
        p.add_argument("--solver")
        p.add_argument("--restarts")
        p.add_argument("--tagger")
        p.add_argument("--theta")
        p.add_argument("--n-spots", dest="n_spots")
        p.add_argument("--mmd-tol", dest="mmd_tol")
        p.add_argument("--mmd-iters", dest="mmd_iters")
        p.add_argument("--eps")
        p.add_argument("--damping")
        p.add_argument("--ppr-tol", dest="ppr_tol")
        p.add_argument("--center")
        p.add_argument("--top-k", dest="top_k")
        p.add_argument("--workers")
        p.add_argument("--respot", action="store_const", const=True, default=None)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config:
        if not Path(args.config).is_file():
            raise ConfigError("config", f"no such file {args.config!r}")
        values.update(read_config_file(args.config))
    for name in _TYPES:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = _coerce(name, flag)
    cfg = RunConfig(**values)
    _check_ranges(cfg)
    return cfg


def _check_ranges(cfg: RunConfig) -> None:
    if cfg.window_k < 0:
        raise ConfigError("window_k", "must be >= 0")
    if cfg.epochs < 0:
        raise ConfigError("epochs", "must be >= 0")
    for name in ("rate", "margin", "mmd_tol", "ppr_tol"):
        if not getattr(cfg, name) > 0:
            raise ConfigError(name, "must be > 0")
    if not 0 < cfg.damping < 1:
        raise ConfigError("damping", "must lie in (0, 1)")
    if not 0 <= cfg.eps <= 1:
        raise ConfigError("eps", "must lie in [0, 1]")
    if cfg.solver not in ("local", "hillclimb", "lp"):
        raise ConfigError("solver", "must be one of local, hillclimb, lp")
    if cfg.tagger not in ("local", "hillclimb", "collective-hillclimb"):
        raise ConfigError("tagger", "must be local or hillclimb")
    for name in ("restarts", "top_k"):
        if getattr(cfg, name) < 0:
            raise ConfigError(name, "must be >= 0")
    if cfg.n_spots < 1:
        raise ConfigError("n_spots", "must be >= 1")
    if cfg.mmd_iters < 1:
        raise ConfigError("mmd_iters", "must be >= 1")
    if cfg.workers < 1:
        raise ConfigError("workers", "must be >= 1")


def _require_file(cfg: RunConfig, name: str, directory: bool = False) -> Path:
    value = getattr(cfg, name)
    if not value:
        raise ConfigError(name, "required")
    path = Path(value)
    if directory and not path.is_dir():
        raise ConfigError(name, f"no such directory {value!r}")
    if not directory and not path.is_file():
        raise ConfigError(name, f"no such file {value!r}")
    return path


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def parse_theta(text: str) -> dict[int, float]:
    """``"1:0.6,2:0.3,3:0.1"`` (``=`` also accepted) -> {1: 0.6, 2: 0.3, 3: 0.1}."""
    theta = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, _, value = re.split(r"([:=])", part, maxsplit=1)
        theta[int(key)] = float(value)
    return theta


def default_name_groups(kb) -> dict[str, list[int]]:
    """Group entities by title with any trailing "(qualifier)" removed."""
    groups: dict[str, list[int]] = {}
    for ent in kb.entities.values():
        name = re.sub(r"\s*\([^)]*\)\s*$", "", ent.title).strip().lower()
        groups.setdefault(name, []).append(ent.id)
    return {g: sorted(v) for g, v in sorted(groups.items())}


def read_name_groups(path: Path) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'group<TAB>entity_id'")
            groups.setdefault(parts[0], []).append(int(parts[1]))
    return {g: sorted(v) for g, v in sorted(groups.items())}


def cmd_ingest(cfg: RunConfig) -> None:
    kb = load_kb(_require_file(cfg, "kb_path", directory=True))
    n_links = sum(len(v) for v in kb.inlinks.values())
    summary = (
        f"entities\t{len(kb.entities)}\nlinks\t{n_links}\n"
        f"surfaces\t{len(kb.mentions)}\ntotal_pages\t{kb.total_pages}\n"
    )
    (_out(cfg) / "kb_summary.tsv").write_text(summary, encoding="utf-8")
    sys.stdout.write(summary)


def cmd_synth(cfg: RunConfig) -> None:
    kb = load_kb(_require_file(cfg, "kb_path", directory=True))
    if not cfg.theta:
        raise ConfigError("theta", "required")
    try:
        theta = parse_theta(cfg.theta)
    except ValueError:
        raise ConfigError("theta", f"cannot parse {cfg.theta!r}") from None
    corpus = synth_corpus(kb, theta, cfg.n_spots, derive_seed(cfg.seed, "synth"))
    save_corpus(corpus, _out(cfg) / "corpus.jsonl")


def _train(cfg: RunConfig, kb, corpus) -> np.ndarray:
    tc = TrainConfig(
        epochs=cfg.epochs,
        learning_rate=cfg.rate,
        margin=cfg.margin,
        seed=derive_seed(cfg.seed, "train"),
        window=cfg.window_k,
    )
    return train_weights(corpus, kb, tc)


def cmd_train(cfg: RunConfig) -> None:
    kb = load_kb(_require_file(cfg, "kb_path", directory=True))
    corpus = load_corpus(_require_file(cfg, "corpus_path"))
    w = _train(cfg, kb, corpus)
    target = Path(cfg.weights_path) if cfg.weights_path else _out(cfg) / "weights.txt"
    target.parent.mkdir(parents=True, exist_ok=True)
    save_weights(w, target)


def cmd_tag(cfg: RunConfig) -> None:
    kb = load_kb(_require_file(cfg, "kb_path", directory=True))
    corpus = load_corpus(_require_file(cfg, "corpus_path"))
    w = load_weights(_require_file(cfg, "weights_path"))
    if cfg.respot:
        corpus = spot_corpus(corpus, kb)
    tagged = tag_corpus(
        kb, w, corpus, cfg.solver, cfg.window_k, cfg.restarts, derive_seed(cfg.seed, "tag"), cfg.workers
    )
    save_corpus(tagged, _out(cfg) / "tagged.jsonl")


def cmd_stats(cfg: RunConfig) -> None:
    corpus = load_corpus(_require_file(cfg, "corpus_path"))
    if cfg.groups_path:
        groups = read_name_groups(_require_file(cfg, "groups_path"))
    else:
        groups = default_name_groups(load_kb(_require_file(cfg, "kb_path", directory=True)))
    out = _out(cfg)
    stats.write_sense_priors(stats.sense_prior(corpus, groups), out / "sense_priors.tsv")
    table = stats.entity_bigrams(corpus)
    stats.write_bigrams(table, out / "bigrams.tsv")
    center = cfg.center
    if center is None:
        if not table.unigrams:
            raise ValueError("no labeled spots to rank related entities")
        center = min(table.unigrams, key=lambda e: (-table.unigrams[e], e))
    graph = stats.build_cooc_graph(table, center, cfg.eps)
    scores = stats.personalized_pagerank(graph, cfg.damping, cfg.ppr_tol)
    stats.write_related(stats.top_related(graph, scores, cfg.top_k), out / "related.tsv")


def _mmd(cfg: RunConfig, kb, train, test) -> ratio.SimplexVector:
    means = ratio.class_means(train.spots, kb)
    phi_u = ratio.unlabeled_mean(test.spots, kb)
    ec = ratio.EstimatorConfig(cfg.mmd_iters, cfg.mmd_tol, derive_seed(cfg.seed, "mmd"))
    return ratio.estimate_mmd(means, phi_u, ec)


def cmd_estimate(cfg: RunConfig) -> None:
    kb = load_kb(_require_file(cfg, "kb_path", directory=True))
    train = load_corpus(_require_file(cfg, "train_path"))
    test = load_corpus(_require_file(cfg, "corpus_path"))
    ratio.write_theta(_mmd(cfg, kb, train, test), _out(cfg) / "theta.tsv")


def cmd_compare(cfg: RunConfig) -> None:
    kb = load_kb(_require_file(cfg, "kb_path", directory=True))
    train = load_corpus(_require_file(cfg, "train_path"))
    test = load_corpus(_require_file(cfg, "corpus_path"))
    w = load_weights(_require_file(cfg, "weights_path")) if cfg.weights_path else _train(cfg, kb, train)
    theta_mmd = _mmd(cfg, kb, train, test)
    classes = theta_mmd.classes
    truth = ratio.gold_ratio(test, classes)
    baseline = ratio.label_and_collect(cfg.tagger, kb, w, test, classes=ratio.feature_dims(kb), k=cfg.window_k)
    baseline = ratio.align(baseline, classes) if set(baseline.classes) != set(classes) else baseline
    out = _out(cfg)
    ratio.write_theta(theta_mmd, out / "theta_mmd.tsv")
    ratio.write_theta(baseline, out / "theta_baseline.tsv")
    ratio.write_theta(truth, out / "theta_true.tsv")
    l1_mmd = ratio.l1_error(theta_mmd, truth)
    l1_base = ratio.l1_error(baseline, truth)
    with open(out / "report.tsv", "w", encoding="utf-8") as fh:
        fh.write("entity\ttheta_true\ttheta_mmd\ttheta_baseline\n")
        for c in classes:
            fh.write(f"{c}\t{truth[c]:.12g}\t{theta_mmd[c]:.12g}\t{baseline[c]:.12g}\n")
        fh.write(f"l1_mmd\t{l1_mmd:.12g}\n")
        fh.write(f"l1_baseline\t{l1_base:.12g}\n")
    log.info("l1_mmd=%.6g l1_baseline=%.6g", l1_mmd, l1_base)


_HANDLERS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "train": cmd_train,
    "tag": cmd_tag,
    "stats": cmd_stats,
    "estimate": cmd_estimate,
    "compare": cmd_compare,
}


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError(f"a subcommand is required: {', '.join(COMMANDS)}")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"nedstats: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = resolve_config(args)
        _HANDLERS[args.command](cfg)
    except (ConfigError, KBError, CorpusError, SimplexError, ValueError, KeyError, OSError) as exc:
        print(f"nedstats {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
