"""Command-line interface: ``gwperc {exact,simulate,oracle,decay,compare}``.

Every command accepts ``--config FILE`` (a JSON document with the same keys as
the long flags, dashes replaced by underscores); explicit flags override file
values. Exit codes: 0 success, 1 statistical failure in ``compare``, 2 invalid
input or unsupported regime.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field

from gwperc import analytics, montecarlo, oracle
from gwperc.errors import GWPercError, SupercriticalInfinite
from gwperc.offspring import make_distribution
from gwperc.simulator import DEFAULT_VERTEX_CAP, Scenario

logger = logging.getLogger("gwperc")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    """Everything a command needs; round-trips through JSON."""

    dist: str | None = None
    p: float | None = None
    q: float | None = None
    radius: str | int = "inf"
    source_depth: int = 0
    vertex_cap: int | None = DEFAULT_VERTEX_CAP
    replicates: int = 100_000
    seed: int | None = None
    workers: int = 1
    output: str | None = None
    csv: str | None = None
    n_grid: list[int] = field(default_factory=list)
    tree: str | None = None
    source: int | None = None
    result: str | None = None
    z_limit: float = 4.0
    profile_max: int | None = None
    diam_n_max: int = 20
    size_n_max: int = 100

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def save(self, path: str) -> None:
        _atomic_write(path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise UsageError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def scenario(self) -> Scenario:
        for name in ("dist", "p", "q"):
            if getattr(self, name) is None:
                raise UsageError(f"missing required setting --{name}")
        radius = self.radius
        if isinstance(radius, str):
            radius = None if radius.strip().lower() in ("inf", "infinite") else _parse_int(radius, "radius")
        return Scenario(
            dist=make_distribution(self.dist),
            p=self.p,
            q=self.q,
            radius=radius,
            source_depth=self.source_depth,
            vertex_cap=self.vertex_cap,
        )

    def resolved_seed(self) -> int:
        if self.seed is not None:
            return int(self.seed)
        env = os.environ.get("GWPERC_SEED")
        return _parse_int(env, "GWPERC_SEED") if env else 0


def _parse_int(text: str, name: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise UsageError(f"{name} must be an integer, got {text!r}") from None


def parse_grid(text: str) -> list[int]:
    """``"2:10"`` (inclusive range) or ``"2,3,5"``."""
    try:
        if ":" in text:
            lo, hi = text.split(":")
            return list(range(int(lo), int(hi) + 1))
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad n-grid {text!r}") from None


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".gwperc-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, path: str | None) -> None:
    if path:
        _atomic_write(path, text)
    else:
        sys.stdout.write(text)


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# -- commands -------------------------------------------------------------------

def cmd_exact(cfg: ExperimentConfig) -> int:
    scenario = cfg.scenario()
    report = analytics.exact_report(scenario)
    _emit(_dumps(report.to_dict()), cfg.output)
    return EXIT_OK


def _run(cfg: ExperimentConfig, scenario: Scenario) -> montecarlo.ExperimentResult:
    logger.info("simulating %d replicates with %d worker(s)", cfg.replicates, cfg.workers)
    diam_n_max = max([cfg.diam_n_max, *cfg.n_grid]) if cfg.n_grid else cfg.diam_n_max
    return montecarlo.run_experiment(
        scenario,
        cfg.replicates,
        cfg.resolved_seed(),
        workers=cfg.workers,
        profile_max=cfg.profile_max,
        diam_n_max=diam_n_max,
        size_n_max=cfg.size_n_max,
    )


def cmd_simulate(cfg: ExperimentConfig) -> int:
    scenario = cfg.scenario()
    result = _run(cfg, scenario)
    comparison = montecarlo.compare(montecarlo.exact_or_none(scenario), result)
    _emit(result.to_json(comparison), cfg.output)
    if cfg.csv:
        _atomic_write(cfg.csv, comparison.to_csv())
    return EXIT_OK


def cmd_oracle(cfg: ExperimentConfig) -> int:
    if cfg.tree is None:
        raise UsageError("missing required setting --tree")
    if cfg.p is None or cfg.q is None:
        raise UsageError("--p and --q are required")
    tree = oracle.parse_tree(cfg.tree)
    source = cfg.source
    if source is None:
        at_depth = tree.vertices_at_depth(cfg.source_depth)
        if not at_depth:
            raise UsageError(f"tree has no vertex at depth {cfg.source_depth}")
        source = at_depth[0]
    stats = oracle.enumerate_exact(tree, cfg.p, cfg.q, source, workers=cfg.workers)
    doc = {"tree": cfg.tree, "edges": tree.edge_count, "source": source,
           "source_depth": int(tree.depth[source]), "p": cfg.p, "q": cfg.q, **stats.to_dict()}
    _emit(_dumps(doc), cfg.output)
    return EXIT_OK


def cmd_decay(cfg: ExperimentConfig) -> int:
    scenario = cfg.scenario()
    if not cfg.n_grid:
        raise UsageError("--n-grid is required")
    if scenario.mu_p >= 1.0:
        raise SupercriticalInfinite(f"mu*p = {scenario.mu_p:g} >= 1: no decay bounds (supercritical)")
    result = _run(cfg, scenario)
    _emit(montecarlo.decay_csv(montecarlo.decay_table(result, cfg.n_grid)), cfg.output)
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig) -> int:
    if cfg.result:
        with open(cfg.result) as fh:
            doc = json.load(fh)
        result = montecarlo.ExperimentResult.from_dict(doc.get("result", doc))
        scenario = result.scenario
    else:
        scenario = cfg.scenario()
        result = _run(cfg, scenario)
    comparison = montecarlo.compare(analytics.exact_report(scenario), result)
    _emit(_dumps(comparison.to_dict()), cfg.output)
    if cfg.csv:
        _atomic_write(cfg.csv, comparison.to_csv())
    passed = comparison.passed(cfg.z_limit)
    print(f"max |z| = {comparison.max_abs_z:.3f}; {'PASS' if passed else 'FAIL'}", file=sys.stderr)
    return EXIT_OK if passed else EXIT_FAILED


COMMANDS = {
    "exact": cmd_exact,
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
    "decay": cmd_decay,
    "compare": cmd_compare,
}


def _add_scenario(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("scenario")
    g.add_argument("--dist", help="offspring law: det:<k>, geom:<a>, pois1:<lambda>, table:<csv>")
    g.add_argument("--p", type=float, help="parent -> offspring opening probability")
    g.add_argument("--q", type=float, help="offspring -> parent opening probability")
    g.add_argument("--radius", help="tree radius R, or 'inf'")
    g.add_argument("--r", "--source-depth", dest="source_depth", type=int, help="depth of the information source")
    g.add_argument("--vertex-cap", type=int, help="censor clusters beyond this many wet vertices")


def _add_run(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("simulation")
    g.add_argument("--replicates", type=int)
    g.add_argument("--seed", type=int, help="64-bit seed (default: $GWPERC_SEED or 0)")
    g.add_argument("--workers", type=int)
    g.add_argument("--profile-max", type=int, help="largest generation n whose mean X_n is estimated")
    g.add_argument("--diam-n-max", type=int, help="largest n for the diam >= 2n tail")
    g.add_argument("--size-n-max", type=int, help="largest n for the S > n tail")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gwperc",
        description="Bidirectional bond percolation on Galton-Watson trees: closed forms, simulation, exact oracle.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--output", "-o", help="output file (default: stdout)")

    p = sub.add_parser("exact", parents=[common], help="closed-form moments and bounds")
    _add_scenario(p)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo run with embedded comparison")
    _add_scenario(p)
    _add_run(p)
    p.add_argument("--csv", help="also write the per-quantity CSV table here")

    p = sub.add_parser("oracle", parents=[common], help="exhaustive enumeration on a small tree")
    p.add_argument("--tree", help="det:<k>:<R> or an edge-list file of 'child parent' lines")
    p.add_argument("--p", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--source-depth", "--r", dest="source_depth", type=int,
                   help="use the first vertex at this depth as source")
    p.add_argument("--source", type=int, help="explicit source vertex index")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("decay", parents=[common], help="tail frequencies against the decay bounds")
    _add_scenario(p)
    _add_run(p)
    p.add_argument("--n-grid", type=parse_grid, help="'lo:hi' inclusive or comma list")

    p = sub.add_parser("compare", parents=[common], help="z-scores of a run against the closed forms")
    _add_scenario(p)
    _add_run(p)
    p.add_argument("--result", help="compare a saved simulate JSON instead of running")
    p.add_argument("--csv", help="also write the per-quantity CSV table here")
    p.add_argument("--z-limit", type=float, help="largest acceptable |z| (default 4)")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = {
        name: value
        for name, value in vars(args).items()
        if name not in ("command", "config", "verbose") and value is not None
    }
    return dataclasses.replace(cfg, **overrides)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (GWPercError, UsageError, ValueError, OSError) as exc:
        print(f"gwperc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
