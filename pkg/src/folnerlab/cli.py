"""Command-line interface: ``folnerlab <command> [options]``.

Every report embeds the full run configuration and the tool version, is
validated against the bundled JSON schema, and is byte-identical across runs
with the same configuration and seed.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import jsonschema

from . import __version__
from . import complexity as cx
from . import groups as gr
from . import spectrum as sp
from . import systems as sy

log = logging.getLogger("folnerlab")

OUTPUT_DIR_ENV = "FOLNERLAB_OUTPUT_DIR"
EXIT_OK, EXIT_INCONSISTENT, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    """Bad input; reported on stderr with exit status 2."""


@dataclass
class RunConfig:
    """Everything that determines a run.  Round-trips through JSON."""

    system: str = "rotation"
    family: str | None = None
    epsilon: list[float] = field(default_factory=lambda: [0.1])
    n_list: list[int] = field(default_factory=lambda: [8, 16, 32, 64, 128, 256])
    sample_size: int = 2000
    seed: int | None = None
    output_path: str | None = None
    format: str = "json"
    theta: float = cx.DEFAULT_THETA
    stability: int = cx.DEFAULT_STABILITY
    truncation: int | None = None
    budget: int = 50
    n_max: int = 256
    pairs: int = 300
    function: str | None = None
    group: str | None = None
    prefix: int = 10
    ground_truth: str | None = None

    def validate(self) -> None:
        if not self.epsilon or any(not 0.0 < e < 1.0 for e in self.epsilon):
            raise UsageError(f"every epsilon must lie in (0, 1): {self.epsilon}")
        for name in ("sample_size", "budget", "n_max", "pairs", "prefix", "stability"):
            if getattr(self, name) <= 0:
                raise UsageError(f"{name} must be positive")
        if not self.n_list or any(n <= 0 for n in self.n_list):
            raise UsageError("n_list entries must be positive")
        if self.theta <= 0:
            raise UsageError("theta must be positive")
        if self.truncation is not None and self.truncation <= 0:
            raise UsageError("truncation must be positive")
        if self.format not in ("json", "csv"):
            raise UsageError("format must be json or csv")
        if self.seed is not None and self.seed < 0:
            raise UsageError("seed must be nonnegative")

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**obj)
        cfg.epsilon = [float(e) for e in cfg.epsilon]
        cfg.n_list = [int(n) for n in cfg.n_list]
        return cfg

    def system_spec(self) -> str:
        if self.truncation is None:
            return self.system
        sep = "," if ":" in self.system else ":"
        return f"{self.system}{sep}L={self.truncation}"


# ---------------------------------------------------------------------------
# helpers


def _csv_floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _csv_ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def load_schema() -> dict:
    text = resources.files("folnerlab").joinpath("schema/report.schema.json").read_text()
    return json.loads(text)


def make_report(command: str, cfg: RunConfig, result: Any) -> dict:
    report = {
        "tool": "folnerlab",
        "version": __version__,
        "command": command,
        "config": cfg.to_json(),
        "result": result,
    }
    jsonschema.validate(report, load_schema())
    return report


def _default_path(command: str, cfg: RunConfig) -> Path:
    base = Path(os.environ.get(OUTPUT_DIR_ENV, "."))
    tag = ((cfg.group or "run") if command == "tempered" else cfg.system).replace(":", "_").replace("^", "").replace("(", "_").replace(")", "")
    return base / f"{command}-{tag}-seed{cfg.seed}.{cfg.format}"


def _write(command: str, cfg: RunConfig, report: dict, rows: list[dict]) -> Path:
    path = Path(cfg.output_path) if cfg.output_path else _default_path(command, cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    if cfg.format == "json":
        path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    else:
        buf = io.StringIO()
        keys = list(rows[0]) if rows else ["empty"]
        writer = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        path.write_text(buf.getvalue())
    return path


def _system(cfg: RunConfig) -> sy.DynamicalSystem:
    try:
        return sy.make_system(cfg.system_spec())
    except (sy.UnknownSystemError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot build system {cfg.system_spec()!r}: {exc}") from None


def _family(system: sy.DynamicalSystem, cfg: RunConfig) -> str:
    fam = cfg.family or gr.default_family(system.group)
    if fam not in gr.families(system.group):
        raise UsageError(f"family {fam!r} is not defined on {system.group.name}; choose from {gr.families(system.group)}")
    return fam


def _need_seed(cfg: RunConfig) -> int:
    if cfg.seed is None:
        raise UsageError("--seed is required for commands that emit reports")
    return cfg.seed


# ---------------------------------------------------------------------------
# commands


def cmd_list_systems(cfg: RunConfig | None = None) -> str:
    lines = [f"{'system':<30} {'group':<12} {'ground truth':<20} isometric"]
    for name in sy.BUILTIN_SYSTEMS:
        s = sy.make_system(name)
        lines.append(f"{name:<30} {s.group.name:<12} {s.ground_truth.value:<20} {'yes' if s.isometric else 'no'}")
    return "\n".join(lines)


def cmd_profile(cfg: RunConfig) -> tuple[dict, list[dict]]:
    seed = _need_seed(cfg)
    system = _system(cfg)
    fam = _family(system, cfg)
    profiles = []
    rows: list[dict] = []
    for eps in cfg.epsilon:
        try:
            p = cx.folner_profile(system, fam, eps, cfg.n_list, cfg.sample_size, seed, cfg.theta, cfg.stability)
        except cx.SampleTooSmall as exc:
            raise UsageError(str(exc)) from None
        profiles.append(p.to_json())
        rows.extend(p.csv_rows())
    return {"profiles": profiles}, rows


def cmd_tempered(cfg: RunConfig) -> tuple[dict, list[dict]]:
    try:
        spec = gr.parse_group(cfg.group or "Z")
        fam = cfg.family or gr.default_family(spec)
        res = gr.shulman_constant(spec, fam, cfg.prefix)
    except (gr.EncodingError, gr.UnknownFamilyError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    result = {
        "group": res.group,
        "family": res.family,
        "N": res.N,
        "constant": res.constant,
        "argmax": res.argmax,
        "analytic": res.analytic,
        "ratios": {str(k): v for k, v in res.ratios.items()},
    }
    rows = [{"group": res.group, "family": res.family, "n": k, "ratio": v} for k, v in res.ratios.items()]
    return result, rows


def cmd_maxmean(cfg: RunConfig) -> tuple[dict, list[dict]]:
    seed = _need_seed(cfg)
    system = _system(cfg)
    out, rows = [], []
    for eps in cfg.epsilon:
        try:
            r = cx.max_mean_search(system, eps, cfg.budget, cfg.sample_size, seed, theta=cfg.theta, stability=cfg.stability)
        except cx.SampleTooSmall as exc:
            raise UsageError(str(exc)) from None
        d = r.to_json(system.group)
        d["epsilon"] = eps
        out.append(d)
        rows.extend(dict(epsilon=eps, **c) for c in d["inventory"])
    return {"system": system.spec_string, "searches": out}, rows


def cmd_spectrum(cfg: RunConfig) -> tuple[dict, list[dict]]:
    seed = _need_seed(cfg)
    system = _system(cfg)
    fam = _family(system, cfg)
    funcs = system.test_functions()
    if cfg.function is not None:
        funcs = [f for f in funcs if f.name == cfg.function]
        if not funcs:
            names = [f.name for f in system.test_functions()]
            raise UsageError(f"unknown test function {cfg.function!r}; choose from {names}")
    reports, rows = [], []
    for eps in cfg.epsilon:
        for f in funcs:
            r = sp.orbit_net_profile(system, f, fam, eps, cfg.n_list, cfg.sample_size, seed, theta=cfg.theta, stability=cfg.stability)
            reports.append(r.to_json())
            rows.extend({"function": f.name, "epsilon": eps, "n": n, "netSize": k, "verdict": r.verdict.value} for n, k in r.entries)
    return {"system": system.spec_string, "nets": reports, "scope": "finite test-function dictionary"}, rows


def cmd_equicont(cfg: RunConfig) -> tuple[dict, list[dict]]:
    seed = _need_seed(cfg)
    system = _system(cfg)
    fam = _family(system, cfg)
    reports, rows = [], []
    for eps in cfg.epsilon:
        for test in (sp.mean_equicontinuity_test, sp.equicontinuity_in_mean_test):
            r = test(system, fam, eps, cfg.pairs, cfg.n_max, seed)
            reports.append(r.to_json())
            rows.extend(dict(mode=r.mode.value, epsilon=eps, outcome=r.outcome.value, **t.to_json()) for t in r.trials)
    return {"system": system.spec_string, "reports": reports}, rows


def cmd_crossvalidate(cfg: RunConfig) -> tuple[dict, list[dict], bool]:
    seed = _need_seed(cfg)
    system = _system(cfg)
    truth = None
    if cfg.ground_truth is not None:
        try:
            truth = sy.GroundTruth(cfg.ground_truth)
        except ValueError:
            raise UsageError(f"unknown ground truth {cfg.ground_truth!r}") from None
    rep = sp.cross_validate(system, sp.default_config(system, seed), ground_truth=truth)
    rows = [{"component": k, "verdict": v} for k, v in rep.verdicts.items()]
    return rep.to_json(), rows, rep.status == "Inconsistent"


# ---------------------------------------------------------------------------
# argument parsing


_FLAG_FIELDS = {
    "system": str,
    "family": str,
    "epsilon": _csv_floats,
    "n_list": _csv_ints,
    "sample_size": int,
    "seed": int,
    "output_path": str,
    "format": str,
    "theta": float,
    "stability": int,
    "truncation": int,
    "budget": int,
    "n_max": int,
    "pairs": int,
    "function": str,
    "group": str,
    "prefix": int,
    "ground_truth": str,
}

_COMMAND_FLAGS = {
    "profile": ["system", "family", "epsilon", "n_list", "sample_size", "theta", "stability", "truncation"],
    "tempered": ["group", "family", "prefix"],
    "maxmean": ["system", "epsilon", "sample_size", "budget", "theta", "stability", "truncation"],
    "spectrum": ["system", "family", "epsilon", "n_list", "sample_size", "function", "theta", "stability", "truncation"],
    "equicont": ["system", "family", "epsilon", "pairs", "n_max", "truncation"],
    "cross-validate": ["system", "truncation", "ground_truth"],
}

_HELP = {
    "profile": "complexity profile along a Følner family",
    "tempered": "prefix Shulman constant of a Følner family",
    "maxmean": "adversarial search for the worst finite set",
    "spectrum": "L2 orbit-net profiles of the built-in test functions",
    "equicont": "mean equicontinuity tests (limsup and sup modes)",
    "cross-validate": "run every diagnostic and check consistency",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="folnerlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"folnerlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list-systems", help="built-in systems with their labels")
    for name, flags in _COMMAND_FLAGS.items():
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
        p.add_argument("--seed", type=int)
        p.add_argument("--output", dest="output_path")
        p.add_argument("--format", choices=["json", "csv"])
        p.add_argument("--threads", type=int, help="compute threads (default: all cores)")
        p.add_argument("-v", "--verbose", action="store_true")
        for f in flags:
            p.add_argument("--" + f.replace("_", "-"), dest=f, type=_FLAG_FIELDS[f])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    base: dict = {}
    if getattr(args, "config", None):
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
    cfg = RunConfig.from_json(base)
    for name in _FLAG_FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    cfg.validate()
    return cfg


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    import numba

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


_RUNNERS = {
    "profile": cmd_profile,
    "tempered": cmd_tempered,
    "maxmean": cmd_maxmean,
    "spectrum": cmd_spectrum,
    "equicont": cmd_equicont,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "list-systems":
        print(cmd_list_systems())
        return EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        _set_threads(args.threads)
        inconsistent = False
        if args.command == "cross-validate":
            result, rows, inconsistent = cmd_crossvalidate(cfg)
        else:
            result, rows = _RUNNERS[args.command](cfg)
        report = make_report(args.command, cfg, result)
        path = _write(args.command, cfg, report, rows)
    except UsageError as exc:
        print(f"folnerlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(path)
    if args.command == "cross-validate":
        print(f"status: {result['status']}")
        return EXIT_INCONSISTENT if inconsistent else EXIT_OK
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
