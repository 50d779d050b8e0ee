"""Command-line interface.

Exit codes: 0 success, 2 input error, 3 schema error, 4 pipeline error,
5 external-synthesizer timeout. Every subcommand accepts ``--seed``,
``--threads`` and ``--out-dir``; commands that print results accept
``--format json|csv``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import shutil
import sys
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from derecsim import datagen, derec, plotdata, simpro, synth
from derecsim.correlation import DEFAULT_BINS
from derecsim.errors import DerecSimError, MissingInput, SpecInvalid
from derecsim.fsutil import atomic_write_text, dumps_json, read_json, tree_digests, write_json
from derecsim.table import Schema, load_csv, save_csv

MANIFEST_FORMAT = "derecsim-manifest/1"
MANIFEST_NAME = "manifest.json"


# -- helpers ----------------------------------------------------------------------


def _existing(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingInput(f"{what} not found: {p}")
    return p


def _read_json_input(path: str | Path, what: str) -> Any:
    p = _existing(path, what)
    try:
        return read_json(p)
    except json.JSONDecodeError as exc:
        raise SpecInvalid(f"{p}: invalid JSON ({exc})") from exc


def _load_table(table: str | Path, schema: str | Path, identifier: str | None):
    s = Schema.load(schema)
    if identifier is not None and s.identifier != identifier:
        raise SpecInvalid(f"{schema}: identifier is {s.identifier!r}, expected {identifier!r}")
    return load_csv(_existing(table, "table"), s)


def _emit(out: Any, fmt: str, csv_text: str | None = None) -> None:
    if fmt == "csv" and csv_text is not None:
        sys.stdout.write(csv_text)
    else:
        sys.stdout.write(dumps_json(out))


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def comparison_csv_text(comp: simpro.Comparison) -> str:
    header = ["given_source", "given_column", "target_source", "target_column",
              "delta_p", "q_p", "delta_w", "q_w"]
    rows = []
    for r in comp.rows:
        f = r.pair.fields()
        rows.append([f["given_source"], f["given_column"], f["target_source"], f["target_column"],
                     repr(r.delta_p), r.q_p.value, repr(r.delta_w), r.q_w.value])
    return _csv(header, rows)


def _comparison_summary(comp: simpro.Comparison) -> dict[str, Any]:
    doc = comp.to_dict()
    doc.pop("pairs")
    return doc


def _report_path(out_dir: Path, label: str) -> Path:
    return out_dir / f"report_{label}.simpro.json"


def _comparison_path(out_dir: Path, a: str, b: str) -> Path:
    return out_dir / f"comparison_{a}_vs_{b}.simpro.json"


# -- building blocks shared by subcommands and the pipeline ----------------------


def do_split(table_a, table_b, schema_a, schema_b, identifier, threshold, out_dir) -> derec.DerecBundle:
    a = _load_table(table_a, schema_a, identifier)
    b = _load_table(table_b, schema_b, None)
    bundle = derec.run_derec(a, b, threshold)
    bundle.save(out_dir)
    return bundle


def do_evaluate(orig: derec.DerecBundle, syn: derec.DerecBundle, label: str, bins: int,
                threads: int, out_dir: Path) -> simpro.SimproReport:
    report = simpro.evaluate(orig, syn, label, bins=bins, threads=threads)
    report.save(_report_path(out_dir, label))
    for s in (report.ks, report.w):
        atomic_write_text(out_dir / f"series_{label}.{s.metric.value}.csv", s.to_csv_text())
    return report


def do_gen(spec: datagen.GenSpec, out_dir: Path) -> None:
    a, b, truth = datagen.generate(spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_csv(a, out_dir / "table_a.csv")
    save_csv(b, out_dir / "table_b.csv")
    a.schema.save(out_dir / "schema_a.json")
    b.schema.save(out_dir / "schema_b.json")
    write_json(out_dir / "truth.json", truth.to_dict())
    write_json(out_dir / "spec.json", spec.to_dict())


# -- pipeline configuration -------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run depends on; stored verbatim in the manifest.

    Either ``gen_spec`` (generate the inputs) or all four table/schema paths
    must be given. Paths are stored resolved to absolute form.
    """

    table_a: str | None = None
    table_b: str | None = None
    schema_a: str | None = None
    schema_b: str | None = None
    gen_spec: str | None = None
    identifier: str | None = None
    threshold: float = derec.DEFAULT_THRESHOLD
    threshold_p: float = simpro.DEFAULT_T_P
    w_threshold: str = simpro.WThresholdRule.ABS_DELTA.value
    bins: int = DEFAULT_BINS
    seed: int = 0
    method: str = synth.Method.CONDITIONAL.value
    baseline: str = synth.Method.INDEPENDENT.value
    min_support: int = 1
    exchange_dir: str | None = None
    poll_interval: float = 0.5
    timeout: float = 600.0
    plot_kinds: tuple[str, ...] = field(default=plotdata.KINDS)

    def validate(self) -> None:
        tables = (self.table_a, self.table_b, self.schema_a, self.schema_b)
        if self.gen_spec is None:
            if any(t is None for t in tables):
                raise SpecInvalid("pipeline needs --gen-spec or all of --table-a/-b and --schema-a/-b")
            for t, what in zip(tables, ("table a", "table b", "schema a", "schema b")):
                _existing(t, what)
        else:
            _existing(self.gen_spec, "generator spec")
        if not 0 < self.threshold <= 1:
            raise SpecInvalid(f"threshold must lie in (0, 1], got {self.threshold}")
        if not 0 < self.threshold_p < 1:
            raise SpecInvalid(f"threshold-p must lie in (0, 1), got {self.threshold_p}")
        if self.bins < 1:
            raise SpecInvalid("bins must be >= 1")
        simpro.WThresholdRule(self.w_threshold)
        for m in (self.method, self.baseline):
            synth.Method(m)
        for k in self.plot_kinds:
            if k not in plotdata.KINDS:
                raise SpecInvalid(f"unknown plot kind {k!r}")

    def to_dict(self) -> dict[str, Any]:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["plot_kinds"] = list(self.plot_kinds)
        return out

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise SpecInvalid(f"unknown config keys: {sorted(unknown)}")
        doc = dict(doc)
        if "plot_kinds" in doc:
            doc["plot_kinds"] = tuple(doc["plot_kinds"])
        return cls(**doc)

    def resolved(self) -> RunConfig:
        def absolute(p: str | None) -> str | None:
            return None if p is None else str(Path(p).resolve())

        return replace(
            self,
            table_a=absolute(self.table_a),
            table_b=absolute(self.table_b),
            schema_a=absolute(self.schema_a),
            schema_b=absolute(self.schema_b),
            gen_spec=absolute(self.gen_spec),
            exchange_dir=absolute(self.exchange_dir),
        )


def derive_seeds(seed: int) -> dict[str, int]:
    """Independent 64-bit seeds for each stochastic stage, derived from one seed."""
    state = np.random.SeedSequence(seed).generate_state(3, dtype=np.uint64)
    return {"gen": int(state[0]), "candidate": int(state[1]), "baseline": int(state[2])}


def _labels(cfg: RunConfig) -> tuple[str, str]:
    if cfg.method == cfg.baseline:
        return f"{cfg.method}_candidate", f"{cfg.baseline}_baseline"
    return cfg.method, cfg.baseline


def run_pipeline(cfg: RunConfig, out_dir: Path, threads: int = 1) -> dict[str, Any]:
    """split -> synthesize (candidate and baseline) -> evaluate -> compare -> plotdata.

    Returns the manifest document, which is also written to ``out_dir``.
    """
    cfg = cfg.resolved()
    cfg.validate()
    seeds = derive_seeds(cfg.seed)
    if out_dir.exists():
        for stale in ("input", "split", "plots"):
            shutil.rmtree(out_dir / stale, ignore_errors=True)
    out_dir.mkdir(parents=True, exist_ok=True)

    if cfg.gen_spec is not None:
        spec = datagen.GenSpec.from_dict(_read_json_input(cfg.gen_spec, "generator spec"))
        spec = spec.with_seed(seeds["gen"])
        spec.validate()
        do_gen(spec, out_dir / "input")
        paths = [out_dir / "input" / n for n in ("table_a.csv", "table_b.csv", "schema_a.json", "schema_b.json")]
    else:
        paths = [Path(p) for p in (cfg.table_a, cfg.table_b, cfg.schema_a, cfg.schema_b)]
    bundle = do_split(*paths, cfg.identifier, cfg.threshold, out_dir / "split")

    label_c, label_b = _labels(cfg)
    jobs = [(label_c, cfg.method, seeds["candidate"]), (label_b, cfg.baseline, seeds["baseline"])]

    def run(job: tuple[str, str, int]) -> simpro.SimproReport:
        label, method, seed = job
        exchange = None
        if method == synth.Method.EXTERNAL.value:
            exchange = Path(cfg.exchange_dir) if cfg.exchange_dir else out_dir / f"exchange_{label}"
        spec = synth.SynthesizerSpec(method, seed, exchange_dir=exchange, poll_interval=cfg.poll_interval,
                                     timeout=cfg.timeout, min_support=cfg.min_support)
        syn = synth.synthesize(bundle, spec)
        syn_dir = out_dir / f"synth_{label}"
        shutil.rmtree(syn_dir, ignore_errors=True)
        syn.save(syn_dir)
        return do_evaluate(bundle, syn, label, cfg.bins, 1 if threads > 1 else threads, out_dir)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            report_c, report_b = pool.map(run, jobs)
    else:
        report_c, report_b = (run(j) for j in jobs)

    comp = simpro.compare(report_c, report_b, cfg.threshold_p, cfg.w_threshold)
    comp.save(_comparison_path(out_dir, label_c, label_b))
    series = []
    for src in (report_c, report_b, comp):
        series += plotdata.plot_data(src, cfg.plot_kinds)
    plotdata.write_plot_data(series, out_dir / "plots")

    manifest = {
        "format": MANIFEST_FORMAT,
        "config": cfg.to_dict(),
        "seeds": seeds,
        "labels": {"candidate": label_c, "baseline": label_b},
        "thresholds": {"M": cfg.threshold, "T_p": cfg.threshold_p, "T_w": comp.threshold_w,
                       "T_w_rule": cfg.w_threshold},
        "result": {"net_improvement_p": comp.net_p, "net_improvement_w": comp.net_w,
                   "similarity_ks_pvalue": comp.similarity_ks, "similarity_w_pvalue": comp.similarity_w},
        "artifacts": tree_digests(out_dir, frozenset({MANIFEST_NAME})),
    }
    write_json(out_dir / MANIFEST_NAME, manifest)
    return manifest


# -- subcommands ------------------------------------------------------------------


def cmd_split(args: argparse.Namespace) -> int:
    bundle = do_split(args.table_a, args.table_b, args.schema_a, args.schema_b, args.id,
                      args.threshold, Path(args.out_dir))
    doc = bundle.partition_doc()
    rows = [[r.source, v.column, repr(v.fraction), str(v.contextual).lower()]
            for r in bundle.partition for v in r.columns]
    _emit(doc, args.format, _csv(["source", "column", "fraction", "contextual"], rows))
    return 0


def cmd_synthesize(args: argparse.Namespace) -> int:
    bundle = derec.DerecBundle.load(_existing(args.bundle, "bundle directory"))
    spec = synth.SynthesizerSpec(
        args.method, args.seed,
        exchange_dir=Path(args.exchange_dir) if args.exchange_dir else None,
        poll_interval=args.poll_interval, timeout=args.timeout, min_support=args.min_support,
    )
    syn = synth.synthesize(bundle, spec)
    syn.save(args.out_dir)
    _emit({"method": spec.method.value, "seed": spec.seed, "out_dir": str(args.out_dir),
           "fingerprint": syn.fingerprint()}, "json")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    orig = derec.DerecBundle.load(_existing(args.original, "original bundle"))
    syn = derec.DerecBundle.load(_existing(args.synthetic, "synthetic bundle"))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = do_evaluate(orig, syn, args.label, args.bins, args.threads, out)
    doc = report.to_dict()
    _emit({k: doc[k] for k in ("format", "label", "original_fingerprint", "settings", "summary")},
          args.format, report.ks.to_csv_text() + "\r\n" + report.w.to_csv_text())
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    ra = simpro.SimproReport.load(args.report_a)
    rb = simpro.SimproReport.load(args.report_b)
    comp = simpro.compare(ra, rb, args.threshold_p, args.w_threshold)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    comp.save(_comparison_path(out, ra.label, rb.label))
    _emit(_comparison_summary(comp), args.format, comparison_csv_text(comp))
    return 0


def _load_report_or_comparison(path: str) -> simpro.SimproReport | simpro.Comparison:
    doc = _read_json_input(path, "report")
    fmt = doc.get("format") if isinstance(doc, dict) else None
    if fmt == simpro.REPORT_FORMAT:
        return simpro.SimproReport.from_dict(doc)
    if fmt == simpro.COMPARISON_FORMAT:
        return simpro.Comparison.from_dict(doc)
    raise SpecInvalid(f"{path}: not a report or comparison document")


def cmd_plotdata(args: argparse.Namespace) -> int:
    src = _load_report_or_comparison(args.input)
    kinds = plotdata.KINDS if args.kind == "all" else (args.kind,)
    written = plotdata.write_plot_data(plotdata.plot_data(src, kinds), args.out_dir)
    _emit({"written": [p.name for p in written]}, args.format,
          _csv(["file"], [[p.name] for p in written]))
    return 0


def cmd_gen(args: argparse.Namespace) -> int:
    spec = datagen.GenSpec.from_dict(_read_json_input(args.spec, "generator spec"))
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    spec.validate()
    do_gen(spec, Path(args.out_dir))
    _emit({"out_dir": str(args.out_dir), "seed": spec.seed}, "json")
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    if args.manifest:
        doc = _read_json_input(args.manifest, "manifest")
        if doc.get("format") != MANIFEST_FORMAT:
            raise SpecInvalid(f"{args.manifest}: not a {MANIFEST_FORMAT} document")
        cfg = RunConfig.from_dict(doc["config"])
    elif args.config:
        cfg = RunConfig.from_dict(_read_json_input(args.config, "config"))
    else:
        cfg = RunConfig()
    overrides = {}
    for name in ("table_a", "table_b", "schema_a", "schema_b", "gen_spec", "threshold", "threshold_p",
                 "w_threshold", "bins", "seed", "method", "baseline", "min_support", "exchange_dir",
                 "poll_interval", "timeout"):
        v = getattr(args, name)
        if v is not None:
            overrides[name] = v
    if args.id is not None:
        overrides["identifier"] = args.id
    cfg = replace(cfg, **overrides)
    manifest = run_pipeline(cfg, Path(args.out_dir), args.threads)
    _emit({k: manifest[k] for k in ("labels", "thresholds", "result")}, args.format,
          _csv(["artifact", "sha256"], sorted(manifest["artifacts"].items())))
    return 0


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="64-bit seed for stochastic steps (default: 0, or the spec's own seed for gen)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (default: 1)")
    common.add_argument("--out-dir", default=".", help="output directory (default: current directory)")
    fmt = argparse.ArgumentParser(add_help=False)
    fmt.add_argument("--format", choices=("json", "csv"), default="json",
                     help="stdout format (default: json)")

    p = argparse.ArgumentParser(prog="derecsim", description="Multi-table synthetic data evaluation.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("split", parents=[common, fmt], help="detect, recreate and connect two tables")
    s.add_argument("--table-a", required=True)
    s.add_argument("--table-b", required=True)
    s.add_argument("--schema-a", required=True)
    s.add_argument("--schema-b", required=True)
    s.add_argument("--id", default=None, help="identifier column (default: taken from schema a)")
    s.add_argument("--threshold", type=float, default=derec.DEFAULT_THRESHOLD,
                   help="contextual threshold M (default: 0.95)")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("synthesize", parents=[common], help="synthesize a bundle")
    s.add_argument("--bundle", required=True)
    s.add_argument("--method", choices=[m.value for m in synth.Method], default=synth.Method.CONDITIONAL.value)
    s.add_argument("--exchange-dir", default=None)
    s.add_argument("--poll-interval", type=float, default=0.5, help="seconds (default: 0.5)")
    s.add_argument("--timeout", type=float, default=600.0, help="seconds (default: 600)")
    s.add_argument("--min-support", type=int, default=1, help="conditional backoff support (default: 1)")
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("evaluate", parents=[common, fmt], help="score a synthetic bundle")
    s.add_argument("--original", required=True)
    s.add_argument("--synthetic", required=True)
    s.add_argument("--label", required=True)
    s.add_argument("--bins", type=int, default=DEFAULT_BINS, help="numeric quantile bins (default: 10)")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("compare", parents=[common, fmt], help="compare two reports")
    s.add_argument("--report-a", required=True)
    s.add_argument("--report-b", required=True)
    s.add_argument("--threshold-p", type=float, default=simpro.DEFAULT_T_P, help="T_p (default: 0.333)")
    s.add_argument("--w-threshold", choices=[r.value for r in simpro.WThresholdRule],
                   default=simpro.WThresholdRule.ABS_DELTA.value, help="T_w rule (default: abs-delta)")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("plotdata", parents=[common, fmt], help="emit plot-ready series")
    s.add_argument("--input", required=True, help="report or comparison JSON")
    s.add_argument("--kind", choices=(*plotdata.KINDS, "all"), default="all")
    s.set_defaults(func=cmd_plotdata)

    s = sub.add_parser("gen", parents=[common], help="generate a planted fixture")
    s.add_argument("--spec", required=True)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("pipeline", parents=[common, fmt], help="run the full pipeline")
    s.add_argument("--config", default=None, help="RunConfig JSON")
    s.add_argument("--manifest", default=None, help="rerun the config stored in a manifest")
    s.add_argument("--table-a")
    s.add_argument("--table-b")
    s.add_argument("--schema-a")
    s.add_argument("--schema-b")
    s.add_argument("--gen-spec", help="generate inputs from a datagen spec instead of tables")
    s.add_argument("--id")
    s.add_argument("--threshold", type=float)
    s.add_argument("--threshold-p", type=float)
    s.add_argument("--w-threshold", choices=[r.value for r in simpro.WThresholdRule])
    s.add_argument("--bins", type=int)
    s.add_argument("--method", choices=[m.value for m in synth.Method],
                   help="candidate synthesizer (default: conditional)")
    s.add_argument("--baseline", choices=[m.value for m in synth.Method],
                   help="baseline synthesizer (default: independent)")
    s.add_argument("--min-support", type=int)
    s.add_argument("--exchange-dir")
    s.add_argument("--poll-interval", type=float)
    s.add_argument("--timeout", type=float)
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("split", "synthesize", "evaluate", "compare") and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except DerecSimError as exc:
        print(f"derecsim: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"derecsim: error: {exc}", file=sys.stderr)
        return SpecInvalid.exit_code


if __name__ == "__main__":
    sys.exit(main())
