"""Command-line interface.

Exit codes: 0 on success, 2 for invalid input values or configuration, 3 for
unreadable, missing or malformed files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import errors, formats, harness, whitening
from .fusion import calibrate
from .harness import DEFAULT_KS
from .metrics import evaluate
from .synth import PRNG_NAME, SynthSpec, generate
from .types import CalibConfig, Stage

log = logging.getLogger("simcal")

EXIT_OK, EXIT_VALIDATION, EXIT_FORMAT = 0, 2, 3


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _load_config(path) -> CalibConfig:
    if path is None:
        return CalibConfig()
    return CalibConfig.from_json(Path(path).read_text())


def _load_spec(path) -> SynthSpec:
    if path is None:
        return SynthSpec()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise errors.BadSpec(f"spec is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise errors.BadSpec("spec must be a JSON object")
    return SynthSpec.from_dict(data)


def _resolve_subjects(queries, names):
    """Match CLI subject names against the set's tags (which may be ints)."""
    lookup = {str(n): n for n in queries.subject_names}
    out = []
    for name in names:
        if name not in lookup:
            raise errors.UnknownSubject(f"subject {name!r} not among {sorted(lookup)}")
        out.append(lookup[name])
    return out


# --------------------------------------------------------------------------
# subcommands


def cmd_gen_synth(args) -> int:
    spec = _load_spec(args.spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    queries, candidates = generate(spec)
    formats.write_emb1(out / "queries.emb1", queries)
    formats.write_emb1(out / "candidates.emb1", candidates)
    formats.write_json(out / "spec.json", {**spec.to_dict(), "prng": PRNG_NAME})
    print(f"wrote {queries.n} queries and {candidates.n} candidates (d={spec.d}) to {out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _load_config(args.config)
    # labels are dropped before anything else so the calibration path cannot see them
    queries = formats.read_emb1(args.queries).without_labels()
    candidates = formats.read_emb1(args.candidates)
    cfg.check(candidates.n)
    models = None
    if cfg.saw:
        if args.load_models:
            models = formats.read_wmd1(args.load_models)
        else:
            models = whitening.saw_fit_per_subject(queries, cfg.lambda_reg, window=args.window)
        if args.save_models:
            formats.write_wmd1(args.save_models, models)
    elif args.save_models or args.load_models:
        raise errors.BadConfig("whitening models need saw=true")
    s_new = harness.pre_csls(queries, candidates, cfg, models)
    if args.snew_out:
        formats.write_sim1(args.snew_out, s_new)
    final = calibrate(s_new, cfg)
    formats.write_sim1(args.out, final)
    print(f"wrote {final.shape[0]}x{final.shape[1]} final scores to {args.out}")
    return EXIT_OK


def _report_text(report) -> str:
    lines = [f"queries: {report.n_queries}"]
    for k, acc in report.top_k_acc.items():
        lines.append(f"Top-{k:<3d} {100 * acc:7.2f}%")
    for name, skew in report.hubness_skew.items():
        lines.append(f"hubness skew ({name}): {skew:.4f}")
    for subj, accs in report.per_subject_acc.items():
        cells = "  ".join(f"Top-{k}={100 * v:.2f}%" for k, v in accs.items())
        lines.append(f"  subject {subj}: {cells}")
    return "\n".join(lines)


def cmd_evaluate(args) -> int:
    meta = formats.read_emb1_meta(args.meta)
    if meta.get("label_of") is None:
        raise errors.MissingLabels(f"{args.meta} carries no labels")
    class_ids = None
    if args.candidates_meta:
        class_ids = formats.read_emb1_meta(args.candidates_meta)["label_of"]
    sim = formats.read_sim1(args.scores, class_ids=class_ids)
    if len(meta["label_of"]) != sim.shape[0]:
        raise errors.SidecarMismatch(f"{len(meta['label_of'])} labels for {sim.shape[0]} score rows")
    labels = sim.column_of(meta["label_of"])
    names = meta.get("subject_name_map") or {}
    n_subj = max(meta["subject_of"]) + 1 if meta["subject_of"] else 0
    report = evaluate(
        sim,
        labels,
        ks=[k for k in args.k if k <= sim.shape[1]],
        stage_name=sim.stage.name.lower(),
        subjects=meta["subject_of"],
        subject_names=[names.get(str(i), str(i)) for i in range(n_subj)],
        hub_k=args.hub_k,
    )
    print(_report_text(report))
    if args.report:
        formats.write_json(args.report, report.to_dict())
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    queries = formats.read_emb1(args.queries)
    candidates = formats.read_emb1(args.candidates)
    if queries.label_of is None:
        raise errors.MissingLabels("sweeps need labelled queries for their metrics")
    cfg.check(candidates.n)
    ks = [k for k in args.k if k <= candidates.n]
    dev = _resolve_subjects(queries, args.dev_subjects or [])
    test = [s for s in queries.subject_names if s not in dev]
    if not test:
        raise errors.ValidationError("every subject is a dev subject; nothing left to evaluate")
    out = {"mode": args.mode, "config": cfg.to_dict(), "dev_subjects": dev, "test_subjects": list(test)}

    if args.mode == "stages":
        rows = harness.run_pipeline_sweep(queries, candidates, cfg, ks, args.window, test)
        print(harness.format_table(rows, ks))
    else:
        if not args.betas:
            raise errors.ValidationError("beta grid is empty")
        if dev:
            # tune on the dev folds only, then score the chosen beta on the rest
            tune = harness.sweep_beta(queries, candidates, cfg, args.betas, ks, args.window, dev)
            k_sel = 5 if 5 in ks else ks[0]
            best = max(tune, key=lambda r: (r.report.top_k_acc[k_sel], -r.config.poe_beta))
            print("dev folds:")
            print(harness.format_table(tune, ks))
            out["dev_rows"] = [_row_json(r) for r in tune]
            out["selected_beta"] = best.config.poe_beta
            rows = harness.sweep_beta(queries, candidates, cfg, [best.config.poe_beta], ks, args.window, test)
            print(f"selected beta={best.config.poe_beta:g} by dev Top-{k_sel}; test folds:")
        else:
            rows = harness.sweep_beta(queries, candidates, cfg, args.betas, ks, args.window, test)
        print(harness.format_table(rows, ks))
    out["rows"] = [_row_json(r) for r in rows]
    if args.out:
        formats.write_json(args.out, out)
    return EXIT_OK


def _row_json(row) -> dict:
    return {"name": row.name, "config": row.config.to_dict(), "report": row.report.to_dict()}


def cmd_diagnose(args) -> int:
    cfg = _load_config(args.config)
    s_new = formats.read_sim1(args.snew)
    if s_new.stage is not Stage.NEW:
        raise errors.WrongStage(f"diagnose needs a pre-CSLS (NEW) matrix, got {s_new.stage.name}")
    cfg.check(s_new.shape[1])
    info = harness.diagnose(s_new, cfg)
    print(
        f"anchors: {info['anchor_count']}  hub pairs: {info['hub_count']}  "
        f"MNN pairs: {info['mnn_count']}  hubness skew: {info['hubness_skew']:.4f}"
    )
    if args.out:
        formats.write_json(args.out, info)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simcal", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synth", help="write a seeded synthetic benchmark")
    g.add_argument("--spec", help="JSON generator spec (defaults for missing fields)")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_gen_synth)

    c = sub.add_parser("calibrate", help="score queries against candidates")
    c.add_argument("--queries", required=True)
    c.add_argument("--candidates", required=True)
    c.add_argument("--config", help="JSON CalibConfig")
    c.add_argument("--out", required=True, help="final SIM1 matrix")
    c.add_argument("--save-models", help="write the per-subject whitening models (WMD1)")
    c.add_argument("--load-models", help="apply frozen whitening models instead of fitting")
    c.add_argument("--window", type=int, help="fit whitening on each subject's first N rows")
    c.add_argument("--snew-out", help="also write the pre-CSLS matrix (SIM1)")
    c.set_defaults(func=cmd_calibrate)

    e = sub.add_parser("evaluate", help="accuracy and hubness of a score matrix")
    e.add_argument("--scores", required=True)
    e.add_argument("--meta", required=True, help="query sidecar JSON with labels")
    e.add_argument("--candidates-meta", help="candidate sidecar JSON (column class ids)")
    e.add_argument("--k", type=_int_list, default=[1, 5, 10])
    e.add_argument("--hub-k", type=int, default=5)
    e.add_argument("--report", help="JSON report path")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="leave-one-subject-out sweep over stages or beta")
    s.add_argument("--mode", choices=("stages", "beta"), required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--candidates", required=True)
    s.add_argument("--config", help="JSON CalibConfig used as the base")
    s.add_argument("--betas", type=_float_list, default=[0.0, 1.0, 1.9, 3.0])
    s.add_argument("--k", type=_int_list, default=list(DEFAULT_KS))
    s.add_argument("--window", type=int)
    s.add_argument(
        "--dev-subjects",
        type=_str_list,
        help="subjects reserved for tuning; they are left out of the reported folds",
    )
    s.add_argument("--out", help="JSON table path")
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("diagnose", help="structural-evidence summary of a pre-CSLS matrix")
    d.add_argument("--snew", required=True)
    d.add_argument("--config")
    d.add_argument("--out")
    d.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except errors.ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (errors.FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
