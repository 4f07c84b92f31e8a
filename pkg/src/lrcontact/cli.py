"""Command-line entry point: ``lrcontact <subcommand> [--config path] [--seed n] [--replicas n] [--out dir]``.

Exit status is 0 exactly when every check the subcommand declares passes.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .experiment import ExperimentConfig, certificate_ladder, lemma_suite, pipeline_end_to_end, survival_sweep

U64 = (1 << 64) - 1


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v <= U64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return v


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=_u64)
    p.add_argument("--replicas", type=_positive_int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int)
    p.add_argument("-v", "--verbose", action="count", default=0)


def _model(p: argparse.ArgumentParser, lam: bool = True):
    p.add_argument("--s", type=float)
    p.add_argument("--N", type=int, dest="N")
    p.add_argument("--buffer", type=int)
    p.add_argument("--certify-tol", type=float, dest="certify_tol")
    if lam:
        p.add_argument("--lam", type=float)
        p.add_argument("--horizon", type=float)
        p.add_argument("--T", type=float, dest="T")
        p.add_argument("--rows", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lrcontact", description="Contact process on long-range percolation: samplers, certificates and checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-graph", help="sample a graph window and write it as JSON")
    _common(p)
    _model(p, lam=False)

    p = sub.add_parser("decompose", help="cut-point decomposition of a sampled window")
    _common(p)
    _model(p, lam=False)

    p = sub.add_parser("contact-run", help="run the contact process from the origin on a sampled window")
    _common(p)
    _model(p)

    p = sub.add_parser("renorm", help="good-box grid and semi-circuit certificate for one window")
    _common(p)
    _model(p)

    p = sub.add_parser("stretched", help="bad-interval frequencies p_k against L_k^(-eps/2)")
    _common(p)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--L0", type=int, dest="L0")
    p.add_argument("--max-length", type=int, default=10**4, dest="max_length")

    p = sub.add_parser("couple-check", help="exhaustive site-versus-bond crossing comparison")
    _common(p)
    p.add_argument("--max-width", type=int, default=3, dest="max_width")
    p.add_argument("--max-height", type=int, default=3, dest="max_height")

    p = sub.add_parser("pipeline", help="end-to-end certificate pipeline over replicas")
    _common(p)
    _model(p)
    p.add_argument("--lambdas", type=_floats, help="comma-separated grid: run the coupled certificate ladder instead")

    p = sub.add_parser("sweep", help="survival to the horizon along a coupled lambda grid")
    _common(p)
    _model(p)
    p.add_argument("--lambdas", type=_floats)

    p = sub.add_parser("lemma-suite", help="run the acceptance criteria")
    _common(p)
    p.add_argument("--criteria", type=_ints, help="comma-separated criterion ids")
    return parser


def _config(args, **defaults) -> ExperimentConfig:
    base = ExperimentConfig.from_file(args.config).to_dict() if args.config else {**ExperimentConfig().to_dict(), **defaults}
    for key in ExperimentConfig().to_dict():
        v = getattr(args, key, None)
        if v is not None:
            base[key] = v
    return ExperimentConfig.from_dict(base)


def _emit(out_dir: str | None, filename: str, text: str):
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, filename), "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _window(cfg: ExperimentConfig):
    from .graph import GraphParams, buffer_for_error, sample_window
    from .seeding import child_seed

    buffer = cfg.buffer if cfg.buffer is not None else buffer_for_error(cfg.s, cfg.certify_tol, cfg.N)
    return sample_window(GraphParams(cfg.s, cfg.N, buffer, child_seed(cfg.seed, 0, "window")))


def cmd_sample_graph(args) -> int:
    cfg = _config(args, name="sample-graph")
    w = _window(cfg)
    _emit(cfg.out, "window.json", w.to_json())
    return 0


def cmd_decompose(args) -> int:
    from .cutpoints import UncertifiableWindow, decompose

    cfg = _config(args, name="decompose")
    try:
        dec = decompose(_window(cfg), tol=cfg.certify_tol)
    except UncertifiableWindow as exc:
        logging.getLogger("lrcontact").error("%s", exc)
        return 1
    _emit(cfg.out, "decomposition.json", dec.to_json())
    return 0


def cmd_contact_run(args) -> int:
    from .contact import run_contact, sample_rep
    from .seeding import child_seed

    cfg = _config(args, name="contact-run")
    horizon = cfg.horizon if cfg.horizon is not None else 50.0 / cfg.lam
    rep = sample_rep(_window(cfg), cfg.lam, horizon, child_seed(cfg.seed, 0, "marks"))
    trace = run_contact(rep, [0])
    _emit(cfg.out, "trace.csv", trace.to_csv())
    logging.getLogger("lrcontact").info("survived=%s extinction_time=%s", trace.survived, trace.extinction_time)
    return 0


def cmd_renorm(args) -> int:
    from .contact import sample_rep
    from .cutpoints import UncertifiableWindow, decompose
    from .renorm import block_length, classify_good, detect_semicircuit, verify_confinement
    from .seeding import child_seed

    cfg = _config(args, name="renorm")
    w = _window(cfg)
    try:
        dec = decompose(w, tol=cfg.certify_tol)
    except UncertifiableWindow as exc:
        logging.getLogger("lrcontact").error("%s", exc)
        return 1
    T = cfg.T if cfg.T is not None else block_length(cfg.lam)
    rep = sample_rep(w, cfg.lam, cfg.rows * T, child_seed(cfg.seed, 0, "marks"))
    grid = classify_good(rep, dec, T, cfg.rows)
    _emit(cfg.out, "grid.csv", grid.to_csv())
    cert = detect_semicircuit(grid)
    if cert is None:
        logging.getLogger("lrcontact").info("no semi-circuit found")
        return 0
    ok = verify_confinement(rep, dec, cert)
    _emit(cfg.out, "certificate.json", cert.to_json())
    return 0 if ok else 1


def cmd_stretched(args) -> int:
    from .seeding import child_seed
    from .stretched.renewal import geometric_interarrival
    from .stretched.scales import build_scales, largest_reachable_k, p_k_estimate

    cfg = _config(args, name="stretched", replicas=10**4)
    if cfg.pmf.get("kind") != "geometric":
        raise SystemExit("only the geometric interarrival law is wired to the CLI")
    pmf = geometric_interarrival(float(cfg.pmf.get("success", 0.5)))
    scales = build_scales(cfg.L0, cfg.H0, cfg.epsilon, 12, "paper", height=False)
    k_top = largest_reachable_k(scales, args.max_length)
    lines = ["k,estimate,stderr,bound,replicas,pass"]
    ok = True
    for k in range(k_top + 1):
        est = p_k_estimate(pmf, scales, k, cfg.replicas, child_seed(cfg.seed, k, "pk"))
        lines.append(est.csv_row())
        ok &= est.passed
    _emit(cfg.out, "p_k.csv", "\n".join(lines) + "\n")
    return 0 if ok else 1


def cmd_couple_check(args) -> int:
    from .stretched.coupling import coupling_inequality_check

    rep = coupling_inequality_check(max_width=args.max_width, max_height=args.max_height)
    _emit(args.out, "coupling.csv", rep.csv())
    logging.getLogger("lrcontact").info("%d cases, %d violations", len(rep.cases), len(rep.violations))
    return 0 if rep.passed else 1


def _finish(report) -> int:
    sys.stdout.write(report.verdict_table() + "\n")
    sys.stdout.write(json.dumps(report.aggregates, sort_keys=True, default=str) + "\n")
    return 0 if report.passed else 1


def cmd_pipeline(args) -> int:
    cfg = _config(args, name="pipeline")
    return _finish(certificate_ladder(cfg) if cfg.lambdas else pipeline_end_to_end(cfg))


def cmd_sweep(args) -> int:
    cfg = _config(args, name="sweep", N=500, lambdas=[0.02, 0.2, 1.0, 2.0], horizon=50.0)
    return _finish(survival_sweep(cfg))


def cmd_lemma_suite(args) -> int:
    cfg = _config(args, name="lemma-suite")
    report = lemma_suite(cfg)
    for rec in report.records:
        sys.stdout.write(f"{'PASS' if rec['passed'] else 'FAIL'}  {rec['criterion']:2d} {rec['name']}: {rec['summary']}\n")
    if report.error:
        sys.stdout.write(f"ERROR {report.error}\n")
    return 0 if report.passed else 1


COMMANDS = {
    "sample-graph": cmd_sample_graph,
    "decompose": cmd_decompose,
    "contact-run": cmd_contact_run,
    "renorm": cmd_renorm,
    "stretched": cmd_stretched,
    "couple-check": cmd_couple_check,
    "pipeline": cmd_pipeline,
    "sweep": cmd_sweep,
    "lemma-suite": cmd_lemma_suite,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s %(message)s", stream=sys.stderr)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
