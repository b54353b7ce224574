"""Command-line pipeline: each subcommand runs one file-composed stage.

Stages chain through files so a full run is a sequence of invocations:
simulate -> sanitize -> denoise -> build-map -> train -> predict ->
hypothesize -> track -> eval.  ``sweep`` runs the whole chain over the
grid-size x window-size x speed table.  Failures print one
machine-readable line (``csiloc-error: <kind>: <detail>``) and exit
nonzero.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .hypothesis_gen import NullBeliefError
from .walk_filter import AllHypothesesRejectedError

log = logging.getLogger(__name__)


def _add_config_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--config",
        metavar="FILE",
        help="JSON settings file (defaults used when omitted)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csiloc",
        description="Indoor localization from wireless channel phase fingerprints.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize field, reference captures, and a walk")
    _add_config_arg(p)
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("sanitize", help="detrend and normalize raw phase captures")
    _add_config_arg(p)
    p.add_argument("--in", dest="in_path", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="FILE")

    p = sub.add_parser("denoise", help="reject per-location outlier observations")
    _add_config_arg(p)
    p.add_argument("--in", dest="in_path", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--sigma-bound", type=float, default=None, metavar="S")

    p = sub.add_parser("build-map", help="bin observations into time-ordered fingerprint maps")
    _add_config_arg(p)
    p.add_argument("--in", dest="in_path", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("train", help="fit the window classifier on a map dataset")
    _add_config_arg(p)
    p.add_argument("--map-dir", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--null", metavar="FILE", help="denoised out-of-grid captures")
    p.add_argument("--report", metavar="FILE", help="write a training report JSON")

    p = sub.add_parser("predict", help="emit per-update belief vectors for a walk")
    _add_config_arg(p)
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--observations", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="FILE")

    p = sub.add_parser("hypothesize", help="expand beliefs into trajectory hypotheses")
    _add_config_arg(p)
    p.add_argument("--beliefs", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="FILE")

    p = sub.add_parser("track", help="filter every hypothesis and select the best")
    _add_config_arg(p)
    p.add_argument("--hypotheses", required=True, metavar="FILE")
    p.add_argument("--trajectories", required=True, metavar="FILE")
    p.add_argument("--rejections", required=True, metavar="FILE")
    p.add_argument("--selected", required=True, metavar="FILE")

    p = sub.add_parser("eval", help="score beliefs and the selected trajectory")
    _add_config_arg(p)
    p.add_argument("--beliefs", required=True, metavar="FILE")
    p.add_argument("--selected", required=True, metavar="FILE")
    p.add_argument("--truth", required=True, metavar="FILE")
    p.add_argument("--report", required=True, metavar="FILE")
    p.add_argument("--cdf", required=True, metavar="FILE")
    p.add_argument("--states", metavar="FILE", help="full ground-truth states")

    p = sub.add_parser("sweep", help="run the 12-row parameter study")
    _add_config_arg(p)
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--work-dir", metavar="DIR")

    return parser


def _load_config(args: argparse.Namespace) -> pipeline.PipelineConfig:
    if getattr(args, "config", None):
        return pipeline.PipelineConfig.from_file(args.config)
    return pipeline.PipelineConfig()


def _dispatch(args: argparse.Namespace) -> None:
    cfg = _load_config(args)
    cmd = args.command
    if cmd == "simulate":
        paths = pipeline.stage_simulate(cfg, args.out)
        log.info("simulate: wrote %s", ", ".join(str(p) for p in paths.values()))
    elif cmd == "sanitize":
        n = pipeline.stage_sanitize(args.in_path, args.out)
        log.info("sanitize: %d observations", n)
    elif cmd == "denoise":
        bound = args.sigma_bound if args.sigma_bound is not None else cfg.denoise_sigma_bound
        kept, total = pipeline.stage_denoise(args.in_path, args.out, sigma_bound=bound)
        log.info("denoise: kept %d/%d (%.1f%%)", kept, total, 100 * kept / max(total, 1))
    elif cmd == "build-map":
        seq = pipeline.stage_build_map(args.in_path, args.out, cfg.grid(), cfg.maps_m)
        log.info("build-map: %d maps", len(seq.maps))
    elif cmd == "train":
        _, report = pipeline.stage_train(
            cfg, args.map_dir, args.out, null_path=args.null, report_path=args.report
        )
        log.info("train: final loss %.4f, accuracy %.3f",
                 report.epoch_losses[-1], report.final_accuracy)
    elif cmd == "predict":
        beliefs = pipeline.stage_predict(cfg, args.model, args.observations, args.out)
        log.info("predict: %d beliefs", len(beliefs))
    elif cmd == "hypothesize":
        hyps = pipeline.stage_hypothesize(cfg, args.beliefs, args.out)
        log.info("hypothesize: %d hypotheses", len(hyps))
    elif cmd == "track":
        results, selected = pipeline.stage_track(
            cfg, args.hypotheses, args.trajectories, args.rejections, args.selected
        )
        log.info("track: %d/%d accepted, selected %d",
                 sum(r.accepted for r in results), len(results), selected.hypothesis_id)
    elif cmd == "eval":
        report = pipeline.stage_eval(
            cfg, args.beliefs, args.selected, args.truth,
            args.report, args.cdf, states_path=args.states,
        )
        log.info("eval: mean error %.3f m -> %.3f m (%.0f%% improvement)",
                 report.mean_error_before, report.mean_error_after,
                 100 * report.improvement)
    elif cmd == "sweep":
        rows = pipeline.run_sweep(cfg, args.out, work_dir=args.work_dir)
        log.info("sweep: %d rows -> %s", len(rows), args.out)
    else:  # pragma: no cover - argparse enforces the choices
        raise ValueError(f"unknown command {cmd!r}")


_EXPECTED_ERRORS = (
    ValueError,
    OSError,
    KeyError,
    NullBeliefError,
    AllHypothesesRejectedError,
)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        _dispatch(args)
    except _EXPECTED_ERRORS as e:
        print(f"csiloc-error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
