"""Command-line entry point: precompute, train, predict, evaluate, generate, split."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import DataError

logger = logging.getLogger("trajclusivat")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

BASELINE_KEYS = ("method", "components", "mmm_max_iters", "density_threshold", "similarity_threshold", "netscan_target")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        n = args.threads
    elif os.environ.get("TCV_THREADS"):
        try:
            n = int(os.environ["TCV_THREADS"])
        except ValueError:
            raise UsageError("TCV_THREADS must be an integer")
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise UsageError("thread count must be >= 1")
    return n


def _guard_output(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise UsageError(f"{path} exists; pass --force to overwrite")


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} {p} does not exist")
    return p


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _load_dall(args, net):
    from .road_network import SegmentDistanceMatrix, all_pairs_segment_distances

    if getattr(args, "dall", None):
        dist = SegmentDistanceMatrix.load(_require(args.dall, "distance matrix"), net.ref)
        if dist.size != net.n_edges:
            raise DataError(f"distance matrix is {dist.size}x{dist.size} but the network has {net.n_edges} segments")
        return dist
    logger.warning("no --dall given; computing segment distances for %d segments", net.n_edges)
    return all_pairs_segment_distances(net)


# --- commands --------------------------------------------------------------


def cmd_precompute(args) -> int:
    from .road_network import all_pairs_segment_distances, load_network

    out = Path(args.out)
    _guard_output(out, args.force)
    net = load_network(_require(args.network, "network"))
    dist = all_pairs_segment_distances(net)
    dist.save(out)
    logger.info("wrote %dx%d distance matrix to %s", dist.size, dist.size, out)
    return EXIT_OK


def _effective_config(args) -> tuple[dict, dict]:
    from .pipeline import PipelineConfig

    doc = {}
    if args.config:
        try:
            doc = json.loads(_require(args.config, "config").read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"config {args.config} is not valid JSON: {exc}") from exc
    baseline = {k: doc.pop(k) for k in BASELINE_KEYS if k in doc}
    flag_map = {
        "k_prime": args.k_prime,
        "n": args.n,
        "alpha_stage1": args.alpha,
        "alpha_stage2": args.alpha2,
        "min_t": args.min_t,
        "seed": args.seed,
        "min_len": args.min_len,
        "max_len": args.max_len,
        "k_stage1": args.k,
    }
    doc.update({k: v for k, v in flag_map.items() if v is not None})
    if args.lambda_window is not None:
        doc["lambda_window"] = None if args.lambda_window == "inf" else int(args.lambda_window)
    cfg = PipelineConfig.from_dict(doc)
    for key in BASELINE_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            baseline[key] = v
    baseline.setdefault("method", "traj-clusivat")
    return cfg.to_dict(), baseline


def cmd_train(args) -> int:
    from . import baselines
    from .pipeline import PipelineConfig, save_model, train
    from .road_network import load_network
    from .trajectories import ingest, write_rejection_report
    from .vat import export_image

    out = Path(args.out)
    _guard_output(out, args.force)
    threads = _threads(args)
    cfg_doc, base = _effective_config(args)
    cfg = PipelineConfig.from_dict(cfg_doc)
    net = load_network(_require(args.network, "network"))
    ds, rejected = ingest(_require(args.trajectories, "trajectory file"), net, cfg.min_len, cfg.max_len)
    out.parent.mkdir(parents=True, exist_ok=True)
    if rejected:
        logger.warning("%d trajectories rejected", len(rejected))
        write_rejection_report(rejected, out.with_name(out.stem + ".rejections.csv"))
    _write_json(out.with_name(out.stem + ".config.json"), {**cfg_doc, **base, "threads": threads})
    method = base["method"]
    if method == "traj-clusivat":
        dist = _load_dall(args, net)
        model = train(ds, net, dist, cfg, threads=threads)
        logger.info("trained %d clusters (k=%d)", model.K, model.k_nondirectional)
        if args.emit_ivat:
            export_image(model.diagnostics.ivat_image.entries, args.emit_ivat, "pgm")
    elif method == "global":
        model = baselines.GlobalMarkovModel.train(ds, net.ref)
    elif method == "mmm":
        model = baselines.mmm_train(
            ds, int(base.get("components", 10)), seed=cfg.seed, max_iters=int(base.get("mmm_max_iters", 200))
        )
    elif method == "netscan":
        dist = _load_dall(args, net)
        if "netscan_target" in base:
            model = baselines.netscan_search(ds, net, int(base["netscan_target"]), dist)
        else:
            if "density_threshold" not in base or "similarity_threshold" not in base:
                raise UsageError("netscan needs --density-threshold and --similarity-threshold, or --netscan-target")
            model = baselines.netscan_train(
                ds, net, float(base["density_threshold"]), float(base["similarity_threshold"]), dist
            )
    else:
        raise UsageError(f"unknown method {method!r}")
    save_model(model, out)
    return EXIT_OK


def _load_bound_model(args):
    from .persistence import load_any
    from .road_network import load_network

    model = load_any(_require(args.model, "model"))
    net = load_network(_require(args.network, "network"))
    needs_dist = model.method in ("traj-clusivat", "netscan")
    dist = _load_dall(args, net) if needs_dist else None
    if dist is not None:
        model.bind(dist, net)
    else:
        model.bind(None, net)
    return model, net


def _lambda(args, model):
    if args.lambda_window is None:
        cfg = getattr(model, "config", None)
        return cfg.lambda_window if cfg is not None else 3
    return None if args.lambda_window == "inf" else int(args.lambda_window)


def cmd_predict(args) -> int:
    from .predictor import PredictionRequest, predict
    from .trajectories import read_partials

    out = Path(args.out)
    _guard_output(out, args.force)
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    model, net = _load_bound_model(args)
    lam = _lambda(args, model)
    partials = read_partials(_require(args.partials, "partials file"))
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for p in partials:
            res = predict(model, PredictionRequest(p.segments, args.steps, lam), n_edges=net.n_edges)
            fh.write(json.dumps(res.to_json(p.id)) + "\n")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .evaluation import run_experiment
    from .trajectories import ingest

    out = Path(args.out)
    if (out / "summary.csv").exists() and not args.force:
        raise UsageError(f"{out}/summary.csv exists; pass --force to overwrite")
    model, net = _load_bound_model(args)
    lam = _lambda(args, model)
    test, rejected = ingest(_require(args.test, "test file"), net, args.min_len or 2, args.max_len or 10**9)
    if rejected:
        logger.warning("%d test trajectories rejected", len(rejected))
    out.mkdir(parents=True, exist_ok=True)
    _write_json(
        out / "effective_config.json",
        {"model": str(args.model), "test": str(args.test), "mmax": args.mmax, "lambda_window": lam, "method": model.method},
    )
    run_experiment(model, test.trajectories, net, args.mmax, out, lambda_window=lam, method=model.method)
    return EXIT_OK


def cmd_generate(args) -> int:
    from .synthgen import GeneratorSpec, write_dataset

    out = Path(args.out)
    if (out / "trajectories.jsonl").exists() and not args.force:
        raise UsageError(f"{out} already holds a dataset; pass --force to overwrite")
    spec = GeneratorSpec.load(_require(args.spec, "generator spec"))
    write_dataset(spec, out)
    _write_json(out / "effective_config.json", spec.to_dict())
    return EXIT_OK


def cmd_split(args) -> int:
    from .road_network import load_network
    from .trajectories import ingest, split_train_test, write_trajectories

    train_out, test_out = Path(args.train_out), Path(args.test_out)
    _guard_output(train_out, args.force)
    _guard_output(test_out, args.force)
    net = load_network(_require(args.network, "network"))
    ds, _ = ingest(_require(args.trajectories, "trajectory file"), net, args.min_len or 5, args.max_len or 200)
    train, test = split_train_test(ds, args.fraction, args.seed)
    write_trajectories(train.trajectories, train_out)
    write_trajectories(test.trajectories, test_out)
    return EXIT_OK


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="trajclusivat", description="Trajectory clustering and route prediction")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (env TCV_THREADS)")

    sp = sub.add_parser("precompute", help="segment distance matrix")
    sp.add_argument("--network", required=True)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_precompute)

    sp = sub.add_parser("train", help="train a model")
    sp.add_argument("--network", required=True)
    sp.add_argument("--trajectories", required=True)
    sp.add_argument("--dall")
    sp.add_argument("--config")
    sp.add_argument("--out", required=True)
    sp.add_argument("--method", choices=["traj-clusivat", "global", "mmm", "netscan"])
    sp.add_argument("--emit-ivat", help="write the stage-1 iVAT image as PGM")
    sp.add_argument("--k-prime", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--alpha2", type=float)
    sp.add_argument("--k", type=int, help="cut the stage-1 MST into exactly k clusters")
    sp.add_argument("--min-t", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--min-len", type=int)
    sp.add_argument("--max-len", type=int)
    sp.add_argument("--lambda", dest="lambda_window")
    sp.add_argument("--components", type=int)
    sp.add_argument("--mmm-max-iters", type=int)
    sp.add_argument("--density-threshold", type=float)
    sp.add_argument("--similarity-threshold", type=float)
    sp.add_argument("--netscan-target", type=int)
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("predict", help="m-step predictions for partial trajectories")
    sp.add_argument("--model", required=True)
    sp.add_argument("--network", required=True)
    sp.add_argument("--dall")
    sp.add_argument("--partials", required=True)
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--lambda", dest="lambda_window", help="window length or 'inf'")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("evaluate", help="score a model on held-out trajectories")
    sp.add_argument("--model", required=True)
    sp.add_argument("--network", required=True)
    sp.add_argument("--dall")
    sp.add_argument("--test", required=True)
    sp.add_argument("--mmax", type=int, required=True)
    sp.add_argument("--lambda", dest="lambda_window")
    sp.add_argument("--min-len", type=int)
    sp.add_argument("--max-len", type=int)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("generate", help="synthetic grid network and trajectories")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("split", help="train/test split of a trajectory file")
    sp.add_argument("--network", required=True)
    sp.add_argument("--trajectories", required=True)
    sp.add_argument("--fraction", type=float, default=0.6)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--min-len", type=int)
    sp.add_argument("--max-len", type=int)
    sp.add_argument("--train-out", required=True)
    sp.add_argument("--test-out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_split)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        logger.debug("internal error", exc_info=True)
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
