"""Command-line driver.

Subcommands: gen-data, assign, eval, train, suf, bench-mcf, gradcheck.
Exit codes: 0 success, 1 validation failure, 2 IO failure. All randomness in
a command flows from its --seed flag; metric output is CSV on stdout unless
--out redirects it.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import baselines, bench, fileio, index, trainer
from .codes import assign_class_codes, expand_class_codes, topk_hash
from .core import EmbeddingSet, Rng, ValidationError, canonicalize_labels, random_k_sparse_codes
from .index import theoretical_suf
from .metric import LossConfig, finite_diff_check, npairs_loss, random_smooth_batch, triplet_loss

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


def _emit(text: str, out_path) -> None:
    if out_path:
        try:
            Path(out_path).write_text(text)
        except OSError as exc:
            raise fileio.FileIOError(f"cannot write {out_path}: {exc}") from exc
    else:
        sys.stdout.write(text)


def cmd_gen_data(args) -> int:
    dataset = trainer.make_blobs(
        args.classes, args.per_class, args.dim, args.spread, args.seed
    )
    fileio.write_embeddings(f"{args.out_prefix}.qemb", dataset.features)
    fileio.write_labels(f"{args.out_prefix}.labels", dataset.labels)
    return EXIT_OK


def _load_set(emb_path, labels_path) -> EmbeddingSet:
    data = fileio.read_embeddings(emb_path)
    labels = fileio.read_labels(labels_path)
    if labels.shape[0] != data.shape[0]:
        raise ValidationError(
            f"label count {labels.shape[0]} != embedding rows {data.shape[0]}"
        )
    return EmbeddingSet.from_raw(data, labels)


def cmd_assign(args) -> int:
    e = _load_set(args.embeddings, args.labels)
    if args.method == "mcf":
        lam = None if args.lam == "auto" else float(args.lam)
        solution, _ = assign_class_codes(e, args.k, lam=lam, scale=args.scale)
        codes = list(expand_class_codes(solution.codes, e.labels))
    elif args.method == "th":
        codes = baselines.th_codes(e, args.k)
    else:
        codebook = baselines.kmeans(e, e.d, seed=args.seed)
        codes = baselines.vq_codes(e, codebook, args.k)
    fileio.write_codes(args.out, codes)
    return EXIT_OK


def cmd_eval(args) -> int:
    index_set = _load_set(args.index_embeddings, args.index_labels)
    index_codes = fileio.read_codes(args.codes)
    query_set = _load_set(args.query_embeddings, args.query_labels)
    query_codes = fileio.read_codes(args.query_codes)
    if len(index_codes) != index_set.n or len(query_codes) != query_set.n:
        raise ValidationError("code count does not match its embedding file")
    if index_codes[0].d != query_codes[0].d or index_codes[0].k != query_codes[0].k:
        raise ValidationError("index and query codes must share (d, k)")
    topk = sorted(int(v) for v in args.topk.split(","))
    if not topk or topk[0] < 1:
        raise ValidationError(f"bad --topk list: {args.topk}")
    ix = index.build_index(index_codes, index_set.data, index_set.labels)
    self_query = Path(args.index_embeddings).resolve() == Path(
        args.query_embeddings
    ).resolve()
    results = [
        index.query(
            ix,
            query_codes[i],
            query_set.data[i],
            top_m=topk[-1],
            exclude=i if self_query else None,
        )
        for i in range(query_set.n)
    ]
    counts = [r.candidate_count for r in results]
    suf = float("inf") if np.mean(counts) == 0 else ix.n / float(np.mean(counts))
    precisions = [
        (k_, index.precision_at(ix, results, query_set.labels, k_)) for k_ in topk
    ]
    nmi_value = index.nmi(ix) if ix.k == 1 else None
    header, row = index.metrics_row(
        args.label, ix.k, ix.d, suf, precisions, nmi_value
    )
    _emit(header + "\n" + row + "\n", args.out)
    return EXIT_OK


_BOOL_VALUES = {"true": True, "1": True, "false": False, "0": False}


def _config_to_train(cfg: dict[str, str]):
    def take(key, default=None):
        return cfg.pop(key, default)

    try:
        dataset = trainer.make_blobs(
            classes=int(take("classes", "8")),
            per_class=int(take("per_class", "50")),
            input_dim=int(take("input_dim", "16")),
            spread=float(take("spread", "0.05")),
            seed=int(take("data_seed", "1")),
        )
        lam_raw = take("lambda", "auto")
        normalize_raw = str(take("normalize", "true")).lower()
        if normalize_raw not in _BOOL_VALUES:
            raise ValidationError(f"normalize must be true/false, got {normalize_raw!r}")
        train_cfg = trainer.TrainConfig(
            d=int(take("d", "16")),
            k=int(take("k", "1")),
            lam=None if lam_raw == "auto" else float(lam_raw),
            loss_kind=str(take("loss", "npairs")),
            loss_cfg=LossConfig(
                margin_alpha=float(take("margin_alpha", "0.2")),
                npairs_reg_lambda=float(take("npairs_reg_lambda", "0.001")),
                normalize=_BOOL_VALUES[normalize_raw],
            ),
            gamma=float(take("gamma", "1.0")),
            batch_classes=int(take("batch_classes", "8")),
            batch_per_class=int(take("batch_per_class", "2")),
            max_iter=int(take("max_iter", "200")),
            adam=trainer.AdamParams(
                beta1=float(take("beta1", "0.9")),
                beta2=float(take("beta2", "0.999")),
                eps=float(take("adam_eps", "1e-8")),
                learning_rate=float(take("learning_rate", "0.05")),
            ),
            scale=int(take("scale", str(trainer.DEFAULT_SCALE))),
            seed=int(take("seed", "0")),
        )
    except ValueError as exc:
        raise ValidationError(f"bad config value: {exc}") from exc
    if cfg:
        raise ValidationError(f"unknown config keys: {', '.join(sorted(cfg))}")
    return dataset, train_cfg


def cmd_train(args) -> int:
    cfg = fileio.read_config(args.config)
    dataset, train_cfg = _config_to_train(cfg)
    model, history = trainer.train(dataset, train_cfg)
    _emit(trainer.history_to_csv(history), args.history)
    if args.emb_out:
        fileio.write_embeddings(f"{args.emb_out}.qemb", model.embed(dataset.features))
        fileio.write_labels(f"{args.emb_out}.labels", dataset.labels)
    return EXIT_OK


def cmd_suf(args) -> int:
    theory = theoretical_suf(args.d, args.k)
    header = "d,k,suf_theory,nq_fraction,variance_factor"
    row = (
        f"{args.d},{args.k},{theory.suf:.6g},{theory.nq_fraction:.6g},"
        f"{theory.variance_factor:.6g}"
    )
    if args.simulate:
        rng = Rng(args.seed)
        codes = random_k_sparse_codes(rng, args.simulate, args.d, args.k)
        counts = index.collision_counts(codes, codes, subtract_self=True)
        mean_count = float(counts.mean())
        measured = float("inf") if mean_count == 0 else args.simulate / mean_count
        header += ",suf_measured"
        row += f",{measured:.6g}"
    _emit(header + "\n" + row + "\n", args.out)
    return EXIT_OK


def cmd_bench_mcf(args) -> int:
    nc_list = [int(v) for v in args.nc_list.split(",")]
    d_list = [int(v) for v in args.d_list.split(",")]
    engines = ["numba", "python"] if args.engine == "both" else [args.engine]
    points = []
    for engine in engines:
        points.extend(
            bench.bench_mcf(
                nc_list, d_list, repeats=args.repeats, k=args.k, seed=args.seed,
                engine=engine,
            )
        )
    _emit(bench.bench_csv(points), args.out)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    rng = Rng(args.seed)
    lossfn = triplet_loss if args.loss == "triplet" else npairs_loss
    cfg = LossConfig(normalize=(args.loss == "triplet"), npairs_reg_lambda=0.01)
    worst = 0.0
    for _ in range(args.batches):
        batch = random_smooth_batch(rng, args.loss, cfg=cfg)
        worst = max(worst, finite_diff_check(lossfn, batch, cfg, epsilon=args.epsilon))
    sys.stdout.write(f"loss={args.loss} batches={args.batches} max_rel_error={worst:.3g}\n")
    return EXIT_OK if worst <= 1e-3 else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowhash",
        description="k-sparse hash codes, exact flow-based assignment, and a bucketed index",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write synthetic blob embeddings + labels")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--spread", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("assign", help="write a codes file for an embedding set")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--method", choices=("mcf", "th", "vq"), required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--lambda", dest="lam", default="auto",
                   help="uniform collision penalty for mcf; 'auto' derives it from the means")
    p.add_argument("--scale", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("eval", help="build an index, run queries, print the metric row")
    p.add_argument("--index-embeddings", required=True)
    p.add_argument("--index-labels", required=True)
    p.add_argument("--codes", required=True)
    p.add_argument("--query-embeddings", required=True)
    p.add_argument("--query-labels", required=True)
    p.add_argument("--query-codes", required=True)
    p.add_argument("--topk", default="1,4,16")
    p.add_argument("--label", default="eval", help="method column of the CSV row")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train", help="run the alternating trainer from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--history", default=None, help="history CSV path (default stdout)")
    p.add_argument("--emb-out", default=None,
                   help="prefix for trained embeddings of the whole dataset")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("suf", help="theoretical speedup factor, optionally simulated")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--simulate", type=int, default=0, metavar="N",
                   help="also measure over N uniform random codes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_suf)

    p = sub.add_parser("bench-mcf", help="time the assignment solver over a size grid")
    p.add_argument("--nc-list", required=True, help="comma-separated class counts")
    p.add_argument("--d-list", required=True, help="comma-separated code lengths")
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--engine", choices=("auto", "numba", "python", "both"), default="auto")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench_mcf)

    p = sub.add_parser("gradcheck", help="finite-difference check of the loss gradients")
    p.add_argument("--loss", choices=("triplet", "npairs"), required=True)
    p.add_argument("--batches", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except fileio.FileIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
