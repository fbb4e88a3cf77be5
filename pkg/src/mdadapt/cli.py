"""Command-line entry point.

Subcommands: generate (synthetic corpus), train (one preset), eval (pooled
metrics or the genre-to-genre matrix), benchmark (the full ablation ladder
across seeds). Exit codes: 0 success, 2 usage/config error, 3 runtime or
numeric error. MDADAPT_OUT_DIR sets the default output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import os
import statistics
import sys
import traceback

import numpy as np

from . import config as configio
from . import datasets, metrics, trainer
from .encoder import load_params
from .exceptions import ConfigError, MdadaptError

ENV_OUT_DIR = "MDADAPT_OUT_DIR"


def _out_dir(args) -> str:
    path = args.out_dir or os.environ.get(ENV_OUT_DIR) or "mdadapt_out"
    os.makedirs(path, exist_ok=True)
    return path


def _file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def cmd_generate(args) -> str:
    if args.spec:
        spec = configio.load_corpus_spec(args.spec)
    elif args.source_for:
        spec = datasets.source_spec_for(datasets.load_corpus(args.source_for).spec)
    else:
        spec = datasets.benchmark_spec()
    corpus = datasets.generate(spec)
    datasets.save_corpus(corpus, args.out)
    print(f"wrote {args.out} ({len(corpus.utterances)} utterances)")
    print(f"sha256 {_file_sha256(args.out)}")
    return args.out


def _train_config_from_args(args) -> trainer.TrainConfig:
    config = configio.load_train_config(args.config) if args.config else trainer.TrainConfig()
    overrides = {}
    for name in (
        "steps",
        "batch_size",
        "learning_rate",
        "momentum",
        "bank_capacity",
        "checkpoint_every",
        "eval_every",
    ):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    loss = config.loss
    loss_overrides = {}
    if args.tau is not None:
        loss_overrides["tau"] = args.tau
    if args.coral_weight is not None:
        loss_overrides["coral_weight"] = args.coral_weight
    if loss_overrides:
        loss = dataclasses.replace(loss, **loss_overrides)
    preset_loss = trainer.preset_loss_config(args.preset, loss)
    return dataclasses.replace(config, loss=preset_loss, **overrides)


def _preflight(config: trainer.TrainConfig, corpus: datasets.Corpus) -> None:
    """Reject configs that violate batching preconditions before training."""
    pool = datasets.combine_short(corpus.split("dev"), config.min_frames)
    try:
        from .batching import build_batch

        build_batch(
            pool,
            batch_size=config.batch_size,
            min_per_domain=config.min_per_domain,
            min_len=config.view_min_len,
            rng=np.random.default_rng(0),
            gain_range=(config.gain_low, config.gain_high),
            noise_scale=config.augment_noise_scale,
        )
    except MdadaptError as exc:
        raise ConfigError(f"pre-flight validation failed: {exc}") from exc


def _warm_start_params(config: trainer.TrainConfig, source: datasets.Corpus):
    warm_config = dataclasses.replace(
        config,
        steps=trainer.DEFAULT_WARM_STEPS,
        batch_size=trainer.DEFAULT_WARM_SPEAKERS,
    )
    return trainer.pretrain_supervised(warm_config, source)


def cmd_train(args) -> str:
    corpus = datasets.load_corpus(args.corpus)
    config = _train_config_from_args(args)
    _preflight(config, corpus)
    init = None
    if args.init_checkpoint and args.warm_start_corpus:
        raise ConfigError("give either --init-checkpoint or --warm-start-corpus, not both")
    if args.init_checkpoint:
        init = load_params(args.init_checkpoint)
    elif args.warm_start_corpus:
        init = _warm_start_params(config, datasets.load_corpus(args.warm_start_corpus))
    out = _out_dir(args)
    params, log = trainer.run(config, corpus, out_dir=out, init=init)
    ckpt = os.path.join(out, "final.ckpt")
    log_path = os.path.join(out, "train_log.csv")
    log.save_csv(log_path)
    manifest = configio.RunManifest(
        config={"preset": args.preset, **configio.config_snapshot(config)},
        seed=config.rng_seed,
        corpus_header_hash=datasets.header_hash(corpus),
        checkpoint_paths=[ckpt],
        metric_paths=[log_path],
    )
    manifest_path = os.path.join(out, "manifest.json")
    manifest.write(manifest_path)
    print(f"wrote {ckpt}")
    print(f"wrote {log_path}")
    print(f"wrote {manifest_path}")
    return out


def cmd_eval(args) -> str:
    corpus = datasets.load_corpus(args.corpus)
    params = load_params(args.checkpoint)
    out = _out_dir(args)
    build = metrics.build_trials(
        corpus,
        params,
        enroll_frames=args.enroll_frames,
        mode=args.mode,
        num_domains=args.num_domains,
    )
    records = metrics.score_trials(build.trials)
    eer_value = metrics.eer(records)
    dcf_value = metrics.min_dcf(records, p_target=args.p_target)

    paths = []

    def _write(name: str, text: str) -> None:
        path = os.path.join(out, name)
        with open(path, "w", encoding="ascii") as fh:
            fh.write(text)
        paths.append(path)
        print(f"wrote {path}")

    _write("trials.csv", metrics.trials_to_csv(build.trials))
    _write("metrics.csv", metrics.pooled_metrics_csv(eer_value, dcf_value))
    matrix = None
    if args.mode == "matrix":
        matrix = metrics.domain_matrix(build.trials, build.domains)
        _write("matrix.csv", matrix.to_csv())
    _write("summary.json", metrics.summary_json(eer_value, dcf_value, matrix))

    # 2-D projection of every eval-split utterance embedding
    from .encoder import Segment, encode

    eval_utts = corpus.split("eval")
    if len(eval_utts) >= 3:
        embeddings = np.array([
            encode(params, Segment(frames=u.frames, source_utterance_id=u.id,
                                   domain_id=u.domain_id))
            for u in eval_utts
        ])
        points = metrics.project_2d(
            embeddings,
            [u.speaker_id for u in eval_utts],
            [u.domain_id for u in eval_utts],
        )
        _write("projection.csv", metrics.projection_csv(points))

    print(f"eer_percent {eer_value!r}")
    print(f"min_dcf {dcf_value!r}")
    return out


def cmd_benchmark(args) -> str:
    """Train every preset across shared seeds and tabulate the ladder.

    Each seed's run starts from the same warm-start encoder, pretrained on a
    single-domain source corpus derived from the target corpus header
    (matching the adapt-a-pretrained-model protocol); --no-warm-start
    switches to random initialization.
    """
    corpus = datasets.load_corpus(args.corpus)
    base = configio.load_train_config(args.config) if args.config else trainer.TrainConfig()
    if args.steps is not None:
        base = dataclasses.replace(base, steps=args.steps)
    seeds = [args.seed_base + i for i in range(args.num_seeds)]
    out = _out_dir(args)

    warm: dict[int, object] = {}
    if not args.no_warm_start:
        source = datasets.generate(datasets.source_spec_for(corpus.spec))
        for seed in seeds:
            warm[seed] = _warm_start_params(
                dataclasses.replace(base, rng_seed=seed), source
            )

    rows = []  # (preset, seed, eer, min_dcf)
    for preset in sorted(trainer.PRESETS):
        loss = trainer.preset_loss_config(preset, base.loss)
        for seed in seeds:
            config = dataclasses.replace(base, loss=loss, rng_seed=seed)
            _preflight(config, corpus)
            params, _ = trainer.run(config, corpus, init=warm.get(seed))
            build = metrics.build_trials(
                corpus, params, enroll_frames=args.enroll_frames, mode="pooled"
            )
            records = metrics.score_trials(build.trials)
            rows.append(
                (preset, seed, metrics.eer(records), metrics.min_dcf(records))
            )
            print(f"{preset} seed={seed} eer={rows[-1][2]:.3f}% min_dcf={rows[-1][3]:.4f}")

    runs_path = os.path.join(out, "benchmark_runs.csv")
    with open(runs_path, "w", encoding="ascii") as fh:
        fh.write("preset,seed,eer_percent,min_dcf\n")
        for preset, seed, e, d in rows:
            fh.write(f"{preset},{seed},{e!r},{d!r}\n")

    medians = {}
    for preset in sorted(trainer.PRESETS):
        eers = [e for p, _, e, _ in rows if p == preset]
        dcfs = [d for p, _, _, d in rows if p == preset]
        medians[preset] = (statistics.median(eers), statistics.median(dcfs))
    improvement = (
        medians["ssl_sd"][0] - medians["full_md"][0]
    ) / medians["ssl_sd"][0]

    summary_path = os.path.join(out, "benchmark_summary.csv")
    with open(summary_path, "w", encoding="ascii") as fh:
        fh.write("preset,median_eer_percent,median_min_dcf\n")
        for preset, (e, d) in medians.items():
            fh.write(f"{preset},{e!r},{d!r}\n")
        fh.write(f"relative_improvement_full_md_vs_ssl_sd,{improvement!r},\n")
    print(f"wrote {runs_path}")
    print(f"wrote {summary_path}")
    print(f"relative improvement full_md vs ssl_sd: {improvement:.4f}")
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdadapt",
        description="Multi-domain self-supervised embedding adaptation on synthetic benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic corpus")
    p.add_argument("--spec", help="corpus spec INI file (default: the benchmark spec)")
    p.add_argument(
        "--source-for",
        metavar="CORPUS",
        help="derive a single-domain source-corpus spec from this corpus file",
    )
    p.add_argument("--out", required=True, help="output corpus file")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="run one adaptation preset")
    p.add_argument("--corpus", required=True)
    p.add_argument("--preset", required=True, choices=sorted(trainer.PRESETS))
    p.add_argument("--config", help="train config INI file (flags override it)")
    p.add_argument("--out-dir")
    p.add_argument("--init-checkpoint", dest="init_checkpoint", help="start from this encoder")
    p.add_argument(
        "--warm-start-corpus",
        dest="warm_start_corpus",
        help="pretrain on this source corpus before adapting",
    )
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--momentum", type=float)
    p.add_argument("--bank-capacity", type=int, dest="bank_capacity")
    p.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    p.add_argument("--eval-every", type=int, dest="eval_every")
    p.add_argument("--seed", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--coral-weight", type=float, dest="coral_weight")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the corpus eval split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=metrics.TRIAL_MODES, default="pooled")
    p.add_argument("--out-dir")
    p.add_argument("--enroll-frames", type=int, default=80, dest="enroll_frames")
    p.add_argument("--num-domains", type=int, default=6, dest="num_domains")
    p.add_argument("--p-target", type=float, default=0.05, dest="p_target")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("benchmark", help="train and evaluate every preset across seeds")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", help="base train config INI file")
    p.add_argument("--out-dir")
    p.add_argument("--steps", type=int)
    p.add_argument("--num-seeds", type=int, default=5, dest="num_seeds")
    p.add_argument("--seed-base", type=int, default=0, dest="seed_base")
    p.add_argument("--enroll-frames", type=int, default=80, dest="enroll_frames")
    p.add_argument(
        "--no-warm-start",
        action="store_true",
        dest="no_warm_start",
        help="adapt from random initialization instead of the pretrained source encoder",
    )
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MdadaptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception:
        traceback.print_exc()
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
