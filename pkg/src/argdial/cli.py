"""Command-line entry points: training, evaluation, few-shot runs, chat, serve."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .argsim import ArgSimConfig, ArgSimModel, StsTrainConfig, load_sts, train_sts
from .dialogue import MoveError, bundled_graph_path, load_graph, load_templates
from .evaluation import (
    GoldArgumentOracle,
    GoldIntentOracle,
    evaluate_pipeline,
    intent_counts,
    load_user_study,
    macro_f1,
    spearman,
    topic_split,
)
from .intent import (
    IntentConfig,
    IntentModel,
    IntentTrainConfig,
    SPEECH_ACTS,
    load_intent_csv,
    run_few_shot_protocol,
    train_two_stage,
)
from .sessions import DialogueService, KeywordNlu, ModelNlu, SessionStore
from .synthetic import make_intent_dataset, make_sts_dataset
from .text import build_vocab, load_embeddings


def _add_argsim_dims(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--n-layers", type=int, default=2)
    p.add_argument("--n-heads", type=int, default=4)
    p.add_argument("--d-ff", type=int, default=128)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--word-dim", type=int, default=300)
    p.add_argument("--lstm-hidden", type=int, default=512)
    p.add_argument("--d-w", type=int, default=600)
    p.add_argument("--r", type=int, default=5)
    p.add_argument("--embed-dim", type=int, default=256)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)


def _add_intent_dims(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--n-layers", type=int, default=2)
    p.add_argument("--n-heads", type=int, default=4)
    p.add_argument("--d-ff", type=int, default=128)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--lstm-hidden", type=int, default=512)
    p.add_argument("--d-w", type=int, default=600)
    p.add_argument("--r", type=int, default=5)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)


def _argsim_config(args) -> ArgSimConfig:
    return ArgSimConfig(
        d_model=args.d_model, n_layers=args.n_layers, n_heads=args.n_heads, d_ff=args.d_ff,
        max_len=args.max_len, word_dim=args.word_dim, lstm_hidden=args.lstm_hidden,
        d_w=args.d_w, r=args.r, embed_dim=args.embed_dim, dropout=args.dropout, seed=args.seed,
    )


def _intent_config(args) -> IntentConfig:
    return IntentConfig(
        d_model=args.d_model, n_layers=args.n_layers, n_heads=args.n_heads, d_ff=args.d_ff,
        max_len=args.max_len, lstm_hidden=args.lstm_hidden, d_w=args.d_w, r=args.r,
        dropout=args.dropout, seed=args.seed,
    )


def _load_pairs(args):
    if args.sts:
        return load_sts(args.sts)
    return make_sts_dataset(args.synthetic, seed=args.data_seed)


def _load_intent_data(args) -> list[tuple[str, str]]:
    if getattr(args, "data", None):
        return load_intent_csv(args.data)
    if getattr(args, "jsonl", None):
        return [(r.text, r.intent) for r in load_user_study(args.jsonl)]
    return make_intent_dataset(args.synthetic, seed=args.data_seed)


def cmd_train_argsim(args) -> int:
    pairs = _load_pairs(args)
    vocab = build_vocab([p.sentence_1 for p in pairs] + [p.sentence_2 for p in pairs])
    embedding = None
    if args.embeddings:
        embedding = load_embeddings(
            args.embeddings, vocab, np.random.default_rng(args.seed), expected_dim=args.word_dim
        )
        print(f"embedding coverage: {embedding.coverage:.2f}")
    model = ArgSimModel(vocab, _argsim_config(args), embedding=embedding)
    report = train_sts(
        model, pairs,
        StsTrainConfig(lr=args.lr, batch_size=args.batch_size, epochs=args.epochs, seed=args.seed),
    )
    for i, loss in enumerate(report.epoch_losses, 1):
        print(f"epoch {i}: loss {loss:.6f}")
    model.save(args.out)
    print(f"saved frozen similarity model to {args.out}")
    return 0


def cmd_eval_argsim(args) -> int:
    model = ArgSimModel.load(args.model)
    pairs = _load_pairs(args)
    predicted = [model.score_pair(p.sentence_1, p.sentence_2) for p in pairs]
    golds = [p.score for p in pairs]
    rho = spearman(predicted, golds)
    print(f"pairs: {len(pairs)}")
    print(f"spearman: {rho:.4f}  (x100: {rho * 100:.1f})")
    return 0


def cmd_train_intent(args) -> int:
    data = _load_intent_data(args)
    argsim = ArgSimModel.load(args.argsim)
    vocab = build_vocab([text for text, _ in data])
    model = IntentModel(vocab, SPEECH_ACTS, argsim, _intent_config(args))
    report = train_two_stage(
        model, data,
        IntentTrainConfig(
            lr_stage1=args.lr1, lr_stage2=args.lr2, batch_size=args.batch_size,
            stage1_epochs=args.stage1_epochs, stage2_epochs=args.stage2_epochs,
            k=args.k, seed=args.seed,
        ),
    )
    print(f"stage 1 losses: {[round(v, 4) for v in report.stage1_losses]}")
    print(f"stage 2 losses: {[round(v, 4) for v in report.stage2_losses]}")
    frozen_ok = report.theta3_hash_start == report.theta3_hash_after_stage1
    print(f"encoder hash unchanged across stage 1: {frozen_ok}")
    model.save(args.out)
    print(f"saved intent model to {args.out}")
    return 0


def cmd_eval_intent(args) -> int:
    argsim = ArgSimModel.load(args.argsim)
    model = IntentModel.load(args.model, argsim)
    data = _load_intent_data(args)
    predictions = [model.predict(text) for text, _ in data]
    golds = [label for _, label in data]
    acc = sum(p == g for p, g in zip(predictions, golds)) / len(golds)
    print(f"examples: {len(golds)}")
    print(f"accuracy: {acc:.4f}")
    print(f"macro-F1: {macro_f1(predictions, golds):.4f}")
    return 0


def cmd_eval_pipeline(args) -> int:
    records = load_user_study(args.jsonl)
    if args.test_topic:
        _, records = topic_split(records, args.test_topic)
    if args.group != "all":
        records = [r for r in records if r.group == args.group]
    _, graph = load_graph(args.graph or bundled_graph_path())
    if args.oracle:
        intent_model = GoldIntentOracle(records)
        argsim_model = GoldArgumentOracle(records, graph)
    else:
        if not args.intent or not args.argsim:
            print("eval-pipeline: need --intent and --argsim checkpoints (or --oracle)", file=sys.stderr)
            return 1
        argsim_model = ArgSimModel.load(args.argsim)
        intent_model = IntentModel.load(args.intent, argsim_model)
    report = evaluate_pipeline(
        intent_model, argsim_model, graph, records,
        split={"test_topic": args.test_topic, "group": args.group},
    )
    print(report.to_json())
    return 0


def cmd_few_shot(args) -> int:
    train_data = _load_intent_data(args)
    if args.test_data:
        test_data = load_intent_csv(args.test_data)
    elif getattr(args, "data", None) or getattr(args, "jsonl", None):
        print("few-shot: --test-data is required with --data/--jsonl", file=sys.stderr)
        return 1
    else:
        test_data = make_intent_dataset(args.synthetic, seed=args.data_seed + 1)

    if args.argsim:
        argsim = ArgSimModel.load(args.argsim)
    else:
        # feature extractor without similarity pre-training: frozen at init
        vocab = build_vocab([t for t, _ in train_data + test_data])
        argsim = ArgSimModel(
            vocab,
            ArgSimConfig(
                d_model=args.d_model, n_layers=args.n_layers, n_heads=args.n_heads,
                d_ff=args.d_ff, max_len=args.max_len, word_dim=16,
                lstm_hidden=max(4, args.lstm_hidden // 2), d_w=args.d_w, r=args.r,
                embed_dim=16, dropout=args.dropout, seed=args.seed,
            ),
        )
        argsim.freeze()

    vocab = build_vocab([t for t, _ in train_data + test_data])
    config = IntentConfig(
        d_model=args.d_model, n_layers=args.n_layers, n_heads=args.n_heads, d_ff=args.d_ff,
        max_len=args.max_len, lstm_hidden=args.lstm_hidden, d_w=args.d_w, r=args.r,
        dropout=args.dropout,
    )
    train_config = IntentTrainConfig(
        lr_stage1=args.lr1, lr_stage2=args.lr2, batch_size=args.batch_size,
        stage1_epochs=args.stage1_epochs, stage2_epochs=args.stage2_epochs,
    )

    def factory(seed: int) -> IntentModel:
        cfg_dict = {**config.__dict__, "seed": seed}
        return IntentModel(vocab, SPEECH_ACTS, argsim, IntentConfig(**cfg_dict))

    results = {}
    for k in args.k:
        result = run_few_shot_protocol(
            train_data, test_data, factory, k=k, seeds=args.seeds, config=train_config
        )
        results[k] = result
        print(f"k={k}: {result.cell()}  per-seed: {[round(a, 3) for a in result.per_seed_accuracy]}")

    header = " | ".join(f"{k}-shot" for k in args.k)
    cells = " | ".join(results[k].cell() for k in args.k)
    if args.full:
        full = run_few_shot_protocol(
            train_data, test_data, factory, k=len(train_data), seeds=1, config=train_config
        )
        header += " | Full"
        cells += f" | {full.mean_x100:.1f}"
    print(f"| Model | {header} |")
    print(f"| two-stage classifier | {cells} |")
    return 0


def _build_service(args) -> DialogueService:
    graph_path = args.graph or os.environ.get("ARGDIAL_GRAPH") or bundled_graph_path()
    topic, graph = load_graph(graph_path)
    templates = load_templates(args.templates or os.environ.get("ARGDIAL_TEMPLATES"))
    if args.nlu == "model":
        argsim_path = args.argsim or os.environ.get("ARGDIAL_ARGSIM_CKPT")
        intent_path = args.intent or os.environ.get("ARGDIAL_INTENT_CKPT")
        if not argsim_path or not intent_path:
            raise SystemExit("model NLU needs --argsim and --intent checkpoints (or env vars)")
        argsim = ArgSimModel.load(argsim_path)
        nlu = ModelNlu(IntentModel.load(intent_path, argsim), argsim)
    else:
        nlu = KeywordNlu()
    data_dir = args.data_dir or os.environ.get("ARGDIAL_DATA_DIR")
    store = SessionStore(graph, topic, data_dir=data_dir)
    return DialogueService(
        store, nlu, templates, confidence_threshold=args.threshold, seed=args.seed
    )


def cmd_chat(args) -> int:
    service = _build_service(args)
    session, opening = service.create_session()
    print(f"topic: {service.store.topic}")
    print(f"system: {opening}")
    while True:
        try:
            text = input("you: ").strip()
        except EOFError:
            print()
            return 0
        if not text:
            continue
        try:
            outcome = service.handle_utterance(session.id, text)
        except MoveError as err:
            print(f"system [{err.code}]: {err}")
            continue
        print(f"system: {outcome.response_text}")
        print(f"        (intent {outcome.intent} @ {outcome.confidence:.2f}, stance {outcome.stance:.2f})")
        if outcome.state.terminated:
            return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    service = _build_service(args)
    app = create_app(service)
    static_dir = args.static_dir or os.environ.get("ARGDIAL_STATIC_DIR")
    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    bind = os.environ.get("ARGDIAL_BIND", "")
    host = args.host or (bind.rsplit(":", 1)[0] if ":" in bind else bind) or "127.0.0.1"
    port = args.port if args.port is not None else int(bind.rsplit(":", 1)[1]) if ":" in bind else 8000
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="argdial", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-argsim", help="train the sentence-similarity model")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--sts", help="tab-separated similarity pairs")
    src.add_argument("--synthetic", type=int, metavar="N", help="generate N synthetic pairs")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--embeddings", help="word2vec text file for the static branch")
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=2e-5)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--epochs", type=int, default=8)
    _add_argsim_dims(p)
    p.set_defaults(func=cmd_train_argsim)

    p = sub.add_parser("eval-argsim", help="Spearman of predicted cosine vs gold scores")
    p.add_argument("--model", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--sts")
    src.add_argument("--synthetic", type=int, metavar="N")
    p.add_argument("--data-seed", type=int, default=1)
    p.set_defaults(func=cmd_eval_argsim)

    p = sub.add_parser("train-intent", help="two-stage intent-classifier training")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="CSV with header text,category")
    src.add_argument("--jsonl", help="user-study JSONL")
    src.add_argument("--synthetic", type=int, metavar="N", help="N examples per intent")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--argsim", required=True, help="frozen similarity checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--lr1", type=float, default=1e-4)
    p.add_argument("--lr2", type=float, default=2e-5)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--stage1-epochs", type=int, default=4)
    p.add_argument("--stage2-epochs", type=int, default=None)
    p.add_argument("--k", type=int, default=None, help="few-shot size driving the epoch schedule")
    _add_intent_dims(p)
    p.set_defaults(func=cmd_train_intent)

    p = sub.add_parser("eval-intent", help="accuracy and macro-F1 of an intent model")
    p.add_argument("--model", required=True)
    p.add_argument("--argsim", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data")
    src.add_argument("--jsonl")
    src.add_argument("--synthetic", type=int, metavar="N")
    p.add_argument("--data-seed", type=int, default=1)
    p.set_defaults(func=cmd_eval_intent)

    p = sub.add_parser("eval-pipeline", help="complete-pipeline evaluation over a user study")
    p.add_argument("--jsonl", required=True)
    p.add_argument("--graph")
    p.add_argument("--test-topic", default=None)
    p.add_argument("--group", default="all", choices=("all", "native", "non_native", "unspecified"))
    p.add_argument("--oracle", action="store_true", help="replay gold annotations instead of models")
    p.add_argument("--intent")
    p.add_argument("--argsim")
    p.set_defaults(func=cmd_eval_pipeline)

    p = sub.add_parser("few-shot", help="k-shot protocol: mean±std accuracy over seeds")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data")
    src.add_argument("--synthetic", type=int, metavar="N", help="N examples per intent")
    p.add_argument("--test-data")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--k", type=int, nargs="+", default=[10, 20, 30])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--full", action="store_true", help="also train on the full data")
    p.add_argument("--argsim", help="frozen similarity checkpoint (default: fresh frozen)")
    p.add_argument("--lr1", type=float, default=1e-4)
    p.add_argument("--lr2", type=float, default=2e-5)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--stage1-epochs", type=int, default=4)
    p.add_argument("--stage2-epochs", type=int, default=None)
    _add_intent_dims(p)
    p.set_defaults(func=cmd_few_shot)

    for name, fn in (("chat", cmd_chat), ("serve", cmd_serve)):
        p = sub.add_parser(name, help=f"{name} over the dialogue pipeline")
        p.add_argument("--graph")
        p.add_argument("--templates")
        p.add_argument("--nlu", choices=("keyword", "model"), default="keyword")
        p.add_argument("--intent")
        p.add_argument("--argsim")
        p.add_argument("--data-dir")
        p.add_argument("--threshold", type=float, default=0.0)
        p.add_argument("--seed", type=int, default=0)
        if name == "serve":
            p.add_argument("--host", default=None)
            p.add_argument("--port", type=int, default=None)
            p.add_argument("--static-dir")
        p.set_defaults(func=fn)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
