"""One test per acceptance criterion; each prints a PASS/FAIL line.

Run with: pytest tests/test_acceptance.py -v -s
"""

import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np
import pytest

from argdial import tensor as T
from argdial.argsim import ArgSimConfig, ArgSimModel, StsTrainConfig, nearest_argument, train_sts
from argdial.dialogue import (
    MoveError,
    SpeechAct,
    apply_move,
    bundled_graph_path,
    compute_stance,
    initial_state,
    load_graph,
    load_templates,
    render_response,
)
from argdial.encoders import BiLstm, InnerAttention, TransformerConfig, TransformerEncoder
from argdial.evaluation import accuracy, macro_f1, spearman
from argdial.intent import (
    IntentConfig,
    IntentModel,
    IntentTrainConfig,
    SPEECH_ACTS,
    run_few_shot_protocol,
    sample_few_shot,
    train_two_stage,
)
from argdial.sessions import DialogueService, KeywordNlu, SessionStore, replay_events
from argdial.synthetic import corpus_texts, make_intent_dataset, make_sts_dataset
from argdial.tensor import Tensor, backward, gradcheck
from argdial.text import build_vocab

GRADIENT_BUDGET_S = 120.0
CONVERGENCE_BUDGET_S = 300.0


@contextmanager
def criterion(name):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {name}: FAIL")
        raise
    print(f"\nACCEPTANCE {name}: PASS ({time.monotonic() - start:.1f}s)")


@pytest.fixture(scope="module")
def vocab():
    return build_vocab(corpus_texts())


@pytest.fixture(scope="module")
def frozen_argsim(vocab):
    model = ArgSimModel(
        vocab,
        ArgSimConfig(
            d_model=16, n_layers=1, n_heads=2, d_ff=16, max_len=24,
            word_dim=8, lstm_hidden=4, d_w=8, r=2, embed_dim=8, seed=7,
        ),
    )
    model.freeze()
    return model


def toy_intent_model(vocab, argsim, seed=11):
    return IntentModel(
        vocab, SPEECH_ACTS, argsim,
        IntentConfig(
            d_model=16, n_layers=1, n_heads=2, d_ff=16, max_len=24,
            lstm_hidden=8, d_w=8, r=2, seed=seed,
        ),
    )


# -- 1. gradient suite -----------------------------------------------------------


def test_gradient_suite(vocab, frozen_argsim):
    with criterion("gradient suite (ops + blocks + full models, rel err < 1e-4)"):
        start = time.monotonic()

        for seed in range(20):
            rng = np.random.default_rng(seed)
            a = Tensor(rng.uniform(-1, 1, (3, 4)), requires_grad=True)
            b = Tensor(rng.uniform(-1, 1, (3, 4)), requires_grad=True)
            c = Tensor(rng.uniform(-1, 1, (4, 2)), requires_grad=True)
            v = Tensor(rng.uniform(-1, 1, (4,)), requires_grad=True)
            v2 = Tensor(rng.uniform(0.5, 1.5, (4,)), requires_grad=True)
            mix = Tensor(rng.normal(size=(3, 4)))
            mix32 = Tensor(rng.normal(size=(3, 2)))
            cases = [
                (lambda: T.tsum(T.mul(T.add(a, b), mix)), [a, b]),
                (lambda: T.tsum(T.mul(T.sub(a, b), mix)), [a, b]),
                (lambda: T.tsum(T.mul(T.mul(a, b), mix)), [a, b]),
                (lambda: T.tsum(T.mul(T.div(a, v2.data[0] + 1.0), mix)), [a]),
                (lambda: T.tsum(T.mul(T.matmul(a, c), mix32)), [a, c]),
                (lambda: T.tsum(T.mul(T.tanh(a), mix)), [a]),
                (lambda: T.tsum(T.mul(T.sigmoid(a), mix)), [a]),
                (lambda: T.tsum(T.mul(T.relu(a), mix)), [a]),
                (lambda: T.tsum(T.mul(T.softmax(a, axis=1), mix)), [a]),
                (lambda: T.tsum(T.mul(T.standardize(a), mix)), [a]),
                (lambda: T.mean(T.mul(a, mix)), [a]),
                (lambda: T.tsum(T.mul(T.concat([a, b], axis=0), np.ones((6, 4)))), [a, b]),
                (lambda: T.tsum(T.mul(T.take_rows(a, [0, 2, 1, 0]), np.ones((4, 4)))), [a]),
                (lambda: T.scale(T.tsum(T.mul(a, b)), 0.7), [a, b]),
                (lambda: T.mse(T.tsum(T.mul(a, mix)), 0.25), [a]),
                (lambda: T.cosine_similarity(v, v2), [v, v2]),
                (lambda: T.cross_entropy(T.softmax(v, axis=0), 1), [v]),
            ]
            for loss_fn, tensors in cases:
                gradcheck(loss_fn, tensors, rtol=1e-4)

        # blocks at toy dims: d_model=16, d=8, r=2
        block_rng = np.random.default_rng(100)
        enc = TransformerEncoder(
            TransformerConfig(vocab_size=8, d_model=16, n_layers=1, n_heads=2, d_ff=16, max_len=6),
            block_rng,
        )
        lstm = BiLstm(input_dim=6, hidden=8, rng=block_rng)
        attn = InnerAttention(input_dim=16, d_w=8, r=2, rng=block_rng)
        for seed in range(20):
            rng = np.random.default_rng(200 + seed)
            ids = list(rng.integers(0, 8, size=int(rng.integers(2, 6))))
            gradcheck(
                lambda: T.tsum(enc.forward(ids)),
                list(enc.parameters().values()), max_elements=1, rng=rng,
            )
            x = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
            gradcheck(
                lambda: T.tsum(lstm.forward(x)),
                [x, *lstm.parameters().values()], max_elements=2, rng=rng,
            )
            y = Tensor(rng.normal(size=(5, 16)), requires_grad=True)
            gradcheck(
                lambda: T.tsum(attn.forward(y)),
                [y, *attn.parameters().values()], max_elements=3, rng=rng,
            )

        # full models end to end
        words = list(vocab.token_to_id)[4:]
        sim = ArgSimModel(
            vocab,
            ArgSimConfig(
                d_model=16, n_layers=1, n_heads=2, d_ff=16, max_len=24,
                word_dim=8, lstm_hidden=8, d_w=8, r=2, embed_dim=8, seed=1,
            ),
        )
        intent = toy_intent_model(vocab, frozen_argsim, seed=2)
        for seed in range(20):
            rng = np.random.default_rng(300 + seed)
            text = " ".join(rng.choice(words, size=4))
            gradcheck(
                lambda: T.tsum(sim.embed_sentence(text)),
                list(sim.parameters().values()), max_elements=1, rng=rng,
            )
            label = int(rng.integers(0, 6))
            gradcheck(
                lambda: T.cross_entropy(intent.forward(text), label),
                list(intent.parameters().values()), max_elements=1, rng=rng,
            )

        elapsed = time.monotonic() - start
        assert elapsed < GRADIENT_BUDGET_S, f"gradient suite took {elapsed:.1f}s"


# -- 2. normalization suite ---------------------------------------------------------


def test_normalization_suite(vocab, frozen_argsim):
    with criterion("normalization suite (distributions within 1e-12)"):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = Tensor(rng.normal(size=(4, 7)) * 20)
            out = T.softmax(x, axis=1).data
            assert np.all(out >= 0) and np.allclose(out.sum(axis=1), 1.0, atol=1e-12)

        enc = TransformerEncoder(
            TransformerConfig(vocab_size=10, d_model=16, n_layers=2, n_heads=2, d_ff=16, max_len=8),
            np.random.default_rng(1),
        )
        sink = []
        enc.forward([0, 3, 5, 7, 2], attn_sink=sink)
        for alpha in sink:
            assert np.all(alpha >= 0) and np.allclose(alpha.sum(axis=1), 1.0, atol=1e-12)

        attn = InnerAttention(input_dim=8, d_w=6, r=3, rng=np.random.default_rng(2))
        for _ in range(20):
            sink = []
            attn.forward(Tensor(rng.normal(size=(6, 8))), attn_sink=sink)
            assert np.allclose(sink[0].sum(axis=1), 1.0, atol=1e-12)

        model = toy_intent_model(vocab, frozen_argsim)
        for text in ("", "why please", "goodbye", "words outside vocabulary zzz"):
            probs = model.classify(text)
            assert probs.shape == (6,)
            assert abs(probs.sum() - 1.0) < 1e-12


# -- 3. algorithm-2 staging -----------------------------------------------------------


def test_algorithm2_staging(vocab, frozen_argsim):
    with criterion("two-stage staging (theta3 frozen through stage 1, updated in stage 2)"):
        model = toy_intent_model(vocab, frozen_argsim, seed=4)
        data = make_intent_dataset(4, seed=13)  # 24 examples = 3 batches of 8
        report = train_two_stage(
            model, data,
            IntentTrainConfig(lr_stage1=0.05, lr_stage2=0.02, batch_size=8,
                              stage1_epochs=1, stage2_epochs=1),
        )
        assert report.theta3_hash_after_stage1 == report.theta3_hash_start  # bit-exact
        assert report.theta3_hash_after_stage2 != report.theta3_hash_after_stage1


# -- 4. frozen similarity model contract ----------------------------------------------


def test_frozen_argsim_contract(vocab, frozen_argsim):
    with criterion("frozen similarity model (no gradient on theta1/theta2)"):
        model = toy_intent_model(vocab, frozen_argsim, seed=5)
        loss = T.cross_entropy(model.forward("why is the stance good"), 3)
        backward(loss)
        for name, p in {**frozen_argsim.theta1(), **frozen_argsim.theta2()}.items():
            assert p.grad is None or not np.any(p.grad), name
        assert any(p.grad is not None for p in model.theta4().values())


# -- 5. toy convergence: intent --------------------------------------------------------


def test_toy_convergence_intent(vocab, frozen_argsim):
    with criterion("toy convergence, intent (>=95% train, >=90% test)"):
        start = time.monotonic()
        train = make_intent_dataset(10, seed=1)  # 60 examples
        test = make_intent_dataset(10, seed=2)
        model = toy_intent_model(vocab, frozen_argsim, seed=11)
        train_two_stage(
            model, train,
            IntentTrainConfig(lr_stage1=0.05, lr_stage2=0.02, batch_size=8,
                              stage1_epochs=4, stage2_epochs=8),
        )
        train_acc = sum(model.predict(t) == l for t, l in train) / len(train)
        test_acc = sum(model.predict(t) == l for t, l in test) / len(test)
        elapsed = time.monotonic() - start
        print(f"  intent: train {train_acc:.3f}, test {test_acc:.3f} in {elapsed:.0f}s")
        assert train_acc >= 0.95
        assert test_acc >= 0.90
        assert elapsed < CONVERGENCE_BUDGET_S


# -- 6. toy convergence: similarity ------------------------------------------------------


def test_toy_convergence_argsim():
    with criterion("toy convergence, similarity (held-out Spearman >= 0.8 after 8 epochs)"):
        start = time.monotonic()
        pairs = make_sts_dataset(500, seed=21)
        train, held = pairs[:400], pairs[400:]
        pair_vocab = build_vocab([p.sentence_1 for p in pairs] + [p.sentence_2 for p in pairs])
        model = ArgSimModel(
            pair_vocab,
            ArgSimConfig(
                d_model=16, n_layers=1, n_heads=2, d_ff=16, max_len=16,
                word_dim=32, lstm_hidden=16, d_w=8, r=2, embed_dim=32,
                embedding_init=0.5, seed=3,
            ),
        )
        train_sts(model, train, StsTrainConfig(lr=0.003, batch_size=4, epochs=8, seed=0))
        predicted = [model.score_pair(p.sentence_1, p.sentence_2) for p in held]
        golds = [p.score for p in held]
        rho = spearman(predicted, golds)
        elapsed = time.monotonic() - start
        print(f"  similarity: held-out spearman {rho:.4f} in {elapsed:.0f}s")
        assert rho >= 0.8
        assert elapsed < CONVERGENCE_BUDGET_S


# -- 7. oracle equivalences ----------------------------------------------------------------


def test_oracle_equivalences(vocab, frozen_argsim):
    with criterion("oracle equivalences (retrieval, metrics, stance)"):
        # nearest argument vs brute-force cosine loop
        rng = np.random.default_rng(17)
        words = list(vocab.token_to_id)[4:]
        pool = [" ".join(rng.choice(words, size=4)) for _ in range(20)]
        for _ in range(100):
            utterance = " ".join(rng.choice(words, size=4))
            candidates = list(rng.choice(pool, size=5, replace=False))
            got_idx, _ = nearest_argument(frozen_argsim, utterance, candidates)
            u = frozen_argsim.embed_cached(utterance).reshape(-1)
            best_i, best = 0, -np.inf
            for i, cand in enumerate(candidates):
                w = frozen_argsim.embed_cached(cand).reshape(-1)
                cos = float(u @ w) / (np.linalg.norm(u) * np.linalg.norm(w))
                if cos > best:
                    best_i, best = i, cos
            assert got_idx == best_i

        # accuracy / macro-F1 vs an independent confusion-matrix implementation
        labels = ["a", "b", "c"]
        for _ in range(50):
            n = int(rng.integers(2, 40))
            golds = [labels[i] for i in rng.integers(0, 3, size=n)]
            preds = [labels[i] for i in rng.integers(0, 3, size=n)]
            classes = sorted(set(golds) | set(preds))
            index = {c: i for i, c in enumerate(classes)}
            m = np.zeros((len(classes), len(classes)), dtype=int)
            for p, g in zip(preds, golds):
                m[index[g], index[p]] += 1
            assert accuracy(preds, golds) == np.trace(m) / m.sum()
            f1s = []
            for i in range(len(classes)):
                tp, fp, fn = m[i, i], m[:, i].sum() - m[i, i], m[i, :].sum() - m[i, i]
                f1s.append(2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0)
            assert macro_f1(preds, golds) == float(np.mean(f1s))

        # the rank-difference formula case
        assert abs(spearman([1, 2, 3, 4], [1, 3, 2, 4]) - 0.8) < 1e-12

        # stance propagation vs a separately coded recursive evaluator
        def oracle_stance(graph, rejected, preferences):
            def w_eff(node):
                return min(1.0, node.weight * (1.0 + 0.25 * preferences.get(node.id, 0)))

            def strength(nid):
                node = graph.nodes[nid]
                kids = [k for k in node.children if k not in rejected]
                value = w_eff(node)
                for k in kids:
                    sign = 1.0 if graph.nodes[k].relation == "support" else -1.0
                    value += sign * strength(k) * w_eff(graph.nodes[k]) / len(kids)
                return min(1.0, max(0.0, value))

            return strength(graph.root_id)

        from argdial.dialogue import DialogueState, parse_graph

        def make_doc(n, tree_rng):
            nodes = [{"id": "root", "text": "r", "relation": "root", "parent": None,
                      "weight": float(tree_rng.uniform(0, 1))}]
            for i in range(1, n):
                parent = nodes[int(tree_rng.integers(len(nodes)))]["id"]
                rel = "support" if tree_rng.random() < 0.5 else "attack"
                nodes.append({"id": f"n{i}", "text": "t", "relation": rel, "parent": parent,
                              "weight": float(tree_rng.uniform(0, 1))})
            return {"topic": "t", "nodes": nodes}

        hand = parse_graph(
            {
                "topic": "hand",
                "nodes": [
                    {"id": "root", "text": "r", "relation": "root", "parent": None, "weight": 0.5},
                    {"id": "s", "text": "s", "relation": "support", "parent": "root", "weight": 0.6},
                    {"id": "a", "text": "a", "relation": "attack", "parent": "root", "weight": 0.4},
                ],
            }
        )
        stance, _ = compute_stance(hand, initial_state(hand))
        assert abs(stance - 0.60) < 1e-12

        tree_rng = np.random.default_rng(23)
        for _ in range(100):
            graph = parse_graph(make_doc(int(tree_rng.integers(1, 31)), tree_rng))
            rejected = set()
            for nid in list(graph.nodes):
                if nid != graph.root_id and tree_rng.random() < 0.15:
                    rejected |= {nid} | graph.descendants(nid)
            preferences = {
                nid: int(tree_rng.integers(0, 4)) for nid in graph.nodes if tree_rng.random() < 0.3
            }
            state = DialogueState(session_id="", current_id=graph.root_id, displayed=[],
                                  rejected=rejected, preferences=preferences)
            stance, _ = compute_stance(graph, state)
            assert stance == oracle_stance(graph, rejected, preferences)


# -- 8. dialogue state machine ----------------------------------------------------------------


def test_dialogue_state_machine():
    with criterion("dialogue state machine (scripted trace + 10^4-step fuzzing)"):
        _, graph = load_graph(bundled_graph_path())
        templates = load_templates()
        rng = np.random.default_rng(0)

        state = initial_state(graph)
        state, result = apply_move(graph, state, SpeechAct("why", graph.root_id))
        assert result.introduced == [("support", "c1"), ("support", "c2"), ("attack", "c3")]
        text = render_response(graph, result, templates, rng)
        assert "marriage is seen as the best way" in text
        assert "less able" in text and "ridiculous" in text

        state, _ = apply_move(graph, state, SpeechAct("reject", "c1"))
        assert "c1" in state.rejected and "c1" not in state.displayed
        assert "c1" not in state.strengths

        snapshot = replace(state, displayed=list(state.displayed), rejected=set(state.rejected),
                           preferences=dict(state.preferences), strengths=dict(state.strengths))
        with pytest.raises(MoveError) as exc:
            apply_move(graph, state, SpeechAct("level_up"))
        assert exc.value.code == "at_root"
        assert state == snapshot

        state, result = apply_move(graph, state, SpeechAct("exit"))
        assert state.terminated and result.terminated

        # randomized fuzzing
        def check(graph, state):
            if not (state.current_id == graph.root_id and state.displayed == [graph.root_id]):
                expected = [
                    k for k in graph.nodes[state.current_id].children if k not in state.rejected
                ]
                assert state.displayed == expected
            for nid in state.rejected:
                assert graph.descendants(nid) <= state.rejected
            assert all(0.0 <= v <= 1.0 for v in state.strengths.values())

        from argdial.dialogue import parse_graph

        def random_graph(n, g_rng):
            nodes = [{"id": "root", "text": "r", "relation": "root", "parent": None}]
            for i in range(1, n):
                parent = nodes[int(g_rng.integers(len(nodes)))]["id"]
                rel = "support" if g_rng.random() < 0.5 else "attack"
                nodes.append({"id": f"n{i}", "text": "t", "relation": rel, "parent": parent})
            return parse_graph({"topic": "t", "nodes": nodes})

        fuzz_rng = np.random.default_rng(31)
        graphs = [graph] + [random_graph(int(fuzz_rng.integers(2, 14)), fuzz_rng) for _ in range(4)]
        kinds = ("stance", "exit", "level_up", "why", "prefer", "reject")
        steps = 0
        while steps < 10_000:
            g = graphs[int(fuzz_rng.integers(len(graphs)))]
            state = initial_state(g)
            for _ in range(int(fuzz_rng.integers(5, 40))):
                steps += 1
                kind = kinds[int(fuzz_rng.integers(len(kinds)))]
                if kind in ("why", "prefer", "reject"):
                    if state.displayed and fuzz_rng.random() < 0.85:
                        arg = state.displayed[int(fuzz_rng.integers(len(state.displayed)))]
                    else:
                        ids = list(g.nodes)
                        arg = ids[int(fuzz_rng.integers(len(ids)))]
                    act = SpeechAct(kind, arg)
                else:
                    act = SpeechAct(kind)
                before = replace(state, displayed=list(state.displayed),
                                 rejected=set(state.rejected),
                                 preferences=dict(state.preferences),
                                 strengths=dict(state.strengths))
                try:
                    state, _ = apply_move(g, state, act)
                except MoveError:
                    assert state == before
                    if state.terminated:
                        break
                else:
                    check(g, state)


# -- 9. few-shot protocol shape -----------------------------------------------------------------


def test_few_shot_protocol_shape(vocab, frozen_argsim):
    with criterion("few-shot protocol (mean±std cells, deterministic balanced samples)"):
        train = make_intent_dataset(35, seed=3)
        test = make_intent_dataset(5, seed=4)
        quick = IntentTrainConfig(lr_stage1=0.05, lr_stage2=0.02, batch_size=8,
                                  stage1_epochs=1, stage2_epochs=1)
        cells = {}
        for k in (10, 20, 30):
            s1 = sample_few_shot(train, k, seed=0)
            s2 = sample_few_shot(train, k, seed=0)
            assert s1.indices_per_intent == s2.indices_per_intent  # deterministic
            for label, indices in s1.indices_per_intent.items():
                assert len(indices) == k  # class-balanced
                assert all(train[i][1] == label for i in indices)

            result = run_few_shot_protocol(
                train, test,
                lambda seed: toy_intent_model(vocab, frozen_argsim, seed=seed),
                k=k, seeds=5, config=quick,
            )
            assert len(result.per_seed_accuracy) == 5
            cell = result.cell()
            assert "±" in cell
            mean_part, std_part = cell.split("±")
            float(mean_part), float(std_part)  # both numeric, Table-3-shaped
            cells[k] = cell
        row = f"| two-stage classifier | {cells[10]} | {cells[20]} | {cells[30]} |"
        print(f"  {row}")
        assert row.count("|") == 5  # model column + one cell per k


# -- 10. replay determinism ------------------------------------------------------------------


def test_replay_determinism(tmp_path):
    with criterion("replay determinism (persisted logs rebuild identical states)"):
        topic, graph = load_graph(bundled_graph_path())
        store = SessionStore(graph, topic, data_dir=tmp_path / "sessions")
        service = DialogueService(store, KeywordNlu(), load_templates(), seed=9)
        session, _ = service.create_session()
        for text in (
            "tell me more why",
            "i prefer that marriage is seen as the best way to raise children",
            "i reject the ridiculous idea about other methods",
            "what is my stance right now",
            "I would like to finish.",
        ):
            service.handle_utterance(session.id, text)
        final = store.get(session.id).state
        events = store.get(session.id).events

        replayed = replay_events(graph, session.id, events)
        assert replayed == final

        reloaded = SessionStore(graph, topic, data_dir=tmp_path / "sessions").get(session.id)
        assert reloaded.state == final
        assert reloaded.events == events
