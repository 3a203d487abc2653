import numpy as np
import pytest

from argdial.text import (
    CLS,
    PAD,
    SEP,
    UNK,
    EmbeddingParseError,
    Vocabulary,
    build_vocab,
    load_embeddings,
    random_embeddings,
    save_embeddings,
    tokenize,
)


@pytest.fixture
def vocab():
    return build_vocab(["i would like to finish .", "hello there"])


def test_empty_text_gives_frame_only(vocab):
    seq = tokenize("", vocab)
    assert seq.tokens == [CLS, SEP]
    assert seq.ids == [vocab.token_to_id[CLS], vocab.token_to_id[SEP]]


def test_tokenize_example_sentence(vocab):
    seq = tokenize("I would like to finish.", vocab)
    assert seq.tokens == [CLS, "i", "would", "like", "to", "finish", ".", SEP]
    assert all(i != vocab.token_to_id[UNK] for i in seq.ids)


def test_tokenize_oov_maps_to_unk(vocab):
    seq = tokenize("zzzqq hello", vocab)
    assert seq.tokens == [CLS, "zzzqq", "hello", SEP]
    assert seq.ids[1] == vocab.token_to_id[UNK]
    assert seq.ids[2] == vocab.token_to_id["hello"]


def test_tokenize_truncates_preserving_sep(vocab):
    seq = tokenize("hello " * 100, vocab, max_len=8)
    assert len(seq) == 8
    assert seq.tokens[0] == CLS and seq.tokens[-1] == SEP


def test_tokenize_id_stable_on_retokenization(vocab):
    seq = tokenize("Zzzqq, hello there!", vocab)
    again = tokenize(" ".join(seq.tokens[1:-1]), vocab)
    assert again.ids == seq.ids


def test_build_vocab_min_count():
    vocab = build_vocab(["a a b"], min_count=2)
    assert "a" in vocab and "b" not in vocab


def test_build_vocab_empty_corpus_reserved_only():
    vocab = build_vocab([])
    assert len(vocab) == 4
    assert vocab.tokens() == [PAD, UNK, CLS, SEP]


def test_build_vocab_deterministic():
    docs = ["b a a c c c", "d b"]
    assert build_vocab(docs).token_to_id == build_vocab(docs).token_to_id


def test_vocab_save_load_round_trip(tmp_path, vocab):
    path = tmp_path / "vocab.tsv"
    vocab.save(path)
    assert Vocabulary.load(path).token_to_id == vocab.token_to_id


def write_w2v(path, rows, dim):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(rows)} {dim}\n")
        for word, vec in rows:
            fh.write(word + " " + " ".join(str(v) for v in vec) + "\n")


def test_load_embeddings_full_coverage(tmp_path):
    vocab = build_vocab(["alpha beta"])
    path = tmp_path / "emb.txt"
    write_w2v(path, [("alpha", [1.0, 2.0]), ("beta", [3.0, 4.0])], 2)
    table = load_embeddings(path, vocab, np.random.default_rng(0))
    assert table.coverage == 1.0
    assert table.matrix.data[vocab.token_to_id["alpha"]].tolist() == [1.0, 2.0]


def test_load_embeddings_empty_overlap(tmp_path):
    vocab = build_vocab(["alpha beta"])
    path = tmp_path / "emb.txt"
    write_w2v(path, [("other", [1.0, 2.0])], 2)
    table = load_embeddings(path, vocab, np.random.default_rng(1))
    assert table.coverage == 0.0
    row = table.matrix.data[vocab.token_to_id["alpha"]]
    assert np.all(np.abs(row) <= 0.05) and np.any(row != 0)


def test_load_embeddings_round_trip_values(tmp_path):
    vocab = build_vocab(["one two"])
    rng = np.random.default_rng(2)
    table = random_embeddings(vocab, 3, rng)
    out = tmp_path / "emb.txt"
    save_embeddings(table, out)
    back = load_embeddings(out, vocab, np.random.default_rng(3))
    assert np.allclose(back.matrix.data, table.matrix.data, rtol=0, atol=1e-15)


def test_load_embeddings_malformed_header(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("not a header\n", encoding="utf-8")
    with pytest.raises(EmbeddingParseError) as exc:
        load_embeddings(path, build_vocab(["x"]), np.random.default_rng(0))
    assert "line 1" in str(exc.value)


def test_load_embeddings_bad_row_reports_line(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("1 2\nword 0.5\n", encoding="utf-8")
    with pytest.raises(EmbeddingParseError) as exc:
        load_embeddings(path, build_vocab(["word"]), np.random.default_rng(0))
    assert "line 2" in str(exc.value)


def test_load_embeddings_dim_mismatch(tmp_path):
    path = tmp_path / "emb.txt"
    write_w2v(path, [("w", [1.0, 2.0])], 2)
    with pytest.raises(EmbeddingParseError):
        load_embeddings(path, build_vocab(["w"]), np.random.default_rng(0), expected_dim=300)


def test_pad_row_is_zero(tmp_path):
    vocab = build_vocab(["word"])
    table = random_embeddings(vocab, 4, np.random.default_rng(4))
    assert np.array_equal(table.matrix.data[vocab.token_to_id[PAD]], np.zeros(4))
