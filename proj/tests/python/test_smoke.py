import json
import urllib.request

import pytest

import semlogue


def test_tokenize_round_trip():
    toks = semlogue.tokenize("<u> I'd like a cheap hotel , please . </u>")
    assert toks[0] == "<u>" and toks[-1] == "</u>"
    assert semlogue.strip_tags("<u> hi </u>") == "hi"
    assert semlogue.detokenize(["a", "b"]) == "a b"


def test_metrics():
    b = semlogue.bleu("the cat sat", "the cat sat")
    assert b["bleu"] == pytest.approx(1.0)
    assert semlogue.rouge("a b c", "a b d")["rouge1"] == pytest.approx(2 / 3)
    assert semlogue.dialuation(0.5, 0.9) == pytest.approx(78.0)
    assert semlogue.contanic(0.8, 0.6) == pytest.approx(0.66)
    assert semlogue.distinct_n(["a a", "a b"], 1) == pytest.approx(0.5)
    v = semlogue.hashed_embed("good day", 1024)
    assert len(v) == 1024
    assert semlogue.cosine(v, v) == pytest.approx(1.0)


def test_score_and_evaluate():
    row = semlogue.score("<u> book a cheap hotel </u>", "the cheap hotel is booked", "the cheap hotel is booked")
    assert row["ss"] == pytest.approx(1.0)
    report = semlogue.evaluate([
        {"context": "<u> hi </u>", "gold": "hello there", "generated": "hello there"},
        {"context": "<u> taxi </u>", "gold": "a taxi is booked", "generated": "sorry"},
    ])
    assert report["count"] == 2
    assert len(report["rows"]) == 2


def test_synthetic_corpus_is_seeded():
    a = semlogue.synthetic_corpus(5, seed=3)
    assert a == semlogue.synthetic_corpus(5, seed=3)
    assert len(a) == 5
    assert semlogue.synthetic_min_paraphrases() >= 3


def test_gradcheck():
    passed, err = semlogue.gradcheck("semtextuallogue")
    assert passed and err < 1e-4
    with pytest.raises(ValueError):
        semlogue.gradcheck("nonsense")


def test_echo_server():
    server = semlogue.EchoEmbeddingServer(16)
    server.start()
    req = urllib.request.Request(server.endpoint, data=json.dumps({"texts": ["a b", ""]}).encode(),
                                 headers={"Content-Type": "application/json"})
    body = json.loads(urllib.request.urlopen(req, timeout=5).read())
    server.stop()
    assert len(body["embeddings"]) == 2
    assert body["embeddings"][0] == pytest.approx(semlogue.hashed_embed("a b", 16))
    assert server.requests_served == 1


def test_train_and_respond(tmp_path):
    corpus = tmp_path / "corpus.jsonl"
    code, _, log = semlogue.run_cli(["convert", "--format", "synthetic", "--dialogues", "20",
                                     "--output", str(corpus)])
    assert code == 0, log
    semlogue.train(corpus, tmp_path / "run", embed_dim=8, ff_dim=16, epochs=1, min_freq=1,
                   max_source_len=64, max_target_len=16, eval_max_len=8, evaluate_test=False)
    gen = semlogue.Generator(str(tmp_path / "run" / "checkpoint.bin"))
    out = gen.respond(["<u> i need a hotel </u>", "<u> thanks </u>"], max_len=8)
    assert len(out) == 2
    assert all(len(r.split()) <= 8 for r in out)
    assert json.loads(gen._config_json)["embed_dim"] == 8
    with pytest.raises(ValueError):
        semlogue.Generator(str(corpus))
