"""Python bindings for the semlogue C++ core."""

import json

from ._semlogue import (
    CheckpointError,
    CorpusError,
    EchoEmbeddingServer,
    Generator,
    bleu,
    contanic,
    cosine,
    detokenize,
    dialuation,
    distinct_n,
    hashed_embed,
    rouge,
    run_cli,
    strip_tags,
    synthetic_min_paraphrases,
    tokenize,
)
from . import _semlogue

__all__ = [
    "CheckpointError",
    "CorpusError",
    "EchoEmbeddingServer",
    "Generator",
    "bleu",
    "contanic",
    "cosine",
    "detokenize",
    "dialuation",
    "distinct_n",
    "evaluate",
    "gradcheck",
    "hashed_embed",
    "rouge",
    "run_cli",
    "score",
    "strip_tags",
    "synthetic_corpus",
    "synthetic_min_paraphrases",
    "tokenize",
    "train",
]


def evaluate(items, alpha=0.3, beta=0.7, delta_c=0.3, delta_ss=0.7, dim=1 << 16, strip_tags=True):
    """Scores dicts with context/gold/generated keys; returns the report as a dict."""
    options = dict(alpha=alpha, beta=beta, delta_c=delta_c, delta_ss=delta_ss, dim=dim, strip_tags=strip_tags)
    return json.loads(_semlogue._evaluate_json(json.dumps(list(items)), json.dumps(options)))


def score(context, gold, generated, **weights):
    """All per-example metrics for one triple (BLEU on a 0-1 scale)."""
    report = evaluate([{"context": context, "gold": gold, "generated": generated}], **weights)
    return report["rows"][0]


def synthetic_corpus(dialogues, seed=17):
    return json.loads(_semlogue._synthetic_corpus_json(dialogues, seed))


def _flags(options):
    args = []
    for key, value in options.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        args += ["--" + key.replace("_", "-"), str(value)]
    return args


def train(corpus, out_dir, **options):
    """Runs the train subcommand; options use config key names (lr=1e-3, variant="ce", ...)."""
    code, out, log = run_cli(["train", "--corpus", str(corpus), "--out-dir", str(out_dir)] + _flags(options))
    if code != 0:
        raise RuntimeError(f"train exited with {code}: {log.strip().splitlines()[-1]}")
    return out


def gradcheck(variant="semtextuallogue", **options):
    """Returns (passed, max relative error) for a loss variant on the micro model."""
    code, out, log = run_cli(["gradcheck", "--variant", variant] + _flags(options))
    if code not in (0, 3):
        raise ValueError(log.strip().splitlines()[-1])
    rows = dict(line.split("\t", 1) for line in out.splitlines() if line.startswith(("max_rel_err", "passed")))
    return rows["passed"] == "true", float(rows["max_rel_err"])
