"""Smoke test for the todalign extension module.

Build it first (see README), then run `python python/smoke_test.py`.
"""

import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import todalign  # noqa: E402


def main():
    a = todalign.HintSet(["address", "poi"], True, 9)
    b = todalign.HintSet(["poi"], True, 12)
    assert abs(todalign.hint_similarity(a, b) - 0.75) < 1e-12
    assert todalign.hint_similarity(a, b, drop_dc=True) == 0.5
    assert a == todalign.HintSet(["address", "poi"], True, 9)

    prompt = todalign.appendix_prompt("smd")
    assert prompt.endswith("I will include these entities -")

    entities, response, fallback = todalign.parse_response(
        " [('poi', 'home')]\nassistant: home is 5 miles away"
    )
    assert entities == [("poi", "home")]
    assert response == "home is 5 miles away" and not fallback

    assert todalign.corpus_bleu(["a b c d"], ["a b c d"]) == 1.0

    corpus = todalign.Corpus.synthetic(12, seed=3)
    test_ids = corpus.sample_ids("test")
    train_ids = corpus.sample_ids("train")
    sid = test_ids[0]
    golds = [corpus.gold_response(i) for i in test_ids]
    assert corpus.entity_f1(test_ids, golds) == (1.0, 1.0, 1.0)
    hints = corpus.gold_hints(sid)
    text = corpus.build_prompt(sid, train_ids[:2], hints)
    assert "[example 3]" in text

    with tempfile.TemporaryDirectory() as tmp:
        corpus.write(tmp)
        assert len(todalign.Corpus.load(tmp)) == len(corpus)
        config = {
            "corpus": tmp,
            "embedder": "stub",
            "backend": "echo_gold",
            "hint_mode": "oracle",
            "limit": 4,
        }
        report = json.loads(todalign.run(json.dumps(config)))
        assert report["entity_f1"] == 1.0, report
        try:
            todalign.Corpus.load(str(Path(tmp) / "missing"))
        except todalign.DataError:
            pass
        else:
            raise AssertionError("expected DataError")
        try:
            todalign.run(json.dumps({"corpus": tmp, "k": 0, "embedder": "stub"}))
        except todalign.ConfigError:
            pass
        else:
            raise AssertionError("expected ConfigError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
