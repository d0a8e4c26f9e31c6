import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generators import random_tags, random_tree
from oracles import chunk_set
from tafkit.corpus_io import (
    BioSequence,
    Example,
    FormatError,
    JoinError,
    TsvColumns,
    bio_chunks,
    bio_to_tree,
    dumps_record,
    read_dataset,
    tokenization_match_stats,
    write_dataset,
)
from tafkit.parse_tree import Utterance, leaf_slots, parse, serialize


def test_bio_to_tree_atis():
    seq = BioSequence(
        ["flights", "from", "denver", "to", "boston"], ["O", "O", "B-fromloc", "O", "B-toloc"], "atis_flight"
    )
    assert serialize(bio_to_tree(seq)) == "[IN:ATIS_FLIGHT [SL:FROMLOC denver ] [SL:TOLOC boston ] ]"


def test_bio_to_tree_edge_cases():
    assert serialize(bio_to_tree(BioSequence(["a", "b"], ["O", "O"], "X"))) == "[IN:X ]"
    seq = BioSequence(["x", "y", "z"], ["B-a", "I-a", "I-a"], "q")
    assert serialize(bio_to_tree(seq)) == "[IN:Q [SL:A x y z ] ]"


def test_stray_inside_tags():
    assert bio_chunks(["I-a", "I-b", "I-b", "O", "I-b"]) == [("a", 0, 1), ("b", 1, 3), ("b", 4, 5)]
    assert bio_chunks(["B-a", "B-a"]) == [("a", 0, 1), ("a", 1, 2)]


def test_bad_tags_rejected():
    with pytest.raises(ValueError):
        BioSequence(["a"], ["X-a"], "q")
    with pytest.raises(ValueError):
        BioSequence(["a", "b"], ["O"], "q")


def test_chunks_match_oracle():
    rng = random.Random(4)
    for _ in range(500):
        tags = random_tags(rng, rng.randint(0, 12))
        assert bio_chunks(tags) == chunk_set(tags)


def test_tree_flattening_recovers_chunks():
    rng = random.Random(5)
    for _ in range(300):
        n = rng.randint(1, 10)
        tokens = [f"w{k}" for k in range(n)]
        tags = random_tags(rng, n)
        tree = bio_to_tree(BioSequence(tokens, tags, "q"))
        chunks = bio_chunks(tags)
        assert [(s.label, s.tokens) for s in leaf_slots(tree)] == [
            (lab.upper(), tuple(tokens[a:b])) for lab, a, b in chunks
        ]


def _examples(rng, n):
    out = []
    for k in range(n):
        tree = random_tree(rng, max_depth=3)
        tokens = [t for s in leaf_slots(tree) for t in s.tokens] or ["x"]
        out.append(
            Example(
                id=f"id{k}",
                utterance=Utterance(" ".join(tokens), tokens, rng.choice(["en", "de", "th"])),
                parse=tree,
                split=rng.choice(["train", "validation", "test"]),
                provenance=rng.choice(["gold", "silver-taf", "silver-tap"]),
            )
        )
    return out


def test_canonical_round_trip(tmp_path):
    xs = _examples(random.Random(6), 100)
    path = tmp_path / "d.jsonl"
    assert write_dataset(xs, path) == 100
    ys = list(read_dataset(path))
    assert ys == xs
    path2 = tmp_path / "e.jsonl"
    write_dataset(ys, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_canonical_key_order():
    ex = Example("1", Utterance("set an 8 am alarm", ["set", "an", "8", "am", "alarm"]), parse("[IN:A ]"))
    assert list(json.loads(dumps_record(ex))) == [
        "id", "locale", "split", "utterance", "tokens", "parse", "provenance",
    ]


def test_canonical_strict_and_lenient(tmp_path):
    path = tmp_path / "d.jsonl"
    good = {"id": "1", "locale": "en", "utterance": "a", "tokens": ["a"], "parse": "[IN:X [SL:Y a ] ]"}
    bad = dict(good, id="2", parse="[IN:FOO [SL:BAR")
    path.write_text("\n".join(json.dumps(r) for r in [good, bad, good]) + "\n", encoding="utf-8")
    with pytest.raises(FormatError) as exc:
        list(read_dataset(path))
    assert exc.value.line == 2
    errors = []
    assert len(list(read_dataset(path, strict=False, errors=errors))) == 2
    assert [e.line for e in errors] == [2]


CONLL = """# id = a1
# intent = atis_flight
flights\tO
from\tO
denver\tB-fromloc.city_name
to\tO
boston\tB-toloc.city_name

# intent = atis_airfare
fares\tO
"""


def test_conll(tmp_path):
    path = tmp_path / "d.conll"
    path.write_text(CONLL, encoding="utf-8")
    a, b = read_dataset(path, "conll-bio")
    assert a.id == "a1" and b.id == "1"
    assert serialize(a.parse) == (
        "[IN:ATIS_FLIGHT [SL:FROMLOC.CITY_NAME denver ] [SL:TOLOC.CITY_NAME boston ] ]"
    )
    assert a.meta["label_case"]["FROMLOC.CITY_NAME"] == "fromloc.city_name"
    assert a.utterance.tokens == ["flights", "from", "denver", "to", "boston"]


def test_conll_bad_line(tmp_path):
    path = tmp_path / "d.conll"
    path.write_text("# intent = q\na b c\n", encoding="utf-8")
    with pytest.raises(FormatError) as exc:
        list(read_dataset(path, "conll-bio"))
    assert exc.value.line == 2


def _tsv_row(utt, parse_str, locale="de_DE", tokens=None):
    tokens = tokens or utt.split()
    return "\t".join(["1", "IN:X", "", utt, "", locale, parse_str, json.dumps({"tokens": tokens})])


def test_tsv(tmp_path):
    path = tmp_path / "d.tsv"
    path.write_text(_tsv_row("stelle einen Wecker", "[IN:CREATE_ALARM ]") + "\n", encoding="utf-8")
    (ex,) = read_dataset(path, "mtop-tsv")
    assert ex.utterance.tokens == ["stelle", "einen", "Wecker"]
    assert ex.utterance.language == "de_DE"


def test_tsv_wrong_column_map(tmp_path):
    path = tmp_path / "d.tsv"
    path.write_text(_tsv_row("stelle einen Wecker", "[IN:CREATE_ALARM ]") + "\n", encoding="utf-8")
    with pytest.raises(FormatError) as exc:
        list(read_dataset(path, "mtop-tsv", columns=TsvColumns(parse=3)))
    assert exc.value.line == 1
    with pytest.raises(FormatError):
        list(read_dataset(path, "mtop-tsv", columns=TsvColumns(parse=12)))


def _ex(i, tokens, lang="en"):
    return Example(str(i), Utterance(" ".join(tokens), tokens, lang))


def test_tokenization_stats_fixture():
    a = [_ex(i, ["a", "b"]) for i in range(10)]
    b = [_ex(i, ["a", "b"] if i < 4 else ["ab"]) for i in range(10)]
    stats = tokenization_match_stats(a, b)
    assert stats.percent == {"en": 40.0}


def test_tokenization_stats_identity_and_join():
    a = [_ex(i, ["x"], lang) for i, lang in enumerate(["en", "th", "en"])]
    assert tokenization_match_stats(a, a).percent == {"en": 100.0, "th": 100.0}
    stats = tokenization_match_stats(a, a[:2])
    assert stats.unjoined == 1
    with pytest.raises(JoinError):
        tokenization_match_stats(a, a[:2], strict=True)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["O", "B-a", "I-a", "B-b", "I-b"]), max_size=15))
def test_chunks_cover_non_o(tags):
    covered = {k for _, a, b in bio_chunks(tags) for k in range(a, b)}
    assert covered == {k for k, t in enumerate(tags) if t != "O"}
