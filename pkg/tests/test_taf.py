import json
from pathlib import Path

import pytest

from fixtures.planted import taxonomy_fixture, taxonomy_hand_counts
from tafkit.alignment import AlignmentModel
from tafkit.corpus_io import Example, read_dataset
from tafkit.parse_tree import Utterance, extract_signature, parse, serialize
from tafkit.taf import (
    HALLUCINATION,
    KEEP_ALL_PARSEABLE,
    MALFORMED,
    OK,
    SIGNATURE_MISMATCH,
    STRICT,
    EchoFiller,
    FillerInstance,
    FillerTemplate,
    FillerUnavailable,
    FillerVerdict,
    MissingTranslation,
    ReferenceFiller,
    ReplayFiller,
    assemble_silver,
    build_filler_infer,
    build_filler_train,
    build_infer_batch,
    error_report,
    fill,
    fill_many,
    validate_filler_output,
)

ALARM = Example(
    "a1",
    Utterance("set an 8 am alarm", ["set", "an", "8", "am", "alarm"]),
    parse("[IN:CREATE_ALARM [SL:DATE_TIME 8 am ] ]"),
)
DENTIST = Example(
    "d1",
    Utterance("cancel reminder to call dentist", "cancel reminder to call dentist".split()),
    parse("[IN:CANCEL_REMINDER [SL:TODO [IN:CREATE_CALL [SL:CONTACT dentist ] ] ] ]"),
)


def test_build_train():
    inst = build_filler_train(ALARM)
    assert inst.input == "set an 8 am alarm | [IN:CREATE_ALARM [SL:DATE_TIME ] ]"
    assert inst.target == "[IN:CREATE_ALARM [SL:DATE_TIME 8 am ] ]"
    assert inst.utterance == "set an 8 am alarm"
    assert extract_signature(parse(inst.target)) == inst.signature


def test_build_train_no_slots_and_nested():
    ex = Example("n", Utterance("show my alarms"), parse("[IN:GET_ALARM ]"))
    inst = build_filler_train(ex)
    assert inst.input == "show my alarms | [IN:GET_ALARM ]" and inst.target == "[IN:GET_ALARM ]"
    assert build_filler_train(DENTIST).input.endswith(
        "| [IN:CANCEL_REMINDER [SL:TODO [IN:CREATE_CALL [SL:CONTACT ] ] ] ]"
    )


def test_build_infer():
    it = Utterance("imposta una sveglia alle 8", language="it")
    inst = build_filler_infer(it, ALARM)
    assert inst.input == "imposta una sveglia alle 8 | [IN:CREATE_ALARM [SL:DATE_TIME ] ]"
    assert inst.target is None and inst.language == "it"
    assert build_filler_infer(ALARM.utterance, ALARM).input == build_filler_train(ALARM).input
    with pytest.raises(MissingTranslation):
        build_filler_infer(None, ALARM)


def test_build_infer_batch_lenient():
    missing = []
    out = build_infer_batch([ALARM, DENTIST], {"a1": ALARM.utterance}, strict=False, missing=missing)
    assert len(out) == 1 and missing == ["d1"]
    with pytest.raises(MissingTranslation):
        build_infer_batch([ALARM, DENTIST], {"a1": ALARM.utterance})


def test_template_options():
    t = FillerTemplate(" ||| ", signature_first=True)
    inst = build_filler_train(ALARM, t)
    assert inst.input == "[IN:CREATE_ALARM [SL:DATE_TIME ] ] ||| set an 8 am alarm"
    assert inst.utterance == "set an 8 am alarm"


def test_separator_inside_utterance():
    ex = Example("p", Utterance("a | b"), parse("[IN:X ]"))
    inst = build_filler_train(ex)
    assert inst.utterance == "a | b"
    assert validate_filler_output(inst.target, inst).ok


def test_record_round_trip():
    inst = build_filler_train(ALARM)
    assert FillerInstance.from_record(json.loads(json.dumps(inst.to_record()))) == inst


def test_verdicts():
    inst = FillerInstance("toca algo de rap | [IN:PLAY_MUSIC [SL:MUSIC_GENRE ] [SL:MUSIC_TYPE ] ]", language="es")
    out = "[IN:PLAY_MUSIC [SL:MUSIC_GENRE rap ] [SL:MUSIC_TYPE music ] ]"
    v = validate_filler_output(out, inst)
    assert v.kind == HALLUCINATION and v.details == ["MUSIC_TYPE=music"]
    assert validate_filler_output("[IN:CREATE_ALARM [SL:DATE_TIME", inst).kind == MALFORMED
    assert validate_filler_output("[IN:PLAY_MUSIC [SL:MUSIC_GENRE rap ] ]", inst).kind == SIGNATURE_MISMATCH
    swapped = "[IN:PLAY_MUSIC [SL:MUSIC_TYPE algo ] [SL:MUSIC_GENRE rap ] ]"
    assert validate_filler_output(swapped, inst).kind == OK


def test_hallucination_is_character_level():
    inst = FillerInstance("quel temps fera-t-il | [IN:GET_WEATHER [SL:DATE_TIME ] ]")
    assert validate_filler_output("[IN:GET_WEATHER [SL:DATE_TIME t-il ] ]", inst).ok
    assert validate_filler_output("[IN:GET_WEATHER [SL:DATE_TIME Quel ] ]", inst).kind == HALLUCINATION
    assert validate_filler_output("[IN:GET_WEATHER [SL:DATE_TIME Quel ] ]", inst, lowercase=True).ok


def test_hallucination_nfc():
    inst = FillerInstance("café noir | [IN:X [SL:A ] ]")
    assert validate_filler_output("[IN:X [SL:A café ] ]", inst).ok


def test_self_consistency_nested():
    inst = build_filler_train(DENTIST)
    assert validate_filler_output(inst.target, inst).ok


def test_taxonomy_fixture():
    rows = taxonomy_fixture()
    verdicts = [(lang, validate_filler_output(out, inst)) for lang, inst, out, _ in rows]
    assert [v.kind for _, v in verdicts] == [kind for *_, kind in rows]
    totals, errors, classes = taxonomy_hand_counts()
    rep = error_report(verdicts)
    assert rep.by_class == classes
    for lang in totals:
        assert rep.percent(lang) == 100.0 * errors[lang] / totals[lang]
    assert rep.percent() == 35.0


def test_error_report_planted_de():
    verdicts = [("de", FillerVerdict(HALLUCINATION if k < 3 else OK)) for k in range(100)]
    rep = error_report(verdicts)
    assert rep.errors["de"] == 3 and rep.percent("de") == 3.0
    assert "3 (3.00%)" in rep.to_table()
    rec = rep.to_record()
    assert rec["languages"]["de"]["classes"][HALLUCINATION] == 3


def test_error_report_empty():
    rep = error_report([])
    assert rep.total == 0 and rep.percent() == 0.0
    assert rep.to_record()["classes"] == {MALFORMED: 0, SIGNATURE_MISMATCH: 0, HALLUCINATION: 0}


def test_assemble_policies():
    tr = Utterance("toca algo de rap", ["toca", "algo", "de", "rap"], "es")
    ok_out = "[IN:PLAY_MUSIC [SL:MUSIC_GENRE rap ] ]"
    bad_out = "[IN:PLAY_MUSIC [SL:MUSIC_GENRE music ] ]"
    ex = assemble_silver(tr, ok_out, FillerVerdict(OK), example_id="1")
    assert ex.provenance == "silver-taf" and serialize(ex.parse) == ok_out
    assert assemble_silver(tr, bad_out, FillerVerdict(HALLUCINATION), KEEP_ALL_PARSEABLE) is not None
    assert assemble_silver(tr, bad_out, FillerVerdict(HALLUCINATION), STRICT) is None
    for policy in (KEEP_ALL_PARSEABLE, STRICT):
        assert assemble_silver(tr, "[IN:X", FillerVerdict(MALFORMED), policy) is None


def test_assemble_keeps_slot_order():
    tr = Utterance("a b", ["a", "b"])
    out = "[IN:X [SL:B b ] [SL:A a ] ]"
    assert serialize(assemble_silver(tr, out, FillerVerdict(OK)).parse) == out


def test_echo_filler_rejected_at_assembly():
    inst = build_filler_infer(Utterance("toca algo de rap", language="es"), ALARM)
    out = fill(inst, EchoFiller())
    v = validate_filler_output(out, inst)
    assert v.ok
    assert assemble_silver(Utterance("toca algo de rap"), out, v) is None


def test_reference_filler_identity():
    lexicon = {w: {w: 1.0} for w in ALARM.utterance.tokens}
    filler = ReferenceFiller(AlignmentModel(lexicon), {"a1": ALARM})
    inst = build_filler_train(ALARM)
    assert fill(inst, filler) == inst.target


def test_reference_filler_elvis():
    src = Example(
        "e", Utterance("Play some Elvis for me", "Play some Elvis for me".split()),
        parse("[IN:PLAY_MUSIC [SL:MUSIC_ARTIST_NAME Elvis ] ]"),
    )
    lex = {"Play": {"Jouez": 0.6}, "Elvis": {"Elvis": 0.5, "à": 0.3}, "for": {"pour": 0.6}, "me": {"moi": 0.7}}
    inst = build_filler_infer(Utterance("Jouez à Elvis pour moi", language="fr"), src)
    out = fill(inst, ReferenceFiller(AlignmentModel(lex), {"e": src}))
    assert out == "[IN:PLAY_MUSIC [SL:MUSIC_ARTIST_NAME à Elvis ] ]"


def test_replay_filler(tmp_path):
    inst = build_filler_train(ALARM)
    path = tmp_path / "r.jsonl"
    path.write_text(json.dumps({"input": inst.input, "output": inst.target}) + "\n", encoding="utf-8")
    assert fill(inst, ReplayFiller.from_file(path)) == inst.target
    with pytest.raises(FillerUnavailable):
        fill(build_filler_train(DENTIST), ReplayFiller.from_file(path))


def test_fill_many_order_and_batching():
    class Upper:
        def __init__(self):
            self.calls = 0

        def fill_batch(self, xs):
            self.calls += 1
            return [x.input.upper() for x in xs]

    insts = [FillerInstance(f"u{k} | [IN:X ]") for k in range(10)]
    f = Upper()
    assert fill_many(insts, f, batch_size=3) == [i.input.upper() for i in insts]
    assert f.calls == 4

    class Broken:
        def fill_batch(self, xs):
            return []

    with pytest.raises(FillerUnavailable):
        fill_many(insts, Broken())


def test_english_corpus_self_consistent():
    examples = list(read_dataset(Path(__file__).parent / "fixtures" / "en_corpus.jsonl"))
    for ex in examples:
        inst = build_filler_train(ex)
        assert validate_filler_output(inst.target, inst).ok
