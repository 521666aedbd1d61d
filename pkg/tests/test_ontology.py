import json

import pytest
from conftest import DATA, intent_text

from maat.intent_lang import parse
from maat.ontology import (
    DuplicateVerb,
    FrozenRegistry,
    IntentValidationError,
    ObjectKind,
    SubjectKind,
    VerbCategory,
    VerbNotFound,
    VerbSpec,
    builtin_ontology,
    check_intent,
    load_ontology,
    ontology_from_json,
    register_verb,
    validate_intent,
)


def test_builtin_categories():
    reg = builtin_ontology()
    assert reg.lookup("discover").category is VerbCategory.CONSTRUCT
    assert reg.lookup("push").category is VerbCategory.TRANSFER
    assert reg.lookup("allocate").category is VerbCategory.REGULATE
    assert reg.lookup("DISCOVER") == reg.lookup("discover")
    assert {v.name for v in reg} >= {"connect", "discover", "advertize", "push", "pull",
                                      "allocate", "prioritize", "block"}


def test_builtin_subject_tables():
    reg = builtin_ontology()
    assert reg.lookup("block").subject_allowed == {SubjectKind.NULL}
    assert reg.lookup("advertize").subject_allowed == {SubjectKind.NULL, SubjectKind.IDENTIFIER}
    assert reg.lookup("connect").subject_allowed == set(SubjectKind)


def test_lookup_missing():
    with pytest.raises(VerbNotFound):
        builtin_ontology().lookup("teleport")


def test_register():
    spec = VerbSpec("transcode", VerbCategory.CONSTRUCT, ObjectKind.SERVICE)
    base = builtin_ontology()
    reg = register_verb(base, spec)
    assert reg.lookup("transcode") == spec
    assert "transcode" not in base
    with pytest.raises(DuplicateVerb):
        register_verb(reg, VerbSpec("Push", VerbCategory.TRANSFER))
    with pytest.raises(FrozenRegistry):
        register_verb(base.freeze(), spec)


@pytest.mark.parametrize("uc", ["uc1", "uc2", "uc3"])
def test_use_cases_validate(uc):
    assert validate_intent(parse(intent_text(uc)), builtin_ontology()) == []


def test_unknown_verb():
    issues = validate_intent(parse("<frobnicate, x, NULL>"), builtin_ontology())
    assert [(i.kind, i.path) for i in issues] == [("UnknownVerb", "$")]


def test_subject_mismatch():
    issues = validate_intent(parse("<block, ssh, <discover, a, NULL>>"), builtin_ontology())
    assert [(i.kind, i.path) for i in issues] == [("SubjectKindMismatch", "$")]


def test_all_issues_reported_with_paths():
    issues = validate_intent(parse("<block, ssh, <frob, a, <zap, b, NULL>>>"), builtin_ontology())
    assert [(i.kind, i.path) for i in issues] == [
        ("SubjectKindMismatch", "$"), ("UnknownVerb", "$.subject"), ("UnknownVerb", "$.subject.subject"),
    ]


def test_traffic_class_object_kind():
    issues = validate_intent(parse("<block, ubuntu.com/x/y, NULL>"), builtin_ontology())
    assert [i.kind for i in issues] == ["ObjectKindMismatch"]


def test_compositional():
    reg = builtin_ontology()
    ast = parse("<push, a, <pull, b, <zap, c, NULL>>>")
    whole = [i.kind for i in validate_intent(ast, reg)]
    parts = [i.kind for s in ast.sentences() for i in validate_intent(
        type(s)(s.verb, s.object, s.modifiers, None), reg)]
    assert whole == parts == ["UnknownVerb"]


def test_check_intent_raises():
    with pytest.raises(IntentValidationError):
        check_intent(parse("<zap, x>"), builtin_ontology())


def test_json_round_trip(tmp_path):
    reg = load_ontology(DATA / "ontology_example.json")
    assert reg.lookup("transcode").category is VerbCategory.CONSTRUCT
    again = ontology_from_json(json.loads(json.dumps(reg.to_json())))
    assert [v for v in again] == [v for v in reg]


def test_json_conflicting_builtin():
    doc = {"verbs": [{"name": "push", "category": "regulate"}]}
    with pytest.raises(DuplicateVerb):
        ontology_from_json(doc)


def test_json_frozen_flag():
    assert ontology_from_json({"verbs": [], "frozen": True}).frozen
