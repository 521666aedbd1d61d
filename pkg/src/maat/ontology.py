"""Verb ontology: which verbs exist and what they may be applied to."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator

from .content_ref import CcnName, InfoHash, classify
from .intent_lang import VERB_RE, IntentExpr


class VerbCategory(enum.Enum):
    CONSTRUCT = "construct"
    TRANSFER = "transfer"
    REGULATE = "regulate"


class ObjectKind(enum.Enum):
    SERVICE = "service"
    CONTENT = "content"
    RESOURCE = "resource"
    TRAFFIC_CLASS = "traffic_class"
    ANY = "any"


class SubjectKind(enum.Enum):
    NULL = "null"
    IDENTIFIER = "identifier"
    NESTED = "nested"


ANY_SUBJECT = frozenset(SubjectKind)


def subject_kind(intent: IntentExpr) -> SubjectKind:
    if intent.subject is None:
        return SubjectKind.NULL
    if isinstance(intent.subject, str):
        return SubjectKind.IDENTIFIER
    return SubjectKind.NESTED


@dataclass(frozen=True)
class VerbSpec:
    name: str
    category: VerbCategory
    object_kind: ObjectKind = ObjectKind.ANY
    subject_allowed: frozenset[SubjectKind] = ANY_SUBJECT
    description: str = ""

    def __post_init__(self):
        if not VERB_RE.match(self.name):
            raise ValueError(f"invalid verb name {self.name!r}")
        object.__setattr__(self, "name", self.name.lower())
        object.__setattr__(self, "subject_allowed", frozenset(self.subject_allowed))

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "category": self.category.value,
            "object_kind": self.object_kind.value,
            "subject_allowed": sorted(k.value for k in self.subject_allowed),
            "description": self.description,
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> VerbSpec:
        return cls(
            doc["name"],
            VerbCategory(doc["category"]),
            ObjectKind(doc.get("object_kind", "any")),
            frozenset(SubjectKind(k) for k in doc.get("subject_allowed", [k.value for k in SubjectKind])),
            doc.get("description", ""),
        )


class OntologyError(Exception):
    pass


class VerbNotFound(OntologyError, KeyError):
    pass


class DuplicateVerb(OntologyError):
    pass


class FrozenRegistry(OntologyError):
    pass


_C, _T, _R = VerbCategory.CONSTRUCT, VerbCategory.TRANSFER, VerbCategory.REGULATE
_N, _I, _S = SubjectKind.NULL, SubjectKind.IDENTIFIER, SubjectKind.NESTED

BUILTIN_VERBS: tuple[VerbSpec, ...] = (
    VerbSpec("connect", _C, ObjectKind.SERVICE, {_I, _S, _N}, "form a connection to a peer application"),
    VerbSpec("discover", _C, ObjectKind.SERVICE, ANY_SUBJECT, "look for applications offering a service"),
    VerbSpec("advertize", _C, ObjectKind.SERVICE, {_N, _I}, "announce a service able to serve other intents"),
    VerbSpec("push", _T, ObjectKind.CONTENT, ANY_SUBJECT, "place content, or announce it once placed"),
    VerbSpec("pull", _T, ObjectKind.CONTENT, ANY_SUBJECT, "fetch content"),
    VerbSpec("allocate", _R, ObjectKind.RESOURCE, ANY_SUBJECT, "reserve a network resource"),
    VerbSpec("prioritize", _R, ObjectKind.TRAFFIC_CLASS, {_N}, "raise the priority of a traffic class"),
    VerbSpec("block", _R, ObjectKind.TRAFFIC_CLASS, {_N}, "drop a traffic class in the network"),
)
BUILTIN_NAMES = frozenset(v.name for v in BUILTIN_VERBS)


class OntologyRegistry:
    """Case-insensitive verb table. Registration returns a new registry."""

    def __init__(self, verbs: Iterable[VerbSpec] = (), *, frozen: bool = False):
        self._verbs: dict[str, VerbSpec] = {}
        for spec in verbs:
            if spec.name in self._verbs:
                raise DuplicateVerb(spec.name)
            self._verbs[spec.name] = spec
        self.frozen = frozen

    def __contains__(self, name: str) -> bool:
        return name.lower() in self._verbs

    def __iter__(self) -> Iterator[VerbSpec]:
        return iter(self._verbs.values())

    def __len__(self) -> int:
        return len(self._verbs)

    def lookup(self, name: str) -> VerbSpec:
        try:
            return self._verbs[name.lower()]
        except KeyError:
            raise VerbNotFound(name) from None

    def register(self, spec: VerbSpec) -> OntologyRegistry:
        if self.frozen:
            raise FrozenRegistry(f"cannot register {spec.name!r}: registry is frozen")
        if spec.name in self._verbs:
            raise DuplicateVerb(spec.name)
        return OntologyRegistry([*self._verbs.values(), spec])

    def freeze(self) -> OntologyRegistry:
        return OntologyRegistry(self._verbs.values(), frozen=True)

    def to_json(self) -> dict[str, Any]:
        return {"verbs": [v.to_json() for v in self._verbs.values()]}


def builtin_ontology() -> OntologyRegistry:
    return OntologyRegistry(BUILTIN_VERBS)


def register_verb(reg: OntologyRegistry, spec: VerbSpec) -> OntologyRegistry:
    return reg.register(spec)


def ontology_from_json(doc: dict[str, Any]) -> OntologyRegistry:
    """Built-ins plus every extra verb listed in ``doc``.

    Built-in entries in the document are accepted only if they match exactly.
    """
    reg = builtin_ontology()
    for entry in doc.get("verbs", []):
        spec = VerbSpec.from_json(entry)
        if spec.name in BUILTIN_NAMES:
            if reg.lookup(spec.name) != spec:
                raise DuplicateVerb(f"{spec.name!r} conflicts with the built-in definition")
            continue
        reg = reg.register(spec)
    return reg.freeze() if doc.get("frozen") else reg


def load_ontology(path: str | Path | None) -> OntologyRegistry:
    if path is None:
        return builtin_ontology()
    return ontology_from_json(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------
# Validation

@dataclass(frozen=True)
class ValidationIssue:
    kind: str  # UnknownVerb | SubjectKindMismatch | ObjectKindMismatch
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind} at {self.path}: {self.message}"


class IntentValidationError(ValueError):
    def __init__(self, issues: list[ValidationIssue]):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))


def validate_intent(intent: IntentExpr, reg: OntologyRegistry) -> list[ValidationIssue]:
    """Check every sentence against the registry; an empty list means valid."""
    issues: list[ValidationIssue] = []
    path = "$"
    for sentence in intent.sentences():
        try:
            spec = reg.lookup(sentence.verb)
        except VerbNotFound:
            issues.append(ValidationIssue("UnknownVerb", path, f"no verb named {sentence.verb!r}"))
        else:
            kind = subject_kind(sentence)
            if kind not in spec.subject_allowed:
                allowed = ", ".join(sorted(k.value for k in spec.subject_allowed))
                issues.append(ValidationIssue(
                    "SubjectKindMismatch", path,
                    f"{spec.name} takes a subject of kind {{{allowed}}}, got {kind.value}",
                ))
            # object kinds are only enforced for traffic classes
            if spec.object_kind is ObjectKind.TRAFFIC_CLASS and isinstance(
                classify(sentence.object), (CcnName, InfoHash)
            ):
                issues.append(ValidationIssue(
                    "ObjectKindMismatch", path, f"{sentence.object!r} names content, not a traffic class",
                ))
        path += ".subject"
    return issues


def check_intent(intent: IntentExpr, reg: OntologyRegistry) -> None:
    issues = validate_intent(intent, reg)
    if issues:
        raise IntentValidationError(issues)
