"""Lowering of validated intents to reification plans.

Sentences are emitted innermost-subject-first, so every action can refer to
its subject's action by an earlier index. Each sentence's modifiers become
constraints on its own action only.
"""
from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from typing import Any, Union

from .content_ref import Url, classify
from .intent_lang import (
    IntentExpr,
    ModifierAtom,
    Priority,
    TypedValue,
    render_value,
    value_from_json,
    value_to_json,
)
from .ontology import OntologyRegistry, VerbCategory, validate_intent


class Hardness(enum.Enum):
    HARD = "hard"
    SOFT = "soft"


@dataclass(frozen=True)
class Constraint:
    key: str
    comparator: str
    value: TypedValue
    hardness: Hardness = Hardness.HARD

    @classmethod
    def from_atom(cls, atom: ModifierAtom) -> Constraint:
        hardness = Hardness.HARD if atom.priority is Priority.ESSENTIAL else Hardness.SOFT
        return cls(atom.key, atom.comparator, atom.value, hardness)

    @property
    def hard(self) -> bool:
        return self.hardness is Hardness.HARD

    def __str__(self) -> str:
        return f"{self.key}{self.comparator}{render_value(self.value)}"

    def to_json(self) -> dict[str, Any]:
        return {"key": self.key, "comparator": self.comparator,
                "value": value_to_json(self.value), "hardness": self.hardness.value}

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> Constraint:
        return cls(doc["key"], doc["comparator"], value_from_json(doc["value"]), Hardness(doc["hardness"]))


@dataclass(frozen=True)
class ActionRef:
    index: int


Link = Union[ActionRef, str, None]


@dataclass(frozen=True)
class Discover:
    service_name: str
    constraints: tuple[Constraint, ...] = ()
    payload: Link = None


@dataclass(frozen=True)
class Advertize:
    service_name: str
    constraints: tuple[Constraint, ...] = ()
    instance: str | None = None


@dataclass(frozen=True)
class Connect:
    peer_spec: str
    constraints: tuple[Constraint, ...] = ()
    target: Link = None


@dataclass(frozen=True)
class Push:
    content: str
    constraints: tuple[Constraint, ...] = ()
    target: Link = None
    announce: bool = False


@dataclass(frozen=True)
class Pull:
    content: str
    constraints: tuple[Constraint, ...] = ()
    source: Link = None


@dataclass(frozen=True)
class Allocate:
    resource_kind: str
    constraints: tuple[Constraint, ...] = ()
    over: Link = None


@dataclass(frozen=True)
class Regulate:
    kind: str  # prioritize | block | any registered regulate verb
    traffic_spec: str
    constraints: tuple[Constraint, ...] = ()


@dataclass(frozen=True)
class Invoke:
    """A registered, non-built-in construct or transfer verb.

    Mediated by finding a node offering a service named after the verb.
    """

    verb: str
    object: str
    constraints: tuple[Constraint, ...] = ()
    input: Link = None


PrimitiveAction = Union[Discover, Advertize, Connect, Push, Pull, Allocate, Regulate, Invoke]

_OPS: dict[type, str] = {
    Discover: "discover", Advertize: "advertize", Connect: "connect", Push: "push",
    Pull: "pull", Allocate: "allocate", Regulate: "regulate", Invoke: "invoke",
}
_TYPES = {v: k for k, v in _OPS.items()}


def op_name(action: PrimitiveAction) -> str:
    return _OPS[type(action)]


def action_link(action: PrimitiveAction) -> Link:
    for name in ("payload", "target", "source", "over", "input"):
        if hasattr(action, name):
            return getattr(action, name)
    return None


@dataclass(frozen=True)
class ReificationPlan:
    actions: tuple[PrimitiveAction, ...]
    root: ActionRef

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        if not 0 <= self.root.index < len(self.actions):
            raise ValueError("root must reference an action in the plan")
        for i, a in enumerate(self.actions):
            link = action_link(a)
            if isinstance(link, ActionRef) and not 0 <= link.index < i:
                raise ValueError(f"action {i} refers forward to {link.index}")

    def __len__(self) -> int:
        return len(self.actions)

    def to_json(self) -> dict[str, Any]:
        return {"actions": [action_to_json(a) for a in self.actions], "root": self.root.index}

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> ReificationPlan:
        return cls(tuple(action_from_json(a) for a in doc["actions"]), ActionRef(doc["root"]))

    def canonical_json(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


class CompileOnInvalid(ValueError):
    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues) or "intent failed validation")


class IndexOutOfRange(IndexError):
    pass


def _constraints(intent: IntentExpr) -> tuple[Constraint, ...]:
    return tuple(Constraint.from_atom(a) for a in intent.atoms())


def compile_intent(intent: IntentExpr, reg: OntologyRegistry) -> ReificationPlan:
    issues = validate_intent(intent, reg)
    if issues:
        raise CompileOnInvalid(issues)
    actions: list[PrimitiveAction] = []
    # iterate from the innermost sentence outwards
    link: Link = None
    for sentence in reversed(intent.sentences()):
        if isinstance(sentence.subject, str):
            link = sentence.subject
        elif sentence.subject is None:
            link = None
        actions.append(_lower(sentence, link, actions, reg))
        link = ActionRef(len(actions) - 1)
    return ReificationPlan(tuple(actions), ActionRef(len(actions) - 1))


compile = compile_intent  # noqa: A001


def _lower(sentence: IntentExpr, link: Link, earlier: list[PrimitiveAction],
           reg: OntologyRegistry) -> PrimitiveAction:
    cs = _constraints(sentence)
    verb, obj = sentence.verb, sentence.object
    if verb == "discover":
        return Discover(obj, cs, link)
    if verb == "advertize":
        return Advertize(obj, cs, link if isinstance(link, str) else None)
    if verb == "connect":
        return Connect(obj, cs, link)
    if verb == "push":
        announce = (
            isinstance(link, ActionRef)
            and isinstance(earlier[link.index], Push)
            and not isinstance(classify(obj), Url)
        )
        return Push(obj, cs, link, announce)
    if verb == "pull":
        return Pull(obj, cs, link)
    if verb == "allocate":
        return Allocate(obj, cs, link)
    spec = reg.lookup(verb)
    if spec.category is VerbCategory.REGULATE:
        return Regulate(verb, obj, cs)
    return Invoke(verb, obj, cs, link)


def plan_constraints(plan: ReificationPlan, ref: ActionRef | int) -> list[Constraint]:
    index = ref.index if isinstance(ref, ActionRef) else ref
    if not 0 <= index < len(plan.actions):
        raise IndexOutOfRange(f"action {index} not in plan of length {len(plan.actions)}")
    return list(plan.actions[index].constraints)


# --------------------------------------------------------------------------
# JSON

def _link_to_json(link: Link) -> Any:
    return {"ref": link.index} if isinstance(link, ActionRef) else link


def _link_from_json(doc: Any) -> Link:
    return ActionRef(doc["ref"]) if isinstance(doc, dict) else doc


_FIELDS = {
    Discover: ("service_name", "payload"),
    Advertize: ("service_name", "instance"),
    Connect: ("peer_spec", "target"),
    Push: ("content", "target", "announce"),
    Pull: ("content", "source"),
    Allocate: ("resource_kind", "over"),
    Regulate: ("kind", "traffic_spec"),
    Invoke: ("verb", "object", "input"),
}
_LINK_FIELDS = {"payload", "target", "source", "over", "input"}


def action_to_json(action: PrimitiveAction) -> dict[str, Any]:
    doc: dict[str, Any] = {"op": op_name(action)}
    for name in _FIELDS[type(action)]:
        value = getattr(action, name)
        doc[name] = _link_to_json(value) if name in _LINK_FIELDS else value
    doc["constraints"] = [c.to_json() for c in action.constraints]
    return doc


def action_from_json(doc: dict[str, Any]) -> PrimitiveAction:
    cls = _TYPES[doc["op"]]
    kwargs = {
        name: _link_from_json(doc.get(name)) if name in _LINK_FIELDS else doc[name]
        for name in _FIELDS[cls]
    }
    kwargs["constraints"] = tuple(Constraint.from_json(c) for c in doc.get("constraints", []))
    return cls(**kwargs)
