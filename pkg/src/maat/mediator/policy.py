"""Constraint evaluation shared by user modifiers and stakeholder policies."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

from ..compiler import Constraint, Hardness
from ..intent_lang import Cidr, IntentSyntaxError, Quantity, Text, TypedValue, parse
from ..simnet.topology import AttrValue


def compare(actual: TypedValue, comparator: str, expected: TypedValue) -> bool:
    """``actual <comparator> expected``; values of unrelated kinds never match.

    Quantities compare after unit conversion within a dimension; a unitless
    side adopts the other side's unit. CIDR ``=`` means containment in the
    expected block. Text supports equality only.
    """
    if isinstance(actual, Quantity) and isinstance(expected, Quantity):
        if actual.unit and expected.unit:
            if actual.dimension != expected.dimension:
                return False
            a, b = actual.base(), expected.base()
        else:
            a, b = Fraction(repr(actual.number)), Fraction(repr(expected.number))
        return _ordered(a, comparator, b)
    if isinstance(actual, Cidr) and isinstance(expected, Cidr):
        if comparator != "=":
            return False
        net_a, net_b = actual.network, expected.network
        return net_a.version == net_b.version and net_a.subnet_of(net_b)
    if isinstance(actual, Text) and isinstance(expected, Text):
        return comparator == "=" and actual.text == expected.text
    return False


def _ordered(a, comparator: str, b) -> bool:
    if comparator == "=":
        return a == b
    if comparator == "<":
        return a < b
    if comparator == ">":
        return a > b
    if comparator == "<=":
        return a <= b
    return a >= b


def satisfies(constraint: Constraint, attrs: Mapping[str, AttrValue]) -> bool:
    """Whether ``attrs`` meet ``constraint``. Missing attributes never do.

    For set-valued attributes ``=`` is membership and ordering comparators
    must hold for every member.
    """
    actual = attrs.get(constraint.key)
    if actual is None:
        return False
    if isinstance(actual, frozenset):
        if constraint.comparator == "=":
            return any(compare(v, "=", constraint.value) for v in actual)
        return bool(actual) and all(compare(v, constraint.comparator, constraint.value) for v in actual)
    return compare(actual, constraint.comparator, constraint.value)


def parse_constraint(text: str, hardness: Hardness = Hardness.HARD) -> Constraint:
    """Read ``key<cmp>value`` using the intent modifier syntax."""
    try:
        atoms = parse(f"<x, x, ({text}), NULL>").atoms()
    except IntentSyntaxError as exc:
        raise ValueError(f"bad constraint {text!r}: {exc}") from None
    a = atoms[0]
    return Constraint(a.key, a.comparator, a.value, hardness)


@dataclass(frozen=True)
class PolicyRule:
    """Adds ``utility_delta`` to every candidate matching all of ``predicate``."""

    stakeholder_id: str
    predicate: tuple[Constraint, ...]
    utility_delta: float
    priority: int = 0

    def __post_init__(self):
        object.__setattr__(self, "predicate", tuple(self.predicate))
        if not math.isfinite(self.utility_delta):
            raise ValueError("utility_delta must be finite")

    def matches(self, attrs: Mapping[str, AttrValue]) -> bool:
        return all(satisfies(c, attrs) for c in self.predicate)

    def to_json(self) -> dict[str, Any]:
        return {
            "stakeholder_id": self.stakeholder_id,
            "predicate": [str(c) for c in self.predicate],
            "utility_delta": self.utility_delta,
            "priority": self.priority,
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> PolicyRule:
        pred = doc.get("predicate", [])
        if isinstance(pred, str):
            pred = [pred]
        return cls(
            doc.get("stakeholder_id", doc.get("stakeholder")),
            tuple(Constraint.from_json(p) if isinstance(p, dict) else parse_constraint(p) for p in pred),
            float(doc["utility_delta"]),
            int(doc.get("priority", 0)),
        )


def ordered_rules(rules: Iterable[PolicyRule]) -> list[PolicyRule]:
    """Rules in their evaluation order: (priority, stakeholder, position)."""
    indexed = list(enumerate(rules))
    indexed.sort(key=lambda ir: (ir[1].priority, ir[1].stakeholder_id, ir[0]))
    return [r for _, r in indexed]


def utility(attrs: Mapping[str, AttrValue], soft: Sequence[Constraint],
            rules: Sequence[PolicyRule], soft_weight: float = 1.0) -> tuple[Fraction, int]:
    """Exact score of one candidate and the number of soft constraints it meets.

    score = soft_weight * (met soft / all soft, 1 when there are none)
            + sum of matching rule deltas
    """
    met = sum(1 for c in soft if satisfies(c, attrs))
    ratio = Fraction(met, len(soft)) if soft else Fraction(1)
    total = Fraction(soft_weight) * ratio
    for rule in rules:
        if rule.matches(attrs):
            total += Fraction(rule.utility_delta)
    return total, met
