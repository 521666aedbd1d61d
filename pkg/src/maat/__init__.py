"""Intent language, compiler and mediation agents for intent-driven networking."""
from .compiler import ReificationPlan, compile_intent
from .content_ref import canonical, classify
from .intent_lang import IntentExpr, IntentSyntaxError, parse, render
from .ontology import OntologyRegistry, builtin_ontology, load_ontology, validate_intent

__version__ = "0.1.0"

__all__ = [
    "IntentExpr", "IntentSyntaxError", "OntologyRegistry", "ReificationPlan",
    "builtin_ontology", "canonical", "classify", "compile_intent", "load_ontology",
    "parse", "render", "validate_intent",
]
