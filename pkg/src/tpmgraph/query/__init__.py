from .ast import (
    Comparison,
    Constant,
    FilterExpr,
    PathRegex,
    QueryAst,
    RAlt,
    RRepeat,
    RSeq,
    RTerm,
    TimeSemantic,
    TriplePattern,
    Variable,
    pretty,
)
from .parser import parse_path_regex, parse_query, resolve_time_keyword

__all__ = [
    "Comparison",
    "Constant",
    "FilterExpr",
    "PathRegex",
    "QueryAst",
    "RAlt",
    "RRepeat",
    "RSeq",
    "RTerm",
    "TimeSemantic",
    "TriplePattern",
    "Variable",
    "parse_path_regex",
    "parse_query",
    "pretty",
    "resolve_time_keyword",
]
