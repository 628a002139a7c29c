"""Molecular fingerprints, structural sequences and fused encodings."""

from ._molgeom import (
    DegenerateMaskError,
    GeometryError,
    GrammarError,
    LengthError,
    MismatchError,
    MolgeomError,
    SchemaError,
    ShapeError,
    UnsupportedTokenError,
    fingerprint,
    murmur3_32,
    parse_selfies,
    projector_forward,
    run_cli,
    shape_trace,
    tokenize,
)

__all__ = [
    "DegenerateMaskError",
    "GeometryError",
    "GrammarError",
    "LengthError",
    "MismatchError",
    "MolgeomError",
    "SchemaError",
    "ShapeError",
    "UnsupportedTokenError",
    "fingerprint",
    "murmur3_32",
    "parse_selfies",
    "projector_forward",
    "run_cli",
    "shape_trace",
    "tokenize",
]
