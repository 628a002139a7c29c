#pragma once

#include <stdexcept>
#include <string>

namespace molgeom {

// Base of every error raised by the library. Each subclass maps to one
// documented CLI exit code (see tools/molgeom_cli.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input documents: missing field, wrong arity, malformed JSON, bad config.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Non-finite or coincident coordinates.
class GeometryError : public Error {
 public:
  using Error::Error;
};

// Bond endpoints or atom indices out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

// SELFIES string that does not follow the bracket grammar.
class GrammarError : public Error {
 public:
  using Error::Error;
};

// Well-formed SELFIES token that lies outside the supported subset.
class UnsupportedTokenError : public Error {
 public:
  using Error::Error;
};

// SELFIES-derived graph and conformer disagree.
class MismatchError : public Error {
 public:
  using Error::Error;
};

// Token missing from an embedding vocabulary.
class UnknownTokenError : public Error {
 public:
  using Error::Error;
};

// Sequence longer than the padded length.
class LengthError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Every column of an additive mask is the padding sentinel.
class DegenerateMaskError : public Error {
 public:
  using Error::Error;
};

// Backward pass called with a cache from a different forward.
class CacheMismatchError : public Error {
 public:
  using Error::Error;
};

// File could not be opened or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace molgeom
