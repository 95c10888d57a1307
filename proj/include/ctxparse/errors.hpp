#pragma once

#include <stdexcept>
#include <string>

namespace ctxparse {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file (schema, interaction, vocab, checkpoint container).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A foreign key endpoint or a column's table index is out of range.
class InvalidForeignKey : public ParseError {
 public:
  using ParseError::ParseError;
};

/// An interaction references a database id that was not loaded.
class UnknownDatabase : public Error {
 public:
  using Error::Error;
};

/// SQL text outside the supported subset; carries the turn index when known.
class SQLParseError : public Error {
 public:
  explicit SQLParseError(const std::string& what, int turn_index = -1)
      : Error(what), turn_index(turn_index) {}
  int turn_index;
};

/// Incompatible tensor shapes; both shapes are reported in the message.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// Precomputed embedding record disagrees with the input layout.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A schema header with no tokens reached the schema encoder.
class EmptyHeader : public Error {
 public:
  using Error::Error;
};

/// Graph extension attempted against a different schema.
class SchemaMismatch : public Error {
 public:
  using Error::Error;
};

/// Decay schedule parameters violate their constraints.
class InvalidSchedule : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Relation id outside the RelationType enum.
class UnknownRelationId : public Error {
 public:
  using Error::Error;
};

/// Editing requested at a turn with no previous query.
class NoPreviousQuery : public Error {
 public:
  using Error::Error;
};

/// Aligned containers have different lengths.
class LengthMismatch : public Error {
 public:
  using Error::Error;
};

/// Checkpoint tensors do not match the configured model widths.
class CheckpointMismatch : public Error {
 public:
  using Error::Error;
};

/// An operation that needs at least one element received none.
class EmptyInput : public Error {
 public:
  using Error::Error;
};

/// Requested interaction id does not exist in the corpus.
class UnknownInteraction : public Error {
 public:
  using Error::Error;
};

}  // namespace ctxparse
