#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "ctxparse/errors.hpp"

namespace ctxparse {

enum class ClauseKind {
  SELECT,
  FROM,
  WHERE,
  GROUP_BY,
  HAVING,
  ORDER_BY,
  LIMIT,
  SET_OP,
};

const char* clause_kind_name(ClauseKind kind);

/// Order-free decomposition of one SQL query. Every kind is present; absent
/// clauses hold empty sets. Elements are normalized strings: lowercased,
/// literals replaced by "value", column references in "table.column" form
/// with aliases resolved, symmetric comparisons column-first with sorted
/// sides, subqueries canonically serialized in place.
struct ClauseDecomposition {
  std::map<ClauseKind, std::set<std::string>> clause_sets;

  ClauseDecomposition();

  std::set<std::string>& at(ClauseKind kind) { return clause_sets.at(kind); }
  const std::set<std::string>& at(ClauseKind kind) const {
    return clause_sets.at(kind);
  }
  bool operator==(const ClauseDecomposition& other) const {
    return clause_sets == other.clause_sets;
  }
};

/// Decompose a query in the decoder's SQL subset. Throws SQLParseError on
/// unbalanced parentheses or tokens outside the subset.
ClauseDecomposition parse_sql_clauses(const std::string& sql);

/// Deterministic serialization of a decomposition. Re-parsing the result
/// reproduces the decomposition exactly.
std::string canonical_sql(const ClauseDecomposition& d);

/// Split SQL text into tokens: identifiers (dots kept inside), numbers,
/// quoted strings as single tokens, multi-char comparison operators,
/// punctuation. Lowercases everything outside quotes.
std::vector<std::string> lex_sql(const std::string& sql);

}  // namespace ctxparse
