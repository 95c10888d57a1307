#pragma once

#include <string>
#include <vector>

#include "ctxparse/corpus.hpp"

namespace ctxparse {

/// Typed edges of the contextualized schema graph. Values are the row ids of
/// the relation embedding tables.
enum class RelationType : int {
  SAME_TABLE = 0,
  FOREIGN_KEY = 1,
  FOREIGN_KEY_REV = 2,
  EXACT_MATCH_COLUMN = 3,
  EXACT_MATCH_TABLE = 4,
  PARTIAL_MATCH_COLUMN = 5,
  PARTIAL_MATCH_TABLE = 6,
  NONE = 7,
  SELF = 8,
};

constexpr int kNumRelationTypes = 9;

const char* relation_type_name(RelationType t);
RelationType relation_type_from_id(int id);

/// Graph over all utterance tokens seen so far plus the schema headers.
/// Token nodes come first in turn order, then header nodes; the DCRE relation
/// matrix uses the same ordering. Immutable: extend_graph returns a new value.
struct ContextGraph {
  std::string database_id;
  std::vector<std::string> token_nodes;
  std::vector<int> turn_of_node;  // 0-based turn per token node
  int num_turns = 0;
  int num_headers = 0;
  /// token×header, row-major; symmetric by construction.
  std::vector<RelationType> interactive;
  /// header×header, row-major.
  std::vector<RelationType> internal;

  int num_tokens() const { return static_cast<int>(token_nodes.size()); }
  int num_nodes() const { return num_tokens() + num_headers; }
};

/// SAME_TABLE between same-table columns and between a column and its
/// table's star header; FOREIGN_KEY / FOREIGN_KEY_REV on declared pairs
/// (overriding SAME_TABLE); SELF diagonal; NONE elsewhere.
std::vector<RelationType> build_internal_edges(const Schema& schema);

/// Contiguous n-grams (n <= 5) of the turn's tokens against header name
/// token sequences: the full name gives EXACT_MATCH_*, a strict contiguous
/// run inside it gives PARTIAL_MATCH_*; EXACT wins per pair. N-grams holding
/// a stopword never match; table-name matches attach to the star header.
std::vector<RelationType> build_interactive_edges(
    const std::vector<std::string>& tokens, const Schema& schema);

ContextGraph build_graph(const std::vector<std::vector<std::string>>& turns,
                         const Schema& schema);

/// Append one turn; prior rows are preserved verbatim. Throws SchemaMismatch
/// when the graph was built over a different schema.
ContextGraph extend_graph(const ContextGraph& graph,
                          const std::vector<std::string>& new_turn_tokens,
                          const Schema& schema);

/// Full node×node relation-id matrix in DCRE node order. Token↔token pairs
/// across and within turns are NONE off the diagonal.
std::vector<int> relation_matrix(const ContextGraph& graph);

bool is_matching_stopword(const std::string& token);

}  // namespace ctxparse
