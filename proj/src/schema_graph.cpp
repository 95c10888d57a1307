#include "ctxparse/schema_graph.hpp"

#include <algorithm>

namespace ctxparse {

const char* relation_type_name(RelationType t) {
  switch (t) {
    case RelationType::SAME_TABLE: return "same_table";
    case RelationType::FOREIGN_KEY: return "foreign_key";
    case RelationType::FOREIGN_KEY_REV: return "foreign_key_rev";
    case RelationType::EXACT_MATCH_COLUMN: return "exact_match_column";
    case RelationType::EXACT_MATCH_TABLE: return "exact_match_table";
    case RelationType::PARTIAL_MATCH_COLUMN: return "partial_match_column";
    case RelationType::PARTIAL_MATCH_TABLE: return "partial_match_table";
    case RelationType::NONE: return "none";
    case RelationType::SELF: return "self";
  }
  return "?";
}

RelationType relation_type_from_id(int id) {
  if (id < 0 || id >= kNumRelationTypes)
    throw UnknownRelationId("relation id out of range: " + std::to_string(id));
  return static_cast<RelationType>(id);
}

bool is_matching_stopword(const std::string& token) {
  static const std::vector<std::string> kStop = {"the", "a",    "an",   "of",
                                                 "is",  "are", "what", "which"};
  return std::find(kStop.begin(), kStop.end(), token) != kStop.end();
}

std::vector<RelationType> build_internal_edges(const Schema& schema) {
  int t = static_cast<int>(schema.tables.size());
  int h = static_cast<int>(schema.headers.size());
  std::vector<RelationType> m(static_cast<std::size_t>(h) * h,
                              RelationType::NONE);
  auto at = [&](int i, int j) -> RelationType& {
    return m[static_cast<std::size_t>(i) * h + j];
  };
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < h; ++j) {
      if (i == j) {
        at(i, j) = RelationType::SELF;
        continue;
      }
      const SchemaHeader& a = schema.headers[i];
      const SchemaHeader& b = schema.headers[j];
      if (a.table_index != b.table_index) continue;
      bool both_columns =
          a.kind == HeaderKind::COLUMN && b.kind == HeaderKind::COLUMN;
      bool column_and_star = a.kind != b.kind;
      if (both_columns || column_and_star) at(i, j) = RelationType::SAME_TABLE;
    }
  }
  for (const auto& [ca, cb] : schema.foreign_keys) {
    int i = t + ca, j = t + cb;
    at(i, j) = RelationType::FOREIGN_KEY;
    at(j, i) = RelationType::FOREIGN_KEY_REV;
  }
  return m;
}

namespace {

bool contiguous_run_inside(const std::vector<std::string>& span,
                           const std::vector<std::string>& name) {
  if (span.size() > name.size()) return false;
  for (std::size_t start = 0; start + span.size() <= name.size(); ++start) {
    bool all = true;
    for (std::size_t k = 0; k < span.size(); ++k)
      if (name[start + k] != span[k]) {
        all = false;
        break;
      }
    if (all) return true;
  }
  return false;
}

bool stronger(RelationType a, RelationType b) {
  auto rank = [](RelationType t) {
    switch (t) {
      case RelationType::EXACT_MATCH_COLUMN:
      case RelationType::EXACT_MATCH_TABLE:
        return 2;
      case RelationType::PARTIAL_MATCH_COLUMN:
      case RelationType::PARTIAL_MATCH_TABLE:
        return 1;
      default:
        return 0;
    }
  };
  return rank(a) > rank(b);
}

}  // namespace

std::vector<RelationType> build_interactive_edges(
    const std::vector<std::string>& tokens, const Schema& schema) {
  int n = static_cast<int>(tokens.size());
  int h = static_cast<int>(schema.headers.size());
  std::vector<RelationType> m(static_cast<std::size_t>(n) * h,
                              RelationType::NONE);
  auto at = [&](int i, int j) -> RelationType& {
    return m[static_cast<std::size_t>(i) * h + j];
  };
  constexpr int kMaxGram = 5;
  for (int len = 1; len <= std::min(kMaxGram, n); ++len) {
    for (int start = 0; start + len <= n; ++start) {
      std::vector<std::string> span(tokens.begin() + start,
                                    tokens.begin() + start + len);
      if (std::any_of(span.begin(), span.end(), is_matching_stopword))
        continue;
      for (int j = 0; j < h; ++j) {
        const SchemaHeader& header = schema.headers[j];
        RelationType type;
        if (span == header.tokens) {
          type = header.kind == HeaderKind::TABLE_STAR
                     ? RelationType::EXACT_MATCH_TABLE
                     : RelationType::EXACT_MATCH_COLUMN;
        } else if (contiguous_run_inside(span, header.tokens)) {
          type = header.kind == HeaderKind::TABLE_STAR
                     ? RelationType::PARTIAL_MATCH_TABLE
                     : RelationType::PARTIAL_MATCH_COLUMN;
        } else {
          continue;
        }
        for (int k = start; k < start + len; ++k)
          if (stronger(type, at(k, j))) at(k, j) = type;
      }
    }
  }
  return m;
}

ContextGraph build_graph(const std::vector<std::vector<std::string>>& turns,
                         const Schema& schema) {
  ContextGraph g;
  g.database_id = schema.database_id;
  g.num_headers = static_cast<int>(schema.headers.size());
  g.internal = build_internal_edges(schema);
  for (const auto& turn : turns) g = extend_graph(g, turn, schema);
  return g;
}

ContextGraph extend_graph(const ContextGraph& graph,
                          const std::vector<std::string>& new_turn_tokens,
                          const Schema& schema) {
  if (!graph.database_id.empty() &&
      (graph.database_id != schema.database_id ||
       graph.num_headers != static_cast<int>(schema.headers.size())))
    throw SchemaMismatch("graph built over database '" + graph.database_id +
                         "' cannot extend with schema '" + schema.database_id +
                         "'");
  ContextGraph g = graph;
  if (g.internal.empty()) {
    g.database_id = schema.database_id;
    g.num_headers = static_cast<int>(schema.headers.size());
    g.internal = build_internal_edges(schema);
  }
  std::vector<RelationType> rows =
      build_interactive_edges(new_turn_tokens, schema);
  for (const std::string& t : new_turn_tokens) {
    g.token_nodes.push_back(t);
    g.turn_of_node.push_back(g.num_turns);
  }
  g.interactive.insert(g.interactive.end(), rows.begin(), rows.end());
  ++g.num_turns;
  return g;
}

std::vector<int> relation_matrix(const ContextGraph& graph) {
  int t = graph.num_tokens();
  int h = graph.num_headers;
  int n = t + h;
  std::vector<int> m(static_cast<std::size_t>(n) * n,
                     static_cast<int>(RelationType::NONE));
  auto at = [&](int i, int j) -> int& {
    return m[static_cast<std::size_t>(i) * n + j];
  };
  for (int i = 0; i < n; ++i) at(i, i) = static_cast<int>(RelationType::SELF);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < h; ++j) {
      int r = static_cast<int>(graph.interactive[static_cast<std::size_t>(i) *
                                                     h +
                                                 j]);
      at(i, t + j) = r;
      at(t + j, i) = r;
    }
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < h; ++j) {
      if (i == j) continue;
      at(t + i, t + j) = static_cast<int>(
          graph.internal[static_cast<std::size_t>(i) * h + j]);
    }
  return m;
}

}  // namespace ctxparse
