#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctxparse/errors.hpp"
#include "ctxparse/sql_clauses.hpp"

namespace ctxparse {

enum class HeaderKind { TABLE_STAR, COLUMN };

/// One schema entry as the encoder sees it: "[table.*]" for a table,
/// "[table.column]" for a column, with the name's word tokens for linking.
struct SchemaHeader {
  std::string text;
  HeaderKind kind = HeaderKind::COLUMN;
  int table_index = -1;
  std::optional<int> column_index;
  std::vector<std::string> tokens;
};

struct Schema {
  std::string database_id;
  std::vector<std::string> tables;
  std::vector<std::pair<int, std::string>> columns;  // (table_index, name)
  std::vector<std::pair<int, int>> foreign_keys;     // column index pairs
  std::vector<SchemaHeader> headers;
};

struct Turn {
  std::vector<std::string> utterance_tokens;
  std::string gold_sql;
  ClauseDecomposition gold_clauses;
};

struct Interaction {
  std::string database_id;
  std::vector<Turn> turns;
};

/// Lowercase word/punctuation tokenizer. Splits on whitespace; runs of
/// alphanumerics form one token; underscores separate without emitting a
/// token; any other character is its own token.
std::vector<std::string> tokenize(const std::string& text);

/// Star header per table in table order, then one header per column in
/// column order.
std::vector<SchemaHeader> format_headers(
    const std::vector<std::string>& tables,
    const std::vector<std::pair<int, std::string>>& columns);

/// Parse a file holding exactly one schema document.
Schema load_schema(const std::string& path);

/// Parse a file holding one schema document or an array of them, keyed by
/// database id.
std::map<std::string, Schema> load_schemas(const std::string& path);

std::vector<Interaction> load_interactions(
    const std::string& path, const std::map<std::string, Schema>& schemas);

/// Token ids. 0..4 are PAD/UNK/CLS/SEP/EOS, then the SQL keyword surface
/// forms, then corpus tokens in first-appearance order.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kEos = 4;

  Vocab();

  /// Insert if absent; returns the token's id either way.
  int add(const std::string& token);
  /// kUnk for tokens outside the vocabulary.
  int id_of(const std::string& token) const;
  const std::string& token_of(int id) const;
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  /// Keyword surface forms holding the stable ids right after the reserved
  /// symbols, in this exact order.
  static const std::vector<std::string>& sql_keywords();

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

Vocab build_vocab(const std::vector<Interaction>& interactions, int min_count);
/// Also admits every schema header token regardless of count, so linking
/// never embeds a header through UNK.
Vocab build_vocab(const std::vector<Interaction>& interactions,
                  const std::map<std::string, Schema>& schemas, int min_count);

}  // namespace ctxparse
