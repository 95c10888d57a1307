#include "ctxparse/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ctxparse {

using nlohmann::json;

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (char raw : text) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (std::isspace(c) || raw == '_') {
      flush();
    } else {
      flush();
      out.push_back(std::string(1, raw));
    }
  }
  flush();
  return out;
}

namespace {

std::string lower(std::string s) {
  for (char& c : s)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

json parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open file: " + path);
  json doc = json::parse(is, nullptr, false);
  if (doc.is_discarded()) throw ParseError("malformed JSON in " + path);
  return doc;
}

Schema schema_from_json(const json& doc, const std::string& path) {
  if (!doc.is_object())
    throw ParseError(path + ": schema document is not an object");
  for (const char* field : {"db_id", "table_names", "column_names",
                            "foreign_keys"})
    if (!doc.contains(field))
      throw ParseError(path + ": schema missing field '" + field + "'");

  Schema s;
  s.database_id = doc.at("db_id").get<std::string>();
  for (const json& t : doc.at("table_names"))
    s.tables.push_back(lower(t.get<std::string>()));
  if (s.tables.empty())
    throw ParseError(path + ": schema '" + s.database_id + "' has no tables");

  std::vector<std::pair<int, std::string>> raw_columns;
  for (const json& c : doc.at("column_names")) {
    if (!c.is_array() || c.size() != 2)
      throw ParseError(path + ": column entry must be [table_idx, name]");
    raw_columns.emplace_back(c[0].get<int>(), lower(c[1].get<std::string>()));
  }
  // benchmark-shaped files lead with a [-1, "*"] pseudo-column; drop it and
  // rebase foreign key indices
  int rebase = 0;
  if (!raw_columns.empty() && raw_columns.front().first == -1 &&
      raw_columns.front().second == "*") {
    raw_columns.erase(raw_columns.begin());
    rebase = 1;
  }
  for (auto& [ti, name] : raw_columns) {
    if (ti < 0 || ti >= static_cast<int>(s.tables.size()))
      throw ParseError(path + ": column '" + name +
                       "' references table index " + std::to_string(ti));
    s.columns.emplace_back(ti, name);
  }
  for (const json& fk : doc.at("foreign_keys")) {
    if (!fk.is_array() || fk.size() != 2)
      throw ParseError(path + ": foreign key entry must be [col, col]");
    int a = fk[0].get<int>() - rebase;
    int b = fk[1].get<int>() - rebase;
    int n = static_cast<int>(s.columns.size());
    if (a < 0 || a >= n || b < 0 || b >= n)
      throw InvalidForeignKey(path + ": foreign key (" +
                              std::to_string(fk[0].get<int>()) + "," +
                              std::to_string(fk[1].get<int>()) +
                              ") outside column range of '" + s.database_id +
                              "'");
    s.foreign_keys.emplace_back(a, b);
  }
  s.headers = format_headers(s.tables, s.columns);
  return s;
}

}  // namespace

std::vector<SchemaHeader> format_headers(
    const std::vector<std::string>& tables,
    const std::vector<std::pair<int, std::string>>& columns) {
  std::vector<SchemaHeader> headers;
  for (std::size_t t = 0; t < tables.size(); ++t) {
    SchemaHeader h;
    h.text = "[" + tables[t] + ".*]";
    h.kind = HeaderKind::TABLE_STAR;
    h.table_index = static_cast<int>(t);
    h.tokens = tokenize(tables[t]);
    if (h.tokens.empty()) throw ParseError("table with empty name");
    headers.push_back(std::move(h));
  }
  for (std::size_t c = 0; c < columns.size(); ++c) {
    SchemaHeader h;
    h.text = "[" + tables[columns[c].first] + "." + columns[c].second + "]";
    h.kind = HeaderKind::COLUMN;
    h.table_index = columns[c].first;
    h.column_index = static_cast<int>(c);
    h.tokens = tokenize(columns[c].second);
    if (h.tokens.empty()) throw ParseError("column with empty name");
    headers.push_back(std::move(h));
  }
  return headers;
}

Schema load_schema(const std::string& path) {
  json doc = parse_file(path);
  if (doc.is_array()) {
    if (doc.size() != 1)
      throw ParseError(path + ": expected one schema document, found " +
                       std::to_string(doc.size()));
    return schema_from_json(doc[0], path);
  }
  return schema_from_json(doc, path);
}

std::map<std::string, Schema> load_schemas(const std::string& path) {
  json doc = parse_file(path);
  std::map<std::string, Schema> out;
  auto insert = [&](const json& one) {
    Schema s = schema_from_json(one, path);
    if (out.count(s.database_id))
      throw ParseError(path + ": duplicate database id '" + s.database_id +
                       "'");
    out.emplace(s.database_id, std::move(s));
  };
  if (doc.is_array())
    for (const json& one : doc) insert(one);
  else
    insert(doc);
  return out;
}

std::vector<Interaction> load_interactions(
    const std::string& path, const std::map<std::string, Schema>& schemas) {
  json doc = parse_file(path);
  if (!doc.is_array()) throw ParseError(path + ": expected an array");
  std::vector<Interaction> out;
  for (std::size_t k = 0; k < doc.size(); ++k) {
    const json& one = doc[k];
    if (!one.contains("database_id") || !one.contains("turns"))
      throw ParseError(path + ": interaction " + std::to_string(k) +
                       " missing database_id or turns");
    Interaction inter;
    inter.database_id = one.at("database_id").get<std::string>();
    if (!schemas.count(inter.database_id))
      throw UnknownDatabase("interaction " + std::to_string(k) +
                            " references unknown database '" +
                            inter.database_id + "'");
    const json& turns = one.at("turns");
    if (!turns.is_array() || turns.empty())
      throw ParseError(path + ": interaction " + std::to_string(k) +
                       " has no turns");
    for (std::size_t t = 0; t < turns.size(); ++t) {
      const json& jt = turns[t];
      if (!jt.contains("utterance") || !jt.contains("query"))
        throw ParseError(path + ": turn missing utterance or query");
      Turn turn;
      turn.utterance_tokens = tokenize(jt.at("utterance").get<std::string>());
      if (turn.utterance_tokens.empty())
        throw ParseError(path + ": interaction " + std::to_string(k) +
                         " turn " + std::to_string(t) + " has empty utterance");
      turn.gold_sql = jt.at("query").get<std::string>();
      try {
        turn.gold_clauses = parse_sql_clauses(turn.gold_sql);
      } catch (const SQLParseError& e) {
        throw SQLParseError("interaction " + std::to_string(k) + " turn " +
                                std::to_string(t) + ": " + e.what(),
                            static_cast<int>(t));
      }
      inter.turns.push_back(std::move(turn));
    }
    out.push_back(std::move(inter));
  }
  return out;
}

const std::vector<std::string>& Vocab::sql_keywords() {
  static const std::vector<std::string> kw = {
      "select", "from",  "where",    "group", "by",    "order", "having",
      "limit",  "and",   "or",       "not",   "in",    "like",  "between",
      "distinct", "as",  "join",     "on",    "asc",   "desc",  "union",
      "intersect", "except", "count", "sum",  "avg",   "min",   "max",
      "(",      ")",     ",",        "*",     "=",     "!=",    "<",
      ">",      "<=",    ">=",       "1"};
  return kw;
}

Vocab::Vocab() {
  for (const std::string& t :
       {std::string("<pad>"), std::string("<unk>"), std::string("<cls>"),
        std::string("<sep>"), std::string("<eos>")})
    add(t);
  for (const std::string& t : sql_keywords()) add(t);
}

int Vocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

int Vocab::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || id >= size())
    throw Error("vocab id out of range: " + std::to_string(id));
  return tokens_[id];
}

bool Vocab::contains(const std::string& token) const {
  return ids_.count(token) > 0;
}

void Vocab::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw Error("cannot open vocab file for writing: " + path);
  for (int i = 0; i < size(); ++i) os << tokens_[i] << '\t' << i << '\n';
  if (!os) throw Error("short write to vocab file: " + path);
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open vocab file: " + path);
  Vocab v;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t tab = line.rfind('\t');
    if (tab == std::string::npos)
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected token<TAB>id");
    std::string token = line.substr(0, tab);
    int id = std::stoi(line.substr(tab + 1));
    if (id < v.size()) {
      if (v.tokens_[id] != token)
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": reserved id " + std::to_string(id) +
                         " bound to '" + token + "'");
      continue;
    }
    if (id != v.size())
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": ids must be contiguous, got " + std::to_string(id));
    if (v.contains(token))
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": duplicate token '" + token + "'");
    v.add(token);
  }
  return v;
}

Vocab build_vocab(const std::vector<Interaction>& interactions,
                  int min_count) {
  static const std::map<std::string, Schema> kNoSchemas;
  return build_vocab(interactions, kNoSchemas, min_count);
}

Vocab build_vocab(const std::vector<Interaction>& interactions,
                  const std::map<std::string, Schema>& schemas,
                  int min_count) {
  std::map<std::string, int> counts;
  std::vector<std::string> order;
  for (const Interaction& inter : interactions)
    for (const Turn& turn : inter.turns)
      for (const std::string& tok : turn.utterance_tokens)
        if (++counts[tok] == 1) order.push_back(tok);
  Vocab v;
  for (const std::string& tok : order)
    if (counts[tok] >= min_count) v.add(tok);
  for (const auto& [id, schema] : schemas)
    for (const SchemaHeader& h : schema.headers)
      for (const std::string& tok : h.tokens) v.add(tok);
  return v;
}

}  // namespace ctxparse
