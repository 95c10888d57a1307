#include "ctxparse/sql_clauses.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace ctxparse {

namespace {

const std::set<std::string>& keyword_set() {
  static const std::set<std::string> kw = {
      "select", "from", "where", "group",  "by",        "order",  "having",
      "limit",  "and",  "or",    "not",    "in",        "like",   "between",
      "distinct", "as", "join",  "on",     "asc",       "desc",   "union",
      "intersect", "except", "count", "sum", "avg", "min", "max"};
  return kw;
}

const std::set<std::string>& agg_set() {
  static const std::set<std::string> agg = {"count", "sum", "avg", "min",
                                            "max"};
  return agg;
}

const std::set<std::string>& cmp_set() {
  static const std::set<std::string> cmp = {"=", "!=", "<", ">", "<=", ">="};
  return cmp;
}

bool is_keyword(const std::string& t) { return keyword_set().count(t) > 0; }

bool is_number(const std::string& t) {
  bool digit = false;
  for (char c : t) {
    if (std::isdigit(static_cast<unsigned char>(c)))
      digit = true;
    else if (c != '.')
      return false;
  }
  return digit;
}

bool is_literal(const std::string& t) { return t == "value" || is_number(t); }

bool is_punct(const std::string& t) {
  return t == "(" || t == ")" || t == "," || t == "*" || cmp_set().count(t);
}

bool is_identifier(const std::string& t) {
  return !t.empty() && !is_keyword(t) && !is_punct(t) && !is_literal(t);
}

std::string join(const std::vector<std::string>& parts,
                 const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

using Span = std::vector<std::string>;

/// Split a clause span on top-level commas.
std::vector<Span> split_commas(const Span& span) {
  std::vector<Span> out;
  Span cur;
  int depth = 0;
  for (const std::string& t : span) {
    if (t == "(") ++depth;
    if (t == ")") --depth;
    if (t == "," && depth == 0) {
      if (cur.empty()) throw SQLParseError("empty list item");
      out.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    cur.push_back(t);
  }
  if (cur.empty()) throw SQLParseError("empty list item");
  out.push_back(std::move(cur));
  return out;
}

/// Split a condition span on top-level and/or. The "and" inside a BETWEEN
/// range belongs to the condition, not the boolean structure.
void split_conditions(const Span& span, std::vector<Span>& conds,
                      std::set<std::string>* connectors) {
  Span cur;
  int depth = 0;
  bool between = false;
  for (const std::string& t : span) {
    if (t == "(") ++depth;
    if (t == ")") --depth;
    if (depth == 0) {
      if (t == "between") between = true;
      if (t == "and" && between) {
        between = false;
        cur.push_back(t);
        continue;
      }
      if (t == "and" || t == "or") {
        if (cur.empty()) throw SQLParseError("dangling '" + t + "'");
        conds.push_back(std::move(cur));
        cur.clear();
        if (connectors) connectors->insert(t);
        continue;
      }
    }
    cur.push_back(t);
  }
  if (cur.empty()) throw SQLParseError("empty condition");
  conds.push_back(std::move(cur));
}

struct Parser {
  const Span& toks;
  std::size_t pos = 0;

  bool at_end() const { return pos >= toks.size(); }

  const std::string& peek(std::size_t off = 0) const {
    static const std::string kEnd = "<end>";
    return pos + off < toks.size() ? toks[pos + off] : kEnd;
  }

  std::string next() {
    if (at_end()) throw SQLParseError("unexpected end of query");
    return toks[pos++];
  }

  void expect(const std::string& t) {
    if (at_end() || toks[pos] != t)
      throw SQLParseError("expected '" + t + "' near '" + peek() + "'");
    ++pos;
  }

  using AliasMap = std::map<std::string, std::string>;

  static bool starts_clause(const std::string& t) {
    return t == "where" || t == "group" || t == "having" || t == "order" ||
           t == "limit" || t == "union" || t == "intersect" || t == "except";
  }

  /// Tokens up to the next top-level clause keyword or closing paren.
  Span collect_clause_span() {
    Span span;
    int depth = 0;
    while (!at_end()) {
      const std::string& t = peek();
      if (depth == 0 && (starts_clause(t) || t == ")")) break;
      if (t == "(") ++depth;
      if (t == ")") --depth;
      span.push_back(next());
    }
    return span;
  }

  std::string resolve_column(const std::string& tok, const AliasMap& amap) {
    std::size_t dot = tok.find('.');
    if (dot == std::string::npos) return tok;
    std::string head = tok.substr(0, dot);
    std::string tail = tok.substr(dot + 1);
    auto it = amap.find(head);
    return (it != amap.end() ? it->second : head) + "." + tail;
  }

  /// Normalize one value expression: column reference, "*", literal, or an
  /// aggregate over one of those, with an optional distinct marker and an
  /// ignored output alias.
  std::string value_expr(const Span& span, const AliasMap& amap) {
    std::vector<std::string> out;
    std::size_t i = 0;
    auto atom = [&]() {
      if (i >= span.size()) throw SQLParseError("truncated expression");
      const std::string& t = span[i];
      if (t == "*" || is_literal(t) || is_identifier(t)) {
        ++i;
        if (t == "*") return std::string("*");
        if (is_literal(t)) return std::string("value");
        return resolve_column(t, amap);
      }
      throw SQLParseError("bad expression token '" + t + "'");
    };
    if (i < span.size() && span[i] == "distinct") {
      out.push_back("distinct");
      ++i;
    }
    if (i < span.size() && agg_set().count(span[i]) &&
        i + 1 < span.size() && span[i + 1] == "(") {
      out.push_back(span[i]);
      out.push_back("(");
      i += 2;
      if (i < span.size() && span[i] == "distinct") {
        out.push_back("distinct");
        ++i;
      }
      out.push_back(atom());
      if (i >= span.size() || span[i] != ")")
        throw SQLParseError("aggregate missing ')'");
      out.push_back(")");
      ++i;
    } else {
      out.push_back(atom());
    }
    if (i < span.size() && span[i] == "as") {
      // output aliases carry no clause-set meaning
      if (i + 1 >= span.size() || !is_identifier(span[i + 1]))
        throw SQLParseError("bad output alias");
      i += 2;
    }
    if (i != span.size())
      throw SQLParseError("trailing tokens in expression near '" + span[i] +
                          "'");
    return join(out, " ");
  }

  /// Normalize a condition operand: subquery, literal, or value expression.
  std::string operand(const Span& span, const AliasMap& amap) {
    if (span.empty()) throw SQLParseError("missing operand");
    if (span.front() == "(") {
      if (span.back() != ")") throw SQLParseError("unbalanced operand");
      Span inner(span.begin() + 1, span.end() - 1);
      Parser sub{inner};
      ClauseDecomposition q = sub.parse_query();
      if (!sub.at_end())
        throw SQLParseError("trailing tokens in subquery near '" +
                            sub.peek() + "'");
      return "( " + canonical_sql(q) + " )";
    }
    if (span.size() == 1 && is_literal(span.front())) return "value";
    return value_expr(span, amap);
  }

  static std::string invert_cmp(const std::string& op) {
    if (op == "<") return ">";
    if (op == ">") return "<";
    if (op == "<=") return ">=";
    if (op == ">=") return "<=";
    return op;
  }

  std::string parse_condition(const Span& span, const AliasMap& amap) {
    std::size_t start = 0;
    bool lead_not = false;
    if (!span.empty() && span.front() == "not") {
      lead_not = true;
      start = 1;
    }
    // top-level operator position
    int depth = 0;
    std::size_t op_pos = span.size();
    for (std::size_t i = start; i < span.size(); ++i) {
      const std::string& t = span[i];
      if (t == "(") ++depth;
      if (t == ")") --depth;
      if (depth == 0 &&
          (cmp_set().count(t) || t == "in" || t == "like" || t == "between" ||
           (t == "not" && i > start))) {
        op_pos = i;
        break;
      }
    }
    if (op_pos == span.size())
      throw SQLParseError("condition without comparison: '" + join(span, " ") +
                          "'");
    Span lhs_span(span.begin() + start, span.begin() + op_pos);
    bool mid_not = false;
    std::string op = span[op_pos];
    std::size_t rhs_start = op_pos + 1;
    if (op == "not") {
      mid_not = true;
      if (rhs_start >= span.size()) throw SQLParseError("dangling 'not'");
      op = span[rhs_start++];
      if (op != "in" && op != "like" && op != "between")
        throw SQLParseError("bad negated operator '" + op + "'");
    }
    Span rhs_span(span.begin() + rhs_start, span.end());
    std::string lhs = operand(lhs_span, amap);
    std::string prefix = lead_not ? "not " : "";
    std::string neg = mid_not ? "not " : "";

    if (op == "in") {
      if (rhs_span.size() < 3 || rhs_span.front() != "(" ||
          rhs_span.back() != ")")
        throw SQLParseError("IN without parenthesized list");
      std::string inner;
      if (rhs_span[1] == "select") {
        inner = operand(rhs_span, amap);  // canonical subquery
      } else {
        for (std::size_t i = 1; i + 1 < rhs_span.size(); ++i)
          if (rhs_span[i] != "," && !is_literal(rhs_span[i]))
            throw SQLParseError("IN list holds non-literal '" + rhs_span[i] +
                                "'");
        inner = "( value )";
      }
      return prefix + lhs + " " + neg + "in " + inner;
    }
    if (op == "like") {
      std::string rhs = operand(rhs_span, amap);
      return prefix + lhs + " " + neg + "like " + rhs;
    }
    if (op == "between") {
      // rhs is "low and high" at top level
      int d2 = 0;
      std::size_t and_pos = rhs_span.size();
      for (std::size_t i = 0; i < rhs_span.size(); ++i) {
        if (rhs_span[i] == "(") ++d2;
        if (rhs_span[i] == ")") --d2;
        if (d2 == 0 && rhs_span[i] == "and") {
          and_pos = i;
          break;
        }
      }
      if (and_pos == rhs_span.size())
        throw SQLParseError("BETWEEN without 'and'");
      Span low(rhs_span.begin(), rhs_span.begin() + and_pos);
      Span high(rhs_span.begin() + and_pos + 1, rhs_span.end());
      return prefix + lhs + " " + neg + "between " + operand(low, amap) +
             " and " + operand(high, amap);
    }
    // comparison operator
    std::string rhs = operand(rhs_span, amap);
    if (op == "=" || op == "!=") {
      bool lhs_val = (lhs == "value"), rhs_val = (rhs == "value");
      if (lhs_val && !rhs_val) std::swap(lhs, rhs);
      else if (!lhs_val && !rhs_val && rhs < lhs) std::swap(lhs, rhs);
    } else {
      if (lhs == "value" && rhs != "value") {
        std::swap(lhs, rhs);
        op = invert_cmp(op);
      }
    }
    return prefix + lhs + " " + op + " " + rhs;
  }

  void parse_from(ClauseDecomposition& d, AliasMap& amap) {
    struct Entry {
      std::string table;
      std::string alias;
    };
    std::vector<Entry> entries;
    std::vector<Span> cond_spans;
    for (;;) {
      std::string table = next();
      if (!is_identifier(table) || table.find('.') != std::string::npos)
        throw SQLParseError("bad table name '" + table + "'");
      Entry e{table, ""};
      if (peek() == "as") {
        next();
        e.alias = next();
        if (!is_identifier(e.alias))
          throw SQLParseError("bad alias '" + e.alias + "'");
      } else if (!at_end() && is_identifier(peek())) {
        e.alias = next();
      }
      entries.push_back(e);
      while (peek() == "on") {
        next();
        Span span;
        int depth = 0;
        while (!at_end()) {
          const std::string& t = peek();
          if (depth == 0 && (starts_clause(t) || t == ")" || t == "join" ||
                             t == ","))
            break;
          if (t == "(") ++depth;
          if (t == ")") --depth;
          span.push_back(next());
        }
        cond_spans.push_back(std::move(span));
      }
      if (peek() == "join" || peek() == ",") {
        next();
        continue;
      }
      break;
    }
    std::map<std::string, int> uses;
    for (const Entry& e : entries) ++uses[e.table];
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const Entry& e = entries[i];
      std::string canon =
          uses[e.table] > 1 ? "t" + std::to_string(i + 1) : e.table;
      d.at(ClauseKind::FROM).insert(canon);
      if (!e.alias.empty()) amap[e.alias] = canon;
      if (uses[e.table] == 1) amap.emplace(e.table, canon);
    }
    for (const Span& span : cond_spans) {
      std::vector<Span> conds;
      split_conditions(span, conds, nullptr);
      for (const Span& c : conds)
        d.at(ClauseKind::FROM).insert(parse_condition(c, amap));
    }
  }

  void parse_condition_clause(ClauseKind kind, ClauseDecomposition& d,
                              const AliasMap& amap) {
    Span span = collect_clause_span();
    std::vector<Span> conds;
    std::set<std::string> connectors;
    split_conditions(span, conds, &connectors);
    for (const Span& c : conds) d.at(kind).insert(parse_condition(c, amap));
    for (const std::string& k : connectors) d.at(kind).insert(k);
  }

  ClauseDecomposition parse_query() {
    ClauseDecomposition d;
    expect("select");
    Span sel_span;
    int depth = 0;
    while (!at_end()) {
      const std::string& t = peek();
      if (depth == 0 && (t == "from" || t == ")")) break;
      if (t == "(") ++depth;
      if (t == ")") --depth;
      sel_span.push_back(next());
    }
    expect("from");
    AliasMap amap;
    parse_from(d, amap);
    if (sel_span.empty()) throw SQLParseError("empty select list");
    for (const Span& item : split_commas(sel_span))
      d.at(ClauseKind::SELECT).insert(value_expr(item, amap));

    while (!at_end() && peek() != ")") {
      const std::string& t = peek();
      if (t == "where") {
        next();
        parse_condition_clause(ClauseKind::WHERE, d, amap);
      } else if (t == "group") {
        next();
        expect("by");
        for (const Span& item : split_commas(collect_clause_span()))
          d.at(ClauseKind::GROUP_BY).insert(value_expr(item, amap));
      } else if (t == "having") {
        next();
        parse_condition_clause(ClauseKind::HAVING, d, amap);
      } else if (t == "order") {
        next();
        expect("by");
        for (Span item : split_commas(collect_clause_span())) {
          std::string dir = "asc";
          if (!item.empty() && (item.back() == "asc" || item.back() == "desc")) {
            dir = item.back();
            item.pop_back();
          }
          d.at(ClauseKind::ORDER_BY).insert(value_expr(item, amap) + " " + dir);
        }
      } else if (t == "limit") {
        next();
        std::string v = next();
        if (!is_literal(v))
          throw SQLParseError("LIMIT wants a literal, got '" + v + "'");
        d.at(ClauseKind::LIMIT).insert("value");
      } else if (t == "union" || t == "intersect" || t == "except") {
        std::string op = next();
        ClauseDecomposition rhs = parse_query();
        d.at(ClauseKind::SET_OP).insert(op + " " + canonical_sql(rhs));
        break;
      } else {
        throw SQLParseError("unexpected token '" + t + "'");
      }
    }
    return d;
  }
};

}  // namespace

const char* clause_kind_name(ClauseKind kind) {
  switch (kind) {
    case ClauseKind::SELECT: return "select";
    case ClauseKind::FROM: return "from";
    case ClauseKind::WHERE: return "where";
    case ClauseKind::GROUP_BY: return "group_by";
    case ClauseKind::HAVING: return "having";
    case ClauseKind::ORDER_BY: return "order_by";
    case ClauseKind::LIMIT: return "limit";
    case ClauseKind::SET_OP: return "set_op";
  }
  return "?";
}

ClauseDecomposition::ClauseDecomposition() {
  for (ClauseKind k :
       {ClauseKind::SELECT, ClauseKind::FROM, ClauseKind::WHERE,
        ClauseKind::GROUP_BY, ClauseKind::HAVING, ClauseKind::ORDER_BY,
        ClauseKind::LIMIT, ClauseKind::SET_OP})
    clause_sets[k] = {};
}

std::vector<std::string> lex_sql(const std::string& sql) {
  std::vector<std::string> out;
  std::size_t i = 0, n = sql.size();
  auto lower = [](std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  while (i < n) {
    char c = sql[i];
    if (std::isspace(static_cast<unsigned char>(c)) || c == ';') {
      ++i;
      continue;
    }
    if (c == '\'' || c == '"') {
      char q = c;
      std::size_t j = i + 1;
      while (j < n && sql[j] != q) ++j;
      if (j >= n) throw SQLParseError("unterminated string literal");
      out.push_back("value");
      i = j + 1;
      continue;
    }
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
      std::size_t j = i;
      while (j < n && (std::isalnum(static_cast<unsigned char>(sql[j])) ||
                       sql[j] == '_' || sql[j] == '.'))
        ++j;
      out.push_back(lower(sql.substr(i, j - i)));
      i = j;
      continue;
    }
    if ((c == '<' || c == '>' || c == '!') && i + 1 < n && sql[i + 1] == '=') {
      out.push_back(std::string(1, c) + "=");
      i += 2;
      continue;
    }
    if (c == '<' && i + 1 < n && sql[i + 1] == '>') {
      out.push_back("!=");
      i += 2;
      continue;
    }
    if (c == '(' || c == ')' || c == ',' || c == '*' || c == '=' || c == '<' ||
        c == '>') {
      out.push_back(std::string(1, c));
      ++i;
      continue;
    }
    throw SQLParseError(std::string("unexpected character '") + c + "'");
  }
  return out;
}

ClauseDecomposition parse_sql_clauses(const std::string& sql) {
  Span toks = lex_sql(sql);
  if (toks.empty()) throw SQLParseError("empty query");
  int bal = 0;
  for (const std::string& t : toks) {
    if (t == "(") ++bal;
    if (t == ")" && --bal < 0) throw SQLParseError("unbalanced parentheses");
  }
  if (bal != 0) throw SQLParseError("unbalanced parentheses");
  Parser p{toks};
  ClauseDecomposition d = p.parse_query();
  if (!p.at_end())
    throw SQLParseError("trailing tokens after query near '" + p.peek() + "'");
  return d;
}

std::string canonical_sql(const ClauseDecomposition& d) {
  std::vector<std::string> out;

  const auto& sel = d.at(ClauseKind::SELECT);
  out.push_back("select");
  out.push_back(join({sel.begin(), sel.end()}, " , "));

  std::vector<std::string> tables, from_conds;
  for (const std::string& e : d.at(ClauseKind::FROM))
    (e.find(' ') == std::string::npos ? tables : from_conds).push_back(e);
  if (!tables.empty()) {
    out.push_back("from");
    out.push_back(join(tables, " join "));
    if (!from_conds.empty()) {
      out.push_back("on");
      out.push_back(join(from_conds, " and "));
    }
  }

  auto emit_conditions = [&out](const char* head,
                                const std::set<std::string>& set) {
    if (set.empty()) return;
    std::vector<std::string> conds, connectors;
    for (const std::string& e : set)
      (e == "and" || e == "or" ? connectors : conds).push_back(e);
    if (conds.empty()) return;
    // a two-element condition set can still carry both connectors; repeating
    // a condition adds the slot without changing the parsed set
    while (conds.size() < connectors.size() + 1) conds.push_back(conds.front());
    out.push_back(head);
    for (std::size_t i = 0; i < conds.size(); ++i) {
      if (i) out.push_back(connectors.empty()
                               ? "and"
                               : connectors[std::min(i - 1,
                                                     connectors.size() - 1)]);
      out.push_back(conds[i]);
    }
  };
  emit_conditions("where", d.at(ClauseKind::WHERE));

  const auto& grp = d.at(ClauseKind::GROUP_BY);
  if (!grp.empty()) {
    out.push_back("group by");
    out.push_back(join({grp.begin(), grp.end()}, " , "));
  }
  emit_conditions("having", d.at(ClauseKind::HAVING));

  const auto& ord = d.at(ClauseKind::ORDER_BY);
  if (!ord.empty()) {
    out.push_back("order by");
    out.push_back(join({ord.begin(), ord.end()}, " , "));
  }
  const auto& lim = d.at(ClauseKind::LIMIT);
  if (!lim.empty()) {
    out.push_back("limit");
    out.push_back(join({lim.begin(), lim.end()}, " , "));
  }
  for (const std::string& e : d.at(ClauseKind::SET_OP)) out.push_back(e);
  return join(out, " ");
}

}  // namespace ctxparse
