#include "bpd/expression.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

namespace bpd {

std::string_view compare_op_text(CompareOp op) {
  switch (op) {
    case CompareOp::eq: return "==";
    case CompareOp::ne: return "!=";
    case CompareOp::lt: return "<";
    case CompareOp::le: return "<=";
    case CompareOp::gt: return ">";
    case CompareOp::ge: return ">=";
  }
  return "?";
}

ExprPtr make_expr(Expr::Node node) {
  return std::make_shared<const Expr>(Expr{std::move(node)});
}

bool expr_equal(const Expr& a, const Expr& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& an) {
        using T = std::decay_t<decltype(an)>;
        const auto& bn = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, Expr::BoolLit>) {
          return an.value == bn.value;
        } else if constexpr (std::is_same_v<T, Expr::IntLit>) {
          return an.value == bn.value;
        } else if constexpr (std::is_same_v<T, Expr::Var>) {
          return an.name == bn.name;
        } else if constexpr (std::is_same_v<T, Expr::TokenCount>) {
          return an.flow_id == bn.flow_id;
        } else if constexpr (std::is_same_v<T, Expr::Compare>) {
          return an.op == bn.op && expr_equal(*an.lhs, *bn.lhs) &&
                 expr_equal(*an.rhs, *bn.rhs);
        } else if constexpr (std::is_same_v<T, Expr::Not>) {
          return expr_equal(*an.operand, *bn.operand);
        } else {
          return expr_equal(*an.lhs, *bn.lhs) && expr_equal(*an.rhs, *bn.rhs);
        }
      },
      a.node);
}

std::string ParseError::to_string() const {
  std::ostringstream os;
  os << "parse error at " << line << ":" << column << ": expected " << expected
     << ", found " << found;
  return os.str();
}

// --------------------------------------------------------------------------
// Lexer
// --------------------------------------------------------------------------

namespace {

enum class TokKind {
  ident, integer, kw_true, kw_false, kw_and, kw_or, kw_not, kw_tokens,
  lparen, rparen, op_eq, op_ne, op_lt, op_le, op_gt, op_ge, end, bad
};

struct Token {
  TokKind kind = TokKind::end;
  std::string text;
  std::int64_t int_value = 0;
  int line = 1;
  int column = 1;
};

struct Lexer {
  std::string_view src;
  std::size_t pos = 0;
  int line = 1;
  int column = 1;
  std::optional<ParseError> error;

  void advance(std::size_t n) {
    for (std::size_t i = 0; i < n && pos < src.size(); ++i, ++pos) {
      if (src[pos] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
  }

  Token next() {
    while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) {
      advance(1);
    }
    Token t;
    t.line = line;
    t.column = column;
    if (pos >= src.size()) {
      t.kind = TokKind::end;
      t.text = "end of input";
      return t;
    }
    const char c = src[pos];
    auto two = src.substr(pos, 2);
    if (two == "==") { t.kind = TokKind::op_eq; t.text = "=="; advance(2); return t; }
    if (two == "!=") { t.kind = TokKind::op_ne; t.text = "!="; advance(2); return t; }
    if (two == "<=") { t.kind = TokKind::op_le; t.text = "<="; advance(2); return t; }
    if (two == ">=") { t.kind = TokKind::op_ge; t.text = ">="; advance(2); return t; }
    if (c == '<') { t.kind = TokKind::op_lt; t.text = "<"; advance(1); return t; }
    if (c == '>') { t.kind = TokKind::op_gt; t.text = ">"; advance(1); return t; }
    if (c == '(') { t.kind = TokKind::lparen; t.text = "("; advance(1); return t; }
    if (c == ')') { t.kind = TokKind::rparen; t.text = ")"; advance(1); return t; }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && pos + 1 < src.size() &&
         std::isdigit(static_cast<unsigned char>(src[pos + 1])))) {
      std::size_t start = pos;
      std::size_t end = pos + 1;
      while (end < src.size() && std::isdigit(static_cast<unsigned char>(src[end]))) {
        ++end;
      }
      t.text = std::string(src.substr(start, end - start));
      auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(),
                                 t.int_value);
      if (res.ec != std::errc{} || res.ptr != t.text.data() + t.text.size()) {
        t.kind = TokKind::bad;
        error = ParseError{t.line, t.column, "integer within signed 64-bit range",
                           t.text};
      } else {
        t.kind = TokKind::integer;
      }
      advance(end - start);
      return t;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos;
      std::size_t end = pos;
      while (end < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[end])) ||
              src[end] == '_')) {
        ++end;
      }
      t.text = std::string(src.substr(start, end - start));
      if (t.text == "true") t.kind = TokKind::kw_true;
      else if (t.text == "false") t.kind = TokKind::kw_false;
      else if (t.text == "and") t.kind = TokKind::kw_and;
      else if (t.text == "or") t.kind = TokKind::kw_or;
      else if (t.text == "not") t.kind = TokKind::kw_not;
      else if (t.text == "tokens") t.kind = TokKind::kw_tokens;
      else t.kind = TokKind::ident;
      advance(end - start);
      return t;
    }
    t.kind = TokKind::bad;
    t.text = std::string(1, c);
    error = ParseError{t.line, t.column, "expression token", t.text};
    advance(1);
    return t;
  }
};

// Recursive descent, precedence low to high: or, and, not, compare, primary.
struct Parser {
  Lexer lex;
  Token cur;
  std::optional<ParseError> error;

  explicit Parser(std::string_view text) : lex{text} { cur = lex.next(); }

  void fail(const std::string& expected) {
    if (!error) {
      if (lex.error) error = *lex.error;
      else error = ParseError{cur.line, cur.column, expected, cur.text};
    }
  }

  bool accept(TokKind k) {
    if (error || cur.kind != k) return false;
    cur = lex.next();
    if (lex.error && !error) error = *lex.error;
    return true;
  }

  ExprPtr parse_or() {
    ExprPtr lhs = parse_and();
    while (!error && cur.kind == TokKind::kw_or) {
      accept(TokKind::kw_or);
      ExprPtr rhs = parse_and();
      if (error) return nullptr;
      lhs = make_expr(Expr::Or{lhs, rhs});
    }
    return error ? nullptr : lhs;
  }

  ExprPtr parse_and() {
    ExprPtr lhs = parse_not();
    while (!error && cur.kind == TokKind::kw_and) {
      accept(TokKind::kw_and);
      ExprPtr rhs = parse_not();
      if (error) return nullptr;
      lhs = make_expr(Expr::And{lhs, rhs});
    }
    return error ? nullptr : lhs;
  }

  ExprPtr parse_not() {
    if (cur.kind == TokKind::kw_not) {
      accept(TokKind::kw_not);
      ExprPtr operand = parse_not();
      if (error) return nullptr;
      return make_expr(Expr::Not{operand});
    }
    return parse_compare();
  }

  ExprPtr parse_compare() {
    ExprPtr lhs = parse_primary();
    if (error) return nullptr;
    std::optional<CompareOp> op;
    switch (cur.kind) {
      case TokKind::op_eq: op = CompareOp::eq; break;
      case TokKind::op_ne: op = CompareOp::ne; break;
      case TokKind::op_lt: op = CompareOp::lt; break;
      case TokKind::op_le: op = CompareOp::le; break;
      case TokKind::op_gt: op = CompareOp::gt; break;
      case TokKind::op_ge: op = CompareOp::ge; break;
      default: break;
    }
    if (!op) return lhs;
    accept(cur.kind);
    ExprPtr rhs = parse_primary();
    if (error) return nullptr;
    return make_expr(Expr::Compare{*op, lhs, rhs});
  }

  ExprPtr parse_primary() {
    if (error) return nullptr;
    switch (cur.kind) {
      case TokKind::integer: {
        auto v = cur.int_value;
        accept(TokKind::integer);
        return make_expr(Expr::IntLit{v});
      }
      case TokKind::kw_true:
        accept(TokKind::kw_true);
        return make_expr(Expr::BoolLit{true});
      case TokKind::kw_false:
        accept(TokKind::kw_false);
        return make_expr(Expr::BoolLit{false});
      case TokKind::kw_tokens: {
        accept(TokKind::kw_tokens);
        if (!accept(TokKind::lparen)) { fail("'(' after tokens"); return nullptr; }
        if (cur.kind != TokKind::ident) { fail("flow identifier"); return nullptr; }
        std::string flow = cur.text;
        accept(TokKind::ident);
        if (!accept(TokKind::rparen)) { fail("')'"); return nullptr; }
        return make_expr(Expr::TokenCount{flow});
      }
      case TokKind::ident: {
        std::string name = cur.text;
        accept(TokKind::ident);
        return make_expr(Expr::Var{name});
      }
      case TokKind::lparen: {
        accept(TokKind::lparen);
        ExprPtr inner = parse_or();
        if (error) return nullptr;
        if (!accept(TokKind::rparen)) { fail("')'"); return nullptr; }
        return inner;
      }
      default:
        fail("expression");
        return nullptr;
    }
  }
};

}  // namespace

std::variant<ExprPtr, ParseError> parse_expression(std::string_view text) {
  Parser p(text);
  ExprPtr e = p.parse_or();
  if (!p.error && p.cur.kind != TokKind::end) {
    p.fail("end of expression");
  }
  if (p.error) return *p.error;
  return e;
}

// --------------------------------------------------------------------------
// Printer
// --------------------------------------------------------------------------

namespace {

// Precedence levels matching the parser, for minimal parenthesization.
int expr_level(const Expr& e) {
  return std::visit(
      [](const auto& n) -> int {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Expr::Or>) return 1;
        else if constexpr (std::is_same_v<T, Expr::And>) return 2;
        else if constexpr (std::is_same_v<T, Expr::Not>) return 3;
        else if constexpr (std::is_same_v<T, Expr::Compare>) return 4;
        else return 5;
      },
      e.node);
}

void print_rec(const Expr& e, int min_level, std::string& out) {
  const bool paren = expr_level(e) < min_level;
  if (paren) out += '(';
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Expr::BoolLit>) {
          out += n.value ? "true" : "false";
        } else if constexpr (std::is_same_v<T, Expr::IntLit>) {
          out += std::to_string(n.value);
        } else if constexpr (std::is_same_v<T, Expr::Var>) {
          out += n.name;
        } else if constexpr (std::is_same_v<T, Expr::TokenCount>) {
          out += "tokens(";
          out += n.flow_id;
          out += ')';
        } else if constexpr (std::is_same_v<T, Expr::Compare>) {
          print_rec(*n.lhs, 5, out);
          out += ' ';
          out += compare_op_text(n.op);
          out += ' ';
          print_rec(*n.rhs, 5, out);
        } else if constexpr (std::is_same_v<T, Expr::Not>) {
          out += "not ";
          print_rec(*n.operand, 3, out);
        } else if constexpr (std::is_same_v<T, Expr::And>) {
          print_rec(*n.lhs, 2, out);
          out += " and ";
          print_rec(*n.rhs, 3, out);  // left-associative
        } else {
          print_rec(*n.lhs, 1, out);
          out += " or ";
          print_rec(*n.rhs, 2, out);
        }
      },
      e.node);
  if (paren) out += ')';
}

}  // namespace

std::string print_expression(const Expr& e) {
  std::string out;
  print_rec(e, 1, out);
  return out;
}

// --------------------------------------------------------------------------
// Evaluation
// --------------------------------------------------------------------------

bool value_as_bool(const Value& v, const std::string& context) {
  if (const bool* b = std::get_if<bool>(&v)) return *b;
  throw EvalError("type mismatch: " + context + " requires a boolean value");
}

Value eval_expression(const Expr& e, const VarMap& data,
                      const TokenCounts* counts) {
  return std::visit(
      [&](const auto& n) -> Value {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Expr::BoolLit>) {
          return n.value;
        } else if constexpr (std::is_same_v<T, Expr::IntLit>) {
          return n.value;
        } else if constexpr (std::is_same_v<T, Expr::Var>) {
          auto it = data.find(n.name);
          if (it == data.end()) {
            throw EvalError("unknown variable '" + n.name + "'");
          }
          return it->second;
        } else if constexpr (std::is_same_v<T, Expr::TokenCount>) {
          if (counts == nullptr) {
            throw EvalError("tokens(" + n.flow_id +
                            ") used without token counts");
          }
          auto it = counts->find(n.flow_id);
          return it == counts->end() ? std::int64_t{0} : it->second;
        } else if constexpr (std::is_same_v<T, Expr::Compare>) {
          Value lhs = eval_expression(*n.lhs, data, counts);
          Value rhs = eval_expression(*n.rhs, data, counts);
          const std::string op(compare_op_text(n.op));
          if (lhs.index() != rhs.index()) {
            throw EvalError("type mismatch: operator '" + op +
                            "' applied to mixed bool/int operands");
          }
          if (std::holds_alternative<bool>(lhs)) {
            if (n.op != CompareOp::eq && n.op != CompareOp::ne) {
              throw EvalError("type mismatch: operator '" + op +
                              "' not defined on booleans");
            }
            bool l = std::get<bool>(lhs), r = std::get<bool>(rhs);
            return n.op == CompareOp::eq ? l == r : l != r;
          }
          std::int64_t l = std::get<std::int64_t>(lhs);
          std::int64_t r = std::get<std::int64_t>(rhs);
          switch (n.op) {
            case CompareOp::eq: return l == r;
            case CompareOp::ne: return l != r;
            case CompareOp::lt: return l < r;
            case CompareOp::le: return l <= r;
            case CompareOp::gt: return l > r;
            case CompareOp::ge: return l >= r;
          }
          throw EvalError("bad comparison operator");
        } else if constexpr (std::is_same_v<T, Expr::Not>) {
          Value v = eval_expression(*n.operand, data, counts);
          return !value_as_bool(v, "operator 'not'");
        } else if constexpr (std::is_same_v<T, Expr::And>) {
          // Strict: both sides evaluated before combining.
          Value l = eval_expression(*n.lhs, data, counts);
          Value r = eval_expression(*n.rhs, data, counts);
          return value_as_bool(l, "operator 'and'") &&
                 value_as_bool(r, "operator 'and'");
        } else {
          Value l = eval_expression(*n.lhs, data, counts);
          Value r = eval_expression(*n.rhs, data, counts);
          return value_as_bool(l, "operator 'or'") ||
                 value_as_bool(r, "operator 'or'");
        }
      },
      e.node);
}

// --------------------------------------------------------------------------
// Static typing
// --------------------------------------------------------------------------

namespace {

void note_issue(std::string* issue, const std::string& text) {
  if (issue && issue->empty()) *issue = text;
}

}  // namespace

ExprType infer_type(const Expr& e,
                    const std::map<std::string, ExprType>& var_types,
                    std::string* issue) {
  return std::visit(
      [&](const auto& n) -> ExprType {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Expr::BoolLit>) {
          return ExprType::boolean;
        } else if constexpr (std::is_same_v<T, Expr::IntLit>) {
          return ExprType::integer;
        } else if constexpr (std::is_same_v<T, Expr::Var>) {
          auto it = var_types.find(n.name);
          if (it == var_types.end()) {
            note_issue(issue, "references undeclared variable '" + n.name + "'");
            return ExprType::unknown;
          }
          return it->second;
        } else if constexpr (std::is_same_v<T, Expr::TokenCount>) {
          return ExprType::integer;
        } else if constexpr (std::is_same_v<T, Expr::Compare>) {
          ExprType lt = infer_type(*n.lhs, var_types, issue);
          ExprType rt = infer_type(*n.rhs, var_types, issue);
          const std::string op(compare_op_text(n.op));
          if (lt != ExprType::unknown && rt != ExprType::unknown && lt != rt) {
            note_issue(issue, "operator '" + op + "' mixes bool and int operands");
          } else if ((lt == ExprType::boolean || rt == ExprType::boolean) &&
                     n.op != CompareOp::eq && n.op != CompareOp::ne) {
            note_issue(issue, "operator '" + op + "' not defined on booleans");
          }
          return ExprType::boolean;
        } else if constexpr (std::is_same_v<T, Expr::Not>) {
          if (infer_type(*n.operand, var_types, issue) == ExprType::integer) {
            note_issue(issue, "operator 'not' applied to an integer");
          }
          return ExprType::boolean;
        } else {
          const char* op = std::is_same_v<T, Expr::And> ? "and" : "or";
          if (infer_type(*n.lhs, var_types, issue) == ExprType::integer ||
              infer_type(*n.rhs, var_types, issue) == ExprType::integer) {
            note_issue(issue, std::string("operator '") + op +
                                  "' applied to an integer");
          }
          return ExprType::boolean;
        }
      },
      e.node);
}

bool contains_token_count(const Expr& e) {
  return std::visit(
      [&](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Expr::TokenCount>) return true;
        else if constexpr (std::is_same_v<T, Expr::Compare>)
          return contains_token_count(*n.lhs) || contains_token_count(*n.rhs);
        else if constexpr (std::is_same_v<T, Expr::Not>)
          return contains_token_count(*n.operand);
        else if constexpr (std::is_same_v<T, Expr::And> ||
                           std::is_same_v<T, Expr::Or>)
          return contains_token_count(*n.lhs) || contains_token_count(*n.rhs);
        else return false;
      },
      e.node);
}

std::vector<std::string> token_count_flows(const Expr& e) {
  std::vector<std::string> out;
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Expr::TokenCount>) {
          out.push_back(n.flow_id);
        } else if constexpr (std::is_same_v<T, Expr::Compare>) {
          auto l = token_count_flows(*n.lhs);
          auto r = token_count_flows(*n.rhs);
          out.insert(out.end(), l.begin(), l.end());
          out.insert(out.end(), r.begin(), r.end());
        } else if constexpr (std::is_same_v<T, Expr::Not>) {
          out = token_count_flows(*n.operand);
        } else if constexpr (std::is_same_v<T, Expr::And> ||
                             std::is_same_v<T, Expr::Or>) {
          auto l = token_count_flows(*n.lhs);
          auto r = token_count_flows(*n.rhs);
          out.insert(out.end(), l.begin(), l.end());
          out.insert(out.end(), r.begin(), r.end());
        }
      },
      e.node);
  return out;
}

}  // namespace bpd
