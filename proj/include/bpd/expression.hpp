// Condition expression language: boolean/integer comparisons over case
// variables, plus tokens(flowId) counts for complex-merge activation rules.
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace bpd {

enum class CompareOp { eq, ne, lt, le, gt, ge };

std::string_view compare_op_text(CompareOp op);

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  struct BoolLit { bool value = false; };
  struct IntLit { std::int64_t value = 0; };
  struct Var { std::string name; };
  struct TokenCount { std::string flow_id; };
  struct Compare { CompareOp op = CompareOp::eq; ExprPtr lhs, rhs; };
  struct Not { ExprPtr operand; };
  struct And { ExprPtr lhs, rhs; };
  struct Or { ExprPtr lhs, rhs; };

  using Node = std::variant<BoolLit, IntLit, Var, TokenCount, Compare, Not, And, Or>;
  Node node;
};

ExprPtr make_expr(Expr::Node node);
bool expr_equal(const Expr& a, const Expr& b);

// Positioned parse failure; shared with the document parser.
struct ParseError {
  int line = 1;
  int column = 1;
  std::string expected;
  std::string found;

  std::string to_string() const;
};

std::variant<ExprPtr, ParseError> parse_expression(std::string_view text);

// Minimal-paren rendering; parse_expression(print_expression(e)) rebuilds e.
std::string print_expression(const Expr& e);

// --------------------------------------------------------------------------
// Evaluation
// --------------------------------------------------------------------------

using Value = std::variant<bool, std::int64_t>;
using VarMap = std::map<std::string, Value>;
using TokenCounts = std::map<std::string, std::int64_t>;

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Strict evaluation: both operands of and/or are always evaluated, so an
// unknown variable faults even in a branch that could not affect the result.
// tokens(f) requires counts; throws EvalError otherwise.
Value eval_expression(const Expr& e, const VarMap& data,
                      const TokenCounts* counts = nullptr);

bool value_as_bool(const Value& v, const std::string& context);

// --------------------------------------------------------------------------
// Static typing (used by the validator)
// --------------------------------------------------------------------------

enum class ExprType { boolean, integer, unknown };

// Infers the expression's type against declared variable types. Returns
// unknown when an undeclared variable makes the type unresolvable; records a
// human-readable problem in *issue for ill-typed subterms or undeclared
// references (issue untouched when the expression is clean).
ExprType infer_type(const Expr& e,
                    const std::map<std::string, ExprType>& var_types,
                    std::string* issue);

bool contains_token_count(const Expr& e);
std::vector<std::string> token_count_flows(const Expr& e);

}  // namespace bpd
