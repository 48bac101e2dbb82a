#pragma once

#include <string>
#include <string_view>

#include "kernelforge/kernel_expr.hpp"

namespace kf {

// Text syntax for kernel expressions.
//
//   expr   := term ('+' term)*
//   term   := factor ('*' factor)*
//   factor := atom | '(' expr ')'
//   atom   := FAMILY '_' DIM params?
//   params := '{' name '=' number (',' name '=' number)* '}'
//
// '*' binds tighter than '+'; whitespace is ignored. Dimensions are 1-based
// in text and mapped to 0-based indices internally. Parameter annotations
// are given in linear-space units, e.g. "SE_1{sf=1, ell=0.5}"; atoms without
// annotations get family defaults (all log-parameters 0, Lin location 0).

// Throws ParseError (with line/column and the expected-token set), including
// for unknown family names and dimensions < 1.
KernelExpr parse(std::string_view text);

// Prints the canonical form; parse(print(e)) is structurally identical to
// canonical_form(e). With with_params, linear-space values are emitted with
// 17 significant digits so the annotated doubles survive the text round trip.
std::string print(const KernelExpr& expr, bool with_params = false);

// Shortest decimal form of v that parses back to exactly v.
std::string format_double(double v);

}  // namespace kf
