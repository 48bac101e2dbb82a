#include "kernelforge/expression_io.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>

namespace kf {

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

// Internal log-space value whose exp() reproduces v exactly, when one
// exists near log(v). log and exp are not exact inverses in floating
// point, so a few neighbouring representable values are probed; this keeps
// linear-space annotations stable across parse/print round trips.
double snap_log(double v) {
  if (v == 0.0) return -std::numeric_limits<double>::infinity();
  double theta = std::log(v);
  if (std::exp(theta) == v) return theta;
  double lo = theta, hi = theta;
  for (int i = 0; i < 8; ++i) {
    lo = std::nextafter(lo, -std::numeric_limits<double>::infinity());
    hi = std::nextafter(hi, std::numeric_limits<double>::infinity());
    if (std::exp(lo) == v) return lo;
    if (std::exp(hi) == v) return hi;
  }
  return theta;
}

struct Cursor {
  std::string_view text;
  std::size_t pos = 0;
  int line = 1;
  int column = 1;

  void advance() {
    if (pos < text.size()) {
      if (text[pos] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
      ++pos;
    }
  }

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) {
      advance();
    }
  }

  bool eof() {
    skip_ws();
    return pos >= text.size();
  }

  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }

  [[noreturn]] void fail(const std::string& message, const std::string& expected = {}) {
    throw ParseError(message, line, column, expected);
  }

  void expect(char c, const std::string& expected) {
    if (peek() != c) {
      fail(pos < text.size()
               ? std::string("unexpected '") + text[pos] + "'"
               : "unexpected end of input",
           expected);
    }
    advance();
  }
};

class Parser {
public:
  explicit Parser(std::string_view text) : cur_{text} {}

  KernelExpr run() {
    KernelExpr e = parse_sum();
    if (!cur_.eof()) {
      cur_.fail(std::string("unexpected '") + cur_.peek() + "'",
                "'+', '*' or end of input");
    }
    return e;
  }

private:
  KernelExpr parse_sum() {
    std::vector<KernelExpr> terms;
    terms.push_back(parse_product());
    while (cur_.peek() == '+') {
      cur_.advance();
      terms.push_back(parse_product());
    }
    if (terms.size() == 1) return std::move(terms.front());
    return KernelExpr::sum(std::move(terms));
  }

  KernelExpr parse_product() {
    std::vector<KernelExpr> factors;
    factors.push_back(parse_factor());
    while (cur_.peek() == '*') {
      cur_.advance();
      factors.push_back(parse_factor());
    }
    if (factors.size() == 1) return std::move(factors.front());
    return KernelExpr::product(std::move(factors));
  }

  KernelExpr parse_factor() {
    const char c = cur_.peek();
    if (c == '(') {
      cur_.advance();
      KernelExpr e = parse_sum();
      cur_.expect(')', "')'");
      return e;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) return parse_atom();
    cur_.fail(c == '\0' ? "unexpected end of input"
                        : std::string("unexpected '") + c + "'",
              "kernel atom or '('");
  }

  KernelExpr parse_atom() {
    cur_.skip_ws();
    const int line = cur_.line, col = cur_.column;
    std::string name;
    while (cur_.pos < cur_.text.size() &&
           std::isalpha(static_cast<unsigned char>(cur_.text[cur_.pos]))) {
      name += cur_.text[cur_.pos];
      cur_.advance();
    }
    Family family;
    if (!family_from_name(name, &family)) {
      throw ParseError("unknown kernel family '" + name + "'", line, col,
                       "one of LIN, PER, RQ, SE");
    }
    cur_.expect('_', "'_' followed by a dimension");
    const long dim = parse_integer();
    if (dim < 1) {
      cur_.fail("dimension must be >= 1 (got " + std::to_string(dim) + ")");
    }
    BaseKernel b = BaseKernel::with_defaults(family, static_cast<int>(dim - 1));
    if (cur_.peek() == '{') parse_annotation(b);
    return KernelExpr::base(std::move(b));
  }

  long parse_integer() {
    cur_.skip_ws();
    std::size_t start = cur_.pos;
    if (cur_.pos < cur_.text.size() && cur_.text[cur_.pos] == '-') cur_.advance();
    while (cur_.pos < cur_.text.size() &&
           std::isdigit(static_cast<unsigned char>(cur_.text[cur_.pos]))) {
      cur_.advance();
    }
    long value = 0;
    const auto res = std::from_chars(cur_.text.data() + start,
                                     cur_.text.data() + cur_.pos, value);
    if (res.ec != std::errc() || start == cur_.pos) {
      cur_.fail("expected an integer");
    }
    return value;
  }

  double parse_number() {
    cur_.skip_ws();
    std::size_t start = cur_.pos;
    const auto valid = [](char c) {
      return std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
             c == '-' || c == '+' || c == 'e' || c == 'E' || c == 'i' ||
             c == 'n' || c == 'f' || c == 'a' || c == 'N';
    };
    while (cur_.pos < cur_.text.size() && valid(cur_.text[cur_.pos])) {
      cur_.advance();
    }
    double value = 0.0;
    const auto res = std::from_chars(cur_.text.data() + start,
                                     cur_.text.data() + cur_.pos, value);
    if (res.ec != std::errc() || res.ptr != cur_.text.data() + cur_.pos ||
        start == cur_.pos) {
      cur_.fail("expected a number");
    }
    return value;
  }

  void parse_annotation(BaseKernel& b) {
    cur_.expect('{', "'{'");
    const auto& names = family_param_names(b.family);
    while (true) {
      cur_.skip_ws();
      const int line = cur_.line, col = cur_.column;
      std::string key;
      while (cur_.pos < cur_.text.size() &&
             std::isalpha(static_cast<unsigned char>(cur_.text[cur_.pos]))) {
        key += cur_.text[cur_.pos];
        cur_.advance();
      }
      std::size_t index = names.size();
      for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == key) index = i;
      }
      if (index == names.size()) {
        std::string expected;
        for (std::size_t i = 0; i < names.size(); ++i) {
          expected += (i ? ", " : "") + names[i];
        }
        throw ParseError("unknown parameter '" + key + "' for " +
                             family_name(b.family),
                         line, col, expected);
      }
      cur_.expect('=', "'='");
      const double v = parse_number();
      const bool is_log_space = !(b.family == Family::Lin && index == 2);
      if (is_log_space) {
        if (v < 0.0) {
          throw ParseError("parameter '" + key + "' must be nonnegative",
                           line, col);
        }
        b.params[index] = snap_log(v);
      } else {
        b.params[index] = v;
      }
      if (cur_.peek() == ',') {
        cur_.advance();
        continue;
      }
      break;
    }
    cur_.expect('}', "',' or '}'");
  }

  Cursor cur_;
};

void print_rec(const KernelExpr& e, bool parent_is_product, bool with_params,
               std::string& out) {
  switch (e.kind()) {
    case KernelExpr::Kind::Base: {
      const BaseKernel& b = e.leaf();
      out += b.label();
      if (with_params) {
        const auto& names = family_param_names(b.family);
        out += "{";
        for (std::size_t i = 0; i < b.params.size(); ++i) {
          const bool is_log_space = !(b.family == Family::Lin && i == 2);
          const double v = is_log_space ? std::exp(b.params[i]) : b.params[i];
          if (i) out += ", ";
          out += names[i] + "=" + format_double(v);
        }
        out += "}";
      }
      return;
    }
    case KernelExpr::Kind::Product: {
      bool first = true;
      for (const auto& c : e.children()) {
        if (!first) out += " * ";
        first = false;
        print_rec(c, true, with_params, out);
      }
      return;
    }
    case KernelExpr::Kind::Sum: {
      if (parent_is_product) out += "(";
      bool first = true;
      for (const auto& c : e.children()) {
        if (!first) out += " + ";
        first = false;
        print_rec(c, false, with_params, out);
      }
      if (parent_is_product) out += ")";
      return;
    }
  }
}

}  // namespace

KernelExpr parse(std::string_view text) { return Parser(text).run(); }

std::string print(const KernelExpr& expr, bool with_params) {
  std::string out;
  print_rec(canonical_form(expr), false, with_params, out);
  return out;
}

}  // namespace kf
