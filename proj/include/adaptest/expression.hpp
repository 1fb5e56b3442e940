#pragma once

// Arithmetic expression language for open-answer solution programs.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('+' | '-') unary | power
//   power   := primary ('^' unary)?          right-associative, binds tighter than unary minus
//   primary := number | identifier | function '(' expr ')' | '(' expr ')'
//
// Functions: sqrt exp log sin cos abs. Identifiers are variables bound at evaluation time.

#include <adaptest/common.hpp>

#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace adaptest {

using Bindings = std::map<std::string, double, std::less<>>;

class Expression {
 public:
  enum class Func { sqrt, exp, log, sin, cos, abs };

  static Expression parse(std::string_view text) {
    Parser p{text, 0};
    Expression e;
    e.text_ = std::string(text);
    e.root_ = p.parse_expr();
    p.skip_ws();
    if (!p.at_end()) p.fail("unexpected '" + std::string(1, p.peek()) + "'");
    return e;
  }

  const std::string& text() const noexcept { return text_; }

  std::set<std::string> free_variables() const {
    std::set<std::string> out;
    collect(*root_, out);
    return out;
  }

  double evaluate(const Bindings& vars) const {
    double v = eval(*root_, vars);
    if (!std::isfinite(v)) throw EvaluationError("non-finite result in '" + text_ + "'");
    return v;
  }

 private:
  struct Node;
  using NodePtr = std::shared_ptr<const Node>;
  struct Number { double value; };
  struct Variable { std::string name; };
  struct Negate { NodePtr operand; };
  struct Binary { char op; NodePtr lhs, rhs; };
  struct Call { Func fn; NodePtr arg; };
  struct Node { std::variant<Number, Variable, Negate, Binary, Call> v; };

  template <class T>
  static NodePtr make(T t) { return std::make_shared<const Node>(Node{std::move(t)}); }

  struct Parser {
    std::string_view src;
    std::size_t pos;

    bool at_end() const { return pos >= src.size(); }
    char peek() const { return at_end() ? '\0' : src[pos]; }
    void skip_ws() {
      while (!at_end() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
    }
    [[noreturn]] void fail(const std::string& what) const {
      throw ParseError("expression '" + std::string(src) + "' at offset " + std::to_string(pos) + ": " + what);
    }
    bool accept(char c) {
      skip_ws();
      if (peek() == c) {
        ++pos;
        return true;
      }
      return false;
    }

    NodePtr parse_expr() {
      NodePtr lhs = parse_term();
      for (;;) {
        if (accept('+')) lhs = make(Binary{'+', lhs, parse_term()});
        else if (accept('-')) lhs = make(Binary{'-', lhs, parse_term()});
        else return lhs;
      }
    }

    NodePtr parse_term() {
      NodePtr lhs = parse_unary();
      for (;;) {
        if (accept('*')) lhs = make(Binary{'*', lhs, parse_unary()});
        else if (accept('/')) lhs = make(Binary{'/', lhs, parse_unary()});
        else return lhs;
      }
    }

    NodePtr parse_unary() {
      if (accept('-')) return make(Negate{parse_unary()});
      if (accept('+')) return parse_unary();
      return parse_power();
    }

    NodePtr parse_power() {
      NodePtr base = parse_primary();
      if (accept('^')) return make(Binary{'^', base, parse_unary()});
      return base;
    }

    NodePtr parse_primary() {
      skip_ws();
      if (at_end()) fail("unexpected end of input");
      char c = peek();
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t start = pos;
        while (!at_end() && (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_')) ++pos;
        std::string name(src.substr(start, pos - start));
        skip_ws();
        if (peek() == '(') {
          Func fn = lookup(name);
          ++pos;
          NodePtr arg = parse_expr();
          if (!accept(')')) fail("expected ')'");
          return make(Call{fn, arg});
        }
        return make(Variable{std::move(name)});
      }
      if (accept('(')) {
        NodePtr inner = parse_expr();
        if (!accept(')')) fail("expected ')'");
        return inner;
      }
      fail("unexpected '" + std::string(1, c) + "'");
    }

    NodePtr parse_number() {
      std::size_t start = pos;
      while (!at_end() && (std::isdigit(static_cast<unsigned char>(src[pos])) || src[pos] == '.')) ++pos;
      if (!at_end() && (src[pos] == 'e' || src[pos] == 'E')) {
        std::size_t save = pos++;
        if (!at_end() && (src[pos] == '+' || src[pos] == '-')) ++pos;
        if (at_end() || !std::isdigit(static_cast<unsigned char>(src[pos]))) {
          pos = save;
        } else {
          while (!at_end() && std::isdigit(static_cast<unsigned char>(src[pos]))) ++pos;
        }
      }
      try {
        return make(Number{parse_double(src.substr(start, pos - start))});
      } catch (const ParseError&) {
        pos = start;
        fail("malformed number");
      }
    }

    Func lookup(const std::string& name) const {
      static const std::map<std::string, Func, std::less<>> table = {
          {"sqrt", Func::sqrt}, {"exp", Func::exp}, {"log", Func::log},
          {"sin", Func::sin},   {"cos", Func::cos}, {"abs", Func::abs}};
      auto it = table.find(name);
      if (it == table.end()) fail("unknown function '" + name + "'");
      return it->second;
    }
  };

  static void collect(const Node& n, std::set<std::string>& out) {
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, Variable>) out.insert(x.name);
          else if constexpr (std::is_same_v<T, Negate>) collect(*x.operand, out);
          else if constexpr (std::is_same_v<T, Binary>) {
            collect(*x.lhs, out);
            collect(*x.rhs, out);
          } else if constexpr (std::is_same_v<T, Call>) collect(*x.arg, out);
        },
        n.v);
  }

  double eval(const Node& n, const Bindings& vars) const {
    return std::visit(
        [&](const auto& x) -> double {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, Number>) {
            return x.value;
          } else if constexpr (std::is_same_v<T, Variable>) {
            auto it = vars.find(x.name);
            if (it == vars.end()) throw EvaluationError("unbound variable '" + x.name + "'");
            return it->second;
          } else if constexpr (std::is_same_v<T, Negate>) {
            return -eval(*x.operand, vars);
          } else if constexpr (std::is_same_v<T, Binary>) {
            double a = eval(*x.lhs, vars);
            double b = eval(*x.rhs, vars);
            switch (x.op) {
              case '+': return a + b;
              case '-': return a - b;
              case '*': return a * b;
              case '/':
                if (b == 0.0) throw EvaluationError("division by zero in '" + text_ + "'");
                return a / b;
              default: {
                double r = std::pow(a, b);
                if (std::isnan(r)) throw EvaluationError("invalid power in '" + text_ + "'");
                return r;
              }
            }
          } else {
            double a = eval(*x.arg, vars);
            switch (x.fn) {
              case Func::sqrt:
                if (a < 0.0) throw EvaluationError("sqrt of negative value in '" + text_ + "'");
                return std::sqrt(a);
              case Func::exp: return std::exp(a);
              case Func::log:
                if (a <= 0.0) throw EvaluationError("log of non-positive value in '" + text_ + "'");
                return std::log(a);
              case Func::sin: return std::sin(a);
              case Func::cos: return std::cos(a);
              case Func::abs: return std::fabs(a);
            }
            return 0.0;
          }
        },
        n.v);
  }

  std::string text_;
  NodePtr root_;
};

}  // namespace adaptest
