// Copyright 2026 The pscrt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// A small arithmetic expression language for user-supplied functions of
// cluster or individual baseline data, e.g. "N/(N+1)" or "1 + 0.1*v1".
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | name | name '(' expr ')' | '(' expr ')'
//
// Functions: exp, log, sqrt, abs. Variable names are resolved to slot
// indices when the expression is compiled.

#pragma once

#include <cctype>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pscrt/core/error.hpp"

namespace pscrt {

class Expression {
 public:
  // Maps a variable name to its slot, or nullopt when unknown.
  using Resolver = std::function<std::optional<std::size_t>(const std::string&)>;

  Expression() = default;

  static Expression compile(const std::string& text, const Resolver& resolve) {
    Parser parser{text, 0, resolve};
    Expression e;
    e.text_ = text;
    e.root_ = parser.parse_expr();
    parser.skip_ws();
    PSCRT_REQUIRE(parser.pos == text.size(), ErrorCode::InvalidConfig,
                  "unexpected trailing input in expression '" + text + "'");
    return e;
  }

  double operator()(std::span<const double> vars) const {
    PSCRT_REQUIRE(root_ != nullptr, ErrorCode::InvalidConfig, "empty expression");
    return root_->eval(vars);
  }

  const std::string& text() const { return text_; }
  bool empty() const { return root_ == nullptr; }

 private:
  struct Node {
    enum class Kind { Number, Var, Neg, Add, Sub, Mul, Div, Pow, Exp, Log, Sqrt, Abs };
    Kind kind;
    double value = 0.0;
    std::size_t slot = 0;
    std::shared_ptr<const Node> lhs, rhs;

    double eval(std::span<const double> vars) const {
      switch (kind) {
        case Kind::Number: return value;
        case Kind::Var:
          PSCRT_REQUIRE(slot < vars.size(), ErrorCode::IndexOutOfRange,
                        "expression variable slot out of range");
          return vars[slot];
        case Kind::Neg: return -lhs->eval(vars);
        case Kind::Add: return lhs->eval(vars) + rhs->eval(vars);
        case Kind::Sub: return lhs->eval(vars) - rhs->eval(vars);
        case Kind::Mul: return lhs->eval(vars) * rhs->eval(vars);
        case Kind::Div: return lhs->eval(vars) / rhs->eval(vars);
        case Kind::Pow: return std::pow(lhs->eval(vars), rhs->eval(vars));
        case Kind::Exp: return std::exp(lhs->eval(vars));
        case Kind::Log: return std::log(lhs->eval(vars));
        case Kind::Sqrt: return std::sqrt(lhs->eval(vars));
        case Kind::Abs: return std::fabs(lhs->eval(vars));
      }
      return 0.0;
    }
  };
  using NodePtr = std::shared_ptr<const Node>;

  static NodePtr make(Node::Kind k, NodePtr l = nullptr, NodePtr r = nullptr) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->lhs = std::move(l);
    n->rhs = std::move(r);
    return n;
  }

  struct Parser {
    const std::string& s;
    std::size_t pos;
    const Resolver& resolve;

    void skip_ws() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool accept(char c) {
      skip_ws();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    [[noreturn]] void fail(const std::string& what) {
      throw Error(ErrorCode::InvalidConfig,
                  what + " at position " + std::to_string(pos) + " in '" + s + "'");
    }

    NodePtr parse_expr() {
      NodePtr n = parse_term();
      for (;;) {
        if (accept('+')) n = make(Node::Kind::Add, n, parse_term());
        else if (accept('-')) n = make(Node::Kind::Sub, n, parse_term());
        else return n;
      }
    }
    NodePtr parse_term() {
      NodePtr n = parse_unary();
      for (;;) {
        if (accept('*')) n = make(Node::Kind::Mul, n, parse_unary());
        else if (accept('/')) n = make(Node::Kind::Div, n, parse_unary());
        else return n;
      }
    }
    NodePtr parse_unary() {
      if (accept('-')) return make(Node::Kind::Neg, parse_unary());
      if (accept('+')) return parse_unary();
      return parse_power();
    }
    NodePtr parse_power() {
      NodePtr base = parse_primary();
      if (accept('^')) return make(Node::Kind::Pow, base, parse_unary());
      return base;
    }
    NodePtr parse_primary() {
      skip_ws();
      if (pos >= s.size()) fail("unexpected end of expression");
      if (accept('(')) {
        NodePtr n = parse_expr();
        if (!accept(')')) fail("expected ')'");
        return n;
      }
      const char c = s[pos];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(s.substr(pos), &used);
        } catch (const std::exception&) {
          fail("malformed number");
        }
        pos += used;
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::Number;
        n->value = v;
        return n;
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        const std::size_t start = pos;
        while (pos < s.size() &&
               (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
          ++pos;
        const std::string name = s.substr(start, pos - start);
        if (accept('(')) {
          NodePtr arg = parse_expr();
          if (!accept(')')) fail("expected ')' after function argument");
          if (name == "exp") return make(Node::Kind::Exp, arg);
          if (name == "log") return make(Node::Kind::Log, arg);
          if (name == "sqrt") return make(Node::Kind::Sqrt, arg);
          if (name == "abs") return make(Node::Kind::Abs, arg);
          fail("unknown function '" + name + "'");
        }
        const auto slot = resolve(name);
        if (!slot) fail("unknown variable '" + name + "'");
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::Var;
        n->slot = *slot;
        return n;
      }
      fail(std::string("unexpected character '") + c + "'");
    }
  };

  std::string text_;
  NodePtr root_;
};

}  // namespace pscrt
