#pragma once

// Closed-form field expressions over x, y and u.
//
//   expr    := term   (('+' | '-') term)*
//   term    := unary  (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?            right associative, -x^2 == -(x^2)
//   primary := number | 'x' | 'y' | 'u' | 'pi' | func '(' expr ')' | '(' expr ')'
//   func    := exp | log | sin | cos | sqrt
//
// Numbers use the C locale ("1.5e-3"). Whitespace is ignored.

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "mage/error.hpp"

namespace mage {

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t pos)
      : Error("expression: " + what + " at offset " + std::to_string(pos)), pos_(pos) {}
  std::size_t position() const noexcept { return pos_; }

 private:
  std::size_t pos_;
};

class Expression {
 public:
  Expression() : Expression("0") {}
  explicit Expression(std::string text) : text_(std::move(text)) {
    Parser p{text_, 0, nodes_};
    root_ = p.parse();
  }

  double operator()(double x, double y, double u = 0.0) const { return eval(root_, x, y, u); }

  const std::string& text() const noexcept { return text_; }

  bool uses_u() const noexcept {
    for (const auto& n : nodes_)
      if (n.op == Op::kVarU) return true;
    return false;
  }

 private:
  enum class Op { kConst, kVarX, kVarY, kVarU, kAdd, kSub, kMul, kDiv, kPow, kNeg, kExp, kLog, kSin, kCos, kSqrt };
  struct Node {
    Op op;
    double value = 0.0;
    int lhs = -1;
    int rhs = -1;
  };

  struct Parser {
    const std::string& s;
    std::size_t pos;
    std::vector<Node>& nodes;

    int add(Node n) {
      nodes.push_back(n);
      return static_cast<int>(nodes.size()) - 1;
    }
    void skip() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool accept(char c) {
      skip();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    int parse() {
      const int root = expr();
      skip();
      if (pos != s.size()) throw ParseError("unexpected '" + std::string(1, s[pos]) + "'", pos);
      return root;
    }
    int expr() {
      int lhs = term();
      for (;;) {
        if (accept('+')) lhs = add({Op::kAdd, 0.0, lhs, term()});
        else if (accept('-')) lhs = add({Op::kSub, 0.0, lhs, term()});
        else return lhs;
      }
    }
    int term() {
      int lhs = unary();
      for (;;) {
        if (accept('*')) lhs = add({Op::kMul, 0.0, lhs, unary()});
        else if (accept('/')) lhs = add({Op::kDiv, 0.0, lhs, unary()});
        else return lhs;
      }
    }
    int unary() {
      if (accept('-')) return add({Op::kNeg, 0.0, unary(), -1});
      if (accept('+')) return unary();
      return power();
    }
    int power() {
      const int base = primary();
      if (accept('^')) return add({Op::kPow, 0.0, base, unary()});
      return base;
    }
    int primary() {
      skip();
      if (pos >= s.size()) throw ParseError("unexpected end of input", pos);
      const char c = s[pos];
      if (c == '(') {
        ++pos;
        const int inner = expr();
        if (!accept(')')) throw ParseError("expected ')'", pos);
        return inner;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        const char* begin = s.c_str() + pos;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) throw ParseError("malformed number", pos);
        pos += static_cast<std::size_t>(end - begin);
        return add({Op::kConst, v});
      }
      if (std::isalpha(static_cast<unsigned char>(c))) {
        const std::size_t start = pos;
        while (pos < s.size() && std::isalnum(static_cast<unsigned char>(s[pos]))) ++pos;
        const std::string id = s.substr(start, pos - start);
        if (id == "x") return add({Op::kVarX});
        if (id == "y") return add({Op::kVarY});
        if (id == "u") return add({Op::kVarU});
        if (id == "pi") return add({Op::kConst, std::numbers::pi});
        Op fn;
        if (id == "exp") fn = Op::kExp;
        else if (id == "log") fn = Op::kLog;
        else if (id == "sin") fn = Op::kSin;
        else if (id == "cos") fn = Op::kCos;
        else if (id == "sqrt") fn = Op::kSqrt;
        else throw ParseError("unknown identifier '" + id + "'", start);
        if (!accept('(')) throw ParseError("expected '(' after " + id, pos);
        const int arg = expr();
        if (!accept(')')) throw ParseError("expected ')'", pos);
        return add({fn, 0.0, arg, -1});
      }
      throw ParseError("unexpected '" + std::string(1, c) + "'", pos);
    }
  };

  double eval(int k, double x, double y, double u) const {
    const Node& n = nodes_[static_cast<std::size_t>(k)];
    switch (n.op) {
      case Op::kConst: return n.value;
      case Op::kVarX: return x;
      case Op::kVarY: return y;
      case Op::kVarU: return u;
      case Op::kAdd: return eval(n.lhs, x, y, u) + eval(n.rhs, x, y, u);
      case Op::kSub: return eval(n.lhs, x, y, u) - eval(n.rhs, x, y, u);
      case Op::kMul: return eval(n.lhs, x, y, u) * eval(n.rhs, x, y, u);
      case Op::kDiv: return eval(n.lhs, x, y, u) / eval(n.rhs, x, y, u);
      case Op::kPow: return std::pow(eval(n.lhs, x, y, u), eval(n.rhs, x, y, u));
      case Op::kNeg: return -eval(n.lhs, x, y, u);
      case Op::kExp: return std::exp(eval(n.lhs, x, y, u));
      case Op::kLog: return std::log(eval(n.lhs, x, y, u));
      case Op::kSin: return std::sin(eval(n.lhs, x, y, u));
      case Op::kCos: return std::cos(eval(n.lhs, x, y, u));
      case Op::kSqrt: return std::sqrt(eval(n.lhs, x, y, u));
    }
    return 0.0;
  }

  std::string text_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace mage
