#pragma once

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace chdbc {

class ExpressionError : public std::invalid_argument {
public:
    ExpressionError(const std::string& msg, std::size_t pos)
        : std::invalid_argument(msg + " at column " + std::to_string(pos + 1)), column(pos + 1)
    {
    }
    std::size_t column;
};

/// Arithmetic expression in x and y.  Grammar: numbers, x, y, pi, + - * /,
/// parentheses, sin(e), cos(e), max(e, e), min(e, e).
class Expression {
public:
    Expression() = default;

    explicit Expression(std::string text) : text_(std::move(text))
    {
        Parser p{text_, 0};
        root_ = p.expr();
        p.skip();
        if (p.pos != text_.size()) throw ExpressionError("unexpected '" + std::string(1, text_[p.pos]) + "'", p.pos);
    }

    double operator()(double x, double y) const
    {
        if (!root_) throw std::logic_error("empty expression");
        return root_->eval(x, y);
    }

    const std::string& text() const { return text_; }
    bool empty() const { return !root_; }

    bool operator==(const Expression& o) const { return text_ == o.text_; }

private:
    struct Node {
        enum Kind { Num, X, Y, Neg, Add, Sub, Mul, Div, Sin, Cos, Max, Min } kind;
        double value = 0.0;
        std::shared_ptr<const Node> a, b;

        double eval(double x, double y) const
        {
            switch (kind) {
            case Num: return value;
            case X: return x;
            case Y: return y;
            case Neg: return -a->eval(x, y);
            case Add: return a->eval(x, y) + b->eval(x, y);
            case Sub: return a->eval(x, y) - b->eval(x, y);
            case Mul: return a->eval(x, y) * b->eval(x, y);
            case Div: return a->eval(x, y) / b->eval(x, y);
            case Sin: return std::sin(a->eval(x, y));
            case Cos: return std::cos(a->eval(x, y));
            case Max: return std::max(a->eval(x, y), b->eval(x, y));
            case Min: return std::min(a->eval(x, y), b->eval(x, y));
            }
            return 0.0;
        }
    };
    using Ptr = std::shared_ptr<const Node>;

    static Ptr make(Node::Kind k, Ptr a = nullptr, Ptr b = nullptr, double v = 0.0)
    {
        return std::make_shared<const Node>(Node{k, v, std::move(a), std::move(b)});
    }

    struct Parser {
        const std::string& s;
        std::size_t pos;

        void skip()
        {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        }

        bool accept(char c)
        {
            skip();
            if (pos < s.size() && s[pos] == c) {
                ++pos;
                return true;
            }
            return false;
        }

        void expect(char c)
        {
            if (!accept(c)) throw ExpressionError(std::string("expected '") + c + "'", pos);
        }

        Ptr expr()
        {
            Ptr lhs = term();
            while (true) {
                if (accept('+'))
                    lhs = make(Node::Add, lhs, term());
                else if (accept('-'))
                    lhs = make(Node::Sub, lhs, term());
                else
                    return lhs;
            }
        }

        Ptr term()
        {
            Ptr lhs = unary();
            while (true) {
                if (accept('*'))
                    lhs = make(Node::Mul, lhs, unary());
                else if (accept('/'))
                    lhs = make(Node::Div, lhs, unary());
                else
                    return lhs;
            }
        }

        Ptr unary()
        {
            if (accept('-')) return make(Node::Neg, unary());
            if (accept('+')) return unary();
            return primary();
        }

        Ptr primary()
        {
            skip();
            if (pos >= s.size()) throw ExpressionError("unexpected end of expression", pos);
            if (accept('(')) {
                Ptr e = expr();
                expect(')');
                return e;
            }
            const char c = s[pos];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
            if (std::isalpha(static_cast<unsigned char>(c))) {
                const std::size_t start = pos;
                while (pos < s.size() && std::isalnum(static_cast<unsigned char>(s[pos]))) ++pos;
                const std::string id = s.substr(start, pos - start);
                if (id == "x") return make(Node::X);
                if (id == "y") return make(Node::Y);
                if (id == "pi") return make(Node::Num, nullptr, nullptr, std::numbers::pi);
                if (id == "sin" || id == "cos") {
                    expect('(');
                    Ptr a = expr();
                    expect(')');
                    return make(id == "sin" ? Node::Sin : Node::Cos, a);
                }
                if (id == "max" || id == "min") {
                    expect('(');
                    Ptr a = expr();
                    expect(',');
                    Ptr b = expr();
                    expect(')');
                    return make(id == "max" ? Node::Max : Node::Min, a, b);
                }
                throw ExpressionError("unknown identifier '" + id + "'", start);
            }
            throw ExpressionError("unexpected '" + std::string(1, c) + "'", pos);
        }

        Ptr number()
        {
            const char* begin = s.c_str() + pos;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin) throw ExpressionError("malformed number", pos);
            pos += static_cast<std::size_t>(end - begin);
            return make(Node::Num, nullptr, nullptr, v);
        }
    };

    std::string text_;
    Ptr root_;
};

} // namespace chdbc
