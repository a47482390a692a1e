// rule.hpp: closed-form eigenvalue rules such as "lambda_k = k^2".
//
// The right-hand side is an arithmetic expression in the level index k
// (1-based) with + - * / ^, parentheses, numeric literals, the constant pi
// and the functions sqrt, log, exp. It is compiled once to postfix form.

#pragma once

#include "lgc/linalg.hpp"

#include <cctype>
#include <cmath>
#include <string>
#include <vector>

namespace lgc {

class EigenvalueRule {
public:
    EigenvalueRule() = default;

    explicit EigenvalueRule(std::string text) : text_(std::move(text)) {
        std::string rhs = text_;
        if (const auto eq = rhs.find('='); eq != std::string::npos) rhs = rhs.substr(eq + 1);
        Parser p{rhs, 0, {}};
        p.parse_expr();
        p.skip_ws();
        if (p.pos != rhs.size()) {
            throw input_error("eigenvalue rule: unexpected '" + rhs.substr(p.pos) + "' in \"" + text_ + "\"");
        }
        code_ = std::move(p.out);
    }

    const std::string& text() const noexcept { return text_; }

    double operator()(int k) const {
        std::vector<double> st;
        st.reserve(code_.size());
        for (const auto& op : code_) {
            switch (op.kind) {
                case Op::Number: st.push_back(op.value); break;
                case Op::Index: st.push_back(static_cast<double>(k)); break;
                case Op::Neg: st.back() = -st.back(); break;
                case Op::Sqrt: st.back() = std::sqrt(st.back()); break;
                case Op::Log: st.back() = std::log(st.back()); break;
                case Op::Exp: st.back() = std::exp(st.back()); break;
                default: {
                    const double rhs = st.back();
                    st.pop_back();
                    double& lhs = st.back();
                    switch (op.kind) {
                        case Op::Add: lhs += rhs; break;
                        case Op::Sub: lhs -= rhs; break;
                        case Op::Mul: lhs *= rhs; break;
                        case Op::Div: lhs /= rhs; break;
                        case Op::Pow: lhs = std::pow(lhs, rhs); break;
                        default: break;
                    }
                }
            }
        }
        return st.back();
    }

private:
    struct Op {
        enum Kind { Number, Index, Add, Sub, Mul, Div, Pow, Neg, Sqrt, Log, Exp } kind;
        double value = 0.0;
    };

    struct Parser {
        const std::string& s;
        std::size_t pos;
        std::vector<Op> out;

        void skip_ws() {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        }
        bool eat(char c) {
            skip_ws();
            if (pos < s.size() && s[pos] == c) {
                ++pos;
                return true;
            }
            return false;
        }
        [[noreturn]] void fail(const std::string& what) const {
            throw input_error("eigenvalue rule: " + what + " at position " + std::to_string(pos) + " in \"" + s + "\"");
        }
        void parse_expr() {
            parse_term();
            for (;;) {
                if (eat('+')) {
                    parse_term();
                    out.push_back({Op::Add});
                } else if (eat('-')) {
                    parse_term();
                    out.push_back({Op::Sub});
                } else {
                    return;
                }
            }
        }
        void parse_term() {
            parse_unary();
            for (;;) {
                if (eat('*')) {
                    parse_unary();
                    out.push_back({Op::Mul});
                } else if (eat('/')) {
                    parse_unary();
                    out.push_back({Op::Div});
                } else {
                    return;
                }
            }
        }
        void parse_unary() {
            if (eat('-')) {
                parse_unary();
                out.push_back({Op::Neg});
                return;
            }
            if (eat('+')) {
                parse_unary();
                return;
            }
            parse_power();
        }
        void parse_power() {
            parse_primary();
            if (eat('^')) {
                parse_unary();  // right associative, allows k^-1
                out.push_back({Op::Pow});
            }
        }
        void parse_primary() {
            skip_ws();
            if (pos >= s.size()) fail("unexpected end");
            const char c = s[pos];
            if (c == '(') {
                ++pos;
                parse_expr();
                if (!eat(')')) fail("missing ')'");
                return;
            }
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                std::size_t used = 0;
                const double v = std::stod(s.substr(pos), &used);
                pos += used;
                out.push_back({Op::Number, v});
                return;
            }
            if (std::isalpha(static_cast<unsigned char>(c))) {
                const std::size_t start = pos;
                while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
                const std::string id = s.substr(start, pos - start);
                if (id == "k") {
                    out.push_back({Op::Index});
                    return;
                }
                if (id == "pi") {
                    out.push_back({Op::Number, kPi});
                    return;
                }
                Op::Kind fn;
                if (id == "sqrt") fn = Op::Sqrt;
                else if (id == "log") fn = Op::Log;
                else if (id == "exp") fn = Op::Exp;
                else fail("unknown identifier '" + id + "'");
                if (!eat('(')) fail("expected '(' after " + id);
                parse_expr();
                if (!eat(')')) fail("missing ')'");
                out.push_back({fn});
                return;
            }
            fail(std::string("unexpected '") + c + "'");
        }
    };

    std::string text_;
    std::vector<Op> code_;
};

}  // namespace lgc
