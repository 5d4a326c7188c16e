#include "mimd/compiler.hpp"

#include <algorithm>
#include <cassert>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "mimd/error.hpp"
#include "mimd/interconnect.hpp"

namespace mimd {

namespace {

void validate(const KernelIr& ir);

// ---------------------------------------------------------------- lexer ---

struct Token {
    enum Kind { Ident, Int, Sym, End } kind = End;
    std::string text;
    uint64_t value = 0;
    int line = 1;
};

class Lexer {
  public:
    explicit Lexer(const std::string& src) : src_(src) { advance(); }

    const Token& peek() const { return tok_; }
    Token next() {
        Token t = tok_;
        advance();
        return t;
    }
    bool accept_sym(const std::string& s) {
        if (tok_.kind == Token::Sym && tok_.text == s) {
            advance();
            return true;
        }
        return false;
    }
    void expect_sym(const std::string& s) {
        if (!accept_sym(s))
            throw ParseError(tok_.line, "expected '" + s + "', got '" + tok_.text + "'");
    }
    std::string expect_ident() {
        if (tok_.kind != Token::Ident)
            throw ParseError(tok_.line, "expected identifier, got '" + tok_.text + "'");
        return next().text;
    }
    uint64_t expect_int() {
        if (tok_.kind != Token::Int)
            throw ParseError(tok_.line, "expected integer, got '" + tok_.text + "'");
        return next().value;
    }

  private:
    void advance() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '\n') {
                ++line_;
                ++pos_;
            } else if (isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
        tok_ = Token{};
        tok_.line = line_;
        if (pos_ >= src_.size()) {
            tok_.kind = Token::End;
            tok_.text = "<eof>";
            return;
        }
        char c = src_[pos_];
        if (isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = pos_;
            while (pos_ < src_.size() &&
                   (isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                ++pos_;
            tok_.kind = Token::Ident;
            tok_.text = src_.substr(start, pos_ - start);
            return;
        }
        if (isdigit(static_cast<unsigned char>(c))) {
            size_t start = pos_;
            while (pos_ < src_.size() && isdigit(static_cast<unsigned char>(src_[pos_])))
                ++pos_;
            tok_.kind = Token::Int;
            tok_.text = src_.substr(start, pos_ - start);
            tok_.value = std::stoull(tok_.text);
            return;
        }
        static const char* two_char[] = {"..", "==", ">=", "+=", "&=", "|=", "^="};
        for (const char* s : two_char) {
            if (src_.compare(pos_, 2, s) == 0) {
                tok_.kind = Token::Sym;
                tok_.text = s;
                pos_ += 2;
                return;
            }
        }
        tok_.kind = Token::Sym;
        tok_.text = std::string(1, c);
        ++pos_;
    }

    const std::string& src_;
    size_t pos_ = 0;
    int line_ = 1;
    Token tok_;
};

// --------------------------------------------------------------- parser ---

ast::ExprPtr make_ref(const std::string& name, int line) {
    auto e = std::make_unique<ast::Expr>();
    e->kind = ast::ExprKind::Ref;
    e->name = name;
    e->line = line;
    return e;
}

class Parser {
  public:
    explicit Parser(const std::string& src) : lex_(src) {}

    KernelIr parse() {
        KernelIr ir;
        while (lex_.peek().kind != Token::End) {
            const Token& t = lex_.peek();
            if (t.kind != Token::Ident)
                throw ParseError(t.line, "expected declaration or loop");
            if (t.text == "array") parse_array(ir);
            else if (t.text == "scalar") parse_scalar(ir);
            else if (t.text == "for") ir.loops.push_back(parse_loop(nullptr));
            else throw ParseError(t.line, "unexpected '" + t.text + "'");
        }
        validate(ir);
        return ir;
    }

  private:
    void parse_array(KernelIr& ir) {
        int line = lex_.peek().line;
        lex_.next();
        ArrayDecl d;
        d.line = line;
        d.name = lex_.expect_ident();
        parse_decl_fields(d, /*want_size=*/true);
        ir.arrays.push_back(d);
    }

    void parse_scalar(KernelIr& ir) {
        int line = lex_.peek().line;
        lex_.next();
        ArrayDecl d;
        d.line = line;
        d.name = lex_.expect_ident();
        d.is_scalar = true;
        d.elements = 1;
        parse_decl_fields(d, /*want_size=*/false);
        ir.arrays.push_back(d);
    }

    void parse_decl_fields(ArrayDecl& d, bool want_size) {
        bool saw_n = false, saw_size = false;
        while (lex_.peek().kind == Token::Ident &&
               (lex_.peek().text == "n" || lex_.peek().text == "size")) {
            std::string key = lex_.next().text;
            lex_.expect_sym("=");
            uint64_t v = lex_.expect_int();
            if (key == "n") {
                d.bitwidth = static_cast<int>(v);
                saw_n = true;
            } else {
                d.elements = static_cast<int64_t>(v);
                saw_size = true;
            }
        }
        if (!saw_n) throw ParseError(d.line, "declaration of " + d.name + " needs n=<bits>");
        if (want_size && !saw_size)
            throw ParseError(d.line, "array " + d.name + " needs size=<elements>");
        if (d.bitwidth < 1 || d.bitwidth > 64)
            throw ParseError(d.line, "bitwidth must be in 1..64");
    }

    ast::Loop parse_loop(const std::string* outer_var) {
        int line = lex_.peek().line;
        lex_.next();  // for
        std::string var = lex_.expect_ident();
        if (lex_.expect_ident() != "in")
            throw ParseError(line, "expected 'in' after loop variable");
        return parse_loop_tail(var, line, outer_var);
    }

    ast::Loop parse_loop_tail(const std::string& var, int line,
                              const std::string* outer_var) {
        uint64_t lo = lex_.expect_int();
        lex_.expect_sym("..");
        uint64_t hi = lex_.expect_int();
        if (lo != 0) throw ParseError(line, "loops must start at 0");
        if (hi == 0) throw ParseError(line, "empty loop");
        lex_.expect_sym("{");

        ast::Loop loop;
        loop.line = line;
        loop.trip_count = static_cast<int64_t>(hi);

        if (lex_.peek().kind == Token::Ident && lex_.peek().text == "for") {
            if (outer_var != nullptr)
                throw ParseError(lex_.peek().line, "loop nests deeper than two levels");
            // Perfect two-level nest: the inner trip becomes the per-
            // iteration lane count and subscripts flatten to i*K + k.
            ast::Loop inner = parse_loop(&var);
            lex_.expect_sym("}");
            inner.lanes_per_iter = inner.trip_count;
            inner.trip_count = loop.trip_count;
            inner.line = line;
            return inner;
        }

        while (!lex_.accept_sym("}")) {
            loop.statements.push_back(parse_statement(var, outer_var));
        }
        return loop;
    }

    ast::Statement parse_statement(const std::string& var, const std::string* outer_var) {
        int line = lex_.peek().line;
        std::string name = lex_.expect_ident();
        ast::Statement st;
        st.line = line;

        if (lex_.peek().kind == Token::Sym && lex_.peek().text != "[") {
            // scalar reduction: s += expr  (also &=, |=, ^=)
            std::string op = lex_.next().text;
            if (op == "+=") st.reduce_op = ArithOp::RedSum;
            else if (op == "&=") st.reduce_op = ArithOp::RedAnd;
            else if (op == "|=") st.reduce_op = ArithOp::RedOr;
            else if (op == "^=") st.reduce_op = ArithOp::RedXor;
            else if (op == "=") {
                // temporary whole-array assignment: t = expr
                st.dst = name;
                st.expr = parse_expr(var, outer_var);
                return st;
            } else
                throw ParseError(line, "unexpected '" + op + "' after " + name);
            st.is_reduction = true;
            st.dst = name;
            st.expr = parse_expr(var, outer_var);
            return st;
        }

        parse_subscript(var, outer_var);
        lex_.expect_sym("=");
        st.dst = name;
        st.expr = parse_expr(var, outer_var);
        return st;
    }

    void parse_subscript(const std::string& var, const std::string* outer_var) {
        int line = lex_.peek().line;
        lex_.expect_sym("[");
        std::string idx = lex_.expect_ident();
        if (outer_var != nullptr && idx == *outer_var) {
            // flattened form: [i*K + k]
            lex_.expect_sym("*");
            lex_.expect_int();
            lex_.expect_sym("+");
            std::string inner = lex_.expect_ident();
            if (inner != var)
                throw ParseError(line, "subscript must be affine in the innermost index");
        } else if (idx != var) {
            if (lex_.peek().kind == Token::Sym && lex_.peek().text == "[")
                throw ParseError(line, "indirect subscripts are not vectorizable");
            throw ParseError(line, "subscript must be the loop index '" + var + "'");
        }
        lex_.expect_sym("]");
    }

    ast::ExprPtr parse_expr(const std::string& var, const std::string* outer_var) {
        return parse_ternary(var, outer_var);
    }

    ast::ExprPtr parse_ternary(const std::string& var, const std::string* outer_var) {
        auto cond = parse_or(var, outer_var);
        if (!lex_.accept_sym("?")) return cond;
        int line = lex_.peek().line;
        auto a = parse_or(var, outer_var);
        lex_.expect_sym(":");
        auto b = parse_or(var, outer_var);
        auto e = std::make_unique<ast::Expr>();
        e->kind = ast::ExprKind::Select;
        e->line = line;
        e->args.push_back(std::move(a));
        e->args.push_back(std::move(b));
        e->args.push_back(std::move(cond));
        return e;
    }

    using Sub = ast::ExprPtr (Parser::*)(const std::string&, const std::string*);

    ast::ExprPtr parse_binary_level(const std::string& var, const std::string* outer_var,
                                    std::initializer_list<std::pair<const char*, ArithOp>> ops,
                                    Sub sub) {
        auto lhs = (this->*sub)(var, outer_var);
        for (;;) {
            bool matched = false;
            for (const auto& [sym, op] : ops) {
                if (lex_.peek().kind == Token::Sym && lex_.peek().text == sym) {
                    int line = lex_.next().line;
                    auto rhs = (this->*sub)(var, outer_var);
                    auto e = std::make_unique<ast::Expr>();
                    e->kind = ast::ExprKind::Binary;
                    e->op = op;
                    e->line = line;
                    e->args.push_back(std::move(lhs));
                    e->args.push_back(std::move(rhs));
                    lhs = std::move(e);
                    matched = true;
                    break;
                }
            }
            if (!matched) return lhs;
        }
    }

    ast::ExprPtr parse_or(const std::string& v, const std::string* o) {
        return parse_binary_level(v, o, {{"|", ArithOp::Or}}, &Parser::parse_xor);
    }
    ast::ExprPtr parse_xor(const std::string& v, const std::string* o) {
        return parse_binary_level(v, o, {{"^", ArithOp::Xor}}, &Parser::parse_and);
    }
    ast::ExprPtr parse_and(const std::string& v, const std::string* o) {
        return parse_binary_level(v, o, {{"&", ArithOp::And}}, &Parser::parse_cmp);
    }
    ast::ExprPtr parse_cmp(const std::string& v, const std::string* o) {
        return parse_binary_level(
            v, o, {{"==", ArithOp::Eq}, {">=", ArithOp::Ge}, {">", ArithOp::Gt}},
            &Parser::parse_addsub);
    }
    ast::ExprPtr parse_addsub(const std::string& v, const std::string* o) {
        return parse_binary_level(v, o, {{"+", ArithOp::Add}, {"-", ArithOp::Sub}},
                                  &Parser::parse_muldiv);
    }
    ast::ExprPtr parse_muldiv(const std::string& v, const std::string* o) {
        return parse_binary_level(v, o, {{"*", ArithOp::Mul}, {"/", ArithOp::Div}},
                                  &Parser::parse_primary);
    }

    ast::ExprPtr parse_primary(const std::string& var, const std::string* outer_var) {
        const Token& t = lex_.peek();
        if (t.kind == Token::Int) {
            auto e = std::make_unique<ast::Expr>();
            e->kind = ast::ExprKind::Const;
            e->literal = lex_.next().value;
            e->line = t.line;
            return e;
        }
        if (lex_.accept_sym("(")) {
            auto e = parse_expr(var, outer_var);
            lex_.expect_sym(")");
            return e;
        }
        if (lex_.accept_sym("~")) {
            auto e = std::make_unique<ast::Expr>();
            e->kind = ast::ExprKind::Unary;
            e->op = ArithOp::Not;
            e->line = t.line;
            e->args.push_back(parse_primary(var, outer_var));
            return e;
        }
        if (t.kind != Token::Ident)
            throw ParseError(t.line, "expected operand, got '" + t.text + "'");
        std::string name = lex_.next().text;

        static const std::map<std::string, ArithOp> funcs = {
            {"abs", ArithOp::Abs},   {"relu", ArithOp::Relu},
            {"bitcount", ArithOp::Bitcount}, {"not", ArithOp::Not},
            {"max", ArithOp::Max},   {"min", ArithOp::Min},
        };
        auto f = funcs.find(name);
        if (f != funcs.end() && lex_.peek().kind == Token::Sym && lex_.peek().text == "(") {
            lex_.expect_sym("(");
            auto e = std::make_unique<ast::Expr>();
            e->line = t.line;
            e->op = f->second;
            e->args.push_back(parse_expr(var, outer_var));
            if (f->second == ArithOp::Max || f->second == ArithOp::Min) {
                e->kind = ast::ExprKind::Binary;
                lex_.expect_sym(",");
                e->args.push_back(parse_expr(var, outer_var));
            } else {
                e->kind = ast::ExprKind::Unary;
            }
            lex_.expect_sym(")");
            return e;
        }

        if (lex_.peek().kind == Token::Sym && lex_.peek().text == "[") {
            parse_subscript(var, outer_var);
            return make_ref(name, t.line);
        }
        // bare name: a temporary produced earlier in the loop
        return make_ref(name, t.line);
    }

    Lexer lex_;
};

void collect_reads(const ast::Expr& e, std::vector<std::string>& out) {
    if (e.kind == ast::ExprKind::Ref) out.push_back(e.name);
    for (const auto& a : e.args) collect_reads(*a, out);
}

}  // namespace

const ArrayDecl* KernelIr::find_array(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

namespace {

void validate(const KernelIr& ir) {
    std::set<std::string> declared;
    for (const auto& a : ir.arrays) {
        if (!declared.insert(a.name).second)
            throw ParseError(a.line, "duplicate declaration of " + a.name);
    }
    // Single static assignment per array or temporary across the kernel.
    std::set<std::string> assigned;
    for (const auto& loop : ir.loops) {
        for (const auto& st : loop.statements) {
            if (st.is_reduction) {
                const ArrayDecl* d = ir.find_array(st.dst);
                if (d == nullptr || !d->is_scalar)
                    throw ParseError(st.line, "reduction target " + st.dst +
                                                  " must be a declared scalar");
            }
            if (!st.is_reduction && !assigned.insert(st.dst).second)
                throw ParseError(st.line, st.dst + " is assigned more than once");
            const ArrayDecl* d = ir.find_array(st.dst);
            if (d != nullptr && !d->is_scalar && !st.is_reduction &&
                d->elements < compute_max_vf(loop))
                throw ParseError(st.line, st.dst + " is smaller than the loop's lane count");
        }
    }
}

}  // namespace

KernelIr parse_kernel(const std::string& text) {
    Parser p(text);
    return p.parse();
}

int64_t compute_max_vf(const ast::Loop& loop) {
    if (loop.trip_count < 1) throw Error("loop is not vectorizable: empty trip count");
    return loop.trip_count * loop.lanes_per_iter;
}

namespace {

struct BbopBuildState {
    const KernelIr* ir;
    std::vector<DdgNode> nodes;
    std::map<std::string, int> producer_of;  // operand -> node id
    std::map<std::string, int> width_of;
    int temp_counter = 0;

    int width_for(const std::string& name, int line) const {
        const ArrayDecl* d = ir->find_array(name);
        if (d != nullptr) return d->bitwidth;
        auto it = width_of.find(name);
        if (it == width_of.end())
            throw ParseError(line, "use of undeclared operand " + name);
        return it->second;
    }

    std::string fresh_temp() { return "t" + std::to_string(temp_counter++) + "_"; }
};

/// Decomposes an expression tree into single-op bbop nodes; returns the
/// operand name holding the expression value.
std::string lower_expr(BbopBuildState& s, const ast::Expr& e, int64_t vf) {
    switch (e.kind) {
        case ast::ExprKind::Ref: {
            s.width_for(e.name, e.line);  // existence check
            return e.name;
        }
        case ast::ExprKind::Const: {
            // Constant operands materialize as pre-filled arrays.
            std::string name = "__k" + std::to_string(e.literal);
            if (s.width_of.find(name) == s.width_of.end()) s.width_of[name] = 64;
            return name;
        }
        case ast::ExprKind::Unary: {
            std::string src = lower_expr(s, *e.args[0], vf);
            Bbop b;
            b.kind = BbopKind::UnaryArith;
            b.op = e.op;
            b.src1 = src;
            b.dst = s.fresh_temp();
            b.bitwidth = s.width_for(src, e.line);
            b.size = vf;
            b.vf = vf;
            b.source_line = e.line;
            s.width_of[b.dst] = b.bitwidth;
            s.nodes.push_back(DdgNode{b, {}, {}, -1, vf});
            s.producer_of[b.dst] = static_cast<int>(s.nodes.size()) - 1;
            return b.dst;
        }
        case ast::ExprKind::Binary: {
            std::string a = lower_expr(s, *e.args[0], vf);
            std::string c = lower_expr(s, *e.args[1], vf);
            Bbop b;
            b.kind = BbopKind::BinaryArith;
            b.op = e.op;
            b.src1 = a;
            b.src2 = c;
            b.dst = s.fresh_temp();
            b.bitwidth = std::max(s.width_for(a, e.line), s.width_for(c, e.line));
            b.size = vf;
            b.vf = vf;
            b.source_line = e.line;
            s.width_of[b.dst] = b.bitwidth;
            s.nodes.push_back(DdgNode{b, {}, {}, -1, vf});
            s.producer_of[b.dst] = static_cast<int>(s.nodes.size()) - 1;
            return b.dst;
        }
        case ast::ExprKind::Select: {
            std::string a = lower_expr(s, *e.args[0], vf);
            std::string c = lower_expr(s, *e.args[1], vf);
            std::string sel = lower_expr(s, *e.args[2], vf);
            Bbop b;
            b.kind = BbopKind::IfElse;
            b.src1 = a;
            b.src2 = c;
            b.sel = sel;
            b.dst = s.fresh_temp();
            b.bitwidth = std::max(s.width_for(a, e.line), s.width_for(c, e.line));
            b.size = vf;
            b.vf = vf;
            b.source_line = e.line;
            s.width_of[b.dst] = b.bitwidth;
            s.nodes.push_back(DdgNode{b, {}, {}, -1, vf});
            s.producer_of[b.dst] = static_cast<int>(s.nodes.size()) - 1;
            return b.dst;
        }
    }
    throw Error("unreachable expression kind");
}

void rename_last_dst(BbopBuildState& s, const std::string& from, const std::string& to) {
    int id = s.producer_of.at(from);
    s.nodes[id].bbop.dst = to;
    s.producer_of.erase(from);
    s.producer_of[to] = id;
    s.width_of[to] = s.width_of[from];
}

}  // namespace

bool Ddg::has_edge(int from, int to) const {
    const auto& outs = nodes[from].outputs;
    return std::find(outs.begin(), outs.end(), to) != outs.end();
}

Ddg build_ddg(const KernelIr& ir) {
    BbopBuildState s;
    s.ir = &ir;
    for (const auto& loop : ir.loops) {
        int64_t vf = compute_max_vf(loop);
        for (const auto& st : loop.statements) {
            if (st.is_reduction) {
                std::string src = lower_expr(s, *st.expr, vf);
                Bbop b;
                b.kind = BbopKind::UnaryArith;
                b.op = st.reduce_op;
                b.src1 = src;
                b.dst = st.dst;
                b.bitwidth = s.width_for(st.dst, st.line);
                b.size = vf;
                b.vf = vf;
                b.source_line = st.line;
                s.width_of[st.dst] = b.bitwidth;
                s.nodes.push_back(DdgNode{b, {}, {}, -1, vf});
                s.producer_of[st.dst] = static_cast<int>(s.nodes.size()) - 1;
                continue;
            }
            // Elementwise statement: the expression's final node writes the
            // destination array directly.
            if (st.expr->kind == ast::ExprKind::Ref) {
                // plain copy: dst[i] = src[i] lowers to a mov
                Bbop b;
                b.kind = BbopKind::Mov;
                b.src1 = st.expr->name;
                b.dst = st.dst;
                b.size = vf;
                b.bitwidth = s.width_for(st.expr->name, st.line);
                b.source_line = st.line;
                s.width_of[st.dst] = b.bitwidth;
                s.nodes.push_back(DdgNode{b, {}, {}, -1, vf});
                s.producer_of[st.dst] = static_cast<int>(s.nodes.size()) - 1;
                continue;
            }
            std::string result = lower_expr(s, *st.expr, vf);
            const ArrayDecl* d = ir.find_array(st.dst);
            int want = d != nullptr ? d->bitwidth : s.width_for(result, st.line);
            s.width_of[result] = want;
            s.nodes[s.producer_of.at(result)].bbop.bitwidth = want;
            rename_last_dst(s, result, st.dst);
        }
    }

    Ddg ddg;
    ddg.nodes = std::move(s.nodes);
    // Def-use edges; reads of names without a producer are kernel inputs.
    for (size_t i = 0; i < ddg.nodes.size(); ++i) {
        auto& node = ddg.nodes[i];
        std::vector<std::string> reads;
        const Bbop& b = node.bbop;
        if (!b.src1.empty()) reads.push_back(b.src1);
        if (!b.src2.empty()) reads.push_back(b.src2);
        if (!b.sel.empty()) reads.push_back(b.sel);
        for (const auto& r : reads) {
            int producer = -1;
            for (size_t j = 0; j < i; ++j)
                if (ddg.nodes[j].bbop.dst == r) producer = static_cast<int>(j);
            node.inputs.push_back(producer);
            if (producer >= 0) ddg.nodes[producer].outputs.push_back(static_cast<int>(i));
        }
    }
    return ddg;
}

LabelingResult assign_mat_labels(const Ddg& input) {
    LabelingResult res;
    res.ddg = input;
    auto& nodes = res.ddg.nodes;

    int next_label = 0;
    std::function<void(int, int)> visit = [&](int v, int label) {
        nodes[v].label_id = label;
        nodes[v].bbop.ml = "L" + std::to_string(label);
        bool left_taken = false;
        for (int child : nodes[v].inputs) {
            if (child < 0 || nodes[child].label_id >= 0) continue;
            if (!left_taken) {
                visit(child, label);  // left path keeps the parent's label
                left_taken = true;
            } else {
                visit(child, next_label++);  // right subtree gets a fresh one
            }
        }
    };

    // Sinks seed the traversal in program order.
    for (size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].outputs.empty() && nodes[i].label_id < 0)
            visit(static_cast<int>(i), next_label++);
    res.label_count = next_label;

    // Home label per operand: its producer's label, or the first consumer's
    // for kernel inputs.
    std::map<std::string, int> home;
    for (const auto& n : nodes) home[n.bbop.dst] = n.label_id;
    for (const auto& n : nodes) {
        for (const std::string* src : {&n.bbop.src1, &n.bbop.src2, &n.bbop.sel}) {
            if (src->empty()) continue;
            if (home.find(*src) == home.end()) home[*src] = n.label_id;
        }
    }

    // Emit in node order (already topological), inserting one mov per
    // (operand, consuming label) crossing.
    std::map<std::pair<std::string, int>, std::string> moved;
    int mov_id = 0;
    for (auto& n : nodes) {
        for (std::string* src : {&n.bbop.src1, &n.bbop.src2, &n.bbop.sel}) {
            if (src->empty()) continue;
            int src_home = home.at(*src);
            if (src_home == n.label_id) continue;
            auto key = std::pair{*src, n.label_id};
            auto it = moved.find(key);
            if (it == moved.end()) {
                std::string tmp = "mv" + std::to_string(mov_id++) + "_" + *src;
                Bbop mov;
                mov.kind = BbopKind::Mov;
                mov.dst = tmp;
                mov.src1 = *src;
                mov.size = n.bbop.size;
                mov.bitwidth = n.bbop.bitwidth;
                mov.ml = "L" + std::to_string(n.label_id);  // destination home
                res.sequence.push_back(mov);
                ++res.movs_inserted;
                it = moved.emplace(key, tmp).first;
            }
            *src = it->second;
        }
        res.sequence.push_back(n.bbop);
    }
    return res;
}

namespace {

struct OperandInfo {
    std::string name;
    int64_t size = 0;
    int bitwidth = 32;
    std::string label;
};

}  // namespace

EmitResult emit(const KernelIr& ir, const EmitOptions& opts) {
    Ddg ddg = build_ddg(ir);
    LabelingResult labeled = assign_mat_labels(ddg);

    int64_t max_vf = 0;
    for (const auto& n : labeled.ddg.nodes) max_vf = std::max(max_vf, n.vf);
    const int64_t capacity = int64_t{opts.capacity_mats} * opts.columns_per_mat;
    int batches = static_cast<int>((max_vf + capacity - 1) / capacity);
    batches = std::max(batches, 1);
    const int partitions = std::max(batches, opts.shards);
    const bool fresh_labels = opts.shards > 1;

    EmitResult out;
    out.vf = max_vf;
    out.batches = partitions;

    for (int p = 0; p < partitions; ++p) {
        std::string suffix = partitions > 1 ? "__p" + std::to_string(p) : "";
        std::vector<OperandInfo> operands;
        auto note_operand = [&](const std::string& name, int64_t size, int bitwidth,
                                const std::string& label) {
            for (const auto& o : operands)
                if (o.name == name + suffix) return;
            operands.push_back({name + suffix, size, bitwidth, label});
        };

        std::vector<Bbop> bbops;
        for (const Bbop& b : labeled.sequence) {
            int64_t lanes = b.size;
            int64_t lo = std::min<int64_t>(p * ((lanes + partitions - 1) / partitions), lanes);
            int64_t hi = std::min<int64_t>((p + 1) * ((lanes + partitions - 1) / partitions),
                                           lanes);
            int64_t part = hi - lo;
            if (part <= 0) continue;
            Bbop q = b;
            q.size = part;
            if (q.vf > 0) q.vf = part;
            std::string label = q.ml + (fresh_labels ? suffix : "");
            if (partitions > 1 && !fresh_labels) label = q.ml;  // batches share mats
            q.ml = q.kind == BbopKind::Mov ? "" : label;
            int64_t red_out = is_reduction(q.op) && q.kind == BbopKind::UnaryArith ? 4 : part;
            bool is_red = q.kind == BbopKind::UnaryArith && is_reduction(q.op);
            if (!q.dst.empty()) {
                note_operand(q.dst, is_red ? 4 : part, q.bitwidth, label);
                q.dst += suffix;
            }
            if (!q.src1.empty()) {
                note_operand(q.src1, part, q.bitwidth, label);
                q.src1 += suffix;
            }
            if (!q.src2.empty()) {
                note_operand(q.src2, part, q.bitwidth, label);
                q.src2 += suffix;
            }
            if (!q.sel.empty()) {
                note_operand(q.sel, part, q.bitwidth, label);
                q.sel += suffix;
            }
            (void)red_out;
            bbops.push_back(std::move(q));
        }

        for (const auto& o : operands) {
            AllocDirective d;
            d.name = o.name;
            d.size = o.size;
            d.label = o.label;
            out.program.allocs.push_back(d);
            Bbop t;
            t.kind = BbopKind::TrspInit;
            t.dst = o.name;
            t.size = o.size;
            t.bitwidth = o.bitwidth;
            t.ml = o.label;
            out.program.bbops.push_back(t);
        }
        for (auto& b : bbops) out.program.bbops.push_back(std::move(b));
    }
    return out;
}

EmitResult compile_kernel(const std::string& text, const EmitOptions& opts) {
    return emit(parse_kernel(text), opts);
}

namespace {

uint64_t mask_of(int n) { return n == 64 ? ~uint64_t{0} : (uint64_t{1} << n) - 1; }

uint64_t eval_op(ArithOp op, uint64_t a, uint64_t b, int n) {
    const uint64_t mask = mask_of(n);
    a &= mask;
    b &= mask;
    const uint64_t sign_bit = uint64_t{1} << (n - 1);
    switch (op) {
        case ArithOp::Add: return (a + b) & mask;
        case ArithOp::Sub: return (a - b) & mask;
        case ArithOp::Mul: return (a * b) & mask;
        case ArithOp::Div: return b == 0 ? mask : (a / b) & mask;
        case ArithOp::And: return a & b;
        case ArithOp::Or: return a | b;
        case ArithOp::Xor: return a ^ b;
        case ArithOp::Not: return ~a & mask;
        case ArithOp::Abs: return (a & sign_bit) ? (~a + 1) & mask : a;
        case ArithOp::Relu: return (a & sign_bit) ? 0 : a;
        case ArithOp::Bitcount: return static_cast<uint64_t>(__builtin_popcountll(a));
        case ArithOp::Max: return a >= b ? a : b;
        case ArithOp::Min: return a >= b ? b : a;
        case ArithOp::Eq: return a == b ? 1 : 0;
        case ArithOp::Gt: return a > b ? 1 : 0;
        case ArithOp::Ge: return a >= b ? 1 : 0;
        default: throw Error("eval_op: not an elementwise op");
    }
}

uint64_t eval_expr(const ast::Expr& e, const KernelIr& ir, const ScalarEnv& env,
                   const std::unordered_map<std::string, std::vector<uint64_t>>& temps,
                   int64_t lane, int n) {
    switch (e.kind) {
        case ast::ExprKind::Const:
            return e.literal & mask_of(n);
        case ast::ExprKind::Ref: {
            auto t = temps.find(e.name);
            if (t != temps.end()) return t->second.at(lane) & mask_of(n);
            auto it = env.arrays.find(e.name);
            if (it == env.arrays.end()) throw Error("interpret: missing input " + e.name);
            return it->second.at(lane) & mask_of(n);
        }
        case ast::ExprKind::Unary:
            return eval_op(e.op, eval_expr(*e.args[0], ir, env, temps, lane, n), 0, n);
        case ast::ExprKind::Binary:
            return eval_op(e.op, eval_expr(*e.args[0], ir, env, temps, lane, n),
                           eval_expr(*e.args[1], ir, env, temps, lane, n), n);
        case ast::ExprKind::Select: {
            uint64_t sel = eval_expr(*e.args[2], ir, env, temps, lane, n);
            return (sel & 1) ? eval_expr(*e.args[0], ir, env, temps, lane, n)
                             : eval_expr(*e.args[1], ir, env, temps, lane, n);
        }
    }
    throw Error("unreachable");
}

}  // namespace

ScalarEnv interpret_kernel(const KernelIr& ir, const ScalarEnv& inputs) {
    ScalarEnv out = inputs;
    std::unordered_map<std::string, std::vector<uint64_t>> temps;
    std::unordered_map<std::string, int> temp_width;
    for (const auto& loop : ir.loops) {
        const int64_t lanes = compute_max_vf(loop);
        for (const auto& st : loop.statements) {
            const ArrayDecl* d = ir.find_array(st.dst);
            int n = d != nullptr ? d->bitwidth : 0;
            if (d == nullptr) {
                // temporary: width inferred like the lowering pass
                std::vector<std::string> reads;
                collect_reads(*st.expr, reads);
                for (const auto& r : reads) {
                    const ArrayDecl* rd = ir.find_array(r);
                    if (rd != nullptr) n = std::max(n, rd->bitwidth);
                    else if (temp_width.count(r)) n = std::max(n, temp_width[r]);
                }
                if (n == 0) n = 32;
                temp_width[st.dst] = n;
            }
            if (st.is_reduction) {
                ReduceOp rop = reduce_op_of(st.reduce_op);
                uint64_t acc = reduce_identity(rop, n);
                for (int64_t lane = 0; lane < lanes; ++lane)
                    acc = reduce_apply(rop, acc,
                                       eval_expr(*st.expr, ir, out, temps, lane, n), n);
                out.arrays[st.dst] = {acc};
            } else {
                std::vector<uint64_t> vals(lanes);
                for (int64_t lane = 0; lane < lanes; ++lane)
                    vals[lane] = eval_expr(*st.expr, ir, out, temps, lane, n);
                if (d != nullptr) out.arrays[st.dst] = vals;
                else temps[st.dst] = vals;
            }
        }
    }
    return out;
}

}  // namespace mimd
