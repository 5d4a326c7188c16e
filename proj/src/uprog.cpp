#include "mimd/uprog.hpp"

#include <cassert>
#include <functional>
#include <sstream>

#include "mimd/error.hpp"

namespace mimd {

Command Command::aap(const MatRange& r, int src, RowSet dst) {
    Command c;
    c.kind = Kind::Aap;
    c.range = r;
    c.src_row = src;
    c.dst_rows = dst;
    return c;
}

Command Command::ap(const MatRange& r, int a, int b, int c3) {
    Command c;
    c.kind = Kind::Ap;
    c.range = r;
    c.tra_rows = {a, b, c3};
    return c;
}

Command Command::gb_mov(MoveCoord src, MoveCoord dst) {
    Command c;
    c.kind = Kind::GbMov;
    c.range = MatRange{std::min(src.mat, dst.mat), std::max(src.mat, dst.mat)};
    c.move_src = src;
    c.move_dst = dst;
    return c;
}

Command Command::lc_mov(MoveCoord src, MoveCoord dst) {
    Command c;
    c.kind = Kind::LcMov;
    c.range = MatRange{src.mat, src.mat};
    c.move_src = src;
    c.move_dst = dst;
    return c;
}

std::string to_string(const Command& c) {
    std::ostringstream os;
    auto mats = [&]() {
        os << " @ mats[" << c.range.begin;
        if (c.range.end != c.range.begin) os << ".." << c.range.end;
        os << "]";
    };
    switch (c.kind) {
        case Command::Kind::Aap:
            os << "AAP " << RowGroups::row_name(c.src_row) << " -> "
               << RowGroups::row_name(c.dst_rows.rows[0]);
            if (c.dst_rows.count == 2) os << "," << RowGroups::row_name(c.dst_rows.rows[1]);
            mats();
            break;
        case Command::Kind::Ap:
            os << "AP " << RowGroups::row_name(c.tra_rows[0]) << ","
               << RowGroups::row_name(c.tra_rows[1]) << ","
               << RowGroups::row_name(c.tra_rows[2]);
            mats();
            break;
        case Command::Kind::GbMov:
            os << "GB-MOV mat" << c.move_src.mat << ":r" << c.move_src.row << ":c"
               << c.move_src.column << " -> mat" << c.move_dst.mat << ":r" << c.move_dst.row
               << ":c" << c.move_dst.column;
            break;
        case Command::Kind::LcMov:
            os << "LC-MOV mat" << c.move_src.mat << ":r" << c.move_src.row << ":c"
               << c.move_src.column << " -> mat" << c.move_dst.mat << ":r" << c.move_dst.row
               << ":c" << c.move_dst.column;
            break;
    }
    return os.str();
}

void MicroProgram::push(const Command& c) {
    commands.push_back(c);
    switch (c.kind) {
        case Command::Kind::Aap: ++stats.aap_count; break;
        case Command::Kind::Ap: ++stats.ap_count; break;
        case Command::Kind::GbMov: ++stats.gbmov_count; break;
        case Command::Kind::LcMov: ++stats.lcmov_count; break;
    }
}

namespace {

using RG = RowGroups;

/// Command-emission helper bound to one mat range.
struct Emitter {
    MicroProgram& prog;
    MatRange range;

    void aap(int src, RowSet dst) { prog.push(Command::aap(range, src, dst)); }
    void ap(int a, int b, int c) { prog.push(Command::ap(range, a, b, c)); }
};

using RowFn = std::function<int(int)>;

struct AdderSpec {
    RowFn a_row;
    RowFn b_row;
    RowFn dst_row;  // may return -1 to drop a bit
    int width = 0;
    bool complement_b = false;   // computes a + ~b + carry_in
    bool carry_init_one = false;
    int carry_out_row = -1;      // data row receiving the final carry
};

/// Bit-serial majority adder. Carry state rides in T2 (direct) and in one
/// of T0/T3 (complemented), alternating per bit so the complemented carry
/// produced by one slice is consumed in place by the next.
///
/// Per bit, with Cin in T2 and ~Cin in cinN:
///   AAP a      -> {spare, DCC0}   A in a scratch row, ~A behind DCC0
///   AAP b      -> {T1, DCC1}      B, ~B likewise
///   AP (spare, T1, cinN)          M    = MAJ(A, B, ~Cin)
///   AP (DCC0, DCC1, spare)        ~Cout = MAJ(~A, ~B, M)
///   AP (T1, DCC0, T2)             Sum  = MAJ(M, ~Cout, Cin)
///   AAP T1     -> dst
///   AAP spare  -> DCC0            stage ~Cout
///   AAP DCC0   -> T2              Cin' = Cout; spare keeps ~Cout
void emit_adder(Emitter& e, const AdderSpec& s) {
    e.aap(s.carry_init_one ? RG::kC1 : RG::kC0, RowSet(RG::kT2));
    e.aap(s.carry_init_one ? RG::kC0 : RG::kC1, RowSet(RG::kT0));
    for (int i = 0; i < s.width; ++i) {
        const int cin_n = (i % 2 == 0) ? RG::kT0 : RG::kT3;
        const int spare = (i % 2 == 0) ? RG::kT3 : RG::kT0;
        e.aap(s.a_row(i), RowSet(spare, RG::kDcc0));
        if (!s.complement_b) {
            e.aap(s.b_row(i), RowSet(RG::kT1, RG::kDcc1));
        } else {
            // The slice needs ~B directly and B behind DCC1.
            e.aap(s.b_row(i), RowSet(RG::kDcc1));
            e.aap(RG::kDcc1, RowSet(RG::kT1));
            e.aap(RG::kT1, RowSet(RG::kDcc1));
        }
        e.ap(spare, RG::kT1, cin_n);
        e.ap(RG::kDcc0, RG::kDcc1, spare);
        e.ap(RG::kT1, RG::kDcc0, RG::kT2);
        int dst = s.dst_row(i);
        if (dst >= 0) e.aap(RG::kT1, RowSet(dst));
        e.aap(spare, RowSet(RG::kDcc0));
        e.aap(RG::kDcc0, RowSet(RG::kT2));
    }
    if (s.carry_out_row >= 0) e.aap(RG::kT2, RowSet(s.carry_out_row));
}

enum class BitOp { And, Or, Xor };

/// dst = a OP b, one row triple at a time.
void emit_bitwise(Emitter& e, BitOp op, const RowFn& dst, const RowFn& a, const RowFn& b,
                  int width) {
    for (int i = 0; i < width; ++i) {
        if (op == BitOp::Xor) {
            e.aap(a(i), RowSet(RG::kT0, RG::kT2));
            e.aap(b(i), RowSet(RG::kT1, RG::kT3));
            e.aap(RG::kC1, RowSet(RG::kDcc0));  // contributes 0
            e.ap(RG::kT0, RG::kT1, RG::kDcc0);  // T0 = a & b
            e.aap(RG::kC0, RowSet(RG::kDcc1));  // contributes 1
            e.ap(RG::kT2, RG::kT3, RG::kDcc1);  // T2 = a | b
            e.aap(RG::kT0, RowSet(RG::kDcc0));  // DCC0 contributes ~(a & b)
            e.aap(RG::kC1, RowSet(RG::kDcc1));  // contributes 0
            e.ap(RG::kT2, RG::kDcc0, RG::kDcc1);
            e.aap(RG::kT2, RowSet(dst(i)));
        } else {
            e.aap(a(i), RowSet(RG::kT0));
            e.aap(b(i), RowSet(RG::kT1));
            e.aap(op == BitOp::And ? RG::kC1 : RG::kC0, RowSet(RG::kDcc0));
            e.ap(RG::kT0, RG::kT1, RG::kDcc0);
            e.aap(RG::kT0, RowSet(dst(i)));
        }
    }
}

/// dst = ~a.
void emit_not(Emitter& e, const RowFn& dst, const RowFn& a, int width) {
    for (int i = 0; i < width; ++i) {
        e.aap(a(i), RowSet(RG::kDcc0));
        e.aap(RG::kDcc0, RowSet(dst(i)));
    }
}

/// dst = sel ? x : y, with one selector row gating every bit.
void emit_mux(Emitter& e, int sel_row, const RowFn& dst, const RowFn& x, const RowFn& y,
              int width) {
    for (int i = 0; i < width; ++i) {
        e.aap(x(i), RowSet(RG::kT0));
        e.aap(sel_row, RowSet(RG::kT1));
        e.aap(RG::kC1, RowSet(RG::kDcc0));
        e.ap(RG::kT0, RG::kT1, RG::kDcc0);  // T0 = x & sel
        e.aap(y(i), RowSet(RG::kT2));
        e.aap(sel_row, RowSet(RG::kDcc1));  // contributes ~sel
        e.aap(RG::kC1, RowSet(RG::kDcc0));
        e.ap(RG::kT2, RG::kDcc1, RG::kDcc0);  // T2 = y & ~sel
        e.aap(RG::kC0, RowSet(RG::kDcc0));    // contributes 1
        e.ap(RG::kT0, RG::kT2, RG::kDcc0);    // T0 = T0 | T2
        e.aap(RG::kT0, RowSet(dst(i)));
    }
}

/// acc_row |= src_row (single rows).
void emit_or_into(Emitter& e, int acc_row, int src_row) {
    e.aap(acc_row, RowSet(RG::kT0));
    e.aap(src_row, RowSet(RG::kT1));
    e.aap(RG::kC0, RowSet(RG::kDcc0));
    e.ap(RG::kT0, RG::kT1, RG::kDcc0);
    e.aap(RG::kT0, RowSet(acc_row));
}

void zero_rows(Emitter& e, const RowFn& row, int from, int to) {
    for (int i = from; i < to; ++i) e.aap(RG::kC0, RowSet(row(i)));
}

/// ~(a == b) into neq_row: OR-fold of the XOR rows.
void emit_neq(Emitter& e, const RowFn& a, const RowFn& b, int width, int xor_base,
              int neq_row) {
    auto xr = [&](int i) { return xor_base + i; };
    emit_bitwise(e, BitOp::Xor, xr, a, b, width);
    e.aap(RG::kC0, RowSet(neq_row));
    for (int i = 0; i < width; ++i) emit_or_into(e, neq_row, xr(i));
}

int bits_for(int n) {
    int b = 1;
    while ((1 << b) <= n) ++b;
    return b;
}

struct BuildCtx {
    Emitter e;
    const Bbop& b;
    const UprogOperands& ops;

    RowFn dst() const { return row_fn(ops.dst_base); }
    RowFn a() const { return row_fn(ops.src1_base); }
    RowFn bsrc() const { return row_fn(ops.src2_base); }
    static RowFn row_fn(int base) {
        return [base](int i) { return base + i; };
    }
    int scratch(int offset) const { return ops.scratch_base + offset; }
};

void build_add_sub(BuildCtx& c, bool sub) {
    AdderSpec s;
    s.a_row = c.a();
    s.b_row = c.bsrc();
    s.dst_row = c.dst();
    s.width = c.b.bitwidth;
    s.complement_b = sub;
    s.carry_init_one = sub;
    emit_adder(c.e, s);
}

void build_mul(BuildCtx& c) {
    const int n = c.b.bitwidth;
    const int acc = c.scratch(0);
    const int pp = c.scratch(64);
    zero_rows(c.e, BuildCtx::row_fn(acc), 0, n);
    for (int k = 0; k < n; ++k) {
        const int w = n - k;
        // Partial product: a masked by bit k of b, feeding a shifted add.
        emit_bitwise(c.e, BitOp::And, BuildCtx::row_fn(pp), c.a(),
                     [&](int) { return c.ops.src2_base + k; }, w);
        AdderSpec s;
        s.a_row = [&, k](int i) { return acc + k + i; };
        s.b_row = BuildCtx::row_fn(pp);
        s.dst_row = [&, k](int i) { return acc + k + i; };
        s.width = w;
        emit_adder(c.e, s);
    }
    for (int i = 0; i < n; ++i) c.e.aap(acc + i, RowSet(c.ops.dst_base + i));
}

void build_div(BuildCtx& c) {
    const int n = c.b.bitwidth;
    const int w = n + 1;  // remainder carries one guard bit
    const int rem = c.scratch(0);
    const int diff = c.scratch(66);
    const int quot = c.scratch(132);
    const int ge = c.scratch(198);
    zero_rows(c.e, BuildCtx::row_fn(rem), 0, w);
    for (int k = n - 1; k >= 0; --k) {
        for (int j = w - 1; j >= 1; --j) c.e.aap(rem + j - 1, RowSet(rem + j));
        c.e.aap(c.ops.src1_base + k, RowSet(rem));
        AdderSpec s;  // diff = rem - b (b zero-extended to w bits)
        s.a_row = BuildCtx::row_fn(rem);
        s.b_row = [&](int i) { return i < n ? c.ops.src2_base + i : RG::kC0; };
        s.dst_row = BuildCtx::row_fn(diff);
        s.width = w;
        s.complement_b = true;
        s.carry_init_one = true;
        s.carry_out_row = ge;
        emit_adder(c.e, s);
        c.e.aap(ge, RowSet(quot + k));
        emit_mux(c.e, ge, BuildCtx::row_fn(rem), BuildCtx::row_fn(diff),
                 BuildCtx::row_fn(rem), w);
    }
    for (int i = 0; i < n; ++i) c.e.aap(quot + i, RowSet(c.ops.dst_base + i));
}

/// ge_row = (a >= b), unsigned, via the subtractor's final carry.
void emit_ge_flag(BuildCtx& c, int ge_row) {
    AdderSpec s;
    s.a_row = c.a();
    s.b_row = c.bsrc();
    s.dst_row = [](int) { return -1; };
    s.width = c.b.bitwidth;
    s.complement_b = true;
    s.carry_init_one = true;
    s.carry_out_row = ge_row;
    emit_adder(c.e, s);
}

void build_compare(BuildCtx& c) {
    const int n = c.b.bitwidth;
    const int ge = c.scratch(0);
    const int neq = c.scratch(1);
    const int xors = c.scratch(2);
    switch (c.b.op) {
        case ArithOp::Eq:
            emit_neq(c.e, c.a(), c.bsrc(), n, xors, neq);
            c.e.aap(neq, RowSet(RG::kDcc0));
            c.e.aap(RG::kDcc0, RowSet(c.ops.dst_base));
            break;
        case ArithOp::Ge:
            emit_ge_flag(c, ge);
            c.e.aap(ge, RowSet(c.ops.dst_base));
            break;
        case ArithOp::Gt: {
            emit_ge_flag(c, ge);
            emit_neq(c.e, c.a(), c.bsrc(), n, xors, neq);
            c.e.aap(ge, RowSet(RG::kT0));
            c.e.aap(neq, RowSet(RG::kT1));
            c.e.aap(RG::kC1, RowSet(RG::kDcc0));
            c.e.ap(RG::kT0, RG::kT1, RG::kDcc0);
            c.e.aap(RG::kT0, RowSet(c.ops.dst_base));
            break;
        }
        default:
            throw Error("not a comparison");
    }
    zero_rows(c.e, c.dst(), 1, n);
}

void build_minmax(BuildCtx& c) {
    const int ge = c.scratch(0);
    emit_ge_flag(c, ge);
    if (c.b.op == ArithOp::Max)
        emit_mux(c.e, ge, c.dst(), c.a(), c.bsrc(), c.b.bitwidth);
    else
        emit_mux(c.e, ge, c.dst(), c.bsrc(), c.a(), c.b.bitwidth);
}

void build_bitcount(BuildCtx& c) {
    const int n = c.b.bitwidth;
    const int w = std::min(n, bits_for(n));
    const int acc = c.scratch(0);
    zero_rows(c.e, BuildCtx::row_fn(acc), 0, w);
    for (int j = 0; j < n; ++j) {
        AdderSpec s;
        s.a_row = BuildCtx::row_fn(acc);
        s.b_row = [&, j](int i) { return i == 0 ? c.ops.src1_base + j : RG::kC0; };
        s.dst_row = BuildCtx::row_fn(acc);
        s.width = w;
        emit_adder(c.e, s);
    }
    for (int i = 0; i < w; ++i) c.e.aap(acc + i, RowSet(c.ops.dst_base + i));
    zero_rows(c.e, c.dst(), w, n);
}

void build_abs(BuildCtx& c) {
    const int n = c.b.bitwidth;
    const int sign = c.ops.src1_base + n - 1;
    const int neg = c.scratch(0);
    const int inv = c.scratch(64);
    emit_not(c.e, BuildCtx::row_fn(inv), c.a(), n);
    AdderSpec s;  // neg = ~a + 1
    s.a_row = BuildCtx::row_fn(inv);
    s.b_row = [](int i) { return i == 0 ? RG::kC1 : RG::kC0; };
    s.dst_row = BuildCtx::row_fn(neg);
    s.width = n;
    emit_adder(c.e, s);
    emit_mux(c.e, sign, c.dst(), BuildCtx::row_fn(neg), c.a(), n);
}

void build_relu(BuildCtx& c) {
    const int n = c.b.bitwidth;
    const int sign = c.ops.src1_base + n - 1;
    for (int i = 0; i < n; ++i) {
        c.e.aap(c.ops.src1_base + i, RowSet(RG::kT0));
        c.e.aap(sign, RowSet(RG::kDcc0));   // contributes ~sign
        c.e.aap(RG::kC1, RowSet(RG::kDcc1));  // contributes 0
        c.e.ap(RG::kT0, RG::kDcc0, RG::kDcc1);
        c.e.aap(RG::kT0, RowSet(c.ops.dst_base + i));
    }
}

void build_if_else(BuildCtx& c) {
    emit_mux(c.e, c.ops.sel_base, c.dst(), c.a(), c.bsrc(), c.b.bitwidth);
}

}  // namespace

MicroProgram build_uprog(const Bbop& b, const UprogOperands& ops) {
    if (!b.range.has_value()) throw Error("build_uprog: unresolved mat range");
    MicroProgram prog;
    prog.bbop_kind = b.kind;
    prog.op = b.op;
    prog.bitwidth = b.bitwidth;

    Emitter e{prog, *b.range};
    BuildCtx ctx{e, b, ops};

    switch (b.kind) {
        case BbopKind::IfElse:
            build_if_else(ctx);
            return prog;
        case BbopKind::UnaryArith:
        case BbopKind::BinaryArith:
            break;
        default:
            throw Error("build_uprog: unsupported bbop kind");
    }

    switch (b.op) {
        case ArithOp::Add: build_add_sub(ctx, false); break;
        case ArithOp::Sub: build_add_sub(ctx, true); break;
        case ArithOp::Mul: build_mul(ctx); break;
        case ArithOp::Div: build_div(ctx); break;
        case ArithOp::And:
            emit_bitwise(e, BitOp::And, ctx.dst(), ctx.a(), ctx.bsrc(), b.bitwidth);
            break;
        case ArithOp::Or:
            emit_bitwise(e, BitOp::Or, ctx.dst(), ctx.a(), ctx.bsrc(), b.bitwidth);
            break;
        case ArithOp::Xor:
            emit_bitwise(e, BitOp::Xor, ctx.dst(), ctx.a(), ctx.bsrc(), b.bitwidth);
            break;
        case ArithOp::Not: emit_not(e, ctx.dst(), ctx.a(), b.bitwidth); break;
        case ArithOp::Abs: build_abs(ctx); break;
        case ArithOp::Relu: build_relu(ctx); break;
        case ArithOp::Bitcount: build_bitcount(ctx); break;
        case ArithOp::Max:
        case ArithOp::Min: build_minmax(ctx); break;
        case ArithOp::Eq:
        case ArithOp::Gt:
        case ArithOp::Ge: build_compare(ctx); break;
        default:
            throw Error(std::string("build_uprog: unsupported op ") + to_string(b.op));
    }
    return prog;
}

void append_elementwise(MicroProgram& prog, const MatRange& range, ArithOp op,
                        int dst_base, int a_base, int b_base, int width) {
    Emitter e{prog, range};
    auto dst = BuildCtx::row_fn(dst_base);
    auto a = BuildCtx::row_fn(a_base);
    auto b = BuildCtx::row_fn(b_base);
    switch (op) {
        case ArithOp::Add: {
            AdderSpec s;
            s.a_row = a;
            s.b_row = b;
            s.dst_row = dst;
            s.width = width;
            emit_adder(e, s);
            break;
        }
        case ArithOp::And: emit_bitwise(e, BitOp::And, dst, a, b, width); break;
        case ArithOp::Or: emit_bitwise(e, BitOp::Or, dst, a, b, width); break;
        case ArithOp::Xor: emit_bitwise(e, BitOp::Xor, dst, a, b, width); break;
        default: throw Error("append_elementwise: unsupported op");
    }
}

namespace {

void apply_move_bits(const Command& cmd, DramModule& mats, int width) {
    MatArray& src = mats.mat(cmd.move_src.mat);
    MatArray& dst = mats.mat(cmd.move_dst.mat);
    for (int w = 0; w < width; ++w) {
        bool bit = src.get_bit(cmd.move_src.row, cmd.move_src.column + w);
        dst.set_bit(cmd.move_dst.row, cmd.move_dst.column + w, bit);
    }
}

}  // namespace

void execute_aap(const Command& cmd, DramModule& mats) {
    for (int m = cmd.range.begin; m <= cmd.range.end; ++m) {
        MatArray& mat = mats.mat(m);
        mat.activate(cmd.src_row);
        std::vector<int> dsts(cmd.dst_rows.rows.begin(),
                              cmd.dst_rows.rows.begin() + cmd.dst_rows.count);
        mat.activate_additional(dsts);
        mat.precharge();
    }
}

void execute_ap(const Command& cmd, DramModule& mats) {
    for (int i = 0; i < 3; ++i)
        if (!RowGroups::is_compute_row(cmd.tra_rows[i]))
            throw ProtocolError("AP row " + std::to_string(cmd.tra_rows[i]) +
                                " is not a designated compute row");
    for (int m = cmd.range.begin; m <= cmd.range.end; ++m) {
        MatArray& mat = mats.mat(m);
        mat.activate_triple(cmd.tra_rows[0], cmd.tra_rows[1], cmd.tra_rows[2]);
        mat.precharge();
    }
}

void execute_command(const Command& cmd, DramModule& mats) {
    switch (cmd.kind) {
        case Command::Kind::Aap: execute_aap(cmd, mats); break;
        case Command::Kind::Ap: execute_ap(cmd, mats); break;
        case Command::Kind::GbMov:
        case Command::Kind::LcMov:
            apply_move_bits(cmd, mats, mats.geometry().hffs_per_mat);
            break;
    }
}

void execute_uprog(const MicroProgram& p, DramModule& mats) {
    for (const Command& c : p.commands) execute_command(c, mats);
}

}  // namespace mimd
