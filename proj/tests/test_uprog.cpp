#include <doctest.h>

#include <random>

#include "mimd/dram.hpp"
#include "mimd/error.hpp"
#include "mimd/uprog.hpp"

using namespace mimd;

namespace {

DramGeometry test_geometry() {
    DramGeometry g;
    g.chips = 1;
    g.mats_per_subarray_per_chip = 2;
    g.rows_per_mat = 1024;
    g.columns_per_mat = 64;
    return g;
}

struct Rig {
    DramModule mod;
    VerticalLayout a, b, sel, dst;
    UprogOperands ops;
    Bbop bbop;

    Rig(int n, int64_t lanes, BbopKind kind, ArithOp op) : mod(test_geometry()) {
        MatRange span{0, lanes > 64 ? 1 : 0};
        a = VerticalLayout{8, n, lanes, span};
        b = VerticalLayout{8 + 64, n, lanes, span};
        sel = VerticalLayout{8 + 128, 1, lanes, span};
        dst = VerticalLayout{8 + 192, n, lanes, span};
        ops.src1_base = a.base_row;
        ops.src2_base = b.base_row;
        ops.sel_base = sel.base_row;
        ops.dst_base = dst.base_row;
        ops.scratch_base = 1024 - kScratchArenaRows;
        ops.scratch_rows = kScratchArenaRows;
        bbop.kind = kind;
        bbop.op = op;
        bbop.bitwidth = n;
        bbop.size = lanes;
        bbop.vf = lanes;
        bbop.range = span;
    }

    std::vector<uint64_t> run(const std::vector<uint64_t>& va,
                              const std::vector<uint64_t>& vb,
                              const std::vector<uint64_t>& vsel = {}) {
        mod.transpose_h2v(va, a);
        if (!vb.empty()) mod.transpose_h2v(vb, b);
        if (!vsel.empty()) mod.transpose_h2v(vsel, sel);
        MicroProgram p = build_uprog(bbop, ops);
        execute_uprog(p, mod);
        return mod.transpose_v2h(dst);
    }
};

uint64_t mask_of(int n) { return n == 64 ? ~uint64_t{0} : (uint64_t{1} << n) - 1; }

uint64_t oracle(ArithOp op, uint64_t x, uint64_t y, int n) {
    const uint64_t m = mask_of(n);
    x &= m;
    y &= m;
    const uint64_t sign = uint64_t{1} << (n - 1);
    switch (op) {
        case ArithOp::Add: return (x + y) & m;
        case ArithOp::Sub: return (x - y) & m;
        case ArithOp::Mul: return (x * y) & m;
        case ArithOp::Div: return y == 0 ? m : (x / y) & m;
        case ArithOp::And: return x & y;
        case ArithOp::Or: return x | y;
        case ArithOp::Xor: return x ^ y;
        case ArithOp::Not: return ~x & m;
        case ArithOp::Abs: return (x & sign) ? (~x + 1) & m : x;
        case ArithOp::Relu: return (x & sign) ? 0 : x;
        case ArithOp::Bitcount: return static_cast<uint64_t>(__builtin_popcountll(x));
        case ArithOp::Max: return x >= y ? x : y;
        case ArithOp::Min: return x >= y ? y : x;
        case ArithOp::Eq: return x == y ? 1 : 0;
        case ArithOp::Gt: return x > y ? 1 : 0;
        case ArithOp::Ge: return x >= y ? 1 : 0;
        default: return 0;
    }
}

}  // namespace

TEST_SUITE("uprog") {

TEST_CASE("tra_majority matches the 8-case truth table") {
    CHECK(tra_majority(1, 1, 0));
    CHECK_FALSE(tra_majority(0, 0, 1));
    for (int i = 0; i < 8; ++i) {
        bool a = i & 1, b = i & 2, c = i & 4;
        CHECK(tra_majority(a, b, c) == ((a + b + c) >= 2));
    }
}

TEST_CASE("execute_aap copies rows") {
    DramModule mod(test_geometry());
    MatRange r{0, 1};

    SUBCASE("constant row to scratch") {
        execute_aap(Command::aap(r, RowGroups::kC1, RowSet(RowGroups::kT0)), mod);
        RowBits ones(64);
        ones.fill(true);
        CHECK(mod.mat(0).row(RowGroups::kT0) == ones);
        CHECK(mod.mat(1).row(RowGroups::kT0) == ones);
    }

    SUBCASE("negation through a dual-contact row") {
        std::mt19937_64 rng(3);
        RowBits data(64);
        for (int c = 0; c < 64; ++c) data.set(c, rng() & 1);
        mod.mat(0).write_row(100, data);
        execute_aap(Command::aap(MatRange{0, 0}, 100, RowSet(RowGroups::kDcc0)), mod);
        execute_aap(Command::aap(MatRange{0, 0}, RowGroups::kDcc0, RowSet(RowGroups::kT1)),
                    mod);
        CHECK(mod.mat(0).row(RowGroups::kT1) == complement(data));
    }

    SUBCASE("data row copy round-trips") {
        std::mt19937_64 rng(4);
        RowBits data(64);
        for (int c = 0; c < 64; ++c) data.set(c, rng() & 1);
        mod.mat(0).write_row(50, data);
        execute_aap(Command::aap(MatRange{0, 0}, 50, RowSet(60)), mod);
        CHECK(mod.mat(0).row(60) == data);
        CHECK(mod.mat(0).row(50) == data);
    }

    SUBCASE("aap on an open mat is a protocol violation") {
        mod.mat(0).activate(30);
        CHECK_THROWS_AS(
            execute_aap(Command::aap(MatRange{0, 0}, RowGroups::kC0, RowSet(RowGroups::kT0)),
                        mod),
            ProtocolError);
    }
}

TEST_CASE("execute_ap computes columnwise majority destructively") {
    DramModule mod(test_geometry());
    MatRange r{0, 0};
    std::mt19937_64 rng(11);

    SUBCASE("identity via the constant rows") {
        RowBits x(64);
        for (int c = 0; c < 64; ++c) x.set(c, rng() & 1);
        mod.mat(0).write_row(RowGroups::kT0, x);
        execute_ap(Command::ap(r, RowGroups::kC0, RowGroups::kC1, RowGroups::kT0), mod);
        CHECK(mod.mat(0).row(RowGroups::kT0) == x);
        // constants were clobbered by the destructive activation
        mod.mat(0).init_compute_rows();
    }

    SUBCASE("OR via the all-ones row") {
        RowBits x(64), y(64);
        for (int c = 0; c < 64; ++c) {
            x.set(c, rng() & 1);
            y.set(c, rng() & 1);
        }
        mod.mat(0).write_row(RowGroups::kT1, x);
        mod.mat(0).write_row(RowGroups::kT2, y);
        execute_aap(Command::aap(r, RowGroups::kC1, RowSet(RowGroups::kT0)), mod);
        execute_ap(Command::ap(r, RowGroups::kT0, RowGroups::kT1, RowGroups::kT2), mod);
        RowBits expect(64);
        for (int c = 0; c < 64; ++c) expect.set(c, x.get(c) || y.get(c));
        CHECK(mod.mat(0).row(RowGroups::kT1) == expect);
    }

    SUBCASE("random rows match the majority oracle and end identical") {
        for (int trial = 0; trial < 20; ++trial) {
            RowBits a(64), b(64), c(64);
            for (int col = 0; col < 64; ++col) {
                a.set(col, rng() & 1);
                b.set(col, rng() & 1);
                c.set(col, rng() & 1);
            }
            mod.mat(0).write_row(RowGroups::kT1, a);
            mod.mat(0).write_row(RowGroups::kT2, b);
            mod.mat(0).write_row(RowGroups::kT3, c);
            execute_ap(Command::ap(r, RowGroups::kT1, RowGroups::kT2, RowGroups::kT3), mod);
            RowBits m = majority3(a, b, c);
            CHECK(mod.mat(0).row(RowGroups::kT1) == m);
            CHECK(mod.mat(0).row(RowGroups::kT2) == m);
            CHECK(mod.mat(0).row(RowGroups::kT3) == m);
        }
    }

    SUBCASE("non-compute rows cannot join a triple activation") {
        CHECK_THROWS_AS(execute_ap(Command::ap(r, 100, RowGroups::kT0, RowGroups::kT1), mod),
                        ProtocolError);
    }
}

TEST_CASE("addition command counts follow the 8n+2 rule") {
    for (int n : {1, 8, 16, 32, 64}) {
        Rig rig(n, 8, BbopKind::BinaryArith, ArithOp::Add);
        MicroProgram p = build_uprog(rig.bbop, rig.ops);
        CHECK(p.stats.aap_count + p.stats.ap_count ==
              static_cast<uint64_t>(8 * n + 2));
        CHECK(p.stats.total() == p.commands.size());
    }
    Rig r8(8, 8, BbopKind::BinaryArith, ArithOp::Add);
    CHECK(build_uprog(r8.bbop, r8.ops).commands.size() == 66);
    Rig r32(32, 8, BbopKind::BinaryArith, ArithOp::Add);
    CHECK(build_uprog(r32.bbop, r32.ops).commands.size() == 258);
}

TEST_CASE("each addition bit slice is five row copies and three majorities") {
    Rig rig(32, 8, BbopKind::BinaryArith, ArithOp::Add);
    MicroProgram p = build_uprog(rig.bbop, rig.ops);
    REQUIRE(p.commands.size() == 2 + 32 * 8);
    CHECK(p.commands[0].kind == Command::Kind::Aap);
    CHECK(p.commands[1].kind == Command::Kind::Aap);
    for (int bit = 0; bit < 32; ++bit) {
        int aaps = 0, aps = 0;
        for (int k = 0; k < 8; ++k) {
            const Command& c = p.commands[2 + bit * 8 + k];
            if (c.kind == Command::Kind::Aap) ++aaps;
            if (c.kind == Command::Kind::Ap) ++aps;
        }
        CHECK(aaps == 5);
        CHECK(aps == 3);
    }
}

TEST_CASE("small addition vectors") {
    Rig rig(8, 4, BbopKind::BinaryArith, ArithOp::Add);
    auto out = rig.run({1, 2, 3, 4}, {1, 1, 1, 1});
    CHECK(out == std::vector<uint64_t>{2, 3, 4, 5});
}

TEST_CASE("if_else with an all-ones predicate returns src1 exactly") {
    Rig rig(8, 6, BbopKind::IfElse, ArithOp::Add);
    auto out = rig.run({9, 8, 7, 6, 5, 4}, {1, 1, 1, 1, 1, 1}, {1, 1, 1, 1, 1, 1});
    CHECK(out == std::vector<uint64_t>{9, 8, 7, 6, 5, 4});
}

TEST_CASE("microprogram results match the scalar oracle lane for lane") {
    std::mt19937_64 rng(2024);
    const std::vector<ArithOp> binary_ops = {ArithOp::Add, ArithOp::Sub, ArithOp::Mul,
                                             ArithOp::Div, ArithOp::And, ArithOp::Or,
                                             ArithOp::Xor, ArithOp::Max, ArithOp::Min,
                                             ArithOp::Eq,  ArithOp::Gt,  ArithOp::Ge};
    const std::vector<ArithOp> unary_ops = {ArithOp::Not, ArithOp::Abs, ArithOp::Relu,
                                            ArithOp::Bitcount};
    for (int n : {8, 16}) {
        const int64_t lanes = 100;
        std::vector<uint64_t> va(lanes), vb(lanes);
        for (int64_t i = 0; i < lanes; ++i) {
            va[i] = rng() & mask_of(n);
            vb[i] = rng() & mask_of(n);
        }
        vb[3] = 0;  // exercise division by zero saturation

        for (ArithOp op : binary_ops) {
            Rig rig(n, lanes, BbopKind::BinaryArith, op);
            auto out = rig.run(va, vb);
            for (int64_t i = 0; i < lanes; ++i)
                CHECK_MESSAGE(out[i] == oracle(op, va[i], vb[i], n),
                              to_string(op) << " lane " << i << " n=" << n);
        }
        for (ArithOp op : unary_ops) {
            Rig rig(n, lanes, BbopKind::UnaryArith, op);
            auto out = rig.run(va, {});
            for (int64_t i = 0; i < lanes; ++i)
                CHECK_MESSAGE(out[i] == oracle(op, va[i], 0, n),
                              to_string(op) << " lane " << i << " n=" << n);
        }
    }
}

TEST_CASE("if_else predicate selects per lane") {
    std::mt19937_64 rng(77);
    Rig rig(16, 100, BbopKind::IfElse, ArithOp::Add);
    std::vector<uint64_t> va(100), vb(100), vs(100);
    for (int i = 0; i < 100; ++i) {
        va[i] = rng() & 0xFFFF;
        vb[i] = rng() & 0xFFFF;
        vs[i] = rng() & 1;
    }
    auto out = rig.run(va, vb, vs);
    for (int i = 0; i < 100; ++i) CHECK(out[i] == (vs[i] ? va[i] : vb[i]));
}

TEST_CASE("constant rows survive every built microprogram") {
    std::mt19937_64 rng(5);
    for (ArithOp op : {ArithOp::Add, ArithOp::Mul, ArithOp::Div, ArithOp::Xor,
                       ArithOp::Bitcount, ArithOp::Max}) {
        bool unary = is_unary(op);
        Rig rig(8, 16, unary ? BbopKind::UnaryArith : BbopKind::BinaryArith, op);
        std::vector<uint64_t> va(16), vb(16);
        for (int i = 0; i < 16; ++i) {
            va[i] = rng() & 0xFF;
            vb[i] = rng() & 0xFF;
        }
        rig.run(va, unary ? std::vector<uint64_t>{} : vb);
        CHECK(rig.mod.constant_rows_intact(*rig.bbop.range));
    }
}

TEST_CASE("uprog stats equal command tallies") {
    Rig rig(16, 8, BbopKind::BinaryArith, ArithOp::Mul);
    MicroProgram p = build_uprog(rig.bbop, rig.ops);
    UprogStats expect;
    for (const auto& c : p.commands) {
        switch (c.kind) {
            case Command::Kind::Aap: ++expect.aap_count; break;
            case Command::Kind::Ap: ++expect.ap_count; break;
            case Command::Kind::GbMov: ++expect.gbmov_count; break;
            case Command::Kind::LcMov: ++expect.lcmov_count; break;
        }
    }
    CHECK(p.stats == expect);
}

TEST_CASE("trace text names rows and mats") {
    Command c = Command::aap(MatRange{3, 5}, 12, RowSet(9));
    CHECK(to_string(c) == "AAP r12 -> r9 @ mats[3..5]");
    Command m = Command::gb_mov(MoveCoord{0, 9, 4}, MoveCoord{1, 20, 4});
    CHECK(to_string(m) == "GB-MOV mat0:r9:c4 -> mat1:r20:c4");
}

}  // TEST_SUITE
