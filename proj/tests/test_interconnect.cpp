#include <doctest.h>

#include <numeric>
#include <random>

#include "mimd/dram.hpp"
#include "mimd/error.hpp"
#include "mimd/interconnect.hpp"

using namespace mimd;

namespace {

DramGeometry reduce_geometry(int mats) {
    DramGeometry g;
    g.chips = 1;
    g.mats_per_subarray_per_chip = mats;
    g.rows_per_mat = 1024;
    g.columns_per_mat = 512;
    return g;
}

uint64_t host_fold(ReduceOp op, const std::vector<uint64_t>& vals, int n) {
    uint64_t acc = reduce_identity(op, n);
    for (uint64_t v : vals) acc = reduce_apply(op, acc, v, n);
    return acc;
}

uint64_t finish(ReduceOp op, const ReductionPlan& plan, DramModule& mod, int n) {
    auto four = mod.transpose_v2h(plan.result);
    return host_fold(op, four, n);
}

}  // namespace

TEST_SUITE("interconnect") {

TEST_CASE("gb_mov copies four bits between mats at the formula latency") {
    DramModule mod(reduce_geometry(2));
    TimingParams t;
    t.t_ras = 32;
    t.t_reloc = 2;
    t.t_wr = 12;
    t.t_rp = 14;

    mod.mat(0).set_bit(9, 4, true);
    mod.mat(0).set_bit(9, 6, true);
    MoveDescriptor d{{0, 9, 4}, {1, 20, 4}, 4};
    double elapsed = gb_mov(d, mod, t);
    CHECK(elapsed == 60.0);
    CHECK(mod.mat(1).get_bit(20, 4));
    CHECK_FALSE(mod.mat(1).get_bit(20, 5));
    CHECK(mod.mat(1).get_bit(20, 6));
    CHECK(mod.mat(0).get_bit(9, 4));  // source intact

    CHECK_THROWS(gb_mov(MoveDescriptor{{0, 9, 4}, {0, 20, 4}, 4}, mod, t));
    CHECK_THROWS(gb_mov(MoveDescriptor{{0, 9, 3}, {1, 20, 4}, 4}, mod, t));
}

TEST_CASE("lc_mov copies within a mat at the formula latency") {
    DramModule mod(reduce_geometry(2));
    TimingParams t;
    t.t_ras = 32;
    t.t_rp = 14;
    t.t_reloc = 2;
    t.t_wr = 12;

    mod.mat(0).set_bit(9, 8, true);
    double elapsed = lc_mov(MoveDescriptor{{0, 9, 8}, {0, 40, 16}, 4}, mod, t);
    CHECK(elapsed == 2.0 * (32 + 14) + 2 + 12);
    CHECK(elapsed == 106.0);
    CHECK(mod.mat(0).get_bit(40, 16));

    // degenerate move: identical coordinates, still full latency
    CHECK(lc_mov(MoveDescriptor{{0, 9, 8}, {0, 9, 8}, 4}, mod, t) == 106.0);
    CHECK(mod.mat(0).get_bit(9, 8));

    CHECK_THROWS(lc_mov(MoveDescriptor{{0, 9, 8}, {1, 9, 8}, 4}, mod, t));
}

TEST_CASE("moving a full row mat to mat takes columns/hff moves") {
    std::vector<Command> cmds;
    plan_block_move(cmds, 0, 9, 1, 9, 1, 0, 512, 4);
    CHECK(cmds.size() == 128);
    for (const auto& c : cmds) CHECK(c.kind == Command::Kind::GbMov);
}

TEST_CASE("moves leave bits outside the destination window untouched") {
    DramModule mod(reduce_geometry(2));
    TimingParams t;
    std::mt19937_64 rng(8);
    for (int r = 8; r < 64; ++r)
        for (int c = 0; c < 512; ++c) mod.mat(1).set_bit(r, c, rng() & 1);

    std::vector<std::vector<bool>> before(64, std::vector<bool>(512));
    for (int r = 8; r < 64; ++r)
        for (int c = 0; c < 512; ++c) before[r][c] = mod.mat(1).get_bit(r, c);

    gb_mov(MoveDescriptor{{0, 9, 4}, {1, 20, 8}, 4}, mod, t);
    for (int r = 8; r < 64; ++r)
        for (int c = 0; c < 512; ++c) {
            if (r == 20 && c >= 8 && c < 12) continue;
            CHECK(before[r][c] == mod.mat(1).get_bit(r, c));
        }
}

TEST_CASE("two-mat all-ones sum uses one cross-mat round of 4096 moves") {
    DramModule mod(reduce_geometry(2));
    const int n = 32;
    VerticalLayout src{8, n, 1024, MatRange{0, 1}};
    std::vector<uint64_t> ones(1024, 1);
    mod.transpose_h2v(ones, src);

    ReductionPlan plan = vector_reduce(src, 1024, ReduceOp::Sum, 768, mod);
    CHECK(plan.inter_mat_rounds == 1);
    CHECK(plan.gbmov_count == 512 * (32 / 4));
    CHECK(finish(ReduceOp::Sum, plan, mod, n) == 1024);
}

TEST_CASE("single-mat reduction skips the inter-mat phase") {
    DramModule mod(reduce_geometry(1));
    VerticalLayout src{8, 16, 512, MatRange{0, 0}};
    std::vector<uint64_t> vals(512, 3);
    mod.transpose_h2v(vals, src);
    ReductionPlan plan = vector_reduce(src, 512, ReduceOp::Sum, 768, mod);
    CHECK(plan.inter_mat_rounds == 0);
    CHECK(plan.gbmov_count == 0);
    CHECK(finish(ReduceOp::Sum, plan, mod, 16) == 512 * 3);
}

TEST_CASE("sum of 1..4096 across 8 mats") {
    DramModule mod(reduce_geometry(8));
    const int n = 32;
    VerticalLayout src{8, n, 4096, MatRange{0, 7}};
    std::vector<uint64_t> vals(4096);
    std::iota(vals.begin(), vals.end(), 1);
    mod.transpose_h2v(vals, src);
    ReductionPlan plan = vector_reduce(src, 4096, ReduceOp::Sum, 768, mod);
    CHECK(plan.inter_mat_rounds == 3);
    CHECK(finish(ReduceOp::Sum, plan, mod, n) == 8390656);
}

TEST_CASE("reductions match the host fold for every op and odd shapes") {
    std::mt19937_64 rng(123);
    for (int mats : {1, 2, 3, 5, 8}) {
        for (ReduceOp op : {ReduceOp::Sum, ReduceOp::And, ReduceOp::Or, ReduceOp::Xor}) {
            DramModule mod(reduce_geometry(mats));
            const int n = 16;
            // a non-full final span exercises identity padding
            int64_t live = int64_t{mats} * 512 - (mats > 1 ? 137 : 0);
            VerticalLayout src{8, n, live, MatRange{0, mats - 1}};
            std::vector<uint64_t> vals(live);
            for (auto& v : vals) v = rng() & 0xFFFF;
            mod.transpose_h2v(vals, src);
            ReductionPlan plan = vector_reduce(src, live, op, 768, mod);
            int expected_rounds = 0;
            while ((1 << expected_rounds) < mats) ++expected_rounds;
            CHECK(plan.inter_mat_rounds == expected_rounds);
            CHECK(finish(op, plan, mod, n) == host_fold(op, vals, n));
        }
    }
}

TEST_CASE("fold move counts follow the closed form") {
    for (int mats : {2, 4, 8}) {
        for (int n : {8, 16, 32}) {
            DramGeometry g = reduce_geometry(mats);
            VerticalLayout src{8, n, int64_t{mats} * 512, MatRange{0, mats - 1}};
            ReductionPlan plan =
                plan_vector_reduce(src, src.elements, ReduceOp::Sum, 768, g);
            // every fold moves one mat's 512 elements at ceil(n/4) each
            uint64_t expect_gb = uint64_t(mats - 1) * 512 * ((n + 3) / 4);
            CHECK(plan.gbmov_count == expect_gb);
            // intra-mat rounds halve the live window down to 4 elements
            uint64_t expect_lc = 0;
            for (int w = 512; w > 4; w /= 2) expect_lc += uint64_t(w / 2) * ((n + 3) / 4);
            CHECK(plan.lcmov_count == expect_lc);
        }
    }
}

}  // TEST_SUITE
