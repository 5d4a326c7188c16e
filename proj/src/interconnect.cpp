#include "mimd/interconnect.hpp"

#include "mimd/error.hpp"

namespace mimd {

namespace {

void check_move(const MoveDescriptor& d, const DramModule& mats) {
    const auto& g = mats.geometry();
    if (d.width != g.hffs_per_mat)
        throw Error("move width must equal hffs_per_mat");
    if (d.src.column % d.width != 0 || d.dst.column % d.width != 0)
        throw Error("move columns must be aligned to the HFF width");
    if (d.src.column + d.width > g.columns_per_mat || d.dst.column + d.width > g.columns_per_mat)
        throw Error("move column window out of range");
    if (d.src.row < 0 || d.src.row >= g.rows_per_mat || d.dst.row < 0 ||
        d.dst.row >= g.rows_per_mat)
        throw Error("move row out of range");
}

}  // namespace

double gb_mov(const MoveDescriptor& d, DramModule& mats, const TimingParams& t) {
    if (d.src.mat == d.dst.mat)
        throw Error("gb_mov: source and destination mats are the same (use lc_mov)");
    check_move(d, mats);
    execute_command(Command::gb_mov(d.src, d.dst), mats);
    return t.gb_mov_latency();
}

double lc_mov(const MoveDescriptor& d, DramModule& mats, const TimingParams& t) {
    if (d.src.mat != d.dst.mat)
        throw Error("lc_mov: source and destination are in different mats (use gb_mov)");
    check_move(d, mats);
    execute_command(Command::lc_mov(d.src, d.dst), mats);
    return t.lc_mov_latency();
}

void plan_block_move(std::vector<Command>& out, int src_mat, int src_base_row,
                     int dst_mat, int dst_base_row, int rows, int first_column,
                     int columns, int hff_width) {
    for (int r = 0; r < rows; ++r) {
        for (int c = first_column; c < first_column + columns; c += hff_width) {
            MoveCoord s{src_mat, src_base_row + r, c};
            MoveCoord d{dst_mat, dst_base_row + r, c};
            out.push_back(src_mat == dst_mat ? Command::lc_mov(s, d)
                                             : Command::gb_mov(s, d));
        }
    }
}

ReduceOp reduce_op_of(ArithOp op) {
    switch (op) {
        case ArithOp::RedSum: return ReduceOp::Sum;
        case ArithOp::RedAnd: return ReduceOp::And;
        case ArithOp::RedOr: return ReduceOp::Or;
        case ArithOp::RedXor: return ReduceOp::Xor;
        default: throw Error("not a reduction op");
    }
}

uint64_t reduce_identity(ReduceOp op, int bitwidth) {
    uint64_t mask = bitwidth == 64 ? ~uint64_t{0} : (uint64_t{1} << bitwidth) - 1;
    return op == ReduceOp::And ? mask : 0;
}

uint64_t reduce_apply(ReduceOp op, uint64_t a, uint64_t b, int bitwidth) {
    uint64_t mask = bitwidth == 64 ? ~uint64_t{0} : (uint64_t{1} << bitwidth) - 1;
    switch (op) {
        case ReduceOp::Sum: return (a + b) & mask;
        case ReduceOp::And: return a & b & mask;
        case ReduceOp::Or: return (a | b) & mask;
        case ReduceOp::Xor: return (a ^ b) & mask;
    }
    return 0;
}

namespace {

ArithOp elementwise_of(ReduceOp op) {
    switch (op) {
        case ReduceOp::Sum: return ArithOp::Add;
        case ReduceOp::And: return ArithOp::And;
        case ReduceOp::Or: return ArithOp::Or;
        case ReduceOp::Xor: return ArithOp::Xor;
    }
    return ArithOp::Add;
}

}  // namespace

ReductionPlan plan_vector_reduce(const VerticalLayout& src, int64_t live_elements,
                                 ReduceOp op, int scratch_base,
                                 const DramGeometry& geometry) {
    if (live_elements < 1) throw Error("vector_reduce: empty input");
    if (live_elements > src.capacity(geometry.columns_per_mat))
        throw Error("vector_reduce: live elements exceed layout capacity");

    const int n = src.bitwidth;
    const int cols = geometry.columns_per_mat;
    const int hff = geometry.hffs_per_mat;
    const int mat_count = src.mat_span.count();
    // Moves batch whole HFF windows, so row counts round up to the window
    // width; this keeps the cost at exactly ceil(n/4) moves per element.
    const int move_rows = ((n + hff - 1) / hff) * hff;
    const int acc = scratch_base;
    const int tmp = scratch_base + 64;

    MicroProgram prog;
    ReductionPlan plan;

    // Working copy of the operand: the fold runs in the scratch arena and
    // leaves the source rows intact.
    for (int i = 0; i < n; ++i)
        prog.push(Command::aap(src.mat_span, src.base_row + i, RowSet(acc + i)));

    // Cross-mat tree fold toward the top mat of the span.
    int rounds = 0;
    while ((1 << rounds) < mat_count) ++rounds;
    for (int r = 1; r <= rounds; ++r) {
        const int stride = 1 << r;
        const int half = stride / 2;
        for (int dst_mat = src.mat_span.end; dst_mat >= src.mat_span.begin;
             dst_mat -= stride) {
            const int src_mat = dst_mat - half;
            if (src_mat < src.mat_span.begin) continue;
            std::vector<Command> moves;
            plan_block_move(moves, src_mat, acc, dst_mat, tmp, move_rows, 0, cols, hff);
            for (const auto& c : moves) prog.push(c);
            append_elementwise(prog, MatRange{dst_mat, dst_mat}, elementwise_of(op),
                               acc, acc, tmp, n);
        }
    }
    plan.inter_mat_rounds = rounds;

    // Intra-mat tree fold in the final mat, down to one HFF window of
    // elements.
    const int final_mat = src.mat_span.end;
    for (int width = cols; width > hff; width /= 2) {
        const int half = width / 2;
        std::vector<Command> moves;
        plan_block_move(moves, final_mat, acc, final_mat, tmp, move_rows, half, half, hff);
        // Shift the upper half down to column 0 of the staging rows.
        for (auto& c : moves) c.move_dst.column -= half;
        for (const auto& c : moves) prog.push(c);
        append_elementwise(prog, MatRange{final_mat, final_mat}, elementwise_of(op),
                           acc, acc, tmp, n);
    }

    plan.commands = std::move(prog.commands);
    plan.gbmov_count = prog.stats.gbmov_count;
    plan.lcmov_count = prog.stats.lcmov_count;
    plan.result = VerticalLayout{acc, n, hff, MatRange{final_mat, final_mat}};
    return plan;
}

ReductionPlan vector_reduce(const VerticalLayout& src, int64_t live_elements,
                            ReduceOp op, int scratch_base, DramModule& mats) {
    // Ghost lanes beyond the live element count must hold the fold identity
    // before the tree runs; the staging path writes it in at element
    // granularity, the way operands are transposed in.
    const int64_t capacity = src.capacity(mats.geometry().columns_per_mat);
    if (live_elements < capacity) {
        const uint64_t ident = reduce_identity(op, src.bitwidth);
        const int cols = mats.geometry().columns_per_mat;
        for (int64_t j = live_elements; j < capacity; ++j) {
            int mat = src.mat_span.begin + static_cast<int>(j / cols);
            int col = static_cast<int>(j % cols);
            for (int k = 0; k < src.bitwidth; ++k)
                mats.mat(mat).set_bit(src.base_row + k, col, (ident >> k) & 1);
        }
    }
    ReductionPlan plan = plan_vector_reduce(src, live_elements, op, scratch_base,
                                            mats.geometry());
    for (const Command& c : plan.commands) execute_command(c, mats);
    return plan;
}

}  // namespace mimd
