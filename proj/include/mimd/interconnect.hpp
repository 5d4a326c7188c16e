#pragma once

#include <cstdint>
#include <vector>

#include "mimd/config.hpp"
#include "mimd/dram.hpp"
#include "mimd/isa.hpp"
#include "mimd/uprog.hpp"

namespace mimd {

/// One 4-bit data move between two (mat, row, column) coordinates. Width is
/// fixed by the helper flip-flops; columns must be aligned to it.
struct MoveDescriptor {
    MoveCoord src;
    MoveCoord dst;
    int width = 4;
};

/// Copies width bits through the global row buffer (source and destination
/// in different mats) and returns the elapsed time. The source row keeps
/// its contents.
double gb_mov(const MoveDescriptor& d, DramModule& mats, const TimingParams& t);

/// Same-mat copy through the helper flip-flops.
double lc_mov(const MoveDescriptor& d, DramModule& mats, const TimingParams& t);

/// Emits the GB-MOVs that copy a whole row segment (n rows x `columns`
/// columns, starting at column 0) from one mat to another: one command per
/// hff-wide window per row.
void plan_block_move(std::vector<Command>& out, int src_mat, int src_base_row,
                     int dst_mat, int dst_base_row, int rows, int first_column,
                     int columns, int hff_width);

enum class ReduceOp { Sum, And, Or, Xor };

ReduceOp reduce_op_of(ArithOp op);
uint64_t reduce_identity(ReduceOp op, int bitwidth);
uint64_t reduce_apply(ReduceOp op, uint64_t a, uint64_t b, int bitwidth);

struct ReductionPlan {
    std::vector<Command> commands;
    VerticalLayout result;     // 4 elements in the final mat
    int inter_mat_rounds = 0;
    uint64_t gbmov_count = 0;
    uint64_t lcmov_count = 0;
};

/// Vector reduction over a vertically laid out operand:
///   1. cross-mat tree fold (GB-MOV + per-mat op), halving the live mats
///      each round until one mat remains;
///   2. intra-mat tree fold (LC-MOV + op) down to 4 elements;
///   3. the final 4-to-1 fold is left to the host after readback.
/// Non-power-of-two spans and partial mats are padded with the identity
/// element before folding. `scratch_base` names the per-mat scratch arena.
ReductionPlan plan_vector_reduce(const VerticalLayout& src, int64_t live_elements,
                                 ReduceOp op, int scratch_base,
                                 const DramGeometry& geometry);

/// Plans, executes, and returns the resulting command log in one step
/// (test/host convenience; the control unit normally paces the commands).
ReductionPlan vector_reduce(const VerticalLayout& src, int64_t live_elements,
                            ReduceOp op, int scratch_base, DramModule& mats);

}  // namespace mimd
