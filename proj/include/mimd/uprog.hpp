#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mimd/dram.hpp"
#include "mimd/isa.hpp"

namespace mimd {

/// Destination of a row copy: one row, or a composite row-decoder address
/// that opens up to two compute rows at once (the second ACT of an AAP can
/// drive several designated rows from the latched buffer).
struct RowSet {
    std::array<int, 2> rows{-1, -1};
    int count = 0;

    RowSet() = default;
    RowSet(int r) : rows{r, -1}, count(1) {}
    RowSet(int r0, int r1) : rows{r0, r1}, count(2) {}

    bool operator==(const RowSet&) const = default;
};

struct MoveCoord {
    int mat = 0;
    int row = 0;
    int column = 0;  // first column of the HFF-wide window
    bool operator==(const MoveCoord&) const = default;
};

/// One DRAM command of a microprogram.
struct Command {
    enum class Kind { Aap, Ap, GbMov, LcMov };

    Kind kind = Kind::Aap;
    MatRange range{0, 0};

    // Aap
    int src_row = 0;
    RowSet dst_rows;

    // Ap
    std::array<int, 3> tra_rows{0, 0, 0};

    // GbMov / LcMov
    MoveCoord move_src;
    MoveCoord move_dst;

    static Command aap(const MatRange& r, int src, RowSet dst);
    static Command ap(const MatRange& r, int a, int b, int c);
    static Command gb_mov(MoveCoord src, MoveCoord dst);
    static Command lc_mov(MoveCoord src, MoveCoord dst);
};

std::string to_string(const Command& c);

struct UprogStats {
    uint64_t aap_count = 0;
    uint64_t ap_count = 0;
    uint64_t gbmov_count = 0;
    uint64_t lcmov_count = 0;

    uint64_t total() const { return aap_count + ap_count + gbmov_count + lcmov_count; }
    bool operator==(const UprogStats&) const = default;
};

/// Ordered command sequence realizing one bbop. Commands execute strictly
/// in order; stats always equal the command tallies.
struct MicroProgram {
    BbopKind bbop_kind = BbopKind::BinaryArith;
    ArithOp op = ArithOp::Add;
    int bitwidth = 0;
    std::vector<Command> commands;
    UprogStats stats;

    void push(const Command& c);
};

/// Majority of three bits; the primitive a triple-row activation computes
/// in every column.
inline bool tra_majority(bool a, bool b, bool c) {
    return (a && b) || (b && c) || (a && c);
}

/// Row-base view of the operands a microprogram manipulates. Scratch space
/// lives in a reserved arena at the top of every mat.
struct UprogOperands {
    int dst_base = 0;
    int src1_base = 0;
    int src2_base = 0;
    int sel_base = 0;      // if_else predicate row (single row)
    int scratch_base = 0;  // first row of the per-mat scratch arena
    int scratch_rows = 0;
};

inline constexpr int kScratchArenaRows = 256;

/// Builds the AAP/AP command list for an arithmetic or predication bbop.
/// Addition emits exactly 8n+2 commands: 2 carry-setup AAPs plus, per bit,
/// 5 AAPs and 3 APs.
MicroProgram build_uprog(const Bbop& b, const UprogOperands& ops);

/// Appends the row-wise command sequence for dst = op(a, b) over arbitrary
/// row bases (reduction rounds and other internal consumers).
void append_elementwise(MicroProgram& prog, const MatRange& range, ArithOp op,
                        int dst_base, int a_base, int b_base, int width);

/// Executes one command against the module. AAP/AP apply to every mat in
/// the command's range; moves apply to their explicit coordinates.
void execute_aap(const Command& cmd, DramModule& mats);
void execute_ap(const Command& cmd, DramModule& mats);
void execute_command(const Command& cmd, DramModule& mats);
void execute_uprog(const MicroProgram& p, DramModule& mats);

}  // namespace mimd
