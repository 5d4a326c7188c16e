#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mimd {

/// Contiguous span of logical mats, inclusive on both ends. Logical mat id
/// m maps to chip m / mats_per_chip, in-chip mat m % mats_per_chip.
struct MatRange {
    int begin = 0;
    int end = 0;

    int count() const { return end - begin + 1; }
    bool contains(int mat) const { return mat >= begin && mat <= end; }
    bool overlaps(const MatRange& o) const { return begin <= o.end && o.begin <= end; }

    bool operator==(const MatRange&) const = default;
};

std::string to_string(const MatRange& r);

/// 14-bit wire encoding: 7 bits of mat begin, 7 bits of mat end.
struct EncodedMatRange {
    uint16_t bits = 0;
    bool operator==(const EncodedMatRange&) const = default;
};

inline constexpr int kMatIdBits = 7;
inline constexpr int kMaxLogicalMats = 1 << kMatIdBits;  // 128

EncodedMatRange encode_mat_range(const MatRange& r);
MatRange decode_mat_range(const EncodedMatRange& e);

/// Physical span inside one chip (in-chip mat indices).
struct ChipSpan {
    int begin = 0;
    int end = 0;
    int count() const { return end - begin + 1; }
    bool operator==(const ChipSpan&) const = default;
};

/// Intersection of a logical range with one chip's mat window, or nullopt
/// when the chip holds none of the range.
std::optional<ChipSpan> chip_select(const MatRange& r, int chip_id, int mats_per_chip);

enum class ArithOp {
    Add, Sub, Mul, Div,
    And, Or, Xor, Not,
    Abs, Relu, Bitcount,
    Max, Min, Eq, Gt, Ge,
    RedSum, RedAnd, RedOr, RedXor,
};

bool is_unary(ArithOp op);
bool is_reduction(ArithOp op);
const char* to_string(ArithOp op);
std::optional<ArithOp> arith_op_from_string(const std::string& s);

enum class BbopKind { TrspInit, UnaryArith, BinaryArith, IfElse, Mov };

/// One ISA-level instruction. Operands are opaque handles (names bound to
/// allocator regions); `ml` is the symbolic mat label until the translation
/// table resolves it into `range`.
struct Bbop {
    BbopKind kind = BbopKind::BinaryArith;
    ArithOp op = ArithOp::Add;

    std::string dst;
    std::string src1;
    std::string src2;
    std::string sel;

    int64_t size = 0;   // element count
    int bitwidth = 32;  // n
    std::string ml;     // symbolic mat label (empty for mov)
    int64_t vf = 0;     // vectorization factor

    int64_t dst_idx = 0;  // mov only
    int64_t src_idx = 0;  // mov only

    std::optional<MatRange> range;  // set once the label is resolved

    int source_line = 0;
};

/// Textual bbop assembly. One instruction per line:
///   bbop_add dst, a, b, size=4000, n=32, ml=L0, vf=4000
///   bbop_if_else dst, a, b, sel, size=..., n=..., ml=..., vf=...
///   bbop_mov dst, dst_idx, src, src_idx, size=..., n=...
///   bbop_trsp_init a, size=..., n=..., ml=...
/// `# alloc name size label` directives drive the allocator; other `#`
/// lines are comments.
struct AllocDirective {
    std::string name;
    int64_t size = 0;
    std::string label;
    int source_line = 0;
};

struct BbopProgram {
    std::vector<AllocDirective> allocs;
    std::vector<Bbop> bbops;
};

BbopProgram parse_bbop_assembly(const std::string& text);
std::string format_bbop(const Bbop& b);
std::string format_program(const BbopProgram& p);

enum class MovRoute { IntraMat, InterMat };

/// Per-mat-pair slice of a bbop_mov, produced by routing the element range
/// against operand placement.
struct MovSegment {
    int src_mat = 0;
    int dst_mat = 0;
    int64_t first_element = 0;  // offset within the move, not the array
    int64_t count = 0;
    MovRoute route = MovRoute::IntraMat;
};

/// Minimal placement view the router needs: where element i of an operand
/// lives.
struct OperandPlacement {
    MatRange span{0, 0};
    int64_t first_index = 0;  // array index mapped to span.begin, column 0
    int columns = 512;

    int mat_of(int64_t element_index) const {
        return span.begin + static_cast<int>((element_index - first_index) / columns);
    }
};

/// Splits a mov into per-(src mat, dst mat) segments and classifies each as
/// LC-MOV (same mat) or GB-MOV (different mats).
std::vector<MovSegment> mov_route(const Bbop& mov, const OperandPlacement& src,
                                  const OperandPlacement& dst);

}  // namespace mimd
