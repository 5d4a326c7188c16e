#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mimd/isa.hpp"

namespace mimd {

/// Kernel DSL, one vectorizable loop nest per `for`:
///
///   array A n=32 size=4000
///   array C n=32 size=4000
///   scalar s n=32
///   for i in 0..4000 {
///     t = A[i] * B[i]
///     C[i] = t + D[i]
///     s += A[i]
///     E[i] = P[i] ? A[i] : B[i]
///   }
///
/// Subscripts must be the loop index (unit stride); each array or temporary
/// is assigned at most once; `acc op= expr` is the only loop-carried form.

namespace ast {

enum class ExprKind { Ref, Const, Unary, Binary, Select };

struct Expr {
    ExprKind kind = ExprKind::Ref;
    std::string name;       // Ref: operand name
    uint64_t literal = 0;   // Const
    ArithOp op = ArithOp::Add;
    std::vector<std::unique_ptr<Expr>> args;
    int line = 0;
};

using ExprPtr = std::unique_ptr<Expr>;

struct Statement {
    bool is_reduction = false;
    std::string dst;        // array name, or scalar for reductions
    ArithOp reduce_op = ArithOp::RedSum;
    ExprPtr expr;
    int line = 0;
};

struct Loop {
    int64_t trip_count = 0;
    int64_t lanes_per_iter = 1;
    std::vector<Statement> statements;
    int line = 0;
};

}  // namespace ast

struct ArrayDecl {
    std::string name;
    int bitwidth = 32;
    int64_t elements = 0;
    bool is_scalar = false;
    int line = 0;
};

struct KernelIr {
    std::vector<ArrayDecl> arrays;
    std::vector<ast::Loop> loops;

    const ArrayDecl* find_array(const std::string& name) const;
};

KernelIr parse_kernel(const std::string& text);

/// Maximum vectorization factor of one loop: per-iteration lanes times the
/// trip count.
int64_t compute_max_vf(const ast::Loop& loop);

/// Data-dependency graph over candidate bbops. Nodes are the decomposed
/// single-op statements; edges follow def-use through arrays and
/// temporaries.
struct DdgNode {
    Bbop bbop;
    std::vector<int> inputs;   // producer node ids, operand order preserved
    std::vector<int> outputs;  // consumer node ids
    int label_id = -1;
    int64_t vf = 0;
};

struct Ddg {
    std::vector<DdgNode> nodes;
    bool has_edge(int from, int to) const;
};

Ddg build_ddg(const KernelIr& ir);

struct LabelingResult {
    Ddg ddg;                       // nodes carry label ids
    std::vector<Bbop> sequence;    // topological order with movs inserted
    int label_count = 0;
    int movs_inserted = 0;
};

/// DFS mat labeling: left paths share a label, right subtrees get fresh
/// ones, and every cross-label operand edge is mediated by exactly one
/// inserted bbop_mov.
LabelingResult assign_mat_labels(const Ddg& ddg);

struct EmitOptions {
    int columns_per_mat = 512;
    int capacity_mats = 128;  // strip-mining threshold: mats available
    int shards = 1;           // round-robin label groups across shards
};

struct EmitResult {
    BbopProgram program;
    int64_t vf = 0;
    int batches = 1;  // >1 when the kernel was strip-mined
};

/// Pass 3: allocation directives, trsp_init per operand, then the labeled
/// bbops. Kernels whose VF exceeds the module's lane capacity are
/// strip-mined into sequential batches.
EmitResult emit(const KernelIr& ir, const EmitOptions& opts);

/// Full pipeline.
EmitResult compile_kernel(const std::string& text, const EmitOptions& opts);

/// Reference scalar interpreter for end-to-end checks: evaluates the kernel
/// over named input arrays, returns named outputs (including reduction
/// scalars).
struct ScalarEnv {
    std::unordered_map<std::string, std::vector<uint64_t>> arrays;
};

ScalarEnv interpret_kernel(const KernelIr& ir, const ScalarEnv& inputs);

}  // namespace mimd
