#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "mimd/config.hpp"
#include "mimd/isa.hpp"

namespace mimd {

/// Designated compute rows occupy the top of every mat; data rows follow.
/// C0/C1 hold the all-0/all-1 constants, T0-T3 are scratch, DCC0/DCC1 are
/// the negation-capable rows.
struct RowGroups {
    static constexpr int kC0 = 0;
    static constexpr int kC1 = 1;
    static constexpr int kT0 = 2;
    static constexpr int kT1 = 3;
    static constexpr int kT2 = 4;
    static constexpr int kT3 = 5;
    static constexpr int kDcc0 = 6;
    static constexpr int kDcc1 = 7;
    static constexpr int kDataBase = 8;

    static bool is_compute_row(int row) { return row >= 0 && row < kDataBase; }
    static bool is_dcc_row(int row) { return row == kDcc0 || row == kDcc1; }
    static bool is_constant_row(int row) { return row == kC0 || row == kC1; }
    static std::string row_name(int row);
};

/// One row of one mat, bit-packed into 64-bit words (bit c of the row is
/// bit c%64 of word c/64).
class RowBits {
  public:
    RowBits() = default;
    explicit RowBits(int columns) : columns_(columns), words_((columns + 63) / 64, 0) {}

    int columns() const { return columns_; }
    bool get(int col) const { return (words_[col >> 6] >> (col & 63)) & 1; }
    void set(int col, bool v) {
        uint64_t mask = uint64_t{1} << (col & 63);
        if (v) words_[col >> 6] |= mask; else words_[col >> 6] &= ~mask;
    }
    void fill(bool v);

    const std::vector<uint64_t>& words() const { return words_; }
    std::vector<uint64_t>& words() { return words_; }

    bool operator==(const RowBits&) const = default;

  private:
    int columns_ = 0;
    std::vector<uint64_t> words_;
};

/// Columnwise majority of three rows.
RowBits majority3(const RowBits& a, const RowBits& b, const RowBits& c);
RowBits complement(const RowBits& a);

/// A single DRAM mat: a 2-D cell array with its local row buffer and the
/// open-row state machine. Activation latches data into the buffer; cell
/// restoration happens at precharge (write-back model). DCC rows couple to
/// the bitlines through an inverting contact: they sense and restore
/// complemented, so a value copied in always reads back inverted.
class MatArray {
  public:
    MatArray(int rows, int columns);

    int rows() const { return rows_; }
    int columns() const { return columns_; }

    bool has_open_row() const { return open_row_.has_value(); }
    std::optional<int> open_row() const { return open_row_; }
    const RowBits& row_buffer() const { return row_buffer_; }

    /// Plain single-row ACT. Errors if any row is already open.
    void activate(int row);
    /// Triple-row activation: the buffer senses the columnwise majority of
    /// the three rows' effective values and all three are coupled for
    /// restoration.
    void activate_triple(int r0, int r1, int r2);
    /// Second ACT of a row-copy: couples more rows to the already-latched
    /// buffer without re-sensing.
    void activate_additional(const std::vector<int>& rows);
    /// PRE: restores the buffer into every coupled row, then closes the mat.
    void precharge();

    /// Direct cell access (host-side paths: transposition, test setup).
    const RowBits& row(int r) const { return cells_[r]; }
    void write_row(int r, const RowBits& bits) { cells_[r] = bits; }
    bool get_bit(int row, int col) const { return cells_[row].get(col); }
    void set_bit(int row, int col, bool v) { cells_[row].set(col, v); }

    /// Value the row drives onto the bitlines (complemented for DCC rows).
    RowBits effective_row(int r) const;

    void init_compute_rows();

  private:
    void check_row(int r) const;

    int rows_;
    int columns_;
    std::vector<RowBits> cells_;
    std::optional<int> open_row_;
    RowBits row_buffer_;
    // Rows that restore from the buffer at precharge. A DCC row sensed as a
    // source couples through its inverting contact (restores complemented);
    // coupled as a copy destination it takes the buffer value directly.
    std::vector<std::pair<int, bool>> coupled_rows_;  // (row, inverted)
};

/// Placement of a vertically laid out operand: element j's bit k lives at
/// row base_row + k, column j mod columns, mat mat_span.begin + j / columns.
struct VerticalLayout {
    int base_row = RowGroups::kDataBase;
    int bitwidth = 32;
    int64_t elements = 0;
    MatRange mat_span{0, 0};

    int64_t capacity(int columns) const {
        return int64_t{columns} * mat_span.count();
    }
};

/// The simulated computation subarray: one MatArray per logical mat.
/// Commands address mats through logical mat ids; per-mat isolation means a
/// command over range R never touches state outside R.
class DramModule {
  public:
    explicit DramModule(const DramGeometry& geometry);

    const DramGeometry& geometry() const { return geometry_; }
    int mat_count() const { return static_cast<int>(mats_.size()); }
    MatArray& mat(int id) { return mats_.at(id); }
    const MatArray& mat(int id) const { return mats_.at(id); }

    /// Single-row ACT over a set of mats.
    void activate(const std::set<int>& mat_set, int row);
    void precharge(const std::set<int>& mat_set);

    /// Host-side transposition paths. Only the rows/columns named by the
    /// layout are touched; neighboring mats and rows keep their contents.
    void transpose_h2v(const std::vector<uint64_t>& values, const VerticalLayout& layout);
    std::vector<uint64_t> transpose_v2h(const VerticalLayout& layout) const;

    /// Hex text dump of mat contents for debugging (--dump-mats).
    void dump_mats(std::ostream& os, const MatRange& range) const;

    bool constant_rows_intact(const MatRange& range) const;

  private:
    DramGeometry geometry_;
    std::vector<MatArray> mats_;
};

}  // namespace mimd
