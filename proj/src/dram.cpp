#include "mimd/dram.hpp"

#include <algorithm>
#include <iomanip>

#include "mimd/error.hpp"

namespace mimd {

std::string RowGroups::row_name(int row) {
    switch (row) {
        case kC0: return "C0";
        case kC1: return "C1";
        case kT0: return "T0";
        case kT1: return "T1";
        case kT2: return "T2";
        case kT3: return "T3";
        case kDcc0: return "DCC0";
        case kDcc1: return "DCC1";
        default: return "r" + std::to_string(row);
    }
}

void RowBits::fill(bool v) {
    uint64_t word = v ? ~uint64_t{0} : 0;
    for (auto& w : words_) w = word;
    if (v && columns_ % 64 != 0)
        words_.back() &= (uint64_t{1} << (columns_ % 64)) - 1;
}

RowBits majority3(const RowBits& a, const RowBits& b, const RowBits& c) {
    RowBits out(a.columns());
    for (size_t i = 0; i < out.words().size(); ++i) {
        uint64_t x = a.words()[i], y = b.words()[i], z = c.words()[i];
        out.words()[i] = (x & y) | (y & z) | (x & z);
    }
    return out;
}

RowBits complement(const RowBits& a) {
    RowBits out(a.columns());
    for (size_t i = 0; i < out.words().size(); ++i) out.words()[i] = ~a.words()[i];
    if (a.columns() % 64 != 0)
        out.words().back() &= (uint64_t{1} << (a.columns() % 64)) - 1;
    return out;
}

MatArray::MatArray(int rows, int columns)
    : rows_(rows), columns_(columns), cells_(rows, RowBits(columns)), row_buffer_(columns) {
    init_compute_rows();
}

void MatArray::init_compute_rows() {
    cells_[RowGroups::kC0].fill(false);
    cells_[RowGroups::kC1].fill(true);
}

void MatArray::check_row(int r) const {
    if (r < 0 || r >= rows_)
        throw ProtocolError("row " + std::to_string(r) + " out of range");
}

RowBits MatArray::effective_row(int r) const {
    check_row(r);
    return RowGroups::is_dcc_row(r) ? complement(cells_[r]) : cells_[r];
}

void MatArray::activate(int row) {
    check_row(row);
    if (open_row_.has_value())
        throw ProtocolError("activate on mat with open row " + std::to_string(*open_row_));
    row_buffer_ = effective_row(row);
    open_row_ = row;
    coupled_rows_ = {{row, RowGroups::is_dcc_row(row)}};
}

void MatArray::activate_triple(int r0, int r1, int r2) {
    check_row(r0);
    check_row(r1);
    check_row(r2);
    if (open_row_.has_value())
        throw ProtocolError("triple activation on mat with open row");
    if (r0 == r1 || r1 == r2 || r0 == r2)
        throw ProtocolError("triple activation rows must be distinct");
    row_buffer_ = majority3(effective_row(r0), effective_row(r1), effective_row(r2));
    open_row_ = r0;
    coupled_rows_ = {{r0, RowGroups::is_dcc_row(r0)},
                     {r1, RowGroups::is_dcc_row(r1)},
                     {r2, RowGroups::is_dcc_row(r2)}};
}

void MatArray::activate_additional(const std::vector<int>& rows) {
    if (!open_row_.has_value())
        throw ProtocolError("second activation without an open row");
    for (int r : rows) {
        check_row(r);
        // Copy destinations take the buffer through the direct contact.
        coupled_rows_.push_back({r, false});
    }
}

void MatArray::precharge() {
    if (!open_row_.has_value()) return;  // no-op on a closed mat
    for (auto [r, inverted] : coupled_rows_) {
        cells_[r] = inverted ? complement(row_buffer_) : row_buffer_;
    }
    coupled_rows_.clear();
    open_row_.reset();
}

DramModule::DramModule(const DramGeometry& geometry) : geometry_(geometry) {
    geometry_.validate();
    mats_.reserve(geometry_.mats_total());
    for (int i = 0; i < geometry_.mats_total(); ++i)
        mats_.emplace_back(geometry_.rows_per_mat, geometry_.columns_per_mat);
}

void DramModule::activate(const std::set<int>& mat_set, int row) {
    for (int m : mat_set) {
        if (m < 0 || m >= mat_count())
            throw ProtocolError("mat id " + std::to_string(m) + " out of range");
        if (mats_[m].has_open_row())
            throw ProtocolError("mat " + std::to_string(m) + " already has an open row");
    }
    for (int m : mat_set) mats_[m].activate(row);
}

void DramModule::precharge(const std::set<int>& mat_set) {
    for (int m : mat_set) mats_.at(m).precharge();
}

void DramModule::transpose_h2v(const std::vector<uint64_t>& values,
                               const VerticalLayout& layout) {
    const int cols = geometry_.columns_per_mat;
    if (static_cast<int64_t>(values.size()) > layout.capacity(cols))
        throw Error("transpose_h2v: values exceed layout capacity");
    if (layout.base_row + layout.bitwidth > geometry_.rows_per_mat)
        throw Error("transpose_h2v: layout rows out of range");
    for (int64_t j = 0; j < static_cast<int64_t>(values.size()); ++j) {
        int mat = layout.mat_span.begin + static_cast<int>(j / cols);
        int col = static_cast<int>(j % cols);
        MatArray& m = mats_.at(mat);
        for (int k = 0; k < layout.bitwidth; ++k)
            m.set_bit(layout.base_row + k, col, (values[j] >> k) & 1);
    }
}

std::vector<uint64_t> DramModule::transpose_v2h(const VerticalLayout& layout) const {
    const int cols = geometry_.columns_per_mat;
    std::vector<uint64_t> out(layout.elements, 0);
    for (int64_t j = 0; j < layout.elements; ++j) {
        int mat = layout.mat_span.begin + static_cast<int>(j / cols);
        int col = static_cast<int>(j % cols);
        const MatArray& m = mats_.at(mat);
        uint64_t v = 0;
        for (int k = 0; k < layout.bitwidth; ++k)
            if (m.get_bit(layout.base_row + k, col)) v |= uint64_t{1} << k;
        out[j] = v;
    }
    return out;
}

void DramModule::dump_mats(std::ostream& os, const MatRange& range) const {
    os << std::hex;
    for (int m = range.begin; m <= range.end; ++m) {
        os << "mat " << std::dec << m << std::hex << "\n";
        const MatArray& mat = mats_.at(m);
        for (int r = 0; r < mat.rows(); ++r) {
            const auto& words = mat.row(r).words();
            bool all_zero = std::all_of(words.begin(), words.end(),
                                        [](uint64_t w) { return w == 0; });
            if (all_zero) continue;
            os << "  r" << std::dec << r << std::hex << ":";
            for (auto it = words.rbegin(); it != words.rend(); ++it)
                os << " " << std::setw(16) << std::setfill('0') << *it;
            os << "\n";
        }
    }
    os << std::dec;
}

bool DramModule::constant_rows_intact(const MatRange& range) const {
    RowBits zeros(geometry_.columns_per_mat);
    RowBits ones(geometry_.columns_per_mat);
    ones.fill(true);
    for (int m = range.begin; m <= range.end; ++m) {
        if (!(mats_.at(m).row(RowGroups::kC0) == zeros)) return false;
        if (!(mats_.at(m).row(RowGroups::kC1) == ones)) return false;
    }
    return true;
}

}  // namespace mimd
