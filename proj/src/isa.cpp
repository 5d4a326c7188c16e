#include "mimd/isa.hpp"

#include <algorithm>
#include <sstream>

#include "mimd/error.hpp"

namespace mimd {

std::string to_string(const MatRange& r) {
    return "[" + std::to_string(r.begin) + "," + std::to_string(r.end) + "]";
}

EncodedMatRange encode_mat_range(const MatRange& r) {
    if (r.begin < 0 || r.end >= kMaxLogicalMats || r.begin > r.end)
        throw Error("invalid mat range " + to_string(r));
    return EncodedMatRange{static_cast<uint16_t>((r.begin << kMatIdBits) | r.end)};
}

MatRange decode_mat_range(const EncodedMatRange& e) {
    MatRange r{(e.bits >> kMatIdBits) & (kMaxLogicalMats - 1), e.bits & (kMaxLogicalMats - 1)};
    if (r.begin > r.end) throw Error("invalid encoded mat range");
    return r;
}

std::optional<ChipSpan> chip_select(const MatRange& r, int chip_id, int mats_per_chip) {
    int window_begin = chip_id * mats_per_chip;
    int window_end = window_begin + mats_per_chip - 1;
    int lo = std::max(r.begin, window_begin);
    int hi = std::min(r.end, window_end);
    if (lo > hi) return std::nullopt;
    return ChipSpan{lo - window_begin, hi - window_begin};
}

bool is_unary(ArithOp op) {
    switch (op) {
        case ArithOp::Not:
        case ArithOp::Abs:
        case ArithOp::Relu:
        case ArithOp::Bitcount:
            return true;
        default:
            return is_reduction(op);
    }
}

bool is_reduction(ArithOp op) {
    switch (op) {
        case ArithOp::RedSum:
        case ArithOp::RedAnd:
        case ArithOp::RedOr:
        case ArithOp::RedXor:
            return true;
        default:
            return false;
    }
}

const char* to_string(ArithOp op) {
    switch (op) {
        case ArithOp::Add: return "add";
        case ArithOp::Sub: return "sub";
        case ArithOp::Mul: return "mul";
        case ArithOp::Div: return "div";
        case ArithOp::And: return "and";
        case ArithOp::Or: return "or";
        case ArithOp::Xor: return "xor";
        case ArithOp::Not: return "not";
        case ArithOp::Abs: return "abs";
        case ArithOp::Relu: return "relu";
        case ArithOp::Bitcount: return "bitcount";
        case ArithOp::Max: return "max";
        case ArithOp::Min: return "min";
        case ArithOp::Eq: return "eq";
        case ArithOp::Gt: return "gt";
        case ArithOp::Ge: return "ge";
        case ArithOp::RedSum: return "red_sum";
        case ArithOp::RedAnd: return "red_and";
        case ArithOp::RedOr: return "red_or";
        case ArithOp::RedXor: return "red_xor";
    }
    return "?";
}

std::optional<ArithOp> arith_op_from_string(const std::string& s) {
    static const std::pair<const char*, ArithOp> table[] = {
        {"add", ArithOp::Add},       {"sub", ArithOp::Sub},
        {"mul", ArithOp::Mul},       {"div", ArithOp::Div},
        {"and", ArithOp::And},       {"or", ArithOp::Or},
        {"xor", ArithOp::Xor},       {"not", ArithOp::Not},
        {"abs", ArithOp::Abs},       {"relu", ArithOp::Relu},
        {"bitcount", ArithOp::Bitcount}, {"max", ArithOp::Max},
        {"min", ArithOp::Min},       {"eq", ArithOp::Eq},
        {"gt", ArithOp::Gt},         {"ge", ArithOp::Ge},
        {"red_sum", ArithOp::RedSum}, {"red_and", ArithOp::RedAnd},
        {"red_or", ArithOp::RedOr},  {"red_xor", ArithOp::RedXor},
    };
    for (const auto& [name, op] : table)
        if (s == name) return op;
    return std::nullopt;
}

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
}

int64_t parse_int_field(const std::string& tok, const std::string& key, int line) {
    auto eq = tok.find('=');
    if (eq == std::string::npos || trim(tok.substr(0, eq)) != key)
        throw ParseError(line, "expected " + key + "=<int>, got '" + tok + "'");
    try {
        return std::stoll(trim(tok.substr(eq + 1)));
    } catch (const std::exception&) {
        throw ParseError(line, "bad integer in '" + tok + "'");
    }
}

std::string parse_str_field(const std::string& tok, const std::string& key, int line) {
    auto eq = tok.find('=');
    if (eq == std::string::npos || trim(tok.substr(0, eq)) != key)
        throw ParseError(line, "expected " + key + "=<value>, got '" + tok + "'");
    return trim(tok.substr(eq + 1));
}

}  // namespace

BbopProgram parse_bbop_assembly(const std::string& text) {
    BbopProgram prog;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty()) continue;
        if (t[0] == '#') {
            std::istringstream ls(t.substr(1));
            std::string word;
            ls >> word;
            if (word != "alloc") continue;  // plain comment
            AllocDirective d;
            d.source_line = lineno;
            if (!(ls >> d.name >> d.size >> d.label))
                throw ParseError(lineno, "alloc directive needs: name size label");
            prog.allocs.push_back(d);
            continue;
        }

        auto space = t.find_first_of(" \t");
        std::string mnemonic = space == std::string::npos ? t : t.substr(0, space);
        std::string rest = space == std::string::npos ? "" : trim(t.substr(space));
        if (mnemonic.rfind("bbop_", 0) != 0)
            throw ParseError(lineno, "unknown mnemonic '" + mnemonic + "'");
        std::string opname = mnemonic.substr(5);
        auto fields = split_commas(rest);

        Bbop b;
        b.source_line = lineno;
        if (opname == "trsp_init") {
            if (fields.size() != 4)
                throw ParseError(lineno, "bbop_trsp_init needs: addr, size=, n=, ml=");
            b.kind = BbopKind::TrspInit;
            b.dst = fields[0];
            b.size = parse_int_field(fields[1], "size", lineno);
            b.bitwidth = static_cast<int>(parse_int_field(fields[2], "n", lineno));
            b.ml = parse_str_field(fields[3], "ml", lineno);
        } else if (opname == "mov") {
            if (fields.size() != 6)
                throw ParseError(lineno,
                                 "bbop_mov needs: dst, dst_idx, src, src_idx, size=, n=");
            b.kind = BbopKind::Mov;
            b.dst = fields[0];
            b.dst_idx = std::stoll(fields[1]);
            b.src1 = fields[2];
            b.src_idx = std::stoll(fields[3]);
            b.size = parse_int_field(fields[4], "size", lineno);
            b.bitwidth = static_cast<int>(parse_int_field(fields[5], "n", lineno));
        } else if (opname == "if_else") {
            if (fields.size() != 8)
                throw ParseError(lineno,
                                 "bbop_if_else needs: dst, src1, src2, sel, size=, n=, ml=, vf=");
            b.kind = BbopKind::IfElse;
            b.dst = fields[0];
            b.src1 = fields[1];
            b.src2 = fields[2];
            b.sel = fields[3];
            b.size = parse_int_field(fields[4], "size", lineno);
            b.bitwidth = static_cast<int>(parse_int_field(fields[5], "n", lineno));
            b.ml = parse_str_field(fields[6], "ml", lineno);
            b.vf = parse_int_field(fields[7], "vf", lineno);
        } else {
            auto op = arith_op_from_string(opname);
            if (!op) throw ParseError(lineno, "unknown bbop op '" + opname + "'");
            b.op = *op;
            if (is_unary(*op)) {
                if (fields.size() != 6)
                    throw ParseError(lineno, "unary bbop needs: dst, src, size=, n=, ml=, vf=");
                b.kind = BbopKind::UnaryArith;
                b.dst = fields[0];
                b.src1 = fields[1];
                b.size = parse_int_field(fields[2], "size", lineno);
                b.bitwidth = static_cast<int>(parse_int_field(fields[3], "n", lineno));
                b.ml = parse_str_field(fields[4], "ml", lineno);
                b.vf = parse_int_field(fields[5], "vf", lineno);
            } else {
                if (fields.size() != 7)
                    throw ParseError(lineno,
                                     "binary bbop needs: dst, src1, src2, size=, n=, ml=, vf=");
                b.kind = BbopKind::BinaryArith;
                b.dst = fields[0];
                b.src1 = fields[1];
                b.src2 = fields[2];
                b.size = parse_int_field(fields[3], "size", lineno);
                b.bitwidth = static_cast<int>(parse_int_field(fields[4], "n", lineno));
                b.ml = parse_str_field(fields[5], "ml", lineno);
                b.vf = parse_int_field(fields[6], "vf", lineno);
            }
        }
        if (b.bitwidth < 1 || b.bitwidth > 64)
            throw ParseError(lineno, "n must be in 1..64");
        if (b.kind != BbopKind::TrspInit && b.kind != BbopKind::Mov && b.vf > b.size)
            throw ParseError(lineno, "vf must not exceed size");
        prog.bbops.push_back(std::move(b));
    }
    return prog;
}

std::string format_bbop(const Bbop& b) {
    std::ostringstream os;
    switch (b.kind) {
        case BbopKind::TrspInit:
            os << "bbop_trsp_init " << b.dst << ", size=" << b.size << ", n=" << b.bitwidth
               << ", ml=" << b.ml;
            break;
        case BbopKind::Mov:
            os << "bbop_mov " << b.dst << ", " << b.dst_idx << ", " << b.src1 << ", "
               << b.src_idx << ", size=" << b.size << ", n=" << b.bitwidth;
            break;
        case BbopKind::IfElse:
            os << "bbop_if_else " << b.dst << ", " << b.src1 << ", " << b.src2 << ", " << b.sel
               << ", size=" << b.size << ", n=" << b.bitwidth << ", ml=" << b.ml
               << ", vf=" << b.vf;
            break;
        case BbopKind::UnaryArith:
            os << "bbop_" << to_string(b.op) << " " << b.dst << ", " << b.src1
               << ", size=" << b.size << ", n=" << b.bitwidth << ", ml=" << b.ml
               << ", vf=" << b.vf;
            break;
        case BbopKind::BinaryArith:
            os << "bbop_" << to_string(b.op) << " " << b.dst << ", " << b.src1 << ", " << b.src2
               << ", size=" << b.size << ", n=" << b.bitwidth << ", ml=" << b.ml
               << ", vf=" << b.vf;
            break;
    }
    return os.str();
}

std::string format_program(const BbopProgram& p) {
    // Allocation directives come first, each followed by nothing in
    // particular; bbops keep their order. The emitter interleaves allocs
    // before the first use instead, so reproduce by source line when known.
    std::ostringstream os;
    size_t ai = 0;
    size_t bi = 0;
    while (ai < p.allocs.size() || bi < p.bbops.size()) {
        bool take_alloc;
        if (ai == p.allocs.size()) take_alloc = false;
        else if (bi == p.bbops.size()) take_alloc = true;
        else take_alloc = p.allocs[ai].source_line <= p.bbops[bi].source_line;
        if (take_alloc) {
            const auto& d = p.allocs[ai++];
            os << "# alloc " << d.name << " " << d.size << " " << d.label << "\n";
        } else {
            os << format_bbop(p.bbops[bi++]) << "\n";
        }
    }
    return os.str();
}

std::vector<MovSegment> mov_route(const Bbop& mov, const OperandPlacement& src,
                                  const OperandPlacement& dst) {
    if (mov.kind != BbopKind::Mov) throw Error("mov_route: not a mov bbop");
    std::vector<MovSegment> out;
    int64_t e = 0;
    while (e < mov.size) {
        int src_mat = src.mat_of(mov.src_idx + e);
        int dst_mat = dst.mat_of(mov.dst_idx + e);
        // Extend the segment while both sides stay in the same mats.
        int64_t src_left = src.columns - (mov.src_idx + e - src.first_index) % src.columns;
        int64_t dst_left = dst.columns - (mov.dst_idx + e - dst.first_index) % dst.columns;
        int64_t len = std::min({src_left, dst_left, mov.size - e});
        MovSegment seg;
        seg.src_mat = src_mat;
        seg.dst_mat = dst_mat;
        seg.first_element = e;
        seg.count = len;
        seg.route = src_mat == dst_mat ? MovRoute::IntraMat : MovRoute::InterMat;
        out.push_back(seg);
        e += len;
    }
    return out;
}

}  // namespace mimd
