#include "mimd/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mimd/error.hpp"
#include "mimd/interconnect.hpp"

namespace mimd {

const char* to_string(SimMode m) { return m == SimMode::Simdram ? "simdram" : "mimdram"; }

std::optional<SimMode> sim_mode_from_string(const std::string& s) {
    if (s == "simdram") return SimMode::Simdram;
    if (s == "mimdram") return SimMode::Mimdram;
    return std::nullopt;
}

double RunStats::utilization() const {
    int64_t active = 0, provisioned = 0;
    for (const auto& s : lane_samples) {
        active += s.active;
        provisioned += s.provisioned;
    }
    return provisioned == 0 ? 0.0 : static_cast<double>(active) / provisioned;
}

std::string format_time(double t) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", t);
    return buf;
}

namespace {

int slots_per_mat(const DramGeometry& g) {
    return (g.rows_per_mat - RowGroups::kDataBase - kScratchArenaRows) / kRegionRows;
}

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

uint64_t name_seed(const std::string& name, uint64_t seed) {
    uint64_t h = splitmix64(seed);
    for (char c : name) h = splitmix64(h ^ static_cast<unsigned char>(c));
    return h;
}

uint64_t width_mask(int n) { return n == 64 ? ~uint64_t{0} : (uint64_t{1} << n) - 1; }

}  // namespace

ProgramRunner::ProgramRunner(const SimConfig& cfg, const RunOptions& opts)
    : cfg_(cfg),
      opts_(opts),
      module_(cfg.geometry),
      allocator_(1, cfg.geometry.mats_total(), slots_per_mat(cfg.geometry),
                 cfg.geometry.columns_per_mat) {
    if (opts_.alloc_trace) allocator_.set_trace(opts_.alloc_trace);
}

int ProgramRunner::add_app(const BbopProgram& program, const std::string& name) {
    if (allocated_) throw Error("add_app after run()");
    apps_.push_back(App{program, name});
    return static_cast<int>(apps_.size()) - 1;
}

void ProgramRunner::set_input(int app, const std::string& name,
                              std::vector<uint64_t> values) {
    inputs_[{app, name}] = std::move(values);
}

const ProgramRunner::OperandState& ProgramRunner::operand(int app,
                                                          const std::string& name) const {
    auto it = operands_.find({app, name});
    if (it == operands_.end())
        throw Error("unknown operand " + name + " in app " + std::to_string(app));
    return it->second;
}

void ProgramRunner::allocate_all() {
    int64_t regions_needed = 0;
    for (const auto& app : apps_)
        for (const auto& d : app.program.allocs)
            regions_needed += (d.size + cfg_.geometry.columns_per_mat - 1) /
                              cfg_.geometry.columns_per_mat;
    int pages = std::max<int>(
        cfg_.alloc_pages, static_cast<int>((regions_needed + cfg_.regions_per_page - 1) /
                                           cfg_.regions_per_page));
    allocator_.preallocate(pages, cfg_.regions_per_page);

    for (int a = 0; a < static_cast<int>(apps_.size()); ++a) {
        const auto& prog = apps_[a].program;
        std::map<std::string, int> bitwidth;
        for (const auto& b : prog.bbops)
            if (b.kind == BbopKind::TrspInit) bitwidth[b.dst] = b.bitwidth;

        std::set<std::string> labels_seen;
        for (const auto& d : prog.allocs) {
            Key key{a, d.name};
            if (operands_.count(key)) throw Error("duplicate alloc of " + d.name);
            auto bw = bitwidth.find(d.name);
            if (bw == bitwidth.end())
                throw Error("operand " + d.name + " has no bbop_trsp_init");
            OperandState st;
            st.decl = d;
            st.app = a;
            const uint64_t pid = static_cast<uint64_t>(a);
            st.handle = labels_seen.insert(d.label).second
                            ? allocator_.pim_alloc(d.size, d.label + "@" + std::to_string(a),
                                                   pid)
                            : allocator_.pim_alloc_align(
                                  d.size, d.label + "@" + std::to_string(a), pid);
            const AllocationRecord& rec = allocator_.record(st.handle);
            if (!rec.contiguous)
                throw AllocError("operand " + d.name + " landed in a fragmented region set");
            st.layout.base_row = RowGroups::kDataBase + rec.slot * kRegionRows;
            st.layout.bitwidth = bw->second;
            st.layout.elements = d.size;
            st.layout.mat_span = rec.span;
            operands_.emplace(key, std::move(st));
        }

        for (const auto& b : prog.bbops) {
            if (b.kind == BbopKind::TrspInit) continue;
            auto it = operands_.find({a, b.dst});
            if (it == operands_.end())
                throw Error("bbop writes undeclared operand " + b.dst);
            it->second.is_input = false;
            for (const std::string* src : {&b.src1, &b.src2, &b.sel}) {
                if (src->empty()) continue;
                if (!operands_.count({a, *src}))
                    throw Error("bbop reads undeclared operand " + *src);
            }
        }
    }
    allocated_ = true;
}

void ProgramRunner::initialize_inputs() {
    for (auto& [key, st] : operands_) {
        if (!st.is_input) continue;
        const uint64_t mask = width_mask(st.layout.bitwidth);
        std::vector<uint64_t> values;
        auto preset = inputs_.find(key);
        if (preset != inputs_.end()) {
            values = preset->second;
            values.resize(st.decl.size);
        } else if (key.second.rfind("__k", 0) == 0) {
            values.assign(st.decl.size, std::stoull(key.second.substr(3)) & mask);
        } else {
            std::mt19937_64 rng(
                name_seed(key.second, opts_.seed + 0x100 * key.first));
            values.resize(st.decl.size);
            for (auto& v : values) v = rng() & mask;
        }
        for (auto& v : values) v &= mask;
        if (opts_.functional) module_.transpose_h2v(values, st.layout);
        inputs_[key] = std::move(values);
    }
}

Bbop ProgramRunner::resolve(int app, const Bbop& b) const {
    Bbop r = b;
    if (b.kind == BbopKind::Mov) {
        const auto& src = operand(app, b.src1).layout.mat_span;
        const auto& dst = operand(app, b.dst).layout.mat_span;
        r.range = MatRange{std::min(src.begin, dst.begin), std::max(src.end, dst.end)};
    } else {
        MatRange range = allocator_.translate(b.ml + "@" + std::to_string(app),
                                              static_cast<uint64_t>(app));
        if (b.kind == BbopKind::UnaryArith && is_reduction(b.op)) {
            const auto& src = operand(app, b.src1).layout.mat_span;
            const auto& dst = operand(app, b.dst).layout.mat_span;
            range = MatRange{std::min({range.begin, src.begin, dst.begin}),
                             std::max({range.end, src.end, dst.end})};
        }
        r.range = range;
    }
    if (opts_.mode == SimMode::Simdram)
        r.range = MatRange{0, cfg_.geometry.mats_total() - 1};
    return r;
}

UprogOperands ProgramRunner::operands_for(int app, const Bbop& b) const {
    UprogOperands ops;
    ops.scratch_base = cfg_.geometry.rows_per_mat - kScratchArenaRows;
    ops.scratch_rows = kScratchArenaRows;
    ops.dst_base = operand(app, b.dst).layout.base_row;
    if (!b.src1.empty()) ops.src1_base = operand(app, b.src1).layout.base_row;
    if (!b.src2.empty()) ops.src2_base = operand(app, b.src2).layout.base_row;
    if (!b.sel.empty()) ops.sel_base = operand(app, b.sel).layout.base_row;
    return ops;
}

MicroProgram ProgramRunner::build_program(int app, const Bbop& b) {
    const int hff = cfg_.geometry.hffs_per_mat;
    const int move_rows = ((b.bitwidth + hff - 1) / hff) * hff;

    if (b.kind == BbopKind::Mov) {
        const auto& src = operand(app, b.src1).layout;
        const auto& dst = operand(app, b.dst).layout;
        OperandPlacement sp{src.mat_span, 0, cfg_.geometry.columns_per_mat};
        OperandPlacement dp{dst.mat_span, 0, cfg_.geometry.columns_per_mat};
        MicroProgram prog;
        prog.bbop_kind = BbopKind::Mov;
        prog.bitwidth = b.bitwidth;
        for (const MovSegment& seg : mov_route(b, sp, dp)) {
            const int cols = cfg_.geometry.columns_per_mat;
            int src_col = static_cast<int>((b.src_idx + seg.first_element) % cols);
            int dst_col = static_cast<int>((b.dst_idx + seg.first_element) % cols);
            if (src_col % hff != 0 || dst_col % hff != 0)
                throw Error("bbop_mov element offsets must be HFF-aligned");
            int windows = static_cast<int>((seg.count + hff - 1) / hff);
            for (int r = 0; r < move_rows; ++r) {
                for (int w = 0; w < windows; ++w) {
                    MoveCoord s{seg.src_mat, src.base_row + r, src_col + w * hff};
                    MoveCoord d{seg.dst_mat, dst.base_row + r, dst_col + w * hff};
                    prog.push(seg.route == MovRoute::IntraMat ? Command::lc_mov(s, d)
                                                              : Command::gb_mov(s, d));
                }
            }
        }
        return prog;
    }

    if (b.kind == BbopKind::UnaryArith && is_reduction(b.op)) {
        const auto& src = operand(app, b.src1).layout;
        const auto& dst = operand(app, b.dst).layout;
        const ReduceOp op = reduce_op_of(b.op);
        const int scratch = cfg_.geometry.rows_per_mat - kScratchArenaRows;
        if (opts_.functional) {
            // Ghost lanes beyond the live elements take the fold identity;
            // the transposition path stages them like any other element.
            const int64_t cap = src.capacity(cfg_.geometry.columns_per_mat);
            const uint64_t ident = reduce_identity(op, src.bitwidth);
            const int cols = cfg_.geometry.columns_per_mat;
            for (int64_t j = b.size; j < cap; ++j) {
                int mat = src.mat_span.begin + static_cast<int>(j / cols);
                int col = static_cast<int>(j % cols);
                for (int k = 0; k < src.bitwidth; ++k)
                    module_.mat(mat).set_bit(src.base_row + k, col, (ident >> k) & 1);
            }
        }
        ReductionPlan plan =
            plan_vector_reduce(src, b.size, op, scratch, cfg_.geometry);
        MicroProgram prog;
        prog.bbop_kind = b.kind;
        prog.op = b.op;
        prog.bitwidth = b.bitwidth;
        for (const auto& c : plan.commands) prog.push(c);
        // Land the four-element result in the destination operand.
        std::vector<Command> out;
        plan_block_move(out, plan.result.mat_span.begin, plan.result.base_row,
                        dst.mat_span.begin, dst.base_row, move_rows, 0, hff, hff);
        for (const auto& c : out) prog.push(c);
        return prog;
    }

    return build_uprog(b, operands_for(app, b));
}

namespace {

/// Frontend dependence tracking: RAW, WAR, and WAW hazards order bbops of
/// the same app; the host dispatches a bbop only after its predecessors'
/// completion notifications, so no in-flight bbops ever depend on each
/// other.
struct Frontend {
    struct Node {
        int app;
        Bbop bbop;
        int unmet = 0;
        std::vector<int> successors;
        bool dispatched = false;
        bool completed = false;
    };
    std::vector<Node> nodes;

    void add_app(int app, const std::vector<Bbop>& bbops) {
        const int base = static_cast<int>(nodes.size());
        for (const auto& b : bbops) nodes.push_back(Node{app, b, 0, {}, false, false});
        auto add_edge = [&](int from, int to) {
            auto& succ = nodes[from].successors;
            if (std::find(succ.begin(), succ.end(), to) == succ.end()) {
                succ.push_back(to);
                ++nodes[to].unmet;
            }
        };
        auto reads = [](const Bbop& b, const std::string& name) {
            return b.src1 == name || b.src2 == name || b.sel == name;
        };
        for (int i = base; i < static_cast<int>(nodes.size()); ++i) {
            for (int j = i + 1; j < static_cast<int>(nodes.size()); ++j) {
                const Bbop& bi = nodes[i].bbop;
                const Bbop& bj = nodes[j].bbop;
                if (!bi.dst.empty() && (reads(bj, bi.dst) || bj.dst == bi.dst))
                    add_edge(i, j);  // RAW / WAW
                else if (!bj.dst.empty() && reads(bi, bj.dst))
                    add_edge(i, j);  // WAR
            }
        }
    }
};

}  // namespace

RunStats ProgramRunner::run() {
    if (apps_.empty()) throw Error("no apps added");
    if (!allocated_) allocate_all();
    initialize_inputs();

    Controller ctrl(cfg_, &module_);
    ctrl.set_functional(opts_.functional);
    if (opts_.trace) ctrl.set_trace(opts_.trace);
    if (opts_.uprog_trace) ctrl.set_uprog_trace(opts_.uprog_trace);
    ctrl.set_uprog_builder([this](const Bbop& b, uint64_t owner) {
        return build_program(static_cast<int>(owner), b);
    });

    Frontend fe;
    for (int a = 0; a < static_cast<int>(apps_.size()); ++a) {
        std::vector<Bbop> work;
        for (const auto& b : apps_[a].program.bbops)
            if (b.kind != BbopKind::TrspInit) work.push_back(b);
        fe.add_app(a, work);
    }

    app_times_.assign(apps_.size(), 0.0);

    std::function<void()> pump = [&]() {
        for (size_t i = 0; i < fe.nodes.size(); ++i) {
            auto& n = fe.nodes[i];
            if (n.dispatched || n.unmet != 0) continue;
            Bbop resolved = resolve(n.app, n.bbop);
            if (!ctrl.dispatch(resolved, static_cast<uint64_t>(n.app),
                               static_cast<uint64_t>(i)))
                break;
            n.dispatched = true;
        }
    };
    ctrl.set_completion_hook([&](const CompletionEvent& ev) {
        auto& n = fe.nodes.at(static_cast<size_t>(ev.bbop_seq));
        n.completed = true;
        app_times_[n.app] = std::max(app_times_[n.app], ev.time);
        for (int succ : n.successors) --fe.nodes[succ].unmet;
        pump();
    });

    pump();
    ctrl.run_until_idle();
    for (int round = 0; round < 1'000'000; ++round) {
        bool pending = false;
        for (const auto& n : fe.nodes)
            if (!n.dispatched) pending = true;
        if (!pending) break;
        pump();
        ctrl.run_until_idle();
    }
    for (const auto& n : fe.nodes)
        if (!n.completed) throw Error("frontend deadlock: uncompleted bbops remain");

    // Division marks lanes with a zero divisor as poisoned in the result
    // metadata; the quotient itself saturates to all-ones there.
    if (opts_.functional) {
        for (int a = 0; a < static_cast<int>(apps_.size()); ++a) {
            for (const auto& b : apps_[a].program.bbops) {
                if (b.kind != BbopKind::BinaryArith || b.op != ArithOp::Div) continue;
                auto divisors = read_operand(a, b.src2);
                auto& dst = operands_.at({a, b.dst});
                dst.poison.assign(dst.decl.size, false);
                for (size_t i = 0; i < divisors.size() && i < dst.poison.size(); ++i)
                    dst.poison[i] = divisors[i] == 0;
            }
        }
    }

    if (opts_.dump_mats && opts_.dump_out)
        module_.dump_mats(*opts_.dump_out, MatRange{0, cfg_.geometry.mats_total() - 1});

    RunStats stats;
    stats.app = apps_.front().name;
    stats.mode = to_string(opts_.mode);
    stats.wall_time = ctrl.now();
    stats.energy = ctrl.stats().energy;
    stats.commands = ctrl.stats().commands;
    stats.lane_samples = ctrl.lane_samples();
    return stats;
}

std::vector<uint64_t> ProgramRunner::read_operand(int app, const std::string& name) const {
    const auto& st = operand(app, name);
    if (!opts_.functional) {
        auto preset = inputs_.find({app, name});
        if (preset != inputs_.end()) return preset->second;
        throw Error("read_operand: schedule-only run holds no data for " + name);
    }
    return module_.transpose_v2h(st.layout);
}

std::vector<bool> ProgramRunner::poison_of(int app, const std::string& name) const {
    const auto& st = operand(app, name);
    return st.poison.empty() ? std::vector<bool>(st.decl.size, false) : st.poison;
}

RunStats run_single(const SimConfig& cfg, const BbopProgram& program,
                    const std::string& app_name, const RunOptions& opts) {
    ProgramRunner runner(cfg, opts);
    runner.add_app(program, app_name);
    return runner.run();
}

std::string MixSpec::classify(const std::vector<int64_t>& max_vfs) {
    int64_t top = 0;
    for (int64_t v : max_vfs) top = std::max(top, v);
    if (top >= 65536) return "high_vf";
    if (top >= 16384) return "medium_vf";
    return "low_vf";
}

int64_t MixSpec::max_vf_of(const BbopProgram& p) {
    int64_t top = 0;
    for (const auto& b : p.bbops)
        if (b.kind != BbopKind::TrspInit && b.kind != BbopKind::Mov)
            top = std::max(top, b.vf);
    return top;
}

bool MixSpec::class_consistent() const {
    std::vector<int64_t> vfs;
    for (const auto& p : apps) vfs.push_back(max_vf_of(p));
    return classify(vfs) == vf_class;
}

std::string SystemConfig::name() const {
    std::string base = mode == SimMode::Simdram ? "simdram" : "mimdram";
    if (mode == SimMode::Simdram || instances > 1)
        base += ":" + std::to_string(instances);
    return base;
}

MixResult run_mix(const SimConfig& cfg, const MixSpec& mix, const SystemConfig& system,
                  uint64_t seed) {
    if (mix.apps.empty()) throw Error("empty mix");
    SimConfig sys_cfg = cfg;
    if (system.mode == SimMode::Simdram) sys_cfg.control.engines = 1;

    RunOptions opts;
    opts.mode = system.mode;
    opts.functional = false;
    opts.seed = seed;

    const int n = static_cast<int>(mix.apps.size());
    std::vector<double> alone(n, 0.0);
    for (int i = 0; i < n; ++i) {
        ProgramRunner runner(sys_cfg, opts);
        runner.add_app(mix.apps[i], mix.app_names[i]);
        runner.run();
        alone[i] = runner.app_time(0);
    }

    // Shared run: apps deal round-robin across instances; each instance is
    // an independent module with its own control unit.
    std::vector<double> shared(n, 0.0);
    const int instances = std::max(1, system.instances);
    for (int inst = 0; inst < instances; ++inst) {
        ProgramRunner runner(sys_cfg, opts);
        std::vector<int> members;
        for (int i = inst; i < n; i += instances) {
            runner.add_app(mix.apps[i], mix.app_names[i]);
            members.push_back(i);
        }
        if (members.empty()) continue;
        runner.run();
        for (size_t k = 0; k < members.size(); ++k)
            shared[members[k]] = runner.app_time(static_cast<int>(k));
    }

    MixResult res;
    res.system = system.name();
    res.alone_times = alone;
    res.shared_times = shared;
    double ws = 0.0, inv_sum = 0.0, ms = 0.0;
    for (int i = 0; i < n; ++i) {
        double ratio = alone[i] / shared[i];
        ws += ratio;
        inv_sum += shared[i] / alone[i];
        ms = std::max(ms, shared[i] / alone[i]);
    }
    res.weighted_speedup = ws;
    res.harmonic_speedup = static_cast<double>(n) / inv_sum;
    res.max_slowdown = ms;
    return res;
}

std::string emit_report(const std::vector<RunStats>& stats, ReportFormat format) {
    if (format == ReportFormat::Csv) {
        std::ostringstream os;
        os << "app,mode,wall_time,energy,utilization,aap,ap,gbmov,lcmov\n";
        for (const auto& s : stats) {
            os << s.app << "," << s.mode << "," << format_time(s.wall_time) << ","
               << format_time(s.energy) << "," << format_time(s.utilization()) << ","
               << s.commands.aap_count << "," << s.commands.ap_count << ","
               << s.commands.gbmov_count << "," << s.commands.lcmov_count << "\n";
        }
        return os.str();
    }
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const auto& s : stats) {
        nlohmann::ordered_json row;
        row["app"] = s.app;
        row["mode"] = s.mode;
        row["wall_time"] = s.wall_time;
        row["energy"] = s.energy;
        row["utilization"] = s.utilization();
        row["aap"] = s.commands.aap_count;
        row["ap"] = s.commands.ap_count;
        row["gbmov"] = s.commands.gbmov_count;
        row["lcmov"] = s.commands.lcmov_count;
        doc.push_back(row);
    }
    return doc.dump(2) + "\n";
}

std::string emit_mix_report(const std::vector<MixResult>& results, ReportFormat format) {
    if (format == ReportFormat::Csv) {
        std::ostringstream os;
        os << "system,weighted_speedup,harmonic_speedup,max_slowdown\n";
        for (const auto& r : results)
            os << r.system << "," << format_time(r.weighted_speedup) << ","
               << format_time(r.harmonic_speedup) << "," << format_time(r.max_slowdown)
               << "\n";
        return os.str();
    }
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const auto& r : results) {
        nlohmann::ordered_json row;
        row["system"] = r.system;
        row["weighted_speedup"] = r.weighted_speedup;
        row["harmonic_speedup"] = r.harmonic_speedup;
        row["max_slowdown"] = r.max_slowdown;
        row["alone_times"] = r.alone_times;
        row["shared_times"] = r.shared_times;
        doc.push_back(row);
    }
    return doc.dump(2) + "\n";
}

}  // namespace mimd
