#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "mimd/allocator.hpp"
#include "mimd/config.hpp"
#include "mimd/control.hpp"
#include "mimd/dram.hpp"
#include "mimd/isa.hpp"

namespace mimd {

enum class SimMode { Simdram, Mimdram };

const char* to_string(SimMode m);
std::optional<SimMode> sim_mode_from_string(const std::string& s);

/// Per-run results. lane_samples pair (active, provisioned) lanes per
/// executed arithmetic bbop; utilization is their ratio over the run.
struct RunStats {
    std::string app;
    std::string mode;
    double wall_time = 0.0;
    double energy = 0.0;
    UprogStats commands;
    std::vector<Controller::LaneSample> lane_samples;

    double utilization() const;
};

struct RunOptions {
    SimMode mode = SimMode::Mimdram;
    uint64_t seed = 1;          // input-data seed
    bool functional = true;     // execute bit-level state
    std::ostream* trace = nullptr;
    std::ostream* uprog_trace = nullptr;
    std::ostream* alloc_trace = nullptr;
    bool dump_mats = false;
    std::ostream* dump_out = nullptr;
};

/// Executes one or more bbop programs on a module instance: allocates the
/// declared operands (pim_alloc / pim_alloc_align per mat label), stages
/// seeded input data through the transposition path, and drives the control
/// unit with a dependence-aware frontend that dispatches a bbop only after
/// its producers complete.
class ProgramRunner {
  public:
    ProgramRunner(const SimConfig& cfg, const RunOptions& opts);

    int add_app(const BbopProgram& program, const std::string& name);
    void set_input(int app, const std::string& name, std::vector<uint64_t> values);

    RunStats run();
    double app_time(int app) const { return app_times_.at(app); }

    std::vector<uint64_t> read_operand(int app, const std::string& name) const;
    std::vector<bool> poison_of(int app, const std::string& name) const;
    const DramModule& module() const { return module_; }

  private:
    struct OperandState {
        AllocDirective decl;
        int app = 0;
        uint64_t handle = 0;
        VerticalLayout layout;
        bool is_input = true;
        std::vector<bool> poison;
    };
    struct App {
        BbopProgram program;
        std::string name;
    };

    using Key = std::pair<int, std::string>;

    void allocate_all();
    void initialize_inputs();
    Bbop resolve(int app, const Bbop& b) const;
    UprogOperands operands_for(int app, const Bbop& b) const;
    MicroProgram build_program(int app, const Bbop& b);
    const OperandState& operand(int app, const std::string& name) const;

    SimConfig cfg_;
    RunOptions opts_;
    DramModule module_;
    PimAllocator allocator_;
    std::vector<App> apps_;
    std::map<Key, OperandState> operands_;
    std::map<Key, std::vector<uint64_t>> inputs_;
    std::vector<double> app_times_;
    bool allocated_ = false;
};

RunStats run_single(const SimConfig& cfg, const BbopProgram& program,
                    const std::string& app_name, const RunOptions& opts);

/// Multi-programmed mix of bbop programs.
struct MixSpec {
    std::vector<std::string> app_names;
    std::vector<BbopProgram> apps;
    std::string vf_class;  // low_vf | medium_vf | high_vf

    /// Class thresholds over the apps' maximum VFs: low when all are below
    /// 16384; medium when the largest lands in [16384, 65536); high when
    /// any reaches 65536.
    static std::string classify(const std::vector<int64_t>& max_vfs);
    bool class_consistent() const;

    static int64_t max_vf_of(const BbopProgram& p);
};

struct SystemConfig {
    SimMode mode = SimMode::Mimdram;
    int instances = 1;  // independent module instances (bank-level MIMD)
    std::string name() const;
};

struct MixResult {
    std::string system;
    double weighted_speedup = 0.0;
    double harmonic_speedup = 0.0;
    double max_slowdown = 0.0;
    std::vector<double> alone_times;
    std::vector<double> shared_times;
};

/// Runs every app alone and co-scheduled under the given system
/// configuration; alone baselines come from the same system, apps deal
/// round-robin across instances. Mixes run schedule-only (no bit-level
/// state) for speed.
MixResult run_mix(const SimConfig& cfg, const MixSpec& mix, const SystemConfig& system,
                  uint64_t seed = 1);

enum class ReportFormat { Csv, Json };

/// Stable, byte-reproducible reports. CSV header:
///   app,mode,wall_time,energy,utilization,aap,ap,gbmov,lcmov
std::string emit_report(const std::vector<RunStats>& stats, ReportFormat format);
std::string emit_mix_report(const std::vector<MixResult>& results, ReportFormat format);

std::string format_time(double t);

}  // namespace mimd
