#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mimd/config.hpp"
#include "mimd/dram.hpp"
#include "mimd/isa.hpp"
#include "mimd/uprog.hpp"

namespace mimd {

/// One busy bit per logical mat in the computation subarray. Reservations
/// of in-flight bbops are always disjoint.
class MatScoreboard {
  public:
    explicit MatScoreboard(int mats) : bits_(mats, false) {}

    int size() const { return static_cast<int>(bits_.size()); }
    bool range_free(const MatRange& r) const;
    void reserve(const MatRange& r);
    void release(const MatRange& r);
    bool any_busy() const;
    uint64_t busy_count() const;

  private:
    std::vector<bool> bits_;
};

/// FIFO of dispatched-but-not-launched bbops.
class BbopBuffer {
  public:
    struct Entry {
        Bbop bbop;
        uint64_t owner = 0;
        uint64_t seq = 0;
    };

    explicit BbopBuffer(int capacity) : capacity_(capacity) {}

    bool full() const { return static_cast<int>(fifo_.size()) >= capacity_; }
    bool empty() const { return fifo_.empty(); }
    int occupancy() const { return static_cast<int>(fifo_.size()); }
    int capacity() const { return capacity_; }

    bool push(Entry e);  // false when full
    const std::deque<Entry>& entries() const { return fifo_; }
    Entry take(size_t index);

  private:
    int capacity_;
    std::deque<Entry> fifo_;
};

/// Replays the mat-queue traffic a command stream generates on each chip's
/// I/O logic and checks the enqueue/dequeue discipline: the mat range of
/// every ACT was pushed earlier, by the preceding PRE-enqueue (PRE-ACT
/// overlap) or during the first ACT of a row copy (ACT-ACT overlap).
class MatQueueChecker {
  public:
    MatQueueChecker(int chips, int mats_per_chip, int depth);

    /// Replays one microprogram's command stream.
    void run(const std::vector<Command>& commands);

    /// Protocol primitives (PRE-enqueue / ACT-enqueue push, ACT-dequeue
    /// pop); run() drives them, tests may too.
    void enqueue(const MatRange& r);
    void dequeue(const MatRange& r);

    int max_depth_seen() const { return max_depth_; }
    uint64_t enqueues() const { return enqueues_; }
    uint64_t dequeues() const { return dequeues_; }

  private:
    int chips_;
    int mats_per_chip_;
    int depth_;
    std::vector<std::deque<ChipSpan>> queues_;  // one per chip
    int max_depth_ = 0;
    uint64_t enqueues_ = 0;
    uint64_t dequeues_ = 0;
};

/// Energy of one command per the relative activation model: a TRA costs
/// 1.44 activations, a row copy 2.22 (the overlapped second ACT carries the
/// extra-row surcharge once), both scaled by the fraction of a full mat row
/// the range covers. Moves charge an activation-equivalent plus
/// write-recovery energy.
double account_energy(const Command& cmd, const EnergyModel& e, const TimingParams& t);

struct EngineSlot {
    enum class State { Idle, Running };
    State state = State::Idle;
    Bbop bbop;
    MicroProgram program;
    size_t pc = 0;
    double next_time = 0.0;
    uint64_t owner = 0;  // run-provided tag (app id)
    uint64_t seq = 0;
};

struct CompletionEvent {
    uint64_t bbop_seq = 0;
    uint64_t owner = 0;
    int engine = 0;
    double time = 0.0;
    Bbop bbop;
};

struct LaunchInfo {
    uint64_t bbop_seq = 0;
    int engine = 0;
    double time = 0.0;
    MatRange range{0, 0};
};

struct ControlStats {
    UprogStats commands;
    double energy = 0.0;
    uint64_t launched = 0;
    uint64_t completed = 0;
};

/// The memory-controller-side orchestrator: accepts resolved bbops into the
/// bbop buffer, launches them onto idle processing engines with an online
/// first-fit scan over the scoreboard, and paces each engine's command
/// stream in virtual time. Deterministic: ties resolve by engine id.
class Controller {
  public:
    Controller(const SimConfig& cfg, DramModule* mats);

    /// nullopt = accepted; otherwise buffer_full.
    bool dispatch(const Bbop& b, uint64_t owner = 0, uint64_t seq = 0);

    /// One first-fit scan; returns bbop seqs launched.
    std::vector<LaunchInfo> schedule_step();

    /// Advances virtual time by dt, issuing engine commands as their
    /// timers expire. Returns completions in deterministic order.
    std::vector<CompletionEvent> tick(double dt);

    /// Runs until the buffer and all engines drain.
    std::vector<CompletionEvent> run_until_idle();

    double now() const { return now_; }
    bool idle() const;
    const MatScoreboard& scoreboard() const { return scoreboard_; }
    const BbopBuffer& buffer() const { return buffer_; }
    int engine_count() const { return static_cast<int>(engines_.size()); }
    int idle_engines() const;
    const ControlStats& stats() const { return stats_; }

    /// Functional execution toggle: when false, commands advance time and
    /// energy but do not touch mat contents (fast mode for schedule-level
    /// studies).
    void set_functional(bool on) { functional_ = on; }
    void set_trace(std::ostream* trace) { trace_ = trace; }
    void set_uprog_trace(std::ostream* trace) { uprog_trace_ = trace; }
    void set_completion_hook(std::function<void(const CompletionEvent&)> hook) {
        completion_hook_ = std::move(hook);
    }

    /// Lane accounting for utilization metrics.
    struct LaneSample {
        int64_t active = 0;
        int64_t provisioned = 0;
    };
    const std::vector<LaneSample>& lane_samples() const { return lane_samples_; }

    /// Exposed to the runner so μProg row bases line up with allocations.
    void set_operand_resolver(
        std::function<UprogOperands(const Bbop&)> resolver) {
        operand_resolver_ = std::move(resolver);
    }
    void set_uprog_builder(
        std::function<MicroProgram(const Bbop&, uint64_t owner)> builder) {
        uprog_builder_ = std::move(builder);
    }

  private:
    static bool entry_is_arith(const Bbop& b);
    double command_latency(const Command& c) const;
    void issue_command(int engine_id);
    std::optional<double> next_event_time() const;

    SimConfig cfg_;
    DramModule* mats_;
    MatScoreboard scoreboard_;
    BbopBuffer buffer_;
    std::vector<EngineSlot> engines_;
    double now_ = 0.0;
    bool functional_ = true;
    std::ostream* trace_ = nullptr;
    std::ostream* uprog_trace_ = nullptr;
    ControlStats stats_;
    std::vector<LaneSample> lane_samples_;
    std::function<void(const CompletionEvent&)> completion_hook_;
    std::function<UprogOperands(const Bbop&)> operand_resolver_;
    std::function<MicroProgram(const Bbop&, uint64_t)> uprog_builder_;
    std::vector<CompletionEvent> pending_completions_;
};

std::string format_trace_line(double t, int engine, const Command& c);

}  // namespace mimd
