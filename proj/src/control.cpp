#include "mimd/control.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

#include "mimd/error.hpp"

namespace mimd {

bool MatScoreboard::range_free(const MatRange& r) const {
    if (r.begin < 0 || r.end >= size()) throw Error("scoreboard: range out of bounds");
    for (int m = r.begin; m <= r.end; ++m)
        if (bits_[m]) return false;
    return true;
}

void MatScoreboard::reserve(const MatRange& r) {
    for (int m = r.begin; m <= r.end; ++m) {
        if (bits_[m]) throw Error("scoreboard: double reservation of mat " + std::to_string(m));
        bits_[m] = true;
    }
}

void MatScoreboard::release(const MatRange& r) {
    for (int m = r.begin; m <= r.end; ++m) {
        if (!bits_[m]) throw Error("scoreboard: releasing free mat " + std::to_string(m));
        bits_[m] = false;
    }
}

bool MatScoreboard::any_busy() const {
    return std::any_of(bits_.begin(), bits_.end(), [](bool b) { return b; });
}

uint64_t MatScoreboard::busy_count() const {
    return static_cast<uint64_t>(std::count(bits_.begin(), bits_.end(), true));
}

bool BbopBuffer::push(Entry e) {
    if (full()) return false;
    fifo_.push_back(std::move(e));
    return true;
}

BbopBuffer::Entry BbopBuffer::take(size_t index) {
    Entry e = std::move(fifo_.at(index));
    fifo_.erase(fifo_.begin() + index);
    return e;
}

MatQueueChecker::MatQueueChecker(int chips, int mats_per_chip, int depth)
    : chips_(chips), mats_per_chip_(mats_per_chip), depth_(depth), queues_(chips) {}

void MatQueueChecker::enqueue(const MatRange& r) {
    for (int chip = 0; chip < chips_; ++chip) {
        auto span = chip_select(r, chip, mats_per_chip_);
        if (!span) continue;
        auto& q = queues_[chip];
        if (static_cast<int>(q.size()) >= depth_)
            throw ProtocolError("mat queue overflow on chip " + std::to_string(chip));
        q.push_back(*span);
        max_depth_ = std::max(max_depth_, static_cast<int>(q.size()));
    }
    ++enqueues_;
}

void MatQueueChecker::dequeue(const MatRange& r) {
    for (int chip = 0; chip < chips_; ++chip) {
        auto span = chip_select(r, chip, mats_per_chip_);
        if (!span) continue;
        auto& q = queues_[chip];
        if (q.empty())
            throw ProtocolError("mat queue dequeue from empty queue on chip " +
                                std::to_string(chip));
        if (!(q.front() == *span))
            throw ProtocolError("mat queue range mismatch on chip " + std::to_string(chip));
        q.pop_front();
    }
    ++dequeues_;
}

void MatQueueChecker::run(const std::vector<Command>& commands) {
    if (commands.empty()) return;
    // A microprogram's first ACT always rides behind a PRE-enqueue.
    enqueue(commands.front().range);
    for (size_t i = 0; i < commands.size(); ++i) {
        const Command& c = commands[i];
        const bool two_acts = c.kind != Command::Kind::Ap;
        dequeue(c.range);  // ACT-dequeue for the first activation
        if (two_acts) {
            // The first ACT's second cycle carries the mat info of the
            // second activation (ACT-ACT overlap).
            enqueue(c.range);
            dequeue(c.range);
        }
        // The trailing PRE doubles as the PRE-enqueue of the next command.
        if (i + 1 < commands.size()) enqueue(commands[i + 1].range);
    }
    for (int chip = 0; chip < chips_; ++chip)
        if (!queues_[chip].empty())
            throw ProtocolError("mat queue not drained on chip " + std::to_string(chip));
}

double account_energy(const Command& cmd, const EnergyModel& e, const TimingParams& t) {
    const double width_fraction =
        static_cast<double>(cmd.range.count()) / e.mats_per_subarray_row;
    switch (cmd.kind) {
        case Command::Kind::Ap:
            return e.e_act * e.tra_multiplier() * width_fraction;
        case Command::Kind::Aap:
            return e.e_act * e.aap_multiplier() * width_fraction;
        case Command::Kind::GbMov:
        case Command::Kind::LcMov:
            return e.e_act / e.mats_per_subarray_row + e.wr_energy_factor * t.t_wr;
    }
    return 0.0;
}

Controller::Controller(const SimConfig& cfg, DramModule* mats)
    : cfg_(cfg),
      mats_(mats),
      scoreboard_(cfg.geometry.mats_total()),
      buffer_(cfg.control.bbop_buffer_capacity),
      engines_(cfg.control.engines) {}

bool Controller::dispatch(const Bbop& b, uint64_t owner, uint64_t seq) {
    if (!b.range.has_value())
        throw Error("dispatch: bbop has an unresolved mat label '" + b.ml + "'");
    if (b.range->begin < 0 || b.range->end >= scoreboard_.size())
        throw Error("dispatch: mat range " + to_string(*b.range) + " outside the module");
    return buffer_.push(BbopBuffer::Entry{b, owner, seq});
}

std::vector<LaunchInfo> Controller::schedule_step() {
    std::vector<LaunchInfo> launched;
    size_t i = 0;
    while (i < buffer_.entries().size()) {
        int engine_id = -1;
        for (int k = 0; k < engine_count(); ++k) {
            if (engines_[k].state == EngineSlot::State::Idle) {
                engine_id = k;
                break;
            }
        }
        if (engine_id < 0) break;

        const auto& entry = buffer_.entries()[i];
        const MatRange range = *entry.bbop.range;
        if (!scoreboard_.range_free(range)) {
            ++i;  // skip, do not stall behind it
            continue;
        }

        BbopBuffer::Entry taken = buffer_.take(i);
        scoreboard_.reserve(range);
        EngineSlot& eng = engines_[engine_id];
        eng.state = EngineSlot::State::Running;
        eng.bbop = taken.bbop;
        eng.program =
            uprog_builder_
                ? uprog_builder_(taken.bbop, taken.owner)
                : build_uprog(taken.bbop, operand_resolver_ ? operand_resolver_(taken.bbop)
                                                            : UprogOperands{});
        eng.pc = 0;
        eng.next_time = now_;
        eng.owner = taken.owner;
        eng.seq = taken.seq;

        launched.push_back(LaunchInfo{taken.seq, engine_id, now_, range});
        ++stats_.launched;

        if (entry_is_arith(taken.bbop)) {
            lane_samples_.push_back(
                {taken.bbop.size,
                 int64_t{range.count()} * cfg_.geometry.columns_per_mat});
        }
        if (uprog_trace_) {
            *uprog_trace_ << "# bbop seq=" << taken.seq << " " << format_bbop(taken.bbop)
                          << "\n";
            for (const Command& c : eng.program.commands)
                *uprog_trace_ << to_string(c) << "\n";
        }
    }
    return launched;
}

bool Controller::entry_is_arith(const Bbop& b) {
    return b.kind == BbopKind::UnaryArith || b.kind == BbopKind::BinaryArith ||
           b.kind == BbopKind::IfElse;
}

double Controller::command_latency(const Command& c) const {
    switch (c.kind) {
        case Command::Kind::Aap: return cfg_.timing.aap_latency();
        case Command::Kind::Ap: return cfg_.timing.ap_latency();
        case Command::Kind::GbMov: return cfg_.timing.gb_mov_latency();
        case Command::Kind::LcMov: return cfg_.timing.lc_mov_latency();
    }
    return 0.0;
}

void Controller::issue_command(int engine_id) {
    EngineSlot& eng = engines_[engine_id];
    const Command& cmd = eng.program.commands[eng.pc];
    if (trace_) *trace_ << format_trace_line(now_, engine_id, cmd) << "\n";
    stats_.energy += account_energy(cmd, cfg_.energy, cfg_.timing);
    switch (cmd.kind) {
        case Command::Kind::Aap: ++stats_.commands.aap_count; break;
        case Command::Kind::Ap: ++stats_.commands.ap_count; break;
        case Command::Kind::GbMov: ++stats_.commands.gbmov_count; break;
        case Command::Kind::LcMov: ++stats_.commands.lcmov_count; break;
    }
    if (functional_ && mats_) execute_command(cmd, *mats_);
    eng.next_time = now_ + command_latency(cmd);
    ++eng.pc;
}

std::optional<double> Controller::next_event_time() const {
    std::optional<double> t;
    for (const auto& eng : engines_)
        if (eng.state == EngineSlot::State::Running)
            if (!t || eng.next_time < *t) t = eng.next_time;
    return t;
}

std::vector<CompletionEvent> Controller::tick(double dt) {
    const double target = now_ + dt;
    std::vector<CompletionEvent> completions;
    for (;;) {
        // Earliest pending engine event not beyond the tick horizon;
        // ties resolve by engine id for a deterministic trace.
        int engine_id = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int k = 0; k < engine_count(); ++k) {
            const auto& eng = engines_[k];
            if (eng.state != EngineSlot::State::Running) continue;
            if (eng.next_time < best) {
                best = eng.next_time;
                engine_id = k;
            }
        }
        if (engine_id < 0 || best > target) break;

        now_ = best;
        EngineSlot& eng = engines_[engine_id];
        if (eng.pc < eng.program.commands.size()) {
            issue_command(engine_id);
            continue;
        }

        // Last command drained: free the mats and notify.
        const MatRange range = *eng.bbop.range;
        scoreboard_.release(range);
        eng.state = EngineSlot::State::Idle;
        ++stats_.completed;
        CompletionEvent ev{eng.seq, eng.owner, engine_id, now_, eng.bbop};
        completions.push_back(ev);
        if (completion_hook_) completion_hook_(ev);
        schedule_step();
    }
    now_ = target;
    return completions;
}

std::vector<CompletionEvent> Controller::run_until_idle() {
    std::vector<CompletionEvent> all;
    schedule_step();
    for (;;) {
        auto next = next_event_time();
        if (!next) {
            if (buffer_.empty()) break;
            // Buffered work but nothing running and nothing launchable.
            auto launched = schedule_step();
            if (launched.empty() && !next_event_time())
                throw Error("control unit stalled: buffered bbops can never launch");
            continue;
        }
        auto evs = tick(*next - now_);
        all.insert(all.end(), evs.begin(), evs.end());
    }
    return all;
}

bool Controller::idle() const {
    if (!buffer_.empty()) return false;
    for (const auto& eng : engines_)
        if (eng.state == EngineSlot::State::Running) return false;
    return true;
}

int Controller::idle_engines() const {
    int n = 0;
    for (const auto& eng : engines_)
        if (eng.state == EngineSlot::State::Idle) ++n;
    return n;
}

std::string format_trace_line(double t, int engine, const Command& c) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", t);
    std::string kind;
    switch (c.kind) {
        case Command::Kind::Aap: kind = "AAP"; break;
        case Command::Kind::Ap: kind = "AP"; break;
        case Command::Kind::GbMov: kind = "GB-MOV"; break;
        case Command::Kind::LcMov: kind = "LC-MOV"; break;
    }
    return "t=" + std::string(buf) + " engine=" + std::to_string(engine) + " cmd=" + kind +
           " mats=[" + std::to_string(c.range.begin) + "," + std::to_string(c.range.end) + "]";
}

}  // namespace mimd
