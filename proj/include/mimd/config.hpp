#pragma once

#include <cstdint>
#include <string>

namespace mimd {

/// DRAM module geometry. All row/column math in the simulator derives from
/// these counts. The stock configuration models a DDR4-style module:
/// 8 chips x 16 mats/chip = 128 logical mats per computation subarray.
struct DramGeometry {
    int chips = 8;
    int banks_per_rank = 16;
    int ranks = 4;
    int subarrays_per_bank = 64;
    int mats_per_subarray_per_chip = 16;
    int rows_per_mat = 1024;
    int columns_per_mat = 512;
    int hffs_per_mat = 4;  // bits movable per column access

    int mats_total() const { return chips * mats_per_subarray_per_chip; }
    int lanes_total() const { return mats_total() * columns_per_mat; }

    void validate() const;
};

/// Abstract time units. tRAS/tRP/tWR/tRELOC follow the usual DRAM meanings;
/// act_to_act_factor scales a back-to-back in-subarray activation relative
/// to tRAS.
struct TimingParams {
    double t_ras = 32.0;
    double t_rp = 14.0;
    double t_wr = 12.0;
    double t_reloc = 2.0;
    double t_act_to_act_factor = 1.1;

    void validate() const;

    double ap_latency() const { return t_act_to_act_factor * t_ras + t_rp; }
    double aap_latency() const { return 2.0 * (t_act_to_act_factor * t_ras) + t_rp; }
    double gb_mov_latency() const { return t_ras + t_reloc + t_wr + t_rp; }
    double lc_mov_latency() const { return 2.0 * (t_ras + t_rp) + t_reloc + t_wr; }
};

/// Relative energy model. e_act is the cost of activating one full mat row
/// across one chip-row worth of mats; every simultaneous extra row in the
/// same activation adds extra_activation_factor.
struct EnergyModel {
    double e_act = 1.0;
    double extra_activation_factor = 0.22;
    double wr_energy_factor = 0.05;
    int mats_per_subarray_row = 16;

    double tra_multiplier() const { return 1.0 + 2.0 * extra_activation_factor; }
    double aap_multiplier() const { return 1.0 + (1.0 + extra_activation_factor); }
};

/// Control-unit sizing.
struct ControlParams {
    int engines = 8;
    int bbop_buffer_capacity = 1024;
    int mat_queue_depth = 8;
};

/// Top-level simulator configuration, loadable from a `key = value` file.
struct SimConfig {
    DramGeometry geometry;
    TimingParams timing;
    EnergyModel energy;
    ControlParams control;

    int alloc_subarrays = 4;       // subarray pool seen by the allocator
    int alloc_pages = 8;           // huge pages preallocated by default
    int regions_per_page = 16;

    void validate() const;
};

/// Parses `key = value` lines ('#' comments). Unknown keys are an error so
/// that config typos do not silently fall back to defaults.
SimConfig load_config_file(const std::string& path);
void apply_config_line(SimConfig& cfg, const std::string& key, const std::string& value);

}  // namespace mimd
