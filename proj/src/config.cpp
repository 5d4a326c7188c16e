#include "mimd/config.hpp"

#include <fstream>
#include <sstream>

#include "mimd/error.hpp"

namespace mimd {

void DramGeometry::validate() const {
    auto positive = [](int v, const char* name) {
        if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
    };
    positive(chips, "chips");
    positive(banks_per_rank, "banks_per_rank");
    positive(ranks, "ranks");
    positive(subarrays_per_bank, "subarrays_per_bank");
    positive(mats_per_subarray_per_chip, "mats_per_subarray_per_chip");
    positive(rows_per_mat, "rows_per_mat");
    positive(columns_per_mat, "columns_per_mat");
    positive(hffs_per_mat, "hffs_per_mat");
    if ((columns_per_mat & (columns_per_mat - 1)) != 0)
        throw ConfigError("columns_per_mat must be a power of two");
}

void TimingParams::validate() const {
    if (t_ras <= 0 || t_rp <= 0 || t_wr <= 0 || t_reloc <= 0)
        throw ConfigError("timing parameters must be positive");
    if (t_act_to_act_factor < 1.0)
        throw ConfigError("t_act_to_act_factor must be >= 1");
}

void SimConfig::validate() const {
    geometry.validate();
    timing.validate();
    if (control.engines < 1) throw ConfigError("engines must be >= 1");
    if (control.bbop_buffer_capacity < 1) throw ConfigError("bbop buffer capacity must be >= 1");
    if (control.mat_queue_depth < 1) throw ConfigError("mat queue depth must be >= 1");
    if (alloc_subarrays < 1) throw ConfigError("alloc_subarrays must be >= 1");
}

void apply_config_line(SimConfig& cfg, const std::string& key, const std::string& value) {
    auto as_int = [&](const std::string& v) {
        size_t pos = 0;
        int out = std::stoi(v, &pos);
        if (pos != v.size()) throw ConfigError("bad integer for " + key + ": " + v);
        return out;
    };
    auto as_double = [&](const std::string& v) {
        size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw ConfigError("bad number for " + key + ": " + v);
        return out;
    };

    if (key == "chips") cfg.geometry.chips = as_int(value);
    else if (key == "banks_per_rank") cfg.geometry.banks_per_rank = as_int(value);
    else if (key == "ranks") cfg.geometry.ranks = as_int(value);
    else if (key == "subarrays_per_bank") cfg.geometry.subarrays_per_bank = as_int(value);
    else if (key == "mats_per_chip") cfg.geometry.mats_per_subarray_per_chip = as_int(value);
    else if (key == "rows_per_mat") cfg.geometry.rows_per_mat = as_int(value);
    else if (key == "columns_per_mat") cfg.geometry.columns_per_mat = as_int(value);
    else if (key == "hffs_per_mat") cfg.geometry.hffs_per_mat = as_int(value);
    else if (key == "t_ras") cfg.timing.t_ras = as_double(value);
    else if (key == "t_rp") cfg.timing.t_rp = as_double(value);
    else if (key == "t_wr") cfg.timing.t_wr = as_double(value);
    else if (key == "t_reloc") cfg.timing.t_reloc = as_double(value);
    else if (key == "t_act_to_act_factor") cfg.timing.t_act_to_act_factor = as_double(value);
    else if (key == "e_act") cfg.energy.e_act = as_double(value);
    else if (key == "extra_activation_factor") cfg.energy.extra_activation_factor = as_double(value);
    else if (key == "wr_energy_factor") cfg.energy.wr_energy_factor = as_double(value);
    else if (key == "mats_per_subarray_row") cfg.energy.mats_per_subarray_row = as_int(value);
    else if (key == "engines") cfg.control.engines = as_int(value);
    else if (key == "bbop_buffer_capacity") cfg.control.bbop_buffer_capacity = as_int(value);
    else if (key == "mat_queue_depth") cfg.control.mat_queue_depth = as_int(value);
    else if (key == "alloc_subarrays") cfg.alloc_subarrays = as_int(value);
    else if (key == "alloc_pages") cfg.alloc_pages = as_int(value);
    else if (key == "regions_per_page") cfg.regions_per_page = as_int(value);
    else throw ConfigError("unknown config key: " + key);
}

SimConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);

    SimConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            size_t b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        apply_config_line(cfg, key, value);
    }
    cfg.validate();
    return cfg;
}

}  // namespace mimd
