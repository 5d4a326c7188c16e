#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mimd/compiler.hpp"
#include "mimd/error.hpp"
#include "mimd/runner.hpp"

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw mimd::Error("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Desk-scale default: a single chip's worth of mats forms the computation
/// subarray; `mix` widens to the full module so eight apps have room.
mimd::SimConfig default_config(bool full_module) {
    mimd::SimConfig cfg;
    cfg.geometry.chips = full_module ? 8 : 1;
    return cfg;
}

mimd::BbopProgram load_program(const std::string& path) {
    if (path.size() > 3 && path.substr(path.size() - 3) == ".mk") {
        mimd::EmitOptions opts;
        return mimd::compile_kernel(slurp(path), opts).program;
    }
    return mimd::parse_bbop_assembly(slurp(path));
}

/// Minimal TOML subset for mix files: `key = "value"` and
/// `key = ["a", "b"]` lines, `#` comments.
struct MixFile {
    std::vector<std::string> apps;
    std::string vf_class;
};

MixFile parse_mix_file(const std::string& text) {
    MixFile mf;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto strip = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        size_t b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    };
    auto unquote = [&](std::string s, int ln) {
        s = strip(s);
        if (s.size() < 2 || s.front() != '"' || s.back() != '"')
            throw mimd::ParseError(ln, "expected quoted string, got " + s);
        return s.substr(1, s.size() - 2);
    };
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = strip(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw mimd::ParseError(lineno, "expected key = value");
        std::string key = strip(line.substr(0, eq));
        std::string value = strip(line.substr(eq + 1));
        if (key == "class") {
            mf.vf_class = unquote(value, lineno);
        } else if (key == "apps") {
            if (value.front() != '[' || value.back() != ']')
                throw mimd::ParseError(lineno, "apps must be a [\"...\"] list");
            std::string body = value.substr(1, value.size() - 2);
            std::string item;
            std::istringstream items(body);
            while (std::getline(items, item, ','))
                if (!strip(item).empty()) mf.apps.push_back(unquote(item, lineno));
        } else {
            throw mimd::ParseError(lineno, "unknown mix key " + key);
        }
    }
    if (mf.apps.empty()) throw mimd::Error("mix file lists no apps");
    return mf;
}

std::vector<mimd::SystemConfig> parse_compare(const std::string& spec) {
    std::vector<mimd::SystemConfig> out;
    std::istringstream in(spec);
    std::string item;
    while (std::getline(in, item, ',')) {
        mimd::SystemConfig sc;
        auto colon = item.find(':');
        std::string mode = colon == std::string::npos ? item : item.substr(0, colon);
        auto m = mimd::sim_mode_from_string(mode);
        if (!m) throw mimd::Error("unknown system '" + item + "'");
        sc.mode = *m;
        sc.instances = colon == std::string::npos ? 1 : std::stoi(item.substr(colon + 1));
        out.push_back(sc);
    }
    return out;
}

void write_or_print(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw mimd::Error("cannot write " + path);
    out << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mimdsim - command-level simulator for MIMD processing-using-DRAM"};
    app.require_subcommand(1);

    // ------------------------------------------------------------- run ---
    auto* run = app.add_subcommand("run", "execute one bbop program");
    std::string run_input, run_mode = "mimdram", run_report, run_trace, run_uprog_trace;
    std::string run_config, run_timings, run_alloc_trace;
    int run_engines = -1, run_subarrays = 1, run_banks = 1;
    uint64_t run_seed = 1;
    bool run_dump = false, run_schedule_only = false;
    run->add_option("program", run_input, "bbop assembly (.bbop) or kernel (.mk)")
        ->required();
    run->add_option("--mode", run_mode, "simdram | mimdram");
    run->add_option("--config", run_config, "key = value config file");
    run->add_option("--timings", run_timings, "key = value timing overrides");
    run->add_option("--engines", run_engines, "processing engine count");
    run->add_option("--subarrays", run_subarrays, "parallel subarray instances");
    run->add_option("--banks", run_banks, "parallel bank instances");
    run->add_option("--seed", run_seed, "input data seed");
    run->add_option("--report", run_report, "report file (.json or .csv)");
    run->add_option("--trace", run_trace, "event trace file");
    run->add_option("--trace-uprog", run_uprog_trace, "microprogram command trace file");
    run->add_option("--alloc-trace", run_alloc_trace, "allocator state transition trace");
    run->add_flag("--dump-mats", run_dump, "dump mat contents after the run");
    run->add_flag("--schedule-only", run_schedule_only, "skip bit-level execution");

    // ------------------------------------------------------------- mix ---
    auto* mix = app.add_subcommand("mix", "run a multi-programmed mix");
    std::string mix_input, mix_compare = "simdram:1,mimdram", mix_report;
    std::string mix_config;
    uint64_t mix_seed = 1;
    mix->add_option("mixfile", mix_input, "mix description (.toml)")->required();
    mix->add_option("--compare", mix_compare,
                    "comma list of systems, e.g. simdram:1,simdram:8,mimdram");
    mix->add_option("--config", mix_config, "key = value config file");
    mix->add_option("--report", mix_report, "report file (.json or .csv)");
    mix->add_option("--seed", mix_seed, "input data seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            mimd::SimConfig cfg =
                run_config.empty() ? default_config(false) : mimd::load_config_file(run_config);
            if (!run_timings.empty()) {
                mimd::SimConfig t = mimd::load_config_file(run_timings);
                cfg.timing = t.timing;
            }
            if (run_engines > 0) cfg.control.engines = run_engines;
            if (run_subarrays != 1 || run_banks != 1) {
                // Parallel instances multiply throughput for sweeps; the
                // single-program runner uses one instance.
                std::cerr << "note: run executes on one instance; use mix for sweeps\n";
            }

            auto mode = mimd::sim_mode_from_string(run_mode);
            if (!mode) throw mimd::Error("unknown mode " + run_mode);

            mimd::RunOptions opts;
            opts.mode = *mode;
            opts.seed = run_seed;
            opts.functional = !run_schedule_only;
            std::ofstream trace_out, uprog_out, alloc_out, dump_out;
            if (!run_trace.empty()) {
                trace_out.open(run_trace);
                opts.trace = &trace_out;
            }
            if (!run_uprog_trace.empty()) {
                uprog_out.open(run_uprog_trace);
                opts.uprog_trace = &uprog_out;
            }
            if (!run_alloc_trace.empty()) {
                alloc_out.open(run_alloc_trace);
                opts.alloc_trace = &alloc_out;
            }
            if (run_dump) {
                dump_out.open(run_input + ".mats");
                opts.dump_mats = true;
                opts.dump_out = &dump_out;
            }

            mimd::BbopProgram prog = load_program(run_input);
            mimd::RunStats stats = mimd::run_single(cfg, prog, run_input, opts);

            auto fmt = run_report.size() > 4 &&
                               run_report.substr(run_report.size() - 4) == ".csv"
                           ? mimd::ReportFormat::Csv
                           : mimd::ReportFormat::Json;
            write_or_print(run_report, mimd::emit_report({stats}, fmt));
        } else if (mix->parsed()) {
            mimd::SimConfig cfg =
                mix_config.empty() ? default_config(true) : mimd::load_config_file(mix_config);
            MixFile mf = parse_mix_file(slurp(mix_input));

            mimd::MixSpec spec;
            spec.vf_class = mf.vf_class;
            for (const auto& path : mf.apps) {
                spec.app_names.push_back(path);
                spec.apps.push_back(load_program(path));
            }
            if (!spec.vf_class.empty() && !spec.class_consistent())
                throw mimd::Error("mix class '" + spec.vf_class +
                                  "' does not match the apps' vectorization factors");

            std::vector<mimd::MixResult> results;
            for (const auto& system : parse_compare(mix_compare))
                results.push_back(mimd::run_mix(cfg, spec, system, mix_seed));

            auto fmt = mix_report.size() > 4 &&
                               mix_report.substr(mix_report.size() - 4) == ".csv"
                           ? mimd::ReportFormat::Csv
                           : mimd::ReportFormat::Json;
            write_or_print(mix_report, mimd::emit_mix_report(results, fmt));
        }
    } catch (const std::exception& e) {
        std::cerr << "mimdsim: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
