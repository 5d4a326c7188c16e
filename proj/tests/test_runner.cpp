#include <doctest.h>

#include <sstream>

#include "mimd/compiler.hpp"
#include "mimd/error.hpp"
#include "mimd/runner.hpp"

using namespace mimd;

namespace {

SimConfig desk_config() {
    SimConfig cfg;
    cfg.geometry.chips = 1;  // 16 mats, 8192 lanes
    return cfg;
}

BbopProgram compile(const std::string& src) {
    EmitOptions opts;
    return compile_kernel(src, opts).program;
}

const char* kAddKernel =
    "array A n=32 size=1000\n"
    "array B n=32 size=1000\n"
    "array C n=32 size=1000\n"
    "for i in 0..1000 { C[i] = A[i] + B[i] }\n";

}  // namespace

TEST_SUITE("runner") {

TEST_CASE("an add kernel runs end to end and matches the interpreter") {
    SimConfig cfg = desk_config();
    RunOptions opts;
    ProgramRunner runner(cfg, opts);
    runner.add_app(compile(kAddKernel), "add");
    RunStats stats = runner.run();
    CHECK(stats.wall_time > 0);
    CHECK(stats.energy > 0);

    KernelIr ir = parse_kernel(kAddKernel);
    ScalarEnv in;
    in.arrays["A"] = runner.read_operand(0, "A");
    in.arrays["B"] = runner.read_operand(0, "B");
    ScalarEnv expect = interpret_kernel(ir, in);
    CHECK(runner.read_operand(0, "C") == expect.arrays["C"]);
}

TEST_CASE("identical runs produce identical stats and reports") {
    SimConfig cfg = desk_config();
    RunOptions opts;
    auto once = [&] {
        return run_single(cfg, compile(kAddKernel), "add", opts);
    };
    RunStats a = once();
    RunStats b = once();
    CHECK(a.wall_time == b.wall_time);
    CHECK(a.energy == b.energy);
    CHECK(a.commands == b.commands);
    CHECK(emit_report({a}, ReportFormat::Json) == emit_report({b}, ReportFormat::Json));
    CHECK(emit_report({a}, ReportFormat::Csv) == emit_report({b}, ReportFormat::Csv));
}

TEST_CASE("mode changes provisioned lanes, not results") {
    const char* kernel =
        "array A n=16 size=512\n"
        "array C n=16 size=512\n"
        "for i in 0..512 { C[i] = relu(A[i]) }\n";
    SimConfig cfg = desk_config();

    RunOptions mim;
    RunOptions sim;
    sim.mode = SimMode::Simdram;

    ProgramRunner m(cfg, mim);
    m.add_app(compile(kernel), "k");
    RunStats ms = m.run();

    SimConfig scfg = cfg;
    scfg.control.engines = 1;
    ProgramRunner s(scfg, sim);
    s.add_app(compile(kernel), "k");
    RunStats ss = s.run();

    CHECK(ms.utilization() == 1.0);             // 512 lanes on one mat
    CHECK(ss.utilization() == 512.0 / 8192.0);  // full-width activation
    CHECK(ms.utilization() / ss.utilization() == 16.0);
    CHECK(m.read_operand(0, "C") == s.read_operand(0, "C"));
    CHECK(ss.energy > ms.energy);
}

TEST_CASE("cross-label movs execute and preserve semantics") {
    const char* kernel =
        "array A n=16 size=600\n"
        "array B n=16 size=600\n"
        "array C n=16 size=600\n"
        "array D n=16 size=600\n"
        "array E n=16 size=600\n"
        "array F n=16 size=600\n"
        "array G n=16 size=600\n"
        "for i in 0..600 { E[i] = A[i] * B[i]\n"
        "F[i] = C[i] * D[i]\n"
        "G[i] = E[i] + F[i] }\n";
    SimConfig cfg = desk_config();
    RunOptions opts;
    ProgramRunner runner(cfg, opts);
    runner.add_app(compile(kernel), "k");
    RunStats stats = runner.run();
    CHECK(stats.commands.gbmov_count + stats.commands.lcmov_count > 0);

    KernelIr ir = parse_kernel(kernel);
    ScalarEnv in;
    for (const char* name : {"A", "B", "C", "D"})
        in.arrays[name] = runner.read_operand(0, name);
    ScalarEnv expect = interpret_kernel(ir, in);
    CHECK(runner.read_operand(0, "G") == expect.arrays["G"]);
}

TEST_CASE("reduction kernels fold to the scalar result") {
    const char* kernel =
        "array A n=32 size=1000\n"
        "array B n=32 size=1000\n"
        "scalar s n=32\n"
        "for i in 0..1000 { s += A[i] * B[i] }\n";
    SimConfig cfg = desk_config();
    RunOptions opts;
    ProgramRunner runner(cfg, opts);
    runner.add_app(compile(kernel), "dot");
    runner.run();

    KernelIr ir = parse_kernel(kernel);
    ScalarEnv in;
    in.arrays["A"] = runner.read_operand(0, "A");
    in.arrays["B"] = runner.read_operand(0, "B");
    ScalarEnv expect = interpret_kernel(ir, in);

    // the in-module tree leaves four partials; the host folds them
    auto four = runner.read_operand(0, "s");
    REQUIRE(four.size() == 4);
    uint64_t total = 0;
    for (uint64_t v : four) total = (total + v) & 0xFFFFFFFFull;
    CHECK(total == expect.arrays["s"][0]);
}

TEST_CASE("division poisons zero-divisor lanes and saturates") {
    const char* kernel =
        "array A n=16 size=100\n"
        "array B n=16 size=100\n"
        "array C n=16 size=100\n"
        "for i in 0..100 { C[i] = A[i] / B[i] }\n";
    SimConfig cfg = desk_config();
    RunOptions opts;
    ProgramRunner runner(cfg, opts);
    runner.add_app(compile(kernel), "div");
    std::vector<uint64_t> divisors(100, 7);
    divisors[13] = 0;
    divisors[77] = 0;
    runner.set_input(0, "B", divisors);
    runner.run();
    auto out = runner.read_operand(0, "C");
    auto poison = runner.poison_of(0, "C");
    CHECK(out[13] == 0xFFFF);
    CHECK(poison[13]);
    CHECK(poison[77]);
    CHECK_FALSE(poison[12]);
}

TEST_CASE("reports have the pinned layout") {
    RunStats s;
    s.app = "k";
    s.mode = "mimdram";
    s.wall_time = 10.5;
    s.energy = 3.25;
    s.commands.aap_count = 7;
    std::string csv = emit_report({s}, ReportFormat::Csv);
    CHECK(csv.find("app,mode,wall_time,energy,utilization,aap,ap,gbmov,lcmov\n") == 0);
    CHECK(csv.find("k,mimdram,10.5,3.25,0,7,0,0,0\n") != std::string::npos);

    std::string json = emit_report({s}, ReportFormat::Json);
    CHECK(json.find("\"app\": \"k\"") != std::string::npos);
    CHECK(json.find("\"wall_time\": 10.5") != std::string::npos);
}

TEST_CASE("mix metrics: degenerate cases") {
    SimConfig cfg;
    cfg.geometry.chips = 8;

    const char* small =
        "array A n=16 size=512\n"
        "array C n=16 size=512\n"
        "for i in 0..512 { C[i] = A[i] + 1 }\n";

    SUBCASE("a single-app mix scores 1 everywhere") {
        MixSpec mix;
        mix.app_names = {"a"};
        mix.apps = {compile(small)};
        mix.vf_class = "low_vf";
        MixResult r = run_mix(cfg, mix, SystemConfig{SimMode::Mimdram, 1});
        CHECK(r.weighted_speedup == 1.0);
        CHECK(r.harmonic_speedup == 1.0);
        CHECK(r.max_slowdown == 1.0);
    }

    SUBCASE("disjoint identical apps overlap perfectly") {
        MixSpec mix;
        mix.vf_class = "low_vf";
        for (int i = 0; i < 4; ++i) {
            mix.app_names.push_back("a" + std::to_string(i));
            mix.apps.push_back(compile(small));
        }
        MixResult r = run_mix(cfg, mix, SystemConfig{SimMode::Mimdram, 1});
        CHECK(r.weighted_speedup == 4.0);
        CHECK(r.max_slowdown == 1.0);
    }
}

TEST_CASE("mix classification thresholds") {
    CHECK(MixSpec::classify({100, 8000, 12}) == "low_vf");
    CHECK(MixSpec::classify({100, 16384}) == "medium_vf");
    CHECK(MixSpec::classify({100, 65535}) == "medium_vf");
    CHECK(MixSpec::classify({100, 65536}) == "high_vf");
}

}  // TEST_SUITE
