#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mimd/compiler.hpp"
#include "mimd/error.hpp"

int main(int argc, char** argv) {
    CLI::App app{"mimdc - kernel DSL to bbop assembly compiler"};

    std::string input;
    std::string output;
    int columns = 512;
    int capacity_mats = 128;
    int shards = 1;
    bool print_vf = false;

    app.add_option("kernel", input, "kernel source file (.mk)")->required();
    app.add_option("-o,--output", output, "output bbop assembly file");
    app.add_option("--cols", columns, "columns per mat (lane width of one mat)");
    app.add_option("--capacity-mats", capacity_mats, "mats available for one operation");
    app.add_option("--shards", shards, "distribute lanes over this many label groups");
    app.add_flag("--print-vf", print_vf, "print the kernel's maximum vectorization factor");

    CLI11_PARSE(app, argc, argv);

    std::ifstream in(input);
    if (!in) {
        std::cerr << "mimdc: cannot open " << input << "\n";
        return 1;
    }
    std::stringstream buf;
    buf << in.rdbuf();

    try {
        mimd::EmitOptions opts;
        opts.columns_per_mat = columns;
        opts.capacity_mats = capacity_mats;
        opts.shards = shards;
        mimd::EmitResult result = mimd::compile_kernel(buf.str(), opts);
        if (print_vf)
            std::cout << "max_vf=" << result.vf << " batches=" << result.batches << "\n";
        std::string text = mimd::format_program(result.program);
        if (output.empty()) {
            std::cout << text;
        } else {
            std::ofstream out(output);
            if (!out) {
                std::cerr << "mimdc: cannot write " << output << "\n";
                return 1;
            }
            out << text;
        }
    } catch (const mimd::Error& e) {
        std::cerr << "mimdc: " << input << ": " << e.what() << "\n";
        return 1;
    }
    return 0;
}
