#include <chrono>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "treeshift/cli.hpp"

int main(int argc, char** argv) {
    using treeshift::cli::Options;
    CLI::App app{"Weighted backward shifts on trees: constants, flows, dynamics and capacities"};
    app.require_subcommand(1);
    Options o;
    std::string out_file;
    bool timing = false;
    bool machine = false;

    auto common = [&](CLI::App* sub) {
        sub->add_option("file", o.file, "tree document (JSON)")->required();
        sub->add_option("--depth-budget", o.depth_budget, "truncation depth")->capture_default_str();
        sub->add_option("--tol", o.tol, "tolerance")->capture_default_str();
        sub->add_option("--budget", o.vertex_budget, "vertex expansion budget")->capture_default_str();
        sub->add_option("--nmax", o.nmax, "largest period N for derived-tree sweeps")->capture_default_str();
        sub->add_option("--threads", o.threads, "worker threads")->capture_default_str();
        sub->add_flag("--operator-weight", o.operator_weight, "require operator weights lambda in the document");
        sub->add_flag("--space-weight", o.space_weight, "require space weights mu in the document");
        sub->add_option("--out", out_file, "write the machine-readable report to this file");
        sub->add_flag("--json", machine, "print the machine-readable report instead of the table");
        sub->add_flag("--timing", timing, "print wall time to stderr");
    };
    auto* validate = app.add_subcommand("validate", "parse and summarize a tree document");
    common(validate);
    auto* constants = app.add_subcommand("constants", "continued fraction c_p and resistance r_p");
    common(constants);
    constants->add_option("--p", o.p, "exponent p in [1, inf]")->capture_default_str();
    constants->add_option("--vertex", o.vertex, "vertex v (subtree V(v))");
    auto* classify = app.add_subcommand("classify", "chaos, mixing and hypercyclicity of the backward shift");
    common(classify);
    classify->add_option("--space", o.space, "lp or c0")->capture_default_str();
    classify->add_option("--p", o.p, "exponent p of l^p")->capture_default_str();
    auto* flow = app.add_subcommand("flow", "minimal-energy backward-invariant unit flow");
    common(flow);
    flow->add_option("--p", o.p, "exponent p in [1, inf]")->capture_default_str();
    flow->add_option("--vertex", o.vertex, "vertex carrying the value 1");
    flow->add_option("--steps", o.table_depth, "generations listed in the table")->capture_default_str();
    auto* capacity = app.add_subcommand("capacity", "boundary capacity and equilibrium flow");
    common(capacity);
    capacity->add_option("--q", o.q, "capacity order q in (1, inf)")->capture_default_str();
    capacity->add_option("--vertex", o.vertex, "basepoint");
    auto* orbit = app.add_subcommand("orbit", "orbit of a finitely supported vector");
    common(orbit);
    orbit->add_option("--init", o.init, "vertex=value entries separated by ';'")->required();
    orbit->add_option("--steps", o.steps, "number of shift steps")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }
    o.command = app.get_subcommands().front()->get_name();
    std::vector<std::string> args(argv + 1, argv + argc);

    auto start = std::chrono::steady_clock::now();
    auto res = treeshift::cli::run(o, args);
    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (res.exit_code != 0) {
        std::cerr << res.text;
        return res.exit_code;
    }
    const std::string dump = res.report.dump(2) + "\n";
    if (!out_file.empty()) {
        std::ofstream f(out_file, std::ios::binary);
        if (!f) {
            std::cerr << "error: cannot write " << out_file << "\n";
            return 1;
        }
        f << dump;
    }
    std::cout << (machine ? dump : res.text);
    if (timing) std::cerr << "wall time: " << elapsed << " s\n";
    return 0;
}
