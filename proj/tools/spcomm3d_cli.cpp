// spcomm3d: sweep sparse-aware 3D SDDMM/SpMM against the Dense3D baseline.
// Exit status: 0 full sweep, 2 some configs skipped, 1 fatal.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "spcomm3d/runner.hpp"

using namespace spc3d;

int main(int argc, char** argv) {
  RunSpec spec;
  CLI::App app{"Sparsity-aware 3D SDDMM/SpMM experiment runner"};
  app.add_option("--matrix", spec.matrix_path, "Matrix Market input file");
  app.add_option("--gen", spec.generator, "Generated input: rmat:SCALE:NNZ, uniform:M:N:NNZ or dense:M:N");
  app.add_option("--grid", spec.grids, "Process grid XxYxZ (repeatable)");
  app.add_option("--procs", spec.procs, "Total ranks for --z sweeps");
  app.add_option("--z", spec.z_values, "Depth Z with --procs, most-square X x Y (repeatable)");
  app.add_option("--k", spec.k_values, "Dense width K (repeatable)");
  app.add_option("--strategy", spec.strategies, "bb, rb or nb (repeatable)")->capture_default_str();
  app.add_option("--kernel", spec.kernels, "sddmm or spmm (repeatable)")->capture_default_str();
  app.add_option("--mode", spec.mode, "sparse, dense3d or both")->capture_default_str();
  app.add_option("--iters", spec.iterations, "Iterations per run; times are medians")->capture_default_str();
  app.add_option("--seed", spec.seed, "Seed for generators, dense inputs and ownership")->capture_default_str();
  app.add_option("--out", spec.out, "Report path (default stdout)");
  app.add_option("--format", spec.format, "json or csv")->capture_default_str();
  app.add_option("--plan-dump", spec.plan_dump_path, "Write the first run's communication plans as JSON");
  app.add_option("--trace", spec.trace_path, "Write the first run's binary receive trace");
  app.add_flag("--explain", spec.explain, "Print predicted volumes and memory without running kernels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    validate(spec);
    const SparseMatrix S = load_input(spec);

    std::ofstream file;
    if (!spec.out.empty()) {
      file.open(spec.out);
      if (!file) throw UsageError("--out: cannot open '" + spec.out + "'");
    }
    std::ostream& out = spec.out.empty() ? std::cout : file;

    if (spec.explain) {
      const auto e = explain_sweep(spec, S);
      if (spec.out.empty() || spec.format == "csv")
        print_explain(std::cout, e);
      if (!spec.out.empty() && spec.format == "json") out << e.dump(2) << "\n";
      return 0;
    }

    const auto outcome = run_sweep(spec, S);
    if (spec.format == "csv")
      write_report_csv(out, outcome.report);
    else
      out << outcome.report.dump(2) << "\n";
    for (const auto& rec : outcome.report.at("records"))
      if (rec.at("status") == "skipped")
        std::cerr << "skipped " << rec.at("config").at("grid_spec").get<std::string>() << " K=" << rec.at("config").at("K")
                  << ": " << rec.at("reason").get<std::string>() << "\n";
    std::cerr << outcome.completed << " configs run, " << outcome.skipped << " skipped\n";
    return outcome.skipped ? 2 : 0;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
