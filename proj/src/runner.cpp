#include "spcomm3d/runner.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <new>
#include <optional>
#include <ostream>
#include <sstream>

#include "spcomm3d/analysis.hpp"

namespace spc3d {

namespace {

using nlohmann::json;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::int64_t parse_int(const std::string& text, const std::string& field) {
  std::int64_t v = 0;
  const auto* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) throw UsageError(field + ": '" + text + "' is not an integer");
  return v;
}

Kernel parse_kernel(const std::string& s) {
  if (s == "sddmm") return Kernel::sddmm;
  if (s == "spmm") return Kernel::spmm;
  throw UsageError("--kernel: unknown kernel '" + s + "' (expected sddmm or spmm)");
}

std::vector<Mode> modes_of(const std::string& mode) {
  if (mode == "sparse") return {Mode::sparse};
  if (mode == "dense3d") return {Mode::dense3d};
  if (mode == "both") return {Mode::sparse, Mode::dense3d};
  throw UsageError("--mode: unknown mode '" + mode + "' (expected sparse, dense3d or both)");
}

struct GridChoice {
  std::string label;
  std::optional<ProcGrid> grid;
  std::string reason;
  std::string detail;
};

std::vector<GridChoice> expand_grids(const RunSpec& spec) {
  std::vector<GridChoice> out;
  for (const auto& g : spec.grids) out.push_back({g, parse_grid(g), "", ""});
  for (int z : spec.z_values) {
    GridChoice c;
    c.label = "P=" + std::to_string(spec.procs) + ",Z=" + std::to_string(z);
    try {
      c.grid = make_grid(spec.procs, z);
    } catch (const ConfigError& e) {
      c.reason = "z_does_not_divide_procs";
      c.detail = e.what();
    }
    out.push_back(std::move(c));
  }
  return out;
}

json grid_json(const ProcGrid& g) { return {g.X(), g.Y(), g.Z()}; }

json config_json(const std::string& grid_label, const std::optional<ProcGrid>& g, Index K, const std::string& kernel,
                 const std::string& strategy, const RunSpec& spec) {
  json c{{"grid_spec", grid_label}, {"K", K}, {"kernel", kernel}, {"strategy", strategy},
         {"iterations", spec.iterations}, {"seed", spec.seed}};
  c["grid"] = g ? grid_json(*g) : json(nullptr);
  return c;
}

json mode_summary(const Aggregate& a, std::size_t ranks, Index K) {
  const double per_iter = a.seconds.precomm + a.seconds.compute + a.seconds.postcomm;
  auto pct = [&](double s) { return per_iter > 0.0 ? 100.0 * s / per_iter : 0.0; };
  const double avg = ranks ? static_cast<double>(a.precomm_recv_sum) / static_cast<double>(ranks) : 0.0;
  return {{"max_recv_words", a.precomm_recv_max},
          {"avg_recv_words", avg},
          {"max_recv_k_normalized", a.max_recv_k_normalized},
          {"avg_recv_k_normalized", K > 0 ? avg / static_cast<double>(K) : 0.0},
          {"postcomm_max_recv_words", a.postcomm_recv_max},
          {"postcomm_recv_words", a.postcomm_recv_sum},
          {"staging_words", a.staging_sum},
          {"dense_memory_words_sum", a.dense_store_sum},
          {"dense_memory_words_max", a.dense_store_max},
          {"median_seconds_slowest_rank",
           {{"setup", a.seconds.setup},
            {"precomm", a.seconds.precomm},
            {"compute", a.seconds.compute},
            {"postcomm", a.seconds.postcomm}}},
          {"phase_percent", {{"precomm", pct(a.seconds.precomm)}, {"compute", pct(a.seconds.compute)},
                             {"postcomm", pct(a.seconds.postcomm)}}}};
}

json summarize(const std::vector<std::pair<std::string, Aggregate>>& modes, std::size_t ranks, Index K) {
  json s = json::object();
  const Aggregate* sparse = nullptr;
  const Aggregate* dense = nullptr;
  for (const auto& [name, a] : modes) {
    s[name] = mode_summary(a, ranks, K);
    (name == "sparse" ? sparse : dense) = &a;
  }
  if (sparse && dense) {
    // Both zero means neither mode communicates: no improvement either way.
    if (sparse->precomm_recv_max > 0)
      s["improvement_ratio"] =
          static_cast<double>(dense->precomm_recv_max) / static_cast<double>(sparse->precomm_recv_max);
    else
      s["improvement_ratio"] = dense->precomm_recv_max == 0 ? json(1.0) : json(nullptr);
  }
  return s;
}

json skip_record(json config, const std::string& reason, const std::string& detail) {
  return {{"config", std::move(config)}, {"status", "skipped"}, {"reason", reason}, {"detail", detail}};
}

json rational_json(const Rational& r) { return {{"words", r.value()}, {"exact", std::to_string(r.num) + "/" + std::to_string(r.den)}}; }

bool is_square(std::int64_t n) {
  std::int64_t r = 0;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r * r == n;
}

}  // namespace

ProcGrid parse_grid(const std::string& text) {
  const auto parts = split(text, 'x');
  if (parts.size() != 3) throw UsageError("--grid: '" + text + "' is not XxYxZ");
  int d[3];
  for (int k = 0; k < 3; ++k) {
    const auto v = parse_int(parts[static_cast<std::size_t>(k)], "--grid");
    if (v < 1 || v > 4096) throw UsageError("--grid: dimension " + std::to_string(v) + " in '" + text + "' out of range");
    d[k] = static_cast<int>(v);
  }
  return ProcGrid(d[0], d[1], d[2]);
}

SparseMatrix generate_matrix(const std::string& generator, std::uint64_t seed) {
  const auto parts = split(generator, ':');
  const std::string& kind = parts.empty() ? generator : parts[0];
  auto num = [&](std::size_t k) { return parse_int(parts[k], "--gen"); };
  try {
    if (kind == "rmat" && parts.size() == 3) {
      const auto scale = num(1);
      if (scale < 1 || scale > 30) throw UsageError("--gen: rmat scale must be in [1, 30]");
      return gen_rmat(static_cast<int>(scale), num(2), seed);
    }
    if (kind == "uniform" && parts.size() == 4) return gen_uniform(num(1), num(2), num(3), seed);
    if (kind == "dense" && parts.size() == 3) return gen_dense_pattern(num(1), num(2), seed);
  } catch (const ConfigError& e) {
    throw UsageError(std::string("--gen: ") + e.what());
  }
  throw UsageError("--gen: '" + generator + "' is not rmat:SCALE:NNZ, uniform:M:N:NNZ or dense:M:N");
}

void validate(const RunSpec& spec) {
  if (spec.matrix_path.empty() == spec.generator.empty())
    throw UsageError("--matrix/--gen: exactly one matrix source is required");
  if (!spec.z_values.empty() && spec.procs < 1) throw UsageError("--z: needs --procs");
  if (spec.procs != 0 && spec.z_values.empty()) throw UsageError("--procs: needs at least one --z");
  if (spec.grids.empty() && spec.z_values.empty()) throw UsageError("--grid: empty sweep list");
  for (const auto& g : spec.grids) parse_grid(g);
  for (int z : spec.z_values)
    if (z < 1) throw UsageError("--z: " + std::to_string(z) + " must be positive");
  if (spec.k_values.empty()) throw UsageError("--k: empty sweep list");
  for (Index k : spec.k_values)
    if (k < 1) throw UsageError("--k: " + std::to_string(k) + " must be positive");
  if (spec.strategies.empty()) throw UsageError("--strategy: empty sweep list");
  for (const auto& s : spec.strategies) {
    try {
      parse_strategy(s);
    } catch (const ConfigError& e) {
      throw UsageError(std::string("--strategy: ") + e.what());
    }
  }
  if (spec.kernels.empty()) throw UsageError("--kernel: empty sweep list");
  for (const auto& k : spec.kernels) parse_kernel(k);
  modes_of(spec.mode);
  if (spec.iterations < 1) throw UsageError("--iters: must be at least 1");
  if (spec.format != "json" && spec.format != "csv") throw UsageError("--format: expected json or csv");
}

SparseMatrix load_input(const RunSpec& spec) {
  if (!spec.generator.empty()) return generate_matrix(spec.generator, spec.seed);
  return load_matrix_market(spec.matrix_path);
}

SweepOutcome run_sweep(const RunSpec& spec, const SparseMatrix& S) {
  validate(spec);
  const auto modes = modes_of(spec.mode);
  SweepOutcome out;
  json records = json::array();

  for (const auto& gc : expand_grids(spec))
    for (Index K : spec.k_values)
      for (const auto& kname : spec.kernels)
        for (const auto& sname : spec.strategies) {
          const Kernel kernel = parse_kernel(kname);
          const Strategy strategy = parse_strategy(sname);
          json cfg = config_json(gc.label, gc.grid, K, kname, to_string(strategy), spec);
          if (!gc.grid) {
            records.push_back(skip_record(cfg, gc.reason, gc.detail));
            ++out.skipped;
            continue;
          }
          const ProcGrid g = *gc.grid;
          if (K % g.Z() != 0) {
            records.push_back(skip_record(cfg, "k_not_multiple_of_z",
                                          "K=" + std::to_string(K) + " is not a multiple of Z=" + std::to_string(g.Z())));
            ++out.skipped;
            continue;
          }
          try {
            KernelConfig kc;
            kc.grid = g;
            kc.K = K;
            kc.strategy = strategy;
            kc.seed = spec.seed;
            const bool first = out.completed == 0;
            kc.transport.trace = first && !spec.trace_path.empty();
            Engine eng(S, random_dense(S.nrows(), K, spec.seed + 1), random_dense(S.ncols(), K, spec.seed + 2), kc);
            json reports = json::object();
            std::vector<std::pair<std::string, Aggregate>> aggs;
            for (Mode m : modes) {
              const auto res = eng.run(kernel, m, spec.iterations);
              reports[to_string(m)] = to_json(res.metrics);
              aggs.emplace_back(to_string(m), res.metrics.aggregate());
            }
            if (first && !spec.plan_dump_path.empty()) {
              std::ofstream f(spec.plan_dump_path);
              if (!f) throw UsageError("--plan-dump: cannot open '" + spec.plan_dump_path + "'");
              f << eng.plan_dump().dump(2) << "\n";
            }
            if (kc.transport.trace) eng.write_trace(spec.trace_path);
            records.push_back({{"config", cfg},
                               {"status", "ok"},
                               {"reports", reports},
                               {"summary", summarize(aggs, static_cast<std::size_t>(g.P()), K)}});
            ++out.completed;
          } catch (const std::bad_alloc&) {
            records.push_back(skip_record(cfg, "out_of_memory", "allocation failed"));
            ++out.skipped;
          }
        }

  out.report = {{"schema_version", kReportSchemaVersion},
                {"matrix",
                 {{"source", spec.generator.empty() ? spec.matrix_path : spec.generator},
                  {"nrows", S.nrows()},
                  {"ncols", S.ncols()},
                  {"nnz", S.nnz()}}},
                {"seed", spec.seed},
                {"iterations", spec.iterations},
                {"timing", "median over iterations within one run; slowest rank per phase"},
                {"completed", out.completed},
                {"skipped", out.skipped},
                {"records", records}};
  return out;
}

json recompute_summary(const json& record) {
  std::vector<std::pair<std::string, Aggregate>> aggs;
  std::size_t ranks = 0;
  Index K = record.at("config").at("K");
  for (const char* m : {"sparse", "dense3d"}) {
    if (!record.at("reports").contains(m)) continue;
    const auto& rep = record.at("reports").at(m);
    ranks = rep.at("ranks").size();
    aggs.emplace_back(m, aggregate_from_json(rep));
  }
  return summarize(aggs, ranks, K);
}

json explain_config(const SparseMatrix& S, const ProcGrid& grid, Index K, std::uint64_t seed) {
  const Analysis an = analyze(S, grid, K, seed);
  json hist_rows = json::array(), hist_cols = json::array();
  std::vector<Index> hr(static_cast<std::size_t>(grid.Y()) + 1, 0), hc(static_cast<std::size_t>(grid.X()) + 1, 0);
  for (const auto& f : an.lambda.rows) {
    const auto h = f.histogram();
    for (std::size_t l = 0; l < h.size(); ++l) hr[l] += h[l];
  }
  for (const auto& f : an.lambda.cols) {
    const auto h = f.histogram();
    for (std::size_t l = 0; l < h.size(); ++l) hc[l] += h[l];
  }
  json ranks = json::array();
  for (int r = 0; r < grid.P(); ++r) {
    const auto rr = static_cast<std::size_t>(r);
    const Coord c = grid.coords(r);
    ranks.push_back({{"rank", r},
                     {"coord", {c.x, c.y, c.z}},
                     {"need_rows", an.need.rows[rr].size()},
                     {"need_cols", an.need.cols[rr].size()},
                     {"owned_rows", an.owned.rows[rr]},
                     {"owned_cols", an.owned.cols[rr]},
                     {"sddmm_precomm", an.sddmm_precomm[rr]},
                     {"sddmm_postcomm", an.sddmm_postcomm[rr]},
                     {"spmm_precomm", an.spmm_precomm[rr]},
                     {"spmm_postcomm", an.spmm_postcomm[rr]},
                     {"sparse_memory", an.sparse_memory[rr]},
                     {"dense3d_precomm_sddmm", an.baseline_precomm_sddmm[rr]},
                     {"dense3d_precomm_spmm", an.baseline_precomm_spmm[rr]},
                     {"dense3d_memory", an.baseline_memory[rr]}});
  }
  auto max_of = [](const std::vector<std::int64_t>& v) { return v.empty() ? 0 : *std::max_element(v.begin(), v.end()); };
  const std::int64_t a_size = S.nrows() * K, b_size = S.ncols() * K;
  json agnostic{{"one_d", {{"volume", rational_json(agnostic_volume(AgnosticModel::one_d, a_size, b_size, grid.P()))},
                           {"memory", rational_json(agnostic_memory(AgnosticModel::one_d, a_size, b_size, grid.P()))}}}};
  if (is_square(grid.P()))
    agnostic["two_d"] = {{"volume", rational_json(agnostic_volume(AgnosticModel::two_d, a_size, b_size, grid.P()))},
                         {"memory", rational_json(agnostic_memory(AgnosticModel::two_d, a_size, b_size, grid.P()))}};
  if (is_square(grid.P() / grid.Z()))
    agnostic["three_d"] = {
        {"volume", rational_json(agnostic_volume(AgnosticModel::three_d, a_size, b_size, grid.P(), grid.Z()))},
        {"memory", rational_json(agnostic_memory(AgnosticModel::three_d, a_size, b_size, grid.P(), grid.Z()))}};
  const double sparse_max = static_cast<double>(max_of(an.sddmm_precomm));
  const double dense_max = static_cast<double>(max_of(an.baseline_precomm_sddmm));
  return {{"grid", grid_json(grid)},
          {"K", K},
          {"seed", seed},
          {"lambda_histogram", {{"rows", hr}, {"cols", hc}}},
          {"ranks", ranks},
          {"max",
           {{"sddmm_precomm", max_of(an.sddmm_precomm)},
            {"spmm_precomm", max_of(an.spmm_precomm)},
            {"dense3d_precomm_sddmm", max_of(an.baseline_precomm_sddmm)},
            {"sparse_memory", max_of(an.sparse_memory)},
            {"dense3d_memory", max_of(an.baseline_memory)}}},
          {"predicted_sddmm_improvement", sparse_max > 0 ? json(dense_max / sparse_max)
                                                         : (dense_max == 0 ? json(1.0) : json(nullptr))},
          {"agnostic", agnostic}};
}

json explain_sweep(const RunSpec& spec, const SparseMatrix& S) {
  validate(spec);
  json configs = json::array();
  for (const auto& gc : expand_grids(spec))
    for (Index K : spec.k_values) {
      if (!gc.grid) {
        configs.push_back({{"grid_spec", gc.label}, {"K", K}, {"skipped", gc.reason}, {"detail", gc.detail}});
      } else if (K % gc.grid->Z() != 0) {
        configs.push_back({{"grid_spec", gc.label}, {"K", K}, {"skipped", "k_not_multiple_of_z"}});
      } else {
        auto e = explain_config(S, *gc.grid, K, spec.seed);
        e["grid_spec"] = gc.label;
        configs.push_back(std::move(e));
      }
    }
  return {{"schema_version", kReportSchemaVersion},
          {"matrix", {{"nrows", S.nrows()}, {"ncols", S.ncols()}, {"nnz", S.nnz()}}},
          {"explain", configs}};
}

void print_explain(std::ostream& out, const json& explained) {
  const auto& m = explained.at("matrix");
  out << "matrix " << m.at("nrows") << " x " << m.at("ncols") << ", nnz " << m.at("nnz") << "\n";
  for (const auto& c : explained.at("explain")) {
    if (c.contains("skipped")) {
      out << "\n" << c.at("grid_spec").get<std::string>() << " K=" << c.at("K") << ": skipped ("
          << c.at("skipped").get<std::string>() << ")\n";
      continue;
    }
    const auto& g = c.at("grid");
    out << "\ngrid " << g[0] << "x" << g[1] << "x" << g[2] << " K=" << c.at("K") << "\n";
    out << "  lambda histogram rows: " << c.at("lambda_histogram").at("rows").dump() << "\n";
    out << "  lambda histogram cols: " << c.at("lambda_histogram").at("cols").dump() << "\n";
    out << "  rank  coord     |I|    |J|   sddmm_pre  spmm_pre  sddmm_post  memory  dense3d_pre  dense3d_mem\n";
    for (const auto& r : c.at("ranks")) {
      const auto& co = r.at("coord");
      char line[200];
      std::snprintf(line, sizeof line, "  %-5d (%d,%d,%d)  %-6lld %-6lld %-10lld %-9lld %-11lld %-7lld %-12lld %lld\n",
                    r.at("rank").get<int>(), co[0].get<int>(), co[1].get<int>(), co[2].get<int>(),
                    r.at("need_rows").get<long long>(), r.at("need_cols").get<long long>(),
                    r.at("sddmm_precomm").get<long long>(), r.at("spmm_precomm").get<long long>(),
                    r.at("sddmm_postcomm").get<long long>(), r.at("sparse_memory").get<long long>(),
                    r.at("dense3d_precomm_sddmm").get<long long>(), r.at("dense3d_memory").get<long long>());
      out << line;
    }
    out << "  agnostic: " << c.at("agnostic").dump() << "\n";
    out << "  predicted SDDMM improvement: " << c.at("predicted_sddmm_improvement").dump() << "\n";
  }
}

void write_report_csv(std::ostream& out, const json& report) {
  write_csv_header(out);
  int n = 0;
  for (const auto& rec : report.at("records")) {
    const std::string run = "cfg" + std::to_string(n++);
    const auto& cfg = rec.at("config");
    if (rec.at("status") == "skipped") {
      out << run << "," << cfg.at("kernel").get<std::string>() << ",," << cfg.at("strategy").get<std::string>() << ","
          << cfg.at("grid_spec").get<std::string>() << "," << cfg.at("K") << ",all,skip,"
          << rec.at("reason").get<std::string>() << ",1\n";
      continue;
    }
    for (const auto& [mode, rep] : rec.at("reports").items()) write_csv(out, run, report_from_json(rep));
    const auto& g = cfg.at("grid");
    const std::string prefix = run + "," + cfg.at("kernel").get<std::string>() + ",";
    const std::string tail = "," + cfg.at("strategy").get<std::string>() + "," + std::to_string(g[0].get<int>()) +
                             "x" + std::to_string(g[1].get<int>()) + "x" + std::to_string(g[2].get<int>()) + "," +
                             std::to_string(cfg.at("K").get<Index>()) + ",all,summary,";
    for (const auto& [mode, s] : rec.at("summary").items()) {
      if (!s.is_object()) {
        out << prefix << "both" << tail << mode << "," << (s.is_null() ? "" : s.dump()) << "\n";
        continue;
      }
      for (const auto& [metric, v] : s.items()) {
        if (v.is_object()) {
          for (const auto& [sub, x] : v.items()) out << prefix << mode << tail << metric << "." << sub << "," << x.dump() << "\n";
        } else {
          out << prefix << mode << tail << metric << "," << v.dump() << "\n";
        }
      }
    }
  }
}

}  // namespace spc3d
