#include "flad/config.hpp"
#include "flad/diagnostics.hpp"
#include "flad/errors.hpp"
#include "flad/experiment.hpp"
#include "flad/format.hpp"
#include "flad/record.hpp"
#include "flad/verify.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace flad;

namespace {

std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char ch : v) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kNumerical = 2;
constexpr int kCheckFailed = 3;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "TOML config file (defaults apply when omitted)");
  cmd->add_option("--set", c.overrides, "section.key=value override, repeatable");
  cmd->add_option("--out", c.out, "output directory (overrides run.output_dir)");
  cmd->add_option("--seed", c.seed, "single seed replacing run.seeds");
  cmd->add_option("--jobs", c.jobs, "concurrent runs")->check(CLI::PositiveNumber);
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  cfg = apply_overrides(cfg, c.overrides);
  if (c.seed) cfg.run.seeds = {*c.seed};
  if (!c.out.empty()) cfg.run.output_dir = c.out;
  cfg.validate();
  return cfg;
}

/// Runs task(i) for i in [0, n) on up to `jobs` threads; first exception wins.
void run_pool(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < std::min(jobs, n); ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

std::string seed_dir(const std::string& root, std::uint64_t seed) {
  return (fs::path(root) / ("seed_" + std::to_string(seed))).string();
}

std::string fixed(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
  return buf;
}

std::vector<ContinualRun> run_seeds(const RunConfig& cfg, std::size_t jobs) {
  std::vector<ContinualRun> runs(cfg.run.seeds.size());
  run_pool(runs.size(), jobs, [&](std::size_t i) {
    runs[i] = run_continual(cfg, cfg.run.seeds[i]);
    persist_run(runs[i].record, seed_dir(cfg.run.output_dir, cfg.run.seeds[i]));
  });
  return runs;
}

void print_seed_table(const std::vector<ContinualRun>& runs) {
  std::vector<double> accs, aaas, walls;
  std::printf("%-8s %-8s %-8s %-10s %-10s\n", "seed", "Acc", "AAA", "steps", "wall_s");
  for (const auto& r : runs) {
    std::size_t steps = 0;
    double wall = 0.0;
    for (const auto& p : r.record.phases) {
      steps += p.steps;
      wall += p.wall_seconds;
    }
    std::printf("%-8llu %-8s %-8s %-10zu %-10s\n", static_cast<unsigned long long>(r.record.seed),
                fixed(r.record.acc).c_str(), fixed(r.record.aaa).c_str(), steps, fixed(wall, 2).c_str());
    accs.push_back(r.record.acc);
    aaas.push_back(r.record.aaa);
    walls.push_back(wall);
  }
  std::printf("%-8s %s +- %s  %s +- %s\n", "mean", fixed(mean(accs)).c_str(), fixed(stddev(accs)).c_str(),
              fixed(mean(aaas)).c_str(), fixed(stddev(aaas)).c_str());
}

int cmd_continual(const Common& c) {
  const RunConfig cfg = resolve(c);
  const auto runs = run_seeds(cfg, c.jobs);
  std::printf("optimizer %s, %zu phases x %zu classes\n", to_string(cfg.optimizer.kind).c_str(), cfg.stream.phases,
              cfg.stream.classes_per_phase);
  print_seed_table(runs);
  return kOk;
}

int cmd_train(const Common& c) {
  RunConfig cfg = resolve(c);
  // one phase over every class: plain supervised training
  const DatasetSplit data = generate_dataset(cfg.dataset);
  cfg.stream.phases = 1;
  cfg.stream.classes_per_phase = data.train.num_classes;
  cfg.validate();
  const auto runs = run_seeds(cfg, c.jobs);
  std::printf("optimizer %s, single task over %zu classes\n", to_string(cfg.optimizer.kind).c_str(),
              cfg.stream.classes_per_phase);
  std::printf("%-8s %-10s %-12s %-10s\n", "seed", "test_acc", "train_loss", "train_acc");
  std::vector<double> accs;
  for (const auto& r : runs) {
    const auto& last = r.record.epochs.back().back();
    std::printf("%-8llu %-10s %-12s %-10s\n", static_cast<unsigned long long>(r.record.seed),
                fixed(r.record.acc).c_str(), fixed(last.train_loss, 6).c_str(), fixed(last.train_accuracy).c_str());
    accs.push_back(r.record.acc);
  }
  std::printf("%-8s %s +- %s\n", "mean", fixed(mean(accs)).c_str(), fixed(stddev(accs)).c_str());
  return kOk;
}

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

GridAxis parse_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--grid " + text + ": expected section.key=v1,v2,...");
  GridAxis axis{text.substr(0, eq), {}};
  // split on commas outside brackets so array values survive
  std::string v;
  int depth = 0;
  for (char ch : text.substr(eq + 1) + ",") {
    if (ch == '[') ++depth;
    if (ch == ']') --depth;
    if (ch == ',' && depth == 0) {
      if (v.empty()) throw ConfigError("--grid " + text + ": empty value");
      axis.values.push_back(v);
      v.clear();
    } else {
      v += ch;
    }
  }
  if (axis.values.empty()) throw ConfigError("--grid " + text + ": no values");
  return axis;
}

int cmd_sweep(const Common& c, const std::vector<std::string>& grid) {
  const RunConfig base = resolve(c);
  std::vector<GridAxis> axes;
  for (const auto& g : grid) axes.push_back(parse_axis(g));
  if (axes.empty()) throw ConfigError("sweep: need at least one --grid axis");

  // cartesian product, last axis fastest
  std::vector<std::vector<std::string>> points{{}};
  for (const auto& axis : axes) {
    std::vector<std::vector<std::string>> next;
    for (const auto& p : points) {
      for (const auto& v : axis.values) {
        auto q = p;
        q.push_back(axis.key + "=" + v);
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }
  std::vector<RunConfig> configs;
  for (std::size_t i = 0; i < points.size(); ++i) {
    RunConfig cfg = apply_overrides(base, points[i]);
    cfg.run.output_dir = (fs::path(base.run.output_dir) / ("point_" + std::to_string(i))).string();
    configs.push_back(std::move(cfg));
  }
  struct Job {
    std::size_t point;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    for (auto s : configs[i].run.seeds) jobs.push_back({i, s});
  }
  std::vector<RunRecord> records(jobs.size());
  run_pool(jobs.size(), c.jobs, [&](std::size_t j) {
    const auto& cfg = configs[jobs[j].point];
    records[j] = run_continual(cfg, jobs[j].seed).record;
    persist_run(records[j], seed_dir(cfg.run.output_dir, jobs[j].seed));
  });

  fs::create_directories(base.run.output_dir);
  const auto csv_path = fs::path(base.run.output_dir) / "sweep.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write", csv_path.string());
  csv << "point";
  for (const auto& axis : axes) csv << ',' << axis.key;
  csv << ",seed,acc,aaa\n";
  std::printf("%-6s", "point");
  for (const auto& axis : axes) std::printf(" %-22s", axis.key.c_str());
  std::printf(" %-18s %-18s\n", "Acc", "AAA");
  for (std::size_t i = 0; i < configs.size(); ++i) {
    std::vector<double> accs, aaas;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      if (jobs[j].point != i) continue;
      csv << i;
      for (const auto& kv : points[i]) csv << ',' << csv_field(kv.substr(kv.find('=') + 1));
      csv << ',' << jobs[j].seed << ',' << format_double(records[j].acc) << ',' << format_double(records[j].aaa)
          << '\n';
      accs.push_back(records[j].acc);
      aaas.push_back(records[j].aaa);
    }
    std::printf("%-6zu", i);
    for (const auto& kv : points[i]) std::printf(" %-22s", kv.substr(kv.find('=') + 1).c_str());
    std::printf(" %-18s %-18s\n", (fixed(mean(accs)) + " +- " + fixed(stddev(accs))).c_str(),
                (fixed(mean(aaas)) + " +- " + fixed(stddev(aaas))).c_str());
  }
  return kOk;
}

int cmd_diagnose(const Common& c) {
  RunConfig cfg = resolve(c);
  cfg.diagnostics.spectrum = true;
  if (cfg.diagnostics.trhs_every == 0) cfg.diagnostics.trhs_every = 1;
  const auto runs = run_seeds(cfg, c.jobs);
  std::printf("%-8s %-6s %-12s %-12s %-12s %-12s\n", "seed", "phase", "lambda_max", "trace", "trace_se", "tr_h_sigma");
  for (const auto& r : runs) {
    for (const auto& s : r.record.spectra) {
      std::printf("%-8llu %-6zu %-12s %-12s %-12s %-12s\n", static_cast<unsigned long long>(r.record.seed), s.phase,
                  fixed(s.eigenvalues.front(), 6).c_str(), fixed(s.trace, 6).c_str(),
                  fixed(s.trace_stderr, 6).c_str(), fixed(s.tr_h_sigma, 6).c_str());
    }
  }
  return kOk;
}

int cmd_landscape(const Common& c) {
  const RunConfig cfg = resolve(c);
  const auto& d = cfg.diagnostics;
  for (auto seed : cfg.run.seeds) {
    const ContinualRun run = run_continual(cfg, seed);
    const std::string dir = seed_dir(cfg.run.output_dir, seed);
    persist_run(run.record, dir);
    const LossOracle oracle = LossOracle::mlp(run.spec);
    const Batch batch = run.train.all();
    const std::size_t ndir = d.slice_2d ? 2 : 1;
    std::vector<ParamVector> dirs;
    if (d.slice_directions == "eigen") {
      dirs = top_eigenpairs(oracle, run.w, batch, {ndir, d.iters, d.tol, derive_seed(seed, "slice")}).top_eigenvectors;
    } else {
      for (std::size_t i = 0; i < ndir; ++i) dirs.push_back(random_direction(run.w, derive_seed(seed, "slice", i), true));
    }
    const auto grid = linspace(-d.slice_radius, d.slice_radius, d.slice_points);
    const auto slice = landscape_slice(oracle, run.w, dirs, grid, d.slice_scale, batch);
    const std::string tag = to_string(cfg.optimizer.kind) + "_" + d.slice_directions + (d.slice_2d ? "_2d" : "_1d");
    write_slice_csv(slice, (fs::path(dir) / ("landscape_" + tag + ".csv")).string());
    write_slice_svg(slice, (fs::path(dir) / ("landscape_" + tag + ".svg")).string(),
                    "loss around final " + to_string(cfg.optimizer.kind) + " parameters (seed " + std::to_string(seed) +
                        ")");
    const double center = slice.two_d() ? *slice.at(d.slice_points / 2, d.slice_points / 2) : *slice.at(d.slice_points / 2);
    double hi = center;
    for (const auto& v : slice.losses) {
      if (v) hi = std::max(hi, *v);
    }
    std::printf("%-8llu %-24s center %-12s max %-12s missing %zu\n", static_cast<unsigned long long>(seed),
                tag.c_str(), fixed(center, 6).c_str(), fixed(hi, 6).c_str(), slice.missing);
  }
  return kOk;
}

int cmd_verify(std::uint64_t seed) {
  const auto checks = run_oracle_suite(seed);
  for (const auto& c : checks) {
    std::printf("%-4s %-48s %-12s < %-8s %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                format_double(c.value).c_str(), format_double(c.tolerance).c_str(), c.detail.c_str());
  }
  return all_passed(checks) ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flatness-aware continual learning experiments"};
  app.set_version_flag("--version", FLAD_VERSION);
  app.require_subcommand(1);

  Common train, continual, sweep, diagnose, landscape;
  add_common(app.add_subcommand("train", "single-task training"), train);
  add_common(app.add_subcommand("continual", "class-incremental stream per seed"), continual);
  auto* sweep_cmd = app.add_subcommand("sweep", "grid over config keys");
  add_common(sweep_cmd, sweep);
  std::vector<std::string> grid;
  sweep_cmd->add_option("--grid", grid, "section.key=v1,v2,... (repeatable)")->required();
  add_common(app.add_subcommand("diagnose", "Hessian spectrum, trace and Tr(H Sigma) per phase"), diagnose);
  add_common(app.add_subcommand("landscape", "loss slices around the final parameters"), landscape);
  std::uint64_t verify_seed = 0;
  app.add_subcommand("verify-oracles", "finite-difference, dense-Hessian and hand-arithmetic checks")
      ->add_option("--seed", verify_seed, "seed for the check fixtures");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (app.got_subcommand("train")) return cmd_train(train);
    if (app.got_subcommand("continual")) return cmd_continual(continual);
    if (app.got_subcommand("sweep")) return cmd_sweep(sweep, grid);
    if (app.got_subcommand("diagnose")) return cmd_diagnose(diagnose);
    if (app.got_subcommand("landscape")) return cmd_landscape(landscape);
    if (app.got_subcommand("verify-oracles")) return cmd_verify(verify_seed);
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  }
  return kValidation;
}
