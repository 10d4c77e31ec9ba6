#include "flad/experiment.hpp"

#include "flad/errors.hpp"
#include "flad/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flad {

DatasetSplit generate_dataset(const DatasetConfig& cfg) {
  switch (cfg.generator) {
    case Generator::blobs: return gaussian_blobs(cfg.blobs, cfg.seed);
    case Generator::spirals: return spirals(cfg.spirals, cfg.seed);
    case Generator::csv: {
      DatasetSplit split{load_csv(cfg.train_path, cfg.num_classes), load_csv(cfg.test_path, cfg.num_classes)};
      const std::size_t k = std::max(split.train.num_classes, split.test.num_classes);
      split.train.num_classes = split.test.num_classes = k;
      if (split.train.dim() != split.test.dim()) {
        throw ConfigError("dataset: train and test CSV files have different feature counts");
      }
      return split;
    }
  }
  throw ConfigError("dataset.generator: unsupported");
}

std::vector<Batch> sample_batches(const Dataset& data, std::size_t batches, std::size_t per_batch,
                                  std::uint64_t seed) {
  if (batches == 0 || per_batch == 0) throw ConfigError("sample_batches: need positive counts");
  if (data.size() < batches) throw ConfigError("sample_batches: fewer rows than batches");
  per_batch = std::min(per_batch, data.size() / batches);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed, "trhs-batches");
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> out;
  for (std::size_t b = 0; b < batches; ++b) {
    const auto first = order.begin() + static_cast<std::ptrdiff_t>(b * per_batch);
    out.push_back(data.batch(std::vector<std::size_t>(first, first + static_cast<std::ptrdiff_t>(per_batch))));
  }
  return out;
}

SpectrumRecord measure_spectrum(const LossOracle& oracle, const ParamVector& w, const Dataset& data,
                                const DiagnosticsConfig& diag, std::size_t batch_size, std::uint64_t seed,
                                std::size_t phase) {
  Batch full = data.all();
  if (diag.spectrum_examples > 0 && diag.spectrum_examples < data.size()) {
    std::vector<std::size_t> rows(data.size());
    std::iota(rows.begin(), rows.end(), 0);
    auto rng = make_rng(seed, "spectrum-rows", phase);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(diag.spectrum_examples);
    std::sort(rows.begin(), rows.end());
    full = data.batch(rows);
  }
  const std::size_t k = std::min(diag.k, w.size());
  const auto spectrum = top_eigenpairs(oracle, w, full, {k, diag.iters, diag.tol, derive_seed(seed, "power", phase)});
  const auto trace = hutchinson_trace(oracle, w, full, diag.hutchinson_samples, derive_seed(seed, "trace", phase));

  SpectrumRecord r;
  r.phase = phase;
  r.eigenvalues = spectrum.top_eigenvalues;
  r.residuals = spectrum.residuals;
  r.converged = spectrum.converged;
  r.trace = trace.mean;
  r.trace_stderr = trace.std_error;
  r.hutchinson_samples = trace.samples;
  const std::size_t nb = std::min(diag.trhs_batches, data.size());
  if (nb >= 2) {
    const auto batches = sample_batches(data, nb, batch_size, derive_seed(seed, "trhs", phase));
    std::vector<ParamVector> grads;
    grads.reserve(batches.size());
    for (const auto& b : batches) grads.push_back(oracle.grad(w, b));
    r.tr_h_sigma = tr_h_sigma_projected(spectrum.top_eigenvalues, spectrum.top_eigenvectors, grads);
  }
  return r;
}

ContinualRun run_continual(const RunConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const DatasetSplit raw = generate_dataset(cfg.dataset);
  ContinualRun out;
  out.stream = build_stream(raw.train.num_classes, cfg.stream.phases, cfg.stream.classes_per_phase,
                            cfg.stream.class_order, cfg.dataset.seed, to_string(cfg.dataset.generator));
  out.train = out.stream.remap(raw.train);
  out.test = out.stream.remap(raw.test);

  out.spec.input_dim = out.train.dim();
  out.spec.hidden = cfg.model.hidden;
  out.spec.classes = out.stream.num_classes();
  out.spec.activation = cfg.model.activation;
  out.spec.seed = derive_seed(seed, "model");
  out.spec.validate();

  RunRecord& rec = out.record;
  rec.config = cfg;
  rec.seed = seed;
  rec.version = FLAD_VERSION;
  rec.ledger = MetricsLedger(out.stream.num_phases());

  const TrainConfig tc = cfg.train_config();
  const auto& diag = cfg.diagnostics;
  const int last_epoch = static_cast<int>(cfg.run.epochs);
  EpochHook hook;
  if (diag.spectrum || diag.trhs_every > 0) {
    hook = [&](std::size_t phase, int epoch, const ParamVector& w, const Dataset& data, const LossOracle& oracle) {
      const std::uint64_t s = derive_seed(seed, "diagnostics", phase * 100003 + static_cast<std::uint64_t>(epoch));
      if (diag.spectrum && epoch == last_epoch) {
        rec.spectra.push_back(measure_spectrum(oracle, w, data, diag, cfg.run.batch_size, s, phase));
      }
      if (diag.trhs_every > 0 && epoch % diag.trhs_every == 0) {
        const std::size_t nb = std::min(diag.trhs_batches, data.size());
        const auto batches = sample_batches(data, nb, cfg.run.batch_size, s);
        rec.trhs.push_back(TrhsPoint{phase, epoch, tr_h_sigma(oracle, w, batches, diag.k, s, diag.iters, diag.tol)});
      }
    };
  }

  ParamVector w = init_params(out.spec);
  OptimizerState state = OptimizerState::init(w, derive_seed(seed, "optimizer"));
  ReplayBuffer replay(cfg.stream.replay_capacity, derive_seed(seed, "replay"));
  for (std::size_t p = 0; p < out.stream.num_phases(); ++p) {
    PhaseResult r = run_phase(out.stream, p, out.spec, out.train, std::move(w), std::move(state), tc, replay,
                              seed, hook);
    w = std::move(r.w);
    state = std::move(r.state);
    rec.epochs.push_back(std::move(r.epochs));
    rec.phases.push_back(PhaseStats{r.steps, r.sharpness_steps, r.wall_seconds});
    rec.ledger.record(p, evaluate(out.spec, w, out.stream, out.test, p));
  }
  rec.acc = acc_final(rec.ledger);
  rec.aaa = aaa(rec.ledger);
  out.w = std::move(w);
  return out;
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace flad
