#pragma once

#include "flad/config.hpp"
#include "flad/continual.hpp"
#include "flad/dataset.hpp"
#include "flad/diagnostics.hpp"
#include "flad/record.hpp"

#include <cstdint>
#include <vector>

namespace flad {

/// Train/test split for the configured generator or CSV files.
DatasetSplit generate_dataset(const DatasetConfig& cfg);

/// Everything a finished continual run leaves behind, beyond its record.
struct ContinualRun {
  RunRecord record;
  ModelSpec spec;
  TaskStream stream;
  Dataset train;  // remapped to incremental labels
  Dataset test;
  ParamVector w;  // after the last phase
};

/// Full N-phase stream for one seed. Spectra and Tr(H Sigma) series are
/// collected when the diagnostics section asks for them.
ContinualRun run_continual(const RunConfig& cfg, std::uint64_t seed);

/// `per_batch` rows per batch, drawn without replacement; the batch size
/// shrinks when the data cannot fill `batches` batches.
std::vector<Batch> sample_batches(const Dataset& data, std::size_t batches, std::size_t per_batch,
                                  std::uint64_t seed);

/// Spectrum, Hutchinson trace and Tr(H Sigma) of `w` on `data`.
SpectrumRecord measure_spectrum(const LossOracle& oracle, const ParamVector& w, const Dataset& data,
                                const DiagnosticsConfig& diag, std::size_t batch_size, std::uint64_t seed,
                                std::size_t phase);

double mean(const std::vector<double>& xs);
/// Sample standard deviation; 0 for fewer than two values.
double stddev(const std::vector<double>& xs);

}  // namespace flad
