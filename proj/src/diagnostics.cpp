#include "flad/diagnostics.hpp"

#include "flad/errors.hpp"
#include "flad/format.hpp"
#include "flad/rng.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>

namespace flad {
namespace {

void orthogonalize(Eigen::VectorXd& v, const std::vector<ParamVector>& basis) {
  for (const auto& u : basis) v -= u.values().dot(v) * u.values();
}

// Runs body(i) for i in [0, n) under OpenMP and rethrows the first failure.
template <class Body>
void parallel_indexed(std::size_t n, Body body) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write", path);
  return out;
}

}  // namespace

SpectrumReport top_eigenpairs(const LossOracle& oracle, const ParamVector& w, const Batch& batch,
                              const PowerIterationOptions& opts) {
  if (opts.k < 1) throw ConfigError("top_eigenpairs: k must be >= 1");
  if (opts.k > w.size()) throw ConfigError("top_eigenpairs: k exceeds the parameter count");
  if (opts.iters < 1) throw ConfigError("top_eigenpairs: iters must be >= 1");

  std::vector<ParamVector> found;
  std::vector<int> iterations;
  const auto n = static_cast<Eigen::Index>(w.size());

  for (std::size_t j = 0; j < opts.k; ++j) {
    auto rng = make_rng(opts.seed, "power-start", j);
    Eigen::VectorXd v = gaussian_vector(rng, n);
    orthogonalize(v, found);
    v.normalize();
    int it = 0;
    for (it = 1; it <= opts.iters; ++it) {
      Eigen::VectorXd hv = oracle.hvp(w, batch, ParamVector::with_layout(w, v)).values();
      if (!hv.allFinite()) throw NumericalError("Hessian-vector product", "power iteration");
      orthogonalize(hv, found);
      const double lambda = v.dot(hv);
      if ((hv - lambda * v).norm() < opts.tol * (std::abs(lambda) + 1.0)) break;
      const double len = hv.norm();
      if (len == 0.0) break;
      v = hv / len;
      orthogonalize(v, found);
      v.normalize();
    }
    iterations.push_back(std::min(it, opts.iters));
    found.push_back(ParamVector::with_layout(w, v));
  }

  // Rayleigh-Ritz over the deflated basis removes the coupling between pairs
  const auto k = static_cast<Eigen::Index>(opts.k);
  Eigen::MatrixXd basis(n, k), hbasis(n, k);
  for (Eigen::Index j = 0; j < k; ++j) basis.col(j) = found[static_cast<std::size_t>(j)].values();
  parallel_indexed(opts.k, [&](std::size_t j) {
    hbasis.col(static_cast<Eigen::Index>(j)) = oracle.hvp(w, batch, found[j]).values();
  });
  if (!hbasis.allFinite()) throw NumericalError("Hessian-vector product", "power iteration");
  const Eigen::MatrixXd t = basis.transpose() * hbasis;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz(0.5 * (t + t.transpose()));
  const Eigen::MatrixXd vecs = basis * ritz.eigenvectors();
  const Eigen::MatrixXd hvecs = hbasis * ritz.eigenvectors();

  SpectrumReport report;
  for (Eigen::Index j = k; j-- > 0;) {
    const double lambda = ritz.eigenvalues()[j];
    const double residual = (hvecs.col(j) - lambda * vecs.col(j)).norm();
    report.top_eigenvalues.push_back(lambda);
    report.top_eigenvectors.push_back(ParamVector::with_layout(w, vecs.col(j).normalized()));
    report.residuals.push_back(residual);
    report.converged.push_back(residual < opts.tol * (std::abs(lambda) + 1.0));
    // pair with the power run that found the dominant component of this vector
    Eigen::Index src = 0;
    ritz.eigenvectors().col(j).cwiseAbs().maxCoeff(&src);
    report.iterations.push_back(iterations[static_cast<std::size_t>(src)]);
  }
  return report;
}

TraceEstimate hutchinson_trace(const LossOracle& oracle, const ParamVector& w, const Batch& batch, int samples,
                               std::uint64_t seed) {
  if (samples < 1) throw ConfigError("hutchinson_trace: samples must be >= 1");
  std::vector<double> quad(static_cast<std::size_t>(samples));
  parallel_indexed(quad.size(), [&](std::size_t i) {
    auto rng = make_rng(seed, "hutchinson", i);
    const ParamVector z = ParamVector::with_layout(w, rademacher_vector(rng, static_cast<Eigen::Index>(w.size())));
    const ParamVector hz = oracle.hvp(w, batch, z);
    if (!hz.all_finite()) throw NumericalError("Hessian-vector product", "Hutchinson probe");
    quad[i] = dot(z, hz);
  });
  TraceEstimate est;
  est.samples = samples;
  est.mean = std::accumulate(quad.begin(), quad.end(), 0.0) / samples;
  if (samples > 1) {
    double ss = 0.0;
    for (double q : quad) ss += (q - est.mean) * (q - est.mean);
    est.std_error = std::sqrt(ss / (samples - 1)) / std::sqrt(static_cast<double>(samples));
  }
  return est;
}

double tr_h_sigma_projected(const std::vector<double>& eigenvalues, const std::vector<ParamVector>& eigenvectors,
                            const std::vector<ParamVector>& gradients) {
  if (eigenvalues.empty()) throw ConfigError("tr_h_sigma: need k >= 1 eigenpairs");
  if (eigenvalues.size() != eigenvectors.size()) throw DimensionError("tr_h_sigma: eigenpair count mismatch");
  if (gradients.size() < 2) throw ConfigError("tr_h_sigma: variance needs at least 2 batches");
  const auto b = static_cast<double>(gradients.size());
  double total = 0.0;
  for (std::size_t j = 0; j < eigenvalues.size(); ++j) {
    std::vector<double> proj;
    proj.reserve(gradients.size());
    for (const auto& g : gradients) proj.push_back(dot(g, eigenvectors[j]));
    // shifted by the first value so identical projections give exactly 0
    double sum = 0.0, sq = 0.0;
    for (double p : proj) {
      sum += p - proj.front();
      sq += (p - proj.front()) * (p - proj.front());
    }
    total += eigenvalues[j] * std::max(0.0, sq - sum * sum / b) / (b - 1.0);
  }
  return total;
}

Batch pool_batches(const std::vector<Batch>& batches) {
  if (batches.empty()) throw ConfigError("pool_batches: no batches");
  Eigen::Index rows = 0;
  for (const auto& b : batches) {
    if (b.inputs.cols() != batches.front().inputs.cols()) throw DimensionError("pool_batches: widths differ");
    rows += b.inputs.rows();
  }
  Batch out;
  out.inputs.resize(rows, batches.front().inputs.cols());
  Eigen::Index at = 0;
  for (const auto& b : batches) {
    out.inputs.middleRows(at, b.inputs.rows()) = b.inputs;
    at += b.inputs.rows();
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  }
  return out;
}

double tr_h_sigma(const LossOracle& oracle, const ParamVector& w, const std::vector<Batch>& batches, std::size_t k,
                  std::uint64_t seed, int iters, double tol) {
  if (k < 1) throw ConfigError("tr_h_sigma: need k >= 1 eigenpairs");
  if (batches.size() < 2) throw ConfigError("tr_h_sigma: variance needs at least 2 batches");
  const auto spectrum = top_eigenpairs(oracle, w, pool_batches(batches), {k, iters, tol, seed});
  std::vector<ParamVector> grads(batches.size());
  parallel_indexed(batches.size(), [&](std::size_t i) { grads[i] = oracle.grad(w, batches[i]); });
  return tr_h_sigma_projected(spectrum.top_eigenvalues, spectrum.top_eigenvectors, grads);
}

std::vector<double> linspace(double lo, double hi, std::size_t points) {
  if (points < 2) throw ConfigError("linspace: need at least 2 points");
  std::vector<double> out(points);
  for (std::size_t i = 0; i < points; ++i) {
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  // symmetric grids hit 0 exactly
  if (lo == -hi && points % 2 == 1) out[points / 2] = 0.0;
  return out;
}

LandscapeSlice landscape_slice(const LossOracle& oracle, const ParamVector& w,
                               const std::vector<ParamVector>& directions, const std::vector<double>& grid,
                               double scale, const Batch& batch) {
  if (directions.empty() || directions.size() > 2) throw ConfigError("landscape_slice: need 1 or 2 directions");
  if (grid.empty()) throw ConfigError("landscape_slice: empty grid");
  for (const auto& d : directions) {
    require_same_size(w, d, "landscape_slice");
    if (std::abs(norm(d) - 1.0) > 1e-8) throw ConfigError("landscape_slice: directions must be unit vectors");
  }
  LandscapeSlice s;
  s.directions = directions;
  s.alphas = grid;
  if (directions.size() == 2) s.betas = grid;
  s.scale = scale;
  const std::size_t nb = s.two_d() ? s.betas.size() : 1;
  s.losses.assign(s.alphas.size() * nb, std::nullopt);
  parallel_indexed(s.losses.size(), [&](std::size_t idx) {
    const double a = s.alphas[idx / nb];
    const double b = s.two_d() ? s.betas[idx % nb] : 0.0;
    double value = 0.0;
    if (a == 0.0 && b == 0.0) {
      value = oracle.loss(w, batch);
    } else {
      Eigen::VectorXd p = w.values() + (a * scale) * directions[0].values();
      if (s.two_d()) p += (b * scale) * directions[1].values();
      value = oracle.loss(ParamVector::with_layout(w, std::move(p)), batch);
    }
    if (std::isfinite(value)) s.losses[idx] = value;
  });
  s.missing = static_cast<std::size_t>(std::count(s.losses.begin(), s.losses.end(), std::nullopt));
  return s;
}

ParamVector random_direction(const ParamVector& w, std::uint64_t seed, bool per_span_normalize) {
  auto rng = make_rng(seed, "slice-direction");
  ParamVector d = ParamVector::with_layout(w, gaussian_vector(rng, static_cast<Eigen::Index>(w.size())));
  if (per_span_normalize) {
    for (const auto& span : w.layout()) {
      auto seg = d.segment(span);
      const double target = w.segment(span).norm();
      const double len = seg.norm();
      if (len > 0.0) seg *= target / len;
    }
  }
  const double len = norm(d);
  if (len > 0.0) d *= 1.0 / len;
  return d;
}

void write_spectrum_csv(const SpectrumReport& r, const std::string& path) {
  auto out = open_out(path);
  out << "kind,index,value\n";
  for (std::size_t i = 0; i < r.top_eigenvalues.size(); ++i) {
    out << "eigenvalue," << i << ',' << format_double(r.top_eigenvalues[i]) << '\n';
    out << "residual," << i << ',' << format_double(r.residuals[i]) << '\n';
    out << "converged," << i << ',' << (r.converged[i] ? 1 : 0) << '\n';
  }
  out << "trace,," << format_double(r.trace_estimate) << '\n';
  out << "trace_stderr,," << format_double(r.trace_stderr) << '\n';
  out << "hutchinson_samples,," << r.hutchinson_samples << '\n';
  out << "tr_h_sigma,," << format_double(r.tr_h_sigma) << '\n';
}

void write_slice_csv(const LandscapeSlice& s, const std::string& path) {
  auto out = open_out(path);
  if (s.two_d()) {
    out << "alpha,beta,loss\n";
    for (std::size_t i = 0; i < s.alphas.size(); ++i) {
      for (std::size_t j = 0; j < s.betas.size(); ++j) {
        const auto v = s.at(i, j);
        out << format_double(s.alphas[i]) << ',' << format_double(s.betas[j]) << ',' << (v ? format_double(*v) : "")
            << '\n';
      }
    }
  } else {
    out << "alpha,loss\n";
    for (std::size_t i = 0; i < s.alphas.size(); ++i) {
      const auto v = s.at(i);
      out << format_double(s.alphas[i]) << ',' << (v ? format_double(*v) : "") << '\n';
    }
  }
}

namespace {

std::string color_for(double t) {
  // blue -> teal -> yellow ramp
  t = std::clamp(t, 0.0, 1.0);
  const double r = t < 0.5 ? 40 + 2 * t * 20 : 60 + (t - 0.5) * 2 * 193;
  const double g = 40 + t * 190;
  const double b = t < 0.5 ? 130 + 2 * t * 20 : 150 - (t - 0.5) * 2 * 110;
  std::ostringstream os;
  os << "rgb(" << static_cast<int>(r) << ',' << static_cast<int>(g) << ',' << static_cast<int>(b) << ')';
  return os.str();
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
};

Range loss_range(const LandscapeSlice& s) {
  Range r;
  for (const auto& v : s.losses) {
    if (!v) continue;
    r.lo = std::min(r.lo, *v);
    r.hi = std::max(r.hi, *v);
  }
  if (!(r.hi > r.lo)) r.hi = r.lo + 1.0;
  return r;
}

}  // namespace

void write_slice_svg(const LandscapeSlice& s, const std::string& path, const std::string& title) {
  auto out = open_out(path);
  constexpr double W = 480, H = 400, M = 50;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
      << title << "</text>\n";
  const Range r = loss_range(s);
  const double a0 = s.alphas.front(), a1 = s.alphas.back();
  const double pw = W - 2 * M, ph = H - 2 * M;
  auto px = [&](double a) { return M + (a - a0) / (a1 - a0) * pw; };

  if (!s.two_d()) {
    auto py = [&](double v) { return H - M - (v - r.lo) / (r.hi - r.lo) * ph; };
    out << "<polyline fill=\"none\" stroke=\"rgb(30,90,160)\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.alphas.size(); ++i) {
      if (const auto v = s.at(i)) out << px(s.alphas[i]) << ',' << py(*v) << ' ';
    }
    out << "\"/>\n";
    out << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M << "\" y2=\"" << H - M
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << M << "\" y1=\"" << M << "\" x2=\"" << M << "\" y2=\"" << H - M << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << M << "\" y=\"" << H - M + 18 << "\" font-size=\"11\" font-family=\"sans-serif\">"
        << format_double(a0) << "</text>\n";
    out << "<text x=\"" << W - M << "\" y=\"" << H - M + 18
        << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << format_double(a1) << "</text>\n";
    out << "<text x=\"" << M - 4 << "\" y=\"" << M << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">"
        << format_double(r.hi) << "</text>\n";
    out << "<text x=\"" << M - 4 << "\" y=\"" << H - M
        << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << format_double(r.lo) << "</text>\n";
  } else {
    const std::size_t na = s.alphas.size(), nb = s.betas.size();
    const double b0 = s.betas.front(), b1 = s.betas.back();
    auto py = [&](double b) { return H - M - (b - b0) / (b1 - b0) * ph; };
    const double cw = pw / static_cast<double>(na), ch = ph / static_cast<double>(nb);
    for (std::size_t i = 0; i < na; ++i) {
      for (std::size_t j = 0; j < nb; ++j) {
        const auto v = s.at(i, j);
        const double x = M + static_cast<double>(i) * cw;
        const double y = H - M - static_cast<double>(j + 1) * ch;
        out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cw + 0.5 << "\" height=\"" << ch + 0.5
            << "\" fill=\"" << (v ? color_for((*v - r.lo) / (r.hi - r.lo)) : "rgb(200,200,200)") << "\"/>\n";
      }
    }
    // Iso-loss contours by marching squares over the cell centres.
    auto value = [&](std::size_t i, std::size_t j) { return s.at(i, j).value_or(r.hi); };
    constexpr int kLevels = 8;
    for (int lv = 1; lv <= kLevels; ++lv) {
      const double level = r.lo + (r.hi - r.lo) * (static_cast<double>(lv) / (kLevels + 1)) *
                                      (static_cast<double>(lv) / (kLevels + 1));
      out << "<path fill=\"none\" stroke=\"white\" stroke-opacity=\"0.7\" stroke-width=\"1\" d=\"";
      for (std::size_t i = 0; i + 1 < na; ++i) {
        for (std::size_t j = 0; j + 1 < nb; ++j) {
          const double v[4] = {value(i, j), value(i + 1, j), value(i + 1, j + 1), value(i, j + 1)};
          const double xs[4] = {px(s.alphas[i]), px(s.alphas[i + 1]), px(s.alphas[i + 1]), px(s.alphas[i])};
          const double ys[4] = {py(s.betas[j]), py(s.betas[j]), py(s.betas[j + 1]), py(s.betas[j + 1])};
          std::vector<std::pair<double, double>> pts;
          for (int e = 0; e < 4; ++e) {
            const int f = (e + 1) % 4;
            if ((v[e] < level) != (v[f] < level)) {
              const double t = (level - v[e]) / (v[f] - v[e]);
              pts.emplace_back(xs[e] + t * (xs[f] - xs[e]), ys[e] + t * (ys[f] - ys[e]));
            }
          }
          for (std::size_t q = 0; q + 1 < pts.size(); q += 2) {
            out << 'M' << pts[q].first << ',' << pts[q].second << 'L' << pts[q + 1].first << ',' << pts[q + 1].second
                << ' ';
          }
        }
      }
      out << "\"/>\n";
    }
    out << "<text x=\"" << W / 2 << "\" y=\"" << H - M + 20
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">alpha [" << format_double(a0) << ", "
        << format_double(a1) << "], loss [" << format_double(r.lo) << ", " << format_double(r.hi) << "]</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace flad
