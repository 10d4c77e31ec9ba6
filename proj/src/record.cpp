#include "flad/record.hpp"

#include "flad/errors.hpp"
#include "flad/format.hpp"

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

namespace flad {
namespace {

using nlohmann::json;

json toml_to_json(const TomlValue& v) {
  struct Visitor {
    json operator()(bool b) const { return b; }
    json operator()(std::int64_t i) const { return i; }
    json operator()(double x) const { return x; }
    json operator()(const std::string& s) const { return s; }
    json operator()(const TomlValue::Array& a) const {
      json out = json::array();
      for (const auto& item : a) out.push_back(toml_to_json(item));
      return out;
    }
  };
  return std::visit(Visitor{}, v.data);
}

TomlValue json_to_toml(const json& j) {
  if (j.is_boolean()) return TomlValue{j.get<bool>()};
  if (j.is_number_integer()) return TomlValue{j.get<std::int64_t>()};
  if (j.is_number_float()) return TomlValue{j.get<double>()};
  if (j.is_string()) return TomlValue{j.get<std::string>()};
  if (j.is_array()) {
    TomlValue::Array a;
    for (const auto& item : j) a.push_back(json_to_toml(item));
    return TomlValue{std::move(a)};
  }
  throw ConfigError("config: unsupported JSON value " + j.dump());
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write", path.string());
  out << content;
  out.close();
  if (!out) throw IoError("cannot write", path.string());
}

}  // namespace

json config_to_json(const RunConfig& cfg) {
  json out = json::object();
  for (const auto& [name, table] : config_to_toml(cfg).sections) {
    json section = json::object();
    for (const auto& [key, v] : table.entries) section[key] = toml_to_json(v);
    out[name] = section;
  }
  return out;
}

RunConfig config_from_json(const json& j) {
  TomlDocument doc;
  for (const auto& [name, section] : j.items()) {
    auto& table = doc.sections[name];
    for (const auto& [key, v] : section.items()) table.entries[key] = json_to_toml(v);
  }
  return config_from_toml(doc, "run.json");
}

json to_json(const RunRecord& r) {
  json j;
  j["version"] = r.version;
  j["seed"] = r.seed;
  j["config"] = config_to_json(r.config);
  j["ledger"] = {{"phases", r.ledger.phases()}, {"rows", r.ledger.rows()}};
  j["acc"] = r.acc;
  j["aaa"] = r.aaa;
  json epochs = json::array();
  for (const auto& phase : r.epochs) {
    json rows = json::array();
    for (const auto& e : phase) {
      rows.push_back({{"train_loss", e.train_loss},
                      {"train_accuracy", e.train_accuracy},
                      {"lr", e.lr},
                      {"rho", e.rho},
                      {"sharpness_active", e.sharpness_active}});
    }
    epochs.push_back(rows);
  }
  j["epochs"] = epochs;
  json phases = json::array();
  for (const auto& p : r.phases) {
    phases.push_back({{"steps", p.steps}, {"sharpness_steps", p.sharpness_steps}, {"wall_seconds", p.wall_seconds}});
  }
  j["phases"] = phases;
  json spectra = json::array();
  for (const auto& s : r.spectra) {
    spectra.push_back({{"phase", s.phase},
                       {"eigenvalues", s.eigenvalues},
                       {"residuals", s.residuals},
                       {"converged", s.converged},
                       {"trace", s.trace},
                       {"trace_stderr", s.trace_stderr},
                       {"hutchinson_samples", s.hutchinson_samples},
                       {"tr_h_sigma", s.tr_h_sigma}});
  }
  j["spectra"] = spectra;
  json trhs = json::array();
  for (const auto& t : r.trhs) trhs.push_back({{"phase", t.phase}, {"epoch", t.epoch}, {"value", t.value}});
  j["trhs"] = trhs;
  return j;
}

RunRecord record_from_json(const json& j) {
  try {
    RunRecord r;
    r.version = j.at("version").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config = config_from_json(j.at("config"));
    r.ledger = MetricsLedger(j.at("ledger").at("phases").get<std::size_t>());
    const auto rows = j.at("ledger").at("rows").get<std::vector<std::vector<double>>>();
    for (std::size_t p = 0; p < rows.size(); ++p) r.ledger.record(p, rows[p]);
    r.acc = j.at("acc").get<double>();
    r.aaa = j.at("aaa").get<double>();
    for (const auto& phase : j.at("epochs")) {
      std::vector<EpochLog> logs;
      for (const auto& e : phase) {
        logs.push_back(EpochLog{e.at("train_loss").get<double>(), e.at("train_accuracy").get<double>(),
                                e.at("lr").get<double>(), e.at("rho").get<double>(),
                                e.at("sharpness_active").get<bool>()});
      }
      r.epochs.push_back(std::move(logs));
    }
    for (const auto& p : j.at("phases")) {
      r.phases.push_back(PhaseStats{p.at("steps").get<std::size_t>(), p.at("sharpness_steps").get<std::size_t>(),
                                    p.at("wall_seconds").get<double>()});
    }
    for (const auto& s : j.at("spectra")) {
      SpectrumRecord sr;
      sr.phase = s.at("phase").get<std::size_t>();
      sr.eigenvalues = s.at("eigenvalues").get<std::vector<double>>();
      sr.residuals = s.at("residuals").get<std::vector<double>>();
      sr.converged = s.at("converged").get<std::vector<bool>>();
      sr.trace = s.at("trace").get<double>();
      sr.trace_stderr = s.at("trace_stderr").get<double>();
      sr.hutchinson_samples = s.at("hutchinson_samples").get<int>();
      sr.tr_h_sigma = s.at("tr_h_sigma").get<double>();
      r.spectra.push_back(std::move(sr));
    }
    for (const auto& t : j.at("trhs")) {
      r.trhs.push_back(TrhsPoint{t.at("phase").get<std::size_t>(), t.at("epoch").get<int>(), t.at("value").get<double>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run record: ") + e.what());
  }
}

RunRecord load_record(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read run record", path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return record_from_json(j);
}

DirLock::DirLock(const std::string& dir) : path_((std::filesystem::path(dir) / "run.lock").string()) {
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) throw IoError("output directory is in use by another run", dir);
    throw IoError(std::string("cannot create lock file (") + std::strerror(errno) + ")", path_);
  }
  ::close(fd);
}

DirLock::~DirLock() { ::unlink(path_.c_str()); }

std::string metrics_csv(const RunRecord& r) {
  std::ostringstream out;
  out << "kind,phase,task,value\n";
  const auto& rows = r.ledger.rows();
  for (std::size_t p = 0; p < rows.size(); ++p) {
    for (std::size_t t = 0; t < rows[p].size(); ++t) {
      out << "accuracy," << p << ',' << t << ',' << format_double(rows[p][t]) << '\n';
    }
  }
  out << "Acc,,," << format_double(r.acc) << '\n';
  out << "AAA,,," << format_double(r.aaa) << '\n';
  return out.str();
}

std::string epochs_csv(const RunRecord& r) {
  std::ostringstream out;
  out << "phase,epoch,train_loss,train_accuracy,lr,rho,sharpness_active\n";
  for (std::size_t p = 0; p < r.epochs.size(); ++p) {
    for (std::size_t e = 0; e < r.epochs[p].size(); ++e) {
      const auto& log = r.epochs[p][e];
      out << p << ',' << e + 1 << ',' << format_double(log.train_loss) << ',' << format_double(log.train_accuracy)
          << ',' << format_double(log.lr) << ',' << format_double(log.rho) << ',' << (log.sharpness_active ? 1 : 0)
          << '\n';
    }
  }
  return out.str();
}

std::string persist_run(const RunRecord& r, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory", dir);
  DirLock lock(dir);
  const fs::path root(dir);
  write_file(root / "run.json", to_json(r).dump(2) + "\n");
  write_file(root / "config.toml", config_to_string(r.config));
  write_file(root / "metrics.csv", metrics_csv(r));
  write_file(root / "epochs.csv", epochs_csv(r));
  for (const auto& s : r.spectra) {
    std::ostringstream out;
    out << "kind,index,value\n";
    for (std::size_t i = 0; i < s.eigenvalues.size(); ++i) {
      out << "eigenvalue," << i << ',' << format_double(s.eigenvalues[i]) << '\n';
      out << "residual," << i << ',' << format_double(s.residuals[i]) << '\n';
      out << "converged," << i << ',' << (s.converged[i] ? 1 : 0) << '\n';
    }
    out << "trace,," << format_double(s.trace) << '\n';
    out << "trace_stderr,," << format_double(s.trace_stderr) << '\n';
    out << "hutchinson_samples,," << s.hutchinson_samples << '\n';
    out << "tr_h_sigma,," << format_double(s.tr_h_sigma) << '\n';
    write_file(root / ("spectrum_phase" + std::to_string(s.phase) + ".csv"), out.str());
  }
  if (!r.trhs.empty()) {
    std::ostringstream out;
    out << "phase,epoch,tr_h_sigma\n";
    for (const auto& t : r.trhs) out << t.phase << ',' << t.epoch << ',' << format_double(t.value) << '\n';
    write_file(root / "trhs.csv", out.str());
  }
  return (root / "run.json").string();
}

}  // namespace flad
