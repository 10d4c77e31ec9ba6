#include "flad/config.hpp"

#include "flad/errors.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

namespace flad {

std::string to_string(Generator g) {
  switch (g) {
    case Generator::blobs: return "blobs";
    case Generator::spirals: return "spirals";
    case Generator::csv: return "csv";
  }
  return "?";
}

Generator parse_generator(const std::string& name) {
  if (name == "blobs" || name == "gaussian-blobs") return Generator::blobs;
  if (name == "spirals") return Generator::spirals;
  if (name == "csv") return Generator::csv;
  throw ConfigError("dataset.generator: unknown generator '" + name + "' (expected blobs, spirals or csv)");
}

namespace {

void check(bool ok, const std::string& field, const std::string& rule) {
  if (!ok) throw ConfigError(field + ": " + rule);
}

bool finite(double x) { return std::isfinite(x); }

class SectionReader {
 public:
  SectionReader(const TomlDocument& doc, std::string name, std::string origin)
      : name_(std::move(name)), origin_(std::move(origin)) {
    auto it = doc.sections.find(name_);
    if (it != doc.sections.end()) table_ = &it->second;
  }

  bool has(const std::string& key) const { return table_ && table_->entries.count(key); }

  void read(const std::string& key, double& out) {
    if (const TomlValue* v = take(key)) {
      if (v->is_float()) {
        out = std::get<double>(v->data);
      } else if (v->is_int()) {
        out = static_cast<double>(std::get<std::int64_t>(v->data));
      } else {
        fail(*v, key, "expected a number");
      }
    }
  }

  void read(const std::string& key, int& out) {
    if (const TomlValue* v = take(key)) out = static_cast<int>(integer(*v, key, -(1LL << 31)));
  }

  template <class T>
    requires(std::is_unsigned_v<T> && !std::is_same_v<T, bool>)
  void read(const std::string& key, T& out) {
    if (const TomlValue* v = take(key)) out = static_cast<T>(integer(*v, key, 0));
  }

  void read(const std::string& key, bool& out) {
    if (const TomlValue* v = take(key)) {
      if (!v->is_bool()) fail(*v, key, "expected true or false");
      out = std::get<bool>(v->data);
    }
  }

  void read(const std::string& key, std::string& out) {
    if (const TomlValue* v = take(key)) {
      if (!v->is_string()) fail(*v, key, "expected a string");
      out = std::get<std::string>(v->data);
    }
  }

  template <class T>
  void read(const std::string& key, std::vector<T>& out) {
    if (const TomlValue* v = take(key)) {
      if (!v->is_array()) fail(*v, key, "expected an array");
      std::vector<T> items;
      for (const auto& item : std::get<TomlValue::Array>(v->data)) {
        if constexpr (std::is_same_v<T, double>) {
          if (item.is_float()) {
            items.push_back(std::get<double>(item.data));
          } else if (item.is_int()) {
            items.push_back(static_cast<double>(std::get<std::int64_t>(item.data)));
          } else {
            fail(item, key, "expected numbers");
          }
        } else {
          items.push_back(static_cast<T>(integer(item, key, 0)));
        }
      }
      out = std::move(items);
    }
  }

  /// Reads a string and maps it through `parse`, attaching the location on failure.
  template <class T, class Parse>
  void read_enum(const std::string& key, T& out, Parse parse) {
    if (const TomlValue* v = take(key)) {
      if (!v->is_string()) fail(*v, key, "expected a string");
      try {
        out = parse(std::get<std::string>(v->data));
      } catch (const ConfigError& e) {
        throw TomlError(origin_, v->line, v->column, e.what());
      }
    }
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [key, v] : table_->entries) {
      if (!used_.count(key)) {
        throw TomlError(origin_, v.line, v.column, "unknown key '" + key + "' in [" + name_ + "]");
      }
    }
  }

 private:
  const TomlValue* take(const std::string& key) {
    if (!table_) return nullptr;
    auto it = table_->entries.find(key);
    if (it == table_->entries.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  std::int64_t integer(const TomlValue& v, const std::string& key, long long min) const {
    if (!v.is_int()) fail(v, key, "expected an integer");
    const auto x = std::get<std::int64_t>(v.data);
    if (x < min) fail(v, key, "must be >= " + std::to_string(min));
    return x;
  }

  [[noreturn]] void fail(const TomlValue& v, const std::string& key, const std::string& what) const {
    throw TomlError(origin_, v.line, v.column, name_ + "." + key + ": " + what);
  }

  const TomlTable* table_ = nullptr;
  std::string name_;
  std::string origin_;
  std::set<std::string> used_;
};

const std::set<std::string> kSections{"dataset", "stream", "model", "optimizer", "schedule", "run", "diagnostics"};

TomlValue num(double x) { return TomlValue{x}; }
TomlValue integer(std::uint64_t x) { return TomlValue{static_cast<std::int64_t>(x)}; }
TomlValue str(std::string s) { return TomlValue{std::move(s)}; }
TomlValue boolean(bool b) { return TomlValue{b}; }

template <class T>
TomlValue array(const std::vector<T>& xs) {
  TomlValue::Array a;
  for (const auto& x : xs) {
    if constexpr (std::is_floating_point_v<T>) {
      a.push_back(num(x));
    } else {
      a.push_back(integer(x));
    }
  }
  return TomlValue{std::move(a)};
}

}  // namespace

void RunConfig::validate() const {
  std::size_t classes = 0;
  switch (dataset.generator) {
    case Generator::blobs:
      check(dataset.blobs.classes >= 2, "dataset.classes", "need at least 2 classes");
      check(dataset.blobs.dim >= 1, "dataset.dim", "must be positive");
      check(finite(dataset.blobs.separation) && dataset.blobs.separation >= 0, "dataset.separation",
            "must be finite and >= 0");
      check(dataset.blobs.samples_per_class >= 2, "dataset.samples_per_class", "need at least 2 per class");
      classes = dataset.blobs.classes;
      break;
    case Generator::spirals:
      check(dataset.spirals.classes >= 2, "dataset.classes", "need at least 2 classes");
      check(finite(dataset.spirals.noise) && dataset.spirals.noise >= 0, "dataset.noise", "must be finite and >= 0");
      check(dataset.spirals.samples_per_class >= 2, "dataset.samples_per_class", "need at least 2 per class");
      classes = dataset.spirals.classes;
      break;
    case Generator::csv:
      check(!dataset.train_path.empty(), "dataset.train", "csv generator needs a train file");
      check(!dataset.test_path.empty(), "dataset.test", "csv generator needs a test file");
      classes = dataset.num_classes;
      break;
  }
  check(stream.phases >= 1, "stream.phases", "must be >= 1");
  check(stream.classes_per_phase >= 1, "stream.classes_per_phase", "must be >= 1");
  if (classes > 0) {
    check(stream.phases * stream.classes_per_phase <= classes, "stream.phases",
          "phases * classes_per_phase exceeds the " + std::to_string(classes) + " dataset classes");
  }
  check(stream.phases * stream.classes_per_phase >= 2, "stream.classes_per_phase",
        "the stream must cover at least 2 classes");
  check(finite(stream.anchor_strength) && stream.anchor_strength >= 0, "stream.anchor_strength",
        "must be finite and >= 0");
  for (std::size_t i = 0; i < model.hidden.size(); ++i) {
    check(model.hidden[i] > 0, "model.hidden", "layer " + std::to_string(i) + " has zero width");
  }
  optimizer.validate();
  schedule.validate();
  check(run.epochs >= 1, "run.epochs", "must be >= 1");
  check(run.batch_size >= 1, "run.batch_size", "must be >= 1");
  check(!run.seeds.empty(), "run.seeds", "need at least one seed");
  check(!run.output_dir.empty(), "run.output_dir", "must not be empty");
  check(diagnostics.k >= 1, "diagnostics.k", "must be >= 1");
  check(diagnostics.iters >= 1, "diagnostics.iters", "must be >= 1");
  check(finite(diagnostics.tol) && diagnostics.tol > 0, "diagnostics.tol", "must be positive");
  check(diagnostics.hutchinson_samples >= 1, "diagnostics.hutchinson_samples", "must be >= 1");
  check(diagnostics.trhs_every >= 0, "diagnostics.trhs_every", "must be >= 0");
  check(diagnostics.trhs_batches >= 2, "diagnostics.trhs_batches", "variance needs at least 2 batches");
  check(diagnostics.slice_directions == "eigen" || diagnostics.slice_directions == "random",
        "diagnostics.slice_directions", "expected eigen or random");
  check(diagnostics.slice_points >= 3 && diagnostics.slice_points % 2 == 1, "diagnostics.slice_points",
        "must be odd and >= 3 so the grid is centred on 0");
  check(finite(diagnostics.slice_radius) && diagnostics.slice_radius > 0, "diagnostics.slice_radius",
        "must be positive");
  check(finite(diagnostics.slice_scale) && diagnostics.slice_scale > 0, "diagnostics.slice_scale",
        "must be positive");
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.optimizer = optimizer;
  t.schedule = schedule;
  t.epochs = run.epochs;
  t.batch_size = run.batch_size;
  t.anchor_strength = stream.anchor_strength;
  return t;
}

RunConfig config_from_toml(const TomlDocument& doc, const std::string& origin) {
  for (const auto& [name, table] : doc.sections) {
    if (name.empty()) {
      const auto& [key, v] = *table.entries.begin();
      throw TomlError(origin, v.line, v.column, "key '" + key + "' must live inside a section");
    }
    if (!kSections.count(name)) throw TomlError(origin, table.line, 1, "unknown section [" + name + "]");
  }
  RunConfig cfg;

  SectionReader ds(doc, "dataset", origin);
  ds.read_enum("generator", cfg.dataset.generator, parse_generator);
  ds.read("seed", cfg.dataset.seed);
  switch (cfg.dataset.generator) {
    case Generator::blobs:
      ds.read("classes", cfg.dataset.blobs.classes);
      ds.read("dim", cfg.dataset.blobs.dim);
      ds.read("separation", cfg.dataset.blobs.separation);
      ds.read("samples_per_class", cfg.dataset.blobs.samples_per_class);
      break;
    case Generator::spirals:
      ds.read("classes", cfg.dataset.spirals.classes);
      ds.read("noise", cfg.dataset.spirals.noise);
      ds.read("samples_per_class", cfg.dataset.spirals.samples_per_class);
      break;
    case Generator::csv:
      ds.read("train", cfg.dataset.train_path);
      ds.read("test", cfg.dataset.test_path);
      ds.read("num_classes", cfg.dataset.num_classes);
      break;
  }
  ds.finish();

  SectionReader st(doc, "stream", origin);
  st.read("phases", cfg.stream.phases);
  st.read("classes_per_phase", cfg.stream.classes_per_phase);
  st.read_enum("class_order", cfg.stream.class_order, parse_class_order);
  st.read("replay_capacity", cfg.stream.replay_capacity);
  st.read("anchor_strength", cfg.stream.anchor_strength);
  st.finish();

  SectionReader md(doc, "model", origin);
  md.read("hidden", cfg.model.hidden);
  md.read_enum("activation", cfg.model.activation, parse_activation);
  md.finish();

  SectionReader op(doc, "optimizer", origin);
  op.read_enum("kind", cfg.optimizer.kind, parse_optimizer_kind);
  op.read_enum("variant", cfg.optimizer.variant, parse_variant);
  auto& hp = cfg.optimizer.hp;
  op.read("lr", hp.lr);
  op.read("rho", hp.rho);
  op.read("gamma", hp.gamma);
  op.read("sigma", hp.sigma);
  op.read("lambda0", hp.lambda0);
  op.read("lambda1", hp.lambda1);
  op.read("c", hp.c);
  op.read("momentum", hp.momentum);
  op.read("weight_decay", hp.weight_decay);
  op.finish();

  SectionReader sc(doc, "schedule", origin);
  sc.read("decay_points", cfg.schedule.decay_points);
  sc.read("decay_factor", cfg.schedule.decay_factor);
  sc.read("theorem_mode", cfg.schedule.theorem_mode);
  std::vector<double> window{cfg.schedule.window_start, cfg.schedule.window_end};
  sc.read("window", window);
  check(window.size() == 2, "schedule.window", "expected [start, end]");
  cfg.schedule.window_start = window[0];
  cfg.schedule.window_end = window[1];
  sc.finish();

  SectionReader rn(doc, "run", origin);
  rn.read("epochs", cfg.run.epochs);
  rn.read("batch_size", cfg.run.batch_size);
  rn.read("seeds", cfg.run.seeds);
  rn.read("output_dir", cfg.run.output_dir);
  rn.finish();

  SectionReader dg(doc, "diagnostics", origin);
  auto& d = cfg.diagnostics;
  dg.read("spectrum", d.spectrum);
  dg.read("trhs_every", d.trhs_every);
  dg.read("k", d.k);
  dg.read("iters", d.iters);
  dg.read("tol", d.tol);
  dg.read("hutchinson_samples", d.hutchinson_samples);
  dg.read("trhs_batches", d.trhs_batches);
  dg.read("spectrum_examples", d.spectrum_examples);
  dg.read("slice_directions", d.slice_directions);
  dg.read("slice_points", d.slice_points);
  dg.read("slice_radius", d.slice_radius);
  dg.read("slice_scale", d.slice_scale);
  dg.read("slice_2d", d.slice_2d);
  dg.finish();

  cfg.validate();
  return cfg;
}

RunConfig parse_config(std::string_view text, const std::string& origin) {
  return config_from_toml(parse_toml(text, origin), origin);
}

RunConfig load_config(const std::string& path) { return config_from_toml(parse_toml_file(path), path); }

TomlDocument config_to_toml(const RunConfig& cfg) {
  TomlDocument doc;
  auto& ds = doc.sections["dataset"].entries;
  ds["generator"] = str(to_string(cfg.dataset.generator));
  ds["seed"] = integer(cfg.dataset.seed);
  switch (cfg.dataset.generator) {
    case Generator::blobs:
      ds["classes"] = integer(cfg.dataset.blobs.classes);
      ds["dim"] = integer(cfg.dataset.blobs.dim);
      ds["separation"] = num(cfg.dataset.blobs.separation);
      ds["samples_per_class"] = integer(cfg.dataset.blobs.samples_per_class);
      break;
    case Generator::spirals:
      ds["classes"] = integer(cfg.dataset.spirals.classes);
      ds["noise"] = num(cfg.dataset.spirals.noise);
      ds["samples_per_class"] = integer(cfg.dataset.spirals.samples_per_class);
      break;
    case Generator::csv:
      ds["train"] = str(cfg.dataset.train_path);
      ds["test"] = str(cfg.dataset.test_path);
      ds["num_classes"] = integer(cfg.dataset.num_classes);
      break;
  }

  auto& st = doc.sections["stream"].entries;
  st["phases"] = integer(cfg.stream.phases);
  st["classes_per_phase"] = integer(cfg.stream.classes_per_phase);
  st["class_order"] = str(to_string(cfg.stream.class_order));
  st["replay_capacity"] = integer(cfg.stream.replay_capacity);
  st["anchor_strength"] = num(cfg.stream.anchor_strength);

  auto& md = doc.sections["model"].entries;
  md["hidden"] = array(cfg.model.hidden);
  md["activation"] = str(to_string(cfg.model.activation));

  auto& op = doc.sections["optimizer"].entries;
  const auto& hp = cfg.optimizer.hp;
  op["kind"] = str(to_string(cfg.optimizer.kind));
  op["variant"] = str(to_string(cfg.optimizer.variant));
  op["lr"] = num(hp.lr);
  op["rho"] = num(hp.rho);
  op["gamma"] = num(hp.gamma);
  op["sigma"] = num(hp.sigma);
  op["lambda0"] = num(hp.lambda0);
  op["lambda1"] = num(hp.lambda1);
  op["c"] = num(hp.c);
  op["momentum"] = num(hp.momentum);
  op["weight_decay"] = num(hp.weight_decay);

  auto& sc = doc.sections["schedule"].entries;
  sc["decay_points"] = array(cfg.schedule.decay_points);
  sc["decay_factor"] = num(cfg.schedule.decay_factor);
  sc["theorem_mode"] = boolean(cfg.schedule.theorem_mode);
  sc["window"] = array(std::vector<double>{cfg.schedule.window_start, cfg.schedule.window_end});

  auto& rn = doc.sections["run"].entries;
  rn["epochs"] = integer(cfg.run.epochs);
  rn["batch_size"] = integer(cfg.run.batch_size);
  rn["seeds"] = array(cfg.run.seeds);
  rn["output_dir"] = str(cfg.run.output_dir);

  auto& dg = doc.sections["diagnostics"].entries;
  const auto& d = cfg.diagnostics;
  dg["spectrum"] = boolean(d.spectrum);
  dg["trhs_every"] = integer(static_cast<std::uint64_t>(d.trhs_every));
  dg["k"] = integer(d.k);
  dg["iters"] = integer(static_cast<std::uint64_t>(d.iters));
  dg["tol"] = num(d.tol);
  dg["hutchinson_samples"] = integer(static_cast<std::uint64_t>(d.hutchinson_samples));
  dg["trhs_batches"] = integer(d.trhs_batches);
  dg["spectrum_examples"] = integer(d.spectrum_examples);
  dg["slice_directions"] = str(d.slice_directions);
  dg["slice_points"] = integer(d.slice_points);
  dg["slice_radius"] = num(d.slice_radius);
  dg["slice_scale"] = num(d.slice_scale);
  dg["slice_2d"] = boolean(d.slice_2d);
  return doc;
}

std::string config_to_string(const RunConfig& cfg) {
  static const char* order[] = {"dataset", "stream", "model", "optimizer", "schedule", "run", "diagnostics"};
  const TomlDocument doc = config_to_toml(cfg);
  std::ostringstream out;
  bool first = true;
  for (const char* name : order) {
    if (!first) out << '\n';
    first = false;
    out << '[' << name << "]\n";
    for (const auto& [key, v] : doc.sections.at(name).entries) out << key << " = " << to_toml_literal(v) << '\n';
  }
  return out.str();
}

void save_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write config", path);
  out << config_to_string(cfg);
  if (!out) throw IoError("cannot write config", path);
}

RunConfig apply_overrides(const RunConfig& cfg, const std::vector<std::string>& overrides) {
  if (overrides.empty()) return cfg;
  TomlDocument doc = config_to_toml(cfg);
  for (const auto& item : overrides) {
    const std::string origin = "--set " + item;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ": expected section.key=value");
    const std::string path = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    const auto dot = path.rfind('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == path.size()) {
      throw ConfigError(origin + ": key must be section.key");
    }
    const std::string section = path.substr(0, dot);
    const std::string key = path.substr(dot + 1);
    if (!kSections.count(section)) throw ConfigError(origin + ": unknown section [" + section + "]");
    TomlValue v;
    try {
      v = parse_toml_value(text, origin);
    } catch (const TomlError&) {
      // bare words such as kind=flad are strings
      if (text.empty() || text.find_first_of(" \t\"'[]#") != std::string::npos) throw;
      v = str(text);
    }
    auto& entries = doc.sections[section].entries;
    if (section == "dataset" && key == "generator") {
      // generator-specific keys of the old generator no longer apply
      const TomlValue seed = entries.at("seed");
      entries.clear();
      entries["seed"] = seed;
    }
    entries[key] = v;
  }
  return config_from_toml(doc, "--set");
}

}  // namespace flad
