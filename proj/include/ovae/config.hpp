#pragma once

// Run configuration (TOML), its canonical JSON form and the config hash that
// ties pipeline artifacts together.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "ovae/adequacy.hpp"
#include "ovae/data.hpp"
#include "ovae/error.hpp"
#include "ovae/model.hpp"
#include "ovae/network_io.hpp"
#include "ovae/stats.hpp"

namespace ovae::config {

struct DataSection {
  std::string source = "synthetic";  // "synthetic" or "csv"
  std::string csv;                   // resolved path when source == "csv"
  data::SynthConfig synth;
  int train_parts = 4;
  int test_parts = 1;
};

struct OvaeSection {
  OvaeConfig model;
  FeatureKind feature = FeatureKind::TotalLoad;
  int label_draws = 100;
  int alignment_samples = 5000;
};

struct IsSection {
  double alpha = 0.1;
  long long pilot_size = 100000;
};

struct AssessSection {
  long long n_samples = 100000;
  std::vector<adequacy::Metric> metrics{adequacy::Metric::LOLE, adequacy::Metric::EENS};
  int data_draws = 10;
};

struct StatSection {
  int subsample_size = 66;
  int repetitions = 1000;
  int energy_repetitions = 1000;
  int permutations = 200;
  long long generated_size = 5000;
  stats::AeConfig ae;
};

struct RunConfig {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string network_file;  // resolved path
  adequacy::NetworkModel network;
  DataSection data;
  OvaeSection ovae;
  IsSection is;
  AssessSection assess;
  StatSection stat_tests;

  // Keeps derived seeds in step with the top-level seed.
  void apply_seed(std::uint64_t s) {
    seed = s;
    data.synth.seed = s;
    ovae.model.seed = s;
    stat_tests.ae.seed = s;
  }
};

namespace detail {

// Typed, strict access to one TOML table: unknown keys are reported.
class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  bool has(const std::string& key) {
    seen_.insert(key);
    return table_ && table_->contains(key);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    if (auto v = (*table_)[key].value<double>()) return *v;
    fail(ErrorKind::Config, where(key) + " must be a number");
  }

  long long integer(const std::string& key, long long fallback) {
    if (!has(key)) return fallback;
    if (auto v = (*table_)[key].value<std::int64_t>()) return *v;
    fail(ErrorKind::Config, where(key) + " must be an integer");
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    if (auto v = (*table_)[key].value<bool>()) return *v;
    fail(ErrorKind::Config, where(key) + " must be true or false");
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    if (auto v = (*table_)[key].value<std::string>()) return *v;
    fail(ErrorKind::Config, where(key) + " must be a string");
  }

  template <typename T>
  std::vector<T> array(const std::string& key, const std::vector<T>& fallback) {
    if (!has(key)) return fallback;
    const auto* arr = (*table_)[key].as_array();
    require(arr != nullptr, ErrorKind::Config, where(key) + " must be an array");
    std::vector<T> out;
    for (const auto& node : *arr) {
      std::optional<T> v;
      if constexpr (std::is_same_v<T, double>) v = node.value<double>();
      else if constexpr (std::is_same_v<T, std::string>) v = node.value<std::string>();
      else if (auto i = node.value<std::int64_t>()) v = T(*i);
      require(v.has_value(), ErrorKind::Config, where(key) + " has an element of the wrong type");
      out.push_back(*v);
    }
    return out;
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      (void)v;
      const std::string key(k.str());
      require(seen_.count(key) > 0, ErrorKind::Config, "config: unknown key '" + prefix() + key + "'");
    }
  }

 private:
  std::string prefix() const { return name_.empty() ? "" : name_ + "."; }
  std::string where(const std::string& key) const { return "config: '" + prefix() + key + "'"; }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

inline const toml::table* subtable(const toml::table& root, const std::string& name) {
  const auto* node = root.get(name);
  if (!node) return nullptr;
  const auto* t = node->as_table();
  require(t != nullptr, ErrorKind::Config, "config: [" + name + "] must be a table");
  return t;
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

inline adequacy::Metric metric_from_string(const std::string& s) {
  if (s == "LOLE") return adequacy::Metric::LOLE;
  if (s == "EENS") return adequacy::Metric::EENS;
  fail(ErrorKind::Config, "config: unknown metric '" + s + "' (expected LOLE or EENS)");
}

}  // namespace detail

inline void validate(const RunConfig& c) {
  c.data.synth.validate();
  require(c.data.source == "synthetic" || c.data.source == "csv", ErrorKind::Config,
          "config: data.source must be \"synthetic\" or \"csv\"");
  if (c.data.source == "csv")
    require(std::filesystem::exists(c.data.csv), ErrorKind::Config, "config: data.csv file not found: " + c.data.csv);
  require(c.data.train_parts >= 1 && c.data.test_parts >= 1, ErrorKind::Config,
          "config: data.split_ratio parts must be >= 1");
  c.ovae.model.validate();
  require(c.ovae.label_draws >= 1, ErrorKind::Config, "config: ovae.label_draws must be >= 1");
  require(c.ovae.alignment_samples >= 2, ErrorKind::Config, "config: ovae.alignment_samples must be >= 2");
  require(c.is.alpha > 0.0 && c.is.alpha <= 1.0, ErrorKind::Config, "config: is.alpha must lie in (0,1]");
  require(c.is.pilot_size >= 2, ErrorKind::Config, "config: is.pilot_size must be >= 2");
  require(c.assess.n_samples >= 2, ErrorKind::Config, "config: assess.n_samples must be >= 2");
  require(!c.assess.metrics.empty(), ErrorKind::Config, "config: assess.metrics must not be empty");
  require(c.assess.data_draws >= 1, ErrorKind::Config, "config: assess.data_draws must be >= 1");
  const auto& s = c.stat_tests;
  require(s.subsample_size >= 2 && s.repetitions >= 1 && s.energy_repetitions >= 1 && s.permutations >= 1,
          ErrorKind::Config, "config: stat_tests sizes must be positive (subsample_size >= 2)");
  require(s.generated_size >= s.subsample_size, ErrorKind::Config,
          "config: stat_tests.generated_size must be >= subsample_size");
  s.ae.validate();
  c.network.validate();
  require(c.network.size() == std::size_t(c.data.synth.n_areas) || c.data.source == "csv", ErrorKind::Config,
          "config: network area count differs from data.n_areas");
}

inline RunConfig from_toml(const toml::table& root, const std::filesystem::path& base_dir) {
  RunConfig c;
  detail::Section top(&root, "");
  c.seed = std::uint64_t(top.integer("seed", 1));
  require(top.integer("seed", 1) >= 0, ErrorKind::Config, "config: seed must be >= 0");
  const long long threads = top.integer("threads", 1);
  require(threads >= 1 && threads <= 1024, ErrorKind::Config, "config: threads must lie in [1, 1024]");
  c.threads = unsigned(threads);
  for (const char* name : {"data", "network", "ovae", "is", "assess", "stat_tests"}) (void)top.has(name);
  top.finish();

  {
    detail::Section s(detail::subtable(root, "data"), "data");
    auto& d = c.data;
    d.source = s.string("source", d.source);
    if (s.has("csv")) d.csv = detail::resolve(base_dir, s.string("csv", ""));
    auto& y = d.synth;
    y.hours = int(s.integer("hours", y.hours));
    y.n_areas = int(s.integer("n_areas", y.n_areas));
    y.base_load = s.array<double>("base_load", y.base_load);
    y.area_names = s.array<std::string>("area_names", y.area_names);
    y.seasonal_amplitude = s.number("seasonal_amplitude", y.seasonal_amplitude);
    y.diurnal_amplitude = s.number("diurnal_amplitude", y.diurnal_amplitude);
    y.diurnal_phase_hours = s.array<double>("diurnal_phase_hours", y.diurnal_phase_hours);
    y.correlation = s.number("correlation", y.correlation);
    y.noise_scale = s.number("noise_scale", y.noise_scale);
    y.persistence = s.number("persistence", y.persistence);
    y.start = s.string("start", y.start);
    const auto ratio = s.array<int>("split_ratio", {d.train_parts, d.test_parts});
    require(ratio.size() == 2, ErrorKind::Config, "config: data.split_ratio must have two entries");
    d.train_parts = ratio[0];
    d.test_parts = ratio[1];
    s.finish();
  }
  {
    detail::Section s(detail::subtable(root, "network"), "network");
    require(s.has("file"), ErrorKind::Config, "config: network.file is required");
    c.network_file = detail::resolve(base_dir, s.string("file", ""));
    s.finish();
    require(std::filesystem::exists(c.network_file), ErrorKind::Config,
            "config: network file not found: " + c.network_file);
    try {
      c.network = netio::load_network(c.network_file);
    } catch (const Error& e) {
      fail(ErrorKind::Config, e.what());
    }
  }
  {
    detail::Section s(detail::subtable(root, "ovae"), "ovae");
    auto& m = c.ovae.model;
    m.latent_dim = int(s.integer("latent_dim", m.latent_dim));
    m.hidden = s.array<int>("hidden", m.hidden);
    m.beta = s.number("beta", m.beta);
    m.epochs = int(s.integer("epochs", m.epochs));
    m.batch_size = int(s.integer("batch_size", m.batch_size));
    m.learning_rate = s.number("learning_rate", m.learning_rate);
    m.labeled_fraction = s.number("labeled_fraction", m.labeled_fraction);
    m.orientation = s.boolean("orientation", m.orientation);
    try {
      c.ovae.feature = feature_kind_from_string(s.string("feature", "total_load"));
    } catch (const Error& e) {
      fail(ErrorKind::Config, std::string("config: ovae.feature: ") + e.what());
    }
    c.ovae.label_draws = int(s.integer("label_draws", c.ovae.label_draws));
    c.ovae.alignment_samples = int(s.integer("alignment_samples", c.ovae.alignment_samples));
    s.finish();
  }
  {
    detail::Section s(detail::subtable(root, "is"), "is");
    c.is.alpha = s.number("alpha", c.is.alpha);
    c.is.pilot_size = s.integer("pilot_size", c.is.pilot_size);
    s.finish();
  }
  {
    detail::Section s(detail::subtable(root, "assess"), "assess");
    c.assess.n_samples = s.integer("n_samples", c.assess.n_samples);
    c.assess.data_draws = int(s.integer("data_draws", c.assess.data_draws));
    if (s.has("metrics")) {
      c.assess.metrics.clear();
      for (const auto& m : s.array<std::string>("metrics", {}))
        c.assess.metrics.push_back(detail::metric_from_string(m));
    }
    s.finish();
  }
  {
    detail::Section s(detail::subtable(root, "stat_tests"), "stat_tests");
    auto& t = c.stat_tests;
    t.subsample_size = int(s.integer("subsample_size", t.subsample_size));
    t.repetitions = int(s.integer("repetitions", t.repetitions));
    t.energy_repetitions = int(s.integer("energy_repetitions", t.energy_repetitions));
    t.permutations = int(s.integer("permutations", t.permutations));
    t.generated_size = s.integer("generated_size", t.generated_size);
    t.ae.hidden = s.array<int>("ae_hidden", c.ovae.model.hidden);
    t.ae.latent_dim = int(s.integer("ae_latent_dim", c.ovae.model.latent_dim));
    t.ae.epochs = int(s.integer("ae_epochs", t.ae.epochs));
    t.ae.batch_size = int(s.integer("ae_batch_size", c.ovae.model.batch_size));
    t.ae.learning_rate = s.number("ae_learning_rate", t.ae.learning_rate);
    s.finish();
  }
  c.apply_seed(c.seed);
  validate(c);
  return c;
}

inline RunConfig load(const std::string& path) {
  require(std::filesystem::exists(path), ErrorKind::Config, "config file not found: " + path);
  toml::table root;
  try {
    root = toml::parse_file(path);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << path << ":" << e.source().begin.line << ": " << e.description();
    fail(ErrorKind::Config, msg.str());
  }
  return from_toml(root, std::filesystem::path(path).parent_path());
}

// Canonical form. Paths and the thread count are left out: results depend on
// neither, and the network enters through its parsed contents.
inline nlohmann::json canonical_json(const RunConfig& c) {
  nlohmann::json areas = nlohmann::json::array(), lines = nlohmann::json::array();
  for (const auto& a : c.network.areas)
    areas.push_back({{"name", a.name}, {"conventional_capacity", a.conventional_capacity},
                     {"wind_nameplate", a.wind_nameplate}, {"unit_size", a.unit_size},
                     {"unit_count", a.unit_count}, {"availability", a.availability}});
  for (const auto& l : c.network.lines)
    lines.push_back({{"from", c.network.areas[l.from].name}, {"to", c.network.areas[l.to].name},
                     {"f_min", l.f_min}, {"f_max", l.f_max}});
  const auto& y = c.data.synth;
  std::vector<std::string> metrics;
  for (auto m : c.assess.metrics) metrics.emplace_back(adequacy::to_string(m));
  const auto& t = c.stat_tests;
  nlohmann::json data{{"source", c.data.source}, {"split_ratio", {c.data.train_parts, c.data.test_parts}}};
  if (c.data.source == "csv") {
    data["csv"] = std::filesystem::path(c.data.csv).filename().string();
  } else {
    data.update({{"hours", y.hours}, {"n_areas", y.n_areas}, {"base_load", y.base_load},
                 {"area_names", y.area_names}, {"seasonal_amplitude", y.seasonal_amplitude},
                 {"diurnal_amplitude", y.diurnal_amplitude}, {"diurnal_phase_hours", y.diurnal_phase_hours},
                 {"correlation", y.correlation}, {"noise_scale", y.noise_scale}, {"persistence", y.persistence},
                 {"start", y.start}});
  }
  const auto& m = c.ovae.model;
  return {{"seed", c.seed},
          {"data", data},
          {"network", {{"areas", areas}, {"lines", lines}}},
          {"ovae",
           {{"latent_dim", m.latent_dim}, {"hidden", m.hidden}, {"beta", m.beta}, {"epochs", m.epochs},
            {"batch_size", m.batch_size}, {"learning_rate", m.learning_rate},
            {"labeled_fraction", m.labeled_fraction}, {"orientation", m.orientation},
            {"feature", to_string(c.ovae.feature)}, {"label_draws", c.ovae.label_draws},
            {"alignment_samples", c.ovae.alignment_samples}}},
          {"is", {{"alpha", c.is.alpha}, {"pilot_size", c.is.pilot_size}}},
          {"assess", {{"n_samples", c.assess.n_samples}, {"metrics", metrics}, {"data_draws", c.assess.data_draws}}},
          {"stat_tests",
           {{"subsample_size", t.subsample_size}, {"repetitions", t.repetitions},
            {"energy_repetitions", t.energy_repetitions}, {"permutations", t.permutations},
            {"generated_size", t.generated_size}, {"ae_hidden", t.ae.hidden}, {"ae_latent_dim", t.ae.latent_dim},
            {"ae_epochs", t.ae.epochs}, {"ae_batch_size", t.ae.batch_size},
            {"ae_learning_rate", t.ae.learning_rate}}}};
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_json(c).dump())));
  return buf;
}

namespace detail {

inline void echo_value(std::ostream& out, const nlohmann::json& v) {
  if (v.is_array()) {
    out << '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out << ", ";
      echo_value(out, v[i]);
    }
    out << ']';
  } else if (v.is_number_float()) {
    const std::string s = data::format_double(v.get<double>());
    out << s;
    if (s.find_first_of(".eEn") == std::string::npos) out << ".0";
  } else {
    out << v.dump();
  }
}

}  // namespace detail

// TOML rendering of the canonical config, for the report bundle.
inline std::string echo_toml(const RunConfig& c) {
  const nlohmann::json j = canonical_json(c);
  std::ostringstream out;
  out << "# config_hash=" << config_hash(c) << " seed=" << c.seed << '\n';
  out << "seed = " << c.seed << '\n';
  for (const char* section : {"data", "ovae", "is", "assess", "stat_tests"}) {
    out << "\n[" << section << "]\n";
    for (const auto& [k, v] : j.at(section).items()) {
      out << k << " = ";
      detail::echo_value(out, v);
      out << '\n';
    }
  }
  for (const auto& a : j.at("network").at("areas")) {
    out << "\n[[network.area]]\n";
    for (const auto& [k, v] : a.items()) {
      out << k << " = ";
      detail::echo_value(out, v);
      out << '\n';
    }
  }
  for (const auto& l : j.at("network").at("lines")) {
    out << "\n[[network.line]]\n";
    for (const auto& [k, v] : l.items()) {
      out << k << " = ";
      detail::echo_value(out, v);
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace ovae::config
