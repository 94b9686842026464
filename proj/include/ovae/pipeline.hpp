#pragma once

// Batch workflow: data preparation, labeling, training, IS fitting,
// assessment, distribution tests and report assembly. Every stage reads its
// inputs from and writes its outputs to one directory; each artifact carries
// the config hash and seed of the run that produced it.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovae/adequacy.hpp"
#include "ovae/config.hpp"
#include "ovae/data.hpp"
#include "ovae/error.hpp"
#include "ovae/latent_is.hpp"
#include "ovae/model.hpp"
#include "ovae/parallel.hpp"
#include "ovae/rng.hpp"
#include "ovae/stats.hpp"

namespace ovae::pipeline {

namespace fs = std::filesystem;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using config::RunConfig;

// Artifact names and the command that writes them.
namespace artifacts {
inline constexpr const char* kDataset = "dataset.csv";
inline constexpr const char* kDatasetMeta = "dataset_meta.json";
inline constexpr const char* kLabels = "labels.csv";
inline constexpr const char* kModel = "model.json";
inline constexpr const char* kLossHistory = "loss_history.csv";
inline constexpr const char* kAlignment = "alignment.csv";
inline constexpr const char* kPilot = "pilot.csv";
inline constexpr const char* kIsFit = "is_fit.json";
inline constexpr const char* kEstimates = "estimates.csv";
inline constexpr const char* kKs = "stat_ks.csv";
inline constexpr const char* kEnergy = "stat_energy.csv";
inline constexpr const char* kAeErrors = "stat_ae_errors.csv";
inline constexpr const char* kStatSummary = "stat_summary.json";
inline constexpr const char* kAdequacyTable = "adequacy_table.csv";
inline constexpr const char* kHistogram = "histogram_total_load.csv";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kConfigEcho = "config_echo.toml";
inline constexpr const char* kTimings = "timings.json";
}  // namespace artifacts

struct Context {
  RunConfig cfg;
  std::string hash;
  fs::path out;
  bool force = false;
  std::ostream* log = &std::cerr;

  Context(RunConfig c, fs::path dir, bool force_ = false) : cfg(std::move(c)), out(std::move(dir)), force(force_) {
    hash = config::config_hash(cfg);
  }

  fs::path path(const char* name) const { return out / name; }
  std::string header() const { return "# config_hash=" + hash + " seed=" + std::to_string(cfg.seed) + "\n"; }
};

namespace detail {

inline std::string producer_of(const std::string& name) {
  if (name == artifacts::kDataset || name == artifacts::kDatasetMeta) return "synth (or ingest)";
  if (name == artifacts::kLabels) return "label";
  if (name == artifacts::kModel) return "train";
  if (name == artifacts::kIsFit || name == artifacts::kPilot) return "fit-is";
  if (name == artifacts::kEstimates) return "assess";
  return "run";
}

inline fs::path need(const Context& ctx, const char* name) {
  const fs::path p = ctx.path(name);
  require(fs::exists(p), ErrorKind::Artifact,
          "missing upstream artifact " + p.string() + "; run the '" + producer_of(name) + "' command first");
  return p;
}

inline void check_hash(const Context& ctx, const std::string& found, const fs::path& where) {
  if (found == ctx.hash || ctx.force) return;
  fail(ErrorKind::Artifact, where.string() + " was produced with config hash " + found + " but the current config hash is " +
                                ctx.hash + "; re-run the producing command or pass --force");
}

// Reads the '# config_hash=... seed=...' first line of a CSV artifact.
inline void check_csv_header(const Context& ctx, const fs::path& p) {
  std::ifstream in(p);
  require(bool(in), ErrorKind::Io, "cannot open " + p.string());
  std::string line;
  std::getline(in, line);
  const std::string key = "# config_hash=";
  require(line.rfind(key, 0) == 0, ErrorKind::Artifact, p.string() + ": missing config hash header");
  check_hash(ctx, line.substr(key.size(), 16), p);
}

inline nlohmann::json read_json(const Context& ctx, const char* name) {
  const fs::path p = need(ctx, name);
  std::ifstream in(p);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Artifact, p.string() + ": malformed JSON (" + e.what() + ")");
  }
  require(j.contains("config_hash"), ErrorKind::Artifact, p.string() + ": missing config_hash");
  check_hash(ctx, j.at("config_hash").get<std::string>(), p);
  return j;
}

inline void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  require(bool(out), ErrorKind::Io, "cannot write " + p.string());
  out << text;
  require(bool(out), ErrorKind::Io, "write failed: " + p.string());
}

inline void write_json(const Context& ctx, const char* name, nlohmann::json j) {
  j["config_hash"] = ctx.hash;
  j["seed"] = ctx.cfg.seed;
  write_text(ctx.path(name), j.dump(2) + "\n");
}

inline std::string fmt(double v) { return data::format_double(v); }

// Reads a headed CSV artifact (hash line, column line, rows) into columns.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    fail(ErrorKind::Artifact, "column '" + name + "' not found");
  }
};

// CSV with '#' comment lines and a header row.
inline Table parse_table(std::istream& in, const std::string& source) {
  std::string line;
  Table t;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto cells = data::detail::split_csv_line(line);
    if (t.columns.empty()) {
      t.columns = std::move(cells);
      continue;
    }
    require(cells.size() == t.columns.size(), ErrorKind::Artifact, source + ": ragged row");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline Table read_table(const Context& ctx, const char* name) {
  const fs::path p = need(ctx, name);
  check_csv_header(ctx, p);
  std::ifstream in(p);
  return parse_table(in, p.string());
}

inline double to_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    require(pos == s.size(), ErrorKind::Artifact, "bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    fail(ErrorKind::Artifact, "bad number '" + s + "'");
  }
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline void record_timing(const Context& ctx, const std::string& stage, double seconds) {
  const fs::path p = ctx.path(artifacts::kTimings);
  nlohmann::json j = nlohmann::json::object();
  if (fs::exists(p)) {
    std::ifstream in(p);
    try {
      in >> j;
    } catch (const nlohmann::json::exception&) {
      j = nlohmann::json::object();
    }
  }
  j[stage] = seconds;
  write_text(p, j.dump(2) + "\n");
}

inline constexpr Eigen::Index kBlock = 1024;

}  // namespace detail

// ---------------------------------------------------------------------------
// Library-level steps (used by the commands and directly by tests)

struct PreparedData {
  data::DemandDataset dataset;  // with split tags
  data::NormStats norm;         // fitted on train rows
};

inline PreparedData prepare(data::DemandDataset ds, const RunConfig& cfg) {
  require(ds.rows() > 0, ErrorKind::Domain, "dataset is empty");
  data::split_weekly(ds, cfg.seed, cfg.data.train_parts, cfg.data.test_parts);
  const auto train_rows = ds.rows_with(data::Split::Train);
  require(!train_rows.empty(), ErrorKind::Domain, "split left no training rows");
  PreparedData p{std::move(ds), {}};
  p.norm = data::NormStats::fit(p.dataset.states(train_rows));
  return p;
}

inline PreparedData synthesize(const RunConfig& cfg) {
  data::SynthConfig sc = cfg.data.synth;
  if (sc.area_names.empty())
    for (const auto& a : cfg.network.areas) sc.area_names.push_back(a.name);
  return prepare(data::generate_synthetic(sc), cfg);
}

struct LabelSet {
  std::vector<Eigen::Index> rows;  // dataset row indices with a computed label
  std::vector<unsigned char> labeled;  // 1: used for training (train rows only)
  std::vector<double> values;          // raw label (MW or MWh/y)
};

// Training rows in a seeded order; the first round(fraction * n) are labeled,
// so smaller fractions select subsets of larger ones.
inline std::vector<Eigen::Index> labeled_train_rows(const data::DemandDataset& ds, double fraction, std::uint64_t seed) {
  auto rows = ds.rows_with(data::Split::Train);
  Rng rng = make_rng(seed, streams::kLabelSubset);
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(std::size_t(std::llround(fraction * double(rows.size()))));
  std::sort(rows.begin(), rows.end());
  return rows;
}

inline double raw_label(FeatureKind kind, const data::DemandDataset& ds, Eigen::Index row,
                        const adequacy::NetworkModel& net, int draws, std::uint64_t seed) {
  const Vector demand = ds.values.row(row).transpose();
  if (kind == FeatureKind::TotalLoad) return adequacy::label_f_total_load(demand).value;
  Rng rng = make_rng(seed, streams::kLabelDraws, std::uint64_t(row));
  return adequacy::label_f_eens(demand, net, rng, draws).value;
}

// Labels the chosen training rows and every test row (for evaluation).
inline LabelSet compute_labels(const RunConfig& cfg, const data::DemandDataset& ds, double fraction) {
  const auto train_lab = labeled_train_rows(ds, fraction, cfg.seed);
  std::vector<unsigned char> is_lab(std::size_t(ds.rows()), 0);
  for (auto r : train_lab) is_lab[std::size_t(r)] = 1;
  LabelSet ls;
  for (Eigen::Index r = 0; r < ds.rows(); ++r)
    if (is_lab[std::size_t(r)] || ds.split[std::size_t(r)] == data::Split::Test) {
      ls.rows.push_back(r);
      ls.labeled.push_back(is_lab[std::size_t(r)]);
    }
  ls.values.assign(ls.rows.size(), 0.0);
  parallel_for(ls.rows.size(), cfg.threads, [&](std::size_t k) {
    ls.values[k] = raw_label(cfg.ovae.feature, ds, ls.rows[k], cfg.network, cfg.ovae.label_draws, cfg.seed);
  });
  return ls;
}

inline TrainingSet training_set(const PreparedData& pd, const LabelSet& labels, FeatureKind kind) {
  const auto train_rows = pd.dataset.rows_with(data::Split::Train);
  std::vector<long long> position(std::size_t(pd.dataset.rows()), -1);
  for (std::size_t k = 0; k < train_rows.size(); ++k) position[std::size_t(train_rows[k])] = (long long)k;
  TrainingSet set;
  set.states = pd.norm.normalize(pd.dataset.states(train_rows));
  std::vector<double> raw(train_rows.size(), 0.0);
  set.mask.assign(train_rows.size(), 0);
  for (std::size_t k = 0; k < labels.rows.size(); ++k) {
    if (!labels.labeled[k]) continue;
    const long long pos = position[std::size_t(labels.rows[k])];
    require(pos >= 0, ErrorKind::Artifact, "labels: a labeled row is not a training row");
    raw[std::size_t(pos)] = labels.values[k];
    set.mask[std::size_t(pos)] = 1;
  }
  set.labels = prepare_labels(kind, raw, set.mask);
  return set;
}

struct AlignmentRow {
  std::string set;  // "test" or "generated"
  int latent = 0;   // 1-based
  double spearman = 0.0;
};

// Spearman between each latent coordinate and the raw feature: encoder means
// on labeled test rows, and (total load only) prior draws vs generated states.
inline std::vector<AlignmentRow> alignment(const RunConfig& cfg, const OvaeModel& model, const PreparedData& pd,
                                           const LabelSet& labels) {
  std::vector<AlignmentRow> out;
  std::vector<Eigen::Index> rows;
  std::vector<double> feat;
  for (std::size_t k = 0; k < labels.rows.size(); ++k)
    if (pd.dataset.split[std::size_t(labels.rows[k])] == data::Split::Test) {
      rows.push_back(labels.rows[k]);
      feat.push_back(labels.values[k]);
    }
  if (rows.size() >= 2) {
    const Gaussian enc = encode(model, pd.norm.normalize(pd.dataset.states(rows)));
    for (int l = 0; l < model.latent_dim; ++l) {
      std::vector<double> z(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) z[i] = enc.mu(l, Eigen::Index(i));
      out.push_back({"test", l + 1, stats::spearman(z, feat)});
    }
  }
  if (cfg.ovae.feature == FeatureKind::TotalLoad) {
    Rng rng = make_rng(cfg.seed, streams::kAssess, 0xA11);
    const auto n = Eigen::Index(cfg.ovae.alignment_samples);
    const Matrix z = standard_normal_matrix(model.latent_dim, n, rng);
    const Matrix noise = standard_normal_matrix(model.data_dim, n, rng);
    const Matrix gen = generate(model, z, noise);
    std::vector<double> total(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) total[std::size_t(i)] = gen.col(i).sum();
    for (int l = 0; l < model.latent_dim; ++l) {
      std::vector<double> zl(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) zl[std::size_t(i)] = z(l, i);
      out.push_back({"generated", l + 1, stats::spearman(zl, total)});
    }
  }
  return out;
}

struct IsFit {
  latent::EmResult em;
  latent::WeightedPilot pilot;
  double shortfall_fraction = 0.0;
};

// Pilot: prior latent draws decoded to demand states, each paired with one
// generation draw and weighted by the shortfall indicator; then EM.
inline IsFit fit_importance_sampler(const RunConfig& cfg, const OvaeModel& model) {
  const auto n = Eigen::Index(cfg.is.pilot_size);
  Matrix demands(model.data_dim, n);
  std::vector<double> z1(static_cast<std::size_t>(n));
  const auto blocks = std::size_t((n + detail::kBlock - 1) / detail::kBlock);
  parallel_for(blocks, cfg.threads, [&](std::size_t b) {
    const Eigen::Index start = Eigen::Index(b) * detail::kBlock;
    const Eigen::Index m = std::min(detail::kBlock, n - start);
    Rng rng = make_rng(cfg.seed, streams::kPilot, 0x100000 + b);
    const Matrix z = standard_normal_matrix(model.latent_dim, m, rng);
    const Matrix noise = standard_normal_matrix(model.data_dim, m, rng);
    demands.middleCols(start, m) = generate(model, z, noise);
    for (Eigen::Index i = 0; i < m; ++i) z1[std::size_t(start + i)] = z(0, i);
  });
  IsFit fit;
  fit.pilot = latent::pilot_weights(z1, demands, cfg.network, cfg.seed, cfg.threads);
  double hits = 0.0;
  for (double w : fit.pilot.weights) hits += w > 0.0 ? 1.0 : 0.0;
  fit.shortfall_fraction = hits / double(n);
  require(hits > 0.0, ErrorKind::Numeric, "fit-is: no shortfall states in pilot");
  fit.em = latent::fit_em(fit.pilot, cfg.is.alpha, latent::em_initial_guess(fit.pilot, cfg.is.alpha));
  return fit;
}

struct AssessmentRun {
  std::string method;
  std::vector<stats::RiskEstimate> estimates;  // one per configured metric
  double wall_time_s = 0.0;
};

namespace detail {

inline std::vector<stats::RiskEstimate> estimates_from(const RunConfig& cfg, const std::vector<double>& epns,
                                                       const std::vector<double>* weights, double seconds) {
  std::vector<stats::RiskEstimate> out;
  for (auto metric : cfg.assess.metrics) {
    std::vector<double> h(epns.size());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = adequacy::impact(epns[i], metric);
    auto e = weights ? stats::is_estimate(h, *weights, metric) : stats::mc_estimate(h, metric);
    e.wall_time_s = seconds;
    out.push_back(e);
  }
  return out;
}

}  // namespace detail

// Samples states from the OVAE with z1 drawn from `is` (alpha = 1 gives the
// unbiased prior) and evaluates the configured metrics.
inline AssessmentRun assess_ovae(const RunConfig& cfg, const OvaeModel& model, const latent::ISConfig& is,
                                 std::uint64_t stream_tag, long long n_samples) {
  const auto n = Eigen::Index(n_samples);
  std::vector<double> epns(static_cast<std::size_t>(n)), weights(static_cast<std::size_t>(n));
  const detail::Stopwatch clock;
  const auto blocks = std::size_t((n + detail::kBlock - 1) / detail::kBlock);
  parallel_for(blocks, cfg.threads, [&](std::size_t b) {
    const Eigen::Index start = Eigen::Index(b) * detail::kBlock;
    const Eigen::Index m = std::min(detail::kBlock, n - start);
    Rng rng = make_rng(cfg.seed, streams::kAssess, (stream_tag << 32) + b);
    const Matrix z = latent::sample_latent_batch(is, model.latent_dim, m, rng);
    const Matrix noise = standard_normal_matrix(model.data_dim, m, rng);
    const Matrix states = generate(model, z, noise);
    for (Eigen::Index i = 0; i < m; ++i) {
      const adequacy::SystemState s{adequacy::sample_generation(cfg.network, rng), states.col(i)};
      epns[std::size_t(start + i)] = adequacy::dispatch(cfg.network, s).epns;
      weights[std::size_t(start + i)] = latent::is_weight(is, z(0, i));
    }
  });
  const double seconds = clock.seconds();
  AssessmentRun run;
  run.method = is.alpha == 1.0 ? "ovae" : "ovae_is";
  run.wall_time_s = seconds;
  run.estimates = detail::estimates_from(cfg, epns, is.alpha == 1.0 ? nullptr : &weights, seconds);
  return run;
}

// Plain Monte Carlo over the historical/synthetic rows themselves.
inline AssessmentRun assess_data(const RunConfig& cfg, const data::DemandDataset& ds) {
  const auto rows = std::size_t(ds.rows());
  const auto draws = std::size_t(cfg.assess.data_draws);
  std::vector<double> epns(rows * draws);
  const detail::Stopwatch clock;
  parallel_for(rows, cfg.threads, [&](std::size_t r) {
    Rng rng = make_rng(cfg.seed, streams::kAssess, 0xDA7A00000000ULL + r);
    const Vector demand = ds.values.row(Eigen::Index(r)).transpose();
    for (std::size_t j = 0; j < draws; ++j) {
      const adequacy::SystemState s{adequacy::sample_generation(cfg.network, rng), demand};
      epns[r * draws + j] = adequacy::dispatch(cfg.network, s).epns;
    }
  });
  AssessmentRun run;
  run.method = "data_mc";
  run.wall_time_s = clock.seconds();
  run.estimates = detail::estimates_from(cfg, epns, nullptr, run.wall_time_s);
  return run;
}

// ---------------------------------------------------------------------------
// Artifact readers

inline PreparedData load_prepared(const Context& ctx) {
  const fs::path p = detail::need(ctx, artifacts::kDataset);
  detail::check_csv_header(ctx, p);
  PreparedData pd{data::load_csv(p.string()), {}};
  const nlohmann::json meta = detail::read_json(ctx, artifacts::kDatasetMeta);
  const auto tags = meta.at("split").get<std::string>();
  require(tags.size() == std::size_t(pd.dataset.rows()), ErrorKind::Artifact,
          "dataset_meta.json: split length does not match dataset.csv");
  for (char ch : tags) pd.dataset.split.push_back(ch == 'T' ? data::Split::Test : data::Split::Train);
  pd.norm = data::norm_stats_from_json(meta.at("norm_stats"));
  require(pd.norm.dims() == std::size_t(pd.dataset.dims()), ErrorKind::Artifact,
          "dataset_meta.json: norm stats dimension mismatch");
  require(pd.dataset.dims() == Eigen::Index(ctx.cfg.network.size()), ErrorKind::Config,
          "dataset has " + std::to_string(pd.dataset.dims()) + " areas but the network has " +
              std::to_string(ctx.cfg.network.size()));
  return pd;
}

inline LabelSet load_labels(const Context& ctx) {
  const auto t = detail::read_table(ctx, artifacts::kLabels);
  LabelSet ls;
  const auto c_row = t.col("state_id"), c_lab = t.col("labeled"), c_val = t.col("value");
  for (const auto& r : t.rows) {
    ls.rows.push_back(Eigen::Index(std::stoll(r[c_row])));
    ls.labeled.push_back(r[c_lab] == "1" ? 1 : 0);
    ls.values.push_back(detail::to_double(r[c_val]));
  }
  return ls;
}

inline OvaeModel load_model(const Context& ctx) {
  const nlohmann::json j = detail::read_json(ctx, artifacts::kModel);
  try {
    return model_from_json(j.at("model"));
  } catch (const Error& e) {
    fail(ErrorKind::Artifact, std::string("model.json: ") + e.what());
  }
}

inline latent::ISConfig load_is_config(const Context& ctx) {
  const nlohmann::json j = detail::read_json(ctx, artifacts::kIsFit);
  return latent::ISConfig{j.at("alpha").get<double>(), j.at("mu_is").get<double>(), j.at("sigma_is").get<double>()};
}

// ---------------------------------------------------------------------------
// Commands

inline void write_prepared(const Context& ctx, const PreparedData& pd, const std::string& source) {
  std::ostringstream csv;
  csv << ctx.header();
  data::write_csv(csv, pd.dataset);
  detail::write_text(ctx.path(artifacts::kDataset), csv.str());
  std::string tags;
  for (auto s : pd.dataset.split) tags.push_back(s == data::Split::Test ? 'T' : 'R');
  detail::write_json(ctx, artifacts::kDatasetMeta,
                     {{"source", source},
                      {"areas", pd.dataset.areas},
                      {"rows", pd.dataset.rows()},
                      {"train_rows", pd.dataset.rows_with(data::Split::Train).size()},
                      {"test_rows", pd.dataset.rows_with(data::Split::Test).size()},
                      {"split_ratio", {ctx.cfg.data.train_parts, ctx.cfg.data.test_parts}},
                      {"split", tags},
                      {"norm_stats", data::to_json(pd.norm)}});
  detail::write_text(ctx.path(artifacts::kConfigEcho), config::echo_toml(ctx.cfg));
}

inline void cmd_synth(const Context& ctx) {
  require(ctx.cfg.data.source == "synthetic", ErrorKind::Config,
          "synth: data.source is \"csv\"; use the ingest command");
  const detail::Stopwatch clock;
  write_prepared(ctx, synthesize(ctx.cfg), "synthetic");
  detail::record_timing(ctx, "synth", clock.seconds());
}

inline void cmd_ingest(const Context& ctx) {
  require(ctx.cfg.data.source == "csv", ErrorKind::Config, "ingest: data.source is not \"csv\"; use the synth command");
  const detail::Stopwatch clock;
  data::DemandDataset ds;
  try {
    ds = data::load_csv(ctx.cfg.data.csv);
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("ingest: ") + e.what());
  }
  require(ds.dims() == Eigen::Index(ctx.cfg.network.size()), ErrorKind::Config,
          "ingest: CSV has " + std::to_string(ds.dims()) + " areas but the network has " +
              std::to_string(ctx.cfg.network.size()));
  write_prepared(ctx, prepare(std::move(ds), ctx.cfg), "csv:" + fs::path(ctx.cfg.data.csv).filename().string());
  detail::record_timing(ctx, "ingest", clock.seconds());
}

inline void cmd_label(const Context& ctx) {
  const detail::Stopwatch clock;
  const PreparedData pd = load_prepared(ctx);
  const LabelSet ls = compute_labels(ctx.cfg, pd.dataset, ctx.cfg.ovae.model.labeled_fraction);
  std::ostringstream out;
  out << ctx.header() << "state_id,split,labeled,feature_kind,value\n";
  const char* kind = to_string(ctx.cfg.ovae.feature);
  for (std::size_t k = 0; k < ls.rows.size(); ++k)
    out << ls.rows[k] << ',' << (pd.dataset.split[std::size_t(ls.rows[k])] == data::Split::Test ? "test" : "train")
        << ',' << int(ls.labeled[k]) << ',' << kind << ',' << detail::fmt(ls.values[k]) << '\n';
  detail::write_text(ctx.path(artifacts::kLabels), out.str());
  detail::record_timing(ctx, "label", clock.seconds());
}

inline void cmd_train(const Context& ctx) {
  const detail::Stopwatch clock;
  const PreparedData pd = load_prepared(ctx);
  const LabelSet ls = load_labels(ctx);
  const TrainingSet set = training_set(pd, ls, ctx.cfg.ovae.feature);
  const TrainResult res = train(set, pd.norm, ctx.cfg.ovae.model);
  detail::write_json(ctx, artifacts::kModel, {{"model", to_json(res.model)}, {"feature", to_string(ctx.cfg.ovae.feature)}});
  std::ostringstream hist;
  hist << ctx.header();
  write_loss_history(hist, res.history);
  detail::write_text(ctx.path(artifacts::kLossHistory), hist.str());
  std::ostringstream al;
  al << ctx.header() << "set,latent,spearman\n";
  for (const auto& r : alignment(ctx.cfg, res.model, pd, ls))
    al << r.set << ',' << r.latent << ',' << detail::fmt(r.spearman) << '\n';
  detail::write_text(ctx.path(artifacts::kAlignment), al.str());
  detail::record_timing(ctx, "train", clock.seconds());
}

inline void cmd_fit_is(const Context& ctx) {
  const detail::Stopwatch clock;
  const OvaeModel model = load_model(ctx);
  const IsFit fit = fit_importance_sampler(ctx.cfg, model);
  std::ostringstream pilot;
  pilot << ctx.header() << "z1,weight\n";
  for (std::size_t i = 0; i < fit.pilot.z1_values.size(); ++i)
    pilot << detail::fmt(fit.pilot.z1_values[i]) << ',' << detail::fmt(fit.pilot.weights[i]) << '\n';
  detail::write_text(ctx.path(artifacts::kPilot), pilot.str());
  detail::write_json(ctx, artifacts::kIsFit,
                     {{"alpha", fit.em.config.alpha},
                      {"mu_is", fit.em.config.mu_is},
                      {"sigma_is", fit.em.config.sigma_is},
                      {"em_iterations", fit.em.iterations},
                      {"em_converged", fit.em.converged},
                      {"log_likelihood", fit.em.log_likelihood.back()},
                      {"pilot_size", ctx.cfg.is.pilot_size},
                      {"shortfall_fraction", fit.shortfall_fraction}});
  detail::record_timing(ctx, "fit-is", clock.seconds());
}

inline void cmd_assess(const Context& ctx) {
  const detail::Stopwatch clock;
  const PreparedData pd = load_prepared(ctx);
  const OvaeModel model = load_model(ctx);
  const latent::ISConfig is = load_is_config(ctx);
  std::vector<AssessmentRun> runs;
  runs.push_back(assess_data(ctx.cfg, pd.dataset));
  runs.push_back(assess_ovae(ctx.cfg, model, latent::ISConfig{1.0, 0.0, 1.0}, 1, ctx.cfg.assess.n_samples));
  runs.push_back(assess_ovae(ctx.cfg, model, is, 2, ctx.cfg.assess.n_samples));
  std::ostringstream out;
  out << ctx.header() << "method,metric,value,std_error,n_samples,wall_time_s\n";
  for (const auto& run : runs)
    for (const auto& e : run.estimates)
      out << run.method << ',' << adequacy::to_string(e.metric) << ',' << detail::fmt(e.value) << ','
          << detail::fmt(e.std_error) << ',' << e.n_samples << ',' << detail::fmt(e.wall_time_s) << '\n';
  detail::write_text(ctx.path(artifacts::kEstimates), out.str());
  detail::record_timing(ctx, "assess", clock.seconds());
}

inline void cmd_stat_tests(const Context& ctx) {
  const detail::Stopwatch clock;
  const PreparedData pd = load_prepared(ctx);
  const OvaeModel model = load_model(ctx);
  const auto& st = ctx.cfg.stat_tests;
  Rng rng = make_rng(ctx.cfg.seed, streams::kStatTests, 0);
  const auto n_gen = Eigen::Index(st.generated_size);
  const Matrix gen = generate(model, standard_normal_matrix(model.latent_dim, n_gen, rng),
                              standard_normal_matrix(model.data_dim, n_gen, rng));
  const Matrix test = pd.dataset.states(pd.dataset.rows_with(data::Split::Test));
  const Matrix train_states = pd.dataset.states(pd.dataset.rows_with(data::Split::Train));

  const auto ks = stats::repeated_ks(test, gen, st.repetitions, st.subsample_size, ctx.cfg.seed, ctx.cfg.threads);
  const auto en = stats::repeated_energy(test, gen, st.energy_repetitions, st.subsample_size, st.permutations,
                                         ctx.cfg.seed, ctx.cfg.threads);
  std::ostringstream ks_out;
  ks_out << ctx.header() << "repetition,area,p_value\n";
  for (std::size_t r = 0; r < ks.p_values.size(); ++r)
    for (std::size_t a = 0; a < ks.p_values[r].size(); ++a)
      ks_out << r + 1 << ',' << pd.dataset.areas[a] << ',' << detail::fmt(ks.p_values[r][a]) << '\n';
  detail::write_text(ctx.path(artifacts::kKs), ks_out.str());
  std::ostringstream en_out;
  en_out << ctx.header() << "repetition,p_value\n";
  for (std::size_t r = 0; r < en.p_values.size(); ++r) en_out << r + 1 << ',' << detail::fmt(en.p_values[r][0]) << '\n';
  detail::write_text(ctx.path(artifacts::kEnergy), en_out.str());

  const stats::Autoencoder ae = stats::train_autoencoder(pd.norm.normalize(train_states), st.ae);
  const auto ae_test = stats::autoencoder_test(ae, pd.norm.normalize(test));
  const auto ae_gen = stats::autoencoder_test(ae, pd.norm.normalize(gen));
  std::ostringstream ae_out;
  ae_out << ctx.header() << "set,index,error\n";
  for (std::size_t i = 0; i < ae_test.error_values.size(); ++i)
    ae_out << "test," << i << ',' << detail::fmt(ae_test.error_values[i]) << '\n';
  for (std::size_t i = 0; i < ae_gen.error_values.size(); ++i)
    ae_out << "generated," << i << ',' << detail::fmt(ae_gen.error_values[i]) << '\n';
  detail::write_text(ctx.path(artifacts::kAeErrors), ae_out.str());
  auto ae_gen_json = stats::summary_json(ae_gen);
  ae_gen_json["median_ratio_to_test"] = ae_test.errors.median > 0 ? ae_gen.errors.median / ae_test.errors.median : 0.0;
  detail::write_json(ctx, artifacts::kStatSummary,
                     {{"ks", stats::summary_json(ks)},
                      {"energy", stats::summary_json(en)},
                      {"autoencoder_test_set", stats::summary_json(ae_test)},
                      {"autoencoder_generated", ae_gen_json}});
  detail::record_timing(ctx, "stat-tests", clock.seconds());
}

struct EstimateRow {
  stats::RiskEstimate lole, eens;
  bool has_lole = false, has_eens = false;
};

// Columns method, metric, value, std_error, wall_time_s and optionally n_samples.
inline std::map<std::string, EstimateRow> parse_estimates(const detail::Table& t) {
  std::map<std::string, EstimateRow> out;
  const bool has_n = std::find(t.columns.begin(), t.columns.end(), "n_samples") != t.columns.end();
  for (const auto& r : t.rows) {
    stats::RiskEstimate e;
    const std::string metric = r[t.col("metric")];
    require(metric == "LOLE" || metric == "EENS", ErrorKind::Artifact, "estimates: unknown metric '" + metric + "'");
    e.metric = metric == "LOLE" ? adequacy::Metric::LOLE : adequacy::Metric::EENS;
    e.value = detail::to_double(r[t.col("value")]);
    e.std_error = detail::to_double(r[t.col("std_error")]);
    e.n_samples = has_n ? std::stoll(r[t.col("n_samples")]) : 0;
    e.wall_time_s = detail::to_double(r[t.col("wall_time_s")]);
    auto& row = out[r[t.col("method")]];
    if (metric == "LOLE") {
      row.lole = e;
      row.has_lole = true;
    } else {
      row.eens = e;
      row.has_eens = true;
    }
  }
  return out;
}

inline std::map<std::string, EstimateRow> load_estimates(const Context& ctx) {
  return parse_estimates(detail::read_table(ctx, artifacts::kEstimates));
}

// Speedup of `a` over `b`, or nothing when undefined (zero estimates).
inline std::optional<double> safe_speedup(const stats::RiskEstimate& a, const stats::RiskEstimate& b) {
  if (!(a.value > 0 && b.value > 0 && a.std_error > 0 && b.std_error > 0 && a.wall_time_s > 0 && b.wall_time_s > 0))
    return std::nullopt;
  return stats::speedup(a, b);
}

struct AdequacyRow {
  std::string model;
  std::optional<double> mu_is, sigma_is;
  double time_s = 0.0;
  std::optional<double> lole, lole_se, eens, eens_se;
  std::optional<double> speedup_lole, speedup_eens;
};

// Rows "Data MC", "OVAE", "OVAE+IS"; speedups of OVAE+IS over OVAE.
inline std::vector<AdequacyRow> adequacy_rows(const std::map<std::string, EstimateRow>& est,
                                              const latent::ISConfig& is) {
  std::vector<AdequacyRow> out;
  const EstimateRow* base = est.count("ovae") ? &est.at("ovae") : nullptr;
  for (const char* method : {"data_mc", "ovae", "ovae_is"}) {
    if (!est.count(method)) continue;
    const auto& r = est.at(method);
    const bool biased = std::string(method) == "ovae_is";
    AdequacyRow row;
    row.model = std::string(method) == "data_mc" ? "Data MC" : biased ? "OVAE+IS" : "OVAE";
    row.time_s = r.has_lole ? r.lole.wall_time_s : r.eens.wall_time_s;
    if (r.has_lole) {
      row.lole = r.lole.value;
      row.lole_se = r.lole.std_error;
    }
    if (r.has_eens) {
      row.eens = r.eens.value;
      row.eens_se = r.eens.std_error;
    }
    if (biased) {
      row.mu_is = is.mu_is;
      row.sigma_is = is.sigma_is;
      if (base && r.has_lole && base->has_lole) row.speedup_lole = safe_speedup(r.lole, base->lole);
      if (base && r.has_eens && base->has_eens) row.speedup_eens = safe_speedup(r.eens, base->eens);
    }
    out.push_back(std::move(row));
  }
  return out;
}

inline void cmd_report(const Context& ctx) {
  const detail::Stopwatch clock;
  const auto est = load_estimates(ctx);
  const latent::ISConfig is = load_is_config(ctx);
  const OvaeModel model = load_model(ctx);
  const PreparedData pd = load_prepared(ctx);

  const auto table_rows = adequacy_rows(est, is);
  auto cell = [](const std::optional<double>& v) { return v ? detail::fmt(*v) : std::string(); };
  std::ostringstream table;
  table << ctx.header()
        << "model,mu_is,sigma_is,time_s,lole,lole_se,eens,eens_se,speedup_lole,speedup_eens\n";
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table_rows) {
    table << r.model << ',' << cell(r.mu_is) << ',' << cell(r.sigma_is) << ',' << detail::fmt(r.time_s) << ','
          << cell(r.lole) << ',' << cell(r.lole_se) << ',' << cell(r.eens) << ',' << cell(r.eens_se) << ','
          << cell(r.speedup_lole) << ',' << cell(r.speedup_eens) << '\n';
    nlohmann::json row{{"model", r.model}};
    if (r.lole) row["lole"] = {{"value", *r.lole}, {"std_error", *r.lole_se}};
    if (r.eens) row["eens"] = {{"value", *r.eens}, {"std_error", *r.eens_se}};
    if (r.mu_is) row["is"] = {{"alpha", is.alpha}, {"mu_is", is.mu_is}, {"sigma_is", is.sigma_is}};
    rows.push_back(row);
  }
  detail::write_text(ctx.path(artifacts::kAdequacyTable), table.str());

  // Total-load histograms: data, unbiased OVAE, OVAE with the fitted IS
  // density and with z1 ~ N(2, 0.5^2).
  Rng rng = make_rng(ctx.cfg.seed, streams::kAssess, 0x4157);
  const auto n = Eigen::Index(ctx.cfg.stat_tests.generated_size);
  const Matrix z = standard_normal_matrix(model.latent_dim, n, rng);
  const Matrix noise = standard_normal_matrix(model.data_dim, n, rng);
  Matrix z_shift = z;
  z_shift.row(0) = (2.0 + 0.5 * z.row(0).array()).matrix();
  const Matrix z_is = latent::sample_latent_batch(is, model.latent_dim, n, rng);
  auto totals = [](const Matrix& states) {
    std::vector<double> t(std::size_t(states.cols()));
    for (Eigen::Index i = 0; i < states.cols(); ++i) t[std::size_t(i)] = states.col(i).sum();
    return t;
  };
  std::vector<double> data_tot(std::size_t(pd.dataset.rows()));
  for (Eigen::Index i = 0; i < pd.dataset.rows(); ++i) data_tot[std::size_t(i)] = pd.dataset.values.row(i).sum();
  const std::vector<std::vector<double>> series{data_tot, totals(generate(model, z, noise)),
                                                totals(generate(model, z_is, noise)),
                                                totals(generate(model, z_shift, noise))};
  double lo = *std::min_element(data_tot.begin(), data_tot.end()), hi = *std::max_element(data_tot.begin(), data_tot.end());
  for (const auto& s : series) {
    lo = std::min(lo, *std::min_element(s.begin(), s.end()));
    hi = std::max(hi, *std::max_element(s.begin(), s.end()));
  }
  const int bins = 40;
  const double width = (hi - lo) / bins;
  std::vector<std::vector<double>> counts(series.size(), std::vector<double>(bins, 0.0));
  for (std::size_t k = 0; k < series.size(); ++k) {
    for (double v : series[k]) counts[k][std::size_t(std::clamp(int((v - lo) / width), 0, bins - 1))] += 1.0;
    for (auto& c : counts[k]) c /= double(series[k].size()) * width;
  }
  std::ostringstream hist;
  hist << ctx.header() << "bin_lo,bin_hi,data,ovae,ovae_is,ovae_z1_shifted\n";
  for (int b = 0; b < bins; ++b) {
    hist << detail::fmt(lo + b * width) << ',' << detail::fmt(lo + (b + 1) * width);
    for (const auto& c : counts) hist << ',' << detail::fmt(c[std::size_t(b)]);
    hist << '\n';
  }
  detail::write_text(ctx.path(artifacts::kHistogram), hist.str());
  std::vector<double> train_tot;
  for (auto r : pd.dataset.rows_with(data::Split::Train)) train_tot.push_back(pd.dataset.values.row(r).sum());
  const auto tr = stats::mc_estimate(train_tot);
  const double train_sd = tr.std_error * std::sqrt(double(train_tot.size()));
  detail::write_json(ctx, artifacts::kReport,
                     {{"adequacy", rows},
                      {"total_load",
                       {{"train_sd", train_sd},
                        {"median_data", stats::median(data_tot)},
                        {"median_ovae", stats::median(series[1])},
                        {"median_ovae_is", stats::median(series[2])},
                        {"median_ovae_z1_shifted", stats::median(series[3])}}}});
  detail::write_text(ctx.path(artifacts::kConfigEcho), config::echo_toml(ctx.cfg));
  detail::record_timing(ctx, "report", clock.seconds());
}

inline void run_all(const Context& ctx) {
  if (ctx.cfg.data.source == "csv")
    cmd_ingest(ctx);
  else
    cmd_synth(ctx);
  cmd_label(ctx);
  cmd_train(ctx);
  cmd_fit_is(ctx);
  cmd_assess(ctx);
  cmd_stat_tests(ctx);
  cmd_report(ctx);
}

}  // namespace ovae::pipeline
