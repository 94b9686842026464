#pragma once

// Demand datasets: synthetic generation, CSV ingestion, weekly-block
// train/test splitting and min-max normalization.

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovae/error.hpp"
#include "ovae/rng.hpp"

namespace ovae::data {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr int kHoursPerWeek = 168;

enum class Split : unsigned char { Train, Test };

struct DemandDataset {
  std::vector<std::string> timestamps;  // as read/written
  std::vector<std::int64_t> hours;      // hour index, strictly increasing
  std::vector<std::string> areas;
  Matrix values;                        // T x d, MW
  std::vector<Split> split;             // empty until split_weekly

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index dims() const { return values.cols(); }

  std::vector<Eigen::Index> rows_with(Split s) const {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split[i] == s) out.push_back(Eigen::Index(i));
    return out;
  }

  // Selected rows as a d x n column-per-state matrix.
  Matrix states(const std::vector<Eigen::Index>& idx) const {
    Matrix out(values.cols(), Eigen::Index(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out.col(Eigen::Index(k)) = values.row(idx[k]).transpose();
    return out;
  }
};

// ---------------------------------------------------------------------------
// Timestamps: integer hour indices or ISO-8601 "YYYY-MM-DDTHH[:MM[:SS]][Z]".

inline std::int64_t parse_timestamp(const std::string& s) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec == std::errc() && ptr == s.data() + s.size()) return value;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  char sep = 0;
  const int n = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &sec);
  require(n >= 5 && (sep == 'T' || sep == ' ') && mi == 0 && sec == 0, ErrorKind::Io,
          "unrecognized hourly timestamp '" + s + "'");
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{unsigned(mo)}, day{unsigned(d)}};
  require(ymd.ok() && h >= 0 && h < 24, ErrorKind::Io, "invalid timestamp '" + s + "'");
  return std::int64_t(sys_days{ymd}.time_since_epoch().count()) * 24 + h;
}

inline std::string format_timestamp(std::int64_t hour) {
  using namespace std::chrono;
  const auto day_index = hour >= 0 ? hour / 24 : (hour - 23) / 24;
  const int h = int(hour - day_index * 24);
  const year_month_day ymd{sys_days{days{day_index}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:00Z", int(ymd.year()), unsigned(ymd.month()),
                unsigned(ymd.day()), h);
  return buf;
}

// ---------------------------------------------------------------------------
// Synthetic generator

struct SynthConfig {
  int n_areas = 5;
  int hours = 17520;
  std::uint64_t seed = 1;
  std::vector<double> base_load{9000.0, 6500.0, 4000.0, 7500.0, 3000.0};
  std::vector<std::string> area_names{};  // defaults to A1..An
  double seasonal_amplitude = 0.18;
  double diurnal_amplitude = 0.12;
  std::vector<double> diurnal_phase_hours{};  // per-area shift; defaults to 0
  double correlation = 0.7;                   // of the noise factors between areas
  double noise_scale = 0.06;
  double persistence = 0.9;                   // AR(1) coefficient of the noise factors
  std::string start = "2017-01-01T00:00Z";

  void validate() const {
    require(n_areas >= 1 && hours >= 1, ErrorKind::Config, "synth: n_areas and hours must be positive");
    require(base_load.size() == std::size_t(n_areas), ErrorKind::Config,
            "synth: base_load needs one entry per area");
    for (double b : base_load) require(b > 0.0, ErrorKind::Config, "synth: base loads must be positive");
    require(area_names.empty() || area_names.size() == std::size_t(n_areas), ErrorKind::Config,
            "synth: area_names needs one entry per area");
    require(diurnal_phase_hours.empty() || diurnal_phase_hours.size() == std::size_t(n_areas),
            ErrorKind::Config, "synth: diurnal_phase_hours needs one entry per area");
    require(seasonal_amplitude >= 0 && diurnal_amplitude >= 0 && seasonal_amplitude + diurnal_amplitude < 1.0,
            ErrorKind::Config, "synth: amplitudes must be nonnegative and sum below 1");
    require(correlation >= 0.0 && correlation <= 1.0, ErrorKind::Config, "synth: correlation must lie in [0,1]");
    require(noise_scale >= 0.0, ErrorKind::Config, "synth: noise_scale must be nonnegative");
    require(persistence >= 0.0 && persistence < 1.0, ErrorKind::Config, "synth: persistence must lie in [0,1)");
  }
};

// Standardized AR(1) factors per area: sqrt(rho)*common + sqrt(1-rho)*own.
// Exposed separately so the factor correlation can be checked directly.
inline Matrix synthetic_noise_factors(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, streams::kSynth);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double phi = cfg.persistence;
  const double innov = std::sqrt(1.0 - phi * phi);
  const double wc = std::sqrt(cfg.correlation), wi = std::sqrt(1.0 - cfg.correlation);
  Matrix eta(cfg.hours, cfg.n_areas);
  double common = normal(rng);
  std::vector<double> own(std::size_t(cfg.n_areas));
  for (auto& o : own) o = normal(rng);
  for (int t = 0; t < cfg.hours; ++t) {
    if (t > 0) {
      common = phi * common + innov * normal(rng);
      for (auto& o : own) o = phi * o + innov * normal(rng);
    }
    for (int a = 0; a < cfg.n_areas; ++a) eta(t, a) = wc * common + wi * own[std::size_t(a)];
  }
  return eta;
}

inline DemandDataset generate_synthetic(const SynthConfig& cfg) {
  const Matrix eta = synthetic_noise_factors(cfg);
  DemandDataset ds;
  for (int a = 0; a < cfg.n_areas; ++a)
    ds.areas.push_back(cfg.area_names.empty() ? "A" + std::to_string(a + 1) : cfg.area_names[std::size_t(a)]);
  const std::int64_t t0 = parse_timestamp(cfg.start);
  ds.values.resize(cfg.hours, cfg.n_areas);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (int t = 0; t < cfg.hours; ++t) {
    ds.hours.push_back(t0 + t);
    ds.timestamps.push_back(format_timestamp(t0 + t));
    const double season = cfg.seasonal_amplitude * std::cos(two_pi * double(t) / 8760.0);
    for (int a = 0; a < cfg.n_areas; ++a) {
      const double shift = cfg.diurnal_phase_hours.empty() ? 0.0 : cfg.diurnal_phase_hours[std::size_t(a)];
      // Daily peak around 18:00 local.
      const double diurnal = cfg.diurnal_amplitude * std::cos(two_pi * (double(t) - 18.0 - shift) / 24.0);
      const double noise = 1.0 + cfg.noise_scale * eta(t, a);
      const double base = cfg.base_load[std::size_t(a)];
      ds.values(t, a) = std::max(1e-3 * base, base * (1.0 + season + diurnal) * noise);
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// CSV: header "timestamp,<area>,...", one row per hour.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  for (auto& c : cells) {
    const auto b = c.find_first_not_of(" \t\r");
    const auto e = c.find_last_not_of(" \t\r");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

}  // namespace detail

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline DemandDataset read_csv(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  auto where = [&](std::size_t row) { return source + ":" + std::to_string(row); };
  do {
    require(bool(std::getline(in, line)), ErrorKind::Io, source + ": empty file");
    ++line_no;
  } while (line.empty() || line[0] == '#');
  const auto header = detail::split_csv_line(line);
  require(header.size() >= 2 && header[0] == "timestamp", ErrorKind::Io,
          where(line_no) + ": header must be 'timestamp,<area>,...'");
  DemandDataset ds;
  ds.areas.assign(header.begin() + 1, header.end());
  std::vector<double> flat;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    const auto cells = detail::split_csv_line(line);
    require(cells.size() == header.size(), ErrorKind::Io,
            where(line_no) + ": expected " + std::to_string(header.size()) + " cells, found " +
                std::to_string(cells.size()));
    const std::int64_t hour = [&] {
      try {
        return parse_timestamp(cells[0]);
      } catch (const Error& e) {
        fail(ErrorKind::Io, where(line_no) + ": " + e.what());
      }
    }();
    require(ds.hours.empty() || hour > ds.hours.back(), ErrorKind::Io,
            where(line_no) + ": timestamps must be strictly increasing");
    ds.hours.push_back(hour);
    ds.timestamps.push_back(cells[0]);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const auto& s = cells[c];
      require(!s.empty(), ErrorKind::Io, where(line_no) + ": missing value in column '" + header[c] + "'");
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      require(ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(v), ErrorKind::Io,
              where(line_no) + ": non-numeric value '" + s + "' in column '" + header[c] + "'");
      require(v >= 0.0, ErrorKind::Io, where(line_no) + ": negative demand in column '" + header[c] + "'");
      flat.push_back(v);
    }
  }
  const auto d = Eigen::Index(ds.areas.size());
  const auto t = Eigen::Index(ds.hours.size());
  require(t > 0, ErrorKind::Io, source + ": no data rows");
  ds.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), t, d);
  return ds;
}

inline DemandDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), ErrorKind::Io, "cannot open '" + path + "'");
  return read_csv(in, path);
}

inline void write_csv(std::ostream& out, const DemandDataset& ds) {
  out << "timestamp";
  for (const auto& a : ds.areas) out << ',' << a;
  out << '\n';
  for (Eigen::Index t = 0; t < ds.rows(); ++t) {
    out << ds.timestamps[std::size_t(t)];
    for (Eigen::Index a = 0; a < ds.dims(); ++a) out << ',' << format_double(ds.values(t, a));
    out << '\n';
  }
}

inline void save_csv(const std::string& path, const DemandDataset& ds) {
  std::ofstream out(path);
  require(bool(out), ErrorKind::Io, "cannot write '" + path + "'");
  write_csv(out, ds);
}

// ---------------------------------------------------------------------------
// Weekly split: contiguous 168-row blocks go to train/test at train:test
// ratio; a trailing partial week always goes to train.

inline void split_weekly(DemandDataset& ds, std::uint64_t seed, int train_parts = 4, int test_parts = 1) {
  require(train_parts > 0 && test_parts >= 0, ErrorKind::Config, "split: ratio parts must be positive");
  const auto rows = std::size_t(ds.rows());
  const std::size_t full_weeks = rows / kHoursPerWeek;
  const auto n_test = std::size_t(std::llround(double(full_weeks) * test_parts / double(train_parts + test_parts)));
  std::vector<std::size_t> order(full_weeks);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, streams::kSplit);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_test(full_weeks, false);
  for (std::size_t k = 0; k < n_test; ++k) is_test[order[k]] = true;
  ds.split.assign(rows, Split::Train);
  for (std::size_t w = 0; w < full_weeks; ++w)
    if (is_test[w])
      for (std::size_t r = w * kHoursPerWeek; r < (w + 1) * kHoursPerWeek; ++r) ds.split[r] = Split::Test;
}

// ---------------------------------------------------------------------------
// Min-max normalization to [0, 1]. Zero-range columns map to 0 and are
// flagged; denormalizing them returns the constant.

struct NormStats {
  std::vector<double> min;
  std::vector<double> max;
  std::vector<bool> zero_range;

  std::size_t dims() const { return min.size(); }

  static NormStats fit(const Matrix& states) {  // d x n
    require(states.cols() > 0, ErrorKind::Domain, "normalization needs at least one row");
    NormStats s;
    for (Eigen::Index j = 0; j < states.rows(); ++j) {
      const double lo = states.row(j).minCoeff(), hi = states.row(j).maxCoeff();
      s.min.push_back(lo);
      s.max.push_back(hi);
      s.zero_range.push_back(!(hi > lo));
    }
    return s;
  }

  Matrix normalize(const Matrix& states) const {
    require(std::size_t(states.rows()) == dims(), ErrorKind::Dimension, "normalize: dimension mismatch");
    Matrix out(states.rows(), states.cols());
    for (Eigen::Index j = 0; j < states.rows(); ++j) {
      const auto uj = std::size_t(j);
      if (zero_range[uj])
        out.row(j).setZero();
      else
        out.row(j) = (states.row(j).array() - min[uj]) / (max[uj] - min[uj]);
    }
    return out;
  }

  Matrix denormalize(const Matrix& scaled) const {
    require(std::size_t(scaled.rows()) == dims(), ErrorKind::Dimension, "denormalize: dimension mismatch");
    Matrix out(scaled.rows(), scaled.cols());
    for (Eigen::Index j = 0; j < scaled.rows(); ++j) {
      const auto uj = std::size_t(j);
      if (zero_range[uj])
        out.row(j).setConstant(min[uj]);
      else
        out.row(j) = scaled.row(j).array() * (max[uj] - min[uj]) + min[uj];
    }
    return out;
  }
};

inline nlohmann::json to_json(const NormStats& s) {
  return {{"min", s.min}, {"max", s.max}, {"zero_range", s.zero_range}};
}

inline NormStats norm_stats_from_json(const nlohmann::json& j) {
  NormStats s;
  s.min = j.at("min").get<std::vector<double>>();
  s.max = j.at("max").get<std::vector<double>>();
  s.zero_range = j.at("zero_range").get<std::vector<bool>>();
  require(s.min.size() == s.max.size() && s.min.size() == s.zero_range.size(), ErrorKind::Io,
          "norm_stats arrays differ in length");
  return s;
}

}  // namespace ovae::data
