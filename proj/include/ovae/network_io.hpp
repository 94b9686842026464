#pragma once

// Network description files:
//
//   [[area]]
//   name = "A1"
//   conventional_capacity = 11000   # MW, split into units by unit_size_rule
//   wind_nameplate = 2000           # MW
//   availability = 0.8              # optional
//
//   [[line]]
//   from = "A1"
//   to = "A2"
//   f_min = -1500                   # MW, positive direction from -> to
//   f_max = 1500

#include <map>
#include <string>

#include <toml.hpp>

#include "ovae/adequacy.hpp"
#include "ovae/error.hpp"

namespace ovae::netio {

namespace detail {

inline double number_at(const toml::table& t, const std::string& key, const std::string& where) {
  const auto* node = t.get(key);
  require(node != nullptr, ErrorKind::Config, where + ": missing key '" + key + "'");
  if (auto v = node->value<double>()) return *v;
  fail(ErrorKind::Config, where + ": key '" + key + "' must be a number");
}

}  // namespace detail

inline adequacy::NetworkModel network_from_toml(const toml::table& root, const std::string& source = "<network>") {
  adequacy::NetworkModel net;
  std::map<std::string, std::size_t> index;
  const auto* areas = root["area"].as_array();
  require(areas != nullptr && !areas->empty(), ErrorKind::Config, source + ": no [[area]] entries");
  for (std::size_t i = 0; i < areas->size(); ++i) {
    const auto* t = areas->get(i)->as_table();
    const std::string where = source + ": area #" + std::to_string(i + 1);
    require(t != nullptr, ErrorKind::Config, where + " is not a table");
    const auto name = (*t)["name"].value<std::string>();
    require(name.has_value() && !name->empty(), ErrorKind::Config, where + ": missing name");
    require(!index.count(*name), ErrorKind::Config, where + ": duplicate area name '" + *name + "'");
    const double cap = detail::number_at(*t, "conventional_capacity", where);
    const double wind = t->contains("wind_nameplate") ? detail::number_at(*t, "wind_nameplate", where) : 0.0;
    const double avail = t->contains("availability") ? detail::number_at(*t, "availability", where) : 0.8;
    require(cap >= 0.0 && wind >= 0.0, ErrorKind::Config, where + ": capacities must be nonnegative");
    require(avail > 0.0 && avail <= 1.0, ErrorKind::Config, where + ": availability must lie in (0,1]");
    index[*name] = net.areas.size();
    net.areas.push_back(adequacy::make_area(*name, cap, wind, avail));
  }
  if (const auto* lines = root["line"].as_array()) {
    for (std::size_t i = 0; i < lines->size(); ++i) {
      const auto* t = lines->get(i)->as_table();
      const std::string where = source + ": line #" + std::to_string(i + 1);
      require(t != nullptr, ErrorKind::Config, where + " is not a table");
      const auto from = (*t)["from"].value<std::string>();
      const auto to = (*t)["to"].value<std::string>();
      require(from && to, ErrorKind::Config, where + ": needs 'from' and 'to' area names");
      require(index.count(*from) && index.count(*to), ErrorKind::Config,
              where + ": unknown area '" + (index.count(*from) ? *to : *from) + "'");
      require(*from != *to, ErrorKind::Config, where + ": self-loop");
      adequacy::Line l{index[*from], index[*to], detail::number_at(*t, "f_min", where),
                       detail::number_at(*t, "f_max", where)};
      require(l.f_min <= l.f_max, ErrorKind::Config, where + ": f_min > f_max");
      if (l.from > l.to) l = {l.to, l.from, -l.f_max, -l.f_min};
      net.lines.push_back(l);
    }
  }
  net.validate();
  return net;
}

inline adequacy::NetworkModel load_network(const std::string& path) {
  try {
    return network_from_toml(toml::parse_file(path), path);
  } catch (const toml::parse_error& e) {
    fail(ErrorKind::Io, path + ": " + std::string(e.description()));
  }
}

}  // namespace ovae::netio
