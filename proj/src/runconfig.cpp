// Copyright 2026 The dermarl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <system_error>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "der/cli.hpp"

namespace der::cli {
namespace {

namespace pt = boost::property_tree;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// An inline comment starts at ';' or '#' preceded by whitespace, so payoff
// rows ("1,2;3,4") and wall cells ("..#..") survive.
std::string strip_comment(std::string_view s) {
  for (std::size_t i = 1; i < s.size(); ++i) {
    if ((s[i] == ';' || s[i] == '#') && (s[i - 1] == ' ' || s[i - 1] == '\t')) {
      return trim(s.substr(0, i));
    }
  }
  return trim(s);
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* b = text.data();
  const char* e = b + text.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || text.empty()) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const char* b = text.data();
  const char* e = b + text.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || text.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + text +
                      "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::string format_payoff(const envs::MatrixGame::Payoff& payoff) {
  std::string out;
  for (std::size_t r = 0; r < payoff.size(); ++r) {
    if (r > 0) out += ';';
    for (std::size_t c = 0; c < payoff[r].size(); ++c) {
      if (c > 0) out += ',';
      out += fmt(payoff[r][c]);
    }
  }
  return out;
}

envs::MatrixGame::Payoff parse_payoff(const std::string& key,
                                      const std::string& text) {
  envs::MatrixGame::Payoff payoff;
  for (const std::string& row : split(text, ';')) {
    std::vector<double> values;
    for (const std::string& cell : split(row, ',')) {
      values.push_back(parse_double(key, cell));
    }
    payoff.push_back(std::move(values));
  }
  return payoff;
}

std::string format_seeds(std::span<const std::uint64_t> seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(seeds[i]);
  }
  return out;
}

// One accessor per key; the table drives parsing, formatting and the
// unknown-key check.
struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

using Table = std::map<std::string, std::map<std::string, Field>>;

Field size_field(std::size_t& (*ref)(RunConfig&)) {
  return {[ref](RunConfig& c, const std::string& k, const std::string& v) {
            ref(c) = static_cast<std::size_t>(parse_uint(k, v));
          },
          [ref](const RunConfig& c) {
            return std::to_string(ref(const_cast<RunConfig&>(c)));
          }};
}

Field double_field(double& (*ref)(RunConfig&)) {
  return {[ref](RunConfig& c, const std::string& k, const std::string& v) {
            ref(c) = parse_double(k, v);
          },
          [ref](const RunConfig& c) {
            return fmt(ref(const_cast<RunConfig&>(c)));
          }};
}

Field bool_field(bool& (*ref)(RunConfig&)) {
  return {[ref](RunConfig& c, const std::string& k, const std::string& v) {
            ref(c) = parse_bool(k, v);
          },
          [ref](const RunConfig& c) {
            return std::string(ref(const_cast<RunConfig&>(c)) ? "true"
                                                               : "false");
          }};
}

const Table& table() {
  static const Table kTable = [] {
    Table t;
    auto& env = t["env"];
    env["kind"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                     if (v != "matrix" && v != "switch_harvest") {
                       throw ConfigError(k + ": unknown environment '" + v +
                                         "'");
                     }
                     c.env.kind = v;
                   },
                   [](const RunConfig& c) { return c.env.kind; }};
    env["payoff"] = {
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.env.payoff = parse_payoff(k, v);
        },
        [](const RunConfig& c) { return format_payoff(c.env.payoff); }};
    env["layout"] = {
        [](RunConfig& c, const std::string&, const std::string& v) {
          c.env.layout = v;
        },
        [](const RunConfig& c) { return c.env.layout; }};
    env["episode_limit"] =
        size_field([](RunConfig& c) -> std::size_t& { return c.env.episode_limit; });
    env["random_starts"] =
        bool_field([](RunConfig& c) -> bool& { return c.env.random_starts; });

    auto& net = t["network"];
    net["mixer"] = {
        [](RunConfig& c, const std::string& k, const std::string& v) {
          auto kind = qnets::parse_mixer_kind(v);
          if (!kind) throw ConfigError(k + ": unknown mixer '" + v + "'");
          c.train.mixer = *kind;
        },
        [](const RunConfig& c) {
          return std::string(qnets::to_string(c.train.mixer));
        }};
    net["agent_hidden"] =
        size_field([](RunConfig& c) -> std::size_t& { return c.train.agent_hidden; });
    net["agent_hidden2"] = size_field(
        [](RunConfig& c) -> std::size_t& { return c.train.agent_hidden2; });
    net["mixer_embed"] =
        size_field([](RunConfig& c) -> std::size_t& { return c.train.mixer_embed; });

    auto& tr = t["train"];
    tr["mode"] = {
        [](RunConfig& c, const std::string& k, const std::string& v) {
          auto mode = train::parse_divide_mode(v);
          if (!mode) throw ConfigError(k + ": unknown mode '" + v + "'");
          c.train.mode = *mode;
        },
        [](const RunConfig& c) {
          return std::string(train::to_string(c.train.mode));
        }};
    tr["optimizer"] = {
        [](RunConfig& c, const std::string& k, const std::string& v) {
          auto opt = train::parse_optimizer(v);
          if (!opt) throw ConfigError(k + ": unknown optimizer '" + v + "'");
          c.train.optimizer = *opt;
        },
        [](const RunConfig& c) {
          return std::string(train::to_string(c.train.optimizer));
        }};
    tr["gamma"] = double_field([](RunConfig& c) -> double& { return c.train.gamma; });
    tr["lr"] = double_field([](RunConfig& c) -> double& { return c.train.lr; });
    tr["t_max"] = size_field([](RunConfig& c) -> std::size_t& { return c.train.t_max; });
    tr["batch_size"] =
        size_field([](RunConfig& c) -> std::size_t& { return c.train.batch_size; });
    tr["buffer_capacity"] = size_field(
        [](RunConfig& c) -> std::size_t& { return c.train.buffer_capacity; });
    tr["target_period"] =
        size_field([](RunConfig& c) -> std::size_t& { return c.train.target_period; });
    tr["mean_individual_loss"] = bool_field(
        [](RunConfig& c) -> bool& { return c.train.mean_individual_loss; });
    tr["mixer_grad_to_agents"] = bool_field(
        [](RunConfig& c) -> bool& { return c.train.mixer_grad_to_agents; });
    tr["checked"] = bool_field([](RunConfig& c) -> bool& { return c.train.checked; });

    auto& ex = t["exploration"];
    ex["epsilon_start"] =
        double_field([](RunConfig& c) -> double& { return c.train.epsilon.start; });
    ex["epsilon_end"] =
        double_field([](RunConfig& c) -> double& { return c.train.epsilon.end; });
    ex["epsilon_anneal_steps"] = double_field(
        [](RunConfig& c) -> double& { return c.train.epsilon.anneal_steps; });

    auto& rp = t["replay"];
    rp["eta_start"] =
        double_field([](RunConfig& c) -> double& { return c.train.eta_start; });
    rp["eta_end"] = double_field([](RunConfig& c) -> double& { return c.train.eta_end; });
    rp["eta_proportion"] =
        double_field([](RunConfig& c) -> double& { return c.train.eta_proportion; });
    rp["alpha"] = double_field([](RunConfig& c) -> double& { return c.train.alpha; });
    rp["priority_eps"] =
        double_field([](RunConfig& c) -> double& { return c.train.priority_eps; });
    rp["beta_start"] =
        double_field([](RunConfig& c) -> double& { return c.train.beta_start; });
    rp["beta_end"] = double_field([](RunConfig& c) -> double& { return c.train.beta_end; });
    rp["dump_every"] = size_field(
        [](RunConfig& c) -> std::size_t& { return c.train.replay_dump_every; });

    auto& ev = t["eval"];
    ev["interval"] =
        size_field([](RunConfig& c) -> std::size_t& { return c.train.eval_interval; });
    ev["episodes"] =
        size_field([](RunConfig& c) -> std::size_t& { return c.train.eval_episodes; });

    auto& run = t["run"];
    run["seeds"] = {
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.seeds.clear();
          for (const std::string& s : split(v, ',')) {
            c.seeds.push_back(parse_uint(k, s));
          }
        },
        [](const RunConfig& c) { return format_seeds(c.seeds); }};
    run["checkpoint_every"] =
        size_field([](RunConfig& c) -> std::size_t& { return c.checkpoint_every; });
    return t;
  }();
  return kTable;
}

void validate(const RunConfig& c) {
  try {
    c.train.validate();
    auto env = envs::make_env(c.env);
    (void)c.train.net_dims(env->spec());
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (c.seeds.empty()) throw ConfigError("run.seeds: at least one seed");
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig config;
  const Table& t = table();
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError("key '" + section + "' outside of any section");
    }
    auto sec = t.find(section);
    if (sec == t.end()) throw ConfigError("unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      auto field = sec->second.find(key);
      const std::string full = section + "." + key;
      if (field == sec->second.end()) {
        throw ConfigError("unknown key '" + full + "'");
      }
      field->second.set(config, full, strip_comment(value.data()));
    }
  }
  validate(config);
  return config;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string format_config(const RunConfig& config) {
  std::string out;
  bool first = true;
  for (const auto& [section, fields] : table()) {
    if (!first) out += '\n';
    first = false;
    out += '[' + section + "]\n";
    for (const auto& [key, field] : fields) {
      out += key + " = " + field.get(config) + '\n';
    }
  }
  return out;
}

}  // namespace der::cli
