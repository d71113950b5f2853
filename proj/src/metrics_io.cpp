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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <string>
#include <system_error>

#include "der/cli.hpp"

namespace der::cli {
namespace {

void put(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

template <typename T>
bool parse_field(std::string_view text, T& value) {
  const char* b = text.data();
  const char* e = b + text.size();
  auto [ptr, ec] = std::from_chars(b, e, value);
  return ec == std::errc() && ptr == e && !text.empty();
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

MetricsRow to_row(const train::Metrics& metrics) {
  MetricsRow row;
  row.t_step = metrics.t_step;
  if (metrics.update) {
    const train::UpdateMetrics& u = *metrics.update;
    row.loss_tot = u.loss_tot;
    row.loss_ind = u.loss_ind;
    row.mean_abs_delta = u.mean_abs_delta;
    row.eta = u.eta;
    row.epsilon = u.epsilon;
    row.selected_count = u.selected;
  }
  row.eval_return = metrics.eval_return;
  return row;
}

std::string format_row(const MetricsRow& row) {
  std::string out = std::to_string(row.t_step);
  for (const std::optional<double>* v :
       {&row.loss_tot, &row.loss_ind, &row.mean_abs_delta, &row.eta,
        &row.epsilon}) {
    out += ',';
    if (*v) put(out, **v);
  }
  out += ',';
  if (row.selected_count) out += std::to_string(*row.selected_count);
  out += ',';
  if (row.eval_return) put(out, *row.eval_return);
  return out;
}

MetricsFormatError::MetricsFormatError(std::size_t line,
                                       const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what),
      line_(line) {}

std::vector<MetricsRow> parse_metrics(std::istream& in) {
  std::string line;
  std::size_t number = 1;
  if (!std::getline(in, line)) throw MetricsFormatError(1, "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) throw MetricsFormatError(1, "unexpected header");

  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 8) {
      throw MetricsFormatError(number, "expected 8 fields, got " +
                                           std::to_string(fields.size()));
    }
    MetricsRow row;
    if (!parse_field(fields[0], row.t_step)) {
      throw MetricsFormatError(number, "bad t_step");
    }
    std::optional<double>* doubles[] = {&row.loss_tot, &row.loss_ind,
                                        &row.mean_abs_delta, &row.eta,
                                        &row.epsilon};
    for (std::size_t k = 0; k < 5; ++k) {
      if (fields[k + 1].empty()) continue;
      double v = 0.0;
      if (!parse_field(fields[k + 1], v)) {
        throw MetricsFormatError(number, "bad number in column " +
                                             std::to_string(k + 2));
      }
      *doubles[k] = v;
    }
    if (!fields[6].empty()) {
      std::size_t v = 0;
      if (!parse_field(fields[6], v)) {
        throw MetricsFormatError(number, "bad selected_count");
      }
      row.selected_count = v;
    }
    if (!fields[7].empty()) {
      double v = 0.0;
      if (!parse_field(fields[7], v)) {
        throw MetricsFormatError(number, "bad eval_return");
      }
      row.eval_return = v;
    }
    if (!rows.empty() && row.t_step <= rows.back().t_step) {
      throw MetricsFormatError(number, "t_step not strictly increasing");
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<MetricsRow> read_metrics(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  return parse_metrics(in);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of no values");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("q outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

namespace {

SummaryPoint point_of(std::size_t t, const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return SummaryPoint{t, sum / static_cast<double>(values.size()),
                      percentile(values, 0.25), percentile(values, 0.75),
                      values.size()};
}

}  // namespace

std::vector<SummaryPoint> summarize(
    std::span<const std::vector<MetricsRow>> runs, std::size_t interval) {
  if (interval == 0) throw std::invalid_argument("summary interval is 0");
  std::map<std::size_t, std::vector<double>> by_point;
  for (const auto& run : runs) {
    for (const MetricsRow& row : run) {
      if (!row.eval_return) continue;
      by_point[row.t_step / interval * interval].push_back(*row.eval_return);
    }
  }
  std::vector<SummaryPoint> out;
  for (const auto& [t, values] : by_point) {
    if (values.size() == runs.size()) out.push_back(point_of(t, values));
  }
  return out;
}

std::vector<SummaryPoint> summarize_by_ordinal(
    std::span<const std::vector<MetricsRow>> runs) {
  std::vector<std::vector<const MetricsRow*>> evals(runs.size());
  std::size_t common = runs.empty() ? 0 : SIZE_MAX;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (const MetricsRow& row : runs[r]) {
      if (row.eval_return) evals[r].push_back(&row);
    }
    common = std::min(common, evals[r].size());
  }
  std::vector<SummaryPoint> out;
  for (std::size_t k = 0; k < common; ++k) {
    std::vector<double> values;
    double t = 0.0;
    for (const auto& e : evals) {
      values.push_back(*e[k]->eval_return);
      t += static_cast<double>(e[k]->t_step);
    }
    out.push_back(point_of(
        static_cast<std::size_t>(std::llround(t / static_cast<double>(evals.size()))),
        values));
  }
  return out;
}

double band_overlap(std::span<const SummaryPoint> a,
                    std::span<const SummaryPoint> b) {
  std::map<std::size_t, const SummaryPoint*> index;
  for (const SummaryPoint& p : a) index[p.t_step] = &p;
  std::size_t common = 0;
  std::size_t overlapping = 0;
  for (const SummaryPoint& q : b) {
    auto it = index.find(q.t_step);
    if (it == index.end()) continue;
    ++common;
    const SummaryPoint& p = *it->second;
    if (p.p25 <= q.p75 && q.p25 <= p.p75) ++overlapping;
  }
  if (common == 0) return 0.0;
  return static_cast<double>(overlapping) / static_cast<double>(common);
}

}  // namespace der::cli
