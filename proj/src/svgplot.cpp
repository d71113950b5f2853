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
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "der/cli.hpp"

namespace der::cli {
namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 170.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#ff7f0e", "#9467bd", "#8c564b",
                                    "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(std::span<const Series> series, std::string_view title) {
  double x_min = std::numeric_limits<double>::infinity();
  double x_max = -x_min;
  double y_min = x_min;
  double y_max = -x_min;
  for (const Series& s : series) {
    for (const SummaryPoint& p : s.points) {
      const double t = static_cast<double>(p.t_step);
      x_min = std::min(x_min, t);
      x_max = std::max(x_max, t);
      y_min = std::min({y_min, p.mean, s.band ? p.p25 : p.mean});
      y_max = std::max({y_max, p.mean, s.band ? p.p75 : p.mean});
    }
  }
  if (!std::isfinite(x_min)) {
    x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
  }
  if (x_max == x_min) x_max = x_min + 1.0;
  if (y_max == y_min) y_min -= 0.5, y_max += 0.5;

  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * pw; };
  auto sy = [&](double y) {
    return kTop + ph - (y - y_min) / (y_max - y_min) * ph;
  };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) +
         "\" height=\"" + num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) +
         ' ' + num(kHeight) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(kLeft) + "\" y=\"24\" font-family=\"sans-serif\" "
         "font-size=\"15\">" + escape(title) + "</text>\n";
  out += "<g stroke=\"#333\" fill=\"none\">\n";
  out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" +
         num(kLeft + pw) + "\" y2=\"" + num(kTop + ph) + "\"/>\n";
  out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" +
         num(kLeft) + "\" y2=\"" + num(kTop + ph) + "\"/>\n";
  out += "</g>\n<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  for (int k = 0; k <= 4; ++k) {
    const double x = x_min + (x_max - x_min) * k / 4.0;
    const double y = y_min + (y_max - y_min) * k / 4.0;
    out += "<text x=\"" + num(sx(x)) + "\" y=\"" + num(kTop + ph + 16) +
           "\" text-anchor=\"middle\">" + label(x) + "</text>\n";
    out += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(sy(y) + 4) +
           "\" text-anchor=\"end\">" + label(y) + "</text>\n";
  }
  out += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 10) +
         "\" text-anchor=\"middle\">t_step</text>\n";
  out += "<text x=\"16\" y=\"" + num(kTop + ph / 2) +
         "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         num(kTop + ph / 2) + ")\">eval_return</text>\n</g>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& s = series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    if (s.points.empty()) continue;
    if (s.band) {
      std::string poly;
      for (const SummaryPoint& p : s.points) {
        poly += num(sx(static_cast<double>(p.t_step))) + ',' + num(sy(p.p75)) + ' ';
      }
      for (auto it = s.points.rbegin(); it != s.points.rend(); ++it) {
        poly += num(sx(static_cast<double>(it->t_step))) + ',' +
                num(sy(it->p25)) + ' ';
      }
      out += "<polygon points=\"" + poly + "\" fill=\"" + color +
             "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    }
    std::string line;
    for (const SummaryPoint& p : s.points) {
      line += num(sx(static_cast<double>(p.t_step))) + ',' + num(sy(p.mean)) + ' ';
    }
    out += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    const double ly = kTop + 14.0 + 18.0 * static_cast<double>(i);
    out += "<line x1=\"" + num(kLeft + pw + 12) + "\" y1=\"" + num(ly) +
           "\" x2=\"" + num(kLeft + pw + 32) + "\" y2=\"" + num(ly) +
           "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + num(kLeft + pw + 38) + "\" y=\"" + num(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(s.label) +
           "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace der::cli
