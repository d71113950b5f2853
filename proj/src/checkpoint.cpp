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

// Text checkpoint layout (version 1):
//
//   dermarl-checkpoint 1
//   dims <agents> <actions> <obs> <state> <hidden> <hidden2> <embed> <mixer>
//   set <agent|mixer|target_agent|target_mixer> <tensor count>
//   tensor <name> <rows> <cols>
//   <rows*cols shortest round-trip doubles, space separated>
//   ...
//   end

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include "der/qnets.hpp"

namespace der::qnets {

namespace {

constexpr std::string_view kMagic = "dermarl-checkpoint";
constexpr int kVersion = 1;

void write_set(std::ostream& out, std::string_view label, const ParamSet& set) {
  out << "set " << label << ' ' << set.size() << '\n';
  char buf[32];
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Tensor& t = set[i];
    out << "tensor " << set.name(i) << ' ' << t.rows() << ' ' << t.cols()
        << '\n';
    for (std::size_t k = 0; k < t.size(); ++k) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), t[k]);
      if (k > 0) out << ' ';
      out.write(buf, end - buf);
    }
    out << '\n';
  }
}

[[noreturn]] void fail(const std::string& what) {
  throw std::runtime_error("checkpoint: " + what);
}

ParamSet read_set(std::istream& in, std::string_view label) {
  std::string word, name;
  std::size_t count = 0;
  if (!(in >> word >> name >> count) || word != "set" || name != label) {
    fail("expected 'set " + std::string(label) + "'");
  }
  ParamSet set;
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t rows = 0, cols = 0;
    std::string tname;
    if (!(in >> word >> tname >> rows >> cols) || word != "tensor") {
      fail("malformed tensor header in set " + std::string(label));
    }
    std::vector<double> data(rows * cols);
    for (double& v : data) {
      std::string tok;
      if (!(in >> tok)) fail("truncated tensor " + tname);
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        fail("bad number '" + tok + "' in tensor " + tname);
      }
    }
    set.add(tname, Tensor::checked(rows, cols, std::move(data)));
  }
  return set;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NetDims& dims,
                     const ParamStore& params) {
  std::ofstream out(path);
  if (!out) fail("cannot open " + path.string() + " for writing");
  out << kMagic << ' ' << kVersion << '\n';
  out << "dims " << dims.n_agents << ' ' << dims.n_actions << ' '
      << dims.obs_width << ' ' << dims.state_width << ' ' << dims.agent_hidden
      << ' ' << dims.agent_hidden2 << ' ' << dims.mixer_embed << ' '
      << to_string(dims.mixer) << '\n';
  write_set(out, "agent", params.agent);
  write_set(out, "mixer", params.mixer);
  write_set(out, "target_agent", params.target_agent);
  write_set(out, "target_mixer", params.target_mixer);
  out << "end\n";
  if (!out) fail("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path.string());
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic) fail("bad header");
  if (version != kVersion) {
    fail("unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  std::string word, mixer;
  NetDims& d = ckpt.dims;
  if (!(in >> word >> d.n_agents >> d.n_actions >> d.obs_width >>
        d.state_width >> d.agent_hidden >> d.agent_hidden2 >> d.mixer_embed >>
        mixer) ||
      word != "dims") {
    fail("malformed dims line");
  }
  const auto kind = parse_mixer_kind(mixer);
  if (!kind) fail("unknown mixer '" + mixer + "'");
  d.mixer = *kind;
  ckpt.params.agent = read_set(in, "agent");
  ckpt.params.mixer = read_set(in, "mixer");
  ckpt.params.target_agent = read_set(in, "target_agent");
  ckpt.params.target_mixer = read_set(in, "target_mixer");
  if (!(in >> word) || word != "end") fail("missing end marker");
  return ckpt;
}

}  // namespace der::qnets
