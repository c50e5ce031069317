// This file is part of the vedge project.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "vedge/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "vedge/types.hpp"

namespace vedge {

namespace {

std::string fmt_int(long v) { return std::to_string(v); }

std::string fmt_double(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

long to_int(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("config key " + key + ": expected integer, got '" + s + "'");
  }
}

double to_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("config key " + key + ": expected number, got '" + s + "'");
  }
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ParseError("config key " + key + ": expected boolean, got '" + s + "'");
}

ConfigKey make_key(const std::string& key, const std::string& desc,
                   std::function<std::string(const Config&)> get,
                   std::function<void(Config&, const std::string&)> set) {
  return ConfigKey{key, desc, std::move(get), std::move(set)};
}

#define VEDGE_INT_KEY(field, desc)                                                   \
  make_key(#field, desc, [](const Config& c) { return fmt_int(c.field); },           \
           [](Config& c, const std::string& s) {                                      \
             c.field = static_cast<decltype(c.field)>(to_int(#field, s));             \
           })

#define VEDGE_DOUBLE_KEY(field, desc)                                                \
  make_key(#field, desc, [](const Config& c) { return fmt_double(c.field); },        \
           [](Config& c, const std::string& s) { c.field = to_double(#field, s); })

#define VEDGE_STRING_KEY(field, desc)                                                \
  make_key(#field, desc, [](const Config& c) { return c.field; },                    \
           [](Config& c, const std::string& s) { c.field = s; })

#define VEDGE_BOOL_KEY(field, desc)                                                  \
  make_key(#field, desc,                                                             \
           [](const Config& c) { return c.field ? std::string("true") : "false"; },  \
           [](Config& c, const std::string& s) { c.field = to_bool(#field, s); })

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> keys;
  keys.push_back(VEDGE_INT_KEY(imgproc.nms_radius, "NMS suppression radius, pixels"));
  keys.push_back(VEDGE_INT_KEY(imgproc.slic_segments, "default SLIC superpixel count"));
  keys.push_back(VEDGE_DOUBLE_KEY(imgproc.slic_compactness, "SLIC compactness"));
  keys.push_back(VEDGE_INT_KEY(imgproc.slic_iters, "SLIC k-means iterations"));

  keys.push_back(VEDGE_INT_KEY(matching.grid_step, "block matcher grid spacing, pixels"));
  keys.push_back(VEDGE_INT_KEY(matching.patch_radius, "NCC patch radius, pixels"));
  keys.push_back(VEDGE_INT_KEY(matching.search_radius, "search radius at full resolution"));
  keys.push_back(VEDGE_INT_KEY(matching.levels, "pyramid levels"));
  keys.push_back(VEDGE_DOUBLE_KEY(matching.min_texture, "minimum patch intensity variance"));
  keys.push_back(VEDGE_DOUBLE_KEY(matching.fwd_bwd_tol,
                                  "forward-backward consistency tolerance, pixels"));
  keys.push_back(VEDGE_INT_KEY(matching.min_count, "minimum matches per frame pair"));
  keys.push_back(VEDGE_DOUBLE_KEY(matching.slow_max_displacement,
                                  "reject pair when max displacement is below this"));
  keys.push_back(VEDGE_DOUBLE_KEY(matching.large_mean_displacement,
                                  "reject pair when mean displacement is above this"));
  keys.push_back(VEDGE_DOUBLE_KEY(matching.trans_frac,
                                  "translation-dominance inlier fraction for rejection"));
  keys.push_back(VEDGE_DOUBLE_KEY(matching.trans_tol, "translation inlier tolerance, pixels"));

  keys.push_back(VEDGE_INT_KEY(flow.k, "geodesic nearest matches per pixel"));
  keys.push_back(VEDGE_DOUBLE_KEY(flow.alpha, "edge cost weight"));
  keys.push_back(VEDGE_DOUBLE_KEY(flow.kernel_bandwidth, "interpolation kernel bandwidth"));
  keys.push_back(VEDGE_DOUBLE_KEY(flow.eps, "base traversal cost"));
  keys.push_back(VEDGE_STRING_KEY(flow.mode, "interpolator: la or nw"));
  keys.push_back(VEDGE_INT_KEY(flow.smooth_iters, "edge-stopped diffusion iterations"));
  keys.push_back(VEDGE_DOUBLE_KEY(flow.smooth_alpha, "diffusion edge-stopping weight"));

  keys.push_back(VEDGE_INT_KEY(sedge.n_trees, "trees in the structured forest"));
  keys.push_back(VEDGE_INT_KEY(sedge.max_depth, "maximum tree depth"));
  keys.push_back(VEDGE_DOUBLE_KEY(sedge.frac_per_tree, "sample fraction per tree"));
  keys.push_back(VEDGE_INT_KEY(sedge.min_leaf, "minimum samples per leaf"));
  keys.push_back(VEDGE_INT_KEY(sedge.n_feature_probe, "candidate features per node"));
  keys.push_back(VEDGE_INT_KEY(sedge.n_threshold_probe, "quantile thresholds per feature"));
  keys.push_back(VEDGE_DOUBLE_KEY(sedge.pos_threshold, "positive sampling threshold"));
  keys.push_back(VEDGE_DOUBLE_KEY(sedge.neg_threshold, "negative sampling threshold"));
  keys.push_back(VEDGE_DOUBLE_KEY(sedge.exclusion_radius,
                                  "negative keep-out radius around motion edges, pixels"));
  keys.push_back(VEDGE_INT_KEY(sedge.sample_budget, "training samples per iteration"));
  keys.push_back(VEDGE_STRING_KEY(sedge.scales, "detection scales, comma separated"));
  keys.push_back(VEDGE_INT_KEY(sedge.sharpen, "detection sharpening iterations"));
  keys.push_back(VEDGE_INT_KEY(sedge.stride, "detection stride, pixels (even)"));

  keys.push_back(VEDGE_DOUBLE_KEY(motionedge.align_tol, "alignment tolerance, pixels"));
  keys.push_back(VEDGE_DOUBLE_KEY(motionedge.prealign_threshold,
                                  "motion edge threshold before alignment"));
  keys.push_back(VEDGE_INT_KEY(motionedge.superpixel_area,
                               "pixels per superpixel for alignment"));

  keys.push_back(VEDGE_INT_KEY(pipeline.max_train_frames,
                               "frames contributing samples per iteration"));
  keys.push_back(VEDGE_INT_KEY(pipeline.min_samples,
                               "minimum harvested positives corpus-wide"));
  keys.push_back(VEDGE_INT_KEY(pipeline.final_boost,
                               "final-iteration sample budget multiplier"));
  keys.push_back(VEDGE_DOUBLE_KEY(pipeline.max_failure_frac,
                                  "tolerated fraction of failed frames"));
  keys.push_back(VEDGE_STRING_KEY(pipeline.validation_gt,
                                  "ground-truth dir for per-iteration ODS (optional)"));
  keys.push_back(VEDGE_DOUBLE_KEY(pipeline.validation_tol,
                                  "validation matching tolerance (0 = diagonal rule)"));
  keys.push_back(VEDGE_BOOL_KEY(pipeline.lazy_edges,
                                "skip persisting edge maps, recompute on demand"));

  keys.push_back(VEDGE_DOUBLE_KEY(eval.tolerance_frac,
                                  "matching tolerance as a fraction of the image diagonal"));
  keys.push_back(VEDGE_DOUBLE_KEY(eval.motion_tol, "motion-edge benchmark tolerance, pixels"));
  keys.push_back(VEDGE_INT_KEY(eval.thresholds, "threshold sweep levels"));
  return keys;
}

#undef VEDGE_INT_KEY
#undef VEDGE_DOUBLE_KEY
#undef VEDGE_STRING_KEY
#undef VEDGE_BOOL_KEY

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void config_set(Config& cfg, const std::string& key, const std::string& value) {
  for (const ConfigKey& k : config_keys())
    if (k.key == key) {
      k.set(cfg, value);
      return;
    }
  throw ParseError("unknown config key: " + key);
}

Config parse_config(const std::string& text, Config base) {
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ParseError("config line " + std::to_string(line_no) + ": malformed section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    config_set(base, key, value);
  }
  return base;
}

Config load_config(const std::string& path, Config base) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), base);
}

std::string serialize_config(const Config& cfg) {
  std::ostringstream out;
  std::string section;
  for (const ConfigKey& k : config_keys()) {
    std::string sec = k.key.substr(0, k.key.find('.'));
    std::string name = k.key.substr(k.key.find('.') + 1);
    if (sec != section) {
      if (!section.empty()) out << "\n";
      out << "[" << sec << "]\n";
      section = sec;
    }
    std::string v = k.get(cfg);
    bool quote = v.empty() || v.find_first_not_of("0123456789.-+e") != std::string::npos;
    if (v == "true" || v == "false") quote = false;
    out << name << " = " << (quote ? "\"" + v + "\"" : v) << "\n";
  }
  return out.str();
}

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_fingerprint(const Config& cfg) {
  std::uint64_t h = fnv1a64(serialize_config(cfg));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<double> parse_scales(const std::string& scales) {
  std::vector<double> out;
  std::string body = scales;
  if (!body.empty() && body.front() == '[') body = body.substr(1);
  if (!body.empty() && body.back() == ']') body.pop_back();
  std::istringstream in(body);
  std::string token;
  while (std::getline(in, token, ',')) {
    token = trim(token);
    if (token.empty()) continue;
    try {
      out.push_back(std::stod(token));
    } catch (const std::exception&) {
      throw ParseError("bad scale value: '" + token + "'");
    }
  }
  if (out.empty()) throw ParseError("empty scale list");
  return out;
}

}  // namespace vedge
