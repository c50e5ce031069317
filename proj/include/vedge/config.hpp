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

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace vedge {

/// Every tunable of the library with its default. Serialized as a TOML-style
/// document with one section per module; CLI flags override file values.
struct Config {
  struct {
    int nms_radius = 1;
    int slic_segments = 512;
    double slic_compactness = 10.0;
    int slic_iters = 10;
  } imgproc;

  struct {
    int grid_step = 4;
    int patch_radius = 4;
    int search_radius = 32;
    int levels = 3;
    double min_texture = 1e-4;
    double fwd_bwd_tol = 2.0;
    int min_count = 200;
    double slow_max_displacement = 2.0;
    double large_mean_displacement = 15.0;
    double trans_frac = 0.9;
    double trans_tol = 1.0;
  } matching;

  struct {
    int k = 100;
    double alpha = 100.0;
    double kernel_bandwidth = 70.0;
    double eps = 1e-3;
    std::string mode = "la";  // "la" or "nw"
    int smooth_iters = 5;
    double smooth_alpha = 5.0;
  } flow;

  struct {
    int n_trees = 8;
    int max_depth = 64;
    double frac_per_tree = 0.25;
    int min_leaf = 8;
    int n_feature_probe = 1000;
    int n_threshold_probe = 8;
    double pos_threshold = 0.8;
    double neg_threshold = 0.1;
    double exclusion_radius = 8.0;
    long sample_budget = 200000;
    std::string scales = "0.5,1,2";
    int sharpen = 2;
    int stride = 2;
  } sedge;

  struct {
    double align_tol = 3.0;
    double prealign_threshold = 0.3;
    int superpixel_area = 512;
  } motionedge;

  struct {
    int max_train_frames = 2000;
    long min_samples = 500;  // minimum harvested positives corpus-wide
    int final_boost = 4;     // final-iteration sample budget multiplier
    double max_failure_frac = 0.1;
    std::string validation_gt;  // gt/<frame id>/<k>.png, empty = no validation
    double validation_tol = 0;  // 0 = BSDS diagonal fraction
    bool lazy_edges = false;    // recompute edge maps on demand next iteration
  } pipeline;

  struct {
    double tolerance_frac = 0.0075;
    double motion_tol = 3.0;
    int thresholds = 99;
  } eval;
};

struct ConfigKey {
  std::string key;  // "section.name"
  std::string description;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;  // throws ParseError
};

/// The full key table, in canonical serialization order.
const std::vector<ConfigKey>& config_keys();

/// Sets one key from its string form. Unknown keys throw ParseError.
void config_set(Config& cfg, const std::string& key, const std::string& value);

/// Parses a TOML-style document ([section] headers, key = value lines,
/// '#' comments) on top of the given defaults.
Config parse_config(const std::string& text, Config base = {});
Config load_config(const std::string& path, Config base = {});

/// Canonical serialization; equal configs serialize identically.
std::string serialize_config(const Config& cfg);

/// FNV-1a 64 over the canonical serialization, as fixed-width hex.
std::string config_fingerprint(const Config& cfg);

std::uint64_t fnv1a64(const std::string& data);

/// Parses the "s1,s2,..." scale list.
std::vector<double> parse_scales(const std::string& scales);

}  // namespace vedge
