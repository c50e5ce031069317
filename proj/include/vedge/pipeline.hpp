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

#include <string>
#include <vector>

#include "vedge/config.hpp"
#include "vedge/types.hpp"

namespace vedge {

struct IngestError : Error {
  using Error::Error;
};

struct FramePair {
  std::string id;
  std::string frame_a;    // absolute image paths
  std::string frame_b;
  std::string match_file; // absolute path of the fixed match set
};

struct Dataset {
  std::string root;
  std::vector<FramePair> accepted;
  std::vector<std::pair<std::string, std::string>> rejected;  // (id, reason)
  std::string manifest_hash;
};

struct IngestOptions {
  int jobs = 0;  // 0 = hardware concurrency
};

/// Scans `root` for consecutive frame pairs (each subdirectory is one
/// sequence; loose images in root form another; an optional pairs.txt
/// manifest overrides scanning). Matches are loaded from an adjacent
/// matches/<id>.txt when present, computed with the block matcher otherwise,
/// and cached under <run_dir>/matches. Frame-pair filtering decides
/// acceptance; zero accepted pairs is an ingestion error.
Dataset ingest(const std::string& root, const Config& cfg, const std::string& run_dir,
               const IngestOptions& options = {});

struct IterationMetrics {
  long n_pos_samples = 0;
  long n_neg_samples = 0;
  long aligned_matched = 0;
  long aligned_shifted = 0;
  long aligned_discarded = 0;
  int failed_frames = 0;
  double validation_ods = -1;  // -1 when no ground truth was provided
};

struct IterationState {
  int iteration = 0;
  std::string run_dir;
  std::string model_path;  // empty = gradient detector
  std::string config_fingerprint;
  std::string manifest_hash;
  std::uint64_t seed = 0;
  IterationMetrics metrics;
};

struct RunOptions {
  std::uint64_t seed = 0;
  int jobs = 0;
  bool quiet = false;
};

/// Iteration 0: the gradient detector applied to every accepted frame.
IterationState init_state(const Dataset& ds, const Config& cfg, const std::string& run_dir,
                          const RunOptions& options);

/// One loop iteration: flow from the previous edge maps, motion edges from
/// the previous detector, alignment, harvesting, forest training from
/// scratch, and fresh edge maps. All artifacts and the checkpoint persist
/// under <run_dir>/<t>/ before returning.
IterationState run_iteration(const Dataset& ds, const IterationState& prev, const Config& cfg,
                             const RunOptions& options);

/// Runs T iterations from the gradient-detector state, resuming from
/// persisted states when their fingerprints match. Returns the final state.
IterationState run(const Dataset& ds, int iterations, const Config& cfg,
                   const std::string& run_dir, const RunOptions& options);

/// state.json I/O for one iteration.
void save_state(const IterationState& state);
IterationState load_state(const std::string& run_dir, int iteration);
bool state_exists(const std::string& run_dir, int iteration);

}  // namespace vedge
