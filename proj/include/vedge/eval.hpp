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

#include "vedge/types.hpp"

namespace vedge {

/// One-to-one correspondence counts between a thinned binary prediction and
/// one ground-truth map under a pixel tolerance.
struct CorrespondCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

/// Maximum bipartite matching (Hopcroft-Karp) between prediction and ground
/// truth pixels within Euclidean distance tol.
CorrespondCounts correspond(const PlaneB& pred, const PlaneB& gt, double tol);

/// Multi-annotator counts: a prediction pixel is TP when matched against any
/// annotation; missed ground truth is counted per annotation and summed.
struct MultiCounts {
  long tp = 0;     // matched prediction pixels
  long fp = 0;     // unmatched prediction pixels
  long tp_gt = 0;  // matched ground-truth pixels, summed over annotators
  long fn = 0;     // unmatched ground-truth pixels, summed over annotators

  MultiCounts& operator+=(const MultiCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tp_gt += o.tp_gt;
    fn += o.fn;
    return *this;
  }
};

MultiCounts correspond_multi(const PlaneB& pred, const std::vector<PlaneB>& gts, double tol);

struct PRPoint {
  double threshold = 0;
  MultiCounts counts;

  double precision() const {
    long denom = counts.tp + counts.fp;
    return denom == 0 ? 1.0 : static_cast<double>(counts.tp) / static_cast<double>(denom);
  }
  double recall() const {
    long denom = counts.tp_gt + counts.fn;
    return denom == 0 ? 1.0 : static_cast<double>(counts.tp_gt) / static_cast<double>(denom);
  }
  double f_measure() const {
    double p = precision(), r = recall();
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
};

/// 99 uniform threshold levels in (0,1).
std::vector<double> default_thresholds(int n = 99);

/// The BSDS matching tolerance: frac of the image diagonal.
double diagonal_tolerance(int width, int height, double frac = 0.0075);

/// Corpus precision/recall sweep. Predictions are thinned internally (NMS)
/// unless already flagged thinned, then binarized at each threshold and
/// matched per image; counts sum over the corpus.
std::vector<PRPoint> pr_curve(const std::vector<EdgeMap>& preds,
                              const std::vector<std::vector<PlaneB>>& gts,
                              const std::vector<double>& thresholds, double tol,
                              int jobs = 1);

struct BenchmarkResult {
  double ods = 0, ois = 0, ap = 0, p20 = 0;
  double ods_threshold = 0;
  std::vector<PRPoint> curve;
  std::vector<double> image_best_thresholds;
};

/// ODS / OIS / AP / P20 over a corpus at matching tolerance tol.
BenchmarkResult benchmark(const std::vector<EdgeMap>& preds,
                          const std::vector<std::vector<PlaneB>>& gts, double tol,
                          const std::vector<double>& thresholds = default_thresholds(),
                          int jobs = 1);

/// Strength map -> binary support at a threshold.
PlaneB binarize(const PlaneF& strength, double threshold);

/// Reads all PNGs in a directory as binary annotator maps (sorted by name).
std::vector<PlaneB> load_annotations(const std::string& dir);

/// Serializes a result as JSON (keys: ods, ois, ap, p20, ods_threshold,
/// curve).
std::string benchmark_to_json(const BenchmarkResult& r);

}  // namespace vedge
