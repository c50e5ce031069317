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

#include "vedge/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "vedge/eval.hpp"
#include "vedge/flow.hpp"
#include "vedge/imageio.hpp"
#include "vedge/imgproc.hpp"
#include "vedge/matching.hpp"
#include "vedge/motionedge.hpp"
#include "vedge/parallel.hpp"
#include "vedge/sedge.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vedge {

namespace {

std::mutex g_log_mutex;

void log_line(const std::string& msg, bool quiet) {
  if (quiet) return;
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << msg << "\n";
}

// Stage tags for derived RNG streams; results are independent of scheduling.
enum : std::uint64_t {
  kTagFrames = 1,
  kTagSamples = 2,
  kTagBalance = 3,
  kTagForest = 4,
};

Rng derive_rng(std::uint64_t seed, std::uint64_t iteration, std::uint64_t tag,
               std::uint64_t item = 0) {
  return Rng(seed).child(iteration).child(tag).child(item);
}

void write_text_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot open file: " + tmp);
    out << content;
    if (!out) throw Error("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

template <typename Fn>
void write_atomic(const std::string& path, Fn&& writer) {
  std::string tmp = path + ".tmp";
  writer(tmp);
  fs::rename(tmp, path);
}

std::string sanitize_id(const std::string& rel) {
  std::string id;
  for (char c : rel) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '.' || c == '-' || c == '_';
    id.push_back(ok ? c : '_');
  }
  return id;
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".ppm" || ext == ".pgm";
}

std::string iter_dir(const std::string& run_dir, int t) {
  return (fs::path(run_dir) / std::to_string(t)).string();
}

std::string frames_dir(const std::string& run_dir, int t) {
  return (fs::path(run_dir) / std::to_string(t) / "frames").string();
}

struct FramePaths {
  std::string flo, medge_png, medge_json, edge_edgm, edge_png;
};

FramePaths frame_paths(const std::string& run_dir, int t, const std::string& id) {
  fs::path base = fs::path(frames_dir(run_dir, t)) / id;
  return {base.string() + ".flo", base.string() + ".medge.png",
          base.string() + ".medge.json", base.string() + ".edge.edgm",
          base.string() + ".edge.png"};
}

DetectOpts detect_opts(const Config& cfg) {
  DetectOpts opts;
  opts.scales = parse_scales(cfg.sedge.scales);
  opts.sharpen = cfg.sedge.sharpen;
  opts.stride = cfg.sedge.stride;
  opts.jobs = 1;  // frames parallelize above this level
  return opts;
}

InterpParams interp_params(const Config& cfg) {
  InterpParams p;
  p.k = cfg.flow.k;
  p.alpha = cfg.flow.alpha;
  p.kernel_bandwidth = cfg.flow.kernel_bandwidth;
  p.eps = cfg.flow.eps;
  if (cfg.flow.mode == "la")
    p.mode = InterpMode::LocallyAffine;
  else if (cfg.flow.mode == "nw")
    p.mode = InterpMode::NadarayaWatson;
  else
    throw ParseError("flow.mode must be 'la' or 'nw', got '" + cfg.flow.mode + "'");
  return p;
}

AlignParams align_params(const Config& cfg) {
  AlignParams p;
  p.tol = cfg.motionedge.align_tol;
  p.superpixel_area = cfg.motionedge.superpixel_area;
  p.slic_compactness = cfg.imgproc.slic_compactness;
  p.slic_iters = cfg.imgproc.slic_iters;
  return p;
}

EdgeDetector load_detector(const IterationState& state) {
  if (state.model_path.empty()) return EdgeDetector::gradient();
  return EdgeDetector::forest(load_model(state.model_path));
}

// Previous-iteration edge map: the persisted artifact when present, else
// recomputed from the previous detector (lazy mode).
EdgeMap previous_edges(const IterationState& prev, const std::string& id,
                       const EdgeDetector& det_prev, const Image& img, const DetectOpts& opts) {
  FramePaths paths = frame_paths(prev.run_dir, prev.iteration, id);
  if (fs::exists(paths.edge_edgm)) return read_edge_map_edgm(paths.edge_edgm);
  return det_prev.detect(img, opts);
}

// Benchmark edge maps of accepted frames against gt_dir/<id>/<k>.png.
double validation_ods(const Dataset& ds, const Config& cfg, const std::string& run_dir, int t,
                      const EdgeDetector& det, const DetectOpts& opts,
                      const std::vector<std::uint8_t>& usable, int jobs) {
  if (cfg.pipeline.validation_gt.empty()) return -1;
  std::vector<EdgeMap> preds;
  std::vector<std::vector<PlaneB>> gts;
  double tol = cfg.pipeline.validation_tol;
  for (std::size_t i = 0; i < ds.accepted.size(); ++i) {
    if (!usable[i]) continue;
    const FramePair& pair = ds.accepted[i];
    fs::path gt_dir = fs::path(cfg.pipeline.validation_gt) / pair.id;
    if (!fs::is_directory(gt_dir)) continue;
    std::vector<PlaneB> annots = load_annotations(gt_dir.string());
    if (annots.empty()) continue;
    FramePaths paths = frame_paths(run_dir, t, pair.id);
    EdgeMap pred;
    if (fs::exists(paths.edge_edgm)) {
      pred = read_edge_map_edgm(paths.edge_edgm);
    } else {
      pred = det.detect(read_image(pair.frame_a), opts);
    }
    if (tol <= 0) tol = diagonal_tolerance(pred.width(), pred.height());
    preds.push_back(std::move(pred));
    gts.push_back(std::move(annots));
  }
  if (preds.empty()) return -1;
  BenchmarkResult res =
      benchmark(preds, gts, tol, default_thresholds(cfg.eval.thresholds), jobs);
  return res.ods;
}

json state_to_json(const IterationState& s, bool final_boost) {
  json j;
  j["iteration"] = s.iteration;
  j["model"] = s.model_path;
  j["config_fingerprint"] = s.config_fingerprint;
  j["manifest_hash"] = s.manifest_hash;
  j["seed"] = s.seed;
  j["final_boost"] = final_boost;
  j["metrics"] = {{"n_pos_samples", s.metrics.n_pos_samples},
                  {"n_neg_samples", s.metrics.n_neg_samples},
                  {"aligned_matched", s.metrics.aligned_matched},
                  {"aligned_shifted", s.metrics.aligned_shifted},
                  {"aligned_discarded", s.metrics.aligned_discarded},
                  {"failed_frames", s.metrics.failed_frames},
                  {"validation_ods", s.metrics.validation_ods}};
  return j;
}

bool state_final_boost(const std::string& run_dir, int t) {
  std::ifstream in(fs::path(iter_dir(run_dir, t)) / "state.json");
  if (!in) return false;
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) return false;
  return j.value("final_boost", false);
}

}  // namespace

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

Dataset ingest(const std::string& root, const Config& cfg, const std::string& run_dir,
               const IngestOptions& options) {
  if (!fs::is_directory(root)) throw IngestError("dataset root not found: " + root);
  fs::create_directories(run_dir);
  fs::create_directories(fs::path(run_dir) / "matches");

  struct Candidate {
    std::string id, frame_a, frame_b, provided_match;
  };
  std::vector<Candidate> candidates;

  fs::path pairs_manifest = fs::path(root) / "pairs.txt";
  if (fs::exists(pairs_manifest)) {
    std::ifstream in(pairs_manifest);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      std::istringstream ls(line);
      std::string a, b, m;
      if (!(ls >> a)) continue;
      if (!(ls >> b))
        throw IngestError("pairs.txt:" + std::to_string(line_no) + ": expected two frames");
      ls >> m;
      Candidate c;
      c.frame_a = (fs::path(root) / a).string();
      c.frame_b = (fs::path(root) / b).string();
      if (!m.empty()) c.provided_match = (fs::path(root) / m).string();
      c.id = sanitize_id(fs::path(a).replace_extension("").lexically_normal().string());
      candidates.push_back(c);
    }
  } else {
    // each subdirectory is a sequence; loose images in root form one more
    std::vector<std::vector<fs::path>> sequences;
    std::vector<fs::path> loose, subdirs;
    for (const auto& entry : fs::directory_iterator(root)) {
      if (entry.is_directory() && entry.path().filename() != "matches" &&
          entry.path().filename() != "gt")
        subdirs.push_back(entry.path());
      else if (entry.is_regular_file() && is_image_file(entry.path()))
        loose.push_back(entry.path());
    }
    std::sort(loose.begin(), loose.end());
    std::sort(subdirs.begin(), subdirs.end());
    if (!loose.empty()) sequences.push_back(loose);
    for (const auto& d : subdirs) {
      std::vector<fs::path> frames;
      for (const auto& entry : fs::directory_iterator(d))
        if (entry.is_regular_file() && is_image_file(entry.path()))
          frames.push_back(entry.path());
      std::sort(frames.begin(), frames.end());
      if (frames.size() >= 2) sequences.push_back(frames);
    }
    for (const auto& seq : sequences)
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        Candidate c;
        c.frame_a = seq[i].string();
        c.frame_b = seq[i + 1].string();
        c.id = sanitize_id(
            fs::relative(seq[i], root).replace_extension("").lexically_normal().string());
        candidates.push_back(c);
      }
  }
  if (candidates.empty()) throw IngestError("no frame pairs found under " + root);

  std::map<std::string, int> id_count;
  for (const auto& c : candidates)
    if (++id_count[c.id] > 1) throw IngestError("duplicate frame-pair id: " + c.id);

  BlockMatchParams bm;
  bm.grid_step = cfg.matching.grid_step;
  bm.patch_radius = cfg.matching.patch_radius;
  bm.search_radius = cfg.matching.search_radius;
  bm.levels = cfg.matching.levels;
  bm.min_texture = static_cast<float>(cfg.matching.min_texture);
  bm.fwd_bwd_tol = static_cast<float>(cfg.matching.fwd_bwd_tol);
  FrameFilterParams ff;
  ff.min_count = static_cast<std::size_t>(cfg.matching.min_count);
  ff.slow_max_displacement = static_cast<float>(cfg.matching.slow_max_displacement);
  ff.large_mean_displacement = static_cast<float>(cfg.matching.large_mean_displacement);
  ff.trans_frac = static_cast<float>(cfg.matching.trans_frac);
  ff.trans_tol = static_cast<float>(cfg.matching.trans_tol);

  struct Outcome {
    bool accepted = false;
    std::string reason;
    std::string match_file;
    std::string error;
  };
  std::vector<Outcome> outcomes(candidates.size());

  parallel_for(0, static_cast<int>(candidates.size()), options.jobs, [&](int i) {
    const Candidate& c = candidates[static_cast<std::size_t>(i)];
    Outcome& res = outcomes[static_cast<std::size_t>(i)];
    try {
      Image a = read_image(c.frame_a);
      Image b = read_image(c.frame_b);

      std::string match_file = c.provided_match;
      if (match_file.empty()) {
        fs::path in_root = fs::path(root) / "matches" / (c.id + ".txt");
        if (fs::exists(in_root)) match_file = in_root.string();
      }
      MatchSet ms;
      if (!match_file.empty()) {
        ms = read_matches(match_file, a.width(), a.height(), b.width(), b.height());
      } else {
        fs::path cached = fs::path(run_dir) / "matches" / (c.id + ".txt");
        if (fs::exists(cached)) {
          match_file = cached.string();
          ms = read_matches(match_file, a.width(), a.height(), b.width(), b.height());
        } else {
          ms = block_match(a, b, bm);
          write_atomic(cached.string(), [&](const std::string& tmp) { write_matches(ms, tmp); });
          match_file = cached.string();
        }
      }
      res.match_file = match_file;
      FilterDecision decision = filter_frame_pair(ms, ff);
      res.accepted = decision.accepted;
      res.reason = to_string(decision.reason);
    } catch (const std::exception& e) {
      res.error = e.what();
      res.reason = "error";
    }
  });

  Dataset ds;
  ds.root = root;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Candidate& c = candidates[i];
    const Outcome& res = outcomes[i];
    if (!res.error.empty()) throw IngestError("pair " + c.id + ": " + res.error);
    if (res.accepted)
      ds.accepted.push_back({c.id, c.frame_a, c.frame_b, res.match_file});
    else
      ds.rejected.push_back({c.id, res.reason});
  }

  json manifest;
  manifest["root"] = root;
  manifest["pairs"] = json::array();
  for (const FramePair& p : ds.accepted)
    manifest["pairs"].push_back(
        {{"id", p.id}, {"frame_a", p.frame_a}, {"frame_b", p.frame_b}, {"match", p.match_file}});
  manifest["rejected"] = json::array();
  for (const auto& [id, reason] : ds.rejected)
    manifest["rejected"].push_back({{"id", id}, {"reason", reason}});
  std::string body = manifest.dump(2);
  ds.manifest_hash = [&] {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(body)));
    return std::string(buf);
  }();
  manifest["hash"] = ds.manifest_hash;
  write_text_atomic((fs::path(run_dir) / "manifest.json").string(), manifest.dump(2) + "\n");

  if (ds.accepted.empty()) {
    std::map<std::string, int> histogram;
    for (const auto& [id, reason] : ds.rejected) histogram[reason] += 1;
    std::string detail;
    for (const auto& [reason, count] : histogram)
      detail += " " + reason + "=" + std::to_string(count);
    throw IngestError("zero accepted pairs;" + detail);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Iterations
// ---------------------------------------------------------------------------

void save_state(const IterationState& state) {
  // final_boost persisted separately through run(); default false here
  write_text_atomic((fs::path(iter_dir(state.run_dir, state.iteration)) / "state.json").string(),
                    state_to_json(state, state_final_boost(state.run_dir, state.iteration))
                        .dump(2) + "\n");
}

bool state_exists(const std::string& run_dir, int iteration) {
  return fs::exists(fs::path(iter_dir(run_dir, iteration)) / "state.json");
}

IterationState load_state(const std::string& run_dir, int iteration) {
  fs::path path = fs::path(iter_dir(run_dir, iteration)) / "state.json";
  std::ifstream in(path);
  if (!in) throw Error("cannot open state file: " + path.string());
  json j = json::parse(in);
  IterationState s;
  s.iteration = j.at("iteration").get<int>();
  s.run_dir = run_dir;
  s.model_path = j.at("model").get<std::string>();
  s.config_fingerprint = j.at("config_fingerprint").get<std::string>();
  s.manifest_hash = j.at("manifest_hash").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  const json& m = j.at("metrics");
  s.metrics.n_pos_samples = m.at("n_pos_samples").get<long>();
  s.metrics.n_neg_samples = m.at("n_neg_samples").get<long>();
  s.metrics.aligned_matched = m.at("aligned_matched").get<long>();
  s.metrics.aligned_shifted = m.at("aligned_shifted").get<long>();
  s.metrics.aligned_discarded = m.at("aligned_discarded").get<long>();
  s.metrics.failed_frames = m.at("failed_frames").get<int>();
  s.metrics.validation_ods = m.at("validation_ods").get<double>();
  return s;
}

namespace {

void persist_state(const IterationState& state, bool final_boost) {
  write_text_atomic((fs::path(iter_dir(state.run_dir, state.iteration)) / "state.json").string(),
                    state_to_json(state, final_boost).dump(2) + "\n");
}

IterationState run_iteration_impl(const Dataset& ds, const IterationState& prev,
                                  const Config& cfg, const RunOptions& options,
                                  bool final_boost) {
  const int t = prev.iteration + 1;
  const std::string& run_dir = prev.run_dir;
  fs::create_directories(frames_dir(run_dir, t));

  const EdgeDetector det_prev = load_detector(prev);
  const DetectOpts opts = detect_opts(cfg);
  const InterpParams iparams = interp_params(cfg);
  const AlignParams aparams = align_params(cfg);
  const int n_frames = static_cast<int>(ds.accepted.size());

  IterationState state;
  state.iteration = t;
  state.run_dir = run_dir;
  state.config_fingerprint = config_fingerprint(cfg);
  state.manifest_hash = ds.manifest_hash;
  state.seed = options.seed;

  if (prev.manifest_hash != ds.manifest_hash)
    throw IterationError("manifest hash changed between iterations (matches must stay fixed)");

  // --- flow + motion edges per frame ---------------------------------------
  std::vector<std::uint8_t> usable(static_cast<std::size_t>(n_frames), 1);
  std::vector<AlignStats> stats(static_cast<std::size_t>(n_frames));
  parallel_for(0, n_frames, options.jobs, [&](int i) {
    const FramePair& pair = ds.accepted[static_cast<std::size_t>(i)];
    FramePaths paths = frame_paths(run_dir, t, pair.id);
    try {
      if (fs::exists(paths.flo) && fs::exists(paths.medge_png) && fs::exists(paths.medge_json)) {
        std::ifstream in(paths.medge_json);
        json j = json::parse(in);
        stats[static_cast<std::size_t>(i)] = {t, j.at("matched").get<int>(),
                                              j.at("shifted").get<int>(),
                                              j.at("discarded").get<int>()};
        return;  // resume: artifacts already present
      }
      Image img = read_image(pair.frame_a);
      Image img_b = read_image(pair.frame_b);
      EdgeMap edges_prev = previous_edges(prev, pair.id, det_prev, img, opts);
      MatchSet ms = read_matches(pair.match_file, img.width(), img.height(), img_b.width(),
                                 img_b.height());

      FlowField flow = interpolate(ms, edges_prev, iparams);
      flow = smooth_flow(flow, edges_prev, cfg.flow.smooth_iters, cfg.flow.smooth_alpha);
      write_atomic(paths.flo, [&](const std::string& tmp) { write_flo(flow, tmp); });

      EdgeMap g_raw = det_prev.detect(flow_to_rgb(flow), opts);
      EdgeMap g_thin = nms(g_raw, cfg.imgproc.nms_radius);
      for (int y = 0; y < g_thin.height(); ++y)
        for (int x = 0; x < g_thin.width(); ++x)
          if (g_thin.strength(y, x) < cfg.motionedge.prealign_threshold)
            g_thin.strength(y, x) = 0;

      MotionEdgeMap aligned = align_motion_edges(g_thin, img, aparams);
      aligned.stats.iteration = t;
      stats[static_cast<std::size_t>(i)] = aligned.stats;

      write_atomic(paths.medge_png,
                   [&](const std::string& tmp) { write_edge_map_png(aligned.edges, tmp); });
      json j = {{"iteration", t},
                {"matched", aligned.stats.matched},
                {"shifted", aligned.stats.shifted},
                {"discarded", aligned.stats.discarded}};
      write_text_atomic(paths.medge_json, j.dump(2) + "\n");
    } catch (const std::exception& e) {
      usable[static_cast<std::size_t>(i)] = 0;
      log_line("frame " + pair.id + " failed: " + e.what(), options.quiet);
    }
  });

  int n_failed = 0;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    if (!usable[i]) {
      ++n_failed;
      continue;
    }
    state.metrics.aligned_matched += stats[i].matched;
    state.metrics.aligned_shifted += stats[i].shifted;
    state.metrics.aligned_discarded += stats[i].discarded;
  }
  state.metrics.failed_frames = n_failed;
  if (n_failed > cfg.pipeline.max_failure_frac * n_frames)
    throw IterationError("iteration " + std::to_string(t) + ": " + std::to_string(n_failed) +
                         "/" + std::to_string(n_frames) + " frames failed");

  // --- harvest + training ---------------------------------------------------
  std::vector<int> train_frames;
  for (int i = 0; i < n_frames; ++i)
    if (usable[static_cast<std::size_t>(i)]) train_frames.push_back(i);
  {
    Rng rng = derive_rng(options.seed, static_cast<std::uint64_t>(t), kTagFrames);
    rng.shuffle(train_frames);
    if (static_cast<int>(train_frames.size()) > cfg.pipeline.max_train_frames)
      train_frames.resize(static_cast<std::size_t>(cfg.pipeline.max_train_frames));
    std::sort(train_frames.begin(), train_frames.end());
  }

  long budget = cfg.sedge.sample_budget;
  if (final_boost) budget *= cfg.pipeline.final_boost;
  const int per_frame =
      static_cast<int>((budget / 2 + static_cast<long>(train_frames.size()) - 1) /
                       std::max<long>(1, static_cast<long>(train_frames.size())));

  SampleParams sparams;
  sparams.n_pos = per_frame;
  sparams.n_neg = per_frame;
  sparams.pos_threshold = static_cast<float>(cfg.sedge.pos_threshold);
  sparams.neg_threshold = static_cast<float>(cfg.sedge.neg_threshold);
  sparams.exclusion_radius = cfg.sedge.exclusion_radius;
  HarvestParams hparams;
  hparams.pos_threshold = static_cast<float>(cfg.sedge.pos_threshold);
  hparams.exclusion_radius = cfg.sedge.exclusion_radius;

  std::vector<std::vector<Sample>> frame_samples(train_frames.size());
  parallel_for(0, static_cast<int>(train_frames.size()), options.jobs, [&](int k) {
    int i = train_frames[static_cast<std::size_t>(k)];
    const FramePair& pair = ds.accepted[static_cast<std::size_t>(i)];
    FramePaths paths = frame_paths(run_dir, t, pair.id);
    try {
      Image img = read_image(pair.frame_a);
      MotionEdgeMap aligned;
      aligned.edges = read_edge_map_png(paths.medge_png);
      aligned.edges.thinned = true;
      Supervision sup = harvest_supervision(aligned, hparams);
      Rng rng = derive_rng(options.seed, static_cast<std::uint64_t>(t), kTagSamples,
                           static_cast<std::uint64_t>(i));
      frame_samples[static_cast<std::size_t>(k)] =
          extract_samples(img, sup.supervision, &sup.exclusion, sparams, rng);
    } catch (const std::exception& e) {
      log_line("sampling " + pair.id + " failed: " + e.what(), options.quiet);
    }
  });

  std::vector<Sample> pos, neg;
  for (auto& fsamples : frame_samples)
    for (Sample& s : fsamples) (s.negative ? neg : pos).push_back(std::move(s));
  state.metrics.n_pos_samples = static_cast<long>(pos.size());
  state.metrics.n_neg_samples = static_cast<long>(neg.size());
  if (static_cast<long>(pos.size()) < cfg.pipeline.min_samples)
    throw IterationError("iteration " + std::to_string(t) + ": only " +
                         std::to_string(pos.size()) + " positives harvested (min " +
                         std::to_string(cfg.pipeline.min_samples) + "); negatives: " +
                         std::to_string(neg.size()));

  {
    Rng rng = derive_rng(options.seed, static_cast<std::uint64_t>(t), kTagBalance);
    rng.shuffle(pos);
    rng.shuffle(neg);
    std::size_t per_class = std::min({pos.size(), neg.size(),
                                      static_cast<std::size_t>(budget / 2)});
    pos.resize(per_class);
    neg.resize(per_class);
  }
  std::vector<Sample> samples;
  samples.reserve(pos.size() + neg.size());
  for (Sample& s : pos) samples.push_back(std::move(s));
  for (Sample& s : neg) samples.push_back(std::move(s));

  TrainParams tparams;
  tparams.n_trees = cfg.sedge.n_trees;
  tparams.max_depth = cfg.sedge.max_depth;
  tparams.frac_per_tree = cfg.sedge.frac_per_tree;
  tparams.min_leaf = cfg.sedge.min_leaf;
  tparams.n_feature_probe = cfg.sedge.n_feature_probe;
  tparams.n_threshold_probe = cfg.sedge.n_threshold_probe;
  tparams.seed = derive_rng(options.seed, static_cast<std::uint64_t>(t), kTagForest).next_u64();
  tparams.jobs = options.jobs;

  log_line("iteration " + std::to_string(t) + ": training forest on " +
               std::to_string(samples.size()) + " samples",
           options.quiet);
  StructuredForest forest = train_forest(samples, tparams);
  samples.clear();
  frame_samples.clear();

  state.model_path = (fs::path(iter_dir(run_dir, t)) / "model.sedg").string();
  write_atomic(state.model_path, [&](const std::string& tmp) { save_model(forest, tmp); });

  // --- new edge maps ---------------------------------------------------------
  const EdgeDetector det_new = EdgeDetector::forest(std::move(forest));
  parallel_for(0, n_frames, options.jobs, [&](int i) {
    if (!usable[static_cast<std::size_t>(i)]) return;
    const FramePair& pair = ds.accepted[static_cast<std::size_t>(i)];
    FramePaths paths = frame_paths(run_dir, t, pair.id);
    bool validation_frame =
        !cfg.pipeline.validation_gt.empty() &&
        fs::is_directory(fs::path(cfg.pipeline.validation_gt) / pair.id);
    if (cfg.pipeline.lazy_edges && !validation_frame) return;
    if (fs::exists(paths.edge_edgm)) return;
    try {
      EdgeMap edges = det_new.detect(read_image(pair.frame_a), opts);
      write_atomic(paths.edge_edgm,
                   [&](const std::string& tmp) { write_edge_map_edgm(edges, tmp); });
      write_atomic(paths.edge_png,
                   [&](const std::string& tmp) { write_edge_map_png(edges, tmp); });
    } catch (const std::exception& e) {
      log_line("edge map " + pair.id + " failed: " + e.what(), options.quiet);
    }
  });

  state.metrics.validation_ods =
      validation_ods(ds, cfg, run_dir, t, det_new, opts, usable, options.jobs);
  persist_state(state, final_boost);
  return state;
}

}  // namespace

IterationState init_state(const Dataset& ds, const Config& cfg, const std::string& run_dir,
                          const RunOptions& options) {
  fs::create_directories(frames_dir(run_dir, 0));
  IterationState state;
  state.iteration = 0;
  state.run_dir = run_dir;
  state.config_fingerprint = config_fingerprint(cfg);
  state.manifest_hash = ds.manifest_hash;
  state.seed = options.seed;

  const EdgeDetector det = EdgeDetector::gradient();
  const DetectOpts opts = detect_opts(cfg);
  const int n_frames = static_cast<int>(ds.accepted.size());
  parallel_for(0, n_frames, options.jobs, [&](int i) {
    const FramePair& pair = ds.accepted[static_cast<std::size_t>(i)];
    FramePaths paths = frame_paths(run_dir, 0, pair.id);
    bool validation_frame =
        !cfg.pipeline.validation_gt.empty() &&
        fs::is_directory(fs::path(cfg.pipeline.validation_gt) / pair.id);
    if (cfg.pipeline.lazy_edges && !validation_frame) return;
    if (fs::exists(paths.edge_edgm)) return;
    EdgeMap edges = det.detect(read_image(pair.frame_a), opts);
    write_atomic(paths.edge_edgm,
                 [&](const std::string& tmp) { write_edge_map_edgm(edges, tmp); });
    write_atomic(paths.edge_png,
                 [&](const std::string& tmp) { write_edge_map_png(edges, tmp); });
  });

  std::vector<std::uint8_t> usable(static_cast<std::size_t>(n_frames), 1);
  state.metrics.validation_ods =
      validation_ods(ds, cfg, run_dir, 0, det, opts, usable, options.jobs);
  persist_state(state, false);
  return state;
}

IterationState run_iteration(const Dataset& ds, const IterationState& prev, const Config& cfg,
                             const RunOptions& options) {
  return run_iteration_impl(ds, prev, cfg, options, false);
}

IterationState run(const Dataset& ds, int iterations, const Config& cfg,
                   const std::string& run_dir, const RunOptions& options) {
  if (iterations < 1) throw InvalidInput("run: iterations must be >= 1");
  fs::create_directories(run_dir);

  const std::string fingerprint = config_fingerprint(cfg);
  fs::path cfg_path = fs::path(run_dir) / "config.toml";
  if (fs::exists(cfg_path)) {
    Config existing = load_config(cfg_path.string());
    if (config_fingerprint(existing) != fingerprint)
      throw Error("run dir " + run_dir + " was created with a different config");
  } else {
    write_text_atomic(cfg_path.string(), serialize_config(cfg));
  }

  auto resumable = [&](int t, bool final_boost) {
    if (!state_exists(run_dir, t)) return false;
    IterationState s = load_state(run_dir, t);
    return s.config_fingerprint == fingerprint && s.manifest_hash == ds.manifest_hash &&
           s.seed == options.seed && state_final_boost(run_dir, t) == final_boost;
  };

  IterationState state;
  if (resumable(0, false)) {
    state = load_state(run_dir, 0);
    log_line("iteration 0: resumed", options.quiet);
  } else {
    state = init_state(ds, cfg, run_dir, options);
  }

  json report;
  report["iterations"] = json::array();
  auto add_report = [&](const IterationState& s) {
    report["iterations"].push_back(state_to_json(s, state_final_boost(run_dir, s.iteration)));
    if (s.metrics.validation_ods >= 0)
      log_line("iteration " + std::to_string(s.iteration) +
                   ": ods=" + std::to_string(s.metrics.validation_ods),
               options.quiet);
  };
  add_report(state);

  for (int t = 1; t <= iterations; ++t) {
    bool final_boost = (t == iterations) && cfg.pipeline.final_boost > 1;
    if (resumable(t, final_boost)) {
      state = load_state(run_dir, t);
      log_line("iteration " + std::to_string(t) + ": resumed", options.quiet);
    } else {
      state = run_iteration_impl(ds, state, cfg, options, final_boost);
    }
    add_report(state);
  }
  write_text_atomic((fs::path(run_dir) / "report.json").string(), report.dump(2) + "\n");
  return state;
}

}  // namespace vedge
