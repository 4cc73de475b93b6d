// Copyright 2026 The TADA Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tada/detector.hpp"
#include "tada/emulator.hpp"
#include "tada/errors.hpp"
#include "tada/jpeg.hpp"
#include "tada/pgm.hpp"
#include "tada/stego.hpp"
#include "tada/toy.hpp"
#include "tada/trainer.hpp"

namespace tada {

namespace fs = std::filesystem;
using nlohmann::json;

// Either a directory of 16-bit PGMs or a synthetic sensor pool.
struct PoolSource {
  std::optional<fs::path> dir;
  SensorPoolSpec synth;
};

struct DetectorSettings {
  DetectorConfig fit;
  DctrConfig dctr;
  std::size_t train_pairs = 200;
  std::size_t eval_pairs = 100;
  int chordal_k = 5;
};

struct ExperimentConfig {
  std::uint64_t seed = 2026;
  int kernel_size = 3;
  int qf = 100;
  double payload = 1.0;
  Balance balance = Balance::kAllStego;
  std::string kernel = "denoise";            // preset name
  std::optional<std::vector<double>> kernel_classes;
  PoolSource pool;                           // target images
  std::optional<PoolSource> pairs_pool;      // labeled target pairs for evaluation
  PoolSource source_pool;
  std::optional<PoolSource> eval_source_pool;  // evaluate only; defaults to source_pool
  std::optional<fs::path> target_dir;
  std::optional<fs::path> input;
  std::optional<fs::path> kernel_file;       // "identity" selects the naive pipeline
  std::size_t pairs = 0;                     // 0: every pool image
  TrainConfig train;
  DetectorSettings detector;
  bool self_check = false;
  bool dump_patches = false;
  std::vector<fs::path> reports;
  std::vector<fs::path> logs;
  std::optional<fs::path> out;

  EmbeddingConfig embedding() const {
    EmbeddingConfig e;
    e.payload_bpnzac = payload;
    e.seed = seed;
    return e;
  }
};

namespace detail {

// Reads keys off a JSON object and rejects any it did not consume.
class Keys {
 public:
  Keys(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw Error(ErrorKind::kConfig, where_ + " must be an object");
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  template <typename T>
  void read(const std::string& key, T& dst) {
    if (const json* v = get(key)) {
      try {
        dst = v->get<T>();
      } catch (const json::exception&) {
        throw Error(ErrorKind::kConfig, where_ + "." + key + " has the wrong type");
      }
    }
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw Error(ErrorKind::kConfig, "unknown key '" + it.key() + "' in " + where_);
      }
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

inline fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

inline PoolSource read_pool(const json& j, const std::string& where, const fs::path& base,
                            PoolSource pool) {
  Keys k(j, where);
  if (const json* d = k.get("dir")) pool.dir = resolve(base, d->get<std::string>());
  k.read("count", pool.synth.count);
  k.read("width", pool.synth.width);
  k.read("height", pool.synth.height);
  k.read("radius", pool.synth.radius);
  k.read("contrast", pool.synth.contrast);
  k.read("gain_a", pool.synth.gain_a);
  k.read("sigma_b", pool.synth.sigma_b);
  k.read("envelope_radius", pool.synth.envelope_radius);
  k.read("seed", pool.synth.seed);
  k.finish();
  return pool;
}

inline void read_train(const json& j, TrainConfig& t) {
  Keys k(j, "train");
  k.read("lr", t.lr);
  k.read("batch_size", t.batch_size);
  if (const json* u = k.get("batch_unit")) {
    const std::string s = u->get<std::string>();
    if (s == "images") {
      t.batch_unit = BatchUnit::kImages;
    } else if (s == "patches") {
      t.batch_unit = BatchUnit::kPatches;
    } else {
      throw Error(ErrorKind::kConfig, "train.batch_unit must be 'images' or 'patches'");
    }
  }
  k.read("max_epochs", t.max_epochs);
  k.read("patience", t.patience);
  k.read("lambda_cov", t.weights.lambda_cov);
  k.read("mu_dist", t.weights.mu_dist);
  k.read("gamma_real", t.weights.gamma_real);
  k.read("std_min", t.std_min);
  k.read("prob_max", t.prob_max);
  k.read("rotations", t.rotations);
  k.finish();
}

inline void read_detector(const json& j, DetectorSettings& d) {
  Keys k(j, "detector");
  k.read("reg", d.fit.reg);
  k.read("iters", d.fit.iters);
  k.read("lr", d.fit.lr);
  k.read("q_quant", d.dctr.q_quant);
  k.read("t_trunc", d.dctr.t_trunc);
  k.read("reduced", d.dctr.reduced);
  k.read("train_pairs", d.train_pairs);
  k.read("eval_pairs", d.eval_pairs);
  k.read("chordal_k", d.chordal_k);
  k.finish();
}

inline std::vector<fs::path> read_paths(const json& j, const std::string& where,
                                        const fs::path& base) {
  if (!j.is_array()) throw Error(ErrorKind::kConfig, where + " must be a list of paths");
  std::vector<fs::path> out;
  for (const auto& v : j) out.push_back(resolve(base, v.get<std::string>()));
  return out;
}

}  // namespace detail

inline SensorPoolSpec default_pool_spec(std::uint64_t seed, std::size_t count) {
  SensorPoolSpec s;
  s.seed = seed;
  s.count = count;
  return s;
}

inline ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  c.pool.synth = default_pool_spec(11, 64);
  c.source_pool.synth = default_pool_spec(22, 64);
  return c;
}

// Relative paths are taken relative to base (the config file's directory).
inline ExperimentConfig parse_experiment_config(const json& j, const fs::path& base = {}) {
  ExperimentConfig c = default_experiment_config();
  detail::Keys k(j, "config");
  try {
    k.read("seed", c.seed);
    c.train.seed = c.seed;
    k.read("kernel_size", c.kernel_size);
    k.read("qf", c.qf);
    k.read("payload", c.payload);
    if (const json* b = k.get("balance")) c.balance = parse_balance(b->get<std::string>());
    if (const json* kern = k.get("kernel")) {
      if (kern->is_string()) {
        c.kernel = kern->get<std::string>();
      } else {
        c.kernel_classes = kern->get<std::vector<double>>();
      }
    }
    if (const json* p = k.get("pool")) c.pool = detail::read_pool(*p, "pool", base, c.pool);
    if (const json* p = k.get("pairs_pool")) {
      PoolSource def;
      def.synth = default_pool_spec(33, 300);
      c.pairs_pool = detail::read_pool(*p, "pairs_pool", base, def);
    }
    if (const json* p = k.get("source_pool")) {
      c.source_pool = detail::read_pool(*p, "source_pool", base, c.source_pool);
    }
    if (const json* p = k.get("eval_source_pool")) {
      c.eval_source_pool = detail::read_pool(*p, "eval_source_pool", base, c.source_pool);
    }
    if (const json* p = k.get("target_dir")) c.target_dir = detail::resolve(base, p->get<std::string>());
    if (const json* p = k.get("input")) c.input = detail::resolve(base, p->get<std::string>());
    if (const json* p = k.get("kernel_file")) {
      const std::string s = p->get<std::string>();
      c.kernel_file = s == "identity" ? fs::path(s) : detail::resolve(base, s);
    }
    k.read("pairs", c.pairs);
    if (const json* t = k.get("train")) detail::read_train(*t, c.train);
    if (const json* d = k.get("detector")) detail::read_detector(*d, c.detector);
    k.read("self_check", c.self_check);
    k.read("dump_patches", c.dump_patches);
    if (const json* r = k.get("reports")) c.reports = detail::read_paths(*r, "reports", base);
    if (const json* r = k.get("logs")) c.logs = detail::read_paths(*r, "logs", base);
    if (const json* o = k.get("out")) c.out = detail::resolve(base, o->get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("malformed config value: ") + e.what());
  }
  k.finish();
  c.train.kernel_size = c.kernel_size;
  return c;
}

inline ExperimentConfig load_experiment_config(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::kConfig, "config file not found: " + path.string());
  json j;
  try {
    j = json::parse(read_file_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kConfig, "config is not valid JSON: " + std::string(e.what()));
  }
  return parse_experiment_config(j, path.parent_path());
}

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(ErrorKind::kConfig, msg);
}

inline void require_path(const std::optional<fs::path>& p, const std::string& key) {
  require(p.has_value(), "config needs '" + key + "'");
  require(fs::exists(*p), key + " does not exist: " + p->string());
}

inline void validate_pool(const PoolSource& p, const std::string& key) {
  if (p.dir) {
    require(fs::is_directory(*p.dir), key + ".dir is not a directory: " + p.dir->string());
  } else {
    require(p.synth.count > 0, key + ".count must be > 0");
    require(p.synth.width > 0 && p.synth.width % 8 == 0 && p.synth.height > 0 &&
                p.synth.height % 8 == 0,
            key + " dimensions must be positive multiples of 8");
    require(p.synth.gain_a >= 0.0 && p.synth.sigma_b >= 0.0, key + " noise must be >= 0");
  }
}

inline void validate_common(const ExperimentConfig& c) {
  require(c.qf >= 1 && c.qf <= 100, "qf must lie in [1, 100]");
  require(c.payload > 0.0 && c.payload <= std::log2(3.0), "payload must lie in (0, log2 3]");
  require(c.out.has_value(), "an output directory is required (--out)");
  try {
    c.train.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfig, e.what());
  }
}

}  // namespace detail

inline SymmetricKernel target_kernel(const ExperimentConfig& c) {
  if (c.kernel_classes) {
    const int size = c.kernel_size;
    const auto r = static_cast<std::size_t>(size / 2 + 1);
    if (c.kernel_classes->size() != r * (r + 1) / 2) {
      throw Error(ErrorKind::kConfig, "kernel classes do not match kernel_size");
    }
    return SymmetricKernel(size, *c.kernel_classes);
  }
  if (c.kernel_size != 3) throw Error(ErrorKind::kConfig, "kernel presets are 3x3");
  return kernel_preset(c.kernel);
}

// Validates everything a command reads before it writes anything.
inline void validate_for(const std::string& command, const ExperimentConfig& c) {
  detail::validate_common(c);
  if (command == "synth-target") {
    detail::validate_pool(c.pool, "pool");
    if (c.pairs_pool) detail::validate_pool(*c.pairs_pool, "pairs_pool");
    const SymmetricKernel k = target_kernel(c);
    if (std::abs(k.sum()) <= 1e-12) throw Error(ErrorKind::kConfig, "target kernel sums to 0");
  } else if (command == "embed") {
    detail::require_path(c.input, "input");
  } else if (command == "train") {
    detail::require_path(c.target_dir, "target_dir");
    detail::require(fs::exists(*c.target_dir / "manifest.json"), "target_dir has no manifest.json");
    detail::validate_pool(c.source_pool, "source_pool");
  } else if (command == "emit-source") {
    detail::require(c.kernel_file.has_value(), "config needs 'kernel_file'");
    if (*c.kernel_file != "identity") detail::require_path(c.kernel_file, "kernel_file");
    detail::validate_pool(c.source_pool, "source_pool");
  } else if (command == "evaluate") {
    detail::require_path(c.target_dir, "target_dir");
    detail::require(fs::exists(*c.target_dir / "manifest.json"), "target_dir has no manifest.json");
    if (!c.self_check) {
      detail::require(c.kernel_file.has_value(), "config needs 'kernel_file'");
      if (*c.kernel_file != "identity") detail::require_path(c.kernel_file, "kernel_file");
      detail::validate_pool(c.eval_source_pool.value_or(c.source_pool), "eval_source_pool");
    }
    detail::require(c.detector.train_pairs >= 1 && c.detector.eval_pairs >= 1,
                    "detector train_pairs and eval_pairs must be >= 1");
    detail::require(c.detector.chordal_k >= 1, "detector.chordal_k must be >= 1");
    detail::require(c.detector.dctr.t_trunc >= 0, "detector.t_trunc must be >= 0");
  } else if (command == "report") {
    detail::require(!c.reports.empty(), "no input reports given");
    for (const auto& p : c.reports) {
      detail::require(fs::exists(p), "report not found: " + p.string());
    }
    for (const auto& p : c.logs) detail::require(fs::exists(p), "log not found: " + p.string());
  } else {
    throw Error(ErrorKind::kConfig, "unknown command '" + command + "'");
  }
}

inline SourcePool load_pool(const PoolSource& p) {
  if (!p.dir) return make_sensor_pool(p.synth);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(*p.dir)) {
    if (e.path().extension() == ".pgm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorKind::kIo, "no .pgm files in " + p.dir->string());
  SourcePool pool;
  for (const auto& f : files) {
    GrayImage img = read_pgm(f);
    if (img.depth != BitDepth::k16) {
      throw Error(ErrorKind::kUnsupportedMaxval, f.string() + " is not a 16-bit PGM");
    }
    pool.images.emplace_back(std::move(img));
  }
  return pool;
}

inline std::string numbered(const std::string& prefix, std::size_t i, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return prefix + buf + ext;
}

inline json kernel_json(const SymmetricKernel& k) {
  return {{"size", k.size()}, {"classes", k.classes()}};
}

inline void write_json(const fs::path& path, const json& j) {
  write_file_text(path, j.dump(2) + "\n");
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_file_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kMalformedHeader, path.string() + ": " + e.what());
  }
}

inline json cmd_synth_target(const ExperimentConfig& c) {
  validate_for("synth-target", c);
  const SymmetricKernel kernel = target_kernel(c);
  const QuantTable table = quant_table_from_qf(c.qf);
  const EmbeddingConfig ecfg = c.embedding();
  const SourcePool pool = load_pool(c.pool);
  std::vector<int> labels;
  const TargetSet target = synth_target(pool, kernel, table, c.balance, ecfg, &labels);

  PairedSet pairs;
  if (c.pairs_pool) {
    EmulatorPipeline truth;
    truth.kernel = kernel;
    truth.table = table;
    const SourcePool pp = load_pool(*c.pairs_pool);
    pairs = emit_source(truth, pp, ecfg, pp.images.size(), mix_seed(c.seed, 0x7061697273ULL));
  }

  const fs::path out = *c.out;
  fs::create_directories(out / "unlabeled");
  json items = json::array();
  std::size_t stego = 0;
  for (std::size_t i = 0; i < target.planes.size(); ++i) {
    const std::string name = numbered("unlabeled/", i, ".jca");
    write_coefficient_archive(target.planes[i], out / name);
    items.push_back({{"file", name}, {"stego", labels[i] == 1}});
    stego += static_cast<std::size_t>(labels[i]);
  }
  json pair_items = json::array();
  if (pairs.size() > 0) {
    fs::create_directories(out / "pairs");
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const std::string cov = numbered("pairs/cover_", i, ".jca");
      const std::string st = numbered("pairs/stego_", i, ".jca");
      write_coefficient_archive(pairs.covers[i], out / cov);
      write_coefficient_archive(pairs.stegos[i], out / st);
      pair_items.push_back({{"cover", cov}, {"stego", st}});
    }
  }
  json manifest = {{"kind", "target"},
                   {"kernel", kernel_json(kernel)},
                   {"qf", c.qf},
                   {"balance", to_string(c.balance)},
                   {"payload_bpnzac", c.payload},
                   {"seed", c.seed},
                   {"counts", {{"unlabeled", target.planes.size()}, {"stego", stego},
                               {"pairs", pairs.size()}}},
                   {"unlabeled", items},
                   {"pairs", pair_items}};
  write_json(out / "manifest.json", manifest);
  return manifest;
}

inline TargetSet load_unlabeled(const fs::path& dir, Balance balance) {
  const json m = read_json(dir / "manifest.json");
  TargetSet t;
  t.balance = balance;
  for (const auto& item : m.at("unlabeled")) {
    t.planes.push_back(read_coefficient_archive(dir / item.at("file").get<std::string>()));
  }
  if (t.planes.empty()) throw Error(ErrorKind::kTooFewSamples, "target has no images");
  t.validate();
  return t;
}

inline PairedSet load_pairs(const fs::path& dir, const json& entries) {
  PairedSet p;
  for (const auto& e : entries) {
    p.covers.push_back(read_coefficient_archive(dir / e.at("cover").get<std::string>()));
    p.stegos.push_back(read_coefficient_archive(dir / e.at("stego").get<std::string>()));
  }
  return p;
}

inline json cmd_embed(const ExperimentConfig& c) {
  validate_for("embed", c);
  std::vector<fs::path> files;
  if (fs::is_directory(*c.input)) {
    for (const auto& e : fs::directory_iterator(*c.input)) {
      if (e.path().extension() == ".jca") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(*c.input);
  }
  if (files.empty()) throw Error(ErrorKind::kIo, "no .jca files in " + c.input->string());
  const EmbeddingConfig ecfg = c.embedding();
  ecfg.validate();
  std::vector<JpegPlane> covers;
  for (const auto& f : files) covers.push_back(read_coefficient_archive(f));
  std::vector<ProbabilityMap> probs(covers.size());
  std::vector<JpegPlane> stegos(covers.size());
  parallel_for(covers.size(), [&](std::size_t i) {
    probs[i] = probmap_for_target(covers[i], ecfg);
    stegos[i] = embed(covers[i], probs[i], mix_seed(ecfg.seed, i));
  });
  const fs::path out = *c.out;
  fs::create_directories(out / "stego");
  fs::create_directories(out / "prob");
  json items = json::array();
  for (std::size_t i = 0; i < covers.size(); ++i) {
    const std::string stem = files[i].stem().string();
    write_coefficient_archive(stegos[i], out / "stego" / (stem + ".jca"));
    write_probability_archive(probs[i], out / "prob" / (stem + ".pmb"));
    items.push_back({{"cover", files[i].filename().string()},
                     {"stego", "stego/" + stem + ".jca"},
                     {"prob", "prob/" + stem + ".pmb"},
                     {"lambda", probs[i].lambda},
                     {"entropy_bits", achieved_entropy(probs[i])},
                     {"nzac", covers[i].nonzero_ac_count()}});
  }
  json manifest = {{"kind", "embedding"},
                   {"scheme", "uerd"},
                   {"payload_bpnzac", c.payload},
                   {"seed", c.seed},
                   {"items", items}};
  write_json(out / "manifest.json", manifest);
  return manifest;
}

inline std::string kernel_grid_text(const SymmetricKernel& k) {
  const auto grid = k.materialize();
  std::ostringstream os;
  char buf[32];
  for (int y = 0; y < k.size(); ++y) {
    for (int x = 0; x < k.size(); ++x) {
      std::snprintf(buf, sizeof buf, "%s%9.5f", x ? " " : "",
                    grid[static_cast<std::size_t>(y * k.size() + x)]);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

struct TrainOutcome {
  TrainResult result;
  SelectionCounts counts;
};

inline TrainOutcome cmd_train(const ExperimentConfig& c, const EpochCallback& on_epoch = {}) {
  validate_for("train", c);
  const json m = read_json(*c.target_dir / "manifest.json");
  const TargetSet target = load_unlabeled(*c.target_dir, c.balance);
  const SourcePool pool = load_pool(c.source_pool);
  TrainOutcome o;
  const PatchSet patches = prepare_target(target, c.embedding(), c.train.std_min,
                                          c.train.prob_max, &o.counts, c.train.rotations);
  o.result = train(pool, patches, target.table(), c.train, on_epoch);
  const std::string table_source = m.contains("qf") ? "qf" + std::to_string(m.at("qf").get<int>())
                                                    : "target";
  write_checkpoint(*c.out, o.result, c.train, table_source);
  if (c.dump_patches) write_file_text(*c.out / "target_patches.csv", patches_to_csv(patches));
  return o;
}

inline EmulatorPipeline load_source_pipeline(const fs::path& kernel_file, const QuantTable& table,
                                             int kernel_size) {
  if (kernel_file == "identity") {
    EmulatorPipeline p;
    p.kernel = SymmetricKernel::identity(kernel_size);
    p.table = table;
    return p;
  }
  return read_kernel_file(kernel_file);
}

inline json cmd_emit_source(const ExperimentConfig& c) {
  validate_for("emit-source", c);
  const SourcePool pool = load_pool(c.source_pool);
  const EmulatorPipeline p =
      load_source_pipeline(*c.kernel_file, quant_table_from_qf(c.qf), c.kernel_size);
  const std::size_t n = c.pairs == 0 ? pool.images.size() : c.pairs;
  const PairedSet set = emit_source(p, pool, c.embedding(), n, c.seed);
  const fs::path out = *c.out;
  fs::create_directories(out / "pairs");
  json entries = json::array();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::string cov = numbered("pairs/cover_", i, ".jca");
    const std::string st = numbered("pairs/stego_", i, ".jca");
    write_coefficient_archive(set.covers[i], out / cov);
    write_coefficient_archive(set.stegos[i], out / st);
    entries.push_back({{"cover", cov}, {"stego", st}});
  }
  json manifest = {{"kind", "source"},
                   {"kernel", kernel_json(p.kernel)},
                   {"payload_bpnzac", c.payload},
                   {"seed", c.seed},
                   {"counts", {{"pairs", set.size()}}},
                   {"pairs", entries}};
  write_json(out / "manifest.json", manifest);
  return manifest;
}

inline json cmd_evaluate(const ExperimentConfig& c) {
  validate_for("evaluate", c);
  const json m = read_json(*c.target_dir / "manifest.json");
  const PairedSet target = load_pairs(*c.target_dir, m.at("pairs"));
  const auto& d = c.detector;
  if (target.size() < d.train_pairs + d.eval_pairs) {
    throw Error(ErrorKind::kTooFewSamples,
                "target has " + std::to_string(target.size()) + " pairs, need " +
                    std::to_string(d.train_pairs + d.eval_pairs));
  }
  SplitFeatures tgt{featurize(target, 0, d.train_pairs, d.dctr),
                    featurize(target, d.train_pairs, d.train_pairs + d.eval_pairs, d.dctr)};
  const RegretReport self = regret(tgt, tgt, d.fit);
  json report = {{"intrinsic_difficulty", self.pe_target_on_target},
                 {"feature_spec", tgt.train.x.front().spec_id},
                 {"feature_dim", tgt.train.x.front().values.size()},
                 {"train_pairs", d.train_pairs},
                 {"eval_pairs", d.eval_pairs},
                 {"payload_bpnzac", c.payload},
                 {"seed", c.seed}};
  if (c.self_check) {
    report["self_check"] = to_json(self);
  } else {
    const SourcePool pool = load_pool(c.eval_source_pool.value_or(c.source_pool));
    const QuantTable& table = target.covers.front().table;
    const EmulatorPipeline naive = load_source_pipeline("identity", table, c.kernel_size);
    const EmulatorPipeline tada = load_source_pipeline(*c.kernel_file, table, c.kernel_size);
    json chordal = {{"k", d.chordal_k}};
    for (const auto& [name, pipe] : {std::pair{"naive", naive}, std::pair{"tada", tada}}) {
      const PairedSet src = emit_source(pipe, pool, c.embedding(), d.train_pairs, c.seed);
      SplitFeatures sf{featurize(src, 0, src.size(), d.dctr), {}};
      const Detector det = train_detector(sf.train, d.fit, name);
      RegretReport r;
      r.pe_source_on_target = probability_of_error(det, tgt.eval);
      r.pe_target_on_target = self.pe_target_on_target;
      r.regret = r.pe_source_on_target - r.pe_target_on_target;
      report[name] = to_json(r);
      report[name]["kernel"] = kernel_json(pipe.kernel);
      chordal[name] = chordal_diagnostic(sf.train, tgt.train, d.chordal_k);
    }
    report["chordal"] = chordal;
  }
  fs::create_directories(*c.out);
  write_json(*c.out / "report.json", report);
  return report;
}

inline std::string experiment_name(const fs::path& report) {
  return report.filename() == "report.json" ? report.parent_path().filename().string()
                                            : report.stem().string();
}

// Aggregates report JSONs into a table with one column per experiment and
// concatenates loss logs into one curve file.
inline json cmd_report(const ExperimentConfig& c) {
  validate_for("report", c);
  std::vector<std::pair<std::string, json>> reports;
  for (const auto& p : c.reports) reports.emplace_back(experiment_name(p), read_json(p));
  auto pct = [](const json& r, const char* a, const char* b) -> std::string {
    if (!r.contains(a) || (b && !r.at(a).contains(b))) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * (b ? r.at(a).at(b) : r.at(a)).get<double>());
    return buf;
  };
  std::string table = "metric";
  for (const auto& [name, r] : reports) table += "," + name;
  table += "\n";
  const std::vector<std::tuple<const char*, const char*, const char*>> rows = {
      {"Regret Source Naive", "naive", "regret"},
      {"Regret Source TADA", "tada", "regret"},
      {"Intrinsic Difficulty", "intrinsic_difficulty", nullptr}};
  for (const auto& [label, a, b] : rows) {
    table += label;
    for (const auto& [name, r] : reports) table += "," + pct(r, a, b);
    table += "\n";
  }
  fs::create_directories(*c.out);
  write_file_text(*c.out / "table.csv", table);
  json summary = {{"experiments", reports.size()}, {"table", "table.csv"}};
  if (!c.logs.empty()) {
    std::string curves = "experiment,epoch,total,cov_term,w1_term,realism_term,lr\n";
    for (const auto& log : c.logs) {
      std::istringstream in(read_file_text(log));
      std::string line;
      std::getline(in, line);
      const std::string name = log.parent_path().filename().string();
      while (std::getline(in, line)) {
        if (!line.empty()) curves += name + "," + line + "\n";
      }
    }
    write_file_text(*c.out / "loss_curves.csv", curves);
    summary["loss_curves"] = "loss_curves.csv";
  }
  return summary;
}

}  // namespace tada
