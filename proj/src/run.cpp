// Copyright 2026 The PhoDe Toolkit Authors
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

#include <algorithm>
#include <atomic>
#include <cctype>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "phode/error_analysis.hpp"
#include "phode/pipeline.hpp"
#include "phode/rng.hpp"

namespace phode {

int RunLedger::count(SentenceStatus s) const {
  return static_cast<int>(
      std::count_if(entries.begin(), entries.end(), [&](const LedgerEntry& e) { return e.status == s; }));
}

std::string RunLedger::json() const {
  nlohmann::json j;
  j["config_hash"] = config_hash;
  j["version"] = version;
  j["processed"] = count(SentenceStatus::processed);
  j["excluded"] = count(SentenceStatus::excluded);
  j["failed"] = count(SentenceStatus::failed);
  auto arr = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json row{{"sentence_id", e.sentence_id}, {"status", std::string(to_string(e.status))}};
    if (!e.reason.empty()) row["reason"] = e.reason;
    arr.push_back(row);
  }
  j["sentences"] = arr;
  return j.dump(2) + "\n";
}

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kFrameMs = 10.0;

// ---------------------------------------------------------------------------
// Files

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
  if (!os) throw std::runtime_error("error writing " + p.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw StaleArtifactError("missing artifact " + p.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string file_stem_for(std::string_view id) {
  std::string s(id);
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return s;
}

std::string with_provenance(const std::string& json_text, const ExperimentConfig& cfg) {
  json j = json::parse(json_text);
  j["config_hash"] = config_hash(cfg);
  j["version"] = std::string(kVersion);
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Corpus

struct CorpusItem {
  ManifestEntry entry;
  std::optional<SegmentedUtterance> segmentation;
  std::string error;
};

struct Corpus {
  std::vector<CorpusItem> items;
  ClassDurations means;
  BigramModel bigram;
};

Corpus load_corpus(const ExperimentConfig& cfg) {
  std::vector<ManifestEntry> entries;
  try {
    entries = load_manifest(cfg.manifest);
  } catch (const std::exception& e) {
    throw ConfigError("cannot load manifest " + cfg.manifest.string() + ": " + e.what());
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.sentence_id < b.sentence_id; });
  std::set<std::string> stems;
  for (const auto& e : entries)
    if (!stems.insert(file_stem_for(e.sentence_id)).second)
      throw ConfigError("manifest: duplicate sentence id " + e.sentence_id);

  Corpus c;
  std::vector<SegmentedUtterance> loaded;
  std::vector<std::vector<Phoneme>> sequences;
  for (auto& e : entries) {
    CorpusItem item{e, std::nullopt, {}};
    try {
      auto seg = load_segmentation(e.seg_path);
      seg.sentence_id = e.sentence_id;
      validate(seg);
      std::vector<Phoneme> seq;
      for (const auto& s : seg.segments) seq.push_back(s.phoneme);
      sequences.push_back(std::move(seq));
      loaded.push_back(seg);
      item.segmentation = std::move(seg);
    } catch (const std::exception& ex) {
      item.error = std::string("segmentation: ") + ex.what();
    }
    c.items.push_back(std::move(item));
  }
  c.means = mean_class_durations(loaded);
  c.bigram = fit_bigram(sequences);
  return c;
}

Waveform load_input(const fs::path& path) {
  Waveform w = read_wav(path);
  const int rate = SpectrogramConfig{}.sample_rate;
  if (w.sample_rate != rate) {
    w.samples = resample_linear(w.samples, static_cast<double>(rate) / w.sample_rate);
    w.sample_rate = rate;
  }
  quantize_float32(w);
  return w;
}

SentenceOptions sentence_options(const ExperimentConfig& cfg) {
  SentenceOptions opt;
  opt.seed = cfg.seed;
  opt.vocoder = cfg.vocoder;
  if (cfg.augmentation_config) opt.augmentation_config_path = cfg.augmentation_config->string();
  opt.keep_traces = cfg.needs_activations();
  return opt;
}

ModelWeights load_model(const ExperimentConfig& cfg) {
  if (cfg.weights.empty()) throw ConfigError("no weight file configured");
  try {
    return load_weights(cfg.weights);
  } catch (const std::exception& e) {
    throw ConfigError("cannot load weights " + cfg.weights.string() + ": " + e.what());
  }
}

void check_launch(const ExperimentConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError("no output directory configured");
  if (cfg.augmentation_config) {
    for (auto n : cfg.noise_levels) {
      if (n == NoiseLevel::quiet) continue;
      try {
        (void)load_augmentation_config(*cfg.augmentation_config, n, 0);
      } catch (const std::exception& e) {
        throw ConfigError("augmentation config " + cfg.augmentation_config->string() + ": " + e.what());
      }
    }
  }
  for (const auto& cell : cfg.cells()) {
    if (auto h = cfg.human_for(cell)) {
      try {
        (void)load_confusion_csv(*h);
      } catch (const std::exception& e) {
        throw ConfigError("human confusion matrix " + h->string() + ": " + e.what());
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Ordered worker pool: results are consumed in index order on the calling
// thread, with at most 2 * jobs results buffered.

template <typename R, typename Work, typename Consume>
void ordered_parallel(std::size_t n, int jobs, Work work, Consume consume) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) consume(i, work(i));
    return;
  }
  std::vector<std::optional<R>> slots(n);
  std::mutex m;
  std::condition_variable cv;
  std::size_t next = 0, consumed = 0;
  const std::size_t window = 2 * static_cast<std::size_t>(jobs);
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::unique_lock lock(m);
        cv.wait(lock, [&] { return next >= n || next < consumed + window; });
        if (next >= n) return;
        i = next++;
      }
      R r = work(i);
      {
        std::lock_guard lock(m);
        slots[i] = std::move(r);
      }
      cv.notify_all();
    }
  };
  std::vector<std::jthread> threads;
  for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
  for (std::size_t i = 0; i < n; ++i) {
    R r;
    {
      std::unique_lock lock(m);
      cv.wait(lock, [&] { return slots[i].has_value(); });
      r = std::move(*slots[i]);
      slots[i].reset();
      consumed = i + 1;
    }
    cv.notify_all();
    try {
      consume(i, std::move(r));
    } catch (...) {
      {
        std::lock_guard lock(m);
        next = n;
      }
      cv.notify_all();
      throw;
    }
  }
}

// ---------------------------------------------------------------------------
// Per-sentence records

struct CellRecord {
  std::string sentence_id;
  double time_scale = 1.0;
  SegmentedUtterance target;
  std::vector<PredictionEvent> predictions;
  AlignedSentence alignment;
};

struct SentenceOutcome {
  std::string sentence_id;
  std::string error;
  /// In cfg.cells() order.
  std::vector<CellRecord> cells;
  std::vector<std::vector<LayerActivationTrace>> traces;
};

CellRecord make_record(const SegmentedUtterance& seg, double time_scale,
                       std::vector<PredictionEvent> predictions) {
  CellRecord r;
  r.sentence_id = seg.sentence_id;
  r.time_scale = time_scale;
  r.target = time_scale == 1.0 ? seg : rescale_times(seg, time_scale);
  r.predictions = std::move(predictions);
  r.alignment = exclude_if_inverted(correct_alignment(levenshtein_align(r.target, r.predictions)));
  return r;
}

/// Exclusion is shared between the NH and CI versions of a sentence at the
/// same noise level.
void settle(const std::vector<Cell>& cells, SentenceOutcome& o) {
  if (!o.error.empty()) return;
  for (std::size_t a = 0; a < cells.size(); ++a)
    for (std::size_t b = a + 1; b < cells.size(); ++b)
      if (cells[a].noise == cells[b].noise && cells[a].condition != cells[b].condition) {
        auto& nh = cells[a].condition == Condition::nh ? o.cells[a] : o.cells[b];
        auto& ci = cells[a].condition == Condition::nh ? o.cells[b] : o.cells[a];
        propagate_exclusion(nh.alignment, ci.alignment);
      }
}

LedgerEntry ledger_entry(const std::vector<Cell>& cells, const SentenceOutcome& o) {
  LedgerEntry e{o.sentence_id, SentenceStatus::processed, {}};
  if (!o.error.empty()) {
    e.status = SentenceStatus::failed;
    e.reason = o.error;
    return e;
  }
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (o.cells[i].alignment.excluded) {
      e.status = SentenceStatus::excluded;
      e.reason = cells[i].name() + ": " + o.cells[i].alignment.exclusion_reason;
      break;
    }
  return e;
}

std::vector<PredictionEvent> infer(const Waveform& w, const ModelWeights& weights, bool keep_traces,
                                   std::vector<LayerActivationTrace>* traces) {
  const auto x = compute_spectrogram(w);
  ForwardOptions fo;
  fo.capture_traces = keep_traces;
  auto fwd = forward<float>(x, weights, fo);
  if (keep_traces && traces) *traces = std::move(fwd.traces);
  return ctc_greedy_decode(fwd.posterior, x.hop_ms);
}

// ---------------------------------------------------------------------------
// Analysis accumulators

std::vector<int> selected_layers(const ExperimentConfig& cfg, std::size_t available) {
  std::vector<int> out;
  if (cfg.dynamics_layers.empty()) {
    for (std::size_t i = 0; i < available; ++i) out.push_back(static_cast<int>(i));
  } else {
    for (int l : cfg.dynamics_layers)
      if (static_cast<std::size_t>(l) < available) out.push_back(l);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }
  return out;
}

class DynamicsAccumulator {
 public:
  DynamicsAccumulator(const ExperimentConfig& cfg, const BigramModel& bigram)
      : cfg_(cfg), bigram_(bigram) {}

  void add(const Cell& cell, const CellRecord& r, const std::vector<LayerActivationTrace>& traces) {
    if (r.alignment.excluded) return;
    auto windows = extract_windows(r.alignment, kFrameMs);
    label_probable(windows, r.target, bigram_);
    note_layers(traces.size());
    for (int layer : selected_layers(cfg_, traces.size())) {
      auto& b = buckets_[{cell.name(), layer}];
      for (const auto& w : windows) {
        int& n = b.counts[{w.phoneme.token_id(), static_cast<int>(category_of(w))}];
        if (n >= cfg_.exemplars.max_per_category) continue;
        ++n;
        b.windows.push_back(interpolate_window(traces[static_cast<std::size_t>(layer)], w, cfg_.window));
      }
    }
  }

  DynamicsReport report() const {
    DynamicsReport rep;
    for (int l : cfg_.dynamics_layers)
      if (available_ && static_cast<std::size_t>(l) >= *available_)
        rep.warnings.push_back("layer " + std::to_string(l) + " does not exist in the model");
    for (const auto& cell : cfg_.cells()) {
      const std::string cond(to_string(cell.condition)), noise(to_string(cell.noise));
      for (int layer : selected_layers(cfg_, available_.value_or(0))) {
        const std::string key = cell.name() + "/layer" + std::to_string(layer);
        auto it = buckets_.find({cell.name(), layer});
        const auto exemplars = it == buckets_.end()
                                   ? std::vector<ExemplarSet>{}
                                   : collect_exemplars(it->second.windows, cfg_.exemplars);
        auto& compared = rep.compared_phonemes[key];
        for (const auto& e : exemplars) compared.emplace_back(e.phoneme.symbol());
        if (exemplars.empty()) {
          rep.warnings.push_back(key + ": no phoneme has enough windows in every category");
          continue;
        }
        Eigen::Index rows = 0, units = 0;
        for (const auto& e : exemplars)
          for (const auto& cat : e.by_category)
            for (const auto& w : cat) {
              rows += w.values.rows();
              units = w.values.cols();
            }
        Eigen::MatrixXd data(rows, units);
        Eigen::Index at = 0;
        for (const auto& e : exemplars)
          for (const auto& cat : e.by_category)
            for (const auto& w : cat) {
              data.middleRows(at, w.values.rows()) = w.values;
              at += w.values.rows();
            }
        const auto space = fit_pca(data, cfg_.pca_threshold);
        for (auto mode : {DistanceMode::within_category, DistanceMode::between_nc_and_c})
          for (auto& curve : distance_curves(exemplars, space, mode)) {
            if (curve.degenerate) rep.warnings.push_back(key + ": " + curve.label + " curve is degenerate");
            rep.entries.push_back(make_entry(layer, cond, noise, std::move(curve)));
          }
      }
    }
    return rep;
  }

 private:
  void note_layers(std::size_t n) {
    if (!available_) available_ = n;
  }
  struct Bucket {
    std::vector<InterpolatedWindow> windows;
    std::map<std::pair<int, int>, int> counts;
  };
  const ExperimentConfig& cfg_;
  const BigramModel& bigram_;
  std::optional<std::size_t> available_;
  std::map<std::pair<std::string, int>, Bucket> buckets_;
};

class DecodeAccumulator {
 public:
  explicit DecodeAccumulator(const ExperimentConfig& cfg) : cfg_(cfg) {}

  void add(const Cell& cell, const CellRecord& r, const std::vector<LayerActivationTrace>& traces) {
    if (!available_) available_ = traces.size();
    for (int layer : selected_layers(cfg_, traces.size())) {
      const auto& values = traces[static_cast<std::size_t>(layer)].values;
      const auto labels = frame_labels(r.target, static_cast<int>(values.rows()), kFrameMs);
      auto& b = buckets_[{cell.name(), layer}];
      for (Eigen::Index t = 0; t < values.rows(); ++t) {
        if (labels[static_cast<std::size_t>(t)] < 0) continue;
        if (static_cast<int>(b.labels.size()) >= cfg_.decode_max_frames) break;
        b.rows.emplace_back(values.row(t).cast<double>());
        b.labels.push_back(labels[static_cast<std::size_t>(t)]);
      }
    }
  }

  DynamicsReport report() const {
    DynamicsReport rep;
    for (const auto& cell : cfg_.cells()) {
      for (int layer : selected_layers(cfg_, available_.value_or(0))) {
        const std::string key = cell.name() + "/layer" + std::to_string(layer);
        auto it = buckets_.find({cell.name(), layer});
        if (it == buckets_.end() || it->second.labels.empty()) {
          rep.warnings.push_back(key + ": no labelled frames to decode");
          continue;
        }
        const auto& b = it->second;
        if (std::set<int>(b.labels.begin(), b.labels.end()).size() < 2) {
          rep.warnings.push_back(key + ": fewer than two phoneme classes, decoding skipped");
          continue;
        }
        Eigen::MatrixXd x(static_cast<Eigen::Index>(b.rows.size()), b.rows.front().size());
        for (std::size_t i = 0; i < b.rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = b.rows[i];
        DecodeConfig dc = cfg_.decoding;
        dc.seed = derive_seed(cfg_.seed, "decode", key);
        auto result = linear_decode(x, b.labels, dc);
        for (const auto& unseen : result.unseen_classes)
          if (!unseen.empty()) {
            rep.warnings.push_back(key + ": some test classes were absent from a training split");
            break;
          }
        rep.decoding.push_back({layer, std::string(to_string(cell.condition)),
                                std::string(to_string(cell.noise)), std::move(result)});
      }
    }
    return rep;
  }

 private:
  struct Bucket {
    std::vector<Eigen::RowVectorXd> rows;
    std::vector<int> labels;
  };
  const ExperimentConfig& cfg_;
  std::optional<std::size_t> available_;
  std::map<std::pair<std::string, int>, Bucket> buckets_;
};

// ---------------------------------------------------------------------------
// Stage bookkeeping

fs::path stage_dir(const ExperimentConfig& cfg, std::string_view stage) { return cfg.out_dir / stage; }

void write_stage(const ExperimentConfig& cfg, std::string_view stage,
                 const std::map<std::string, std::string>& failed) {
  json j;
  j["stage"] = std::string(stage);
  j["pipeline_hash"] = pipeline_hash(cfg);
  j["version"] = std::string(kVersion);
  j["failed"] = failed;
  write_text(stage_dir(cfg, stage) / "stage.json", j.dump(2) + "\n");
}

/// Failures recorded by the upstream stage.
std::map<std::string, std::string> require_stage(const ExperimentConfig& cfg, std::string_view stage) {
  const auto path = stage_dir(cfg, stage) / "stage.json";
  if (!fs::exists(path))
    throw StaleArtifactError("no " + std::string(stage) + " artifacts under " + cfg.out_dir.string() +
                             "; run the " + std::string(stage) + " stage first");
  const json j = json::parse(read_text(path));
  const std::string found = j.value("pipeline_hash", "");
  const std::string expected = pipeline_hash(cfg);
  if (found != expected)
    throw StaleArtifactError(std::string(stage) + " artifacts in " + stage_dir(cfg, stage).string() +
                             " were produced under pipeline hash " + found +
                             " but the current configuration hashes to " + expected +
                             "; rerun the " + std::string(stage) + " stage");
  return j.at("failed").get<std::map<std::string, std::string>>();
}

fs::path augmented_wav(const ExperimentConfig& cfg, NoiseLevel n, std::string_view id) {
  return stage_dir(cfg, "augment") / to_string(n) / (file_stem_for(id) + ".wav");
}

fs::path input_wav(const ExperimentConfig& cfg, const Cell& c, std::string_view id) {
  if (c.condition == Condition::nh) return augmented_wav(cfg, c.noise, id);
  return stage_dir(cfg, "vocode") / c.name() / (file_stem_for(id) + ".wav");
}

fs::path activation_file(const ExperimentConfig& cfg, const Cell& c, std::string_view id) {
  return stage_dir(cfg, "infer") / c.name() / (file_stem_for(id) + ".act");
}

// ---------------------------------------------------------------------------
// Alignment artifacts

std::string alignment_json(const Cell& cell, const std::vector<CellRecord>& records) {
  json sentences = json::array();
  for (const auto& r : records) {
    json pairs = json::array();
    for (const auto& p : r.alignment.pairs) {
      if (p.predicted)
        pairs.push_back({p.target_index, p.predicted->token.id(), p.predicted->frame, p.predicted->time_ms});
      else
        pairs.push_back({p.target_index, -1, 0, 0.0});
    }
    json preds = json::array();
    for (const auto& e : r.predictions) preds.push_back({e.token.id(), e.frame, e.time_ms});
    sentences.push_back({{"sentence_id", r.sentence_id},
                         {"time_scale", r.time_scale},
                         {"excluded", r.alignment.excluded},
                         {"reason", r.alignment.exclusion_reason},
                         {"predictions", preds},
                         {"pairs", pairs}});
  }
  return json{{"cell", cell.name()}, {"sentences", sentences}}.dump() + "\n";
}

using Records = std::vector<std::vector<CellRecord>>;  // per cell, sorted by sentence id

Records read_alignments(const ExperimentConfig& cfg, const Corpus& corpus) {
  std::map<std::string, const SegmentedUtterance*> segs;
  for (const auto& it : corpus.items)
    if (it.segmentation) segs[it.entry.sentence_id] = &*it.segmentation;
  Records out;
  for (const auto& cell : cfg.cells()) {
    const json j = json::parse(read_text(stage_dir(cfg, "align") / (cell.name() + ".json")));
    std::vector<CellRecord> recs;
    for (const auto& s : j.at("sentences")) {
      const std::string id = s.at("sentence_id");
      auto seg = segs.find(id);
      if (seg == segs.end())
        throw StaleArtifactError("alignment artifact names sentence " + id + " missing from the manifest");
      CellRecord r;
      r.sentence_id = id;
      r.time_scale = s.at("time_scale").get<double>();
      r.target = r.time_scale == 1.0 ? *seg->second : rescale_times(*seg->second, r.time_scale);
      for (const auto& e : s.at("predictions"))
        r.predictions.push_back({Token::from_id(e[0].get<int>()), e[1].get<int>(), e[2].get<double>()});
      r.alignment.sentence_id = id;
      r.alignment.excluded = s.at("excluded").get<bool>();
      r.alignment.exclusion_reason = s.at("reason").get<std::string>();
      for (const auto& p : s.at("pairs")) {
        AlignmentPair pair;
        pair.target_index = p[0].get<int>();
        if (pair.target_index >= 0)
          pair.target = r.target.segments.at(static_cast<std::size_t>(pair.target_index));
        if (p[1].get<int>() >= 0)
          pair.predicted = PredictionEvent{Token::from_id(p[1].get<int>()), p[2].get<int>(), p[3].get<double>()};
        r.alignment.pairs.push_back(std::move(pair));
      }
      recs.push_back(std::move(r));
    }
    out.push_back(std::move(recs));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

fs::path reports_dir(const ExperimentConfig& cfg) { return cfg.out_dir / "reports"; }

void write_alignment_outputs(const ExperimentConfig& cfg, const Records& records, const RunLedger& ledger,
                             const std::map<std::string, std::string>& failed) {
  const auto cells = cfg.cells();
  json summary_cells = json::array();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    write_text(stage_dir(cfg, "align") / (cells[c].name() + ".json"), alignment_json(cells[c], records[c]));
    std::string csv = alignment_csv_header();
    std::vector<std::vector<int>> refs, hyps;
    int excluded = 0;
    for (const auto& r : records[c]) {
      csv += format_alignment_csv(r.alignment);
      std::vector<int> ref, hyp;
      for (const auto& s : r.target.segments) ref.push_back(s.phoneme.token_id());
      for (const auto& p : r.predictions) hyp.push_back(p.token.id());
      refs.push_back(std::move(ref));
      hyps.push_back(std::move(hyp));
      excluded += r.alignment.excluded;
    }
    write_text(stage_dir(cfg, "align") / (cells[c].name() + ".csv"), csv);
    json cj{{"cell", cells[c].name()},
            {"condition", std::string(to_string(cells[c].condition))},
            {"noise", std::string(to_string(cells[c].noise))},
            {"sentences", records[c].size()},
            {"excluded", excluded}};
    cj["token_error_rate"] = refs.empty() ? json() : json(token_error_rate(refs, hyps));
    summary_cells.push_back(cj);
  }
  write_stage(cfg, "align", failed);
  write_text(cfg.out_dir / "ledger.json", ledger.json());
  json summary{{"sentences", ledger.entries.size()},
               {"processed", ledger.count(SentenceStatus::processed)},
               {"excluded", ledger.count(SentenceStatus::excluded)},
               {"failed", ledger.count(SentenceStatus::failed)},
               {"cells", summary_cells}};
  write_text(reports_dir(cfg) / "summary.json", with_provenance(summary.dump(), cfg));
}

std::vector<AlignedSentence> alignments_of(const std::vector<CellRecord>& recs) {
  std::vector<AlignedSentence> out;
  for (const auto& r : recs) out.push_back(r.alignment);
  return out;
}

void write_confusion_reports(const ExperimentConfig& cfg, const Records& records) {
  const auto cells = cfg.cells();
  const auto& inventory = all_phonemes();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto aligned = alignments_of(records[c]);
    const auto m = build_confusion(aligned, std::span<const Phoneme>(inventory.data(), inventory.size()));
    write_text(reports_dir(cfg) / ("confusion_" + cells[c].name() + ".csv"), format_confusion_csv(m, false));
    if (auto h = cfg.human_for(cells[c])) {
      ConfusionMatrix human;
      try {
        human = load_confusion_csv(*h);
      } catch (const std::exception& e) {
        throw ConfigError("human confusion matrix " + h->string() + ": " + e.what());
      }
      const auto sim = m.restrict_to(human.phonemes);
      const auto rep =
          compare_to_human(sim, human, cfg.shuffles, derive_seed(cfg.seed, "similarity", cells[c].name()));
      write_text(reports_dir(cfg) / ("similarity_" + cells[c].name() + ".json"),
                 with_provenance(similarity_json(rep), cfg));
    }
  }
}

void write_word_error_reports(const ExperimentConfig& cfg, const Records& records) {
  const auto cells = cfg.cells();
  std::string rows = "condition,noise,sentence_id,word_index,word,category\n";
  std::string counts = "condition,noise,category,count\n";
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const std::string prefix =
        std::string(to_string(cells[c].condition)) + "," + std::string(to_string(cells[c].noise)) + ",";
    std::vector<WordErrorRecord> all;
    for (const auto& r : records[c]) {
      for (auto& w : classify_word_errors(r.alignment, r.target)) {
        rows += prefix + w.sentence_id + "," + std::to_string(w.word_index) + "," + w.word + "," +
                std::string(to_string(w.category)) + "\n";
        all.push_back(std::move(w));
      }
    }
    const auto t = tally(all);
    for (auto cat : {WordErrorCategory::correct, WordErrorCategory::sub, WordErrorCategory::add,
                     WordErrorCategory::om, WordErrorCategory::failed, WordErrorCategory::sub_om,
                     WordErrorCategory::sub_add, WordErrorCategory::om_add, WordErrorCategory::s_o_a}) {
      auto it = t.find(cat);
      counts += prefix + std::string(to_string(cat)) + "," + std::to_string(it == t.end() ? 0 : it->second) + "\n";
    }
  }
  write_text(reports_dir(cfg) / "word_errors.csv", rows);
  write_text(reports_dir(cfg) / "word_error_counts.csv", counts);
}

void write_rt_reports(const ExperimentConfig& cfg, const Corpus& corpus, const Records& records) {
  const auto cells = cfg.cells();
  std::vector<RtRecord> all;
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (const auto& r : records[c])
      for (const auto& w : extract_windows(r.alignment, kFrameMs))
        all.push_back(reaction_time(w, corpus.means, std::string(to_string(cells[c].condition)),
                                    std::string(to_string(cells[c].noise)), kFrameMs));
  write_text(reports_dir(cfg) / "rt.csv", rt_csv_header() + format_rt_csv(all));
  std::string cdf = "measure,condition,confused,noise,rt_ms,fraction\n";
  for (bool adjusted : {false, true})
    for (const auto& [group, points] : rt_cdf(all, adjusted)) {
      const auto& [cond, confused, noise] = group;
      for (const auto& p : points)
        cdf += std::string(adjusted ? "adjusted" : "raw") + "," + cond + "," + (confused ? "1" : "0") + "," +
               noise + "," + format_number(p.rt_ms) + "," + format_number(p.fraction) + "\n";
    }
  write_text(reports_dir(cfg) / "rt_cdf.csv", cdf);
}

void write_dynamics_reports(const ExperimentConfig& cfg, const DynamicsReport& rep) {
  write_text(reports_dir(cfg) / "dynamics.json", with_provenance(dynamics_json(rep), cfg));
  write_text(reports_dir(cfg) / "dynamics_summary.csv", dynamics_summary_csv(rep));
  write_text(reports_dir(cfg) / "dynamics_curves.csv", dynamics_curves_csv(rep));
}

void write_decode_reports(const ExperimentConfig& cfg, const DynamicsReport& rep) {
  write_text(reports_dir(cfg) / "decoding.json", with_provenance(dynamics_json(rep), cfg));
  write_text(reports_dir(cfg) / "decoding.csv", decoding_csv(rep));
}

void write_provenance(const ExperimentConfig& cfg) {
  json j{{"config_hash", config_hash(cfg)},
         {"pipeline_hash", pipeline_hash(cfg)},
         {"version", std::string(kVersion)},
         {"config", json::parse(experiment_config_json(cfg))}};
  j["config"].erase("out");
  j["config"].erase("jobs");
  write_text(reports_dir(cfg) / "provenance.json", j.dump(2) + "\n");
}

std::map<std::string, double> read_time_scales(const ExperimentConfig& cfg, NoiseLevel n) {
  std::map<std::string, double> out;
  std::istringstream is(read_text(stage_dir(cfg, "augment") / to_string(n) / "time_scale.csv"));
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 2) throw StaleArtifactError("malformed time_scale.csv line: " + line);
    out[f[0]] = std::stod(f[1]);
  }
  return out;
}

std::map<std::string, std::vector<PredictionEvent>> read_predictions(const ExperimentConfig& cfg,
                                                                     const Cell& c) {
  std::map<std::string, std::vector<PredictionEvent>> out;
  std::istringstream is(read_text(stage_dir(cfg, "infer") / c.name() / "predictions.csv"));
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) throw StaleArtifactError("malformed predictions.csv line: " + line);
    auto& v = out[f[0]];
    if (f[1].empty()) continue;  // sentence with no predictions
    v.push_back({Token::from_id(std::stoi(f[1])), std::stoi(f[2]), std::stod(f[3])});
  }
  return out;
}

std::string predictions_csv_rows(std::string_view id, const std::vector<PredictionEvent>& preds) {
  std::string out;
  if (preds.empty()) return std::string(id) + ",,,\n";
  for (const auto& p : preds)
    out += std::string(id) + "," + std::to_string(p.token.id()) + "," + std::to_string(p.frame) + "," +
           format_number(p.time_ms) + "\n";
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

RunLedger run(const ExperimentConfig& cfg) {
  check_launch(cfg);
  const ModelWeights weights = load_model(cfg);
  const Corpus corpus = load_corpus(cfg);
  const auto cells = cfg.cells();
  const auto opt = sentence_options(cfg);

  RunLedger ledger;
  ledger.config_hash = config_hash(cfg);
  Records records(cells.size());
  std::map<std::string, std::string> failed;
  DynamicsAccumulator dyn(cfg, corpus.bigram);
  DecodeAccumulator dec(cfg);

  auto work = [&](std::size_t i) {
    const auto& item = corpus.items[i];
    SentenceOutcome o;
    o.sentence_id = item.entry.sentence_id;
    if (!item.segmentation) {
      o.error = item.error;
      return o;
    }
    std::string where = "input";
    try {
      const Waveform input = load_input(item.entry.wav_path);
      std::map<NoiseLevel, PreparedAudio> augmented;
      for (const auto& c : cells) {
        where = c.name();
        auto it = augmented.find(c.noise);
        if (it == augmented.end())
          it = augmented.emplace(c.noise, augment_audio(input, o.sentence_id, c.noise, opt)).first;
        const Waveform w =
            c.condition == Condition::ci ? vocode_audio(it->second.waveform, o.sentence_id, opt) : it->second.waveform;
        std::vector<LayerActivationTrace> traces;
        auto preds = infer(w, weights, opt.keep_traces, &traces);
        o.cells.push_back(make_record(*item.segmentation, it->second.time_scale, std::move(preds)));
        o.traces.push_back(std::move(traces));
      }
    } catch (const std::exception& e) {
      o.cells.clear();
      o.traces.clear();
      o.error = where + ": " + e.what();
    }
    return o;
  };
  auto consume = [&](std::size_t, SentenceOutcome o) {
    settle(cells, o);
    auto entry = ledger_entry(cells, o);
    log(entry.status == SentenceStatus::failed ? LogLevel::warn : LogLevel::info,
        o.sentence_id + " " + std::string(to_string(entry.status)) +
            (entry.reason.empty() ? "" : " (" + entry.reason + ")"));
    if (entry.status == SentenceStatus::failed) {
      failed[o.sentence_id] = entry.reason;
    } else {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (cfg.dynamics) dyn.add(cells[c], o.cells[c], o.traces[c]);
        if (cfg.decode) dec.add(cells[c], o.cells[c], o.traces[c]);
        records[c].push_back(std::move(o.cells[c]));
      }
    }
    ledger.entries.push_back(std::move(entry));
  };
  ordered_parallel<SentenceOutcome>(corpus.items.size(), cfg.jobs, work, consume);

  write_alignment_outputs(cfg, records, ledger, failed);
  write_confusion_reports(cfg, records);
  write_word_error_reports(cfg, records);
  write_rt_reports(cfg, corpus, records);
  if (cfg.dynamics) write_dynamics_reports(cfg, dyn.report());
  if (cfg.decode) write_decode_reports(cfg, dec.report());
  write_provenance(cfg);
  return ledger;
}

void stage_augment(const ExperimentConfig& cfg) {
  check_launch(cfg);
  const Corpus corpus = load_corpus(cfg);
  const auto opt = sentence_options(cfg);
  struct Out {
    std::string error;
    std::map<NoiseLevel, double> scales;
  };
  std::map<std::string, std::string> failed;
  std::map<NoiseLevel, std::string> scale_csv;
  for (auto n : cfg.noise_levels) scale_csv[n] = "sentence_id,time_scale\n";
  auto work = [&](std::size_t i) {
    const auto& item = corpus.items[i];
    Out o;
    if (!item.segmentation) {
      o.error = item.error;
      return o;
    }
    try {
      const Waveform input = load_input(item.entry.wav_path);
      for (auto n : cfg.noise_levels) {
        auto a = augment_audio(input, item.entry.sentence_id, n, opt);
        fs::create_directories(augmented_wav(cfg, n, item.entry.sentence_id).parent_path());
        write_wav(a.waveform, augmented_wav(cfg, n, item.entry.sentence_id), WavEncoding::float32);
        o.scales[n] = a.time_scale;
      }
    } catch (const std::exception& e) {
      o.error = std::string("input: ") + e.what();
    }
    return o;
  };
  auto consume = [&](std::size_t i, Out o) {
    const auto& id = corpus.items[i].entry.sentence_id;
    if (!o.error.empty()) {
      log(LogLevel::warn, id + " failed (" + o.error + ")");
      failed[id] = o.error;
      return;
    }
    for (const auto& [n, s] : o.scales) scale_csv[n] += id + "," + format_number(s) + "\n";
  };
  ordered_parallel<Out>(corpus.items.size(), cfg.jobs, work, consume);
  for (const auto& [n, text] : scale_csv) write_text(stage_dir(cfg, "augment") / to_string(n) / "time_scale.csv", text);
  write_stage(cfg, "augment", failed);
}

void stage_vocode(const ExperimentConfig& cfg) {
  auto failed = require_stage(cfg, "augment");
  const Corpus corpus = load_corpus(cfg);
  const auto opt = sentence_options(cfg);
  std::vector<Cell> ci;
  for (const auto& c : cfg.cells())
    if (c.condition == Condition::ci) ci.push_back(c);
  auto work = [&](std::size_t i) -> std::string {
    const auto& id = corpus.items[i].entry.sentence_id;
    if (failed.count(id)) return {};
    std::string where;
    try {
      for (const auto& c : ci) {
        where = c.name();
        const Waveform in = read_wav(augmented_wav(cfg, c.noise, id));
        const auto out = input_wav(cfg, c, id);
        fs::create_directories(out.parent_path());
        write_wav(vocode_audio(in, id, opt), out, WavEncoding::float32);
      }
    } catch (const std::exception& e) {
      return where + ": " + e.what();
    }
    return {};
  };
  auto consume = [&](std::size_t i, std::string err) {
    if (!err.empty()) failed[corpus.items[i].entry.sentence_id] = err;
  };
  ordered_parallel<std::string>(corpus.items.size(), cfg.jobs, work, consume);
  write_stage(cfg, "vocode", failed);
}

void stage_infer(const ExperimentConfig& cfg) {
  auto failed = require_stage(cfg, "vocode");
  const ModelWeights weights = load_model(cfg);
  const Corpus corpus = load_corpus(cfg);
  const auto cells = cfg.cells();
  const bool keep = cfg.needs_activations();
  struct Out {
    std::string error;
    std::vector<std::vector<PredictionEvent>> preds;
  };
  std::vector<std::string> csv(cells.size(), "sentence_id,token,frame,time_ms\n");
  auto work = [&](std::size_t i) {
    const auto& id = corpus.items[i].entry.sentence_id;
    Out o;
    if (failed.count(id)) return o;
    std::string where;
    try {
      for (const auto& c : cells) {
        where = c.name();
        std::vector<LayerActivationTrace> traces;
        o.preds.push_back(infer(read_wav(input_wav(cfg, c, id)), weights, keep, &traces));
        if (keep) {
          fs::create_directories(activation_file(cfg, c, id).parent_path());
          save_activations(traces, activation_file(cfg, c, id));
        }
      }
    } catch (const std::exception& e) {
      o.error = where + ": " + e.what();
    }
    return o;
  };
  auto consume = [&](std::size_t i, Out o) {
    const auto& id = corpus.items[i].entry.sentence_id;
    if (failed.count(id)) return;
    if (!o.error.empty()) {
      failed[id] = o.error;
      return;
    }
    for (std::size_t c = 0; c < cells.size(); ++c) csv[c] += predictions_csv_rows(id, o.preds[c]);
  };
  ordered_parallel<Out>(corpus.items.size(), cfg.jobs, work, consume);
  for (std::size_t c = 0; c < cells.size(); ++c)
    write_text(stage_dir(cfg, "infer") / cells[c].name() / "predictions.csv", csv[c]);
  write_stage(cfg, "infer", failed);
}

RunLedger stage_align(const ExperimentConfig& cfg) {
  (void)require_stage(cfg, "augment");
  auto failed = require_stage(cfg, "infer");
  const Corpus corpus = load_corpus(cfg);
  const auto cells = cfg.cells();
  std::map<NoiseLevel, std::map<std::string, double>> scales;
  for (auto n : cfg.noise_levels) scales[n] = read_time_scales(cfg, n);
  std::vector<std::map<std::string, std::vector<PredictionEvent>>> preds;
  for (const auto& c : cells) preds.push_back(read_predictions(cfg, c));

  RunLedger ledger;
  ledger.config_hash = config_hash(cfg);
  Records records(cells.size());
  for (const auto& item : corpus.items) {
    SentenceOutcome o;
    o.sentence_id = item.entry.sentence_id;
    if (auto f = failed.find(o.sentence_id); f != failed.end()) {
      o.error = f->second;
    } else {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        auto s = scales[cells[c].noise].find(o.sentence_id);
        auto p = preds[c].find(o.sentence_id);
        if (s == scales[cells[c].noise].end() || p == preds[c].end())
          throw StaleArtifactError("stage artifacts lack sentence " + o.sentence_id + " for " + cells[c].name());
        o.cells.push_back(make_record(*item.segmentation, s->second, p->second));
      }
    }
    settle(cells, o);
    auto entry = ledger_entry(cells, o);
    if (entry.status != SentenceStatus::failed)
      for (std::size_t c = 0; c < cells.size(); ++c) records[c].push_back(std::move(o.cells[c]));
    ledger.entries.push_back(std::move(entry));
  }
  write_alignment_outputs(cfg, records, ledger, failed);
  write_provenance(cfg);
  return ledger;
}

void stage_confuse(const ExperimentConfig& cfg) {
  (void)require_stage(cfg, "align");
  check_launch(cfg);
  const Corpus corpus = load_corpus(cfg);
  write_confusion_reports(cfg, read_alignments(cfg, corpus));
}

void stage_errors(const ExperimentConfig& cfg) {
  (void)require_stage(cfg, "align");
  const Corpus corpus = load_corpus(cfg);
  write_word_error_reports(cfg, read_alignments(cfg, corpus));
}

void stage_rt(const ExperimentConfig& cfg) {
  (void)require_stage(cfg, "align");
  const Corpus corpus = load_corpus(cfg);
  write_rt_reports(cfg, corpus, read_alignments(cfg, corpus));
}

namespace {

template <typename Acc>
void replay_activations(const ExperimentConfig& cfg, const Corpus& corpus, const Records& records, Acc& acc) {
  const auto cells = cfg.cells();
  std::vector<std::size_t> at(cells.size(), 0);
  // Sentence-major order, matching the monolithic run.
  for (const auto& item : corpus.items) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (at[c] >= records[c].size() || records[c][at[c]].sentence_id != item.entry.sentence_id) continue;
      const auto& r = records[c][at[c]++];
      const auto path = activation_file(cfg, cells[c], r.sentence_id);
      if (!fs::exists(path)) throw StaleArtifactError("missing activation dump " + path.string());
      acc.add(cells[c], r, load_activations(path));
    }
  }
}

}  // namespace

void stage_dynamics(const ExperimentConfig& cfg) {
  if (!cfg.needs_activations()) throw ConfigError("dynamics needs activation dumps; enable dynamics in the config");
  (void)require_stage(cfg, "infer");
  (void)require_stage(cfg, "align");
  const Corpus corpus = load_corpus(cfg);
  const auto records = read_alignments(cfg, corpus);
  DynamicsAccumulator acc(cfg, corpus.bigram);
  replay_activations(cfg, corpus, records, acc);
  write_dynamics_reports(cfg, acc.report());
}

void stage_decode(const ExperimentConfig& cfg) {
  if (!cfg.needs_activations()) throw ConfigError("decode needs activation dumps; enable decode in the config");
  (void)require_stage(cfg, "infer");
  (void)require_stage(cfg, "align");
  const Corpus corpus = load_corpus(cfg);
  const auto records = read_alignments(cfg, corpus);
  DecodeAccumulator acc(cfg);
  replay_activations(cfg, corpus, records, acc);
  write_decode_reports(cfg, acc.report());
}

void vocode_file(const fs::path& wav, const fs::path& out_dir, const VocoderConfig& cfg,
                 std::string_view sentence_id) {
  const Waveform w = read_wav(wav);
  Electrodogram e = encode(w, cfg.filterbank, cfg.pulse_rate);
  if (cfg.apply_spread) e = apply_spread(e, cfg.spread);
  fs::create_directories(out_dir);
  write_electrodogram_csv(e, out_dir / "electrodogram.csv");
  write_wav(resynthesize(e, cfg.filterbank, cfg.seed, sentence_id), out_dir / "ci.wav", WavEncoding::float32);
}

}  // namespace phode
