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

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "phode/error_analysis.hpp"
#include "phode/pipeline.hpp"
#include "phode/toy_corpus.hpp"
#include "phode/train.hpp"

using namespace phode;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// Relative path -> contents for every regular file under `dir`.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

/// A small trained model and an evaluation corpus shared by the tests.
struct Fixture {
  fs::path root = fs::temp_directory_path() / "phode_pipeline_test";
  fs::path weights = root / "model.bin";
  fs::path corpus = root / "eval";

  Fixture() {
    fs::remove_all(root);
    fs::create_directories(root);
    ToyCorpusConfig tc;
    tc.utterances = 40;
    tc.seed = 21;
    std::vector<TrainingExample> ex;
    std::vector<Eigen::MatrixXd> frames;
    for (const auto& u : generate_toy_corpus(tc)) {
      auto x = compute_spectrogram(u.waveform);
      ex.push_back({u.segmentation.sentence_id, x.frames, ctc_target(u.segmentation)});
      frames.push_back(x.frames);
    }
    auto w = ModelWeights::random({.layers = 3, .hidden = 16}, 7);
    fit_input_normalization(w, frames);
    TrainConfig cfg{.learning_rate = 3e-3, .batch_size = 8, .epochs = 60, .clip_norm = 5.0, .seed = 1};
    Trainer<float>(w, cfg).fit(ex);
    save_weights(w, weights);

    ToyCorpusConfig ec;
    ec.utterances = 16;
    ec.seed = 22;
    write_toy_corpus(generate_toy_corpus(ec, 500), corpus);
  }

  ExperimentConfig config(const std::string& out) const {
    ExperimentConfig c;
    c.manifest = corpus / "manifest.csv";
    c.weights = weights;
    c.out_dir = root / out;
    c.seed = 3;
    c.conditions = {Condition::nh};
    c.noise_levels = {NoiseLevel::low};
    c.exemplars.min_per_category = 1;
    c.shuffles = 99;
    return c;
  }

  /// Manifest over the first `n` sentences, optionally pointing one at a
  /// missing WAV.
  fs::path sub_manifest(const std::string& name, std::size_t n, bool break_second) const {
    auto entries = load_manifest(corpus / "manifest.csv");
    entries.resize(n);
    if (break_second) entries[1].wav_path = corpus / "does-not-exist.wav";
    const auto path = root / (name + ".csv");
    save_manifest(entries, path);
    return path;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("config parsing applies overrides and resolves relative paths") {
  const auto cfg = parse_experiment_config(R"({
    "manifest": "data/manifest.csv", "weights": "/abs/model.bin", "out": "results",
    "seed": 42, "jobs": 3, "conditions": ["ci"], "noise_levels": ["quiet", "high"],
    "vocoder": {"pulse_rate": 900, "apply_spread": false},
    "human": {"CI": "h_ci.csv", "CI_high": "h_ci_high.csv", "*": "h.csv"},
    "shuffles": 250,
    "dynamics": {"layers": [1, 3], "pca_threshold": 0.8},
    "decode": {"enabled": false}
  })",
                                           "/base");
  CHECK(cfg.manifest == fs::path("/base/data/manifest.csv"));
  CHECK(cfg.weights == fs::path("/abs/model.bin"));
  CHECK(cfg.out_dir == fs::path("/base/results"));
  CHECK(cfg.seed == 42);
  CHECK(cfg.jobs == 3);
  CHECK(cfg.conditions == std::vector<Condition>{Condition::ci});
  CHECK(cfg.noise_levels == std::vector<NoiseLevel>{NoiseLevel::quiet, NoiseLevel::high});
  CHECK(cfg.vocoder.pulse_rate == 900);
  CHECK_FALSE(cfg.vocoder.apply_spread);
  CHECK(cfg.shuffles == 250);
  CHECK(cfg.dynamics_layers == std::vector<int>{1, 3});
  CHECK(cfg.pca_threshold == 0.8);
  CHECK_FALSE(cfg.decode);
  CHECK(cfg.needs_activations());
  CHECK(cfg.human_for({Condition::ci, NoiseLevel::high}) == fs::path("/base/h_ci_high.csv"));
  CHECK(cfg.human_for({Condition::ci, NoiseLevel::quiet}) == fs::path("/base/h_ci.csv"));
  CHECK(cfg.human_for({Condition::nh, NoiseLevel::quiet}) == fs::path("/base/h.csv"));
  CHECK(cfg.cells().size() == 2);
  CHECK(cfg.cells()[1].name() == "CI_high");

  const auto back = parse_experiment_config(experiment_config_json(cfg));
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK(experiment_config_json(back) == experiment_config_json(cfg));
}

TEST_CASE("invalid configs are rejected") {
  CHECK_THROWS_AS(parse_experiment_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"sede": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"seed": "x"})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"conditions": ["XX"]})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"conditions": []})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"noise_levels": ["low", "low"]})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"jobs": 0})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"vocoder": {"rate": 3}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"dynamics": {"pca_threshold": 1.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"decode": {"train_fraction": 1}})"), ConfigError);
  CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config hash changes exactly when a relevant field changes") {
  const auto& f = fixture();
  const auto base = f.config("hash");
  const auto h0 = config_hash(base), p0 = pipeline_hash(base);

  auto same = base;
  same.out_dir = "/elsewhere";
  same.jobs = 8;
  CHECK(config_hash(same) == h0);
  CHECK(pipeline_hash(same) == p0);

  auto analysis = base;
  analysis.shuffles = 1000;
  CHECK(config_hash(analysis) != h0);
  CHECK(pipeline_hash(analysis) == p0);

  std::vector<ExperimentConfig> upstream(6, base);
  upstream[0].seed = 4;
  upstream[1].conditions = {Condition::nh, Condition::ci};
  upstream[2].noise_levels = {NoiseLevel::mid};
  upstream[3].vocoder.pulse_rate = 800;
  upstream[4].dynamics = false;
  upstream[4].decode = false;
  upstream[5].weights = f.root / "missing-weights.bin";
  for (const auto& u : upstream) {
    CHECK(pipeline_hash(u) != p0);
    CHECK(config_hash(u) != h0);
  }
}

TEST_CASE("two-sentence run writes a ledger and reports") {
  const auto& f = fixture();
  auto cfg = f.config("smoke");
  cfg.manifest = f.sub_manifest("two", 2, false);
  cfg.noise_levels = {NoiseLevel::quiet};
  fs::remove_all(cfg.out_dir);
  const auto ledger = run(cfg);
  REQUIRE(ledger.entries.size() == 2);
  CHECK(ledger.count(SentenceStatus::failed) == 0);
  CHECK(ledger.count(SentenceStatus::processed) + ledger.count(SentenceStatus::excluded) == 2);
  CHECK(ledger.config_hash == config_hash(cfg));
  CHECK(fs::exists(cfg.out_dir / "reports" / "confusion_NH_quiet.csv"));
  for (const char* name : {"summary.json", "word_errors.csv", "rt.csv", "rt_cdf.csv", "dynamics.json",
                           "decoding.csv", "provenance.json"})
    CHECK(fs::exists(cfg.out_dir / "reports" / name));
  const auto led = nlohmann::json::parse(slurp(cfg.out_dir / "ledger.json"));
  CHECK(led["sentences"].size() == 2);
  CHECK(led["version"] == std::string(kVersion));
  const auto confusion = load_confusion_csv(cfg.out_dir / "reports" / "confusion_NH_quiet.csv");
  CHECK(confusion.phonemes.size() == all_phonemes().size());
}

TEST_CASE("a missing WAV fails only its own sentence") {
  const auto& f = fixture();
  auto cfg = f.config("isolation");
  cfg.manifest = f.sub_manifest("broken", 4, true);
  fs::remove_all(cfg.out_dir);
  const auto ledger = run(cfg);
  REQUIRE(ledger.entries.size() == 4);
  CHECK(ledger.count(SentenceStatus::failed) == 1);
  CHECK(ledger.entries[1].status == SentenceStatus::failed);
  CHECK(ledger.entries[1].reason.find("input") != std::string::npos);
  for (std::size_t i : {0u, 2u, 3u}) CHECK(ledger.entries[i].status != SentenceStatus::failed);
  const auto summary = nlohmann::json::parse(slurp(cfg.out_dir / "reports" / "summary.json"));
  CHECK(summary["cells"][0]["sentences"] == 3);
  CHECK(fs::exists(cfg.out_dir / "reports" / "confusion_NH_low.csv"));
}

TEST_CASE("missing weights abort before any output") {
  const auto& f = fixture();
  auto cfg = f.config("noweights");
  cfg.weights = f.root / "absent.bin";
  fs::remove_all(cfg.out_dir);
  CHECK_THROWS_AS(run(cfg), ConfigError);
  CHECK_FALSE(fs::exists(cfg.out_dir));
}

TEST_CASE("runs are deterministic, staged equals monolithic, and stale artifacts are refused") {
  const auto& f = fixture();
  auto mono = f.config("mono");
  fs::remove_all(mono.out_dir);
  const auto ledger = run(mono);
  CHECK(ledger.count(SentenceStatus::processed) > 0);

  auto again = f.config("again");
  again.jobs = 3;
  fs::remove_all(again.out_dir);
  run(again);
  const auto mono_reports = tree(mono.out_dir / "reports");
  CHECK(tree(again.out_dir / "reports") == mono_reports);
  CHECK(slurp(again.out_dir / "ledger.json") == slurp(mono.out_dir / "ledger.json"));

  // The fixture is large enough for non-empty dynamics and decoding.
  CHECK(slurp(mono.out_dir / "reports" / "dynamics_summary.csv").find("\n0,NH,low,") != std::string::npos);
  CHECK(slurp(mono.out_dir / "reports" / "decoding.csv").find("\n0,NH,low,") != std::string::npos);

  auto staged = f.config("staged");
  staged.jobs = 2;
  fs::remove_all(staged.out_dir);
  CHECK_THROWS_AS(stage_vocode(staged), StaleArtifactError);
  stage_augment(staged);
  stage_vocode(staged);
  stage_infer(staged);
  const auto staged_ledger = stage_align(staged);
  stage_confuse(staged);
  stage_errors(staged);
  stage_rt(staged);
  stage_dynamics(staged);
  stage_decode(staged);
  CHECK(tree(staged.out_dir / "reports") == mono_reports);
  CHECK(tree(staged.out_dir / "align") == tree(mono.out_dir / "align"));
  CHECK(staged_ledger.json() == ledger.json());

  // Reports can be regenerated from the monolithic run's alignments.
  stage_errors(mono);
  CHECK(tree(mono.out_dir / "reports") == mono_reports);

  auto stale = staged;
  stale.seed = 99;
  CHECK_THROWS_AS(stage_infer(stale), StaleArtifactError);
  CHECK_THROWS_AS(stage_confuse(stale), StaleArtifactError);
  CHECK_THROWS_AS(stage_dynamics(stale), StaleArtifactError);
}

TEST_CASE("single-file vocoding writes an electrodogram and a CI waveform") {
  const auto& f = fixture();
  const auto entries = load_manifest(f.corpus / "manifest.csv");
  const auto out = f.root / "vocode_one";
  VocoderConfig vc;
  vocode_file(entries[0].wav_path, out, vc, entries[0].sentence_id);
  const auto csv = slurp(out / "electrodogram.csv");
  CHECK(csv.rfind("channel,frame,amplitude", 0) == 0);
  const auto ci = read_wav(out / "ci.wav");
  const auto in = read_wav(entries[0].wav_path);
  CHECK(std::abs(ci.duration_s() - in.duration_s()) < 0.01);
  CHECK(ci.samples.cwiseAbs().maxCoeff() > 0.0);
}
