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

// phode: command line front end for the experiment pipeline.
//
// Exit codes: 0 success, 1 unexpected error, 2 configuration error (including
// stale or missing upstream artifacts), 3 finished with per-sentence failures.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "phode/pipeline.hpp"
#include "phode/toy_corpus.hpp"
#include "phode/train.hpp"

namespace {

using namespace phode;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> conditions;
  std::vector<std::string> noise;
  std::string out;
  std::optional<int> jobs;
  std::string manifest;
  std::string weights;
  std::string human;
  std::optional<int> shuffles;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config, "Experiment config JSON");
  app->add_option("--seed", o.seed, "Master seed (overrides the config)");
  app->add_option("--condition", o.conditions, "NH and/or CI")->delimiter(',');
  app->add_option("--noise", o.noise, "quiet, low, mid and/or high")->delimiter(',');
  app->add_option("--out", o.out, "Output directory");
  app->add_option("--jobs", o.jobs, "Worker threads");
  app->add_option("--manifest", o.manifest, "Manifest CSV (overrides the config)");
  app->add_option("--weights", o.weights, "Model weight file (overrides the config)");
}

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_experiment_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.jobs) cfg.jobs = *o.jobs;
  if (!o.manifest.empty()) cfg.manifest = o.manifest;
  if (!o.weights.empty()) cfg.weights = o.weights;
  if (!o.human.empty()) cfg.human = {{"*", o.human}};
  if (o.shuffles) cfg.shuffles = *o.shuffles;
  try {
    if (!o.conditions.empty()) {
      cfg.conditions.clear();
      for (const auto& c : o.conditions) cfg.conditions.push_back(parse_condition(c));
    }
    if (!o.noise.empty()) {
      cfg.noise_levels.clear();
      for (const auto& n : o.noise) cfg.noise_levels.push_back(parse_noise_level(n));
    }
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (cfg.jobs < 1) throw ConfigError("--jobs must be at least 1");
  if (cfg.manifest.empty()) throw ConfigError("no manifest given (--manifest or config)");
  if (cfg.out_dir.empty()) throw ConfigError("no output directory given (--out or config)");
  return cfg;
}

int stage_failures(const ExperimentConfig& cfg, std::string_view stage) {
  std::ifstream is(cfg.out_dir / stage / "stage.json");
  if (!is) return 0;
  const auto j = nlohmann::json::parse(is);
  return static_cast<int>(j.at("failed").size());
}

int finish_stage(const ExperimentConfig& cfg, std::string_view stage) {
  const int failed = stage_failures(cfg, stage);
  if (failed > 0) {
    std::cerr << "phode: " << failed << " sentence(s) failed; see " << (cfg.out_dir / stage / "stage.json")
              << '\n';
    return kExitPartial;
  }
  return 0;
}

int finish_ledger(const RunLedger& ledger, const ExperimentConfig& cfg) {
  std::cout << "processed " << ledger.count(SentenceStatus::processed) << ", excluded "
            << ledger.count(SentenceStatus::excluded) << ", failed " << ledger.count(SentenceStatus::failed)
            << " (ledger " << (cfg.out_dir / "ledger.json").string() << ")\n";
  return ledger.count(SentenceStatus::failed) > 0 ? kExitPartial : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phoneme recognition experiments with natural and cochlear-implant-like input"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  CommonOptions opt;
  std::function<int()> action;

  auto stage = [&](const char* name, const char* help, auto fn) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, opt);
    sub->callback([&, fn] { action = [&, fn] { return fn(resolve_config(opt)); }; });
    return sub;
  };

  stage("run", "Run every stage in one pass and write all reports", [](const ExperimentConfig& cfg) {
    return finish_ledger(run(cfg), cfg);
  })->add_option("--human", opt.human, "Human confusion CSV compared against every cell");

  stage("augment", "Augment every manifest sentence at each noise level", [](const ExperimentConfig& cfg) {
    stage_augment(cfg);
    return finish_stage(cfg, "augment");
  });

  std::string vocode_input, vocode_id;
  auto* vocode = app.add_subcommand("vocode", "Vocode a WAV file, or the augment stage output");
  add_common(vocode, opt);
  vocode->add_option("--input", vocode_input, "Single WAV to vocode (writes electrodogram.csv and ci.wav)");
  vocode->add_option("--id", vocode_id, "Sentence id keying the carrier noise");
  vocode->callback([&] {
    action = [&] {
      if (!vocode_input.empty()) {
        if (opt.out.empty()) throw ConfigError("--out is required");
        ExperimentConfig cfg = opt.config.empty() ? ExperimentConfig{} : load_experiment_config(opt.config);
        VocoderConfig vc = cfg.vocoder;
        if (opt.seed) vc.seed = *opt.seed;
        vocode_file(vocode_input, opt.out, vc, vocode_id);
        return 0;
      }
      const auto cfg = resolve_config(opt);
      stage_vocode(cfg);
      return finish_stage(cfg, "vocode");
    };
  });

  stage("infer", "Run the model on every prepared input", [](const ExperimentConfig& cfg) {
    stage_infer(cfg);
    return finish_stage(cfg, "infer");
  });
  stage("align", "Align predictions to the spoken phonemes and write the ledger",
        [](const ExperimentConfig& cfg) { return finish_ledger(stage_align(cfg), cfg); });
  stage("confuse", "Confusion matrices and, with --human, similarity reports", [](const ExperimentConfig& cfg) {
    stage_confuse(cfg);
    return 0;
  })->add_option("--human", opt.human, "Human confusion CSV");
  app.get_subcommand("confuse")->add_option("--shuffles", opt.shuffles, "Relabelings for the shuffle test");
  stage("errors", "Word error categories", [](const ExperimentConfig& cfg) {
    stage_errors(cfg);
    return 0;
  });
  stage("rt", "Reaction times and their distributions", [](const ExperimentConfig& cfg) {
    stage_rt(cfg);
    return 0;
  });
  stage("dynamics", "Population dynamics from cached activations", [](const ExperimentConfig& cfg) {
    stage_dynamics(cfg);
    return 0;
  });
  stage("decode", "Linear phoneme decoding from cached activations", [](const ExperimentConfig& cfg) {
    stage_decode(cfg);
    return 0;
  });

  ToyCorpusConfig toy;
  int toy_first = 0;
  std::string toy_out;
  auto* toy_cmd = app.add_subcommand("toy", "Write a synthetic five-phoneme corpus with a manifest");
  toy_cmd->add_option("--out", toy_out, "Output directory")->required();
  toy_cmd->add_option("--count", toy.utterances, "Number of utterances")->check(CLI::PositiveNumber);
  toy_cmd->add_option("--first-index", toy_first, "Index of the first utterance id");
  toy_cmd->add_option("--seed", toy.seed, "Generator seed");
  toy_cmd->callback([&] {
    action = [&] {
      write_toy_corpus(generate_toy_corpus(toy, toy_first), toy_out);
      std::cout << "wrote " << toy.utterances << " utterances to " << toy_out << '\n';
      return 0;
    };
  });

  std::string train_manifest, train_out;
  ModelShape shape{.layers = 3, .hidden = 32};
  TrainConfig tc{.learning_rate = 2e-3, .batch_size = 16, .epochs = 60, .clip_norm = 5.0};
  std::uint64_t init_seed = 7;
  auto* train = app.add_subcommand("train", "Train a model on the quiet natural-hearing input of a manifest");
  train->add_option("--manifest", train_manifest, "Manifest CSV")->required();
  train->add_option("--out", train_out, "Weight file to write")->required();
  train->add_option("--layers", shape.layers, "LSTM layers")->check(CLI::PositiveNumber);
  train->add_option("--hidden", shape.hidden, "Hidden units per layer")->check(CLI::PositiveNumber);
  train->add_option("--epochs", tc.epochs, "Epochs")->check(CLI::PositiveNumber);
  train->add_option("--lr", tc.learning_rate, "Adam learning rate");
  train->add_option("--batch", tc.batch_size, "Batch size")->check(CLI::PositiveNumber);
  train->add_option("--clip", tc.clip_norm, "Gradient norm clip (0 disables)");
  train->add_option("--seed", tc.seed, "Batch shuffling seed");
  train->add_option("--init-seed", init_seed, "Weight initialization seed");
  train->callback([&] {
    action = [&] {
      std::vector<TrainingExample> examples;
      std::vector<Eigen::MatrixXd> frames;
      for (const auto& e : load_manifest(train_manifest)) {
        auto seg = load_segmentation(e.seg_path);
        auto x = compute_spectrogram(read_wav(e.wav_path));
        examples.push_back({e.sentence_id, x.frames, ctc_target(seg)});
        frames.push_back(std::move(x.frames));
      }
      auto w = ModelWeights::random(shape, init_seed);
      fit_input_normalization(w, frames);
      Trainer<float> trainer(w, tc);
      trainer.fit(examples, [](int epoch, double loss) {
        log(LogLevel::info, "epoch " + std::to_string(epoch) + " loss " + format_number(loss));
        return true;
      });
      save_weights(w, train_out);
      std::cout << "wrote " << train_out << '\n';
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  try {
    return action ? action() : 0;
  } catch (const ConfigError& e) {
    std::cerr << "phode: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "phode: " << e.what() << '\n';
    return 1;
  }
}
