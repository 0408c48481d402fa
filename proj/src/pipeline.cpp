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

#include "phode/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <stdexcept>

#include "phode/rng.hpp"

namespace phode {

std::string_view to_string(Condition c) { return c == Condition::nh ? "NH" : "CI"; }

Condition parse_condition(std::string_view s) {
  std::string up(s);
  std::transform(up.begin(), up.end(), up.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
  if (up == "NH") return Condition::nh;
  if (up == "CI") return Condition::ci;
  throw std::invalid_argument("unknown condition '" + std::string(s) + "' (expected NH or CI)");
}

SegmentedUtterance rescale_times(const SegmentedUtterance& u, double scale) {
  SegmentedUtterance out = u;
  for (auto& s : out.segments) {
    s.onset_ms *= scale;
    s.offset_ms *= scale;
  }
  return out;
}

AugmentationConfig augmentation_for(NoiseLevel level, const SentenceOptions& opt) {
  const auto seed = derive_seed(opt.seed, "augment");
  if (opt.augmentation_config_path)
    return load_augmentation_config(*opt.augmentation_config_path, level, seed);
  return AugmentationConfig::for_level(level, seed);
}

void quantize_float32(Waveform& w) {
  w.samples = w.samples.cast<float>().cast<double>();
}

PreparedAudio augment_audio(const Waveform& w, std::string_view sentence_id, NoiseLevel noise,
                            const SentenceOptions& opt) {
  PreparedAudio out;
  if (noise == NoiseLevel::quiet) {
    out.waveform = w;
    return out;
  }
  auto r = augment_detailed(w, augmentation_for(noise, opt), sentence_id);
  out.waveform = std::move(r.waveform);
  out.time_scale = r.time_scale;
  quantize_float32(out.waveform);
  return out;
}

Waveform vocode_audio(const Waveform& w, std::string_view sentence_id, const SentenceOptions& opt) {
  VocoderConfig vc = opt.vocoder;
  vc.seed = derive_seed(opt.seed, "vocoder");
  Waveform out = ci_waveform(w, vc, sentence_id);
  quantize_float32(out);
  return out;
}

PreparedAudio prepare_audio(const Waveform& w, std::string_view sentence_id, Condition condition,
                            NoiseLevel noise, const SentenceOptions& opt) {
  PreparedAudio out = augment_audio(w, sentence_id, noise, opt);
  if (condition == Condition::ci) out.waveform = vocode_audio(out.waveform, sentence_id, opt);
  return out;
}

SentenceResult process_sentence(const Waveform& w, const SegmentedUtterance& u,
                                const ModelWeights& weights, Condition condition,
                                NoiseLevel noise, const SentenceOptions& opt) {
  SentenceResult r;
  r.sentence_id = u.sentence_id;
  r.condition = condition;
  r.noise = noise;
  auto audio = prepare_audio(w, u.sentence_id, condition, noise, opt);
  r.time_scale = audio.time_scale;
  r.target = audio.time_scale == 1.0 ? u : rescale_times(u, audio.time_scale);
  r.input = compute_spectrogram(audio.waveform);

  ForwardOptions fo;
  fo.capture_traces = opt.keep_traces;
  auto fwd = forward<float>(r.input, weights, fo);
  r.posterior = std::move(fwd.posterior);
  if (opt.keep_traces) r.traces = std::move(fwd.traces);
  r.predictions = ctc_greedy_decode(r.posterior, r.input.hop_ms);
  r.alignment = exclude_if_inverted(correct_alignment(levenshtein_align(r.target, r.predictions)));
  return r;
}

std::string_view to_string(SentenceStatus s) {
  switch (s) {
    case SentenceStatus::processed: return "processed";
    case SentenceStatus::excluded: return "excluded";
    case SentenceStatus::failed: return "failed";
  }
  return "?";
}

LogLevel log_level() {
  const char* env = std::getenv("PHODE_LOG");
  if (!env) return LogLevel::warn;
  const std::string v(env);
  if (v == "error") return LogLevel::error;
  if (v == "info") return LogLevel::info;
  if (v == "debug") return LogLevel::debug;
  return LogLevel::warn;
}

void log(LogLevel level, const std::string& message) {
  static const LogLevel threshold = log_level();
  if (level > threshold) return;
  static std::mutex m;
  static constexpr const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard lock(m);
  std::cerr << "phode [" << names[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace phode
