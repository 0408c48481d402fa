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

#include "phode/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "json.hpp"
#include "phode/filters.hpp"
#include "phode/rng.hpp"

namespace phode {
namespace {

using nlohmann::json;

constexpr double kReferenceRate = 16000.0;

Eigen::VectorXd hann(int n) {
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

struct NamedRange {
  const char* name;
  ParamRange AugmentationConfig::*member;
};

constexpr NamedRange kFields[] = {
    {"background_snr", &AugmentationConfig::background_snr_db},
    {"pitch_shift", &AugmentationConfig::pitch_shift_semitones},
    {"speed_rate", &AugmentationConfig::speed_rate},
    {"tempo_rate", &AugmentationConfig::tempo_rate},
    {"chorus_n", &AugmentationConfig::chorus_n},
    {"echo_n", &AugmentationConfig::echo_n},
    {"reverb", &AugmentationConfig::reverb_percent},
    {"lowpass_f", &AugmentationConfig::lowpass_hz},
    {"highpass_f", &AugmentationConfig::highpass_hz},
    {"bandpass_f", &AugmentationConfig::bandpass_hz},
    {"bandpass_w", &AugmentationConfig::bandpass_width_oct},
    {"bandstop_f", &AugmentationConfig::bandstop_hz},
    {"bandstop_w", &AugmentationConfig::bandstop_width_oct},
};

int draw_count(const ParamRange& r, double u) {
  const int lo = static_cast<int>(std::lround(r.lo));
  const int hi = static_cast<int>(std::lround(r.hi));
  return std::min(hi, lo + static_cast<int>(u * (hi - lo + 1)));
}

}  // namespace

std::string_view to_string(NoiseLevel level) {
  switch (level) {
    case NoiseLevel::quiet: return "quiet";
    case NoiseLevel::low: return "low";
    case NoiseLevel::mid: return "mid";
    case NoiseLevel::high: return "high";
  }
  return "?";
}

NoiseLevel parse_noise_level(std::string_view name) {
  if (name == "quiet") return NoiseLevel::quiet;
  if (name == "low") return NoiseLevel::low;
  if (name == "mid" || name == "medium") return NoiseLevel::mid;
  if (name == "high") return NoiseLevel::high;
  throw std::invalid_argument("unknown noise level '" + std::string(name) + "'");
}

std::string_view to_string(Effect e) {
  switch (e) {
    case Effect::speed: return "speed";
    case Effect::tempo: return "tempo";
    case Effect::pitch: return "pitch";
    case Effect::lowpass: return "lowpass";
    case Effect::highpass: return "highpass";
    case Effect::bandpass: return "bandpass";
    case Effect::bandstop: return "bandstop";
    case Effect::chorus: return "chorus";
    case Effect::echo: return "echo";
    case Effect::reverb: return "reverb";
    case Effect::background_noise: return "background_noise";
  }
  return "?";
}

AugmentationConfig AugmentationConfig::for_level(NoiseLevel level, std::uint64_t seed) {
  AugmentationConfig c;
  c.level = level;
  c.seed = seed;
  switch (level) {
    case NoiseLevel::quiet:
      break;
    case NoiseLevel::low:
      c.background_snr_db = {10, 15};
      c.pitch_shift_semitones = {-2, 2};
      c.speed_rate = {0.9, 1.1};
      c.tempo_rate = {0.9, 1.2};
      c.chorus_n = {1, 3};
      c.echo_n = {1, 3};
      c.reverb_percent = {10, 40};
      c.lowpass_hz = {6000, 7500};
      c.highpass_hz = {100, 500};
      c.bandpass_hz = {100, 500};
      c.bandpass_width_oct = {12, 16};
      c.bandstop_hz = {300, 4000};
      c.bandstop_width_oct = {1, 2};
      break;
    case NoiseLevel::mid:
      c.background_snr_db = {0, 15};
      c.pitch_shift_semitones = {-4, 4};
      c.speed_rate = {0.7, 1.3};
      c.tempo_rate = {0.8, 1.4};
      c.chorus_n = {1, 4};
      c.echo_n = {1, 4};
      c.reverb_percent = {20, 70};
      c.lowpass_hz = {4000, 7000};
      c.highpass_hz = {300, 1000};
      c.bandpass_hz = {200, 1000};
      c.bandpass_width_oct = {6, 8};
      c.bandstop_hz = {300, 2500};
      c.bandstop_width_oct = {2, 3};
      break;
    case NoiseLevel::high:
      c.background_snr_db = {-10, 15};
      c.pitch_shift_semitones = {-6, 6};
      c.speed_rate = {0.5, 1.5};
      c.tempo_rate = {0.7, 1.6};
      c.chorus_n = {1, 6};
      c.echo_n = {1, 5};
      c.reverb_percent = {30, 100};
      c.lowpass_hz = {2000, 6000};
      c.highpass_hz = {500, 2000};
      c.bandpass_hz = {300, 1500};
      c.bandpass_width_oct = {3, 5};
      c.bandstop_hz = {300, 1500};
      c.bandstop_width_oct = {3, 5};
      break;
  }
  return c;
}

void AugmentationConfig::validate() const {
  for (const auto& f : kFields) {
    const ParamRange& r = this->*f.member;
    if (!(r.lo <= r.hi))
      throw std::invalid_argument(std::string("augmentation range '") + f.name +
                                  "' has lo > hi");
  }
  if (effect_probability < 0.0 || effect_probability > 1.0)
    throw std::invalid_argument("effect_probability must be in [0,1]");
}

AugmentationConfig load_augmentation_config(const std::filesystem::path& path,
                                            NoiseLevel level, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json doc = json::parse(in);
  AugmentationConfig c = AugmentationConfig::for_level(level, seed);
  if (level == NoiseLevel::quiet) return c;
  const auto key = std::string(to_string(level));
  if (!doc.contains(key)) return c;
  const json& entry = doc.at(key);
  for (const auto& f : kFields) {
    if (!entry.contains(f.name)) continue;
    const auto& v = entry.at(f.name);
    if (!v.is_array() || v.size() != 2)
      throw std::invalid_argument(std::string("field '") + f.name + "' must be [lo, hi]");
    c.*f.member = {v[0].get<double>(), v[1].get<double>()};
  }
  if (entry.contains("effect_probability"))
    c.effect_probability = entry.at("effect_probability").get<double>();
  c.validate();
  return c;
}

std::string default_augmentation_config_json() {
  json doc = json::object();
  for (auto level : {NoiseLevel::low, NoiseLevel::mid, NoiseLevel::high}) {
    const auto c = AugmentationConfig::for_level(level);
    json entry = json::object();
    for (const auto& f : kFields) {
      const ParamRange& r = c.*f.member;
      entry[f.name] = {r.lo, r.hi};
    }
    entry["effect_probability"] = c.effect_probability;
    doc[std::string(to_string(level))] = entry;
  }
  return doc.dump(2);
}

namespace effects {

Eigen::VectorXd add_noise_at_snr(const Eigen::Ref<const Eigen::VectorXd>& x, double snr_db,
                                 const Eigen::Ref<const Eigen::VectorXd>& masker) {
  const double signal_power = mean_power(x);
  if (signal_power == 0.0 || masker.size() == 0) return x;
  Eigen::VectorXd noise(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) noise[i] = masker[i % masker.size()];
  const double noise_power = mean_power(noise);
  if (noise_power == 0.0) return x;
  const double target = signal_power / std::pow(10.0, snr_db / 10.0);
  return x + noise * std::sqrt(target / noise_power);
}

Eigen::VectorXd time_stretch(const Eigen::Ref<const Eigen::VectorXd>& x, double rate,
                             int sample_rate) {
  const Eigen::Index n = x.size();
  const auto out_len = static_cast<Eigen::Index>(std::lround(static_cast<double>(n) / rate));
  int win = static_cast<int>(std::lround(0.030 * sample_rate));
  win += win % 2;
  const int hop = win / 2;
  const int tol = static_cast<int>(std::lround(0.005 * sample_rate));
  if (n < win || out_len < win) return resample_linear(x, 1.0 / rate);

  const Eigen::VectorXd window = hann(win);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(out_len + win);
  Eigen::VectorXd norm = Eigen::VectorXd::Zero(out_len + win);
  auto sample = [&](Eigen::Index i) { return (i >= 0 && i < n) ? x[i] : 0.0; };

  Eigen::Index prev = 0;
  for (Eigen::Index j = 0; j * hop < out_len; ++j) {
    const auto nominal = static_cast<Eigen::Index>(std::lround(j * hop * rate));
    Eigen::Index best = nominal;
    if (j > 0) {
      // Pick the candidate most similar to the natural continuation of the
      // previous grain.
      double best_score = -std::numeric_limits<double>::infinity();
      for (int d = -tol; d <= tol; ++d) {
        const Eigen::Index cand = nominal + d;
        if (cand < 0 || cand + win > n) continue;
        double score = 0.0;
        for (int k = 0; k < win; k += 2) score += sample(prev + hop + k) * x[cand + k];
        if (score > best_score) {
          best_score = score;
          best = cand;
        }
      }
    }
    best = std::clamp<Eigen::Index>(best, 0, std::max<Eigen::Index>(0, n - win));
    const Eigen::Index pos = j * hop;
    for (int k = 0; k < win; ++k) {
      out[pos + k] += window[k] * sample(best + k);
      norm[pos + k] += window[k];
    }
    prev = best;
  }
  Eigen::VectorXd y(out_len);
  for (Eigen::Index i = 0; i < out_len; ++i) y[i] = norm[i] > 1e-3 ? out[i] / norm[i] : out[i];
  return y;
}

Eigen::VectorXd pitch_shift(const Eigen::Ref<const Eigen::VectorXd>& x, double semitones,
                            int sample_rate) {
  const double ratio = std::pow(2.0, semitones / 12.0);
  // Stretch to n * ratio samples, then resample back to n: pitch scales by ratio.
  const Eigen::VectorXd stretched = time_stretch(x, 1.0 / ratio, sample_rate);
  if (stretched.size() == 0) return x;
  Eigen::VectorXd y = resample_linear(
      stretched, static_cast<double>(x.size()) / static_cast<double>(stretched.size()));
  y.conservativeResizeLike(Eigen::VectorXd::Zero(x.size()));
  return y;
}

// Voice k (1-based) is delayed 20 + 7k ms with a 2 ms sinusoidal sweep and
// mixed at gain 0.4.
Eigen::VectorXd chorus(const Eigen::Ref<const Eigen::VectorXd>& x, int voices, int sample_rate) {
  constexpr double kVoiceGain = 0.4;
  Eigen::VectorXd y = x;
  for (int k = 1; k <= voices; ++k) {
    const double base = (0.020 + 0.007 * k) * sample_rate;
    const double depth = 0.002 * sample_rate;
    const double rate_hz = 0.25 + 0.1 * k;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double d = base + depth * std::sin(2.0 * std::numbers::pi * rate_hz * i / sample_rate);
      const double t = static_cast<double>(i) - d;
      if (t < 0) continue;
      const auto i0 = static_cast<Eigen::Index>(t);
      const double frac = t - static_cast<double>(i0);
      const double b = i0 + 1 < x.size() ? x[i0 + 1] : x[i0];
      y[i] += kVoiceGain * (x[i0] + frac * (b - x[i0]));
    }
  }
  return y / (1.0 + kVoiceGain * voices);
}

// Tap k (1-based) is delayed 60k ms with gain 0.5^k.
Eigen::VectorXd echo(const Eigen::Ref<const Eigen::VectorXd>& x, int taps, int sample_rate) {
  Eigen::VectorXd y = x;
  double total = 1.0;
  for (int k = 1; k <= taps; ++k) {
    const auto delay = static_cast<Eigen::Index>(std::lround(0.060 * k * sample_rate));
    const double g = std::pow(0.5, k);
    total += g;
    if (delay >= x.size()) continue;
    y.tail(x.size() - delay) += g * x.head(x.size() - delay);
  }
  return y / total;
}

// Schroeder reverberator: four parallel feedback combs and two series
// all-passes. Reverberance sets comb feedback 0.70..0.95 and the wet mix.
Eigen::VectorXd reverb(const Eigen::Ref<const Eigen::VectorXd>& x, double percent,
                       int sample_rate) {
  const double p = std::clamp(percent / 100.0, 0.0, 1.0);
  const double comb_ms[4] = {29.7, 37.1, 41.1, 43.7};
  const double feedback = 0.70 + 0.25 * p;
  Eigen::VectorXd wet = Eigen::VectorXd::Zero(x.size());
  for (double ms : comb_ms) {
    const auto d = std::max<Eigen::Index>(1, std::lround(ms * 1e-3 * sample_rate));
    Eigen::VectorXd c = x;
    for (Eigen::Index i = d; i < x.size(); ++i) c[i] += feedback * c[i - d];
    wet += c * (1.0 - feedback);
  }
  wet /= 4.0;
  for (double ms : {5.0, 1.7}) {
    const auto d = std::max<Eigen::Index>(1, std::lround(ms * 1e-3 * sample_rate));
    constexpr double g = 0.7;
    Eigen::VectorXd a(wet.size());
    for (Eigen::Index i = 0; i < wet.size(); ++i) {
      const double delayed_in = i >= d ? wet[i - d] : 0.0;
      const double delayed_out = i >= d ? a[i - d] : 0.0;
      a[i] = -g * wet[i] + delayed_in + g * delayed_out;
    }
    wet = a;
  }
  return (1.0 - 0.5 * p) * x + p * wet;
}

}  // namespace effects

AugmentResult augment_detailed(const Waveform& w, const AugmentationConfig& cfg,
                               std::string_view sentence_id) {
  validate(w);
  cfg.validate();
  const int rate = w.sample_rate;
  const auto min_len = static_cast<Eigen::Index>(std::lround(0.025 * rate));
  if (w.size() < min_len)
    throw AudioError("waveform shorter than one 25 ms analysis window; cannot augment");

  AugmentResult result{w, 1.0, {}};
  if (!cfg.enabled()) return result;

  Rng rng(derive_seed(cfg.seed, "augment", sentence_id));
  const double fscale = rate / kReferenceRate;
  Eigen::VectorXd x = w.samples;

  // Two uniforms per effect (fire?, quantile) plus one extra for two-parameter
  // effects, always consumed in the same order.
  auto fire = [&] { return rng.uniform() < cfg.effect_probability; };

  {
    const bool on = fire();
    const double r = cfg.speed_rate.at(rng.uniform());
    if (on && r != 1.0) {
      x = resample_linear(x, 1.0 / r);
      result.time_scale /= r;
      result.applied.push_back({Effect::speed, r});
    }
  }
  {
    const bool on = fire();
    const double r = cfg.tempo_rate.at(rng.uniform());
    if (on && r != 1.0) {
      x = effects::time_stretch(x, r, rate);
      result.time_scale /= r;
      result.applied.push_back({Effect::tempo, r});
    }
  }
  {
    const bool on = fire();
    const double s = cfg.pitch_shift_semitones.at(rng.uniform());
    if (on && s != 0.0) {
      x = effects::pitch_shift(x, s, rate);
      result.applied.push_back({Effect::pitch, s});
    }
  }
  {
    const bool on = fire();
    const double f = cfg.lowpass_hz.at(rng.uniform()) * fscale;
    if (on && f > 0.0) {
      x = apply_filter(Biquad::lowpass(rate, f), x);
      result.applied.push_back({Effect::lowpass, f});
    }
  }
  {
    const bool on = fire();
    const double f = cfg.highpass_hz.at(rng.uniform()) * fscale;
    if (on && f > 0.0) {
      x = apply_filter(Biquad::highpass(rate, f), x);
      result.applied.push_back({Effect::highpass, f});
    }
  }
  {
    const bool on = fire();
    const double f = cfg.bandpass_hz.at(rng.uniform()) * fscale;
    const double width = cfg.bandpass_width_oct.at(rng.uniform());
    if (on && f > 0.0 && width > 0.0) {
      const double half = std::pow(2.0, width / 2.0);
      std::vector<Biquad> cascade{Biquad::highpass(rate, f / half)};
      if (f * half < 0.49 * rate) cascade.push_back(Biquad::lowpass(rate, f * half));
      x = apply_filters(cascade, x);
      result.applied.push_back({Effect::bandpass, f, width});
    }
  }
  {
    const bool on = fire();
    const double f = cfg.bandstop_hz.at(rng.uniform()) * fscale;
    const double width = cfg.bandstop_width_oct.at(rng.uniform());
    if (on && f > 0.0 && width > 0.0) {
      x = apply_filter(Biquad::bandstop(rate, f, width), x);
      result.applied.push_back({Effect::bandstop, f, width});
    }
  }
  {
    const bool on = fire();
    const int n = draw_count(cfg.chorus_n, rng.uniform());
    if (on && n > 0) {
      x = effects::chorus(x, n, rate);
      result.applied.push_back({Effect::chorus, static_cast<double>(n)});
    }
  }
  {
    const bool on = fire();
    const int n = draw_count(cfg.echo_n, rng.uniform());
    if (on && n > 0) {
      x = effects::echo(x, n, rate);
      result.applied.push_back({Effect::echo, static_cast<double>(n)});
    }
  }
  {
    const bool on = fire();
    const double p = cfg.reverb_percent.at(rng.uniform());
    if (on && p > 0.0) {
      x = effects::reverb(x, p, rate);
      result.applied.push_back({Effect::reverb, p});
    }
  }
  {
    const bool on = fire();
    const double snr = cfg.background_snr_db.at(rng.uniform());
    if (on) {
      Eigen::VectorXd masker;
      if (cfg.masker) {
        masker = cfg.masker->samples;
      } else {
        masker.resize(x.size());
        Rng noise_rng(derive_seed(cfg.seed, "augment-noise", sentence_id));
        for (Eigen::Index i = 0; i < masker.size(); ++i) masker[i] = noise_rng.gaussian();
      }
      x = effects::add_noise_at_snr(x, snr, masker);
      result.applied.push_back({Effect::background_noise, snr});
    }
  }

  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i])) x[i] = 0.0;
  const double peak = x.size() ? x.cwiseAbs().maxCoeff() : 0.0;
  if (peak > 1.0) x /= peak;
  result.waveform.samples = std::move(x);
  return result;
}

}  // namespace phode
