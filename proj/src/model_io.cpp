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

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "phode/model.hpp"

namespace phode {

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and written natively");

constexpr char kWeightsMagic[6] = {'P', 'H', 'O', 'D', 'E', '1'};
constexpr char kActivationMagic[8] = {'P', 'H', 'O', 'D', 'E', 'A', 'C', 'T'};

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename Derived>
void write_tensor(std::ostream& os, const Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float v = static_cast<float>(m(r, c));
      os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
}

class Reader {
 public:
  Reader(const std::filesystem::path& path) : path_(path), is_(path, std::ios::binary) {
    if (!is_) throw ModelError("cannot open " + path.string());
  }

  void bytes(char* dst, std::size_t n, const char* what) {
    if (!is_.read(dst, static_cast<std::streamsize>(n)))
      throw ModelError(path_.string() + ": file truncated while reading " + what);
  }

  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    bytes(reinterpret_cast<char*>(&v), sizeof v, what);
    return v;
  }

  template <typename Derived>
  void tensor(Eigen::MatrixBase<Derived>& m, const char* what) {
    std::vector<float> buf(static_cast<std::size_t>(m.size()));
    bytes(reinterpret_cast<char*>(buf.data()), buf.size() * sizeof(float), what);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = buf[k++];
  }

  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

 private:
  std::filesystem::path path_;
  std::ifstream is_;
};

}  // namespace

void save_weights(const ModelWeights& w, const std::filesystem::path& path) {
  w.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ModelError("cannot write " + path.string());
  os.write(kWeightsMagic, sizeof kWeightsMagic);
  write_u32(os, static_cast<std::uint32_t>(w.shape.layers));
  write_u32(os, static_cast<std::uint32_t>(w.shape.hidden));
  write_u32(os, static_cast<std::uint32_t>(w.shape.input));
  write_u32(os, static_cast<std::uint32_t>(w.shape.output));
  write_tensor(os, w.input_shift);
  write_tensor(os, w.input_scale);
  for (int l = 0; l < w.shape.layers; ++l) {
    write_tensor(os, w.lstm[l].w_ih);
    write_tensor(os, w.lstm[l].w_hh);
    write_tensor(os, w.lstm[l].bias);
    write_tensor(os, w.norm[l].gamma);
    write_tensor(os, w.norm[l].beta);
    write_tensor(os, w.norm[l].running_mean);
    write_tensor(os, w.norm[l].running_var);
  }
  write_tensor(os, w.fc_w);
  write_tensor(os, w.fc_b);
  if (!os) throw ModelError("write failed for " + path.string());
}

ModelWeights load_weights(const std::filesystem::path& path) {
  Reader in(path);
  char magic[sizeof kWeightsMagic];
  in.bytes(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kWeightsMagic, sizeof magic) != 0)
    throw ModelError(path.string() + ": bad magic, not a PHODE1 weight file");
  ModelShape shape;
  shape.layers = static_cast<int>(in.u32("header"));
  shape.hidden = static_cast<int>(in.u32("header"));
  shape.input = static_cast<int>(in.u32("header"));
  shape.output = static_cast<int>(in.u32("header"));
  if (shape.layers < 1 || shape.layers > 64 || shape.hidden < 1 || shape.hidden > 1 << 16 ||
      shape.input < 1 || shape.input > 1 << 16 || shape.output < 1 || shape.output > 1 << 16)
    throw ModelError(path.string() + ": implausible header dimensions");

  ModelWeights w = ModelWeights::zeros(shape);
  in.tensor(w.input_shift, "input_shift");
  in.tensor(w.input_scale, "input_scale");
  for (int l = 0; l < shape.layers; ++l) {
    in.tensor(w.lstm[l].w_ih, "w_ih");
    in.tensor(w.lstm[l].w_hh, "w_hh");
    in.tensor(w.lstm[l].bias, "lstm bias");
    in.tensor(w.norm[l].gamma, "batch norm gamma");
    in.tensor(w.norm[l].beta, "batch norm beta");
    in.tensor(w.norm[l].running_mean, "running mean");
    in.tensor(w.norm[l].running_var, "running variance");
  }
  in.tensor(w.fc_w, "fc weights");
  in.tensor(w.fc_b, "fc bias");
  if (!in.at_end())
    throw ModelError(path.string() + ": trailing data after tensors; header dimensions do not "
                                     "match the file size");
  w.validate();
  return w;
}

void save_activations(const std::vector<LayerActivationTrace>& traces,
                      const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ModelError("cannot write " + path.string());
  os.write(kActivationMagic, sizeof kActivationMagic);
  write_u32(os, static_cast<std::uint32_t>(traces.size()));
  for (const auto& t : traces) {
    write_u32(os, static_cast<std::uint32_t>(t.layer_index));
    write_u32(os, static_cast<std::uint32_t>(t.values.rows()));
    write_u32(os, static_cast<std::uint32_t>(t.values.cols()));
    write_tensor(os, t.values);
  }
  if (!os) throw ModelError("write failed for " + path.string());
}

std::vector<LayerActivationTrace> load_activations(const std::filesystem::path& path) {
  Reader in(path);
  char magic[sizeof kActivationMagic];
  in.bytes(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kActivationMagic, sizeof magic) != 0)
    throw ModelError(path.string() + ": not an activation dump");
  const std::uint32_t n = in.u32("trace count");
  if (n > 1024) throw ModelError(path.string() + ": implausible trace count");
  std::vector<LayerActivationTrace> traces(n);
  for (auto& t : traces) {
    t.layer_index = static_cast<int>(in.u32("layer index"));
    const std::uint32_t rows = in.u32("rows");
    const std::uint32_t cols = in.u32("cols");
    if (static_cast<std::uint64_t>(rows) * cols > (1ULL << 31))
      throw ModelError(path.string() + ": implausible trace shape");
    t.values.resize(rows, cols);
    in.tensor(t.values, "trace values");
  }
  return traces;
}

}  // namespace phode
