#include "rlab/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace rlab {

namespace {

constexpr std::array<char, 8> kMagic{'R', 'L', 'A', 'B', 'N', 'E', 'T', '\0'};

template <class T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) throw CheckpointError("checkpoint: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

// Guards against absurd sizes from corrupted files.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

}  // namespace

CheckpointData snapshot(const Network& net) {
  CheckpointData data;
  auto& mutable_net = const_cast<Network&>(net);
  for (std::size_t i = 0; i < net.size(); ++i) {
    Layer& layer = mutable_net.layer(i);
    LayerRecord record{layer.kind(), layer.attributes(), {}};
    for (Parameter* p : layer.parameters()) record.tensors.push_back(p->value);
    for (Tensor* t : layer.buffers()) record.tensors.push_back(*t);
    data.layers.push_back(std::move(record));
  }
  return data;
}

void write_checkpoint(const CheckpointData& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, data.version);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.layers.size()));
  for (const LayerRecord& layer : data.layers) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(layer.kind));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(layer.attributes.size()));
    for (std::int64_t a : layer.attributes) put<std::int64_t>(out, a);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(layer.tensors.size()));
    for (const Tensor& t : layer.tensors) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
      for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
      for (double v : t.data()) put<double>(out, v);
    }
  }
  if (!out) throw CheckpointError("checkpoint: write failed for " + path.string());
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError("checkpoint: " + path.string() + " is not a network checkpoint");
  }
  CheckpointData data;
  data.version = get<std::uint32_t>(in);
  if (data.version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(data.version));
  }
  const auto n_layers = get<std::uint32_t>(in);
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    LayerRecord record{static_cast<LayerKind>(get<std::uint32_t>(in)), {}, {}};
    const auto n_attrs = get<std::uint32_t>(in);
    for (std::uint32_t a = 0; a < n_attrs; ++a) record.attributes.push_back(get<std::int64_t>(in));
    const auto n_tensors = get<std::uint32_t>(in);
    for (std::uint32_t t = 0; t < n_tensors; ++t) {
      const auto rank = get<std::uint32_t>(in);
      Tensor::Shape shape;
      std::uint64_t count = 1;
      for (std::uint32_t d = 0; d < rank; ++d) {
        shape.push_back(get<std::uint64_t>(in));
        count *= shape.back();
        if (count > kMaxElements) throw CheckpointError("checkpoint: tensor too large; file corrupt?");
      }
      std::vector<double> values(count);
      for (double& v : values) v = get<double>(in);
      record.tensors.emplace_back(std::move(shape), std::move(values));
    }
    data.layers.push_back(std::move(record));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("checkpoint: trailing bytes");
  return data;
}

void save_network(const Network& net, const std::filesystem::path& path) { write_checkpoint(snapshot(net), path); }

void load_network(Network& net, const std::filesystem::path& path) {
  const CheckpointData data = read_checkpoint(path);
  if (data.layers.size() != net.size()) {
    throw CheckpointError("checkpoint: " + std::to_string(data.layers.size()) + " layers stored, network has " +
                          std::to_string(net.size()));
  }
  for (std::size_t i = 0; i < net.size(); ++i) {
    Layer& layer = net.layer(i);
    const LayerRecord& record = data.layers[i];
    if (record.kind != layer.kind() || record.attributes != layer.attributes()) {
      throw CheckpointError("checkpoint: layer " + std::to_string(i) + " is " + to_string(record.kind) +
                            " with different settings than the network's " + layer.describe());
    }
    std::vector<Tensor*> targets;
    for (Parameter* p : layer.parameters()) targets.push_back(&p->value);
    for (Tensor* t : layer.buffers()) targets.push_back(t);
    if (targets.size() != record.tensors.size()) throw CheckpointError("checkpoint: tensor count mismatch");
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (targets[t]->shape() != record.tensors[t].shape()) {
        throw CheckpointError("checkpoint: tensor shape mismatch in layer " + std::to_string(i));
      }
    }
  }
  for (std::size_t i = 0; i < net.size(); ++i) {
    Layer& layer = net.layer(i);
    std::size_t t = 0;
    for (Parameter* p : layer.parameters()) p->value = data.layers[i].tensors[t++];
    for (Tensor* b : layer.buffers()) *b = data.layers[i].tensors[t++];
  }
}

}  // namespace rlab
