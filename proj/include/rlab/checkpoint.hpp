#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlab/network.hpp"

namespace rlab {

/// Binary network checkpoint, all integers and floats little-endian:
///
///   char[8]  magic "RLABNET\0"
///   u32      format version (1)
///   u32      layer count
///   per layer:
///     u32    layer kind tag (LayerKind)
///     u32    attribute count, then that many i64 attributes
///     u32    tensor count, then per tensor:
///              u32 rank, rank x u64 dims, prod(dims) x f64 values
///
/// Tensors of a layer are its parameter values followed by its buffers
/// (batch-norm running mean and variance).
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LayerRecord {
  LayerKind kind;
  std::vector<std::int64_t> attributes;
  std::vector<Tensor> tensors;
};

struct CheckpointData {
  std::uint32_t version = kCheckpointVersion;
  std::vector<LayerRecord> layers;
};

CheckpointData snapshot(const Network& net);
void write_checkpoint(const CheckpointData& data, const std::filesystem::path& path);
CheckpointData read_checkpoint(const std::filesystem::path& path);

void save_network(const Network& net, const std::filesystem::path& path);

/// Loads parameters into an already built network; throws CheckpointError when
/// the stored layers do not match its architecture.
void load_network(Network& net, const std::filesystem::path& path);

}  // namespace rlab
