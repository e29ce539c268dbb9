#include "cyclesense/nn/checkpoint.hpp"

#include <fstream>

#include "binary_io.hpp"

namespace cyclesense::nn {

using detail::read_le;
using detail::write_le;

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic, 4);
  write_le<std::uint16_t>(out, kCheckpointVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rank()));
    for (auto e : t.value.shape()) write_le<std::uint64_t>(out, e);
    for (float v : t.value.values()) write_le<float>(out, v);
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kCheckpointMagic, 4)) {
    throw CheckpointError(path.string() + " is not a CSNW checkpoint");
  }
  try {
    const auto version = read_le<std::uint16_t>(in, "version");
    if (version != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = read_le<std::uint32_t>(in, "tensor count");
    std::vector<NamedTensor> tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      NamedTensor t;
      t.name.resize(read_le<std::uint32_t>(in, "name length"));
      if (!in.read(t.name.data(), static_cast<std::streamsize>(t.name.size()))) {
        throw CheckpointError("truncated tensor name");
      }
      const auto rank = read_le<std::uint32_t>(in, "rank");
      if (rank > 16) throw CheckpointError("implausible rank for " + t.name);
      Shape shape(rank);
      for (auto& e : shape) e = static_cast<std::size_t>(read_le<std::uint64_t>(in, "extent"));
      std::vector<float> values(numel(shape));
      for (auto& v : values) v = read_le<float>(in, "values");
      t.value = Tensor<float>(std::move(shape), std::move(values));
      tensors.push_back(std::move(t));
    }
    return tensors;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

void save_parameters(const std::filesystem::path& path, const ParameterSet<float>& params) {
  std::vector<NamedTensor> tensors;
  for (const auto* p : params.all()) tensors.push_back({p->name, p->value});
  write_checkpoint(path, tensors);
}

void load_parameters(const std::filesystem::path& path, ParameterSet<float>& params) {
  auto tensors = read_checkpoint(path);
  if (tensors.size() != params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
  }
  for (auto& t : tensors) {
    auto* p = params.find(t.name);
    if (p == nullptr) throw CheckpointError("checkpoint tensor '" + t.name + "' is not a model parameter");
    if (p->value.shape() != t.value.shape()) {
      throw CheckpointError("shape mismatch for " + t.name + ": " + to_string(t.value.shape()) + " vs " +
                            to_string(p->value.shape()));
    }
    p->value = std::move(t.value);
  }
}

}  // namespace cyclesense::nn
