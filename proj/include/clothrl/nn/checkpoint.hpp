#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "clothrl/nn/registry.hpp"
#include "clothrl/nn/tensor.hpp"

namespace clothrl::nn {

inline constexpr char kCheckpointMagic[4] = {'C', 'L', 'Q', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// Tensor table layout after the "CLQN" magic and version: tensor count, then
// per tensor a length-prefixed UTF-8 name, rank, dims, and little-endian f32
// values. Callers may append their own trailing sections after the table.
void write_checkpoint_tensors(std::ostream& out, const ParamRegistry<float>& params);
std::vector<NamedTensor> read_checkpoint_tensors(std::istream& in);

// Copies values into the registry's tensors; every registered name must be
// present with a matching shape.
void load_into_registry(const std::vector<NamedTensor>& table, ParamRegistry<float>& params);

// Total parameter count recorded in a checkpoint's tensor table.
std::int64_t count_checkpoint_parameters(const std::string& path);

}  // namespace clothrl::nn
