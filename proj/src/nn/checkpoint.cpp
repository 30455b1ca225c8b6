#include "clothrl/nn/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "clothrl/util/binary_io.hpp"

namespace clothrl::nn {

void write_checkpoint_tensors(std::ostream& out, const ParamRegistry<float>& params) {
    io::write_magic(out, kCheckpointMagic);
    io::write_le<std::uint32_t>(out, kCheckpointVersion);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.entries.size()));
    for (const auto& e : params.entries) {
        io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.tensor->rank()));
        for (int d : e.tensor->shape) io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        io::write_array_le(out, e.tensor->values.data(), e.tensor->values.size());
    }
    if (!out) throw IoError("failed writing checkpoint tensor table");
}

std::vector<NamedTensor> read_checkpoint_tensors(std::istream& in) {
    io::expect_magic(in, kCheckpointMagic, "checkpoint");
    const auto version = io::read_le<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = io::read_le<std::uint32_t>(in);
    std::vector<NamedTensor> table;
    table.reserve(count);
    for (std::uint32_t t = 0; t < count; ++t) {
        NamedTensor nt;
        const auto name_len = io::read_le<std::uint32_t>(in);
        nt.name.resize(name_len);
        in.read(nt.name.data(), name_len);
        if (!in) throw IoError("truncated checkpoint tensor name");
        const auto rank = io::read_le<std::uint32_t>(in);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(io::read_le<std::uint32_t>(in));
        nt.tensor = Tensor(shape);
        io::read_array_le(in, nt.tensor.values.data(), nt.tensor.values.size());
        table.push_back(std::move(nt));
    }
    return table;
}

void load_into_registry(const std::vector<NamedTensor>& table, ParamRegistry<float>& params) {
    for (auto& e : params.entries) {
        const NamedTensor* found = nullptr;
        for (const auto& nt : table) {
            if (nt.name == e.name) {
                found = &nt;
                break;
            }
        }
        if (!found) throw IoError("checkpoint missing tensor " + e.name);
        if (found->tensor.shape != e.tensor->shape) {
            throw IoError("checkpoint tensor " + e.name + " has shape " +
                          shape_str(found->tensor.shape) + ", expected " +
                          shape_str(e.tensor->shape));
        }
        e.tensor->values = found->tensor.values;
    }
}

std::int64_t count_checkpoint_parameters(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    std::int64_t total = 0;
    for (const auto& nt : read_checkpoint_tensors(in)) total += nt.tensor.numel();
    return total;
}

}  // namespace clothrl::nn
