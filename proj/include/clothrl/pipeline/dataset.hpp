#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "clothrl/pipeline/transition.hpp"
#include "clothrl/sim/types.hpp"

namespace clothrl::pipeline {

inline constexpr char kDatasetMagic[4] = {'C', 'L', 'R', 'L'};
inline constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetHeader {
    int grid_side = 0;
    int place_side = 0;
    int objective_count = 9;  // reward components per record
    std::uint64_t record_count = 0;
    sim::SimParams params;
};

// Fixed record size in bytes for the given grid.
std::size_t record_size(int grid_side);

void write_dataset(const std::string& path, DatasetHeader header,
                   const std::vector<Transition>& records);

DatasetHeader read_dataset_header(const std::string& path);

// Reads records [first, first + count) in file order; count of -1 reads to
// the end. Validates every record against the Transition invariants.
std::vector<Transition> read_dataset(const std::string& path, DatasetHeader* header = nullptr,
                                     std::uint64_t first = 0, std::int64_t count = -1);

// Throws IoError when indices are out of range, the reward vector leaves
// [-10, 50], or a position is non-finite.
void validate_transition(const Transition& t, const DatasetHeader& header);

}  // namespace clothrl::pipeline
