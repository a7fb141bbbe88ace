#pragma once

#include "valor/params.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace valor {

// Binary layout, little-endian throughout:
//   "VALORCKP" | u32 version | u32 record count |
//   per record: u32 name length | name bytes | u32 rank | u32 dims[rank] |
//               float32 payload, row-major
inline constexpr char kCheckpointMagic[8] = {'V', 'A', 'L', 'O', 'R', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data; // row-major
};

std::vector<CheckpointRecord> to_records(const ParamStore<double>& ps);

// Throws std::runtime_error on I/O failure.
void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path);

inline void save_checkpoint(const std::filesystem::path& path, const ParamStore<double>& ps)
{
    write_checkpoint(path, to_records(ps));
}

// Copies every record into `ps`; names and shapes must match exactly.
void load_checkpoint(const std::filesystem::path& path, ParamStore<double>& ps);

} // namespace valor
