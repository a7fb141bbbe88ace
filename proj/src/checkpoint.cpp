#include "valor/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace valor {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

std::vector<CheckpointRecord> to_records(const ParamStore<double>& ps)
{
    std::vector<CheckpointRecord> out;
    for (const auto& p : ps.all()) {
        CheckpointRecord r;
        r.name = p.name;
        r.dims = {static_cast<std::uint32_t>(p.value.rows()), static_cast<std::uint32_t>(p.value.cols())};
        r.data.reserve(static_cast<std::size_t>(p.value.size()));
        for (Eigen::Index i = 0; i < p.value.rows(); ++i)
            for (Eigen::Index j = 0; j < p.value.cols(); ++j)
                r.data.push_back(static_cast<float>(p.value(i, j)));
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v)
{
    os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::istream& is, const char* what)
{
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4))
        throw std::runtime_error(std::string("checkpoint truncated reading ") + what);
    return v;
}

} // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    put_u32(os, kCheckpointVersion);
    put_u32(os, static_cast<std::uint32_t>(records.size()));
    for (const auto& r : records) {
        put_u32(os, static_cast<std::uint32_t>(r.name.size()));
        os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        put_u32(os, static_cast<std::uint32_t>(r.dims.size()));
        for (auto d : r.dims)
            put_u32(os, d);
        os.write(reinterpret_cast<const char*>(r.data.data()), static_cast<std::streamsize>(r.data.size() * 4));
    }
    if (!os)
        throw std::runtime_error("write failed: " + path.string());
}

std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw std::runtime_error("cannot open checkpoint " + path.string());
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path.string());
    const auto version = get_u32(is, "version");
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const auto count = get_u32(is, "record count");
    std::vector<CheckpointRecord> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointRecord r;
        r.name.resize(get_u32(is, "name length"));
        if (!is.read(r.name.data(), static_cast<std::streamsize>(r.name.size())))
            throw std::runtime_error("checkpoint truncated reading name");
        const auto rank = get_u32(is, "rank");
        std::size_t n = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            r.dims.push_back(get_u32(is, "dims"));
            n *= r.dims.back();
        }
        r.data.resize(n);
        if (!is.read(reinterpret_cast<char*>(r.data.data()), static_cast<std::streamsize>(n * 4)))
            throw std::runtime_error("checkpoint truncated in payload of " + r.name);
        out.push_back(std::move(r));
    }
    return out;
}

void load_checkpoint(const std::filesystem::path& path, ParamStore<double>& ps)
{
    const auto records = read_checkpoint(path);
    if (records.size() != ps.size())
        throw std::runtime_error("checkpoint has " + std::to_string(records.size()) + " tensors, model expects " +
                                 std::to_string(ps.size()));
    for (const auto& r : records) {
        if (!ps.contains(r.name))
            throw std::runtime_error("checkpoint tensor not in model: " + r.name);
        auto& p = ps.at(r.name);
        if (r.dims.size() != 2 || r.dims[0] != p.value.rows() || r.dims[1] != p.value.cols())
            throw std::runtime_error("shape mismatch for " + r.name);
        std::size_t k = 0;
        for (Eigen::Index i = 0; i < p.value.rows(); ++i)
            for (Eigen::Index j = 0; j < p.value.cols(); ++j)
                p.value(i, j) = r.data[k++];
    }
}

} // namespace valor
