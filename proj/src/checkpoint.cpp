#include "ndv/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ndv/errors.hpp"

namespace ndv {

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
void put(std::string& out, T value) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    out.append(bytes, sizeof(T));
}

struct Reader {
    const std::string& bytes;
    std::size_t pos = 0;

    template <typename T>
    T get() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, bytes.data() + pos, sizeof(T));
        pos += sizeof(T);
        return value;
    }
    void need(std::size_t n) const {
        if (bytes.size() - pos < n) throw IoError("checkpoint: truncated at byte " + std::to_string(pos));
    }
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& checkpoint) {
    std::string out = "NDCK";
    out.push_back(static_cast<char>(kCheckpointVersion));
    for (const auto& block : checkpoint) {
        if (block.name.size() > UINT16_MAX) throw ContractError("checkpoint: block name too long");
        if (block.values.size() > UINT32_MAX) throw ContractError("checkpoint: block too large");
        put<std::uint16_t>(out, static_cast<std::uint16_t>(block.name.size()));
        out += block.name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(block.values.size()));
        for (double v : block.values) put<double>(out, v);
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 5 || bytes.compare(0, 4, "NDCK") != 0) throw IoError("checkpoint: bad magic (expected NDCK)");
    if (static_cast<unsigned char>(bytes[4]) != kCheckpointVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(static_cast<unsigned char>(bytes[4])));
    Reader r{bytes, 5};
    Checkpoint out;
    while (r.pos < bytes.size()) {
        CheckpointBlock block;
        const auto len = r.get<std::uint16_t>();
        r.need(len);
        block.name = bytes.substr(r.pos, len);
        r.pos += len;
        const auto count = r.get<std::uint32_t>();
        r.need(static_cast<std::size_t>(count) * sizeof(double));
        block.values.resize(count);
        std::memcpy(block.values.data(), bytes.data() + r.pos, count * sizeof(double));
        r.pos += count * sizeof(double);
        out.push_back(std::move(block));
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    // Write-then-rename so an interrupted run never leaves a torn file.
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

const CheckpointBlock* find_block(const Checkpoint& checkpoint, const std::string& name) {
    for (const auto& block : checkpoint)
        if (block.name == name) return &block;
    return nullptr;
}

const CheckpointBlock& require_block(const Checkpoint& checkpoint, const std::string& name) {
    const CheckpointBlock* block = find_block(checkpoint, name);
    if (!block) throw IoError("checkpoint: missing block '" + name + "'");
    return *block;
}

CheckpointBlock text_block(std::string name, const std::string& text) {
    CheckpointBlock block{std::move(name), {}};
    block.values.reserve(text.size());
    for (unsigned char c : text) block.values.push_back(c);
    return block;
}

std::string block_text(const CheckpointBlock& block) {
    std::string out;
    out.reserve(block.values.size());
    for (double v : block.values) {
        if (!(v >= 0 && v <= 255 && v == std::floor(v))) throw IoError("checkpoint: block '" + block.name + "' is not text");
        out.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    }
    return out;
}

}  // namespace ndv
