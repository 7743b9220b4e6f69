#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ndv {

// NDCK: "NDCK", version byte, then blocks of
// (u16 LE name length, UTF-8 name, u32 LE count, count x f64 LE).
struct CheckpointBlock {
    std::string name;
    std::vector<double> values;
};

using Checkpoint = std::vector<CheckpointBlock>;

constexpr unsigned char kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& checkpoint);
// IoError on bad magic, unknown version, truncation or trailing bytes.
Checkpoint decode_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

const CheckpointBlock* find_block(const Checkpoint& checkpoint, const std::string& name);
// IoError when missing.
const CheckpointBlock& require_block(const Checkpoint& checkpoint, const std::string& name);

// Text stored one byte per f64 value.
CheckpointBlock text_block(std::string name, const std::string& text);
std::string block_text(const CheckpointBlock& block);

// Whole-file helpers shared with the other binary formats.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace ndv
