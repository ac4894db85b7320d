#pragma once

// Checkpoint file layout:
//   bytes 0..7   magic "TFLOWCK1"
//   bytes 8..15  header length L, unsigned little-endian
//   next L bytes UTF-8 JSON header: {"version", "arch", "arrays": [{"name", "shape"}], "config"}
//   payload      every array in header order, row-major, little-endian IEEE-754 doubles

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "flowguide/flow_net.hpp"

namespace flowguide {

inline constexpr std::string_view kCheckpointMagic = "TFLOWCK1";
inline constexpr int kCheckpointVersion = 1;

std::string encode_checkpoint(const ModelParams& params, const nlohmann::json& config = nlohmann::json::object());
ModelParams decode_checkpoint(std::string_view bytes);
/// Parsed JSON header only.
nlohmann::json decode_checkpoint_header(std::string_view bytes);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path,
                     const nlohmann::json& config = nlohmann::json::object());
ModelParams load_checkpoint(const std::filesystem::path& path);
nlohmann::json load_checkpoint_header(const std::filesystem::path& path);

nlohmann::json arch_to_json(const Arch& arch);
Arch arch_from_json(const nlohmann::json& j);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace flowguide
