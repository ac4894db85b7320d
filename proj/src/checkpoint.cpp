#include "flowguide/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "flowguide/errors.hpp"

namespace flowguide {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

template <class Array>
std::vector<std::int64_t> shape_of(const Array& a) {
  if constexpr (Array::ColsAtCompileTime == 1)
    return {static_cast<std::int64_t>(a.size())};
  else
    return {static_cast<std::int64_t>(a.rows()), static_cast<std::int64_t>(a.cols())};
}

// Row-major traversal for matrices, plain order for vectors.
template <class Array, class F>
void for_each_entry(Array& a, F&& f) {
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) f(a(r, c));
}

struct Split {
  nlohmann::json header;
  std::string_view payload;
};

Split split(std::string_view bytes) {
  if (bytes.size() < kCheckpointMagic.size() || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
    throw FormatError("checkpoint: bad magic bytes");
  if (bytes.size() < 16) throw TruncationError("checkpoint: file ends inside the header length");
  const auto header_len = get_u64(reinterpret_cast<const unsigned char*>(bytes.data() + 8));
  if (header_len > bytes.size() - 16) throw TruncationError("checkpoint: file ends inside the JSON header");
  Split s;
  try {
    s.header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed JSON header: ") + e.what());
  }
  if (!s.header.is_object() || !s.header.contains("version") || !s.header["version"].is_number_integer())
    throw FormatError("checkpoint: header has no version");
  if (s.header["version"].get<int>() != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + s.header["version"].dump());
  s.payload = bytes.substr(16 + header_len);
  return s;
}

}  // namespace

nlohmann::json arch_to_json(const Arch& a) {
  return {{"depth", a.depth},     {"width", a.width},           {"tap", a.tap},
          {"in_dim", a.in_dim},   {"out_dim", a.out_dim},       {"head_width", a.head_width},
          {"feature_dim", a.feature_dim}};
}

Arch arch_from_json(const nlohmann::json& j) {
  Arch a;
  try {
    a.depth = j.at("depth").get<int>();
    a.width = j.at("width").get<int>();
    a.tap = j.at("tap").get<int>();
    a.in_dim = j.at("in_dim").get<int>();
    a.out_dim = j.at("out_dim").get<int>();
    a.head_width = j.at("head_width").get<int>();
    a.feature_dim = j.at("feature_dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ShapeMetadataError(std::string("checkpoint: incomplete arch record: ") + e.what());
  }
  return a;
}

std::string encode_checkpoint(const ModelParams& params, const nlohmann::json& config) {
  params.validate();
  nlohmann::json header;
  header["version"] = kCheckpointVersion;
  header["arch"] = arch_to_json(params.arch);
  header["config"] = config;
  header["dtype"] = "float64-le";
  header["order"] = "row-major";
  auto arrays = nlohmann::json::array();
  visit_arrays(params, [&](const std::string& name, const auto& a) {
    arrays.push_back({{"name", name}, {"shape", shape_of(a)}});
  });
  header["arrays"] = arrays;
  const std::string text = header.dump();

  std::string out(kCheckpointMagic);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + 8 * params.num_values());
  visit_arrays(params, [&](const std::string&, const auto& a) {
    for_each_entry(a, [&](double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); });
  });
  return out;
}

nlohmann::json decode_checkpoint_header(std::string_view bytes) { return split(bytes).header; }

ModelParams decode_checkpoint(std::string_view bytes) {
  const Split s = split(bytes);
  if (!s.header.contains("arch") || !s.header.contains("arrays") || !s.header["arrays"].is_array())
    throw ShapeMetadataError("checkpoint: header lacks arch or arrays");
  Arch arch = arch_from_json(s.header["arch"]);
  ModelParams params;
  try {
    params = ModelParams::zeros(arch);
  } catch (const ShapeError& e) {
    throw ShapeMetadataError(std::string("checkpoint: invalid arch: ") + e.what());
  }

  const auto& listed = s.header["arrays"];
  std::size_t expected_values = 0;
  std::size_t index = 0;
  visit_arrays(params, [&](const std::string& name, const auto& a) {
    if (index >= listed.size()) throw ShapeMetadataError("checkpoint: fewer arrays listed than the arch requires");
    const auto& entry = listed[index++];
    const auto shape = entry.value("shape", std::vector<std::int64_t>{});
    if (entry.value("name", std::string{}) != name || shape != shape_of(a))
      throw ShapeMetadataError("checkpoint: array '" + name + "' shape disagrees with arch");
    expected_values += static_cast<std::size_t>(a.size());
  });
  if (index != listed.size()) throw ShapeMetadataError("checkpoint: more arrays listed than the arch requires");
  if (s.payload.size() < 8 * expected_values)
    throw TruncationError("checkpoint: payload holds " + std::to_string(s.payload.size()) + " bytes, expected " +
                          std::to_string(8 * expected_values));
  if (s.payload.size() > 8 * expected_values) throw FormatError("checkpoint: trailing bytes after payload");

  const auto* p = reinterpret_cast<const unsigned char*>(s.payload.data());
  visit_arrays(params, [&](const std::string&, auto& a) {
    for_each_entry(a, [&](double& v) {
      v = std::bit_cast<double>(get_u64(p));
      p += 8;
    });
  });
  return params;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path, const nlohmann::json& config) {
  write_file_bytes(path, encode_checkpoint(params, config));
}

ModelParams load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

nlohmann::json load_checkpoint_header(const std::filesystem::path& path) {
  return decode_checkpoint_header(read_file_bytes(path));
}

}  // namespace flowguide
