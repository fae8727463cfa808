#include "resdiv/dumpio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

#include "resdiv/error.hpp"

namespace resdiv {

namespace {

using ordered_json = nlohmann::ordered_json;

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<std::byte>((v >> shift) & 0xFFU));
  }
}

std::uint32_t get_u32(std::span<const std::byte> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int k = 3; k >= 0; --k) {
    v = (v << 8) | static_cast<std::uint32_t>(bytes[offset + static_cast<std::size_t>(k)]);
  }
  return v;
}

template <typename T>
T required(const ordered_json& header, const char* key) {
  if (!header.contains(key)) {
    throw FormatError(std::string("dump header is missing '") + key + "'");
  }
  try {
    return header.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(std::string("dump header field '") + key + "' has the wrong type");
  }
}

}  // namespace

void ResidualDump::validate() const {
  if (num_layers == 0 || num_options == 0) {
    throw ValidationError("dump needs at least one layer and one option");
  }
  if (layer_roles.size() != num_layers) {
    throw ValidationError("dump has " + std::to_string(layer_roles.size()) + " roles for " +
                          std::to_string(num_layers) + " layers");
  }
  if (option_labels.size() != num_options) {
    throw ValidationError("dump has " + std::to_string(option_labels.size()) +
                          " option labels for " + std::to_string(num_options) + " options");
  }
  for (std::size_t n = 0; n < instances.size(); ++n) {
    const DumpInstance& inst = instances[n];
    if (inst.gold_index >= num_options) {
      throw ValidationError("instance " + std::to_string(n) + " has gold index " +
                            std::to_string(inst.gold_index) + " >= " +
                            std::to_string(num_options) + " options");
    }
    if (inst.matrix.size() != num_layers * num_options) {
      throw ValidationError("instance " + std::to_string(n) + " matrix has " +
                            std::to_string(inst.matrix.size()) + " entries, expected " +
                            std::to_string(num_layers * num_options));
    }
  }
}

ContributionMatrix ResidualDump::matrix(std::size_t instance) const {
  const DumpInstance& inst = instances.at(instance);
  std::vector<double> values(inst.matrix.begin(), inst.matrix.end());
  return ContributionMatrix(num_layers, num_options, std::move(values), layer_roles);
}

std::string dump_header_json(const ResidualDump& dump) {
  ordered_json header;
  header["format_version"] = kDumpVersion;
  header["model_name"] = dump.model_name;
  header["task_name"] = dump.task_name;
  header["num_instances"] = dump.num_instances();
  header["num_layers"] = dump.num_layers;
  header["num_options"] = dump.num_options;
  ordered_json roles = ordered_json::array();
  for (Role r : dump.layer_roles) roles.push_back(std::string(role_name(r)));
  header["layer_roles"] = std::move(roles);
  header["option_labels"] = dump.option_labels;
  header["dtype"] = "f32";
  return header.dump();
}

std::size_t dump_file_size(std::size_t header_bytes, std::size_t instances, std::size_t layers,
                           std::size_t options) {
  return kDumpPreambleBytes + header_bytes + instances * (4 + 4 * layers * options);
}

std::vector<std::byte> encode_dump(const ResidualDump& dump) {
  dump.validate();
  const std::string header = dump_header_json(dump);
  std::vector<std::byte> out;
  out.reserve(dump_file_size(header.size(), dump.num_instances(), dump.num_layers,
                             dump.num_options));
  for (char c : kDumpMagic) out.push_back(static_cast<std::byte>(c));
  put_u32(out, kDumpVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  for (char c : header) out.push_back(static_cast<std::byte>(c));
  for (const DumpInstance& inst : dump.instances) {
    put_u32(out, inst.gold_index);
    for (float x : inst.matrix) put_u32(out, std::bit_cast<std::uint32_t>(x));
  }
  return out;
}

std::size_t write_dump(const ResidualDump& dump, std::ostream& sink) {
  const auto bytes = encode_dump(dump);
  sink.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw IoError("failed to write dump");
  return bytes.size();
}

std::size_t write_dump_file(const ResidualDump& dump, const std::filesystem::path& path) {
  const auto bytes = encode_dump(dump);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("failed to write " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move dump into place at " + path.string());
  }
  return bytes.size();
}

ResidualDump decode_dump(std::span<const std::byte> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kDumpMagic, 4) != 0) {
    throw FormatError("not an RSDC dump (bad magic)");
  }
  if (bytes.size() < kDumpPreambleBytes) {
    throw CorruptionError("dump truncated inside the preamble: " + std::to_string(bytes.size()) +
                          " bytes");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kDumpVersion) {
    throw UnsupportedVersionError("unsupported RSDC version " + std::to_string(version));
  }
  const std::size_t header_len = get_u32(bytes, 8);
  if (bytes.size() < kDumpPreambleBytes + header_len) {
    throw CorruptionError("dump truncated inside the header: expected at least " +
                          std::to_string(kDumpPreambleBytes + header_len) + " bytes, got " +
                          std::to_string(bytes.size()));
  }
  const std::string header_text(reinterpret_cast<const char*>(bytes.data()) + kDumpPreambleBytes,
                                header_len);
  ordered_json header;
  try {
    header = ordered_json::parse(header_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("dump header is not valid JSON: ") + e.what());
  }
  if (!header.is_object()) throw FormatError("dump header is not a JSON object");

  ResidualDump dump;
  const auto header_version = required<std::uint32_t>(header, "format_version");
  if (header_version != version) {
    throw ValidationError("header format_version " + std::to_string(header_version) +
                          " disagrees with the preamble version");
  }
  dump.model_name = required<std::string>(header, "model_name");
  dump.task_name = required<std::string>(header, "task_name");
  const auto n = required<std::size_t>(header, "num_instances");
  dump.num_layers = required<std::size_t>(header, "num_layers");
  dump.num_options = required<std::size_t>(header, "num_options");
  for (const auto& name : required<std::vector<std::string>>(header, "layer_roles")) {
    const auto role = parse_role(name);
    if (!role) throw ValidationError("unknown layer role '" + name + "'");
    dump.layer_roles.push_back(*role);
  }
  dump.option_labels = required<std::vector<std::string>>(header, "option_labels");
  if (required<std::string>(header, "dtype") != "f32") {
    throw ValidationError("unsupported dtype; only f32 payloads are defined");
  }
  if (dump.num_layers == 0 || dump.num_options == 0) {
    throw ValidationError("dump needs at least one layer and one option");
  }

  // Guard the size arithmetic against absurd headers before multiplying.
  const std::size_t cells = dump.num_layers * dump.num_options;
  if (cells / dump.num_options != dump.num_layers || cells > bytes.size() || n > bytes.size()) {
    throw CorruptionError("dump header implies more data than the file holds (" +
                          std::to_string(bytes.size()) + " bytes)");
  }
  const std::size_t expected = dump_file_size(header_len, n, dump.num_layers, dump.num_options);
  if (bytes.size() != expected) {
    throw CorruptionError("dump size mismatch: header implies " + std::to_string(expected) +
                          " bytes, file has " + std::to_string(bytes.size()));
  }

  dump.instances.resize(n);
  std::size_t offset = kDumpPreambleBytes + header_len;
  for (DumpInstance& inst : dump.instances) {
    inst.gold_index = get_u32(bytes, offset);
    offset += 4;
    inst.matrix.resize(cells);
    for (float& x : inst.matrix) {
      x = std::bit_cast<float>(get_u32(bytes, offset));
      offset += 4;
    }
  }
  dump.validate();
  return dump;
}

ResidualDump read_dump(std::istream& source) {
  std::vector<char> raw((std::istreambuf_iterator<char>(source)),
                        std::istreambuf_iterator<char>());
  if (source.bad()) throw IoError("failed to read dump stream");
  return decode_dump(std::as_bytes(std::span<const char>(raw)));
}

ResidualDump read_dump_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dump " + path.string());
  return read_dump(in);
}

}  // namespace resdiv
