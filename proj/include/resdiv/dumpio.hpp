#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "resdiv/contribution_matrix.hpp"
#include "resdiv/role.hpp"

namespace resdiv {

// RSDC v1 layout, all integers little-endian:
//
//   "RSDC" | u32 version (= 1) | u32 header_len | header_len bytes of UTF-8 JSON
//   then per instance: u32 gold_index | L*V float32, layer-major
//
// No padding and no trailer; the file length is fully determined by the
// header. The JSON header carries format_version, model_name, task_name,
// num_instances, num_layers, num_options, layer_roles, option_labels and
// dtype ("f32"), written in that key order.
inline constexpr char kDumpMagic[4] = {'R', 'S', 'D', 'C'};
inline constexpr std::uint32_t kDumpVersion = 1;
inline constexpr std::size_t kDumpPreambleBytes = 12;

struct DumpInstance {
  std::uint32_t gold_index = 0;
  std::vector<float> matrix;  // num_layers x num_options, row-major

  bool operator==(const DumpInstance&) const = default;
};

struct ResidualDump {
  std::string model_name;
  std::string task_name;
  std::size_t num_layers = 0;
  std::size_t num_options = 0;
  std::vector<Role> layer_roles;
  std::vector<std::string> option_labels;
  std::vector<DumpInstance> instances;

  std::size_t num_instances() const { return instances.size(); }

  // Throws ValidationError when an invariant does not hold: roles/labels
  // lengths, matrix sizes, gold ranges.
  void validate() const;

  // Instance i upcast to 64-bit. Non-finite entries throw InputError.
  ContributionMatrix matrix(std::size_t instance) const;

  bool operator==(const ResidualDump&) const = default;
};

// Serialized header JSON, exactly as written to disk.
std::string dump_header_json(const ResidualDump& dump);

// Expected file size for a header of header_bytes bytes.
std::size_t dump_file_size(std::size_t header_bytes, std::size_t instances, std::size_t layers,
                           std::size_t options);

// Refuses (ValidationError) to write a dump that fails validate(). Returns the
// number of bytes written.
std::size_t write_dump(const ResidualDump& dump, std::ostream& sink);
std::vector<std::byte> encode_dump(const ResidualDump& dump);

// Writes to a temporary sibling file and renames it into place. I/O failures
// throw IoError.
std::size_t write_dump_file(const ResidualDump& dump, const std::filesystem::path& path);

// Errors: FormatError (bad magic or malformed header JSON),
// UnsupportedVersionError, CorruptionError (size does not match the header),
// ValidationError (bad roles, gold index out of range, inconsistent header).
ResidualDump decode_dump(std::span<const std::byte> bytes);
ResidualDump read_dump(std::istream& source);
// Missing or unreadable files throw IoError.
ResidualDump read_dump_file(const std::filesystem::path& path);

}  // namespace resdiv
