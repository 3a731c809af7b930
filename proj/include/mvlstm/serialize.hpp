#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mvlstm/data.hpp"
#include "mvlstm/model.hpp"

namespace mvlstm {

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::string checksum_hex(std::uint64_t checksum);

// little-endian scalar encoding, independent of host byte order
void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
void put_f64(std::string& out, double v);

class ByteReader {
  public:
    explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}
    std::uint32_t get_u32();
    std::uint64_t get_u64();
    double get_f64();
    bool exhausted() const { return pos_ == bytes_.size(); }

  private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

// temp-file + rename so partially written artifacts never appear
void atomic_write_file(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);
nlohmann::json parse_json_file(const std::filesystem::path& path);

nlohmann::json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

// Model archive: a single JSON document with a format-version field, a
// checksum over the payload, and a flat canonical-name -> shape-tagged-array
// tensor container ("W_xi", "b_f_hat", ..., "W_out", "b_out"). Doubles round
// trip bit-exactly. metadata is the caller's (run config snapshot etc.).
struct ModelArchive {
    ClassifierParams params;
    nlohmann::json metadata;
};

void save_model(const ModelArchive& archive, const std::filesystem::path& path);
ModelArchive load_model(const std::filesystem::path& path);

}  // namespace mvlstm
