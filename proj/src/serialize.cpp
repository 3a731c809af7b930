#include "mvlstm/serialize.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mvlstm {

namespace {

using nlohmann::json;

constexpr std::uint32_t kModelVersion = 1;
constexpr std::uint32_t kDatasetVersion = 1;

[[noreturn]] void fail_load(const std::string& msg) { throw std::runtime_error(msg); }

json vector_to_json(const Vector& v) {
    json j;
    j["dim"] = v.size();
    j["data"] = v.data;
    return j;
}

Vector vector_from_json(const json& j) {
    Vector v;
    v.data = j.at("data").get<std::vector<double>>();
    if (v.size() != j.at("dim").get<std::size_t>())
        fail_load("archive: vector payload length disagrees with its dim tag");
    return v;
}

json matrix_to_json(const Matrix& m) {
    json j;
    j["rows"] = m.rows;
    j["cols"] = m.cols;
    j["data"] = m.data;
    return j;
}

Matrix matrix_from_json(const json& j) {
    Matrix m;
    m.rows = j.at("rows").get<std::size_t>();
    m.cols = j.at("cols").get<std::size_t>();
    m.data = j.at("data").get<std::vector<double>>();
    if (m.data.size() != m.rows * m.cols)
        fail_load("archive: matrix payload length disagrees with its shape tag");
    return m;
}

void check_finite(std::string_view name, const std::vector<double>& data) {
    for (double v : data)
        if (!std::isfinite(v))
            fail_load("archive: tensor '" + std::string(name) + "' has non-finite entries");
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        hash ^= bytes[i];
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string checksum_hex(std::uint64_t checksum) {
    std::ostringstream out;
    out << std::hex;
    for (int shift = 60; shift >= 0; shift -= 4) out << ((checksum >> shift) & 0xF);
    return out.str();
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t ByteReader::get_u32() {
    if (pos_ + 4 > bytes_.size()) fail_load("truncated payload while reading u32");
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += 4;
    return v;
}

std::uint64_t ByteReader::get_u64() {
    if (pos_ + 8 > bytes_.size()) fail_load("truncated payload while reading u64");
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += 8;
    return v;
}

double ByteReader::get_f64() { return std::bit_cast<double>(get_u64()); }

void atomic_write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail_load("cannot open '" + tmp.string() + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) fail_load("short write to '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_load("cannot open '" + path.string() + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

nlohmann::json parse_json_file(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) fail_load("'" + path.string() + "' is not valid JSON");
    return j;
}

nlohmann::json manifest_to_json(const DatasetManifest& manifest) {
    json j;
    j["format"] = "mvlstm-dataset";
    j["format_version"] = manifest.format_version;
    j["master_seed"] = manifest.master_seed;
    j["config"] = {
        {"input_dim", manifest.config.input_dim},
        {"num_frames", manifest.config.num_frames},
        {"num_classes", manifest.config.num_classes},
        {"samples_per_class_mode", manifest.config.samples_per_class_mode},
        {"noise_sigma", manifest.config.noise_sigma},
        {"appearance_sigma", manifest.config.appearance_sigma},
        {"modulation_depth", manifest.config.modulation_depth},
        {"condition_jitter", manifest.config.condition_jitter},
        {"neutral_ramp_frames", manifest.config.neutral_ramp_frames},
    };
    json modes = json::array();
    for (const ModeSpec& m : manifest.config.modes) {
        json jm;
        jm["mode_id"] = m.mode_id;
        jm["name"] = m.name;
        jm["kind"] = std::string(to_string(m.kind));
        switch (m.kind) {
            case ModeKind::additive_bias: jm["bias"] = m.bias.data; break;
            case ModeKind::channel_gain: jm["gains"] = m.gains.data; break;
            case ModeKind::linear_transform: jm["transform"] = matrix_to_json(m.transform); break;
        }
        modes.push_back(std::move(jm));
    }
    j["modes"] = std::move(modes);
    j["counts"] = manifest.counts;
    return j;
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j.at("format").get<std::string>() != "mvlstm-dataset")
        fail_load("manifest: not an mvlstm dataset manifest");
    DatasetManifest m;
    m.format_version = j.at("format_version").get<std::uint32_t>();
    if (m.format_version != kDatasetVersion) {
        std::ostringstream msg;
        msg << "manifest: format version " << m.format_version << " not supported (expected "
            << kDatasetVersion << ")";
        fail_load(msg.str());
    }
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    const json& c = j.at("config");
    m.config.input_dim = c.at("input_dim").get<std::size_t>();
    m.config.num_frames = c.at("num_frames").get<std::size_t>();
    m.config.num_classes = c.at("num_classes").get<std::size_t>();
    m.config.samples_per_class_mode = c.at("samples_per_class_mode").get<std::size_t>();
    m.config.noise_sigma = c.at("noise_sigma").get<double>();
    m.config.appearance_sigma = c.at("appearance_sigma").get<double>();
    m.config.modulation_depth = c.at("modulation_depth").get<double>();
    m.config.condition_jitter = c.at("condition_jitter").get<double>();
    m.config.neutral_ramp_frames = c.at("neutral_ramp_frames").get<std::size_t>();
    for (const json& jm : j.at("modes")) {
        ModeSpec mode;
        mode.mode_id = jm.at("mode_id").get<std::uint32_t>();
        mode.name = jm.at("name").get<std::string>();
        mode.kind = mode_kind_from_string(jm.at("kind").get<std::string>());
        switch (mode.kind) {
            case ModeKind::additive_bias:
                mode.bias.data = jm.at("bias").get<std::vector<double>>();
                break;
            case ModeKind::channel_gain:
                mode.gains.data = jm.at("gains").get<std::vector<double>>();
                break;
            case ModeKind::linear_transform:
                mode.transform = matrix_from_json(jm.at("transform"));
                break;
        }
        m.config.modes.push_back(std::move(mode));
    }
    m.counts = j.at("counts").get<std::vector<std::vector<std::size_t>>>();
    return m;
}

void save_model(const ModelArchive& archive, const std::filesystem::path& path) {
    const ClassifierParams& p = archive.params;
    json tensors;
    for_each_tensor(p.cell, [&](std::string_view name, const auto& t) {
        using T = std::decay_t<decltype(t)>;
        check_finite(name, t.data);
        if constexpr (std::is_same_v<T, Matrix>) {
            tensors[std::string(name)] = matrix_to_json(t);
        } else {
            tensors[std::string(name)] = vector_to_json(t);
        }
    });
    check_finite("W_out", p.W_out.data);
    check_finite("b_out", p.b_out.data);
    tensors["W_out"] = matrix_to_json(p.W_out);
    tensors["b_out"] = vector_to_json(p.b_out);

    CellOptions opts;
    if (const auto* lstm = std::get_if<LstmParams>(&p.cell)) {
        opts = lstm->options;
    } else {
        opts = std::get<ModeVarParams>(p.cell).base.options;
    }

    json payload;
    payload["variant"] = std::string(to_string(variant_of(p.cell)));
    payload["input_dim"] = input_dim_of(p.cell);
    payload["hidden_dim"] = hidden_dim_of(p.cell);
    payload["num_classes"] = p.num_classes();
    payload["options"] = {
        {"diagonal_peephole", opts.diagonal_peephole},
        {"literal_eq2", opts.literal_eq2},
        {"untied_cross", opts.untied_cross},
    };
    payload["tensors"] = std::move(tensors);
    payload["metadata"] = archive.metadata;

    json doc;
    doc["format"] = "mvlstm-model";
    doc["format_version"] = kModelVersion;
    const std::string payload_text = payload.dump();
    doc["checksum"] = checksum_hex(fnv1a64(payload_text.data(), payload_text.size()));
    doc["payload"] = std::move(payload);
    atomic_write_file(path, doc.dump(2) + "\n");
}

ModelArchive load_model(const std::filesystem::path& path) {
    const json doc = parse_json_file(path);
    if (!doc.contains("format") || doc.at("format").get<std::string>() != "mvlstm-model")
        fail_load("'" + path.string() + "' is not an mvlstm model archive");
    if (doc.at("format_version").get<std::uint32_t>() != kModelVersion)
        fail_load("model archive format version not supported");

    const json& payload = doc.at("payload");
    const std::string payload_text = payload.dump();
    if (doc.at("checksum").get<std::string>() !=
        checksum_hex(fnv1a64(payload_text.data(), payload_text.size())))
        fail_load("model archive checksum mismatch (file corrupted?)");

    const Variant variant = variant_from_string(payload.at("variant").get<std::string>());
    const std::size_t input_dim = payload.at("input_dim").get<std::size_t>();
    const std::size_t hidden_dim = payload.at("hidden_dim").get<std::size_t>();
    const std::size_t num_classes = payload.at("num_classes").get<std::size_t>();
    CellOptions opts;
    const json& jo = payload.at("options");
    opts.diagonal_peephole = jo.at("diagonal_peephole").get<bool>();
    opts.literal_eq2 = jo.at("literal_eq2").get<bool>();
    opts.untied_cross = jo.at("untied_cross").get<bool>();

    ModelArchive archive;
    archive.params.cell = init_params(input_dim, hidden_dim, variant, 0, opts);
    archive.params.W_out = Matrix(num_classes, hidden_dim);
    archive.params.b_out = Vector(num_classes);
    archive.metadata = payload.at("metadata");

    const json& tensors = payload.at("tensors");
    std::size_t consumed = 0;
    for_each_tensor(archive.params.cell, [&](std::string_view name, auto& t) {
        using T = std::decay_t<decltype(t)>;
        const std::string key(name);
        if (!tensors.contains(key)) fail_load("model archive: missing tensor '" + key + "'");
        ++consumed;
        if constexpr (std::is_same_v<T, Matrix>) {
            Matrix loaded = matrix_from_json(tensors.at(key));
            if (loaded.rows != t.rows || loaded.cols != t.cols)
                fail_load("model archive: tensor '" + key + "' has the wrong shape");
            t = std::move(loaded);
        } else {
            Vector loaded = vector_from_json(tensors.at(key));
            if (loaded.size() != t.size())
                fail_load("model archive: tensor '" + key + "' has the wrong dim");
            t = std::move(loaded);
        }
    });
    archive.params.W_out = matrix_from_json(tensors.at("W_out"));
    archive.params.b_out = vector_from_json(tensors.at("b_out"));
    consumed += 2;
    if (archive.params.W_out.rows != num_classes || archive.params.W_out.cols != hidden_dim ||
        archive.params.b_out.size() != num_classes)
        fail_load("model archive: readout shape disagrees with the declared dims");
    if (tensors.size() != consumed)
        fail_load("model archive: unexpected extra tensors present");
    return archive;
}

}  // namespace mvlstm
