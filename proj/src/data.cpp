#include "mvlstm/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mvlstm/parallel.hpp"
#include "mvlstm/rng.hpp"
#include "mvlstm/serialize.hpp"

namespace mvlstm {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

constexpr std::uint64_t kStreamModes = 0x6d6f646573;    // payload construction
constexpr std::uint64_t kStreamSubjects = 0x7375626a;   // per-subject base seeds
constexpr std::uint64_t kStreamContent = 0x636f6e74;    // per-(subject, class) content

constexpr double kBiasRange = 0.6;
constexpr double kGainLo = 0.5;
constexpr double kGainHi = 1.8;
constexpr double kAngleLo = 0.2;
constexpr double kAngleHi = 0.6;

Matrix random_rotation(std::size_t dim, Rng& rng) {
    // disjoint-plane Givens rotations over a shuffled channel pairing;
    // exactly orthogonal by construction
    std::vector<std::size_t> order(dim);
    for (std::size_t i = 0; i < dim; ++i) order[i] = i;
    rng.shuffle(order);

    Matrix q = Matrix::identity(dim);
    for (std::size_t p = 0; p + 1 < dim; p += 2) {
        const std::size_t a = order[p];
        const std::size_t b = order[p + 1];
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double angle = sign * rng.uniform(kAngleLo, kAngleHi);
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        // right-multiply by the plane rotation: columns a and b mix
        for (std::size_t r = 0; r < dim; ++r) {
            const double qa = q(r, a);
            const double qb = q(r, b);
            q(r, a) = qa * c - qb * s;
            q(r, b) = qa * s + qb * c;
        }
    }
    return q;
}

// phase is the first draw of the (subject, class) content stream
double phase_from_seed(std::uint64_t subject_seed, std::size_t label) {
    Rng rng(derive_seed(subject_seed, kStreamContent, label));
    return rng.uniform(0.0, 2.0 * M_PI);
}

// class identity: frequency (label+1) cycles/sequence plus a channel phase
// pattern, modulating the per-sample carrier; the envelope ramps from 0 so
// sequences start neutral
Vector base_frame(const GeneratorConfig& cfg, const Vector& carrier, std::size_t label,
                  std::size_t t, double phase) {
    const double freq = static_cast<double>(label + 1);
    double envelope = 1.0;
    if (cfg.neutral_ramp_frames > 0)
        envelope = std::min(1.0, static_cast<double>(t) /
                                     static_cast<double>(cfg.neutral_ramp_frames));
    Vector frame(cfg.input_dim);
    for (std::size_t j = 0; j < cfg.input_dim; ++j) {
        const double channel_shift =
            2.0 * M_PI * static_cast<double>(j) * freq / static_cast<double>(cfg.input_dim);
        const double wave = std::sin(2.0 * M_PI * freq * static_cast<double>(t) /
                                         static_cast<double>(cfg.num_frames) +
                                     phase + channel_shift);
        frame[j] = carrier[j] * (1.0 + cfg.modulation_depth * envelope * wave);
    }
    return frame;
}

// constant per-sequence transform drawn at scale j: one plane rotation of
// angle +-0.3j, channel gains 1 +- 0.4j, channel offsets +-0.4j
struct ConditionJitter {
    Matrix rotation;
    Vector gains;
    Vector offset;
};

ConditionJitter draw_jitter(std::size_t dim, double scale, Rng& rng) {
    ConditionJitter jit;
    jit.gains = Vector(dim);
    jit.offset = Vector(dim);
    std::vector<std::size_t> order(dim);
    for (std::size_t i = 0; i < dim; ++i) order[i] = i;
    rng.shuffle(order);
    jit.rotation = Matrix::identity(dim);
    for (std::size_t p = 0; p + 1 < dim; p += 2) {
        const double angle = rng.uniform(-0.3 * scale, 0.3 * scale);
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        for (std::size_t r = 0; r < dim; ++r) {
            const double qa = jit.rotation(r, order[p]);
            const double qb = jit.rotation(r, order[p + 1]);
            jit.rotation(r, order[p]) = qa * c - qb * s;
            jit.rotation(r, order[p + 1]) = qa * s + qb * c;
        }
    }
    for (std::size_t j = 0; j < dim; ++j) {
        jit.gains[j] = 1.0 + rng.uniform(-0.4 * scale, 0.4 * scale);
        jit.offset[j] = rng.uniform(-0.4 * scale, 0.4 * scale);
    }
    return jit;
}

void apply_jitter(const ConditionJitter& jit, Vector& frame) {
    frame = matvec(jit.rotation, frame);
    for (std::size_t j = 0; j < frame.size(); ++j)
        frame[j] = jit.gains[j] * frame[j] + jit.offset[j];
}

// a subject is a carrier plus recording-condition jitter; each subject
// performs every class once per mode, so the neutral frame identifies the
// subject but never the label
struct Subject {
    std::uint64_t seed = 0;
    Vector carrier;
    ConditionJitter jitter;
};

Subject make_subject(const GeneratorConfig& cfg, std::uint64_t subject_seed) {
    Rng rng(subject_seed);
    Subject subj;
    subj.seed = subject_seed;
    subj.carrier = Vector(cfg.input_dim);
    for (double& a : subj.carrier)
        a = 1.0 + rng.uniform(-cfg.appearance_sigma, cfg.appearance_sigma);
    subj.jitter = draw_jitter(cfg.input_dim, cfg.condition_jitter, rng);
    return subj;
}

SequenceSample make_sample(const GeneratorConfig& cfg, const Subject& subject,
                           const ModeSpec& mode, std::size_t label) {
    Rng rng(derive_seed(subject.seed, kStreamContent, label));
    const double phase = rng.uniform(0.0, 2.0 * M_PI);

    SequenceSample sample;
    sample.label = label;
    sample.mode_id = mode.mode_id;
    sample.seed = subject.seed;
    sample.base_frequency = static_cast<double>(label + 1);
    sample.base_phase = phase;
    sample.frames.reserve(cfg.num_frames);
    for (std::size_t t = 0; t < cfg.num_frames; ++t) {
        Vector frame = base_frame(cfg, subject.carrier, label, t, phase);
        if (cfg.condition_jitter > 0.0) apply_jitter(subject.jitter, frame);
        apply_mode(mode, frame);
        sample.frames.push_back(std::move(frame));
    }
    // noise continues the (subject, class) stream: twins across modes see
    // identical draws
    for (std::size_t t = 0; t < cfg.num_frames; ++t)
        for (std::size_t j = 0; j < cfg.input_dim; ++j)
            sample.frames[t][j] += cfg.noise_sigma * rng.normal();
    return sample;
}

}  // namespace

std::string_view to_string(ModeKind k) {
    switch (k) {
        case ModeKind::additive_bias: return "additive_bias";
        case ModeKind::channel_gain: return "channel_gain";
        case ModeKind::linear_transform: return "linear_transform";
    }
    fail("unknown mode kind");
}

ModeKind mode_kind_from_string(std::string_view s) {
    if (s == "additive_bias") return ModeKind::additive_bias;
    if (s == "channel_gain") return ModeKind::channel_gain;
    if (s == "linear_transform") return ModeKind::linear_transform;
    fail("unknown mode kind '" + std::string(s) + "'");
}

std::vector<ModeSpec> generate_modes(std::span<const ModeRequest> requests,
                                     std::size_t input_dim, std::uint64_t seed) {
    std::vector<ModeSpec> modes;
    std::map<ModeKind, std::size_t> kind_counter;
    std::uint32_t id = 0;
    for (const ModeRequest& req : requests) {
        Rng rng(derive_seed(seed, kStreamModes, id));
        ModeSpec mode;
        mode.mode_id = id++;
        mode.kind = req.kind;
        if (req.identity) {
            mode.kind = ModeKind::additive_bias;
            mode.name = "identity";
            mode.bias = Vector(input_dim, 0.0);
        } else {
            const std::size_t n = ++kind_counter[req.kind];
            std::ostringstream name;
            switch (req.kind) {
                case ModeKind::additive_bias:
                    name << "additive_" << n;
                    mode.bias = Vector(input_dim);
                    for (double& b : mode.bias) b = rng.uniform(-kBiasRange, kBiasRange);
                    break;
                case ModeKind::channel_gain:
                    name << "gain_" << n;
                    mode.gains = Vector(input_dim);
                    for (double& g : mode.gains) g = rng.uniform(kGainLo, kGainHi);
                    break;
                case ModeKind::linear_transform:
                    name << "rotation_" << n;
                    mode.transform = random_rotation(input_dim, rng);
                    break;
            }
            mode.name = name.str();
        }
        modes.push_back(std::move(mode));
    }
    return modes;
}

void apply_mode(const ModeSpec& mode, Vector& frame) {
    switch (mode.kind) {
        case ModeKind::additive_bias:
            for (std::size_t j = 0; j < frame.size(); ++j) frame[j] += mode.bias[j];
            break;
        case ModeKind::channel_gain:
            for (std::size_t j = 0; j < frame.size(); ++j) frame[j] *= mode.gains[j];
            break;
        case ModeKind::linear_transform:
            frame = matvec(mode.transform, frame);
            break;
    }
}

void invert_mode(const ModeSpec& mode, Vector& frame) {
    switch (mode.kind) {
        case ModeKind::additive_bias:
            for (std::size_t j = 0; j < frame.size(); ++j) frame[j] -= mode.bias[j];
            break;
        case ModeKind::channel_gain:
            for (std::size_t j = 0; j < frame.size(); ++j) frame[j] /= mode.gains[j];
            break;
        case ModeKind::linear_transform:
            frame = matvec_transposed(mode.transform, frame);
            break;
    }
}

void validate_mode(const ModeSpec& mode, std::size_t input_dim) {
    switch (mode.kind) {
        case ModeKind::additive_bias:
            if (mode.bias.size() != input_dim)
                fail("mode '" + mode.name + "': bias payload dim mismatch");
            break;
        case ModeKind::channel_gain:
            if (mode.gains.size() != input_dim)
                fail("mode '" + mode.name + "': gain payload dim mismatch");
            for (double g : mode.gains)
                if (g == 0.0) fail("mode '" + mode.name + "': zero channel gain");
            break;
        case ModeKind::linear_transform: {
            const Matrix& q = mode.transform;
            if (q.rows != input_dim || q.cols != input_dim)
                fail("mode '" + mode.name + "': transform payload shape mismatch");
            double worst = 0.0;
            for (std::size_t a = 0; a < input_dim; ++a)
                for (std::size_t b = 0; b < input_dim; ++b) {
                    double acc = 0.0;
                    for (std::size_t r = 0; r < input_dim; ++r) acc += q(r, a) * q(r, b);
                    worst = std::max(worst, std::abs(acc - (a == b ? 1.0 : 0.0)));
                }
            if (worst >= 1e-9)
                fail("mode '" + mode.name + "': transform is not orthogonal");
            break;
        }
    }
}

Dataset generate_dataset(const GeneratorConfig& config, std::uint64_t master_seed) {
    if (config.num_classes < 2) fail("generate_dataset: need at least 2 classes");
    if (config.num_frames < 4) fail("generate_dataset: need at least 4 frames");
    if (config.modes.empty()) fail("generate_dataset: need at least one mode");
    if (config.input_dim == 0 || config.samples_per_class_mode == 0)
        fail("generate_dataset: counts must be positive");
    std::set<std::uint32_t> ids;
    for (const ModeSpec& m : config.modes) {
        validate_mode(m, config.input_dim);
        if (!ids.insert(m.mode_id).second) fail("generate_dataset: duplicate mode id");
    }

    const std::size_t C = config.num_classes;
    const std::size_t R = config.samples_per_class_mode;
    const std::size_t M = config.modes.size();

    Dataset ds;
    ds.manifest.master_seed = master_seed;
    ds.manifest.config = config;
    ds.manifest.counts.assign(C, std::vector<std::size_t>(M, R));
    ds.samples.resize(C * R * M);

    // ordering (subject, class, mode); every slot derives from the subject
    // seed, so the parallel fill is bit-identical to a serial one
    parallel_for(R, [&](std::size_t s) {
        const Subject subject =
            make_subject(config, derive_seed(master_seed, kStreamSubjects, s));
        for (std::size_t k = 0; k < C; ++k)
            for (std::size_t im = 0; im < M; ++im)
                ds.samples[(s * C + k) * M + im] =
                    make_sample(config, subject, config.modes[im], k);
    });
    return ds;
}

std::vector<Vector> make_static_sequence(const SequenceSample& sample, std::size_t tau,
                                         std::size_t length) {
    if (tau >= sample.frames.size()) {
        std::ostringstream msg;
        msg << "make_static_sequence: tau " << tau << " out of range for " << sample.frames.size()
            << " frames";
        throw std::out_of_range(msg.str());
    }
    if (length == 0) fail("make_static_sequence: length must be >= 1");
    return std::vector<Vector>(length, sample.frames[tau]);
}

ModeSplit split_by_mode(std::span<const SequenceSample> samples,
                        std::span<const std::uint32_t> seen_modes,
                        std::span<const std::uint32_t> unseen_modes, const SplitConfig& fold) {
    if (seen_modes.empty() || unseen_modes.empty())
        fail("split_by_mode: seen and unseen mode sets must be non-empty");
    const std::set<std::uint32_t> seen(seen_modes.begin(), seen_modes.end());
    const std::set<std::uint32_t> unseen(unseen_modes.begin(), unseen_modes.end());
    for (std::uint32_t m : seen)
        if (unseen.count(m)) fail("split_by_mode: mode sets overlap");
    if (fold.num_folds < 2) fail("split_by_mode: need at least 2 folds");
    if (fold.fold_index >= fold.num_folds) fail("split_by_mode: fold index out of range");

    // replicate groups in first-appearance order
    std::map<std::uint64_t, std::size_t> group_of;
    for (const SequenceSample& s : samples)
        group_of.emplace(s.seed, group_of.size());

    ModeSplit split;
    std::map<std::uint32_t, std::vector<SequenceSample>> unseen_map;
    for (std::uint32_t m : unseen) unseen_map[m];

    for (const SequenceSample& s : samples) {
        const bool test_rep = group_of.at(s.seed) % fold.num_folds == fold.fold_index;
        if (seen.count(s.mode_id)) {
            (test_rep ? split.seen_test : split.train).push_back(s);
        } else if (unseen.count(s.mode_id)) {
            if (test_rep) unseen_map[s.mode_id].push_back(s);
            // train-side replicates of unseen modes belong to no partition
        }
    }

    if (split.train.empty()) fail("split_by_mode: empty training partition");
    if (split.seen_test.empty()) fail("split_by_mode: empty seen-mode test partition");
    for (auto& [mode, vec] : unseen_map) {
        if (vec.empty()) split.empty_unseen_modes.push_back(mode);
        split.unseen_tests.emplace_back(mode, std::move(vec));
    }
    return split;
}

namespace {

constexpr char kFramesMagic[6] = {'M', 'V', 'S', 'E', 'Q', '1'};

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& stem) {
    const DatasetManifest& man = dataset.manifest;
    std::size_t expected = 0;
    for (const auto& row : man.counts)
        for (std::size_t n : row) expected += n;
    if (expected != dataset.samples.size())
        fail("save_dataset: manifest counts disagree with the sample list");

    std::string bytes;
    bytes.append(kFramesMagic, sizeof(kFramesMagic));
    put_u32(bytes, static_cast<std::uint32_t>(dataset.samples.size()));
    for (const SequenceSample& s : dataset.samples) {
        put_u32(bytes, static_cast<std::uint32_t>(s.frames.size()));
        put_u32(bytes, static_cast<std::uint32_t>(s.frames.empty() ? 0 : s.frames[0].size()));
        put_u32(bytes, static_cast<std::uint32_t>(s.label));
        put_u32(bytes, s.mode_id);
        put_u64(bytes, s.seed);
        for (const Vector& frame : s.frames)
            for (double v : frame.data) put_f64(bytes, v);
    }
    const std::uint64_t checksum = fnv1a64(bytes.data(), bytes.size());
    put_u64(bytes, checksum);

    std::filesystem::path frames_path = stem;
    frames_path += ".frames";
    atomic_write_file(frames_path, bytes);

    nlohmann::json manifest = manifest_to_json(man);
    manifest["frames_checksum"] = checksum_hex(checksum);
    std::filesystem::path manifest_path = stem;
    manifest_path += ".manifest";
    atomic_write_file(manifest_path, manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& stem) {
    std::filesystem::path manifest_path = stem;
    manifest_path += ".manifest";
    std::filesystem::path frames_path = stem;
    frames_path += ".frames";

    const nlohmann::json manifest = parse_json_file(manifest_path);
    Dataset ds;
    ds.manifest = manifest_from_json(manifest);

    const std::string bytes = read_file(frames_path);
    if (bytes.size() < sizeof(kFramesMagic) + 12)
        throw std::runtime_error("load_dataset: frames file is truncated");
    if (std::string_view(bytes.data(), sizeof(kFramesMagic)) !=
        std::string_view(kFramesMagic, sizeof(kFramesMagic)))
        throw std::runtime_error("load_dataset: bad magic in frames file");

    const std::uint64_t stored =
        ByteReader(std::string_view(bytes).substr(bytes.size() - 8)).get_u64();
    const std::uint64_t computed = fnv1a64(bytes.data(), bytes.size() - 8);
    if (stored != computed)
        throw std::runtime_error("load_dataset: frames checksum mismatch (file corrupted?)");
    if (manifest.contains("frames_checksum") &&
        manifest.at("frames_checksum").get<std::string>() != checksum_hex(computed))
        throw std::runtime_error("load_dataset: manifest does not match frames file");

    ByteReader reader(std::string_view(bytes.data() + sizeof(kFramesMagic),
                                       bytes.size() - sizeof(kFramesMagic) - 8));
    const std::uint32_t count = reader.get_u32();
    ds.samples.reserve(count);
    for (std::uint32_t n = 0; n < count; ++n) {
        SequenceSample s;
        const std::uint32_t T = reader.get_u32();
        const std::uint32_t D = reader.get_u32();
        s.label = reader.get_u32();
        s.mode_id = reader.get_u32();
        s.seed = reader.get_u64();
        s.frames.assign(T, Vector(D));
        for (std::uint32_t t = 0; t < T; ++t)
            for (std::uint32_t j = 0; j < D; ++j) s.frames[t][j] = reader.get_f64();
        // generation metadata re-derived from the subject seed
        s.base_frequency = static_cast<double>(s.label + 1);
        s.base_phase = phase_from_seed(s.seed, s.label);
        ds.samples.push_back(std::move(s));
    }
    if (!reader.exhausted())
        throw std::runtime_error("load_dataset: trailing bytes in frames file");

    std::size_t expected = 0;
    for (const auto& row : ds.manifest.counts)
        for (std::size_t c : row) expected += c;
    if (expected != ds.samples.size())
        throw std::runtime_error("load_dataset: manifest counts disagree with frames file");
    return ds;
}

}  // namespace mvlstm
