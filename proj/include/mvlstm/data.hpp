#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mvlstm/numerics.hpp"

namespace mvlstm {

// A mode of variation: a per-sequence constant nuisance transform applied
// identically to every frame, orthogonal to the class-defining dynamics.
enum class ModeKind { additive_bias, channel_gain, linear_transform };

std::string_view to_string(ModeKind k);
ModeKind mode_kind_from_string(std::string_view s);

struct ModeSpec {
    std::uint32_t mode_id = 0;
    std::string name;
    ModeKind kind = ModeKind::additive_bias;
    Vector bias;       // additive_bias payload
    Vector gains;      // channel_gain payload
    Matrix transform;  // linear_transform payload, orthonormal columns
};

struct SequenceSample {
    std::vector<Vector> frames;
    std::size_t label = 0;
    std::uint32_t mode_id = 0;
    std::uint64_t seed = 0;        // subject seed: shared by all samples of one
                                   // subject; twins across modes share (seed, label)
    double base_frequency = 0.0;   // class-defining cycles per sequence
    double base_phase = 0.0;
};

struct GeneratorConfig {
    std::size_t input_dim = 16;
    std::size_t num_frames = 24;
    std::size_t num_classes = 6;
    // one sample per (subject, class, mode); this is the subject count
    std::size_t samples_per_class_mode = 40;
    double noise_sigma = 0.05;
    // per-sample constant carrier (the appearance analogue of a neutral
    // face): channel j carries 1 + U[-appearance_sigma, +appearance_sigma]
    double appearance_sigma = 0.5;
    // relative depth at which the class dynamics modulate the carrier
    double modulation_depth = 0.8;
    // per-sequence recording-condition jitter: every sample additionally gets
    // a small constant transform (rotation, per-channel gain, offset) drawn
    // from its base seed, the way real captures vary within one nominal
    // condition; 0 disables. At scale j: angle +-0.3j, gains 1 +- 0.4j,
    // offset +-0.4j.
    double condition_jitter = 1.0;
    // frames over which the modulation ramps up from zero, so sequences
    // start neutral the way an expression starts from a neutral face;
    // 0 disables the ramp
    std::size_t neutral_ramp_frames = 12;
    std::vector<ModeSpec> modes;
};

struct DatasetManifest {
    std::uint32_t format_version = 1;
    std::uint64_t master_seed = 0;
    GeneratorConfig config;
    // counts[class][mode index] — must stay consistent with the sample list
    std::vector<std::vector<std::size_t>> counts;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<SequenceSample> samples;
};

// Concrete payload construction for requested mode kinds. identity yields an
// additive mode with zero bias. Payload scales: biases U[-0.8, 0.8] per
// channel, gains U[0.5, 1.8], rotations compose disjoint-plane Givens
// rotations with angles in [0.2, 0.6] (exactly orthogonal by construction).
struct ModeRequest {
    ModeKind kind = ModeKind::additive_bias;
    bool identity = false;
};

std::vector<ModeSpec> generate_modes(std::span<const ModeRequest> requests,
                                     std::size_t input_dim, std::uint64_t seed);

void apply_mode(const ModeSpec& mode, Vector& frame);
void invert_mode(const ModeSpec& mode, Vector& frame);

// Rejects payload/dim mismatches and non-orthogonal transforms
// (||Q^T Q - I||_inf must be < 1e-9).
void validate_mode(const ModeSpec& mode, std::size_t input_dim);

// Frames follow an image-formation analogue: a per-sample constant carrier
// (appearance) multiplicatively modulated by the class-defining dynamics,
// frame_t = a (*) (1 + depth * env(t) * sin(2 pi f t/T + phase + channel
// pattern)), where only the sinusoid's frequency f = label+1 and channel
// pattern index the class and env ramps from the neutral first frame. The
// subject's condition jitter is applied next, then the sample's mode
// transform identically on every frame, then i.i.d. Gaussian noise. Every
// subject (carrier + jitter) performs every class under every mode; twins
// across modes share subject, phase and noise draws. Deterministic per
// (config, master_seed); balanced per (class, mode).
// Twins across modes share base seed, phase and noise draws. Deterministic
// per (config, master_seed); balanced per (class, mode).
Dataset generate_dataset(const GeneratorConfig& config, std::uint64_t master_seed);

// N copies of frames[tau].
std::vector<Vector> make_static_sequence(const SequenceSample& sample, std::size_t tau,
                                         std::size_t length);

struct SplitConfig {
    std::size_t num_folds = 10;
    std::size_t fold_index = 0;
};

// Train draws only from seen modes; test partitions are keyed by mode; no
// base-signal (subject) seed appears on both sides, so the split is subject
// independent. Subject groups (distinct seeds, in first-appearance order)
// rotate through folds, so across all fold_index values every sample lands
// in test exactly once. Unseen-mode samples whose subject falls on the train
// side belong to no partition. Unseen modes with no samples at all are
// flagged, not fatal.
struct ModeSplit {
    std::vector<SequenceSample> train;
    std::vector<SequenceSample> seen_test;
    std::vector<std::pair<std::uint32_t, std::vector<SequenceSample>>> unseen_tests;
    std::vector<std::uint32_t> empty_unseen_modes;
};

ModeSplit split_by_mode(std::span<const SequenceSample> samples,
                        std::span<const std::uint32_t> seen_modes,
                        std::span<const std::uint32_t> unseen_modes, const SplitConfig& fold);

// File pair <stem>.manifest (JSON text) + <stem>.frames (binary: magic
// "MVSEQ1", u32 sample count, per sample [u32 T, u32 D_x, u32 label,
// u32 mode_id, u64 seed, T*D_x little-endian doubles], trailing u64
// FNV-1a checksum). Round trips are bit-exact; corruption is rejected.
void save_dataset(const Dataset& dataset, const std::filesystem::path& stem);
Dataset load_dataset(const std::filesystem::path& stem);

}  // namespace mvlstm
