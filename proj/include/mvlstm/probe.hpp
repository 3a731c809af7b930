#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "mvlstm/cells.hpp"

namespace mvlstm {

// Latent features h_t recorded over a replicated-frame input, row t-1 = h_t.
struct ProbeTrace {
    Matrix features;       // N x H
    Matrix features_hat;   // N x H when recorded, else 0 x 0
    Variant variant = Variant::lstm;
    std::string sample_id;
    std::size_t tau = 0;
    std::size_t length = 0;
};

// Frames must be bitwise identical (that is what makes the sequence static);
// mode variational cells see the same frame as x_hat. record_hat additionally
// captures the bias-path features.
ProbeTrace trace_features(const CellParams& params, std::span<const Vector> static_seq,
                          bool record_hat = false);

struct ProbeReport {
    // smallest t >= 2 (1-indexed) with ||h_t - h_{t-1}||_inf < epsilon
    std::optional<std::size_t> convergence_time;
    Vector converged_value;  // last row of the trace
    double epsilon = 0.0;
};

ProbeReport convergence_report(const ProbeTrace& trace, double epsilon = 1e-4);

// Euclidean distance between converged values; both reports must have
// converged.
double pair_divergence(const ProbeReport& a, const ProbeReport& b);

// Writes <stem>.csv (header "dim,t1,...,tN", one row per feature dimension,
// values printed losslessly) and <stem>.svg (one row per dimension, one
// column per timestep, diverging color scale fixed to [-1, 1], legend and
// axis labels embedded). Multiple traces get suffixed stems <stem>_0, ....
// Byte output is deterministic for identical inputs.
void export_figure(std::span<const ProbeTrace> traces, std::size_t first_k,
                   const std::filesystem::path& stem);

}  // namespace mvlstm
