#pragma once

#include <functional>
#include <string>
#include <utility>

#include "mvlstm/cells.hpp"

namespace mvlstm {

// Parameter gradients (shape-congruent with the differentiated parameter set)
// plus the gradients of the sequence inputs.
struct Gradients {
    CellParams by_param;
    std::vector<Vector> d_frames;  // dL/dx_t per frame
    Vector d_static;               // dL/dx_hat, accumulated over all timesteps; empty for lstm
};

// Gradient of the scalar loss w.r.t. the latent features. d_h applies to the
// final step; d_h_per_step, when non-empty, injects one gradient per timestep
// (pooled readouts). d_h_hat may be empty (treated as zero) and must be empty
// for the plain LSTM.
struct LossSeed {
    Vector d_h;
    Vector d_h_hat;
    std::vector<Vector> d_h_per_step;
};

// Exact reverse-mode sweep over the caches of a matching forward_sequence.
Gradients backward_sequence(const CellParams& params, std::span<const StepCache> caches,
                            const LossSeed& seed);

// Scalar loss as a function of (params, frames, static frame); used by the
// finite-difference oracle, which must stay independent of backward_sequence.
using SequenceLossFn =
    std::function<double(const CellParams&, std::span<const Vector>, const Vector&)>;

// Central differences (L(t+e) - L(t-e)) / 2e over every free scalar parameter,
// every frame entry and the static frame. epsilon must lie in [1e-7, 1e-3].
Gradients finite_diff_grad(const CellParams& params, const std::vector<Vector>& frames,
                           const Vector& static_frame, const SequenceLossFn& loss,
                           double epsilon);

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

struct GradCheckReport {
    Variant variant = Variant::lstm;
    double tolerance = 0.0;
    // canonical parameter order, then "frames" and (mode-var) "x_hat"
    std::vector<std::pair<std::string, double>> per_tensor_max;
    double global_max = 0.0;
    bool pass = false;
};

GradCheckReport compare_gradients(const Gradients& analytic, const Gradients& numeric,
                                  Variant variant, double tolerance);

// Builds a seeded random instance (params, frames, static frame, linear loss
// on the final latent features) and cross-checks backward_sequence against
// finite differences at epsilon = 1e-5.
GradCheckReport grad_check(Variant variant, std::size_t input_dim, std::size_t hidden_dim,
                           std::size_t num_steps, std::uint64_t seed, double tolerance,
                           const CellOptions& options = {});

}  // namespace mvlstm
