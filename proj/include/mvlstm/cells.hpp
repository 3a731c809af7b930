#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "mvlstm/numerics.hpp"

namespace mvlstm {

enum class Variant { lstm, modevar, modevar_crosscell };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);

// Structural options shared by the cell types. diagonal_peephole restricts
// every matrix that reads a cell state inside a gate to its diagonal (the
// off-diagonal entries are structural zeros, not free parameters).
// literal_eq2 drives the bias-cell update with the dynamics gates i/f instead
// of the dedicated gates i_hat/f_hat. untied_cross gives the c -> hatted-gate
// peepholes their own matrices instead of sharing W_ci/W_cf.
struct CellOptions {
    bool diagonal_peephole = false;
    bool literal_eq2 = false;
    bool untied_cross = false;

    bool operator==(const CellOptions&) const = default;
};

// Peephole LSTM parameters. W_x* are H x D, W_h* and W_c* are H x H.
struct LstmParams {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;

    Matrix W_xi, W_hi, W_ci;
    Matrix W_xf, W_hf, W_cf;
    Matrix W_xc, W_hc;
    Matrix W_xo, W_ho, W_co;
    Vector b_i, b_f, b_c, b_o;

    CellOptions options;
};

// Mode variational LSTM parameters: the dynamics-path weights of LstmParams
// plus a static-sequence path with its own cell state, the two extra terms of
// the shared output gate, and (optionally) the cross-cell peepholes.
struct ModeVarParams {
    LstmParams base;

    Matrix W_xi_hat, W_hi_hat, W_ci_hat;  // static path input gate
    Matrix W_xf_hat, W_hf_hat, W_cf_hat;  // static path forget gate
    Matrix W_xc_hat, W_hc_hat;            // static path candidate
    Vector b_i_hat, b_f_hat, b_c_hat;
    Matrix W_co_hat, W_ho_hat;            // c_hat_t and h_hat_{t-1} into the shared gate

    bool cross_cell = false;
    Matrix W_ci_cross, W_cf_cross;          // c_hat_{t-1} into i_t / f_t
    Matrix W_ci_hat_cross, W_cf_hat_cross;  // c_{t-1} into i_hat_t / f_hat_t (untied only;
                                            // tied configurations reuse base.W_ci / base.W_cf)

    std::size_t input_dim() const { return base.input_dim; }
    std::size_t hidden_dim() const { return base.hidden_dim; }
    const CellOptions& options() const { return base.options; }
};

using CellParams = std::variant<LstmParams, ModeVarParams>;

Variant variant_of(const CellParams& p);
std::size_t input_dim_of(const CellParams& p);
std::size_t hidden_dim_of(const CellParams& p);

struct CellState {
    Vector c;  // memory cell
    Vector h;  // latent features
};

struct ModeVarState {
    Vector c, h;          // dynamics path
    Vector c_hat, h_hat;  // bias path
};

using AnyState = std::variant<CellState, ModeVarState>;

CellState zero_state(const LstmParams& p);
ModeVarState zero_state(const ModeVarParams& p);
AnyState zero_state(const CellParams& p);

// Everything the backward pass needs to replay one step.
struct StepCache {
    Vector x, x_hat;
    Vector c_prev, h_prev, c_hat_prev, h_hat_prev;
    Vector a_i, a_f, a_o, a_g;              // pre-activation sums
    Vector a_i_hat, a_f_hat, a_g_hat;
    Vector i, f, o, g;                      // gate activations / candidate tanh
    Vector i_hat, f_hat, g_hat;
    Vector c, c_hat;                        // new cell states
    Vector tanh_c, tanh_c_hat;
};

// Glorot-uniform weights, zero biases except b_f = 1; deterministic per seed.
CellParams init_params(std::size_t input_dim, std::size_t hidden_dim, Variant variant,
                       std::uint64_t seed, const CellOptions& options = {});

std::pair<CellState, StepCache> lstm_step(const LstmParams& p, const CellState& s,
                                          const Vector& x);
std::pair<ModeVarState, StepCache> modevar_step(const ModeVarParams& p, const ModeVarState& s,
                                                const Vector& x, const Vector& x_hat);
std::pair<ModeVarState, StepCache> crosscell_step(const ModeVarParams& p, const ModeVarState& s,
                                                  const Vector& x, const Vector& x_hat);

struct ForwardResult {
    AnyState final_state;
    std::vector<StepCache> caches;
};

// Folds the variant's step over the frames from the all-zero initial state.
// Mode variational cells see static_frame as x_hat at every timestep; the
// plain LSTM ignores it.
ForwardResult forward_sequence(const CellParams& params, std::span<const Vector> frames,
                               const Vector& static_frame);

const Vector& final_h(const AnyState& s);
const Vector& final_h_hat(const AnyState& s);  // throws for CellState

// --- canonical tensor enumeration -----------------------------------------
//
// Single source of truth for parameter order and names; drives weight
// initialization, serialization, the optimizer, gradient flattening and the
// finite-difference sweep. Callback is invoked as fn(name, Matrix&) or
// fn(name, Vector&).

template <class P, class F>
void for_each_tensor(P& p, F&& fn)
    requires std::same_as<std::remove_const_t<P>, LstmParams>
{
    fn("W_xi", p.W_xi);
    fn("W_hi", p.W_hi);
    fn("W_ci", p.W_ci);
    fn("W_xf", p.W_xf);
    fn("W_hf", p.W_hf);
    fn("W_cf", p.W_cf);
    fn("W_xc", p.W_xc);
    fn("W_hc", p.W_hc);
    fn("W_xo", p.W_xo);
    fn("W_ho", p.W_ho);
    fn("W_co", p.W_co);
    fn("b_i", p.b_i);
    fn("b_f", p.b_f);
    fn("b_c", p.b_c);
    fn("b_o", p.b_o);
}

template <class P, class F>
void for_each_tensor(P& p, F&& fn)
    requires std::same_as<std::remove_const_t<P>, ModeVarParams>
{
    for_each_tensor(p.base, fn);
    fn("W_xi_hat", p.W_xi_hat);
    fn("W_hi_hat", p.W_hi_hat);
    fn("W_ci_hat", p.W_ci_hat);
    fn("W_xf_hat", p.W_xf_hat);
    fn("W_hf_hat", p.W_hf_hat);
    fn("W_cf_hat", p.W_cf_hat);
    fn("W_xc_hat", p.W_xc_hat);
    fn("W_hc_hat", p.W_hc_hat);
    fn("b_i_hat", p.b_i_hat);
    fn("b_f_hat", p.b_f_hat);
    fn("b_c_hat", p.b_c_hat);
    fn("W_co_hat", p.W_co_hat);
    fn("W_ho_hat", p.W_ho_hat);
    if (p.cross_cell) {
        fn("W_ci_cross", p.W_ci_cross);
        fn("W_cf_cross", p.W_cf_cross);
        if (p.base.options.untied_cross) {
            fn("W_ci_hat_cross", p.W_ci_hat_cross);
            fn("W_cf_hat_cross", p.W_cf_hat_cross);
        }
    }
}

template <class F>
void for_each_tensor(CellParams& p, F&& fn) {
    std::visit([&](auto& alt) { for_each_tensor(alt, fn); }, p);
}

template <class F>
void for_each_tensor(const CellParams& p, F&& fn) {
    std::visit([&](const auto& alt) { for_each_tensor(alt, fn); }, p);
}

// Names of every tensor live in the given parameter set, in canonical order.
std::vector<std::string_view> tensor_names(const CellParams& p);

// Total number of scalar parameters (structural zeros included).
std::size_t scalar_count(const CellParams& p);

// Zero-filled parameter set with the same shapes, flags and options.
CellParams zeros_like(const CellParams& p);

// True where diagonal_peephole turns an entry into a structural zero.
bool is_peephole_tensor(std::string_view name);

// Zeroes the off-diagonal entries of all peephole matrices when the options
// request diagonal peepholes; no-op otherwise. Applied to freshly drawn
// weights and to gradients, so constrained entries never move.
void apply_structural_masks(CellParams& p);

}  // namespace mvlstm
