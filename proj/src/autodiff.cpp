#include "mvlstm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mvlstm/rng.hpp"

namespace mvlstm {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

// dL/da for y = sigmoid(a): dy * y * (1-y)
Vector sigmoid_backward(const Vector& dy, const Vector& y) {
    Vector out(dy.size());
    for (std::size_t k = 0; k < dy.size(); ++k) out[k] = dy[k] * y[k] * (1.0 - y[k]);
    return out;
}

// dL/da for y = tanh(a): dy * (1 - y^2)
Vector tanh_backward(const Vector& dy, const Vector& y) {
    Vector out(dy.size());
    for (std::size_t k = 0; k < dy.size(); ++k) out[k] = dy[k] * (1.0 - y[k] * y[k]);
    return out;
}

// accumulate dL/dc from dL/dh where h = o * tanh(c)
void add_gated_tanh_backward(Vector& dc, const Vector& dh, const Vector& o,
                             const Vector& tanh_c) {
    for (std::size_t k = 0; k < dc.size(); ++k)
        dc[k] += dh[k] * o[k] * (1.0 - tanh_c[k] * tanh_c[k]);
}

void add_hadamard(Vector& acc, const Vector& a, const Vector& b) {
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += a[k] * b[k];
}

struct TensorSlot {
    std::string_view name;
    std::vector<double>* data;
    std::size_t rows;  // 0 for vectors
    std::size_t cols;
};

std::vector<TensorSlot> collect_slots(CellParams& p) {
    std::vector<TensorSlot> slots;
    for_each_tensor(p, [&](std::string_view name, auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, Matrix>) {
            slots.push_back({name, &t.data, t.rows, t.cols});
        } else {
            slots.push_back({name, &t.data, 0, 0});
        }
    });
    return slots;
}

bool cell_options_of(const CellParams& p, CellOptions& out) {
    if (const auto* lstm = std::get_if<LstmParams>(&p)) {
        out = lstm->options;
        return false;
    }
    out = std::get<ModeVarParams>(p).base.options;
    return true;
}

void check_seed(const CellParams& params, const LossSeed& seed, std::size_t steps) {
    const std::size_t dh = hidden_dim_of(params);
    if (seed.d_h.size() != dh) fail("backward_sequence: seed d_h dim mismatch");
    if (!seed.d_h_hat.empty()) {
        if (variant_of(params) == Variant::lstm)
            fail("backward_sequence: plain LSTM cannot take a d_h_hat seed");
        if (seed.d_h_hat.size() != dh) fail("backward_sequence: seed d_h_hat dim mismatch");
    }
    if (!seed.d_h_per_step.empty()) {
        if (seed.d_h_per_step.size() != steps)
            fail("backward_sequence: per-step seed count does not match the cache count");
        for (const Vector& v : seed.d_h_per_step)
            if (v.size() != dh) fail("backward_sequence: per-step seed dim mismatch");
    }
}

void check_cache_matches(const CellParams& params, const StepCache& cache) {
    const bool modevar = variant_of(params) != Variant::lstm;
    if (cache.x.size() != input_dim_of(params) || cache.c.size() != hidden_dim_of(params))
        fail("backward_sequence: cache dims do not match params");
    if (modevar != !cache.x_hat.empty())
        fail("backward_sequence: cache was produced by a different cell variant");
}

Gradients backward_lstm(const LstmParams& p, std::span<const StepCache> caches,
                        const LossSeed& seed) {
    Gradients grads;
    grads.by_param = zeros_like(CellParams(p));
    auto& g = std::get<LstmParams>(grads.by_param);
    grads.d_frames.assign(caches.size(), Vector(p.input_dim));

    Vector dh = seed.d_h;
    Vector dc(p.hidden_dim);

    for (std::size_t t = caches.size(); t-- > 0;) {
        const StepCache& cc = caches[t];
        Vector& dx = grads.d_frames[t];
        if (!seed.d_h_per_step.empty()) add_in_place(dh, seed.d_h_per_step[t]);

        // h = o * tanh(c)
        Vector d_o = hadamard(dh, cc.tanh_c);
        add_gated_tanh_backward(dc, dh, cc.o, cc.tanh_c);

        // o = sigmoid(a_o), a_o reads x, h_prev and the *current* c
        Vector da_o = sigmoid_backward(d_o, cc.o);
        accumulate_outer(g.W_xo, da_o, cc.x);
        add_in_place(dx, matvec_transposed(p.W_xo, da_o));
        accumulate_outer(g.W_ho, da_o, cc.h_prev);
        Vector dh_prev = matvec_transposed(p.W_ho, da_o);
        accumulate_outer(g.W_co, da_o, cc.c);
        add_in_place(dc, matvec_transposed(p.W_co, da_o));
        add_in_place(g.b_o, da_o);

        // c = f * c_prev + i * g
        Vector d_f = hadamard(dc, cc.c_prev);
        Vector d_i = hadamard(dc, cc.g);
        Vector d_g = hadamard(dc, cc.i);
        Vector dc_prev = hadamard(dc, cc.f);

        Vector da_g = tanh_backward(d_g, cc.g);
        accumulate_outer(g.W_xc, da_g, cc.x);
        add_in_place(dx, matvec_transposed(p.W_xc, da_g));
        accumulate_outer(g.W_hc, da_g, cc.h_prev);
        add_in_place(dh_prev, matvec_transposed(p.W_hc, da_g));
        add_in_place(g.b_c, da_g);

        Vector da_f = sigmoid_backward(d_f, cc.f);
        accumulate_outer(g.W_xf, da_f, cc.x);
        add_in_place(dx, matvec_transposed(p.W_xf, da_f));
        accumulate_outer(g.W_hf, da_f, cc.h_prev);
        add_in_place(dh_prev, matvec_transposed(p.W_hf, da_f));
        accumulate_outer(g.W_cf, da_f, cc.c_prev);
        add_in_place(dc_prev, matvec_transposed(p.W_cf, da_f));
        add_in_place(g.b_f, da_f);

        Vector da_i = sigmoid_backward(d_i, cc.i);
        accumulate_outer(g.W_xi, da_i, cc.x);
        add_in_place(dx, matvec_transposed(p.W_xi, da_i));
        accumulate_outer(g.W_hi, da_i, cc.h_prev);
        add_in_place(dh_prev, matvec_transposed(p.W_hi, da_i));
        accumulate_outer(g.W_ci, da_i, cc.c_prev);
        add_in_place(dc_prev, matvec_transposed(p.W_ci, da_i));
        add_in_place(g.b_i, da_i);

        dh = std::move(dh_prev);
        dc = std::move(dc_prev);
    }
    return grads;
}

Gradients backward_modevar(const ModeVarParams& p, std::span<const StepCache> caches,
                           const LossSeed& seed) {
    const bool cross = p.cross_cell;
    const bool literal = p.options().literal_eq2;
    const bool untied = p.options().untied_cross;
    const LstmParams& b = p.base;

    Gradients grads;
    grads.by_param = zeros_like(CellParams(p));
    auto& gm = std::get<ModeVarParams>(grads.by_param);
    LstmParams& g = gm.base;
    grads.d_frames.assign(caches.size(), Vector(b.input_dim));
    grads.d_static = Vector(b.input_dim);

    Vector dh = seed.d_h;
    Vector dh_hat = seed.d_h_hat.empty() ? Vector(b.hidden_dim) : seed.d_h_hat;
    Vector dc(b.hidden_dim);
    Vector dc_hat(b.hidden_dim);

    for (std::size_t t = caches.size(); t-- > 0;) {
        const StepCache& cc = caches[t];
        Vector& dx = grads.d_frames[t];
        Vector& dxh = grads.d_static;
        if (!seed.d_h_per_step.empty()) add_in_place(dh, seed.d_h_per_step[t]);

        // h = o * tanh(c), h_hat = o * tanh(c_hat); o is shared by both
        Vector d_o = hadamard(dh, cc.tanh_c);
        add_hadamard(d_o, dh_hat, cc.tanh_c_hat);
        add_gated_tanh_backward(dc, dh, cc.o, cc.tanh_c);
        add_gated_tanh_backward(dc_hat, dh_hat, cc.o, cc.tanh_c_hat);

        // shared output gate (reads both current cell states)
        Vector da_o = sigmoid_backward(d_o, cc.o);
        accumulate_outer(g.W_xo, da_o, cc.x);
        add_in_place(dx, matvec_transposed(b.W_xo, da_o));
        accumulate_outer(g.W_ho, da_o, cc.h_prev);
        Vector dh_prev = matvec_transposed(b.W_ho, da_o);
        accumulate_outer(g.W_co, da_o, cc.c);
        add_in_place(dc, matvec_transposed(b.W_co, da_o));
        accumulate_outer(gm.W_co_hat, da_o, cc.c_hat);
        add_in_place(dc_hat, matvec_transposed(p.W_co_hat, da_o));
        accumulate_outer(gm.W_ho_hat, da_o, cc.h_hat_prev);
        Vector dh_hat_prev = matvec_transposed(p.W_ho_hat, da_o);
        add_in_place(g.b_o, da_o);

        // c_hat = f' * c_hat_prev + i' * g_hat with (f',i') the driving gates
        Vector d_f_drive = hadamard(dc_hat, cc.c_hat_prev);
        Vector d_i_drive = hadamard(dc_hat, cc.g_hat);
        const Vector& f_drive = literal ? cc.f : cc.f_hat;
        const Vector& i_drive = literal ? cc.i : cc.i_hat;
        Vector d_g_hat = hadamard(dc_hat, i_drive);
        Vector dc_hat_prev = hadamard(dc_hat, f_drive);

        // c = f * c_prev + i * g
        Vector d_f = hadamard(dc, cc.c_prev);
        Vector d_i = hadamard(dc, cc.g);
        Vector d_g = hadamard(dc, cc.i);
        Vector dc_prev = hadamard(dc, cc.f);

        Vector d_f_hat(b.hidden_dim);
        Vector d_i_hat(b.hidden_dim);
        if (literal) {
            // as-printed Eq-2 form: the dynamics gates drive both cells and
            // the dedicated i_hat/f_hat stay out of the graph
            add_in_place(d_f, d_f_drive);
            add_in_place(d_i, d_i_drive);
        } else {
            d_f_hat = std::move(d_f_drive);
            d_i_hat = std::move(d_i_drive);
        }

        // bias-path candidate
        Vector da_g_hat = tanh_backward(d_g_hat, cc.g_hat);
        accumulate_outer(gm.W_xc_hat, da_g_hat, cc.x_hat);
        add_in_place(dxh, matvec_transposed(p.W_xc_hat, da_g_hat));
        accumulate_outer(gm.W_hc_hat, da_g_hat, cc.h_hat_prev);
        add_in_place(dh_hat_prev, matvec_transposed(p.W_hc_hat, da_g_hat));
        add_in_place(gm.b_c_hat, da_g_hat);

        // dynamics candidate
        Vector da_g = tanh_backward(d_g, cc.g);
        accumulate_outer(g.W_xc, da_g, cc.x);
        add_in_place(dx, matvec_transposed(b.W_xc, da_g));
        accumulate_outer(g.W_hc, da_g, cc.h_prev);
        add_in_place(dh_prev, matvec_transposed(b.W_hc, da_g));
        add_in_place(g.b_c, da_g);

        // bias-path forget gate
        Vector da_f_hat = sigmoid_backward(d_f_hat, cc.f_hat);
        accumulate_outer(gm.W_xf_hat, da_f_hat, cc.x_hat);
        add_in_place(dxh, matvec_transposed(p.W_xf_hat, da_f_hat));
        accumulate_outer(gm.W_hf_hat, da_f_hat, cc.h_hat_prev);
        add_in_place(dh_hat_prev, matvec_transposed(p.W_hf_hat, da_f_hat));
        accumulate_outer(gm.W_cf_hat, da_f_hat, cc.c_hat_prev);
        add_in_place(dc_hat_prev, matvec_transposed(p.W_cf_hat, da_f_hat));
        add_in_place(gm.b_f_hat, da_f_hat);
        if (cross) {
            const Matrix& w = untied ? p.W_cf_hat_cross : b.W_cf;
            Matrix& gw = untied ? gm.W_cf_hat_cross : g.W_cf;
            accumulate_outer(gw, da_f_hat, cc.c_prev);
            add_in_place(dc_prev, matvec_transposed(w, da_f_hat));
        }

        // bias-path input gate
        Vector da_i_hat = sigmoid_backward(d_i_hat, cc.i_hat);
        accumulate_outer(gm.W_xi_hat, da_i_hat, cc.x_hat);
        add_in_place(dxh, matvec_transposed(p.W_xi_hat, da_i_hat));
        accumulate_outer(gm.W_hi_hat, da_i_hat, cc.h_hat_prev);
        add_in_place(dh_hat_prev, matvec_transposed(p.W_hi_hat, da_i_hat));
        accumulate_outer(gm.W_ci_hat, da_i_hat, cc.c_hat_prev);
        add_in_place(dc_hat_prev, matvec_transposed(p.W_ci_hat, da_i_hat));
        add_in_place(gm.b_i_hat, da_i_hat);
        if (cross) {
            const Matrix& w = untied ? p.W_ci_hat_cross : b.W_ci;
            Matrix& gw = untied ? gm.W_ci_hat_cross : g.W_ci;
            accumulate_outer(gw, da_i_hat, cc.c_prev);
            add_in_place(dc_prev, matvec_transposed(w, da_i_hat));
        }

        // dynamics forget gate
        Vector da_f = sigmoid_backward(d_f, cc.f);
        accumulate_outer(g.W_xf, da_f, cc.x);
        add_in_place(dx, matvec_transposed(b.W_xf, da_f));
        accumulate_outer(g.W_hf, da_f, cc.h_prev);
        add_in_place(dh_prev, matvec_transposed(b.W_hf, da_f));
        accumulate_outer(g.W_cf, da_f, cc.c_prev);
        add_in_place(dc_prev, matvec_transposed(b.W_cf, da_f));
        add_in_place(g.b_f, da_f);
        if (cross) {
            accumulate_outer(gm.W_cf_cross, da_f, cc.c_hat_prev);
            add_in_place(dc_hat_prev, matvec_transposed(p.W_cf_cross, da_f));
        }

        // dynamics input gate
        Vector da_i = sigmoid_backward(d_i, cc.i);
        accumulate_outer(g.W_xi, da_i, cc.x);
        add_in_place(dx, matvec_transposed(b.W_xi, da_i));
        accumulate_outer(g.W_hi, da_i, cc.h_prev);
        add_in_place(dh_prev, matvec_transposed(b.W_hi, da_i));
        accumulate_outer(g.W_ci, da_i, cc.c_prev);
        add_in_place(dc_prev, matvec_transposed(b.W_ci, da_i));
        add_in_place(g.b_i, da_i);
        if (cross) {
            accumulate_outer(gm.W_ci_cross, da_i, cc.c_hat_prev);
            add_in_place(dc_hat_prev, matvec_transposed(p.W_ci_cross, da_i));
        }

        dh = std::move(dh_prev);
        dc = std::move(dc_prev);
        dh_hat = std::move(dh_hat_prev);
        dc_hat = std::move(dc_hat_prev);
    }
    return grads;
}

}  // namespace

Gradients backward_sequence(const CellParams& params, std::span<const StepCache> caches,
                            const LossSeed& seed) {
    if (caches.empty()) fail("backward_sequence: no caches");
    check_seed(params, seed, caches.size());
    for (const StepCache& c : caches) check_cache_matches(params, c);

    Gradients grads;
    if (const auto* lstm = std::get_if<LstmParams>(&params)) {
        grads = backward_lstm(*lstm, caches, seed);
    } else {
        grads = backward_modevar(std::get<ModeVarParams>(params), caches, seed);
    }
    // constrained entries never carry gradient
    apply_structural_masks(grads.by_param);
    return grads;
}

Gradients finite_diff_grad(const CellParams& params, const std::vector<Vector>& frames,
                           const Vector& static_frame, const SequenceLossFn& loss,
                           double epsilon) {
    if (epsilon < 1e-7 || epsilon > 1e-3)
        fail("finite_diff_grad: epsilon must lie in [1e-7, 1e-3]");

    CellOptions opts;
    const bool modevar = cell_options_of(params, opts);

    Gradients grads;
    grads.by_param = zeros_like(params);
    grads.d_frames.assign(frames.size(), Vector(input_dim_of(params)));
    if (modevar) grads.d_static = Vector(input_dim_of(params));

    CellParams work = params;
    std::vector<TensorSlot> work_slots = collect_slots(work);
    std::vector<TensorSlot> grad_slots = collect_slots(grads.by_param);

    auto central = [&](double& cell) {
        const double saved = cell;
        cell = saved + epsilon;
        const double plus = loss(work, frames, static_frame);
        cell = saved - epsilon;
        const double minus = loss(work, frames, static_frame);
        cell = saved;
        return (plus - minus) / (2.0 * epsilon);
    };

    for (std::size_t s = 0; s < work_slots.size(); ++s) {
        const TensorSlot& slot = work_slots[s];
        const bool masked = opts.diagonal_peephole && is_peephole_tensor(slot.name);
        for (std::size_t k = 0; k < slot.data->size(); ++k) {
            if (masked && (k / slot.cols) != (k % slot.cols)) continue;  // structural zero
            (*grad_slots[s].data)[k] = central((*slot.data)[k]);
        }
    }

    std::vector<Vector> frames_work = frames;
    for (std::size_t t = 0; t < frames_work.size(); ++t) {
        for (std::size_t k = 0; k < frames_work[t].size(); ++k) {
            const double saved = frames_work[t][k];
            frames_work[t][k] = saved + epsilon;
            const double plus = loss(params, frames_work, static_frame);
            frames_work[t][k] = saved - epsilon;
            const double minus = loss(params, frames_work, static_frame);
            frames_work[t][k] = saved;
            grads.d_frames[t][k] = (plus - minus) / (2.0 * epsilon);
        }
    }

    if (modevar) {
        Vector static_work = static_frame;
        for (std::size_t k = 0; k < static_work.size(); ++k) {
            const double saved = static_work[k];
            static_work[k] = saved + epsilon;
            const double plus = loss(params, frames, static_work);
            static_work[k] = saved - epsilon;
            const double minus = loss(params, frames, static_work);
            static_work[k] = saved;
            grads.d_static[k] = (plus - minus) / (2.0 * epsilon);
        }
    }
    return grads;
}

double relative_error(double analytic, double numeric) {
    // The floor turns the comparison into |a-n| <= tol*floor for near-zero
    // gradients. Central differences on an O(1) loss carry rounding noise of
    // about u*|L|/eps ~ 4e-12 at eps = 1e-5, so the floor must keep
    // tol*floor above that; 1e-5 leaves a ~20x margin at tol 1e-5 while a
    // 1% corruption of any gradient above 1e-8 still fails the check.
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-5});
    return std::abs(analytic - numeric) / denom;
}

GradCheckReport compare_gradients(const Gradients& analytic, const Gradients& numeric,
                                  Variant variant, double tolerance) {
    GradCheckReport report;
    report.variant = variant;
    report.tolerance = tolerance;

    CellParams a = analytic.by_param;  // collect_slots needs mutable access
    CellParams n = numeric.by_param;
    std::vector<TensorSlot> sa = collect_slots(a);
    std::vector<TensorSlot> sn = collect_slots(n);
    if (sa.size() != sn.size())
        fail("compare_gradients: gradient sets have different tensor layouts");

    for (std::size_t s = 0; s < sa.size(); ++s) {
        double worst = 0.0;
        for (std::size_t k = 0; k < sa[s].data->size(); ++k)
            worst = std::max(worst, relative_error((*sa[s].data)[k], (*sn[s].data)[k]));
        report.per_tensor_max.emplace_back(std::string(sa[s].name), worst);
    }

    double frames_worst = 0.0;
    for (std::size_t t = 0; t < analytic.d_frames.size(); ++t)
        for (std::size_t k = 0; k < analytic.d_frames[t].size(); ++k)
            frames_worst = std::max(
                frames_worst, relative_error(analytic.d_frames[t][k], numeric.d_frames[t][k]));
    report.per_tensor_max.emplace_back("frames", frames_worst);

    if (!analytic.d_static.empty()) {
        double static_worst = 0.0;
        for (std::size_t k = 0; k < analytic.d_static.size(); ++k)
            static_worst =
                std::max(static_worst, relative_error(analytic.d_static[k], numeric.d_static[k]));
        report.per_tensor_max.emplace_back("x_hat", static_worst);
    }

    for (const auto& [name, err] : report.per_tensor_max)
        report.global_max = std::max(report.global_max, err);
    report.pass = report.global_max <= tolerance;
    return report;
}

GradCheckReport grad_check(Variant variant, std::size_t input_dim, std::size_t hidden_dim,
                           std::size_t num_steps, std::uint64_t seed, double tolerance,
                           const CellOptions& options) {
    if (tolerance <= 0.0) fail("grad_check: tolerance must be positive");

    const CellParams params =
        init_params(input_dim, hidden_dim, variant, derive_seed(seed, 11), options);

    Rng rng(derive_seed(seed, 12));
    std::vector<Vector> frames(num_steps, Vector(input_dim));
    for (Vector& f : frames)
        for (double& v : f) v = rng.uniform(-1.0, 1.0);
    Vector static_frame(input_dim);
    for (double& v : static_frame) v = rng.uniform(-1.0, 1.0);

    // seed weights scaled by 1/H keep |L| (and with it the finite-difference
    // rounding noise) bounded independently of the hidden size
    const double seed_scale = 1.0 / static_cast<double>(hidden_dim);
    LossSeed loss_seed;
    loss_seed.d_h = Vector(hidden_dim);
    for (double& v : loss_seed.d_h) v = rng.uniform(-seed_scale, seed_scale);
    if (variant != Variant::lstm) {
        loss_seed.d_h_hat = Vector(hidden_dim);
        for (double& v : loss_seed.d_h_hat) v = rng.uniform(-seed_scale, seed_scale);
    }

    const auto loss = [&loss_seed](const CellParams& p, std::span<const Vector> fr,
                                   const Vector& sf) {
        const ForwardResult fwd = forward_sequence(p, fr, sf);
        double value = dot(loss_seed.d_h, final_h(fwd.final_state));
        if (!loss_seed.d_h_hat.empty())
            value += dot(loss_seed.d_h_hat, final_h_hat(fwd.final_state));
        return value;
    };

    const ForwardResult fwd = forward_sequence(params, frames, static_frame);
    const Gradients analytic = backward_sequence(params, fwd.caches, loss_seed);
    const Gradients numeric = finite_diff_grad(params, frames, static_frame, loss, 1e-5);

    return compare_gradients(analytic, numeric, variant, tolerance);
}

}  // namespace mvlstm
