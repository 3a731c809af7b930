#include "mvlstm/cells.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mvlstm/rng.hpp"

namespace mvlstm {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void check_dim(const char* what, std::size_t got, std::size_t want) {
    if (got != want) {
        std::ostringstream msg;
        msg << what << " has dim " << got << ", expected " << want;
        fail(msg.str());
    }
}

// out = f (*) c_prev + i (*) g   -- the one cell-state update rule, shared by
// the dynamics and bias paths so tied configurations stay bit-identical
Vector cell_update(const Vector& f, const Vector& c_prev, const Vector& i, const Vector& g) {
    Vector out(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) out[k] = f[k] * c_prev[k] + i[k] * g[k];
    return out;
}

}  // namespace

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::lstm: return "lstm";
        case Variant::modevar: return "modevar";
        case Variant::modevar_crosscell: return "modevar_crosscell";
    }
    fail("unknown variant");
}

Variant variant_from_string(std::string_view s) {
    if (s == "lstm") return Variant::lstm;
    if (s == "modevar") return Variant::modevar;
    if (s == "modevar_crosscell") return Variant::modevar_crosscell;
    fail("unknown variant '" + std::string(s) + "' (expected lstm, modevar or modevar_crosscell)");
}

Variant variant_of(const CellParams& p) {
    if (std::holds_alternative<LstmParams>(p)) return Variant::lstm;
    return std::get<ModeVarParams>(p).cross_cell ? Variant::modevar_crosscell : Variant::modevar;
}

std::size_t input_dim_of(const CellParams& p) {
    return std::visit([](const auto& a) {
        if constexpr (std::is_same_v<std::decay_t<decltype(a)>, LstmParams>)
            return a.input_dim;
        else
            return a.input_dim();
    }, p);
}

std::size_t hidden_dim_of(const CellParams& p) {
    return std::visit([](const auto& a) {
        if constexpr (std::is_same_v<std::decay_t<decltype(a)>, LstmParams>)
            return a.hidden_dim;
        else
            return a.hidden_dim();
    }, p);
}

CellState zero_state(const LstmParams& p) {
    return CellState{Vector(p.hidden_dim), Vector(p.hidden_dim)};
}

ModeVarState zero_state(const ModeVarParams& p) {
    const std::size_t h = p.hidden_dim();
    return ModeVarState{Vector(h), Vector(h), Vector(h), Vector(h)};
}

AnyState zero_state(const CellParams& p) {
    if (const auto* lstm = std::get_if<LstmParams>(&p)) return zero_state(*lstm);
    return zero_state(std::get<ModeVarParams>(p));
}

bool is_peephole_tensor(std::string_view name) {
    return name == "W_ci" || name == "W_cf" || name == "W_co" || name == "W_ci_hat" ||
           name == "W_cf_hat" || name == "W_co_hat" || name == "W_ci_cross" ||
           name == "W_cf_cross" || name == "W_ci_hat_cross" || name == "W_cf_hat_cross";
}

namespace {

void mask_diagonal(Matrix& m) {
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c)
            if (r != c) m(r, c) = 0.0;
}

template <class P>
void apply_masks_impl(P& p, const CellOptions& opts) {
    if (!opts.diagonal_peephole) return;
    for_each_tensor(p, [](std::string_view name, auto& t) {
        if constexpr (std::is_same_v<std::decay_t<decltype(t)>, Matrix>) {
            if (is_peephole_tensor(name)) mask_diagonal(t);
        }
    });
}

}  // namespace

void apply_structural_masks(CellParams& p) {
    std::visit([](auto& alt) {
        if constexpr (std::is_same_v<std::decay_t<decltype(alt)>, LstmParams>)
            apply_masks_impl(alt, alt.options);
        else
            apply_masks_impl(alt, alt.base.options);
    }, p);
}

std::vector<std::string_view> tensor_names(const CellParams& p) {
    std::vector<std::string_view> names;
    for_each_tensor(p, [&](std::string_view name, const auto&) { names.push_back(name); });
    return names;
}

std::size_t scalar_count(const CellParams& p) {
    std::size_t n = 0;
    for_each_tensor(p, [&](std::string_view, const auto& t) { n += t.data.size(); });
    return n;
}

CellParams zeros_like(const CellParams& p) {
    CellParams out = p;
    for_each_tensor(out, [](std::string_view, auto& t) {
        std::fill(t.data.begin(), t.data.end(), 0.0);
    });
    return out;
}

namespace {

LstmParams make_lstm_shapes(std::size_t dx, std::size_t dh, const CellOptions& opts) {
    LstmParams p;
    p.input_dim = dx;
    p.hidden_dim = dh;
    p.options = opts;
    p.W_xi = Matrix(dh, dx);
    p.W_hi = Matrix(dh, dh);
    p.W_ci = Matrix(dh, dh);
    p.W_xf = Matrix(dh, dx);
    p.W_hf = Matrix(dh, dh);
    p.W_cf = Matrix(dh, dh);
    p.W_xc = Matrix(dh, dx);
    p.W_hc = Matrix(dh, dh);
    p.W_xo = Matrix(dh, dx);
    p.W_ho = Matrix(dh, dh);
    p.W_co = Matrix(dh, dh);
    p.b_i = Vector(dh);
    p.b_f = Vector(dh);
    p.b_c = Vector(dh);
    p.b_o = Vector(dh);
    return p;
}

ModeVarParams make_modevar_shapes(std::size_t dx, std::size_t dh, bool cross,
                                  const CellOptions& opts) {
    ModeVarParams p;
    p.base = make_lstm_shapes(dx, dh, opts);
    p.W_xi_hat = Matrix(dh, dx);
    p.W_hi_hat = Matrix(dh, dh);
    p.W_ci_hat = Matrix(dh, dh);
    p.W_xf_hat = Matrix(dh, dx);
    p.W_hf_hat = Matrix(dh, dh);
    p.W_cf_hat = Matrix(dh, dh);
    p.W_xc_hat = Matrix(dh, dx);
    p.W_hc_hat = Matrix(dh, dh);
    p.b_i_hat = Vector(dh);
    p.b_f_hat = Vector(dh);
    p.b_c_hat = Vector(dh);
    p.W_co_hat = Matrix(dh, dh);
    p.W_ho_hat = Matrix(dh, dh);
    p.cross_cell = cross;
    if (cross) {
        p.W_ci_cross = Matrix(dh, dh);
        p.W_cf_cross = Matrix(dh, dh);
        if (opts.untied_cross) {
            p.W_ci_hat_cross = Matrix(dh, dh);
            p.W_cf_hat_cross = Matrix(dh, dh);
        }
    }
    return p;
}

}  // namespace

CellParams init_params(std::size_t input_dim, std::size_t hidden_dim, Variant variant,
                       std::uint64_t seed, const CellOptions& options) {
    if (input_dim == 0 || hidden_dim == 0) fail("init_params: dims must be >= 1");

    CellParams params;
    if (variant == Variant::lstm) {
        params = make_lstm_shapes(input_dim, hidden_dim, options);
    } else {
        params = make_modevar_shapes(input_dim, hidden_dim,
                                     variant == Variant::modevar_crosscell, options);
    }

    Rng rng(seed);
    for_each_tensor(params, [&](std::string_view name, auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, Matrix>) {
            // Glorot uniform: fan_in = cols, fan_out = rows
            const double s = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
            for (double& w : t.data) w = rng.uniform(-s, s);
        } else {
            const double fill = (name == "b_f") ? 1.0 : 0.0;
            std::fill(t.data.begin(), t.data.end(), fill);
        }
    });
    apply_structural_masks(params);
    return params;
}

namespace {

void check_lstm_inputs(const LstmParams& p, const CellState& s, const Vector& x) {
    check_dim("input x", x.size(), p.input_dim);
    check_dim("state c", s.c.size(), p.hidden_dim);
    check_dim("state h", s.h.size(), p.hidden_dim);
}

void check_modevar_inputs(const ModeVarParams& p, const ModeVarState& s, const Vector& x,
                          const Vector& x_hat) {
    check_dim("input x", x.size(), p.input_dim());
    check_dim("static input x_hat", x_hat.size(), p.input_dim());
    check_dim("state c", s.c.size(), p.hidden_dim());
    check_dim("state h", s.h.size(), p.hidden_dim());
    check_dim("state c_hat", s.c_hat.size(), p.hidden_dim());
    check_dim("state h_hat", s.h_hat.size(), p.hidden_dim());
}

std::pair<ModeVarState, StepCache> modevar_step_impl(const ModeVarParams& p,
                                                     const ModeVarState& s, const Vector& x,
                                                     const Vector& x_hat, bool cross) {
    check_modevar_inputs(p, s, x, x_hat);

    StepCache cache;
    cache.x = x;
    cache.x_hat = x_hat;
    cache.c_prev = s.c;
    cache.h_prev = s.h;
    cache.c_hat_prev = s.c_hat;
    cache.h_hat_prev = s.h_hat;

    const LstmParams& b = p.base;

    // dynamics gates
    Vector a_i = b.b_i;
    add_matvec(a_i, b.W_xi, x);
    add_matvec(a_i, b.W_hi, s.h);
    add_matvec(a_i, b.W_ci, s.c);
    if (cross) add_matvec(a_i, p.W_ci_cross, s.c_hat);

    Vector a_f = b.b_f;
    add_matvec(a_f, b.W_xf, x);
    add_matvec(a_f, b.W_hf, s.h);
    add_matvec(a_f, b.W_cf, s.c);
    if (cross) add_matvec(a_f, p.W_cf_cross, s.c_hat);

    // bias-path gates
    Vector a_i_hat = p.b_i_hat;
    add_matvec(a_i_hat, p.W_xi_hat, x_hat);
    add_matvec(a_i_hat, p.W_hi_hat, s.h_hat);
    add_matvec(a_i_hat, p.W_ci_hat, s.c_hat);
    if (cross)
        add_matvec(a_i_hat, p.options().untied_cross ? p.W_ci_hat_cross : b.W_ci, s.c);

    Vector a_f_hat = p.b_f_hat;
    add_matvec(a_f_hat, p.W_xf_hat, x_hat);
    add_matvec(a_f_hat, p.W_hf_hat, s.h_hat);
    add_matvec(a_f_hat, p.W_cf_hat, s.c_hat);
    if (cross)
        add_matvec(a_f_hat, p.options().untied_cross ? p.W_cf_hat_cross : b.W_cf, s.c);

    cache.i = sigmoid(a_i);
    cache.f = sigmoid(a_f);
    cache.i_hat = sigmoid(a_i_hat);
    cache.f_hat = sigmoid(a_f_hat);

    // candidates and cell updates
    Vector a_g = b.b_c;
    add_matvec(a_g, b.W_xc, x);
    add_matvec(a_g, b.W_hc, s.h);
    cache.g = tanh_act(a_g);
    cache.c = cell_update(cache.f, s.c, cache.i, cache.g);

    Vector a_g_hat = p.b_c_hat;
    add_matvec(a_g_hat, p.W_xc_hat, x_hat);
    add_matvec(a_g_hat, p.W_hc_hat, s.h_hat);
    cache.g_hat = tanh_act(a_g_hat);
    // literal as-printed form updates the bias cell with the dynamics gates
    const Vector& f_drive = p.options().literal_eq2 ? cache.f : cache.f_hat;
    const Vector& i_drive = p.options().literal_eq2 ? cache.i : cache.i_hat;
    cache.c_hat = cell_update(f_drive, s.c_hat, i_drive, cache.g_hat);

    // shared output gate reads both current cell states
    Vector a_o = b.b_o;
    add_matvec(a_o, b.W_xo, x);
    add_matvec(a_o, b.W_ho, s.h);
    add_matvec(a_o, b.W_co, cache.c);
    add_matvec(a_o, p.W_co_hat, cache.c_hat);
    add_matvec(a_o, p.W_ho_hat, s.h_hat);
    cache.o = sigmoid(a_o);

    cache.tanh_c = tanh_act(cache.c);
    cache.tanh_c_hat = tanh_act(cache.c_hat);

    ModeVarState next;
    next.c = cache.c;
    next.c_hat = cache.c_hat;
    next.h = hadamard(cache.o, cache.tanh_c);
    next.h_hat = hadamard(cache.o, cache.tanh_c_hat);

    cache.a_i = std::move(a_i);
    cache.a_f = std::move(a_f);
    cache.a_o = std::move(a_o);
    cache.a_g = std::move(a_g);
    cache.a_i_hat = std::move(a_i_hat);
    cache.a_f_hat = std::move(a_f_hat);
    cache.a_g_hat = std::move(a_g_hat);
    return {next, cache};
}

}  // namespace

std::pair<CellState, StepCache> lstm_step(const LstmParams& p, const CellState& s,
                                          const Vector& x) {
    check_lstm_inputs(p, s, x);

    StepCache cache;
    cache.x = x;
    cache.c_prev = s.c;
    cache.h_prev = s.h;

    Vector a_i = p.b_i;
    add_matvec(a_i, p.W_xi, x);
    add_matvec(a_i, p.W_hi, s.h);
    add_matvec(a_i, p.W_ci, s.c);

    Vector a_f = p.b_f;
    add_matvec(a_f, p.W_xf, x);
    add_matvec(a_f, p.W_hf, s.h);
    add_matvec(a_f, p.W_cf, s.c);

    cache.i = sigmoid(a_i);
    cache.f = sigmoid(a_f);

    Vector a_g = p.b_c;
    add_matvec(a_g, p.W_xc, x);
    add_matvec(a_g, p.W_hc, s.h);
    cache.g = tanh_act(a_g);
    cache.c = cell_update(cache.f, s.c, cache.i, cache.g);

    Vector a_o = p.b_o;
    add_matvec(a_o, p.W_xo, x);
    add_matvec(a_o, p.W_ho, s.h);
    add_matvec(a_o, p.W_co, cache.c);
    cache.o = sigmoid(a_o);

    cache.tanh_c = tanh_act(cache.c);

    CellState next;
    next.c = cache.c;
    next.h = hadamard(cache.o, cache.tanh_c);

    cache.a_i = std::move(a_i);
    cache.a_f = std::move(a_f);
    cache.a_o = std::move(a_o);
    cache.a_g = std::move(a_g);
    return {next, cache};
}

std::pair<ModeVarState, StepCache> modevar_step(const ModeVarParams& p, const ModeVarState& s,
                                                const Vector& x, const Vector& x_hat) {
    if (p.cross_cell) fail("modevar_step: params have cross_cell set, use crosscell_step");
    return modevar_step_impl(p, s, x, x_hat, false);
}

std::pair<ModeVarState, StepCache> crosscell_step(const ModeVarParams& p, const ModeVarState& s,
                                                  const Vector& x, const Vector& x_hat) {
    if (!p.cross_cell) fail("crosscell_step: params lack the cross_cell flag, use modevar_step");
    return modevar_step_impl(p, s, x, x_hat, true);
}

ForwardResult forward_sequence(const CellParams& params, std::span<const Vector> frames,
                               const Vector& static_frame) {
    if (frames.empty()) fail("forward_sequence: empty sequence");

    ForwardResult result;
    result.caches.reserve(frames.size());

    if (const auto* lstm = std::get_if<LstmParams>(&params)) {
        CellState state = zero_state(*lstm);
        for (const Vector& x : frames) {
            auto [next, cache] = lstm_step(*lstm, state, x);
            state = std::move(next);
            result.caches.push_back(std::move(cache));
        }
        result.final_state = std::move(state);
    } else {
        const auto& mv = std::get<ModeVarParams>(params);
        ModeVarState state = zero_state(mv);
        for (const Vector& x : frames) {
            auto [next, cache] = mv.cross_cell ? crosscell_step(mv, state, x, static_frame)
                                               : modevar_step(mv, state, x, static_frame);
            state = std::move(next);
            result.caches.push_back(std::move(cache));
        }
        result.final_state = std::move(state);
    }
    return result;
}

const Vector& final_h(const AnyState& s) {
    if (const auto* cs = std::get_if<CellState>(&s)) return cs->h;
    return std::get<ModeVarState>(s).h;
}

const Vector& final_h_hat(const AnyState& s) {
    if (std::holds_alternative<CellState>(s))
        fail("final_h_hat: plain LSTM state has no bias path");
    return std::get<ModeVarState>(s).h_hat;
}

}  // namespace mvlstm
