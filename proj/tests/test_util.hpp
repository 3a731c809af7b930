#pragma once

// Shared helpers for the test binaries: conversions to the oracle types and
// small builders for random instances.

#include <cstdint>
#include <vector>

#include "mvlstm/cells.hpp"
#include "mvlstm/rng.hpp"
#include "oracles.hpp"

namespace testutil {

inline oracle::Vec to_oracle(const mvlstm::Vector& v) { return v.data; }

inline oracle::Mat to_oracle(const mvlstm::Matrix& m) {
    oracle::Mat out(m.rows, oracle::Vec(m.cols));
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) out[r][c] = m(r, c);
    return out;
}

inline oracle::LstmWeights to_oracle(const mvlstm::LstmParams& p) {
    oracle::LstmWeights w;
    w.Wxi = to_oracle(p.W_xi);
    w.Whi = to_oracle(p.W_hi);
    w.Wci = to_oracle(p.W_ci);
    w.Wxf = to_oracle(p.W_xf);
    w.Whf = to_oracle(p.W_hf);
    w.Wcf = to_oracle(p.W_cf);
    w.Wxc = to_oracle(p.W_xc);
    w.Whc = to_oracle(p.W_hc);
    w.Wxo = to_oracle(p.W_xo);
    w.Who = to_oracle(p.W_ho);
    w.Wco = to_oracle(p.W_co);
    w.bi = to_oracle(p.b_i);
    w.bf = to_oracle(p.b_f);
    w.bc = to_oracle(p.b_c);
    w.bo = to_oracle(p.b_o);
    return w;
}

inline oracle::HatWeights hat_to_oracle(const mvlstm::ModeVarParams& p) {
    oracle::HatWeights w;
    w.Wxi = to_oracle(p.W_xi_hat);
    w.Whi = to_oracle(p.W_hi_hat);
    w.Wci = to_oracle(p.W_ci_hat);
    w.Wxf = to_oracle(p.W_xf_hat);
    w.Whf = to_oracle(p.W_hf_hat);
    w.Wcf = to_oracle(p.W_cf_hat);
    w.Wxc = to_oracle(p.W_xc_hat);
    w.Whc = to_oracle(p.W_hc_hat);
    w.bi = to_oracle(p.b_i_hat);
    w.bf = to_oracle(p.b_f_hat);
    w.bc = to_oracle(p.b_c_hat);
    w.Wco = to_oracle(p.W_co_hat);
    w.Who = to_oracle(p.W_ho_hat);
    w.cross = p.cross_cell;
    w.literal_gates = p.base.options.literal_eq2;
    if (p.cross_cell) {
        w.Wci_cross = to_oracle(p.W_ci_cross);
        w.Wcf_cross = to_oracle(p.W_cf_cross);
        if (p.base.options.untied_cross) {
            w.Wci_hat_cross = to_oracle(p.W_ci_hat_cross);
            w.Wcf_hat_cross = to_oracle(p.W_cf_hat_cross);
        } else {
            w.Wci_hat_cross = to_oracle(p.base.W_ci);
            w.Wcf_hat_cross = to_oracle(p.base.W_cf);
        }
    }
    return w;
}

inline mvlstm::Vector random_vector(std::size_t n, mvlstm::Rng& rng, double lo = -1.0,
                                    double hi = 1.0) {
    mvlstm::Vector v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline std::vector<mvlstm::Vector> random_frames(std::size_t count, std::size_t dim,
                                                 mvlstm::Rng& rng) {
    std::vector<mvlstm::Vector> frames;
    frames.reserve(count);
    for (std::size_t t = 0; t < count; ++t) frames.push_back(random_vector(dim, rng));
    return frames;
}

}  // namespace testutil
