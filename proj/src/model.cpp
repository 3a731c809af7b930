#include "mvlstm/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mvlstm/parallel.hpp"
#include "mvlstm/rng.hpp"

namespace mvlstm {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

constexpr double kMomentum = 0.9;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

constexpr std::uint64_t kStreamCell = 0x63656c6c;
constexpr std::uint64_t kStreamReadout = 0x726f7574;
constexpr std::uint64_t kStreamShuffle = 0x73687566;
constexpr std::uint64_t kStreamTau = 0x746175;

// flat views over every trainable buffer, cell tensors first (canonical
// order), then the readout; parameter and gradient layouts always agree
std::vector<std::vector<double>*> trainable_buffers(ClassifierParams& p) {
    std::vector<std::vector<double>*> out;
    for_each_tensor(p.cell, [&](std::string_view, auto& t) { out.push_back(&t.data); });
    out.push_back(&p.W_out.data);
    out.push_back(&p.b_out.data);
    return out;
}

std::vector<const std::vector<double>*> trainable_buffers(const ClassifierGradients& g) {
    std::vector<const std::vector<double>*> out;
    for_each_tensor(g.d_cell, [&](std::string_view, const auto& t) { out.push_back(&t.data); });
    out.push_back(&g.d_W_out.data);
    out.push_back(&g.d_b_out.data);
    return out;
}

std::vector<std::vector<double>*> trainable_buffers(ClassifierGradients& g) {
    std::vector<std::vector<double>*> out;
    for_each_tensor(g.d_cell, [&](std::string_view, auto& t) { out.push_back(&t.data); });
    out.push_back(&g.d_W_out.data);
    out.push_back(&g.d_b_out.data);
    return out;
}

std::size_t argmax(const Vector& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace

ClassifierParams init_classifier(std::size_t input_dim, std::size_t hidden_dim,
                                 std::size_t num_classes, Variant variant, std::uint64_t seed,
                                 const CellOptions& options) {
    if (num_classes < 2) fail("init_classifier: need at least 2 classes");
    ClassifierParams p;
    p.cell = init_params(input_dim, hidden_dim, variant, derive_seed(seed, kStreamCell), options);
    p.W_out = Matrix(num_classes, hidden_dim);
    p.b_out = Vector(num_classes);
    Rng rng(derive_seed(seed, kStreamReadout));
    const double s = std::sqrt(6.0 / static_cast<double>(num_classes + hidden_dim));
    for (double& w : p.W_out.data) w = rng.uniform(-s, s);
    return p;
}

std::size_t resolve_tau(const TauSpec& spec, std::size_t num_frames, std::uint64_t run_seed,
                        std::uint64_t sample_seed) {
    if (num_frames == 0) fail("resolve_tau: empty sequence");
    switch (spec.policy) {
        case TauPolicy::first_frame:
            return 0;
        case TauPolicy::fixed:
            if (spec.fixed_index >= num_frames) {
                std::ostringstream msg;
                msg << "resolve_tau: fixed tau " << spec.fixed_index << " out of range for "
                    << num_frames << " frames";
                fail(msg.str());
            }
            return spec.fixed_index;
        case TauPolicy::random_per_sequence:
            return static_cast<std::size_t>(derive_seed(run_seed, kStreamTau, sample_seed) %
                                            num_frames);
    }
    fail("resolve_tau: unknown policy");
}

Vector encode(const ClassifierParams& params, const SequenceSample& sample, std::size_t tau,
              ReadoutPool pool) {
    if (sample.frames.empty()) fail("encode: sample has no frames");
    if (tau >= sample.frames.size()) fail("encode: tau out of range");
    const ForwardResult fwd = forward_sequence(params.cell, sample.frames, sample.frames[tau]);
    Vector logits = params.b_out;
    add_matvec(logits, params.W_out, readout_features(fwd, pool));
    return logits;
}

LossGrad softmax_cross_entropy(const Vector& logits, std::size_t label) {
    if (label >= logits.size()) fail("softmax_cross_entropy: label out of range");
    const double peak = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    Vector p(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - peak);
        z += p[i];
    }
    LossGrad out;
    out.loss = -(logits[label] - peak - std::log(z));
    out.d_logits = Vector(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        out.d_logits[i] = p[i] / z - (i == label ? 1.0 : 0.0);
    return out;
}

std::string_view to_string(ReadoutPool p) {
    return p == ReadoutPool::mean ? "mean" : "final";
}

ReadoutPool pool_from_string(std::string_view s) {
    if (s == "final") return ReadoutPool::final_step;
    if (s == "mean") return ReadoutPool::mean;
    fail("unknown readout pool '" + std::string(s) + "' (expected final or mean)");
}

Vector readout_features(const ForwardResult& forward, ReadoutPool pool) {
    if (pool == ReadoutPool::final_step) return final_h(forward.final_state);
    const std::size_t steps = forward.caches.size();
    Vector mean(final_h(forward.final_state).size(), 0.0);
    for (const StepCache& cache : forward.caches) {
        const Vector h = hadamard(cache.o, cache.tanh_c);
        add_in_place(mean, h);
    }
    for (double& v : mean.data) v /= static_cast<double>(steps);
    return mean;
}

std::string_view to_string(OptimizerKind k) {
    return k == OptimizerKind::adam ? "adam" : "sgd_momentum";
}

OptimizerKind optimizer_from_string(std::string_view s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd_momentum") return OptimizerKind::sgd_momentum;
    fail("unknown optimizer '" + std::string(s) + "' (expected adam or sgd_momentum)");
}

ClassifierGradients zero_gradients(const ClassifierParams& params) {
    ClassifierGradients g;
    g.d_cell = zeros_like(params.cell);
    g.d_W_out = Matrix(params.W_out.rows, params.W_out.cols);
    g.d_b_out = Vector(params.b_out.size());
    return g;
}

void accumulate(ClassifierGradients& acc, const ClassifierGradients& g) {
    auto dst = trainable_buffers(acc);
    auto src = trainable_buffers(static_cast<const ClassifierGradients&>(g));
    if (dst.size() != src.size()) fail("accumulate: gradient layouts differ");
    for (std::size_t s = 0; s < dst.size(); ++s) {
        if (dst[s]->size() != src[s]->size()) fail("accumulate: gradient shapes differ");
        for (std::size_t k = 0; k < dst[s]->size(); ++k) (*dst[s])[k] += (*src[s])[k];
    }
}

void scale(ClassifierGradients& g, double factor) {
    for (auto* buf : trainable_buffers(g))
        for (double& v : *buf) v *= factor;
}

double clip_global_norm(ClassifierGradients& g, double max_norm) {
    double sq = 0.0;
    for (const auto* buf : trainable_buffers(static_cast<const ClassifierGradients&>(g)))
        for (double v : *buf) sq += v * v;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) scale(g, max_norm / norm);
    return norm;
}

ClassifierGradients classifier_backward(const ClassifierParams& params,
                                        const ForwardResult& forward, const Vector& d_logits,
                                        ReadoutPool pool) {
    ClassifierGradients g = zero_gradients(params);
    accumulate_outer(g.d_W_out, d_logits, readout_features(forward, pool));
    g.d_b_out = d_logits;

    LossSeed seed;
    const Vector d_features = matvec_transposed(params.W_out, d_logits);
    if (pool == ReadoutPool::final_step) {
        seed.d_h = d_features;
    } else {
        const std::size_t steps = forward.caches.size();
        Vector per_step = d_features;
        for (double& v : per_step.data) v /= static_cast<double>(steps);
        seed.d_h = Vector(d_features.size(), 0.0);
        seed.d_h_per_step.assign(steps, per_step);
    }
    const Gradients cell_grads = backward_sequence(params.cell, forward.caches, seed);
    g.d_cell = cell_grads.by_param;
    return g;
}

void optimizer_step(OptimizerState& state, ClassifierParams& params,
                    const ClassifierGradients& grads, const TrainConfig& config) {
    auto weights = trainable_buffers(params);
    auto gs = trainable_buffers(grads);
    if (weights.size() != gs.size()) fail("optimizer_step: layouts differ");

    if (state.first.empty()) {
        state.first.resize(weights.size());
        state.second.resize(weights.size());
        for (std::size_t s = 0; s < weights.size(); ++s) {
            state.first[s].assign(weights[s]->size(), 0.0);
            if (config.optimizer == OptimizerKind::adam)
                state.second[s].assign(weights[s]->size(), 0.0);
        }
    }

    const double lr = config.learning_rate;
    if (config.optimizer == OptimizerKind::sgd_momentum) {
        for (std::size_t s = 0; s < weights.size(); ++s) {
            for (std::size_t k = 0; k < weights[s]->size(); ++k) {
                double& vel = state.first[s][k];
                vel = kMomentum * vel + (*gs[s])[k];
                (*weights[s])[k] -= lr * vel;
            }
        }
    } else {
        state.step_count += 1;
        const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step_count));
        const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step_count));
        for (std::size_t s = 0; s < weights.size(); ++s) {
            for (std::size_t k = 0; k < weights[s]->size(); ++k) {
                const double g = (*gs[s])[k];
                double& m = state.first[s][k];
                double& v = state.second[s][k];
                m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
                v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g * g;
                (*weights[s])[k] -= lr * (m / c1) / (std::sqrt(v / c2) + kAdamEps);
            }
        }
    }
    // keep constrained peephole entries at zero regardless of optimizer math
    apply_structural_masks(params.cell);
}

TrainResult train(std::span<const SequenceSample> dataset, Variant variant,
                  std::size_t hidden_dim, const TrainConfig& config,
                  const CellOptions& options, std::size_t num_classes) {
    if (dataset.empty()) fail("train: empty dataset");
    if (config.learning_rate <= 0.0) fail("train: learning rate must be positive");
    if (config.epochs < 1) fail("train: need at least one epoch");
    if (config.batch_size < 1) fail("train: batch size must be >= 1");

    const std::size_t input_dim = dataset[0].frames.empty() ? 0 : dataset[0].frames[0].size();
    std::size_t max_label = 0;
    for (const SequenceSample& s : dataset) {
        if (s.frames.empty()) fail("train: sample with no frames");
        for (const Vector& f : s.frames)
            if (f.size() != input_dim) fail("train: inconsistent frame dims in dataset");
        max_label = std::max(max_label, s.label);
    }
    if (num_classes == 0) num_classes = max_label + 1;
    if (max_label >= num_classes) fail("train: label exceeds the declared class count");
    if (num_classes < 2) fail("train: need at least 2 classes");

    TrainResult result;
    result.params = init_classifier(input_dim, hidden_dim, num_classes, variant, config.seed,
                                    options);
    OptimizerState opt_state;

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        Rng shuffle_rng(derive_seed(config.seed, kStreamShuffle, epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t correct = 0;

        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(begin + config.batch_size, order.size());
            ClassifierGradients batch = zero_gradients(result.params);
            for (std::size_t n = begin; n < end; ++n) {
                const SequenceSample& sample = dataset[order[n]];
                const std::size_t tau =
                    resolve_tau(config.tau, sample.frames.size(), config.seed, sample.seed);
                const ForwardResult fwd =
                    forward_sequence(result.params.cell, sample.frames, sample.frames[tau]);
                Vector logits = result.params.b_out;
                add_matvec(logits, result.params.W_out, readout_features(fwd, config.pool));
                const LossGrad lg = softmax_cross_entropy(logits, sample.label);
                if (!std::isfinite(lg.loss)) {
                    std::ostringstream msg;
                    msg << "train: non-finite loss at epoch " << epoch << ", sample "
                        << order[n] << " (lr too high or data unscaled?)";
                    throw std::runtime_error(msg.str());
                }
                loss_sum += lg.loss;
                if (argmax(logits) == sample.label) ++correct;
                accumulate(batch,
                           classifier_backward(result.params, fwd, lg.d_logits, config.pool));
            }
            scale(batch, 1.0 / static_cast<double>(end - begin));
            clip_global_norm(batch, config.grad_clip);
            optimizer_step(opt_state, result.params, batch, config);
        }

        const auto finished = std::chrono::steady_clock::now();
        EpochMetrics m;
        m.epoch = epoch;
        m.mean_loss = loss_sum / static_cast<double>(dataset.size());
        m.train_accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
        m.wall_time_ms =
            std::chrono::duration<double, std::milli>(finished - started).count();
        result.history.push_back(m);
    }
    return result;
}

EvalResult evaluate(const ClassifierParams& params, std::span<const SequenceSample> dataset,
                    const TauSpec& tau, std::uint64_t run_seed, ReadoutPool pool) {
    if (dataset.empty()) fail("evaluate: empty dataset");
    const std::size_t C = params.num_classes();

    std::vector<std::size_t> predicted(dataset.size());
    parallel_for(dataset.size(), [&](std::size_t n) {
        const SequenceSample& sample = dataset[n];
        const std::size_t t = resolve_tau(tau, sample.frames.size(), run_seed, sample.seed);
        predicted[n] = argmax(encode(params, sample, t, pool));
    });

    EvalResult result;
    result.confusion.assign(C, std::vector<std::size_t>(C, 0));
    result.total = dataset.size();
    for (std::size_t n = 0; n < dataset.size(); ++n) {
        const std::size_t truth = dataset[n].label;
        if (truth >= C) fail("evaluate: sample label exceeds the model's class count");
        result.confusion[truth][predicted[n]] += 1;
        if (truth == predicted[n]) ++result.correct;
    }
    result.recognition_rate =
        static_cast<double>(result.correct) / static_cast<double>(result.total);
    return result;
}

}  // namespace mvlstm
