#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mvlstm/autodiff.hpp"
#include "mvlstm/cells.hpp"
#include "mvlstm/data.hpp"

namespace mvlstm {

// Sequence classifier: cell encoder -> linear readout on the final dynamics
// latent features -> softmax cross-entropy.
struct ClassifierParams {
    CellParams cell;
    Matrix W_out;  // C x H
    Vector b_out;  // C

    std::size_t num_classes() const { return W_out.rows; }
};

ClassifierParams init_classifier(std::size_t input_dim, std::size_t hidden_dim,
                                 std::size_t num_classes, Variant variant, std::uint64_t seed,
                                 const CellOptions& options = {});

enum class ReadoutPool { final_step, mean };

std::string_view to_string(ReadoutPool p);
ReadoutPool pool_from_string(std::string_view s);

enum class TauPolicy { first_frame, fixed, random_per_sequence };

struct TauSpec {
    TauPolicy policy = TauPolicy::first_frame;
    std::size_t fixed_index = 0;
};

// random_per_sequence draws a per-sample index from (run_seed, sample_seed),
// so a sample keeps its tau for the whole run and reruns reproduce it.
std::size_t resolve_tau(const TauSpec& spec, std::size_t num_frames, std::uint64_t run_seed,
                        std::uint64_t sample_seed);

// logits = W_out h + b_out with h the final latent features (default) or the
// per-timestep mean; mode-var cells receive frames[tau] as x_hat
Vector encode(const ClassifierParams& params, const SequenceSample& sample, std::size_t tau,
              ReadoutPool pool = ReadoutPool::final_step);

// readout feature for a completed forward pass
Vector readout_features(const ForwardResult& forward, ReadoutPool pool);

struct LossGrad {
    double loss = 0.0;
    Vector d_logits;
};

// -log softmax(logits)[label] with max-subtraction; d_logits = p - onehot
LossGrad softmax_cross_entropy(const Vector& logits, std::size_t label);

enum class OptimizerKind { sgd_momentum, adam };

std::string_view to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view s);

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t epochs = 50;
    std::size_t batch_size = 8;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::uint64_t seed = 0;
    double grad_clip = 5.0;  // global-norm threshold; <= 0 disables
    TauSpec tau;
    ReadoutPool pool = ReadoutPool::final_step;
};

struct ClassifierGradients {
    CellParams d_cell;
    Matrix d_W_out;
    Vector d_b_out;
};

ClassifierGradients zero_gradients(const ClassifierParams& params);
void accumulate(ClassifierGradients& acc, const ClassifierGradients& g);
void scale(ClassifierGradients& g, double factor);
// scales gradients to the threshold when the global L2 norm exceeds it;
// returns the pre-clip norm
double clip_global_norm(ClassifierGradients& g, double max_norm);

// d_logits -> gradients of readout and cell (through the pooled features)
ClassifierGradients classifier_backward(const ClassifierParams& params,
                                        const ForwardResult& forward, const Vector& d_logits,
                                        ReadoutPool pool = ReadoutPool::final_step);

// Slot-aligned first/second moment buffers; momentum and Adam share storage.
class OptimizerState {
  public:
    std::vector<std::vector<double>> first;
    std::vector<std::vector<double>> second;
    std::size_t step_count = 0;
};

// SGD with momentum 0.9 or Adam (beta1 0.9, beta2 0.999, eps 1e-8)
void optimizer_step(OptimizerState& state, ClassifierParams& params,
                    const ClassifierGradients& grads, const TrainConfig& config);

struct EpochMetrics {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
    double wall_time_ms = 0.0;
};

struct TrainResult {
    ClassifierParams params;
    std::vector<EpochMetrics> history;
};

// Seeded-shuffle minibatch BPTT; loss on the final step only; fully
// reproducible given the config seed. Aborts with a diagnostic if the loss
// leaves the finite range. num_classes = 0 infers the count from the labels
// present; pass it explicitly when training on a subset.
TrainResult train(std::span<const SequenceSample> dataset, Variant variant,
                  std::size_t hidden_dim, const TrainConfig& config,
                  const CellOptions& options = {}, std::size_t num_classes = 0);

struct EvalResult {
    double recognition_rate = 0.0;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    std::size_t total = 0;
    std::size_t correct = 0;
};

EvalResult evaluate(const ClassifierParams& params, std::span<const SequenceSample> dataset,
                    const TauSpec& tau, std::uint64_t run_seed,
                    ReadoutPool pool = ReadoutPool::final_step);

}  // namespace mvlstm
