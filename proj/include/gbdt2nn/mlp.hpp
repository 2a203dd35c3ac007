#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gbdt2nn {

namespace io {
class Writer;
class Reader;
}  // namespace io

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation : std::uint8_t { ReLU, Identity };
enum class Loss : std::uint8_t { Mse, BceWithLogits };
enum class OptimizerKind : std::uint8_t { Sgd, Adam };

std::string to_string(Loss loss);
std::string to_string(OptimizerKind kind);

struct TrainConfig {
    int epochs = 30;
    int batch_size = 64;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    Loss loss = Loss::Mse;

    void validate() const;
};

/// Dense layer: y = act(W a + b), W is (out x in).
struct DenseLayer {
    Matrix weight;
    Vector bias;
    Activation activation = Activation::Identity;
};

/// Gradients laid out exactly like the network's layers.
struct MlpGradients {
    std::vector<Matrix> weight;
    std::vector<Vector> bias;
};

/// Activations kept by a cached forward pass for backprop. Rows are samples.
struct ForwardCache {
    std::vector<Matrix> inputs;  // inputs[l] feeds layer l
    std::vector<Matrix> pre;     // pre-activation of layer l
};

/// Feed-forward stack of dense layers.
class Mlp {
public:
    Mlp() = default;
    Mlp(std::size_t input_dim, std::vector<DenseLayer> layers);

    /// Glorot-uniform weights, zero biases. `hidden` ReLU layers then one `output_activation` layer.
    static Mlp create(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t output_dim,
                      Activation output_activation, std::uint64_t seed);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const;
    std::size_t n_layers() const { return layers_.size(); }
    const DenseLayer& layer(std::size_t l) const { return layers_[l]; }
    DenseLayer& layer(std::size_t l) { return layers_[l]; }
    std::size_t parameter_count() const;

    Vector forward(std::span<const double> x) const;
    /// Batch forward; rows of `x` are samples.
    Matrix forward(const Matrix& x) const;
    Matrix forward(const Matrix& x, ForwardCache& cache) const;

    /// Backprop of d(loss)/d(output) through a cached pass. Overwrites `grads`
    /// and returns d(loss)/d(input).
    Matrix backward(const ForwardCache& cache, const Matrix& d_output, MlpGradients& grads) const;

    /// Flattened parameters in layer order (weight column-major, then bias).
    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> flat);

    bool all_finite() const;

    void write(io::Writer& w) const;
    static Mlp read(io::Reader& r);

private:
    void check_chain() const;

    std::size_t input_dim_ = 0;
    std::vector<DenseLayer> layers_;
};

MlpGradients zero_gradients(const Mlp& net);

/// Mean loss over all samples; per sample the mean over output columns.
double loss_value(Loss loss, const Matrix& output, const Matrix& target);
/// d(loss_value)/d(output).
Matrix loss_gradient(Loss loss, const Matrix& output, const Matrix& target);

/// A parameter tensor paired with its gradient, for optimizers.
struct ParamRef {
    std::span<double> value;
    std::span<const double> grad;
};

std::vector<ParamRef> param_refs(Mlp& net, const MlpGradients& grads);

/// SGD or Adam over an ordered list of parameter tensors. The list layout must
/// be identical on every step.
class Optimizer {
public:
    explicit Optimizer(const TrainConfig& c);
    void step(std::span<const ParamRef> params);
    std::uint64_t steps() const { return t_; }

private:
    TrainConfig c_;
    std::uint64_t t_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

/// Mini-batch trainer with a fixed seeded shuffle order. Resumable per epoch.
class MlpTrainer {
public:
    MlpTrainer(Mlp& net, const Matrix& inputs, const Matrix& targets, const TrainConfig& c);

    /// One pass over the data; returns the mean per-sample loss seen during the epoch.
    double run_epoch();
    int epochs_done() const { return epoch_; }

private:
    Mlp& net_;
    const Matrix& inputs_;
    const Matrix& targets_;
    TrainConfig c_;
    Optimizer optimizer_;
    std::vector<std::size_t> order_;
    std::uint64_t shuffle_seed_;
    int epoch_ = 0;
};

/// Trains `net` in place and returns the per-epoch mean training loss.
std::vector<double> train(Mlp& net, const Matrix& inputs, const Matrix& targets, const TrainConfig& c);

/// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
/// numeric by central differences with step 1e-5.
double gradient_check(const Mlp& net, std::span<const double> x, std::span<const double> target, Loss loss);

/// Row-gathers `rows` of `m`.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);

}  // namespace gbdt2nn
