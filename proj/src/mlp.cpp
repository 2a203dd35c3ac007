#include "gbdt2nn/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gbdt2nn/binary_io.hpp"
#include "gbdt2nn/errors.hpp"
#include "gbdt2nn/rng.hpp"

namespace gbdt2nn {

namespace {

void apply_activation(Activation act, const Matrix& pre, Matrix& out) {
    if (act == Activation::ReLU) {
        out = pre.cwiseMax(0.0);
    } else {
        out = pre;
    }
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double logistic(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

std::string to_string(Loss loss) { return loss == Loss::Mse ? "mse" : "bce_with_logits"; }
std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "sgd" : "adam"; }

void TrainConfig::validate() const {
    if (epochs < 0) throw UsageError("epochs must be >= 0");
    if (batch_size < 1) throw UsageError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be > 0");
    if (optimizer == OptimizerKind::Adam) {
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
            throw UsageError("invalid Adam hyperparameters");
        }
    }
}

Mlp::Mlp(std::size_t input_dim, std::vector<DenseLayer> layers) : input_dim_(input_dim), layers_(std::move(layers)) {
    check_chain();
}

void Mlp::check_chain() const {
    if (layers_.empty()) throw UsageError("an MLP needs at least one layer");
    auto width = static_cast<Eigen::Index>(input_dim_);
    for (const auto& layer : layers_) {
        if (layer.weight.cols() != width || layer.bias.size() != layer.weight.rows()) {
            throw UsageError("MLP layer dimensions do not chain");
        }
        width = layer.weight.rows();
    }
}

Mlp Mlp::create(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t output_dim,
                Activation output_activation, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<DenseLayer> layers;
    std::size_t fan_in = input_dim;
    auto add = [&](std::size_t fan_out, Activation act) {
        DenseLayer layer;
        layer.activation = act;
        layer.weight.resize(static_cast<Eigen::Index>(fan_out), static_cast<Eigen::Index>(fan_in));
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
            for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = rng.uniform(-limit, limit);
        }
        layer.bias = Vector::Zero(static_cast<Eigen::Index>(fan_out));
        layers.push_back(std::move(layer));
        fan_in = fan_out;
    };
    for (auto h : hidden) add(h, Activation::ReLU);
    add(output_dim, output_activation);
    return Mlp(input_dim, std::move(layers));
}

std::size_t Mlp::output_dim() const {
    return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows());
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    return n;
}

Vector Mlp::forward(std::span<const double> x) const {
    if (x.size() != input_dim_) {
        throw UsageError("MLP input has " + std::to_string(x.size()) + " values, expected " + std::to_string(input_dim_));
    }
    Matrix row = Eigen::Map<const Eigen::Matrix<double, 1, Eigen::Dynamic>>(x.data(), static_cast<Eigen::Index>(x.size()));
    return forward(row).row(0).transpose();
}

Matrix Mlp::forward(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != input_dim_) throw UsageError("MLP batch input width mismatch");
    Matrix a = x;
    Matrix pre;
    for (const auto& layer : layers_) {
        pre = a * layer.weight.transpose();
        pre.rowwise() += layer.bias.transpose();
        apply_activation(layer.activation, pre, a);
    }
    return a;
}

Matrix Mlp::forward(const Matrix& x, ForwardCache& cache) const {
    if (static_cast<std::size_t>(x.cols()) != input_dim_) throw UsageError("MLP batch input width mismatch");
    cache.inputs.resize(layers_.size());
    cache.pre.resize(layers_.size());
    Matrix a = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        cache.inputs[l] = a;
        cache.pre[l] = a * layer.weight.transpose();
        cache.pre[l].rowwise() += layer.bias.transpose();
        apply_activation(layer.activation, cache.pre[l], a);
    }
    return a;
}

Matrix Mlp::backward(const ForwardCache& cache, const Matrix& d_output, MlpGradients& grads) const {
    grads.weight.resize(layers_.size());
    grads.bias.resize(layers_.size());
    Matrix delta = d_output;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const auto& layer = layers_[l];
        if (layer.activation == Activation::ReLU) {
            // Subgradient 0 at the kink.
            delta = delta.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
        }
        grads.weight[l] = delta.transpose() * cache.inputs[l];
        grads.bias[l] = delta.colwise().sum().transpose();
        delta = delta * layer.weight;
    }
    return delta;
}

std::vector<double> Mlp::parameters() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& layer : layers_) {
        flat.insert(flat.end(), layer.weight.data(), layer.weight.data() + layer.weight.size());
        flat.insert(flat.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
    }
    return flat;
}

void Mlp::set_parameters(std::span<const double> flat) {
    if (flat.size() != parameter_count()) throw UsageError("parameter vector has the wrong length");
    auto it = flat.begin();
    for (auto& layer : layers_) {
        std::copy_n(it, layer.weight.size(), layer.weight.data());
        it += layer.weight.size();
        std::copy_n(it, layer.bias.size(), layer.bias.data());
        it += layer.bias.size();
    }
}

bool Mlp::all_finite() const {
    return std::all_of(layers_.begin(), layers_.end(), [](const DenseLayer& l) {
        return l.weight.allFinite() && l.bias.allFinite();
    });
}

void Mlp::write(io::Writer& w) const {
    w.u64(input_dim_);
    w.u64(layers_.size());
    for (const auto& layer : layers_) {
        w.u8(static_cast<std::uint8_t>(layer.activation));
        w.u64(static_cast<std::uint64_t>(layer.weight.rows()));
        w.u64(static_cast<std::uint64_t>(layer.weight.cols()));
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) w.f64(layer.weight.data()[i]);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) w.f64(layer.bias[i]);
    }
}

Mlp Mlp::read(io::Reader& r) {
    const auto input_dim = r.checked_size(r.u64());
    const auto n_layers = r.checked_size(r.u64());
    std::vector<DenseLayer> layers(n_layers);
    for (auto& layer : layers) {
        const auto act = r.u8();
        if (act > 1) throw DataError("unknown activation code in model container");
        layer.activation = static_cast<Activation>(act);
        const auto rows = static_cast<Eigen::Index>(r.checked_size(r.u64()));
        const auto cols = static_cast<Eigen::Index>(r.checked_size(r.u64()));
        layer.weight.resize(rows, cols);
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = r.f64();
        layer.bias.resize(rows);
        for (Eigen::Index i = 0; i < rows; ++i) layer.bias[i] = r.f64();
    }
    try {
        return Mlp(input_dim, std::move(layers));
    } catch (const UsageError& e) {
        throw DataError(std::string("corrupt network in model container: ") + e.what());
    }
}

MlpGradients zero_gradients(const Mlp& net) {
    MlpGradients g;
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        g.weight.push_back(Matrix::Zero(net.layer(l).weight.rows(), net.layer(l).weight.cols()));
        g.bias.push_back(Vector::Zero(net.layer(l).bias.size()));
    }
    return g;
}

double loss_value(Loss loss, const Matrix& output, const Matrix& target) {
    if (output.rows() != target.rows() || output.cols() != target.cols()) throw UsageError("loss shape mismatch");
    const double denom = static_cast<double>(output.rows()) * static_cast<double>(output.cols());
    if (loss == Loss::Mse) return (output - target).squaredNorm() / denom;
    double sum = 0.0;
    for (Eigen::Index c = 0; c < output.cols(); ++c) {
        for (Eigen::Index r = 0; r < output.rows(); ++r) {
            const double z = output(r, c);
            sum += softplus(z) - target(r, c) * z;
        }
    }
    return sum / denom;
}

Matrix loss_gradient(Loss loss, const Matrix& output, const Matrix& target) {
    const double denom = static_cast<double>(output.rows()) * static_cast<double>(output.cols());
    if (loss == Loss::Mse) return (2.0 / denom) * (output - target);
    Matrix g(output.rows(), output.cols());
    for (Eigen::Index c = 0; c < output.cols(); ++c) {
        for (Eigen::Index r = 0; r < output.rows(); ++r) g(r, c) = (logistic(output(r, c)) - target(r, c)) / denom;
    }
    return g;
}

std::vector<ParamRef> param_refs(Mlp& net, const MlpGradients& grads) {
    std::vector<ParamRef> refs;
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        auto& layer = net.layer(l);
        refs.push_back({{layer.weight.data(), static_cast<std::size_t>(layer.weight.size())},
                        {grads.weight[l].data(), static_cast<std::size_t>(grads.weight[l].size())}});
        refs.push_back({{layer.bias.data(), static_cast<std::size_t>(layer.bias.size())},
                        {grads.bias[l].data(), static_cast<std::size_t>(grads.bias[l].size())}});
    }
    return refs;
}

Optimizer::Optimizer(const TrainConfig& c) : c_(c) { c_.validate(); }

void Optimizer::step(std::span<const ParamRef> params) {
    std::size_t total = 0;
    for (const auto& p : params) {
        if (p.value.size() != p.grad.size()) throw UsageError("parameter/gradient size mismatch");
        total += p.value.size();
    }
    ++t_;
    if (c_.optimizer == OptimizerKind::Sgd) {
        for (const auto& p : params) {
            for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= c_.learning_rate * p.grad[i];
        }
        return;
    }
    if (m_.empty()) {
        m_.assign(total, 0.0);
        v_.assign(total, 0.0);
    } else if (m_.size() != total) {
        throw UsageError("optimizer parameter layout changed between steps");
    }
    const double t = static_cast<double>(t_);
    const double bias1 = 1.0 - std::pow(c_.beta1, t);
    const double bias2 = 1.0 - std::pow(c_.beta2, t);
    std::size_t k = 0;
    for (const auto& p : params) {
        for (std::size_t i = 0; i < p.value.size(); ++i, ++k) {
            const double g = p.grad[i];
            m_[k] = c_.beta1 * m_[k] + (1.0 - c_.beta1) * g;
            v_[k] = c_.beta2 * v_[k] + (1.0 - c_.beta2) * g * g;
            const double m_hat = m_[k] / bias1;
            const double v_hat = v_[k] / bias2;
            p.value[i] -= c_.learning_rate * m_hat / (std::sqrt(v_hat) + c_.epsilon);
        }
    }
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

MlpTrainer::MlpTrainer(Mlp& net, const Matrix& inputs, const Matrix& targets, const TrainConfig& c)
    : net_(net), inputs_(inputs), targets_(targets), c_(c), optimizer_(c), shuffle_seed_(c.seed) {
    if (inputs.rows() != targets.rows()) throw UsageError("input and target row counts differ");
    if (static_cast<std::size_t>(inputs.cols()) != net.input_dim()) throw UsageError("input width does not match the network");
    if (static_cast<std::size_t>(targets.cols()) != net.output_dim()) throw UsageError("target width does not match the network");
    if (inputs.rows() == 0) throw UsageError("cannot train on zero samples");
    order_.resize(static_cast<std::size_t>(inputs.rows()));
}

double MlpTrainer::run_epoch() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng(mix_seed(shuffle_seed_, static_cast<std::uint64_t>(epoch_)));
    rng.shuffle(std::span<std::size_t>(order_));

    ForwardCache cache;
    MlpGradients grads;
    double loss_sum = 0.0;
    const std::size_t n = order_.size();
    const auto batch = static_cast<std::size_t>(c_.batch_size);
    for (std::size_t start = 0; start < n; start += batch) {
        const std::span<const std::size_t> rows(order_.data() + start, std::min(batch, n - start));
        const Matrix x = gather_rows(inputs_, rows);
        const Matrix y = gather_rows(targets_, rows);
        const Matrix out = net_.forward(x, cache);
        const double loss = loss_value(c_.loss, out, y);
        if (!std::isfinite(loss)) {
            throw NumericalError("non-finite training loss in epoch " + std::to_string(epoch_ + 1));
        }
        loss_sum += loss * static_cast<double>(rows.size());
        net_.backward(cache, loss_gradient(c_.loss, out, y), grads);
        const auto refs = param_refs(net_, grads);
        optimizer_.step(refs);
    }
    ++epoch_;
    return loss_sum / static_cast<double>(n);
}

std::vector<double> train(Mlp& net, const Matrix& inputs, const Matrix& targets, const TrainConfig& c) {
    c.validate();
    if (c.epochs < 1) throw UsageError("train needs epochs >= 1");
    MlpTrainer trainer(net, inputs, targets, c);
    std::vector<double> history;
    for (int e = 0; e < c.epochs; ++e) history.push_back(trainer.run_epoch());
    return history;
}

double gradient_check(const Mlp& net, std::span<const double> x, std::span<const double> target, Loss loss) {
    if (x.size() != net.input_dim() || target.size() != net.output_dim()) throw UsageError("gradient_check shape mismatch");
    const Matrix xin = Eigen::Map<const Eigen::Matrix<double, 1, Eigen::Dynamic>>(x.data(), static_cast<Eigen::Index>(x.size()));
    const Matrix tgt = Eigen::Map<const Eigen::Matrix<double, 1, Eigen::Dynamic>>(target.data(), static_cast<Eigen::Index>(target.size()));

    ForwardCache cache;
    MlpGradients grads;
    const Matrix out = net.forward(xin, cache);
    net.backward(cache, loss_gradient(loss, out, tgt), grads);
    Mlp probe = net;
    std::vector<double> analytic;
    {
        auto refs = param_refs(probe, grads);
        for (const auto& r : refs) analytic.insert(analytic.end(), r.grad.begin(), r.grad.end());
    }

    const double h = 1e-5;
    std::vector<double> params = net.parameters();
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        probe.set_parameters(params);
        const double plus = loss_value(loss, probe.forward(xin), tgt);
        params[i] = saved - h;
        probe.set_parameters(params);
        const double minus = loss_value(loss, probe.forward(xin), tgt);
        params[i] = saved;
        const double numeric = (plus - minus) / (2.0 * h);
        const double a = analytic[i];
        const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace gbdt2nn
