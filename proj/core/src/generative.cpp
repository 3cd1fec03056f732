#include "memvi/generative.hpp"

#include <cmath>
#include <numeric>

namespace memvi {
namespace {

double activate(Activation a, double x) noexcept {
    switch (a) {
        case Activation::tanh: return std::tanh(x);
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::identity: break;
    }
    return x;
}

// Derivative expressed through the pre-activation value.
double activate_derivative(Activation a, double pre) noexcept {
    switch (a) {
        case Activation::tanh: {
            const double t = std::tanh(pre);
            return 1.0 - t * t;
        }
        case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::identity: break;
    }
    return 1.0;
}

void require_input(const Layer& layer, const Vector& h_in, const char* what) {
    if (h_in.dim() != layer.in_dim()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + layer.weight.shape_string() + " vs " +
                         shape_string(h_in));
    }
}

Vector pre_activation(const Layer& layer, const Vector& h_in) {
    Vector pre = matvec(layer.weight, h_in);
    pre += layer.bias;
    return pre;
}

// dL/d(pre-activation) given dL/d(output).
Vector pre_activation_grad(const Layer& layer, const Vector& pre, const Vector& upstream) {
    Vector g(pre.dim());
    for (std::size_t i = 0; i < pre.dim(); ++i) g[i] = upstream[i] * activate_derivative(layer.activation, pre[i]);
    return g;
}

struct LayerGrad {
    Matrix weight;
    Vector bias;
};

// Backward pass for one sample: accumulates parameter gradients and returns
// dL/d(h_in).
Vector layer_backward(const Layer& layer, const Vector& h_in, const Vector& upstream, LayerGrad& grad) {
    const Vector pre = pre_activation(layer, h_in);
    const Vector g = pre_activation_grad(layer, pre, upstream);
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
        auto row = grad.weight.row(r);
        for (std::size_t c = 0; c < layer.in_dim(); ++c) row[c] += g[r] * h_in[c];
        grad.bias[r] += g[r];
    }
    return matvec_transposed(layer.weight, g);
}

LayerGrad zero_grad(const Layer& layer) {
    return {Matrix(layer.out_dim(), layer.in_dim()), Vector(layer.out_dim())};
}

void apply_grad(Layer& layer, const LayerGrad& grad, double lr) {
    auto w = layer.weight.data();
    const auto gw = grad.weight.data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gw[i];
    axpy(-lr, grad.bias, layer.bias);
}

// Forward through an ordered list of layers, keeping each layer's input.
std::vector<Vector> forward_inputs(const std::vector<Layer>& layers, const Vector& x, Vector& out) {
    std::vector<Vector> inputs;
    inputs.reserve(layers.size());
    Vector h = x;
    for (const auto& layer : layers) {
        inputs.push_back(h);
        h = layer_forward(layer, h);
    }
    out = std::move(h);
    return inputs;
}

}  // namespace

std::string_view to_string(Activation a) noexcept {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
        case Activation::identity: break;
    }
    return "identity";
}

Activation parse_activation(std::string_view name) {
    if (name == "identity") return Activation::identity;
    if (name == "tanh") return Activation::tanh;
    if (name == "relu") return Activation::relu;
    throw std::invalid_argument("unknown activation '" + std::string(name) + "' (expected identity, tanh or relu)");
}

void Layer::validate() const {
    if (bias.dim() != weight.rows()) {
        throw ShapeError("Layer: weight " + weight.shape_string() + " inconsistent with bias " + shape_string(bias));
    }
}

Layer Layer::random(std::size_t in, std::size_t out, Activation act, RngStream& rng) {
    Layer layer = zeros(in, out, act);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& w : layer.weight.data()) w = scale * rng.normal();
    return layer;
}

Layer Layer::zeros(std::size_t in, std::size_t out, Activation act) {
    return Layer{Matrix(out, in), Vector(out), act};
}

Vector layer_forward(const Layer& layer, const Vector& h_in) {
    require_input(layer, h_in, "layer_forward");
    Vector out = pre_activation(layer, h_in);
    for (auto& v : out) v = activate(layer.activation, v);
    return out;
}

Vector layer_vjp(const Layer& layer, const Vector& h_in, const Vector& upstream) {
    require_input(layer, h_in, "layer_vjp");
    if (upstream.dim() != layer.out_dim()) {
        throw ShapeError("layer_vjp: upstream " + shape_string(upstream) + " vs layer " + layer.weight.shape_string());
    }
    const Vector pre = pre_activation(layer, h_in);
    return matvec_transposed(layer.weight, pre_activation_grad(layer, pre, upstream));
}

LayerStack::LayerStack(std::vector<Layer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ShapeError("LayerStack: depth must be at least 1");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        layers_[l].validate();
        if (l + 1 < layers_.size() && layers_[l].in_dim() != layers_[l + 1].out_dim()) {
            throw ShapeError("LayerStack: layer " + std::to_string(l) + " input " + std::to_string(layers_[l].in_dim()) +
                             " does not chain with layer " + std::to_string(l + 1) + " output " +
                             std::to_string(layers_[l + 1].out_dim()));
        }
    }
}

std::size_t LayerStack::dim(std::size_t l) const {
    if (l > layers_.size()) throw std::out_of_range("LayerStack::dim: level out of range");
    if (l == layers_.size()) return layers_.back().in_dim();
    return layers_[l].out_dim();
}

Decoded decode(const LayerStack& stack, const Vector& z) {
    if (z.dim() != stack.latent_dim()) {
        throw ShapeError("decode: latent " + shape_string(z) + " vs stack input (" + std::to_string(stack.latent_dim()) +
                         ")");
    }
    Decoded out;
    out.predictions.resize(stack.depth());
    const Vector* h = &z;
    for (std::size_t l = stack.depth(); l-- > 0;) {
        out.predictions[l] = layer_forward(stack.layer(l), *h);
        h = &out.predictions[l];
    }
    return out;
}

Vector stack_vjp(const LayerStack& stack, const Vector& z, const Vector& upstream) {
    const Decoded d = decode(stack, z);
    if (upstream.dim() != stack.observation_dim()) {
        throw ShapeError("stack_vjp: upstream " + shape_string(upstream) + " vs output (" +
                         std::to_string(stack.observation_dim()) + ")");
    }
    Vector g = upstream;
    for (std::size_t l = 0; l < stack.depth(); ++l) {
        const Vector& input = (l + 1 == stack.depth()) ? z : d.predictions[l + 1];
        g = layer_vjp(stack.layer(l), input, g);
    }
    return g;
}

Vector reconstruction_gradient(const LayerStack& stack, const Vector& z, const Vector& x) {
    const Decoded d = decode(stack, z);
    if (x.dim() != stack.observation_dim()) {
        throw ShapeError("reconstruction_gradient: observation " + shape_string(x) + " vs output (" +
                         std::to_string(stack.observation_dim()) + ")");
    }
    Vector g = d.output() - x;
    for (std::size_t l = 0; l < stack.depth(); ++l) {
        const Vector& input = (l + 1 == stack.depth()) ? z : d.predictions[l + 1];
        g = layer_vjp(stack.layer(l), input, g);
    }
    return g;
}

std::size_t Encoder::input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
std::size_t Encoder::output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

void VaeModel::validate() const {
    if (encoder.layers.empty()) throw ShapeError("VaeModel: encoder has no layers");
    for (std::size_t i = 0; i < encoder.layers.size(); ++i) {
        encoder.layers[i].validate();
        if (i + 1 < encoder.layers.size() && encoder.layers[i].out_dim() != encoder.layers[i + 1].in_dim()) {
            throw ShapeError("VaeModel: encoder layer " + std::to_string(i) + " does not chain");
        }
    }
    if (decoder.depth() == 0) throw ShapeError("VaeModel: decoder has no layers");
    if (encoder.output_dim() != 2 * decoder.latent_dim()) {
        throw ShapeError("VaeModel: encoder output (" + std::to_string(encoder.output_dim()) + ") must be 2 x latent (" +
                         std::to_string(decoder.latent_dim()) + ")");
    }
    if (encoder.input_dim() != decoder.observation_dim()) {
        throw ShapeError("VaeModel: encoder input (" + std::to_string(encoder.input_dim()) +
                         ") must equal decoder output (" + std::to_string(decoder.observation_dim()) + ")");
    }
}

VaeModel make_vae(const VaeArchitecture& arch, RngStream& rng) {
    // dims from latent down to observation
    std::vector<std::size_t> down{arch.latent_dim};
    down.insert(down.end(), arch.hidden.begin(), arch.hidden.end());
    down.push_back(arch.observation_dim);

    RngStream dec_rng = rng.substream("decoder");
    RngStream enc_rng = rng.substream("encoder");

    const std::size_t depth = down.size() - 1;
    std::vector<Layer> dec(depth);
    for (std::size_t i = 0; i < depth; ++i) {
        // i-th application from the top is layer index depth-1-i
        const bool last = (i + 1 == depth);
        dec[depth - 1 - i] =
            Layer::random(down[i], down[i + 1], last ? Activation::identity : arch.hidden_activation, dec_rng);
    }

    std::vector<Layer> enc;
    for (std::size_t i = depth; i-- > 0;) {
        const std::size_t in = down[i + 1];
        const bool last = (i == 0);
        const std::size_t out = last ? 2 * arch.latent_dim : down[i];
        enc.push_back(Layer::random(in, out, last ? Activation::identity : arch.hidden_activation, enc_rng));
    }

    VaeModel vae{Encoder{std::move(enc)}, LayerStack(std::move(dec))};
    vae.validate();
    return vae;
}

Encoded encode(const VaeModel& vae, const Vector& x) {
    if (x.dim() != vae.encoder.input_dim()) {
        throw ShapeError("encode: observation " + shape_string(x) + " vs encoder input (" +
                         std::to_string(vae.encoder.input_dim()) + ")");
    }
    Vector h = x;
    for (const auto& layer : vae.encoder.layers) h = layer_forward(layer, h);
    const std::size_t d = h.dim() / 2;
    Encoded out{Vector(d), Vector(d)};
    for (std::size_t i = 0; i < d; ++i) {
        out.mu[i] = h[i];
        out.logvar[i] = h[d + i];
    }
    return out;
}

double reconstruction_mse(const VaeModel& vae, const std::vector<Vector>& dataset) {
    if (dataset.empty()) return 0.0;
    double total = 0.0;
    for (const auto& x : dataset) {
        const Vector xhat = decode(vae.decoder, encode(vae, x).mu).output();
        total += squared_distance(xhat, x) / static_cast<double>(x.dim());
    }
    return total / static_cast<double>(dataset.size());
}

VaeTrainResult train_vae(VaeModel vae, const std::vector<Vector>& dataset, const VaeTrainOptions& options,
                         RngStream& rng) {
    if (dataset.empty()) throw std::invalid_argument("train_vae: empty dataset");
    if (!(options.learning_rate >= 0.0)) throw std::invalid_argument("train_vae: learning rate must be non-negative");
    vae.validate();
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (dataset[i].dim() != vae.observation_dim()) {
            throw ShapeError("train_vae: sample " + std::to_string(i) + " is " + shape_string(dataset[i]) +
                             ", expected (" + std::to_string(vae.observation_dim()) + ")");
        }
    }

    VaeTrainResult result;
    result.initial_mse = reconstruction_mse(vae, dataset);
    const double lr = options.learning_rate;
    const std::size_t d = vae.latent_dim();
    const std::size_t L = vae.decoder.depth();

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);

        double epoch_loss = 0.0;
        for (std::size_t s = 0; s < order.size(); ++s) {
            const Vector& x = dataset[order[s]];

            Vector enc_out;
            const auto enc_inputs = forward_inputs(vae.encoder.layers, x, enc_out);
            Vector mu(d), logvar(d), eps(d), z(d);
            for (std::size_t j = 0; j < d; ++j) {
                mu[j] = enc_out[j];
                logvar[j] = enc_out[d + j];
                eps[j] = rng.normal();
                z[j] = mu[j] + std::exp(0.5 * logvar[j]) * eps[j];
            }

            const Decoded dec = decode(vae.decoder, z);
            const Vector residual = dec.output() - x;
            double kl = 0.0;
            for (std::size_t j = 0; j < d; ++j) kl += 0.5 * (mu[j] * mu[j] + std::exp(logvar[j]) - 1.0 - logvar[j]);
            const double loss = 0.5 * squared_norm(residual) + kl;
            if (!std::isfinite(loss)) {
                throw NumericError("train_vae: non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                   std::to_string(s) + " (learning rate " + std::to_string(lr) + ")");
            }
            epoch_loss += loss;

            std::vector<LayerGrad> dec_grads;
            for (const auto& layer : vae.decoder.layers()) dec_grads.push_back(zero_grad(layer));
            Vector g = residual;
            for (std::size_t l = 0; l < L; ++l) {
                const Vector& input = (l + 1 == L) ? z : dec.predictions[l + 1];
                g = layer_backward(vae.decoder.layer(l), input, g, dec_grads[l]);
            }

            Vector enc_upstream(2 * d);
            for (std::size_t j = 0; j < d; ++j) {
                const double sd = std::exp(0.5 * logvar[j]);
                enc_upstream[j] = g[j] + mu[j];
                enc_upstream[d + j] = g[j] * eps[j] * 0.5 * sd + 0.5 * (std::exp(logvar[j]) - 1.0);
            }
            std::vector<LayerGrad> enc_grads;
            for (const auto& layer : vae.encoder.layers) enc_grads.push_back(zero_grad(layer));
            Vector ge = enc_upstream;
            for (std::size_t l = vae.encoder.layers.size(); l-- > 0;) {
                ge = layer_backward(vae.encoder.layers[l], enc_inputs[l], ge, enc_grads[l]);
            }

            if (lr > 0.0) {
                for (std::size_t l = 0; l < L; ++l) apply_grad(vae.decoder.layer(l), dec_grads[l], lr);
                for (std::size_t l = 0; l < vae.encoder.layers.size(); ++l)
                    apply_grad(vae.encoder.layers[l], enc_grads[l], lr);
            }
        }
        result.loss_trace.push_back(epoch_loss / static_cast<double>(dataset.size()));
    }

    result.final_mse = reconstruction_mse(vae, dataset);
    result.model = std::move(vae);
    return result;
}

SyntheticObservationTask::SyntheticObservationTask(const VaeArchitecture& arch) {
    RngStream rng(0x7E4C4E5ULL);
    teacher_ = make_vae(arch, rng).decoder;
    // Unit observation noise would swamp outputs of variance ~0.5 and the VAE
    // would collapse onto the prior; scale them up.
    Layer& out = teacher_.layer(0);
    for (auto& w : out.weight.data()) w *= kTeacherOutputGain;
    out.bias *= kTeacherOutputGain;
}

Vector SyntheticObservationTask::observe(const Vector& latent) const { return decode(teacher_, latent).output(); }

std::vector<Vector> SyntheticObservationTask::sample(std::size_t count, RngStream& rng) const {
    std::vector<Vector> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(observe(rng.normal_vector(teacher_.latent_dim())));
    return out;
}

}  // namespace memvi
