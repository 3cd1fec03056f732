#pragma once

// Hierarchical decoder f_theta and a small VAE that supplies amortized latent
// estimates. Layer l of a LayerStack maps h_{l+1} to the mean prediction of
// h_l; h_0 is the observation and h_L the latent.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "memvi/numerics.hpp"
#include "memvi/rng.hpp"

namespace memvi {

enum class Activation { identity, tanh, relu };

std::string_view to_string(Activation a) noexcept;
Activation parse_activation(std::string_view name);

struct Layer {
    Matrix weight;  // out x in
    Vector bias;    // out
    Activation activation = Activation::identity;

    [[nodiscard]] std::size_t in_dim() const noexcept { return weight.cols(); }
    [[nodiscard]] std::size_t out_dim() const noexcept { return weight.rows(); }

    /// Throws ShapeError when weight and bias disagree.
    void validate() const;

    /// Weights ~ N(0, 1/in), zero bias.
    static Layer random(std::size_t in, std::size_t out, Activation act, RngStream& rng);
    static Layer zeros(std::size_t in, std::size_t out, Activation act);
};

/// activation(W h + b)
Vector layer_forward(const Layer& layer, const Vector& h_in);

/// J^T upstream, J the Jacobian of layer_forward at h_in. The relu subgradient
/// at exactly zero is taken as 0.
Vector layer_vjp(const Layer& layer, const Vector& h_in, const Vector& upstream);

class LayerStack {
public:
    LayerStack() = default;
    /// layers[l] maps h_{l+1} -> h_l. Adjacent dimensions must chain.
    explicit LayerStack(std::vector<Layer> layers);

    [[nodiscard]] std::size_t depth() const noexcept { return layers_.size(); }
    [[nodiscard]] const Layer& layer(std::size_t l) const { return layers_.at(l); }
    [[nodiscard]] Layer& layer(std::size_t l) { return layers_.at(l); }
    [[nodiscard]] const std::vector<Layer>& layers() const noexcept { return layers_; }

    /// Dimension of h_l, l in [0, L].
    [[nodiscard]] std::size_t dim(std::size_t l) const;
    [[nodiscard]] std::size_t latent_dim() const { return dim(depth()); }
    [[nodiscard]] std::size_t observation_dim() const { return dim(0); }

private:
    std::vector<Layer> layers_;
};

struct Decoded {
    /// predictions[l] = f^l(h_{l+1}) along the pure forward cascade, l in [0, L).
    std::vector<Vector> predictions;

    [[nodiscard]] const Vector& output() const { return predictions.front(); }
};

Decoded decode(const LayerStack& stack, const Vector& z);

/// Gradient of <f(z), upstream> with respect to z, chaining layer_vjp from the
/// bottom layer up.
Vector stack_vjp(const LayerStack& stack, const Vector& z, const Vector& upstream);

/// Gradient of 1/2 ||f(z) - x||^2 with respect to z.
Vector reconstruction_gradient(const LayerStack& stack, const Vector& z, const Vector& x);

struct Encoder {
    /// Applied in order; the last layer outputs 2 * latent_dim values (mu, logvar).
    std::vector<Layer> layers;

    [[nodiscard]] std::size_t input_dim() const;
    [[nodiscard]] std::size_t output_dim() const;
};

struct Encoded {
    Vector mu;
    Vector logvar;
};

struct VaeModel {
    Encoder encoder;
    LayerStack decoder;

    [[nodiscard]] std::size_t latent_dim() const { return decoder.latent_dim(); }
    [[nodiscard]] std::size_t observation_dim() const { return decoder.observation_dim(); }

    /// Checks the encoder/decoder dimension contract; throws ShapeError.
    void validate() const;
};

struct VaeArchitecture {
    std::size_t latent_dim = 8;
    std::vector<std::size_t> hidden = {32};
    std::size_t observation_dim = 16;
    Activation hidden_activation = Activation::tanh;
};

/// Decoder latent -> hidden... -> observation (hidden layers use
/// hidden_activation, output identity); encoder mirrors it.
VaeModel make_vae(const VaeArchitecture& arch, RngStream& rng);

Encoded encode(const VaeModel& vae, const Vector& x);

struct VaeTrainOptions {
    std::size_t epochs = 40;
    double learning_rate = 0.003;
};

struct VaeTrainResult {
    VaeModel model;
    /// Mean per-sample loss (1/2 reconstruction squared error + KL) per epoch.
    std::vector<double> loss_trace;
    /// Mean squared reconstruction error of decode(encode(x).mu), before and after.
    double initial_mse = 0.0;
    double final_mse = 0.0;
};

/// Per-sample SGD with the reparameterization trick. Sample order and noise are
/// drawn from `rng`, so a fixed seed fixes the run. Throws NumericError on a
/// non-finite loss, naming the epoch and sample.
VaeTrainResult train_vae(VaeModel vae, const std::vector<Vector>& dataset, const VaeTrainOptions& options,
                         RngStream& rng);

/// Mean of ||decode(encode(x).mu) - x||^2 / dim over the dataset.
double reconstruction_mse(const VaeModel& vae, const std::vector<Vector>& dataset);

/// The bundled synthetic observation task: a fixed random "teacher" decoder
/// (same shape as the default VAE decoder, weights from a constant seed, output
/// layer scaled by kTeacherOutputGain) applied to standard-normal latents.
inline constexpr double kTeacherOutputGain = 2.0;

class SyntheticObservationTask {
public:
    explicit SyntheticObservationTask(const VaeArchitecture& arch = {});

    [[nodiscard]] const LayerStack& teacher() const noexcept { return teacher_; }
    [[nodiscard]] Vector observe(const Vector& latent) const;
    [[nodiscard]] std::vector<Vector> sample(std::size_t count, RngStream& rng) const;

private:
    LayerStack teacher_;
};

}  // namespace memvi
