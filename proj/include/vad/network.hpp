#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vad/numeric.hpp"
#include "vad/tape.hpp"

namespace vad {

enum class Activation : std::uint8_t { Silu = 0, Relu = 1, Tanh = 2 };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

/// Shape of the encoder-decoder MLP.
struct NetworkConfig {
    std::size_t input_dim = 512;
    std::vector<std::size_t> encoder_widths{1024, 512, 256};
    std::vector<std::size_t> decoder_widths{256, 512, 1024};
    std::size_t embed_dim = 128;  // even: paired cos/sin features
    Activation activation = Activation::Silu;

    /// Throws UsageError on a zero width or odd embed_dim.
    void validate() const;
    /// Encoder widths followed by decoder widths.
    std::vector<std::size_t> hidden_widths() const;
    std::size_t parameter_count() const;

    bool operator==(const NetworkConfig&) const = default;
};

/// One hidden block: affine, activation, then FiLM driven by the noise embedding.
template <typename T>
struct HiddenLayer {
    Tensor<T> weight;       // in x width
    Tensor<T> bias;         // 1 x width
    Tensor<T> scale_weight; // embed x width (FiLM gamma projection)
    Tensor<T> scale_bias;   // 1 x width
    Tensor<T> shift_weight; // embed x width (FiLM beta projection)
    Tensor<T> shift_bias;   // 1 x width
};

/// All weights of the raw network F. `frequencies` are the fixed Fourier
/// frequencies and are not part of trainable().
template <typename T>
struct DenoiserParams {
    NetworkConfig config;
    std::vector<HiddenLayer<T>> hidden;
    Tensor<T> out_weight;  // last width x input_dim
    Tensor<T> out_bias;    // 1 x input_dim
    Tensor<T> frequencies; // 1 x embed_dim/2

    /// Trainable tensors in declaration order: per hidden layer (weight, bias,
    /// scale_weight, scale_bias, shift_weight, shift_bias), then output layer.
    std::vector<Tensor<T>*> trainable();
    std::vector<const Tensor<T>*> trainable() const;

    /// Every tensor set to zero, shapes taken from the config.
    static DenoiserParams zeros(const NetworkConfig& config);

    template <typename U>
    DenoiserParams<U> cast() const;
};

/// Fan-in scaled uniform weights, zero biases, FiLM scale bias 1, zero output
/// layer, frequencies from a standard normal on a dedicated stream.
template <typename T>
DenoiserParams<T> init_params(const NetworkConfig& config, std::uint64_t seed);

/// Noise-level dependent scalings of the preconditioned denoiser.
struct Scalings {
    double c_skip;
    double c_out;
    double c_in;
    double c_noise;
};

struct Preconditioner {
    double sigma_data = 1.0;

    explicit Preconditioner(double sigma_data);

    /// Throws UsageError for sigma <= 0.
    Scalings scalings(double sigma) const;
};

/// [cos(2 pi f_i c), ..., sin(2 pi f_i c), ...] over the fixed frequencies.
template <typename T>
RowVector<T> fourier_embed(const DenoiserParams<T>& params, double c_noise);

/// gamma * h + beta, broadcast over rows.
template <typename T>
Tensor<T> film(const Tensor<T>& h, const RowVector<T>& gamma, const RowVector<T>& beta);

/// Records F(x_scaled; embedding) on the tape. `embedding` has one row (shared
/// noise level) or one row per batch row.
template <typename T>
Var record_forward(Tape<T>& tape, const DenoiserParams<T>& params, Var x_scaled,
                   const Tensor<T>& embedding);

/// F(x_scaled; c_noise) for a batch sharing one noise level.
template <typename T>
Tensor<T> forward_raw(const DenoiserParams<T>& params, const Tensor<T>& x_scaled, double c_noise);

/// D(x; sigma) = c_skip x + c_out F(c_in x; c_noise).
template <typename T>
Tensor<T> denoise(const DenoiserParams<T>& params, const Preconditioner& precond,
                  const Tensor<T>& x, double sigma);

/// Embedding rows for per-row noise conditioning values.
template <typename T>
Tensor<T> fourier_embed_rows(const DenoiserParams<T>& params, const std::vector<double>& c_noise);

}  // namespace vad
