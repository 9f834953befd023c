#include "vad/network.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace vad {

Activation parse_activation(const std::string& name) {
    if (name == "silu") return Activation::Silu;
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    throw UsageError("unknown activation '" + name + "' (expected silu, relu or tanh)");
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Silu: return "silu";
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
    }
    return "unknown";
}

void NetworkConfig::validate() const {
    if (input_dim == 0) {
        throw UsageError("network: input_dim must be positive");
    }
    if (embed_dim == 0 || embed_dim % 2 != 0) {
        throw UsageError("network: embed_dim must be a positive even number");
    }
    if (encoder_widths.empty() && decoder_widths.empty()) {
        throw UsageError("network: at least one hidden layer is required");
    }
    for (std::size_t w : hidden_widths()) {
        if (w == 0) {
            throw UsageError("network: hidden widths must be positive");
        }
    }
}

std::vector<std::size_t> NetworkConfig::hidden_widths() const {
    std::vector<std::size_t> widths = encoder_widths;
    widths.insert(widths.end(), decoder_widths.begin(), decoder_widths.end());
    return widths;
}

std::size_t NetworkConfig::parameter_count() const {
    std::size_t count = 0;
    std::size_t in = input_dim;
    for (std::size_t w : hidden_widths()) {
        count += in * w + w;              // affine
        count += 2 * (embed_dim * w + w); // FiLM projections
        in = w;
    }
    count += in * input_dim + input_dim;
    return count;
}

template <typename T>
std::vector<Tensor<T>*> DenoiserParams<T>::trainable() {
    std::vector<Tensor<T>*> out;
    out.reserve(hidden.size() * 6 + 2);
    for (auto& layer : hidden) {
        out.insert(out.end(), {&layer.weight, &layer.bias, &layer.scale_weight, &layer.scale_bias,
                               &layer.shift_weight, &layer.shift_bias});
    }
    out.push_back(&out_weight);
    out.push_back(&out_bias);
    return out;
}

template <typename T>
std::vector<const Tensor<T>*> DenoiserParams<T>::trainable() const {
    auto mut = const_cast<DenoiserParams<T>*>(this)->trainable();
    return {mut.begin(), mut.end()};
}

template <typename T>
DenoiserParams<T> DenoiserParams<T>::zeros(const NetworkConfig& config) {
    config.validate();
    const auto e = static_cast<Eigen::Index>(config.embed_dim);
    DenoiserParams<T> p;
    p.config = config;
    auto in = static_cast<Eigen::Index>(config.input_dim);
    for (std::size_t width : config.hidden_widths()) {
        const auto w = static_cast<Eigen::Index>(width);
        HiddenLayer<T> layer;
        layer.weight = Tensor<T>::Zero(in, w);
        layer.bias = Tensor<T>::Zero(1, w);
        layer.scale_weight = Tensor<T>::Zero(e, w);
        layer.scale_bias = Tensor<T>::Zero(1, w);
        layer.shift_weight = Tensor<T>::Zero(e, w);
        layer.shift_bias = Tensor<T>::Zero(1, w);
        p.hidden.push_back(std::move(layer));
        in = w;
    }
    p.out_weight = Tensor<T>::Zero(in, static_cast<Eigen::Index>(config.input_dim));
    p.out_bias = Tensor<T>::Zero(1, static_cast<Eigen::Index>(config.input_dim));
    p.frequencies = Tensor<T>::Zero(1, e / 2);
    return p;
}

template <typename T>
template <typename U>
DenoiserParams<U> DenoiserParams<T>::cast() const {
    DenoiserParams<U> out = DenoiserParams<U>::zeros(config);
    auto src = trainable();
    auto dst = out.trainable();
    for (std::size_t i = 0; i < src.size(); ++i) {
        *dst[i] = src[i]->template cast<U>();
    }
    out.frequencies = frequencies.template cast<U>();
    return out;
}

namespace {

template <typename T>
void fill_uniform(Tensor<T>& m, double bound, Rng& rng) {
    T* data = m.data();
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        data[i] = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
    }
}

}  // namespace

template <typename T>
DenoiserParams<T> init_params(const NetworkConfig& config, std::uint64_t seed) {
    DenoiserParams<T> p = DenoiserParams<T>::zeros(config);
    Rng rng = Rng::for_stream(seed, Stream::Init);
    const double film_bound = 1.0 / std::sqrt(static_cast<double>(config.embed_dim));
    for (auto& layer : p.hidden) {
        fill_uniform(layer.weight, 1.0 / std::sqrt(static_cast<double>(layer.weight.rows())), rng);
        fill_uniform(layer.scale_weight, film_bound, rng);
        fill_uniform(layer.shift_weight, film_bound, rng);
        layer.scale_bias.setOnes();
    }
    Rng freq_rng = Rng::for_stream(seed, Stream::Fourier);
    for (Eigen::Index i = 0; i < p.frequencies.cols(); ++i) {
        p.frequencies(0, i) = static_cast<T>(freq_rng.normal());
    }
    return p;
}

Preconditioner::Preconditioner(double sd) : sigma_data(sd) {
    if (!(sd > 0.0) || !std::isfinite(sd)) {
        throw UsageError("preconditioner: sigma_data must be positive and finite");
    }
}

Scalings Preconditioner::scalings(double sigma) const {
    if (!(sigma > 0.0)) {
        throw UsageError("scalings: sigma must be positive");
    }
    const double sd2 = sigma_data * sigma_data;
    const double total = sigma * sigma + sd2;
    return Scalings{
        sd2 / total,
        sigma * sigma_data / std::sqrt(total),
        1.0 / std::sqrt(total),
        0.25 * std::log(sigma),
    };
}

template <typename T>
RowVector<T> fourier_embed(const DenoiserParams<T>& params, double c_noise) {
    const Eigen::Index half = params.frequencies.cols();
    RowVector<T> emb(2 * half);
    for (Eigen::Index i = 0; i < half; ++i) {
        const double angle =
            2.0 * std::numbers::pi * static_cast<double>(params.frequencies(0, i)) * c_noise;
        emb[i] = static_cast<T>(std::cos(angle));
        emb[half + i] = static_cast<T>(std::sin(angle));
    }
    return emb;
}

template <typename T>
Tensor<T> fourier_embed_rows(const DenoiserParams<T>& params, const std::vector<double>& c_noise) {
    Tensor<T> out(static_cast<Eigen::Index>(c_noise.size()), 2 * params.frequencies.cols());
    for (std::size_t i = 0; i < c_noise.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = fourier_embed(params, c_noise[i]);
    }
    return out;
}

template <typename T>
Tensor<T> film(const Tensor<T>& h, const RowVector<T>& gamma, const RowVector<T>& beta) {
    if (gamma.size() != h.cols() || beta.size() != h.cols()) {
        std::ostringstream msg;
        msg << "film: width mismatch h " << h.cols() << ", gamma " << gamma.size() << ", beta "
            << beta.size();
        throw DataError(msg.str());
    }
    Tensor<T> out = (h.array().rowwise() * gamma.array()).matrix();
    out.rowwise() += beta;
    return out;
}

template <typename T>
Var record_forward(Tape<T>& tape, const DenoiserParams<T>& params, Var x_scaled,
                   const Tensor<T>& embedding) {
    const auto& x = tape.value(x_scaled);
    if (x.cols() != static_cast<Eigen::Index>(params.config.input_dim)) {
        std::ostringstream msg;
        msg << "forward: input has " << x.cols() << " columns, network expects "
            << params.config.input_dim;
        throw DataError(msg.str());
    }
    if (embedding.cols() != 2 * params.frequencies.cols() ||
        (embedding.rows() != 1 && embedding.rows() != x.rows())) {
        throw DataError("forward: embedding shape does not match batch");
    }
    const Var emb = tape.constant_ref(embedding);
    Var h = x_scaled;
    for (const auto& layer : params.hidden) {
        h = tape.affine(h, tape.parameter(layer.weight), tape.parameter(layer.bias));
        switch (params.config.activation) {
            case Activation::Silu: h = tape.silu(h); break;
            case Activation::Relu: h = tape.relu(h); break;
            case Activation::Tanh: h = tape.tanh(h); break;
        }
        const Var gamma =
            tape.affine(emb, tape.parameter(layer.scale_weight), tape.parameter(layer.scale_bias));
        const Var beta =
            tape.affine(emb, tape.parameter(layer.shift_weight), tape.parameter(layer.shift_bias));
        h = tape.add(tape.mul(h, gamma), beta);
    }
    return tape.affine(h, tape.parameter(params.out_weight), tape.parameter(params.out_bias));
}

template <typename T>
Tensor<T> forward_raw(const DenoiserParams<T>& params, const Tensor<T>& x_scaled, double c_noise) {
    Tape<T> tape;
    const Tensor<T> emb = fourier_embed(params, c_noise);
    const Var out = record_forward(tape, params, tape.constant_ref(x_scaled), emb);
    return tape.value(out);
}

template <typename T>
Tensor<T> denoise(const DenoiserParams<T>& params, const Preconditioner& precond,
                  const Tensor<T>& x, double sigma) {
    const Scalings s = precond.scalings(sigma);
    const Tensor<T> x_in = x * static_cast<T>(s.c_in);
    Tensor<T> out = forward_raw(params, x_in, s.c_noise);
    out *= static_cast<T>(s.c_out);
    out += x * static_cast<T>(s.c_skip);
    return out;
}

#define VAD_INSTANTIATE(T)                                                                      \
    template struct DenoiserParams<T>;                                                          \
    template DenoiserParams<T> init_params<T>(const NetworkConfig&, std::uint64_t);             \
    template RowVector<T> fourier_embed<T>(const DenoiserParams<T>&, double);                   \
    template Tensor<T> fourier_embed_rows<T>(const DenoiserParams<T>&, const std::vector<double>&); \
    template Tensor<T> film<T>(const Tensor<T>&, const RowVector<T>&, const RowVector<T>&);     \
    template Var record_forward<T>(Tape<T>&, const DenoiserParams<T>&, Var, const Tensor<T>&);  \
    template Tensor<T> forward_raw<T>(const DenoiserParams<T>&, const Tensor<T>&, double);      \
    template Tensor<T> denoise<T>(const DenoiserParams<T>&, const Preconditioner&,              \
                                  const Tensor<T>&, double);

VAD_INSTANTIATE(float)
VAD_INSTANTIATE(double)
#undef VAD_INSTANTIATE

template DenoiserParams<double> DenoiserParams<float>::cast<double>() const;
template DenoiserParams<float> DenoiserParams<double>::cast<float>() const;
template DenoiserParams<float> DenoiserParams<float>::cast<float>() const;
template DenoiserParams<double> DenoiserParams<double>::cast<double>() const;

}  // namespace vad
