#pragma once

#include <cstdint>
#include <filesystem>

#include "vad/data.hpp"
#include "vad/network.hpp"
#include "vad/training.hpp"

namespace vad {

inline constexpr char kCheckpointMagic[4] = {'V', 'A', 'D', 'W'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Everything scoring needs: raw and EMA weights, the data statistics the
/// preconditioner was built from, and the training noise distribution.
struct Checkpoint {
    DenoiserParams<float> params;
    DenoiserParams<float> ema;
    DataStats stats;
    TrainNoiseConfig noise;
};

/// Layout (little-endian): "VADW", u16 version, u32 input_dim, u32 n_enc,
/// u32 widths[n_enc], u32 n_dec, u32 widths[n_dec], u32 embed_dim,
/// u8 activation, f64 sigma_data, u8 centered, f64 means[input_dim] if
/// centered, f64 p_mean, f64 p_std, then for the raw weights and again for the
/// EMA copy: each tensor as u32 rows, u32 cols, f32 data row-major, starting
/// with the Fourier frequencies and following DenoiserParams::trainable().
///
/// Written to a temporary file and renamed, so a failed save leaves no file.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vad
