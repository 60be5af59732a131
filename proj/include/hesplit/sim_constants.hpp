#ifndef HESPLIT_SIM_CONSTANTS_HPP
#define HESPLIT_SIM_CONSTANTS_HPP

namespace hesplit {

// Simulator noise-model constants. Version bumps whenever the calibration
// against the real scheme's measured error changes; tests re-verify the
// bound at this version.
inline constexpr int kSimNoiseModelVersion = 1;

// Default per-multiplication noise stddev, expressed as 2^(exponent) with
// exponent = -scale_log + kSimMulNoiseLogOffset. Calibrated against measured
// slot error of the real scheme's multiply-rescale path at scale 2^30
// (observed max error ~2^-15 per op at unit magnitude; stddev 2^-26 keeps the
// simulated distribution conservative without burying the signal).
inline constexpr int kSimMulNoiseLogOffset = 4;

// Default fixed-point mantissa width for simulated encrypted values. 52 or
// more means native double precision (no quantization).
inline constexpr int kSimDefaultPrecisionBits = 30;

}  // namespace hesplit

#endif
