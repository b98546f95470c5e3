#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ccdbp/signal.hpp"
#include "ccdbp/txrx.hpp"

namespace ccdbp {

/// Captured SCOI channels plus what is needed to regenerate their symbols.
struct SignalFile {
  /// Transmitter of the frame; its rng_seed regenerates the symbols.
  TxConfig tx;
  std::uint64_t noise_seed = 0;
  std::map<std::string, std::string> metadata;
  std::vector<DualPolSignal> channels;
};

/// Little-endian layout:
///   "CCDBPSIG" | u32 version | u32 n | n bytes of JSON metadata | u32 channels
///   per channel: f64 sample_rate | f64 center_offset | u64 length |
///                length x (f32 re x, f32 im x, f32 re y, f32 im y)
/// Samples are stored as complex64, so a read-write cycle of a file is
/// byte-exact while a double-precision field loses its low bits once.
void write_signal(const std::string& path, const SignalFile& file);
SignalFile read_signal(const std::string& path);

}  // namespace ccdbp
