#include "ccdbp/signal_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ccdbp/errors.hpp"

namespace ccdbp {

namespace {

constexpr std::array<char, 8> kMagic{'C', 'C', 'D', 'B', 'P', 'S', 'I', 'G'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "signal files assume a little-endian host");

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError(path + ": truncated signal file");
  return v;
}

nlohmann::json tx_to_json(const TxConfig& tx) {
  return {{"symbol_rate", tx.symbol_rate},
          {"grid_spacing", tx.grid_spacing},
          {"rolloff", tx.rolloff},
          {"channels_per_superchannel", tx.channels_per_superchannel},
          {"side_superchannels", tx.side_superchannels},
          {"launch_power_dbm", tx.launch_power_dbm},
          {"n_symbols", tx.n_symbols},
          {"rng_seed", tx.rng_seed},
          {"sim_samples_per_symbol", tx.sim_samples_per_symbol}};
}

TxConfig tx_from_json(const nlohmann::json& j) {
  TxConfig tx;
  tx.symbol_rate = j.at("symbol_rate").get<double>();
  tx.grid_spacing = j.at("grid_spacing").get<double>();
  tx.rolloff = j.at("rolloff").get<double>();
  tx.channels_per_superchannel = j.at("channels_per_superchannel").get<int>();
  tx.side_superchannels = j.at("side_superchannels").get<int>();
  tx.launch_power_dbm = j.at("launch_power_dbm").get<double>();
  tx.n_symbols = j.at("n_symbols").get<std::size_t>();
  tx.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  tx.sim_samples_per_symbol = j.at("sim_samples_per_symbol").get<int>();
  return tx;
}

}  // namespace

void write_signal(const std::string& path, const SignalFile& file) {
  nlohmann::json meta{{"tx", tx_to_json(file.tx)},
                      {"noise_seed", file.noise_seed},
                      {"n_channels", file.channels.size()},
                      {"extra", file.metadata}};
  const std::string text = meta.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create signal file " + path);
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.channels.size()));
  for (const auto& ch : file.channels) {
    if (ch.x.size() != ch.y.size()) throw ConfigError("signal polarizations differ in length");
    put<double>(out, ch.sample_rate);
    put<double>(out, ch.center_offset);
    put<std::uint64_t>(out, ch.x.size());
    std::vector<float> buf(4 * ch.x.size());
    for (std::size_t k = 0; k < ch.x.size(); ++k) {
      buf[4 * k] = static_cast<float>(ch.x[k].real());
      buf[4 * k + 1] = static_cast<float>(ch.x[k].imag());
      buf[4 * k + 2] = static_cast<float>(ch.y[k].real());
      buf[4 * k + 3] = static_cast<float>(ch.y[k].imag());
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  out.flush();
  if (!out) throw IoError("failed writing signal file " + path);
}

SignalFile read_signal(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open signal file " + path);
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw IoError(path + ": not a signal file");
  if (const auto v = get<std::uint32_t>(in, path); v != kVersion)
    throw IoError(path + ": unsupported signal file version " + std::to_string(v));
  const auto meta_len = get<std::uint32_t>(in, path);
  std::string text(meta_len, '\0');
  if (!in.read(text.data(), meta_len)) throw IoError(path + ": truncated metadata");

  SignalFile file;
  std::size_t declared = 0;
  try {
    const auto meta = nlohmann::json::parse(text);
    file.tx = tx_from_json(meta.at("tx"));
    file.noise_seed = meta.at("noise_seed").get<std::uint64_t>();
    declared = meta.at("n_channels").get<std::size_t>();
    file.metadata = meta.at("extra").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad metadata: " + e.what());
  }

  const auto n_ch = get<std::uint32_t>(in, path);
  if (n_ch != declared) throw IoError(path + ": channel count disagrees with metadata");
  for (std::uint32_t c = 0; c < n_ch; ++c) {
    DualPolSignal ch;
    ch.sample_rate = get<double>(in, path);
    ch.center_offset = get<double>(in, path);
    const auto len = get<std::uint64_t>(in, path);
    if (len > (std::uint64_t{1} << 32)) throw IoError(path + ": implausible channel length");
    std::vector<float> buf(4 * len);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float))))
      throw IoError(path + ": truncated samples");
    ch.x.resize(len);
    ch.y.resize(len);
    for (std::size_t k = 0; k < len; ++k) {
      ch.x[k] = {buf[4 * k], buf[4 * k + 1]};
      ch.y[k] = {buf[4 * k + 2], buf[4 * k + 3]};
    }
    file.channels.push_back(std::move(ch));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(path + ": trailing bytes");
  return file;
}

}  // namespace ccdbp
