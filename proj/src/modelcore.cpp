#include "zksplit/modelcore.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <iterator>

#include "zksplit/frequency.hpp"

namespace zksplit {

ParamVector ParamVector::quantize(const Eigen::VectorXd& values, int frac_bits) {
  RawVector raw(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) raw[i] = fp_encode(values[i], frac_bits).raw;
  return {std::move(raw), frac_bits};
}

Eigen::VectorXd ParamVector::dequantize() const {
  return raw.cast<double>() * std::ldexp(1.0, -frac_bits);
}

std::array<std::uint8_t, kSerialHeaderSize> serial_header(std::uint64_t n, int frac_bits) {
  std::array<std::uint8_t, kSerialHeaderSize> h{};
  std::copy(kSerialMagic.begin(), kSerialMagic.end(), h.begin());
  h[4] = kSerialVersion;
  for (int i = 0; i < 8; ++i) h[5 + i] = static_cast<std::uint8_t>((n >> (8 * i)) & 0xff);
  h[13] = static_cast<std::uint8_t>(frac_bits);
  return h;
}

std::vector<std::uint8_t> serialize(const ParamVector& pv) {
  std::vector<std::uint8_t> out(kSerialHeaderSize + 8 * pv.size());
  const auto header = serial_header(pv.size(), pv.frac_bits);
  std::copy(header.begin(), header.end(), out.begin());
  std::size_t pos = kSerialHeaderSize;
  for (Eigen::Index i = 0; i < pv.raw.size(); ++i) {
    auto v = static_cast<std::uint64_t>(pv.raw[i]);
    for (int b = 0; b < 8; ++b) {
      out[pos++] = static_cast<std::uint8_t>(v & 0xff);
      v >>= 8;
    }
  }
  return out;
}

ParamVector deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kSerialHeaderSize || !std::equal(kSerialMagic.begin(), kSerialMagic.end(), bytes.begin())) {
    throw ShapeError("not a ZKSL parameter vector");
  }
  if (bytes[4] != kSerialVersion) throw ShapeError("unsupported ZKSL version");
  std::uint64_t n = 0;
  for (int i = 7; i >= 0; --i) n = (n << 8) | bytes[5 + i];
  if (bytes.size() != kSerialHeaderSize + 8 * n) throw ShapeError("ZKSL length does not match header");
  RawVector raw(static_cast<Eigen::Index>(n));
  const std::uint8_t* p = bytes.data() + kSerialHeaderSize;
  for (std::uint64_t i = 0; i < n; ++i, p += 8) {
    std::uint64_t v = 0;
    for (int b = 7; b >= 0; --b) v = (v << 8) | p[b];
    raw[static_cast<Eigen::Index>(i)] = static_cast<std::int64_t>(v);
  }
  return {std::move(raw), bytes[13]};
}

Digest sha256(std::span<const std::uint8_t> bytes) {
  Digest d{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), d.data(), &len, EVP_sha256(), nullptr) != 1 || len != d.size()) {
    throw Error("SHA-256 failed");
  }
  return d;
}

Digest sha256(std::string_view text) {
  return sha256(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 0xf]);
  }
  return s;
}

ParamVector make_update(const ParamVector& new_model, const ParamVector& checkpoint_model) {
  if (new_model.size() != checkpoint_model.size() || new_model.frac_bits != checkpoint_model.frac_bits) {
    throw ShapeError("make_update: length or frac_bits mismatch");
  }
  return {new_model.raw - checkpoint_model.raw, new_model.frac_bits};
}

void save_param_vector(const ParamVector& pv, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  const auto bytes = serialize(pv);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

ParamVector load_param_vector(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

Fp ChainBinding::blind(std::uint64_t generation, std::uint64_t slot) const {
  std::array<std::uint8_t, 48> msg{};
  std::copy(seed.begin(), seed.end(), msg.begin());
  for (int i = 0; i < 8; ++i) {
    msg[32 + i] = static_cast<std::uint8_t>(generation >> (8 * i));
    msg[40 + i] = static_cast<std::uint8_t>(slot >> (8 * i));
  }
  // Rehash until the top 61 bits land below p; almost never loops.
  for (Digest d = sha256(msg);; d = sha256(d)) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{d[static_cast<std::size_t>(i)]} << (8 * i);
    v >>= 3;
    if (v < Fp::kModulus) return Fp(v);
  }
}

void seal_hashes(Checkpoint& c) {
  if (c.model.size() != c.update.size()) throw ShapeError("checkpoint model/update length mismatch");
  c.model_hash = hash_model(c.model);
  c.update_hash = hash_model(c.update);
  c.dct_hash = hash_model(quantized_dct_params(c.update));
}

void QueueState::validate() const {
  if (checkpoints.empty()) throw ProtocolStateError("empty queue");
  if (bm_index >= checkpoints.size()) throw ProtocolStateError("best-model pointer out of range");
  for (std::size_t i = 1; i < checkpoints.size(); ++i) {
    if (checkpoints[i].round <= checkpoints[i - 1].round) throw ProtocolStateError("queue rounds not increasing");
  }
}

}  // namespace zksplit
