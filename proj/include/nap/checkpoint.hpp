#pragma once

#include "nap/nn.hpp"

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace nap::io {

constexpr std::uint32_t kFormatVersion = 1;

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back((v >> (8 * i)) & 0xff);
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back((v >> (8 * i)) & 0xff);
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f32_span(const float* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) f32(data[i]);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void magic(const char m[4]) {
    bytes_.insert(bytes_.end(), m, m + 4);
  }

  // Appends the trailing length field and writes the file.
  void write_file(const std::string& path) {
    std::uint64_t payload = bytes_.size();
    u64(payload);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes_.data()),
              static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw IoError("write failed: " + path);
  }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> bytes, std::string origin)
      : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  static ByteReader from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open: " + path);
    auto size = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    if (size > 0)
      in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw IoError("read failed: " + path);
    return ByteReader(std::move(bytes), path);
  }

  // Verifies the trailing 8-byte length field against the actual payload size
  // and strips it from the readable region.
  void check_trailer() {
    if (bytes_.size() < 8) throw IoError(origin_ + ": truncated file, no trailer");
    std::uint64_t declared = 0;
    for (int i = 0; i < 8; ++i)
      declared |= static_cast<std::uint64_t>(bytes_[bytes_.size() - 8 + i])
                  << (8 * i);
    std::uint64_t payload = bytes_.size() - 8;
    if (declared != payload)
      throw IoError(origin_ + ": truncated payload (trailer declares " +
                    std::to_string(declared) + " bytes, file holds " +
                    std::to_string(payload) + ")");
    end_ = payload;
  }

  void expect_magic(const char m[4]) {
    if (end_ - pos_ < 4) throw IoError(origin_ + ": truncated before magic");
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0)
      throw IoError(origin_ + ": magic mismatch, expected '" +
                    std::string(m, 4) + "' got '" +
                    std::string(reinterpret_cast<const char*>(bytes_.data() + pos_),
                                4) +
                    "'");
    pos_ += 4;
  }

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  void f32_span(float* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) data[i] = f32();
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  void finish() {
    if (pos_ != end_)
      throw IoError(origin_ + ": payload size mismatch (" +
                    std::to_string(end_ - pos_) + " unread bytes)");
  }

  const std::string& origin() const { return origin_; }

 private:
  void need(std::size_t n) {
    if (end_ - pos_ < n)
      throw IoError(origin_ + ": truncated payload while reading");
  }
  std::vector<std::uint8_t> bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
};

// Per-layer block: in_dim u32, out_dim u32, norm flag byte, weights row-major
// f32, bias f32, then LayerNorm affine when the flag is set.
template <class T>
void serialize_net(ByteWriter& w, const nn::DenseNet<T>& net) {
  w.u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& layer : net.layers) {
    w.u32(static_cast<std::uint32_t>(layer.in_dim()));
    w.u32(static_cast<std::uint32_t>(layer.out_dim()));
    w.u8(layer.pre_norm ? 1 : 0);
    for (Eigen::Index r = 0; r < layer.W.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.W.cols(); ++c)
        w.f32(static_cast<float>(layer.W(r, c)));
    for (Eigen::Index i = 0; i < layer.b.size(); ++i)
      w.f32(static_cast<float>(layer.b[i]));
    if (layer.pre_norm) {
      for (Eigen::Index i = 0; i < layer.gamma.size(); ++i)
        w.f32(static_cast<float>(layer.gamma[i]));
      for (Eigen::Index i = 0; i < layer.beta.size(); ++i)
        w.f32(static_cast<float>(layer.beta[i]));
    }
  }
}

template <class T>
nn::DenseNet<T> parse_net(ByteReader& r) {
  std::uint32_t n_layers = r.u32();
  if (n_layers == 0 || n_layers > 1024)
    throw IoError(r.origin() + ": implausible layer count " +
                  std::to_string(n_layers));
  nn::DenseNet<T> net;
  int prev_out = -1;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    std::uint32_t in = r.u32(), out = r.u32();
    if (in == 0 || out == 0 || in > (1u << 20) || out > (1u << 20))
      throw IoError(r.origin() + ": implausible layer dims");
    if (prev_out >= 0 && static_cast<int>(in) != prev_out)
      throw IoError(r.origin() + ": layer dimension mismatch at layer " +
                    std::to_string(i));
    prev_out = static_cast<int>(out);
    nn::Layer<T> layer;
    layer.pre_norm = r.u8() != 0;
    layer.W.resize(out, in);
    for (std::uint32_t rr = 0; rr < out; ++rr)
      for (std::uint32_t cc = 0; cc < in; ++cc)
        layer.W(rr, cc) = static_cast<T>(r.f32());
    layer.b.resize(out);
    for (std::uint32_t j = 0; j < out; ++j) layer.b[j] = static_cast<T>(r.f32());
    if (layer.pre_norm) {
      layer.gamma.resize(in);
      layer.beta.resize(in);
      for (std::uint32_t j = 0; j < in; ++j) layer.gamma[j] = static_cast<T>(r.f32());
      for (std::uint32_t j = 0; j < in; ++j) layer.beta[j] = static_cast<T>(r.f32());
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

// Plain network checkpoint: magic NAPC, version, one net block, length trailer.
template <class T>
void checkpoint_save(const nn::DenseNet<T>& net, const std::string& path) {
  ByteWriter w;
  w.magic("NAPC");
  w.u32(kFormatVersion);
  serialize_net(w, net);
  w.write_file(path);
}

template <class T>
nn::DenseNet<T> checkpoint_load(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  r.check_trailer();
  r.expect_magic("NAPC");
  std::uint32_t version = r.u32();
  if (version != kFormatVersion)
    throw IoError(path + ": unsupported format version " +
                  std::to_string(version));
  nn::DenseNet<T> net = parse_net<T>(r);
  r.finish();
  return net;
}

inline bool files_identical(const std::string& a, const std::string& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) throw IoError("files_identical: cannot open inputs");
  std::vector<char> ba((std::istreambuf_iterator<char>(fa)),
                       std::istreambuf_iterator<char>());
  std::vector<char> bb((std::istreambuf_iterator<char>(fb)),
                       std::istreambuf_iterator<char>());
  return ba == bb;
}

}  // namespace nap::io
