#include "fpath/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <system_error>

#include "fpath/error.hpp"

namespace fpath {

namespace {

constexpr uint32_t magic_of(const char (&tag)[5]) {
  return static_cast<uint32_t>(static_cast<uint8_t>(tag[0])) |
         static_cast<uint32_t>(static_cast<uint8_t>(tag[1])) << 8 |
         static_cast<uint32_t>(static_cast<uint8_t>(tag[2])) << 16 |
         static_cast<uint32_t>(static_cast<uint8_t>(tag[3])) << 24;
}

constexpr uint32_t kDumpMagic = magic_of("FPTH");
constexpr uint32_t kBankMagic = magic_of("FPCB");
constexpr uint32_t kDatasetMagic = magic_of("FPDS");
constexpr uint32_t kNetMagic = magic_of("FPNT");

std::string magic_text(uint32_t m) {
  std::string s;
  for (int i = 0; i < 4; ++i) {
    const char c = static_cast<char>((m >> (8 * i)) & 0xff);
    s += (c >= 0x20 && c < 0x7f) ? std::string(1, c) : "\\x" + std::to_string(static_cast<uint8_t>(c));
  }
  return s;
}

class Writer {
 public:
  void u8(uint8_t v) { bytes_.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  std::vector<uint8_t> take() { return std::move(bytes_); }
  void reserve(size_t n) { bytes_.reserve(n); }

 private:
  std::vector<uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<uint8_t>& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  size_t remaining() const { return bytes_.size() - pos_; }
  size_t size() const { return bytes_.size(); }

  // Verifies the rest of the file is exactly `body` bytes long.
  void expect_body(uint64_t body) {
    const uint64_t expected = pos_ + body;
    if (bytes_.size() != expected) {
      throw FormatError(what_ + " is " + (bytes_.size() < expected ? "truncated" : "oversized") +
                        ": expected " + std::to_string(expected) + " bytes, found " +
                        std::to_string(bytes_.size()));
    }
  }

 private:
  void need(size_t n) {
    if (remaining() < n) {
      throw FormatError(what_ + " is truncated: header needs at least " +
                        std::to_string(pos_ + n) + " bytes, found " +
                        std::to_string(bytes_.size()));
    }
  }

  const std::vector<uint8_t>& bytes_;
  std::string what_;
  size_t pos_ = 0;
};

void check_magic(Reader& r, uint32_t expected, const std::string& kind) {
  const uint32_t m = r.u32();
  if (m != expected) {
    throw FormatError("not a " + kind + ": magic is \"" + magic_text(m) + "\", expected \"" +
                      magic_text(expected) + "\"");
  }
  const uint32_t v = r.u32();
  if (v != kFormatVersion) {
    throw FormatError("unsupported " + kind + " version " + std::to_string(v) + " (expected " +
                      std::to_string(kFormatVersion) + ")");
  }
}

}  // namespace

size_t FeatureDump::floats_per_example() const {
  size_t n = 0;
  for (uint32_t d : layer_dims) n += d;
  return n;
}

void FeatureDump::validate() const {
  if (layer_dims.empty()) throw InvalidArgument("feature dump needs at least one layer");
  if (num_classes == 0) throw InvalidArgument("feature dump needs at least one class");
  if (flags.size() != labels.size() || features.size() != labels.size()) {
    throw ShapeError("feature dump labels, flags and features disagree in length");
  }
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw InvalidArgument("dump example " + std::to_string(i) + " label " +
                            std::to_string(labels[i]) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    }
    if (flags[i] != Origin::Clean && flags[i] != Origin::Adversarial) {
      throw InvalidArgument("dump example " + std::to_string(i) + " has an unknown origin flag");
    }
    if (features[i].size() != layer_dims.size()) {
      throw ShapeError("dump example " + std::to_string(i) + " has the wrong layer count");
    }
    for (size_t l = 0; l < layer_dims.size(); ++l) {
      if (features[i][l].size() != layer_dims[l]) {
        throw ShapeError("dump example " + std::to_string(i) + " layer " + std::to_string(l) +
                         " has the wrong dim");
      }
    }
  }
}

std::vector<FeaturePath> FeatureDump::paths() const {
  std::vector<FeaturePath> out;
  out.reserve(size());
  for (size_t i = 0; i < size(); ++i) {
    FeaturePath p;
    p.label = static_cast<int>(labels[i]);
    for (const auto& layer : features[i]) p.layers.emplace_back(layer.begin(), layer.end());
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<uint8_t> encode_dump(const FeatureDump& dump) {
  dump.validate();
  Writer w;
  w.reserve((5 + dump.num_layers()) * 4 + dump.size() * (5 + 4 * dump.floats_per_example()));
  w.u32(kDumpMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<uint32_t>(dump.size()));
  w.u32(dump.num_classes);
  w.u32(static_cast<uint32_t>(dump.num_layers()));
  for (uint32_t d : dump.layer_dims) w.u32(d);
  for (uint32_t y : dump.labels) w.u32(y);
  for (Origin f : dump.flags) w.u8(static_cast<uint8_t>(f));
  for (const auto& ex : dump.features) {
    for (const auto& layer : ex) {
      for (float v : layer) w.f32(v);
    }
  }
  return w.take();
}

FeatureDump decode_dump(const std::vector<uint8_t>& bytes) {
  Reader r(bytes, "feature dump");
  check_magic(r, kDumpMagic, "feature dump");
  FeatureDump d;
  const uint32_t n = r.u32();
  d.num_classes = r.u32();
  const uint32_t L = r.u32();
  if (L == 0) throw FormatError("feature dump declares zero layers");
  for (uint32_t l = 0; l < L; ++l) d.layer_dims.push_back(r.u32());
  const uint64_t per_example = 4 + 1 + 4 * static_cast<uint64_t>(d.floats_per_example());
  r.expect_body(static_cast<uint64_t>(n) * per_example);

  d.labels.resize(n);
  for (auto& y : d.labels) y = r.u32();
  d.flags.resize(n);
  for (auto& f : d.flags) {
    const uint8_t b = r.u8();
    if (b > 1) throw FormatError("feature dump has invalid origin flag " + std::to_string(b));
    f = static_cast<Origin>(b);
  }
  d.features.resize(n);
  for (auto& ex : d.features) {
    ex.resize(L);
    for (uint32_t l = 0; l < L; ++l) {
      ex[l].resize(d.layer_dims[l]);
      for (float& v : ex[l]) v = r.f32();
    }
  }
  for (size_t i = 0; i < d.labels.size(); ++i) {
    if (d.labels[i] >= d.num_classes) {
      throw FormatError("feature dump example " + std::to_string(i) + " has label " +
                        std::to_string(d.labels[i]) + " outside [0, " +
                        std::to_string(d.num_classes) + ")");
    }
  }
  return d;
}

std::vector<uint8_t> encode_bank(const CentroidBank& bank) {
  Writer w;
  w.u32(kBankMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<uint32_t>(bank.num_classes()));
  w.u32(static_cast<uint32_t>(bank.num_layers()));
  for (int d : bank.layer_dims()) w.u32(static_cast<uint32_t>(d));
  for (int n : bank.class_counts()) w.u32(static_cast<uint32_t>(n));
  for (int c = 0; c < bank.num_classes(); ++c) {
    for (int l = 0; l < bank.num_layers(); ++l) {
      for (double v : bank.centroid(c, l)) w.f64(v);
    }
  }
  return w.take();
}

CentroidBank decode_bank(const std::vector<uint8_t>& bytes) {
  Reader r(bytes, "centroid bank");
  check_magic(r, kBankMagic, "centroid bank");
  const uint32_t K = r.u32();
  const uint32_t L = r.u32();
  if (K == 0 || L == 0) throw FormatError("centroid bank declares zero classes or layers");
  std::vector<int> dims;
  uint64_t per_class = 0;
  for (uint32_t l = 0; l < L; ++l) {
    dims.push_back(static_cast<int>(r.u32()));
    per_class += static_cast<uint64_t>(dims.back());
  }
  r.expect_body(4ull * K + 8ull * K * per_class);
  std::vector<int> counts(K);
  for (auto& n : counts) n = static_cast<int>(r.u32());
  std::vector<std::vector<std::vector<double>>> centroids(K);
  for (auto& cls : centroids) {
    cls.resize(L);
    for (uint32_t l = 0; l < L; ++l) {
      cls[l].resize(dims[l]);
      for (double& v : cls[l]) v = r.f64();
    }
  }
  try {
    return CentroidBank(std::move(dims), std::move(centroids), std::move(counts), 1e-6);
  } catch (const Error& e) {
    throw FormatError(std::string("invalid centroid bank: ") + e.what());
  }
}

void write_dump(const FeatureDump& dump, const std::filesystem::path& dest) {
  write_file_atomic(dest, encode_dump(dump));
}

FeatureDump read_dump(const std::filesystem::path& src) { return decode_dump(read_file(src)); }

void save_bank(const CentroidBank& bank, const std::filesystem::path& dest) {
  write_file_atomic(dest, encode_bank(bank));
}

CentroidBank load_bank(const std::filesystem::path& src) { return decode_bank(read_file(src)); }

std::vector<uint8_t> encode_dataset(const Dataset& data) {
  data.validate();
  Writer w;
  w.u32(kDatasetMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<uint32_t>(data.size()));
  w.u32(static_cast<uint32_t>(data.num_classes));
  w.u32(static_cast<uint32_t>(data.dim));
  for (int y : data.labels) w.u32(static_cast<uint32_t>(y));
  for (const auto& x : data.inputs) {
    for (double v : x) w.f64(v);
  }
  return w.take();
}

void save_dataset(const Dataset& data, const std::filesystem::path& dest) {
  write_file_atomic(dest, encode_dataset(data));
}

Dataset load_dataset(const std::filesystem::path& src) { return decode_dataset(read_file(src)); }

Dataset decode_dataset(const std::vector<uint8_t>& bytes) {
  Reader r(bytes, "dataset");
  check_magic(r, kDatasetMagic, "dataset");
  const uint32_t n = r.u32();
  Dataset d;
  d.num_classes = static_cast<int>(r.u32());
  d.dim = static_cast<int>(r.u32());
  r.expect_body(4ull * n + 8ull * n * static_cast<uint64_t>(d.dim));
  d.labels.resize(n);
  for (int& y : d.labels) y = static_cast<int>(r.u32());
  d.inputs.assign(n, std::vector<double>(d.dim));
  for (auto& x : d.inputs) {
    for (double& v : x) v = r.f64();
  }
  try {
    d.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("invalid dataset: ") + e.what());
  }
  return d;
}

std::vector<uint8_t> encode_net(const TapNet& net) {
  net.validate();
  Writer w;
  w.u32(kNetMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<uint32_t>(net.layer_dims().size()));
  for (int d : net.layer_dims()) w.u32(static_cast<uint32_t>(d));
  w.u32(static_cast<uint32_t>(net.tap_points().size()));
  for (int t : net.tap_points()) w.u32(static_cast<uint32_t>(t));
  for (int i = 0; i < net.num_layers(); ++i) {
    const Eigen::MatrixXd& W = net.weights()[i];
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) w.f64(W(r, c));
    }
    for (Eigen::Index r = 0; r < net.biases()[i].size(); ++r) w.f64(net.biases()[i](r));
  }
  return w.take();
}

void save_net(const TapNet& net, const std::filesystem::path& dest) {
  write_file_atomic(dest, encode_net(net));
}

TapNet load_net(const std::filesystem::path& src) { return decode_net(read_file(src)); }

TapNet decode_net(const std::vector<uint8_t>& bytes) {
  Reader r(bytes, "network checkpoint");
  check_magic(r, kNetMagic, "network checkpoint");
  const uint32_t n_dims = r.u32();
  if (n_dims < 2 || n_dims > 1024) throw FormatError("network checkpoint has invalid layer count");
  std::vector<int> dims(n_dims);
  for (int& d : dims) d = static_cast<int>(r.u32());
  const uint32_t n_taps = r.u32();
  if (n_taps > n_dims) throw FormatError("network checkpoint has too many tap points");
  std::vector<int> taps(n_taps);
  for (int& t : taps) t = static_cast<int>(r.u32());
  uint64_t params = 0;
  for (uint32_t i = 0; i + 1 < n_dims; ++i) {
    params += static_cast<uint64_t>(dims[i + 1]) * (static_cast<uint64_t>(dims[i]) + 1);
  }
  r.expect_body(8 * params);
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  for (uint32_t i = 0; i + 1 < n_dims; ++i) {
    Eigen::MatrixXd W(dims[i + 1], dims[i]);
    for (Eigen::Index row = 0; row < W.rows(); ++row) {
      for (Eigen::Index col = 0; col < W.cols(); ++col) W(row, col) = r.f64();
    }
    Eigen::VectorXd b(dims[i + 1]);
    for (Eigen::Index row = 0; row < b.size(); ++row) b(row) = r.f64();
    weights.push_back(std::move(W));
    biases.push_back(std::move(b));
  }
  try {
    return TapNet(std::move(dims), std::move(taps), std::move(weights), std::move(biases));
  } catch (const Error& e) {
    throw FormatError(std::string("invalid network checkpoint: ") + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& dest, const std::vector<uint8_t>& bytes) {
  std::filesystem::path tmp = dest;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, dest, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + dest.string());
  }
}

std::vector<uint8_t> read_file(const std::filesystem::path& src) {
  std::ifstream in(src, std::ios::binary);
  if (!in) throw IoError("cannot open " + src.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + src.string());
  return bytes;
}

namespace {

std::string fnv1a(const uint8_t* data, size_t n) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[i] = hex[h & 0xf];
  return out;
}

}  // namespace

std::string digest(const std::vector<uint8_t>& bytes) { return fnv1a(bytes.data(), bytes.size()); }

std::string digest(const std::string& text) {
  return fnv1a(reinterpret_cast<const uint8_t*>(text.data()), text.size());
}

}  // namespace fpath
