#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <string_view>

#include "iaa/core.hpp"
#include "iaa/io.hpp"
#include "iaa/rng.hpp"

namespace iaa {

enum class Architecture { linear, mlp };

inline const char *to_string(Architecture a) { return a == Architecture::linear ? "linear" : "mlp"; }

inline Architecture architecture_from(std::string_view s) {
  if (s == "linear")
    return Architecture::linear;
  if (s == "mlp")
    return Architecture::mlp;
  throw ConfigError("unknown encoder architecture '" + std::string(s) + "'");
}

struct EncoderConfig {
  Architecture architecture = Architecture::linear;
  std::size_t hidden_dim = 64;
  std::size_t embedding_dim = 16;

  void validate() const {
    if (embedding_dim < 1)
      throw ConfigError("embedding_dim must be >= 1");
    if (architecture == Architecture::mlp && hidden_dim < 1)
      throw ConfigError("hidden_dim must be >= 1 for the mlp encoder");
  }
};

/// Linear map or one-hidden-layer ReLU perceptron, D_in -> D_emb, with all
/// parameters in one flat vector (W1, b1[, W2, b2], row-major) so optimizers
/// can treat them uniformly. `embed` returns L2-normalized outputs.
class Encoder {
public:
  struct Cache {
    RowMatrix input;
    RowMatrix pre_activation;  // mlp only
    RowMatrix hidden;          // mlp only
  };

  Encoder() = default;

  Encoder(std::size_t input_dim, const EncoderConfig &cfg)
      : arch_(cfg.architecture), in_(input_dim), hidden_(cfg.hidden_dim), out_(cfg.embedding_dim) {
    cfg.validate();
    if (arch_ == Architecture::linear)
      hidden_ = 0;
    params_ = Vector::Zero(static_cast<Eigen::Index>(parameter_count()));
  }

  /// Gaussian init scaled by fan-in (He for the ReLU layer), zero biases.
  static Encoder initialized(std::size_t input_dim, const EncoderConfig &cfg, std::uint64_t seed) {
    Encoder e(input_dim, cfg);
    Rng rng = keyed_rng(seed, Stream::encoder_init);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill = [&](Eigen::Map<RowMatrix> w, double stddev) {
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j)
          w(i, j) = stddev * normal(rng);
    };
    if (e.arch_ == Architecture::linear) {
      fill(e.w1(), 1.0 / std::sqrt(static_cast<double>(input_dim)));
    } else {
      fill(e.w1(), std::sqrt(2.0 / static_cast<double>(input_dim)));
      fill(e.w2(), 1.0 / std::sqrt(static_cast<double>(e.hidden_)));
    }
    return e;
  }

  [[nodiscard]] Architecture architecture() const { return arch_; }
  [[nodiscard]] std::size_t input_dim() const { return in_; }
  [[nodiscard]] std::size_t hidden_dim() const { return hidden_; }
  [[nodiscard]] std::size_t output_dim() const { return out_; }

  [[nodiscard]] std::size_t parameter_count() const {
    if (arch_ == Architecture::linear)
      return out_ * in_ + out_;
    return hidden_ * in_ + hidden_ + out_ * hidden_ + out_;
  }

  [[nodiscard]] const Vector &parameters() const { return params_; }
  Vector &parameters() { return params_; }

  void set_parameters(const Vector &p) {
    if (static_cast<std::size_t>(p.size()) != parameter_count())
      throw DataError("encoder parameter count mismatch");
    params_ = p;
  }

  /// Pre-normalization outputs.
  [[nodiscard]] RowMatrix forward(const RowMatrix &x, Cache *cache = nullptr) const {
    if (static_cast<std::size_t>(x.cols()) != in_)
      throw DataError("encoder expects input dimension " + std::to_string(in_) + ", got " +
                      std::to_string(x.cols()));
    if (cache)
      cache->input = x;
    if (arch_ == Architecture::linear) {
      RowMatrix h = x * w1().transpose();
      h.rowwise() += b1().transpose();
      return h;
    }
    RowMatrix pre = x * w1().transpose();
    pre.rowwise() += b1().transpose();
    RowMatrix a = pre.cwiseMax(0.0);
    RowMatrix h = a * w2().transpose();
    h.rowwise() += b2().transpose();
    if (cache) {
      cache->pre_activation = std::move(pre);
      cache->hidden = std::move(a);
    }
    return h;
  }

  [[nodiscard]] RowMatrix embed(const RowMatrix &x) const { return normalize_rows(forward(x)); }

  /// Parameter gradient given d loss / d forward(x).
  [[nodiscard]] Vector backward(const Cache &cache, const RowMatrix &grad_out) const {
    Encoder g = *this;
    g.params_.setZero();
    if (arch_ == Architecture::linear) {
      g.w1() = grad_out.transpose() * cache.input;
      g.b1() = grad_out.colwise().sum().transpose();
      return g.params_;
    }
    g.w2() = grad_out.transpose() * cache.hidden;
    g.b2() = grad_out.colwise().sum().transpose();
    RowMatrix grad_hidden = grad_out * w2();
    grad_hidden = grad_hidden.cwiseProduct(
        (cache.pre_activation.array() > 0.0).cast<double>().matrix());
    g.w1() = grad_hidden.transpose() * cache.input;
    g.b1() = grad_hidden.colwise().sum().transpose();
    return g.params_;
  }

private:
  [[nodiscard]] std::size_t first_rows() const { return arch_ == Architecture::linear ? out_ : hidden_; }

  Eigen::Map<RowMatrix> w1() {
    return {params_.data(), static_cast<Eigen::Index>(first_rows()), static_cast<Eigen::Index>(in_)};
  }
  Eigen::Map<const RowMatrix> w1() const {
    return {params_.data(), static_cast<Eigen::Index>(first_rows()), static_cast<Eigen::Index>(in_)};
  }
  Eigen::Map<Vector> b1() {
    return {params_.data() + first_rows() * in_, static_cast<Eigen::Index>(first_rows())};
  }
  Eigen::Map<const Vector> b1() const {
    return {params_.data() + first_rows() * in_, static_cast<Eigen::Index>(first_rows())};
  }
  [[nodiscard]] std::size_t second_offset() const { return hidden_ * in_ + hidden_; }
  Eigen::Map<RowMatrix> w2() {
    return {params_.data() + second_offset(), static_cast<Eigen::Index>(out_),
            static_cast<Eigen::Index>(hidden_)};
  }
  Eigen::Map<const RowMatrix> w2() const {
    return {params_.data() + second_offset(), static_cast<Eigen::Index>(out_),
            static_cast<Eigen::Index>(hidden_)};
  }
  Eigen::Map<Vector> b2() {
    return {params_.data() + second_offset() + out_ * hidden_, static_cast<Eigen::Index>(out_)};
  }
  Eigen::Map<const Vector> b2() const {
    return {params_.data() + second_offset() + out_ * hidden_, static_cast<Eigen::Index>(out_)};
  }

  Architecture arch_ = Architecture::linear;
  std::size_t in_ = 0;
  std::size_t hidden_ = 0;
  std::size_t out_ = 0;
  Vector params_;
};

// Encoder parameter file: "IAAE", u32 version=1, u32 architecture
// (0 linear, 1 mlp), u32 input dim, u32 hidden dim, u32 embedding dim,
// u64 parameter count, then little-endian f64 parameters.
inline constexpr std::array<char, 4> kEncoderMagic{'I', 'A', 'A', 'E'};

inline void save_encoder(const Encoder &e, const std::filesystem::path &path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os)
    throw DataError("cannot write " + path.string());
  os.write(kEncoderMagic.data(), kEncoderMagic.size());
  detail::put_le<std::uint32_t>(os, 1);
  detail::put_le<std::uint32_t>(os, e.architecture() == Architecture::linear ? 0 : 1);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.input_dim()));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.hidden_dim()));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.output_dim()));
  detail::put_le<std::uint64_t>(os, e.parameter_count());
  for (Eigen::Index i = 0; i < e.parameters().size(); ++i)
    detail::put_le<double>(os, e.parameters()(i));
  if (!os)
    throw DataError("write failed for " + path.string());
}

inline Encoder load_encoder(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw DataError("cannot open " + path.string());
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kEncoderMagic)
    throw DataError("bad magic: not an IAAE encoder file");
  if (detail::get_le<std::uint32_t>(is, "version") != 1)
    throw DataError("unsupported encoder file version");
  const auto arch = detail::get_le<std::uint32_t>(is, "architecture");
  if (arch > 1)
    throw DataError("unknown encoder architecture code");
  const auto in = detail::get_le<std::uint32_t>(is, "input dim");
  const auto hidden = detail::get_le<std::uint32_t>(is, "hidden dim");
  const auto out = detail::get_le<std::uint32_t>(is, "embedding dim");
  EncoderConfig cfg{arch == 0 ? Architecture::linear : Architecture::mlp, arch == 0 ? 1 : hidden, out};
  Encoder e(in, cfg);
  const auto count = detail::get_le<std::uint64_t>(is, "parameter count");
  if (count != e.parameter_count())
    throw DataError("encoder parameter count does not match its shape");
  Vector p(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    p(i) = detail::get_le<double>(is, "parameters");
    if (!std::isfinite(p(i)))
      throw DataError("non-finite encoder parameter");
  }
  e.set_parameters(p);
  return e;
}

} // namespace iaa
