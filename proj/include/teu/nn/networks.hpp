#pragma once

// Proximal networks on 2-channel (real, imag) images: a residual ResNet and
// a two-level U-Net, each optionally conditioned on the unroll index.

#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "teu/nn/layers.hpp"

namespace teu::nn {

enum class Arch { resnet, unet };

inline std::string to_string(Arch a) { return a == Arch::resnet ? "resnet" : "unet"; }

inline Arch parse_arch(const std::string& s) {
  if (s == "resnet") return Arch::resnet;
  if (s == "unet") return Arch::unet;
  throw std::invalid_argument("unknown architecture: " + s);
}

struct NetworkSpec {
  Arch arch = Arch::resnet;
  bool time_embedded = false;
  std::size_t blocks = 3;             // ResNet residual blocks
  std::size_t channels = 16;          // ResNet width / U-Net base width
  double scale = 0.1;                 // ResNet residual scaling
  double tau = 0.1;                   // ResNet-TE modulation strength
  std::size_t blocks_per_level = 1;   // U-Net residual blocks per encoder/decoder level
  TimeEmbedSpec embed;

  static NetworkSpec resnet_toy(bool te = false) { return {Arch::resnet, te, 3, 16, 0.1, 0.1, 1, {}}; }
  static NetworkSpec resnet_full(bool te = false) { return {Arch::resnet, te, 15, 64, 0.1, 0.1, 1, {}}; }
  static NetworkSpec unet_toy(bool te = false) { return {Arch::unet, te, 0, 16, 0.1, 0.1, 1, {}}; }
  static NetworkSpec unet_full(bool te = false) { return {Arch::unet, te, 0, 32, 0.1, 0.1, 2, {}}; }

  void validate() const {
    if (channels == 0) throw ConfigError("model.channels", "must be >= 1");
    if (arch == Arch::resnet && blocks == 0) throw ConfigError("model.blocks", "must be >= 1");
    if (arch == Arch::unet && blocks_per_level == 0) throw ConfigError("model.blocks_per_level", "must be >= 1");
    if (embed.dim == 0 || embed.dim % 2) throw ConfigError("model.embed_dim", "must be even and positive");
  }
};

namespace detail {

/// U-Net residual block: GN-SiLU-conv, then GN (affine or FiLM), SiLU, conv,
/// plus a 1x1 skip when the width changes.
struct UnetBlock {
  GroupNormAffine norm1;
  Conv2d conv1, conv2, skip;
  std::size_t groups2 = 1;
  std::optional<GroupNormAffine> norm2;  // static blocks
  std::optional<FilmHeads> film;         // time-embedded blocks
  bool has_skip = false;

  UnetBlock(ParameterStore& s, const std::string& name, std::size_t cin, std::size_t cout, bool te,
            std::size_t hidden, std::mt19937_64& rng)
      : norm1(s, name + ".norm1", cin), conv1(s, name + ".conv1", cin, cout, 3, rng),
        conv2(s, name + ".conv2", cout, cout, 3, rng), groups2(default_groups(cout)), has_skip(cin != cout) {
    if (te)
      film.emplace(s, name + ".film", hidden, cout, rng);
    else
      norm2.emplace(s, name + ".norm2", cout);
    if (has_skip) skip = Conv2d(s, name + ".skip", cin, cout, 1, rng);
  }

  Var operator()(Tape& t, const ParameterStore& s, Var x, std::optional<Var> emb) const {
    Var h = conv1(t, s, silu(norm1(t, s, x)));
    if (film) {
      h = film_modulate(h, film->alpha(t, s, *emb), film->beta(t, s, *emb), groups2);
    } else {
      h = (*norm2)(t, s, h);
    }
    h = conv2(t, s, silu(h));
    return add(has_skip ? skip(t, s, x) : x, h);
  }
};

struct ResBlock {
  Conv2d conv1, conv2;
  std::optional<FilmHeads> film;
};

}  // namespace detail

/// A proximal network bound to a slice of a parameter store.
class ProxNetwork {
 public:
  ProxNetwork(const NetworkSpec& spec, ParameterStore& store, const std::string& prefix, std::mt19937_64& rng)
      : spec_(spec), prefix_(prefix) {
    spec.validate();
    const std::size_t C = spec.channels;
    const std::size_t hidden = spec.embed.hidden;
    if (spec.time_embedded) embed_.emplace(store, prefix + ".embed", spec.embed, rng);
    if (spec.arch == Arch::resnet) {
      in_ = Conv2d(store, prefix + ".in", 2, C, 3, rng);
      for (std::size_t i = 0; i < spec.blocks; ++i) {
        const std::string b = prefix + ".block" + std::to_string(i);
        detail::ResBlock rb{Conv2d(store, b + ".conv1", C, C, 3, rng), Conv2d(store, b + ".conv2", C, C, 3, rng), {}};
        if (spec.time_embedded) rb.film.emplace(store, b + ".film", hidden, C, rng);
        res_.push_back(std::move(rb));
      }
      out_ = Conv2d(store, prefix + ".out", C, 2, 3, rng);
    } else {
      const bool te = spec.time_embedded;
      const std::size_t n = spec.blocks_per_level;
      in_ = Conv2d(store, prefix + ".in", 2, C, 3, rng);
      auto level = [&](std::vector<detail::UnetBlock>& v, const std::string& name, std::size_t cin, std::size_t cout) {
        for (std::size_t i = 0; i < n; ++i)
          v.emplace_back(store, name + std::to_string(i), i == 0 ? cin : cout, cout, te, hidden, rng);
      };
      level(enc0_, prefix + ".enc0.", C, C);
      level(enc1_, prefix + ".enc1.", C, 2 * C);
      mid_.emplace_back(store, prefix + ".mid.0", 2 * C, 4 * C, te, hidden, rng);
      mid_.emplace_back(store, prefix + ".mid.1", 4 * C, 4 * C, te, hidden, rng);
      level(dec1_, prefix + ".dec1.", 6 * C, 2 * C);
      level(dec0_, prefix + ".dec0.", 3 * C, C);
      out_norm_ = GroupNormAffine(store, prefix + ".out_norm", C);
      out_ = Conv2d(store, prefix + ".out", C, 2, 3, rng);
    }
  }

  const NetworkSpec& spec() const { return spec_; }
  const std::string& prefix() const { return prefix_; }

  /// x [2, H, W] -> [2, H, W]. Time-embedded networks require `step`.
  Var forward(Tape& t, const ParameterStore& s, Var x, std::optional<int> step = std::nullopt) const {
    const auto& sh = x.shape();
    if (sh.size() != 3 || sh[0] != 2) throw DimensionError("ProxNetwork: input must be [2, H, W]");
    if (spec_.arch == Arch::unet && (sh[1] % 4 || sh[2] % 4))
      throw DimensionError("ProxNetwork: U-Net needs spatial dims divisible by 4");
    std::optional<Var> emb;
    if (spec_.time_embedded) {
      if (!step) throw std::invalid_argument("ProxNetwork: time-embedded network needs a step index");
      emb = (*embed_)(t, s, *step);
    }
    return spec_.arch == Arch::resnet ? forward_resnet(t, s, x, emb) : forward_unet(t, s, x, emb);
  }

  /// Inference on a complex image.
  CVec apply(const ParameterStore& s, std::span<const cplx> x, std::size_t h, std::size_t w,
             std::optional<int> step = std::nullopt) const {
    Tape t;
    Var out = forward(t, s, t.constant(to_channels(x, h, w)), step);
    return from_channels(out.value());
  }

 private:
  Var forward_resnet(Tape& t, const ParameterStore& s, Var x, std::optional<Var> emb) const {
    Var h = in_(t, s, x);
    const std::size_t groups = default_groups(spec_.channels);
    for (const auto& b : res_) {
      Var f = add(h, scale(b.conv2(t, s, relu(b.conv1(t, s, h))), spec_.scale));
      if (b.film) f = film_residual_modulate(f, b.film->alpha(t, s, *emb), b.film->beta(t, s, *emb), spec_.tau, groups);
      h = f;
    }
    return add(x, out_(t, s, h));
  }

  Var forward_unet(Tape& t, const ParameterStore& s, Var x, std::optional<Var> emb) const {
    Var h = in_(t, s, x);
    for (const auto& b : enc0_) h = b(t, s, h, emb);
    Var skip0 = h;
    h = avg_pool2(h);
    for (const auto& b : enc1_) h = b(t, s, h, emb);
    Var skip1 = h;
    h = avg_pool2(h);
    for (const auto& b : mid_) h = b(t, s, h, emb);
    h = concat_channels(upsample2(h), skip1);
    for (const auto& b : dec1_) h = b(t, s, h, emb);
    h = concat_channels(upsample2(h), skip0);
    for (const auto& b : dec0_) h = b(t, s, h, emb);
    return add(x, out_(t, s, silu(out_norm_(t, s, h))));
  }

  NetworkSpec spec_;
  std::string prefix_;
  std::optional<TimeEmbedder> embed_;
  Conv2d in_, out_;
  std::vector<detail::ResBlock> res_;
  std::vector<detail::UnetBlock> enc0_, enc1_, mid_, dec1_, dec0_;
  GroupNormAffine out_norm_;
};

/// Scalar parameter count of a freshly built network.
inline std::size_t parameter_count(const NetworkSpec& spec) {
  ParameterStore store;
  std::mt19937_64 rng(0);
  ProxNetwork net(spec, store, "net", rng);
  return store.scalar_count();
}

}  // namespace teu::nn
