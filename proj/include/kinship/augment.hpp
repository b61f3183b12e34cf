#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <random>
#include <vector>

#include "kinship/errors.hpp"
#include "kinship/random.hpp"

namespace kinship {

inline constexpr int kFaceSize = 112;

/// Interleaved HWC float image with values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, int c) : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h * w * c)) {}

  float& at(int y, int x, int c) { return pixels[static_cast<std::size_t>((y * width + x) * channels + c)]; }
  float at(int y, int x, int c) const {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Aligned faces are expected at 112x112 RGB; detection/alignment happens upstream.
inline void validate_face_shape(const Image& img) {
  if (img.height != kFaceSize || img.width != kFaceSize || img.channels != 3) {
    throw DomainError("face image must be 112x112x3, got " + std::to_string(img.height) + "x" +
                      std::to_string(img.width) + "x" + std::to_string(img.channels));
  }
}

/// Photometric jitter, grayscale and horizontal flip. There is deliberately no
/// crop or any other geometric transform that would break face alignment.
class AugmentPolicy {
 public:
  AugmentPolicy() = default;
  AugmentPolicy(double color_jitter_strength, double grayscale_probability, double horizontal_flip_probability,
                double embedding_noise_sigma)
      : jitter_(color_jitter_strength),
        grayscale_(grayscale_probability),
        flip_(horizontal_flip_probability),
        noise_(embedding_noise_sigma) {
    if (!(jitter_ >= 0)) throw ConfigError("augment: color_jitter_strength must be non-negative");
    if (!(grayscale_ >= 0 && grayscale_ <= 1)) throw ConfigError("augment: grayscale_probability outside [0,1]");
    if (!(flip_ >= 0 && flip_ <= 1)) throw ConfigError("augment: horizontal_flip_probability outside [0,1]");
    if (!(noise_ >= 0)) throw ConfigError("augment: embedding_noise_sigma must be non-negative");
  }

  static AugmentPolicy identity() { return {}; }
  /// Strong jitter, occasional grayscale, coin-flip mirroring.
  static AugmentPolicy standard() { return {0.8, 0.2, 0.5, 0.02}; }

  double color_jitter_strength() const noexcept { return jitter_; }
  double grayscale_probability() const noexcept { return grayscale_; }
  double horizontal_flip_probability() const noexcept { return flip_; }
  double embedding_noise_sigma() const noexcept { return noise_; }

 private:
  double jitter_ = 0;
  double grayscale_ = 0;
  double flip_ = 0;
  double noise_ = 0;
};

namespace detail {

inline float luma(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

inline void clamp01(Image& img) {
  for (auto& p : img.pixels) p = std::clamp(p, 0.0f, 1.0f);
}

}  // namespace detail

/// Image mode. Jitter scales brightness, contrast and saturation by factors in
/// [1-s, 1+s], applied in random order; grayscale and flip fire with their
/// probabilities. Output shape always equals input shape.
inline Image augment(Image img, const AugmentPolicy& policy, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double s = policy.color_jitter_strength();
  if (s > 0 && img.channels == 3) {
    std::uniform_real_distribution<double> factor(std::max(0.0, 1.0 - s), 1.0 + s);
    int order[3] = {0, 1, 2};
    std::shuffle(std::begin(order), std::end(order), rng);
    for (int op : order) {
      const auto k = static_cast<float>(factor(rng));
      if (op == 0) {  // brightness
        for (auto& p : img.pixels) p *= k;
      } else if (op == 1) {  // contrast, around mean luminance
        double mean = 0;
        for (int y = 0; y < img.height; ++y)
          for (int x = 0; x < img.width; ++x) mean += detail::luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
        const auto m = static_cast<float>(mean / (img.height * img.width));
        for (auto& p : img.pixels) p = m + k * (p - m);
      } else {  // saturation, around per-pixel luminance
        for (int y = 0; y < img.height; ++y) {
          for (int x = 0; x < img.width; ++x) {
            const float g = detail::luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = g + k * (img.at(y, x, c) - g);
          }
        }
      }
      detail::clamp01(img);
    }
  }
  if (policy.grayscale_probability() > 0 && img.channels == 3 && unit(rng) < policy.grayscale_probability()) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        const float g = detail::luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = g;
      }
    }
  }
  if (policy.horizontal_flip_probability() > 0 && unit(rng) < policy.horizontal_flip_probability()) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width / 2; ++x) {
        for (int c = 0; c < img.channels; ++c) std::swap(img.at(y, x, c), img.at(y, img.width - 1 - x, c));
      }
    }
  }
  return img;
}

/// Feature mode: i.i.d. zero-mean Gaussian noise on every component.
template <class Derived>
typename Derived::PlainObject augment(const Eigen::MatrixBase<Derived>& features, const AugmentPolicy& policy,
                                      Rng& rng) {
  typename Derived::PlainObject out = features;
  const double sigma = policy.embedding_noise_sigma();
  if (sigma > 0) {
    using Scalar = typename Derived::Scalar;
    std::normal_distribution<double> noise(0.0, sigma);
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += static_cast<Scalar>(noise(rng));
  }
  return out;
}

}  // namespace kinship
