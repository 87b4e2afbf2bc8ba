#ifndef DSSL_AUGMENT_HPP_
#define DSSL_AUGMENT_HPP_

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "dssl/core.hpp"
#include "dssl/random_stream.hpp"

namespace dssl {

enum class AugmentKind { kNone, kWeak, kStrong };

std::string to_string(AugmentKind kind);
AugmentKind augment_kind_from_string(const std::string& s);

/// Weak = random resized crop + hflip. Strong = crop + hflip + rotation +
/// rescale, in that order. Rotation is disabled by rotation_degrees = 0 and
/// scaling by scale_range = (1, 1).
struct AugmentSpec {
  AugmentKind kind = AugmentKind::kWeak;
  double rotation_degrees = 10.0;
  std::pair<double, double> scale_range{0.8, 1.2};
  std::pair<double, double> crop_scale_range{0.6, 1.0};
  double hflip_prob = 0.5;

  static AugmentSpec weak() { return AugmentSpec{}; }
  static AugmentSpec strong() {
    AugmentSpec s;
    s.kind = AugmentKind::kStrong;
    return s;
  }
  static AugmentSpec none() {
    AugmentSpec s;
    s.kind = AugmentKind::kNone;
    return s;
  }

  /// Throws ArgumentError naming the offending field.
  void validate() const;
};

/// Sub-stream ids inside one sample's stream.
enum TransformId : std::uint64_t { kCropStream = 1, kFlipStream = 2, kRotateStream = 3, kScaleStream = 4 };

namespace detail {

// Bilinear sample with edge replication. Interpolation goes through
// std::lerp, which is exact at the endpoints and returns a for lerp(a, a, t).
template <typename Scalar>
Scalar sample_bilinear(const Matrix<Scalar>& img, double y, double x) {
  const double max_y = static_cast<double>(img.rows() - 1);
  const double max_x = static_cast<double>(img.cols() - 1);
  y = std::clamp(y, 0.0, max_y);
  x = std::clamp(x, 0.0, max_x);
  const auto y0 = static_cast<Index>(std::floor(y));
  const auto x0 = static_cast<Index>(std::floor(x));
  const Index y1 = std::min<Index>(y0 + 1, img.rows() - 1);
  const Index x1 = std::min<Index>(x0 + 1, img.cols() - 1);
  const auto fy = static_cast<Scalar>(y - static_cast<double>(y0));
  const auto fx = static_cast<Scalar>(x - static_cast<double>(x0));
  const Scalar top = std::lerp(img(y0, x0), img(y0, x1), fx);
  const Scalar bottom = std::lerp(img(y1, x0), img(y1, x1), fx);
  return std::lerp(top, bottom, fy);
}

// Resample through an inverse map from output pixel to source coordinates.
template <typename Scalar, typename SourceOf>
Matrix<Scalar> remap(const Matrix<Scalar>& img, SourceOf source_of) {
  Matrix<Scalar> out(img.rows(), img.cols());
  for (Index y = 0; y < img.rows(); ++y) {
    for (Index x = 0; x < img.cols(); ++x) {
      const auto [sy, sx] = source_of(static_cast<double>(y), static_cast<double>(x));
      out(y, x) = sample_bilinear(img, sy, sx);
    }
  }
  return out;
}

}  // namespace detail

template <typename Scalar>
Matrix<Scalar> hflip(const Matrix<Scalar>& img) {
  return img.rowwise().reverse();
}

/// Rotation about the image center (counter-clockwise for positive angles in
/// x-right / y-down pixel coordinates), bilinear, edge-replicated.
template <typename Scalar>
Matrix<Scalar> rotate(const Matrix<Scalar>& img, double angle_degrees) {
  if (angle_degrees == 0.0) return img;
  if (std::abs(angle_degrees) > 45.0) {
    throw ArgumentError("rotate: |angle| must be <= 45 degrees");
  }
  const double a = angle_degrees * std::numbers::pi / 180.0;
  const double ca = std::cos(a);
  const double sa = std::sin(a);
  const double cy = 0.5 * static_cast<double>(img.rows() - 1);
  const double cx = 0.5 * static_cast<double>(img.cols() - 1);
  return detail::remap(img, [&](double y, double x) {
    const double dx = x - cx;
    const double dy = y - cy;
    return std::pair{cy - sa * dx + ca * dy, cx + ca * dx + sa * dy};
  });
}

/// Zoom about the image center: content grows for factor > 1 and shrinks for
/// factor < 1, then is cropped / edge-padded back to the input shape.
template <typename Scalar>
Matrix<Scalar> rescale(const Matrix<Scalar>& img, double factor) {
  if (!(factor > 0.0)) throw ArgumentError("rescale: factor must be positive");
  if (factor == 1.0) return img;
  const double cy = 0.5 * static_cast<double>(img.rows() - 1);
  const double cx = 0.5 * static_cast<double>(img.cols() - 1);
  return detail::remap(img, [&](double y, double x) {
    return std::pair{cy + (y - cy) / factor, cx + (x - cx) / factor};
  });
}

/// Square crop covering an area fraction drawn from crop_scale_range at a
/// uniform position, resized back to the input shape.
template <typename Scalar>
Matrix<Scalar> random_resized_crop(const Matrix<Scalar>& img, RandomStream& stream,
                                   std::pair<double, double> crop_scale_range) {
  if (img.rows() < 8 || img.cols() < 8) {
    throw ArgumentError("random_resized_crop: image must be at least 8x8");
  }
  const double area = stream.uniform(crop_scale_range.first, crop_scale_range.second);
  const double side = std::sqrt(area);
  const double rows = static_cast<double>(img.rows());
  const double cols = static_cast<double>(img.cols());
  const double crop_h = rows * side;
  const double crop_w = cols * side;
  const double y0 = stream.uniform(0.0, rows - crop_h);
  const double x0 = stream.uniform(0.0, cols - crop_w);
  if (side == 1.0) return img;
  const double sy = crop_h / rows;
  const double sx = crop_w / cols;
  return detail::remap(img, [&](double y, double x) {
    return std::pair{y0 + (y + 0.5) * sy - 0.5, x0 + (x + 0.5) * sx - 0.5};
  });
}

/// Random resized crop, then horizontal flip with probability hflip_prob.
template <typename Scalar>
Matrix<Scalar> apply_weak(const Matrix<Scalar>& img, const AugmentSpec& spec,
                          const RandomStream& stream) {
  RandomStream crop = stream.child(kCropStream);
  RandomStream flip = stream.child(kFlipStream);
  Matrix<Scalar> out = random_resized_crop(img, crop, spec.crop_scale_range);
  if (flip.next_unit() < spec.hflip_prob) out = hflip(out);
  return out;
}

/// Weak pipeline followed by rotation in +-rotation_degrees and a rescale
/// factor drawn from scale_range.
template <typename Scalar>
Matrix<Scalar> apply_strong(const Matrix<Scalar>& img, const AugmentSpec& spec,
                            const RandomStream& stream) {
  Matrix<Scalar> out = apply_weak(img, spec, stream);
  RandomStream rot = stream.child(kRotateStream);
  RandomStream scale = stream.child(kScaleStream);
  out = rotate(out, rot.uniform(-spec.rotation_degrees, spec.rotation_degrees));
  out = rescale(out, scale.uniform(spec.scale_range.first, spec.scale_range.second));
  return out;
}

template <typename Scalar>
Matrix<Scalar> apply(const Matrix<Scalar>& img, const AugmentSpec& spec,
                     const RandomStream& stream) {
  switch (spec.kind) {
    case AugmentKind::kNone:
      return img;
    case AugmentKind::kWeak:
      return apply_weak(img, spec, stream);
    case AugmentKind::kStrong:
      return apply_strong(img, spec, stream);
  }
  return img;
}

}  // namespace dssl

#endif  // DSSL_AUGMENT_HPP_
