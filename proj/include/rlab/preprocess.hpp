#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <vector>

#include "rlab/tensor.hpp"

namespace rlab {

/// Single-channel intensity image with values in [0, 1], row-major.
struct Frame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Frame() = default;
  Frame(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

  double& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }

  bool operator==(const Frame&) const = default;
};

inline constexpr std::size_t kObservationSide = 84;
inline constexpr std::size_t kStackDepth = 4;

/// 1 where the pixel is >= threshold, else 0.
Frame binarize(const Frame& frame, double threshold = 0.5);
Frame invert(const Frame& frame);
/// Binary erosion / dilation with a 3x3 all-ones element; outside is background.
Frame erode3x3(const Frame& frame);
Frame dilate3x3(const Frame& frame);
Frame resize_nearest(const Frame& frame, std::size_t height, std::size_t width);

/// binarize -> invert -> erode -> dilate at the render resolution.
Frame clean_frame(const Frame& frame);

/// The full pipeline: clean_frame then nearest resize to 84x84.
Frame preprocess(const Frame& frame);

/// Keeps the last four preprocessed frames; newest last. Before four frames
/// have been seen the oldest available one is replicated.
class FrameStack {
 public:
  void clear() { frames_.clear(); }
  void push(Frame frame);
  std::size_t size() const { return frames_.size(); }
  /// Tensor [4 x H x W]; throws when empty.
  Tensor observation() const;

 private:
  std::deque<Frame> frames_;
};

/// Binary PGM (P5, maxval 255) of a frame.
void write_pgm(const Frame& frame, const std::filesystem::path& path);

}  // namespace rlab
