#include "rlab/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace rlab {

Frame binarize(const Frame& frame, double threshold) {
  Frame out(frame.height, frame.width);
  for (std::size_t i = 0; i < frame.pixels.size(); ++i) out.pixels[i] = frame.pixels[i] >= threshold ? 1.0 : 0.0;
  return out;
}

Frame invert(const Frame& frame) {
  Frame out(frame.height, frame.width);
  for (std::size_t i = 0; i < frame.pixels.size(); ++i) out.pixels[i] = 1.0 - frame.pixels[i];
  return out;
}

namespace {

// Shared 3x3 neighbourhood scan; erosion needs all nine set, dilation any.
Frame morph3x3(const Frame& frame, bool erode) {
  Frame out(frame.height, frame.width);
  const auto h = static_cast<std::ptrdiff_t>(frame.height);
  const auto w = static_cast<std::ptrdiff_t>(frame.width);
  for (std::ptrdiff_t r = 0; r < h; ++r) {
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      bool all = true, any = false;
      for (std::ptrdiff_t dr = -1; dr <= 1; ++dr) {
        for (std::ptrdiff_t dc = -1; dc <= 1; ++dc) {
          const std::ptrdiff_t rr = r + dr, cc = c + dc;
          const bool set = rr >= 0 && cc >= 0 && rr < h && cc < w && frame.at(rr, cc) != 0.0;
          all = all && set;
          any = any || set;
        }
      }
      out.at(r, c) = (erode ? all : any) ? 1.0 : 0.0;
    }
  }
  return out;
}

}  // namespace

Frame erode3x3(const Frame& frame) { return morph3x3(frame, true); }
Frame dilate3x3(const Frame& frame) { return morph3x3(frame, false); }

Frame resize_nearest(const Frame& frame, std::size_t height, std::size_t width) {
  if (frame.height == 0 || frame.width == 0) throw std::invalid_argument("resize_nearest: empty frame");
  Frame out(height, width);
  for (std::size_t r = 0; r < height; ++r) {
    const std::size_t sr = r * frame.height / height;
    for (std::size_t c = 0; c < width; ++c) out.at(r, c) = frame.at(sr, c * frame.width / width);
  }
  return out;
}

Frame clean_frame(const Frame& frame) { return dilate3x3(erode3x3(invert(binarize(frame)))); }

Frame preprocess(const Frame& frame) { return resize_nearest(clean_frame(frame), kObservationSide, kObservationSide); }

void FrameStack::push(Frame frame) {
  if (!frames_.empty() && (frame.height != frames_.back().height || frame.width != frames_.back().width)) {
    throw std::invalid_argument("FrameStack: frame size changed");
  }
  frames_.push_back(std::move(frame));
  while (frames_.size() > kStackDepth) frames_.pop_front();
}

Tensor FrameStack::observation() const {
  if (frames_.empty()) throw std::logic_error("FrameStack: no frames");
  const Frame& first = frames_.front();
  Tensor out({kStackDepth, first.height, first.width});
  const std::size_t missing = kStackDepth - frames_.size();
  const std::size_t plane = first.height * first.width;
  for (std::size_t k = 0; k < kStackDepth; ++k) {
    const Frame& f = frames_[k < missing ? 0 : k - missing];
    std::copy(f.pixels.begin(), f.pixels.end(), out.raw() + k * plane);
  }
  return out;
}

void write_pgm(const Frame& frame, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path.string());
  out << "P5\n" << frame.width << ' ' << frame.height << "\n255\n";
  for (double v : frame.pixels) {
    const auto byte = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    out.put(static_cast<char>(byte));
  }
}

}  // namespace rlab
