#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "vidcl/manifest.hpp"

namespace vidcl::data {

// 8-bit grayscale frame stack, frame-major layout.
struct FrameStack {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  std::uint8_t& at(int f, int y, int x) {
    return data[(static_cast<std::size_t>(f) * height + y) * width + x];
  }
  std::uint8_t at(int f, int y, int x) const {
    return data[(static_cast<std::size_t>(f) * height + y) * width + x];
  }
  std::size_t frame_bytes() const {
    return static_cast<std::size_t>(height) * width;
  }
  bool operator==(const FrameStack&) const = default;
};

// Keeps the frames of `src` whose indices appear in `indices`, in order.
FrameStack take_frames(const FrameStack& src, const std::vector<long long>& indices);

// Resolves frame_source locators:
//   synth:k=v;...   deterministic generated video (see synthetic.hpp)
//   dir:<path>      pre-extracted frames <path>/frame_000000.pgm, ...
// Either form may carry a trailing '#<offset>' mapping the record's frame 0
// onto that frame of the underlying source.
class FrameProvider {
 public:
  // All frames of the record. Cached per frame_source.
  FrameStack load(const VideoRecord& rec) const;
  // The record's frames at the given indices, in the given order.
  FrameStack load_frames(const VideoRecord& rec,
                         const std::vector<long long>& indices) const;

 private:
  FrameStack render(const VideoRecord& rec) const;

  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, std::shared_ptr<const FrameStack>> cache_;
};

// Minimal binary PGM (P5, 8-bit) support for directory-backed sources.
void write_pgm(const std::string& path, const std::uint8_t* pixels, int height, int width);
std::vector<std::uint8_t> read_pgm(const std::string& path, int& height, int& width);

}  // namespace vidcl::data
