#include "vidcl/frames.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "vidcl/errors.hpp"
#include "vidcl/synthetic.hpp"

namespace vidcl::data {

FrameStack take_frames(const FrameStack& src, const std::vector<long long>& indices) {
  FrameStack out;
  out.frames = static_cast<int>(indices.size());
  out.height = src.height;
  out.width = src.width;
  out.data.resize(out.frame_bytes() * indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const long long f = indices[i];
    if (f < 0 || f >= src.frames)
      throw DataError("frame index " + std::to_string(f) + " out of range");
    std::memcpy(out.data.data() + i * out.frame_bytes(),
                src.data.data() + static_cast<std::size_t>(f) * src.frame_bytes(),
                src.frame_bytes());
  }
  return out;
}

namespace {

struct Locator {
  std::string scheme;
  std::string body;
  long long offset = 0;
};

Locator parse_locator(const std::string& src) {
  Locator loc;
  std::string s = src;
  auto hash = s.rfind('#');
  if (hash != std::string::npos && hash + 1 < s.size()) {
    const std::string tail = s.substr(hash + 1);
    bool digits = !tail.empty();
    for (char c : tail) digits = digits && c >= '0' && c <= '9';
    if (digits) {
      loc.offset = std::stoll(tail);
      s = s.substr(0, hash);
    }
  }
  auto colon = s.find(':');
  if (colon == std::string::npos)
    throw DataError("frame_source '" + src + "' has no scheme");
  loc.scheme = s.substr(0, colon);
  loc.body = s.substr(colon + 1);
  return loc;
}

std::unordered_map<std::string, std::string> parse_fields(const std::string& body) {
  std::unordered_map<std::string, std::string> fields;
  std::size_t pos = 0;
  while (pos < body.size()) {
    auto semi = body.find(';', pos);
    if (semi == std::string::npos) semi = body.size();
    const std::string item = body.substr(pos, semi - pos);
    auto eq = item.find('=');
    if (eq != std::string::npos) fields[item.substr(0, eq)] = item.substr(eq + 1);
    pos = semi + 1;
  }
  return fields;
}

}  // namespace

FrameStack FrameProvider::render(const VideoRecord& rec) const {
  const Locator loc = parse_locator(rec.frame_source);
  if (loc.scheme == "synth") {
    auto f = parse_fields(loc.body);
    try {
      const auto ps = std::stoull(f.at("ps"));
      const auto vs = std::stoull(f.at("v"));
      const int cls = std::stoi(f.at("c"));
      const int nc = std::stoi(f.at("nc"));
      const int h = std::stoi(f.at("h"));
      const int w = std::stoi(f.at("w"));
      const double ts = std::stod(f.at("ts"));
      const MotionPattern pattern = class_pattern(ps, cls, nc, ts);
      return render_synthetic(pattern, vs, static_cast<int>(rec.total_frames), h, w,
                              loc.offset);
    } catch (const std::out_of_range&) {
      throw DataError("record '" + rec.video_id + "': malformed synth locator '" +
                      rec.frame_source + "'");
    }
  }
  if (loc.scheme == "dir") {
    FrameStack stack;
    for (long long i = 0; i < rec.total_frames; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "/frame_%06lld.pgm",
                    static_cast<long long>(loc.offset + i));
      int h = 0, w = 0;
      auto pixels = read_pgm(loc.body + name, h, w);
      if (stack.frames == 0) {
        stack.height = h;
        stack.width = w;
        stack.data.reserve(static_cast<std::size_t>(rec.total_frames) * h * w);
      } else if (h != stack.height || w != stack.width) {
        throw DataError("record '" + rec.video_id + "': frame size mismatch");
      }
      stack.data.insert(stack.data.end(), pixels.begin(), pixels.end());
      ++stack.frames;
    }
    return stack;
  }
  throw DataError("record '" + rec.video_id + "': unknown frame_source scheme '" +
                  loc.scheme + "'");
}

FrameStack FrameProvider::load(const VideoRecord& rec) const {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(rec.frame_source);
    if (it != cache_.end()) return *it->second;
  }
  auto stack = std::make_shared<const FrameStack>(render(rec));
  std::lock_guard<std::mutex> lock(mutex_);
  cache_.emplace(rec.frame_source, stack);
  return *stack;
}

FrameStack FrameProvider::load_frames(const VideoRecord& rec,
                                      const std::vector<long long>& indices) const {
  return take_frames(load(rec), indices);
}

void write_pgm(const std::string& path, const std::uint8_t* pixels, int height,
               int width) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels),
            static_cast<std::streamsize>(height) * width);
}

std::vector<std::uint8_t> read_pgm(const std::string& path, int& height, int& width) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string magic;
  int maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (magic != "P5" || maxval != 255 || width <= 0 || height <= 0)
    throw DataError("'" + path + "' is not an 8-bit binary PGM");
  in.get();  // single whitespace after maxval
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(height) * width);
  in.read(reinterpret_cast<char*>(pixels.data()),
          static_cast<std::streamsize>(pixels.size()));
  if (!in) throw DataError("'" + path + "' is truncated");
  return pixels;
}

}  // namespace vidcl::data
