// Copyright 2026 The Practise Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "core/tinyset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace practise {

namespace fs = std::filesystem;

const char* recipe_mode_name(Recipe::Mode mode) {
  switch (mode) {
    case Recipe::Mode::KShot: return "kshot";
    case Recipe::Mode::RandomN: return "random_n";
    case Recipe::Mode::Synthetic: return "synthetic";
  }
  return "?";
}

std::optional<Recipe::Mode> recipe_mode_from_name(const std::string& name) {
  if (name == "kshot") return Recipe::Mode::KShot;
  if (name == "random_n") return Recipe::Mode::RandomN;
  if (name == "synthetic") return Recipe::Mode::Synthetic;
  return std::nullopt;
}

const char* augment_policy_name(AugmentPolicy p) {
  switch (p) {
    case AugmentPolicy::None: return "none";
    case AugmentPolicy::ImageNet: return "imagenet";
    case AugmentPolicy::Cifar: return "cifar";
  }
  return "?";
}

std::optional<AugmentPolicy> augment_policy_from_name(const std::string& name) {
  if (name == "none") return AugmentPolicy::None;
  if (name == "imagenet") return AugmentPolicy::ImageNet;
  if (name == "cifar") return AugmentPolicy::Cifar;
  return std::nullopt;
}

int64_t ImageSource::classes() const {
  int32_t m = -1;
  for (int32_t l : labels) m = std::max(m, l);
  return m + 1;
}

namespace {

// First n entries of a seeded Fisher-Yates shuffle of [0, size).
std::vector<int64_t> draw_without_replacement(int64_t size, int64_t n,
                                              Rng& rng) {
  std::vector<int64_t> idx(size);
  for (int64_t i = 0; i < size; ++i) idx[i] = i;
  for (int64_t i = 0; i < n; ++i) {
    int64_t j = i + static_cast<int64_t>(rng.next_below(size - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

}  // namespace

TinySet sample_tinyset(const ImageSource& source, Recipe::Mode mode,
                       int64_t k_or_n, uint64_t seed) {
  if (source.images.size() != source.labels.size())
    throw_data("source images and labels are misaligned");
  if (k_or_n < 1) throw_data("k_or_n must be at least 1");
  TinySet out;
  out.recipe = {source.name, mode, k_or_n, seed};
  Rng rng(Rng::mix(seed, "sample:" + source.name));

  if (mode == Recipe::Mode::KShot) {
    std::map<int32_t, std::vector<int64_t>> by_class;
    for (size_t i = 0; i < source.labels.size(); ++i)
      by_class[source.labels[i]].push_back(static_cast<int64_t>(i));
    std::vector<int32_t> labels;
    for (const auto& [cls, members] : by_class) {
      if (static_cast<int64_t>(members.size()) < k_or_n)
        throw_data("class " + std::to_string(cls) + " has only " +
                   std::to_string(members.size()) + " items, need " +
                   std::to_string(k_or_n));
      auto picks = draw_without_replacement(
          static_cast<int64_t>(members.size()), k_or_n, rng);
      for (int64_t p : picks) {
        out.images.push_back(source.images[members[p]]);
        labels.push_back(cls);
      }
    }
    out.labels = std::move(labels);
  } else if (mode == Recipe::Mode::RandomN) {
    const int64_t size = static_cast<int64_t>(source.images.size());
    if (size < k_or_n)
      throw_data("source has " + std::to_string(size) + " items, need " +
                 std::to_string(k_or_n));
    auto picks = draw_without_replacement(size, k_or_n, rng);
    std::vector<int32_t> labels;
    for (int64_t p : picks) {
      out.images.push_back(source.images[p]);
      labels.push_back(source.labels[p]);
    }
    out.labels = std::move(labels);
  } else {
    throw_data("synthetic mode cannot sample from a source");
  }
  return out;
}

TinySet synth_gaussian(int64_t count, int64_t channels, int64_t height,
                       int64_t width, uint64_t seed) {
  if (count < 1) throw_data("synthetic set needs at least one image");
  TinySet out;
  out.recipe = {"gaussian", Recipe::Mode::Synthetic, count, seed};
  for (int64_t i = 0; i < count; ++i) {
    Rng rng(Rng::mix(seed, static_cast<uint64_t>(i)));
    out.images.push_back(Tensor::normal({channels, height, width}, rng));
  }
  return out;
}

namespace {

void draw_pattern(Tensor& img, int cls, Rng& rng) {
  const int64_t hw = 32;
  float bg[3], fg[3];
  for (int c = 0; c < 3; ++c) {
    bg[c] = rng.uniform(0.05f, 0.5f);
    fg[c] = rng.uniform(0.45f, 0.95f);
  }
  const float cx = rng.uniform(9.0f, 23.0f);
  const float cy = rng.uniform(9.0f, 23.0f);
  const float r = rng.uniform(4.5f, 10.0f);
  const int period = 4 + static_cast<int>(rng.next_below(4));
  const int phase = static_cast<int>(rng.next_below(period));
  const float thick = rng.uniform(1.5f, 3.0f);
  const bool slope = rng.next_below(2) == 0;

  for (int64_t y = 0; y < hw; ++y)
    for (int64_t x = 0; x < hw; ++x) {
      const float dx = x - cx, dy = y - cy;
      bool on = false;
      switch (cls) {
        case 0: on = dx * dx + dy * dy <= r * r; break;
        case 1: {
          float d = std::sqrt(dx * dx + dy * dy);
          on = std::fabs(d - r) <= thick;
          break;
        }
        case 2: on = std::fabs(dx) <= r && std::fabs(dy) <= r; break;
        case 3: on = std::fabs(dx) + std::fabs(dy) <= r; break;
        case 4:
          on = (std::fabs(dx) <= thick && std::fabs(dy) <= r) ||
               (std::fabs(dy) <= thick && std::fabs(dx) <= r);
          break;
        case 5: on = ((y + phase) / period) % 2 == 0; break;
        case 6: on = ((x + phase) / period) % 2 == 0; break;
        case 7:
          on = (((x + phase) / period) + ((y + phase) / period)) % 2 == 0;
          break;
        case 8:
          on = std::fabs((slope ? dx - dy : dx + dy)) <= thick &&
               std::fabs(dx) <= r + 3 && std::fabs(dy) <= r + 3;
          break;
        case 9:
          on = (std::fabs(dx - dy) <= thick || std::fabs(dx + dy) <= thick) &&
               std::fabs(dx) <= r && std::fabs(dy) <= r;
          break;
        default: break;
      }
      for (int c = 0; c < 3; ++c) {
        float v = on ? fg[c] : bg[c];
        v += 0.15f * rng.next_normal();
        img.data[(c * hw + y) * hw + x] = std::clamp(v, 0.0f, 1.0f);
      }
    }
}

}  // namespace

ImageSource synth_patterns(int64_t count, uint64_t seed) {
  if (count < 1) throw_data("pattern source needs at least one image");
  ImageSource src;
  src.name = "patterns10";
  for (int64_t i = 0; i < count; ++i) {
    Rng rng(Rng::mix(Rng::mix(seed, "patterns10"), static_cast<uint64_t>(i)));
    Tensor img({3, 32, 32});
    const int cls = static_cast<int>(i % 10);
    draw_pattern(img, cls, rng);
    src.images.push_back(std::move(img));
    src.labels.push_back(cls);
  }
  return src;
}

namespace {

// Bilinear resize of one [C,h,w] region (y0,x0,h,w) to [C,out,out].
void resize_crop(const float* src, int64_t c, int64_t h, int64_t w, float y0,
                 float x0, float ch, float cw, int64_t out, float* dst) {
  for (int64_t ci = 0; ci < c; ++ci) {
    const float* plane = src + ci * h * w;
    float* dplane = dst + ci * out * out;
    for (int64_t y = 0; y < out; ++y)
      for (int64_t x = 0; x < out; ++x) {
        float sy = y0 + (y + 0.5f) * ch / out - 0.5f;
        float sx = x0 + (x + 0.5f) * cw / out - 0.5f;
        int64_t iy = static_cast<int64_t>(std::floor(sy));
        int64_t ix = static_cast<int64_t>(std::floor(sx));
        float fy = sy - iy, fx = sx - ix;
        auto at = [&](int64_t yy, int64_t xx) {
          yy = std::clamp<int64_t>(yy, 0, h - 1);
          xx = std::clamp<int64_t>(xx, 0, w - 1);
          return plane[yy * w + xx];
        };
        float top = at(iy, ix) * (1 - fx) + at(iy, ix + 1) * fx;
        float bot = at(iy + 1, ix) * (1 - fx) + at(iy + 1, ix + 1) * fx;
        dplane[y * out + x] = top * (1 - fy) + bot * fy;
      }
  }
}

}  // namespace

Tensor augment_batch(const Tensor& batch, AugmentPolicy policy,
                     uint64_t seed) {
  if (batch.rank() != 4) throw_data("augment: batch must be [N,C,H,W]");
  if (policy == AugmentPolicy::None) return batch;
  const int64_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2),
                w = batch.dim(3);

  if (policy == AugmentPolicy::Cifar) {
    if (h != 32 || w != 32)
      throw_data("cifar augmentation expects 32x32 inputs");
    Tensor out(batch.shape);
    const int64_t ph = 40, pad = 4;
    std::vector<float> padded(static_cast<size_t>(c) * ph * ph);
    for (int64_t i = 0; i < n; ++i) {
      Rng rng(Rng::mix(seed, static_cast<uint64_t>(i)));
      // Reflection pad by 4.
      const float* src = batch.ptr() + i * c * h * w;
      for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < ph; ++y)
          for (int64_t x = 0; x < ph; ++x) {
            int64_t sy = std::abs(y - pad);
            if (sy >= h) sy = 2 * (h - 1) - sy;
            int64_t sx = std::abs(x - pad);
            if (sx >= w) sx = 2 * (w - 1) - sx;
            padded[(ci * ph + y) * ph + x] = src[(ci * h + sy) * w + sx];
          }
      const int64_t oy = static_cast<int64_t>(rng.next_below(9));
      const int64_t ox = static_cast<int64_t>(rng.next_below(9));
      const bool flip = rng.next_below(2) == 1;
      float* dst = out.ptr() + i * c * h * w;
      for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < h; ++y)
          for (int64_t x = 0; x < w; ++x) {
            int64_t sx = flip ? (w - 1 - x) : x;
            dst[(ci * h + y) * w + x] =
                padded[(ci * ph + y + oy) * ph + sx + ox];
          }
    }
    return out;
  }

  // ImageNet policy: random resized crop (scale 0.08..1, ratio 3/4..4/3,
  // center fallback) to the input resolution, then horizontal flip.
  if (h != 224 || w != 224)
    throw_data("imagenet augmentation expects 224x224 inputs");
  Tensor out(batch.shape);
  for (int64_t i = 0; i < n; ++i) {
    Rng rng(Rng::mix(seed, static_cast<uint64_t>(i)));
    const float area = static_cast<float>(h * w);
    float ch = -1, cw = -1, y0 = 0, x0 = 0;
    for (int attempt = 0; attempt < 10; ++attempt) {
      float target = area * rng.uniform(0.08f, 1.0f);
      float log_ratio =
          rng.uniform(std::log(3.0f / 4.0f), std::log(4.0f / 3.0f));
      float ratio = std::exp(log_ratio);
      float cwf = std::sqrt(target * ratio);
      float chf = std::sqrt(target / ratio);
      if (cwf <= w && chf <= h) {
        cw = cwf;
        ch = chf;
        y0 = rng.uniform(0.0f, h - chf);
        x0 = rng.uniform(0.0f, w - cwf);
        break;
      }
    }
    if (ch < 0) {  // central fallback
      ch = cw = static_cast<float>(std::min(h, w));
      y0 = (h - ch) / 2;
      x0 = (w - cw) / 2;
    }
    const bool flip = rng.next_below(2) == 1;
    resize_crop(batch.ptr() + i * c * h * w, c, h, w, y0, x0, ch, cw, 224,
                out.ptr() + i * c * h * w);
    if (flip) {
      float* dst = out.ptr() + i * c * h * w;
      for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < h; ++y)
          for (int64_t x = 0; x < w / 2; ++x)
            std::swap(dst[(ci * h + y) * w + x],
                      dst[(ci * h + y) * w + (w - 1 - x)]);
    }
  }
  return out;
}

void save_tinyset(const TinySet& set, const fs::path& dir) {
  if (set.images.empty()) throw_data("cannot save an empty tiny set");
  fs::create_directories(dir);
  const auto& shape = set.images[0].shape;
  for (const auto& img : set.images)
    if (img.shape != shape) throw_data("tiny set images must share a shape");

  std::ofstream r(dir / "recipe.txt");
  r << "practise tinyset\n";
  r << "version 1\n";
  r << "source " << set.recipe.source << "\n";
  r << "mode " << recipe_mode_name(set.recipe.mode) << "\n";
  r << "k_or_n " << set.recipe.k_or_n << "\n";
  r << "seed " << set.recipe.seed << "\n";
  r << "count " << set.images.size() << "\n";
  r << "shape " << shape[0] << " " << shape[1] << " " << shape[2] << "\n";
  r << "labeled " << (set.labeled() ? 1 : 0) << "\n";
  if (!r) throw_data("cannot write recipe in " + dir.string());

  std::ofstream img(dir / "images.bin", std::ios::binary);
  for (const auto& t : set.images)
    img.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!img) throw_data("cannot write images in " + dir.string());
  if (set.labeled()) {
    std::ofstream lab(dir / "labels.bin", std::ios::binary);
    lab.write(reinterpret_cast<const char*>(set.labels->data()),
              static_cast<std::streamsize>(set.labels->size() *
                                           sizeof(int32_t)));
    if (!lab) throw_data("cannot write labels in " + dir.string());
  }
}

TinySet load_tinyset(const fs::path& dir) {
  std::ifstream r(dir / "recipe.txt");
  if (!r) throw_data("missing recipe in " + dir.string());
  std::string line;
  if (!std::getline(r, line) || line != "practise tinyset")
    throw_data("not a practise tiny set: " + dir.string());
  TinySet out;
  int64_t count = 0;
  std::vector<int64_t> shape(3, 0);
  bool labeled = false;
  while (std::getline(r, line)) {
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "version") {
      int64_t v;
      is >> v;
      if (v != 1) throw_data("unsupported tiny set version");
    } else if (key == "source") {
      is >> out.recipe.source;
    } else if (key == "mode") {
      std::string m;
      is >> m;
      auto mode = recipe_mode_from_name(m);
      if (!mode) throw_data("unknown recipe mode " + m);
      out.recipe.mode = *mode;
    } else if (key == "k_or_n") {
      is >> out.recipe.k_or_n;
    } else if (key == "seed") {
      is >> out.recipe.seed;
    } else if (key == "count") {
      is >> count;
    } else if (key == "shape") {
      is >> shape[0] >> shape[1] >> shape[2];
    } else if (key == "labeled") {
      int v;
      is >> v;
      labeled = v != 0;
    } else if (!key.empty()) {
      throw_data("unknown recipe key " + key);
    }
  }
  if (count < 1 || shape[0] < 1) throw_data("recipe is incomplete");

  const int64_t per = shape[0] * shape[1] * shape[2];
  std::ifstream img(dir / "images.bin", std::ios::binary | std::ios::ate);
  if (!img) throw_data("missing images.bin in " + dir.string());
  if (static_cast<int64_t>(img.tellg()) !=
      count * per * static_cast<int64_t>(sizeof(float)))
    throw_data("images.bin length mismatch in " + dir.string());
  img.seekg(0);
  for (int64_t i = 0; i < count; ++i) {
    Tensor t(shape);
    img.read(reinterpret_cast<char*>(t.data.data()),
             static_cast<std::streamsize>(per * sizeof(float)));
    out.images.push_back(std::move(t));
  }
  if (labeled) {
    std::ifstream lab(dir / "labels.bin", std::ios::binary | std::ios::ate);
    if (!lab) throw_data("missing labels.bin in " + dir.string());
    if (static_cast<int64_t>(lab.tellg()) !=
        count * static_cast<int64_t>(sizeof(int32_t)))
      throw_data("labels.bin length mismatch in " + dir.string());
    lab.seekg(0);
    std::vector<int32_t> labels(count);
    lab.read(reinterpret_cast<char*>(labels.data()),
             static_cast<std::streamsize>(count * sizeof(int32_t)));
    out.labels = std::move(labels);
  }
  return out;
}

namespace {

struct RawImage {
  int64_t w = 0, h = 0;
  std::vector<float> rgb;  // [3,h,w] in [0,1]
};

RawImage decode_pnm(std::ifstream& in, const std::string& path) {
  std::string magic;
  in >> magic;
  if (magic != "P6" && magic != "P5") throw_data("unsupported PNM: " + path);
  auto next_int = [&]() {
    int v;
    while (in >> std::ws, in.peek() == '#') in.ignore(1 << 20, '\n');
    if (!(in >> v)) throw_data("truncated PNM header: " + path);
    return v;
  };
  const int w = next_int(), h = next_int(), maxv = next_int();
  if (maxv <= 0 || maxv > 255) throw_data("unsupported PNM depth: " + path);
  in.ignore(1);  // single whitespace after header
  const int ch = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h * ch);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  if (!in) throw_data("truncated PNM payload: " + path);
  RawImage img;
  img.w = w;
  img.h = h;
  img.rgb.assign(static_cast<size_t>(3) * h * w, 0.0f);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        unsigned char v = buf[(y * w + x) * ch + (ch == 3 ? c : 0)];
        img.rgb[(c * h + y) * w + x] = static_cast<float>(v) / maxv;
      }
  return img;
}

RawImage decode_bmp(std::ifstream& in, const std::string& path) {
  std::vector<unsigned char> header(54);
  in.read(reinterpret_cast<char*>(header.data()), 54);
  if (!in || header[0] != 'B' || header[1] != 'M')
    throw_data("unsupported BMP: " + path);
  auto u32 = [&](size_t off) {
    return static_cast<uint32_t>(header[off]) |
           (static_cast<uint32_t>(header[off + 1]) << 8) |
           (static_cast<uint32_t>(header[off + 2]) << 16) |
           (static_cast<uint32_t>(header[off + 3]) << 24);
  };
  const uint32_t offset = u32(10);
  const int32_t w = static_cast<int32_t>(u32(18));
  const int32_t h = static_cast<int32_t>(u32(22));
  const uint16_t bpp = static_cast<uint16_t>(header[28] | (header[29] << 8));
  const uint32_t compression = u32(30);
  if (compression != 0 || (bpp != 24 && bpp != 32) || w <= 0 || h == 0)
    throw_data("unsupported BMP variant: " + path);
  const bool flipped = h > 0;
  const int64_t ah = std::abs(h);
  in.seekg(offset);
  const int64_t stride = ((w * bpp / 8 + 3) / 4) * 4;
  std::vector<unsigned char> row(stride);
  RawImage img;
  img.w = w;
  img.h = ah;
  img.rgb.assign(static_cast<size_t>(3) * ah * w, 0.0f);
  for (int64_t y = 0; y < ah; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), stride);
    if (!in) throw_data("truncated BMP payload: " + path);
    const int64_t dy = flipped ? ah - 1 - y : y;
    for (int64_t x = 0; x < w; ++x) {
      const unsigned char* px = row.data() + x * bpp / 8;
      img.rgb[(0 * ah + dy) * w + x] = px[2] / 255.0f;
      img.rgb[(1 * ah + dy) * w + x] = px[1] / 255.0f;
      img.rgb[(2 * ah + dy) * w + x] = px[0] / 255.0f;
    }
  }
  return img;
}

}  // namespace

ImageSource load_image_folder(const fs::path& root,
                              const std::vector<float>& mean,
                              const std::vector<float>& stddev) {
  if (!fs::is_directory(root))
    throw_data("image folder does not exist: " + root.string());
  if (!mean.empty() && mean.size() != 3)
    throw_data("normalization mean must have 3 entries");
  if (!stddev.empty() && stddev.size() != 3)
    throw_data("normalization std must have 3 entries");

  std::vector<std::string> class_names;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_names.push_back(e.path().filename().string());
  std::sort(class_names.begin(), class_names.end());
  if (class_names.empty())
    throw_data("image folder has no class subdirectories: " + root.string());

  ImageSource src;
  src.name = "folder:" + root.string();
  int64_t want_h = -1, want_w = -1;
  for (size_t cls = 0; cls < class_names.size(); ++cls) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(root / class_names[cls]))
      if (e.is_regular_file()) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::ifstream in(f, std::ios::binary);
      if (!in) throw_data("cannot open " + f);
      std::string ext = fs::path(f).extension().string();
      for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
      RawImage raw;
      if (ext == ".ppm" || ext == ".pgm")
        raw = decode_pnm(in, f);
      else if (ext == ".bmp")
        raw = decode_bmp(in, f);
      else
        throw_data("unsupported image format (" + ext + "): " + f);
      if (want_h < 0) {
        want_h = raw.h;
        want_w = raw.w;
      } else if (raw.h != want_h || raw.w != want_w) {
        throw_data("image size mismatch in folder source: " + f);
      }
      Tensor t({3, raw.h, raw.w}, std::move(raw.rgb));
      if (!mean.empty()) {
        const int64_t hw = raw.h * raw.w;
        for (int c = 0; c < 3; ++c) {
          const float m = mean[c];
          const float s = stddev.empty() ? 1.0f : stddev[c];
          float* p = t.ptr() + c * hw;
          for (int64_t j = 0; j < hw; ++j) p[j] = (p[j] - m) / s;
        }
      }
      src.images.push_back(std::move(t));
      src.labels.push_back(static_cast<int32_t>(cls));
    }
  }
  if (src.images.empty())
    throw_data("image folder is empty: " + root.string());
  return src;
}

Tensor stack_batch(const TinySet& set, const std::vector<int64_t>& indices) {
  if (indices.empty()) throw_data("cannot stack an empty batch");
  const auto& shape = set.images.at(indices[0]).shape;
  Tensor out({static_cast<int64_t>(indices.size()), shape[0], shape[1],
              shape[2]});
  const int64_t per = shape[0] * shape[1] * shape[2];
  for (size_t i = 0; i < indices.size(); ++i) {
    const Tensor& img = set.images.at(indices[i]);
    if (img.shape != shape) throw_data("tiny set images must share a shape");
    std::copy_n(img.ptr(), per, out.ptr() + i * per);
  }
  return out;
}

}  // namespace practise
