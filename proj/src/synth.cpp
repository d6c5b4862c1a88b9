#include "deeprank/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "deeprank/sampler.hpp"

namespace deeprank {

namespace {

using Color = std::array<double, 3>;

double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

Color random_color(Rng& rng) { return {uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95)}; }

struct Appearance {
  Color hair, skin, torso, stripe, legs, shoes, bag;
  bool striped = false;
  bool short_sleeves = false;
  bool has_bag = false;
  bool bag_left = false;
};

Appearance random_appearance(Rng& rng) {
  static constexpr std::array<Color, 4> skins = {{{0.96, 0.80, 0.69}, {0.87, 0.67, 0.52}, {0.64, 0.45, 0.32}, {0.40, 0.27, 0.18}}};
  Appearance a;
  a.hair = {uniform(rng, 0.0, 0.5), uniform(rng, 0.0, 0.4), uniform(rng, 0.0, 0.3)};
  a.skin = skins[rng() % skins.size()];
  a.torso = random_color(rng);
  a.stripe = random_color(rng);
  a.legs = random_color(rng);
  const double shoe = uniform(rng, 0.05, 0.35);
  a.shoes = {shoe, shoe, shoe};
  a.bag = random_color(rng);
  a.striped = uniform(rng, 0, 1) < 0.3;
  a.short_sleeves = uniform(rng, 0, 1) < 0.4;
  a.has_bag = uniform(rng, 0, 1) < 0.5;
  a.bag_left = uniform(rng, 0, 1) < 0.5;
  return a;
}

class Canvas {
 public:
  Canvas(std::size_t h, std::size_t w) : h_(h), w_(w), pixels_({3, h, w}) {}

  // Rectangle in 64x32 reference coordinates, scaled to the canvas.
  void rect(double y0, double x0, double y1, double x1, const Color& c, double blend = 1.0) {
    const int r0 = sy(y0), r1 = sy(y1), c0 = sx(x0), c1 = sx(x1);
    for (int y = std::max(r0, 0); y < std::min(r1, static_cast<int>(h_)); ++y) {
      for (int x = std::max(c0, 0); x < std::min(c1, static_cast<int>(w_)); ++x) put(y, x, c, blend);
    }
  }

  void ellipse(double cy, double cx, double ry, double rx, const Color& c, double max_y) {
    const int r0 = sy(cy - ry), r1 = sy(cy + ry) + 1, c0 = sx(cx - rx), c1 = sx(cx + rx) + 1;
    for (int y = std::max(r0, 0); y < std::min(r1, static_cast<int>(h_)); ++y) {
      for (int x = std::max(c0, 0); x < std::min(c1, static_cast<int>(w_)); ++x) {
        const double py = (y + 0.5) * 64.0 / static_cast<double>(h_);
        const double px = (x + 0.5) * 32.0 / static_cast<double>(w_);
        const double dy = (py - cy) / ry, dx = (px - cx) / rx;
        if (dy * dy + dx * dx <= 1.0 && py <= max_y) put(y, x, c, 1.0);
      }
    }
  }

  Tensor<float>& pixels() { return pixels_; }

 private:
  int sy(double y) const { return static_cast<int>(std::lround(y * static_cast<double>(h_) / 64.0)); }
  int sx(double x) const { return static_cast<int>(std::lround(x * static_cast<double>(w_) / 32.0)); }
  void put(int y, int x, const Color& c, double blend) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      float& p = pixels_.at(ch, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
      p = static_cast<float>((1.0 - blend) * p + blend * c[ch]);
    }
  }

  std::size_t h_, w_;
  Tensor<float> pixels_;
};

void render_figure(Canvas& canvas, const Appearance& a, double dy, double dx) {
  // legs and shoes
  canvas.rect(36 + dy, 10 + dx, 58 + dy, 15 + dx, a.legs);
  canvas.rect(36 + dy, 17 + dx, 58 + dy, 22 + dx, a.legs);
  canvas.rect(58 + dy, 9 + dx, 61 + dy, 15 + dx, a.shoes);
  canvas.rect(58 + dy, 17 + dx, 61 + dy, 23 + dx, a.shoes);
  // arms: sleeve then forearm
  const Color& forearm = a.short_sleeves ? a.skin : a.torso;
  canvas.rect(16 + dy, 6 + dx, 24 + dy, 9 + dx, a.torso);
  canvas.rect(16 + dy, 23 + dx, 24 + dy, 26 + dx, a.torso);
  canvas.rect(24 + dy, 6 + dx, 34 + dy, 9 + dx, forearm);
  canvas.rect(24 + dy, 23 + dx, 34 + dy, 26 + dx, forearm);
  // torso
  canvas.rect(15 + dy, 9 + dx, 36 + dy, 23 + dx, a.torso);
  if (a.striped) {
    for (double y = 17; y + 2 <= 35; y += 5) canvas.rect(y + dy, 9 + dx, y + 2 + dy, 23 + dx, a.stripe);
  }
  // head and hair
  canvas.ellipse(9 + dy, 16 + dx, 5.5, 4.5, a.skin, 64);
  canvas.ellipse(8 + dy, 16 + dx, 5.0, 4.8, a.hair, 7 + dy);
  if (a.has_bag) {
    const double x0 = a.bag_left ? 1 : 25;
    canvas.rect(21 + dy, x0 + dx, 33 + dy, x0 + 6 + dx, a.bag);
    canvas.rect(15 + dy, x0 + 2 + dx, 21 + dy, x0 + 3 + dx, a.bag);
  }
}

// Rotation about the grey axis by `angle` radians.
std::array<std::array<double, 3>, 3> hue_rotation(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double k = (1.0 - c) / 3.0, r = std::sqrt(1.0 / 3.0) * s;
  return {{{c + k, k - r, k + r}, {k + r, c + k, k - r}, {k - r, k + r, c + k}}};
}

Tensor<float> render_image(const Appearance& a, const SynthParams& p, bool camera_b, Rng& rng) {
  Canvas canvas(p.height, p.width);
  const Color background = {0.5 + p.clutter * uniform(rng, -1, 1), 0.5 + p.clutter * uniform(rng, -1, 1),
                            0.5 + p.clutter * uniform(rng, -1, 1)};
  canvas.rect(0, 0, 64, 32, background);
  if (p.clutter > 0) {
    for (int i = 0; i < 4; ++i) {
      const double y0 = uniform(rng, 0, 56), x0 = uniform(rng, 0, 26);
      canvas.rect(y0, x0, y0 + uniform(rng, 4, 16), x0 + uniform(rng, 3, 10), random_color(rng), std::min(1.0, 2 * p.clutter));
    }
  }
  const int j = static_cast<int>(p.jitter);
  const double dy = j ? uniform_int(rng, -j, j) : 0;
  const double dx = j ? uniform_int(rng, -j, j) : 0;
  render_figure(canvas, a, dy, dx);

  Tensor<float>& img = canvas.pixels();
  const std::size_t plane = p.height * p.width;
  if (camera_b && (p.brightness_shift > 0 || p.hue_shift > 0)) {
    const double gain = 1.0 + p.brightness_shift * uniform(rng, -1, 1);
    const auto m = hue_rotation(p.hue_shift * uniform(rng, -1, 1));
    for (std::size_t i = 0; i < plane; ++i) {
      const double rgb[3] = {img[i], img[plane + i], img[2 * plane + i]};
      for (std::size_t c = 0; c < 3; ++c) {
        img[c * plane + i] = static_cast<float>(gain * (m[c][0] * rgb[0] + m[c][1] * rgb[1] + m[c][2] * rgb[2]));
      }
    }
  }
  if (p.noise > 0) {
    std::normal_distribution<double> gauss(0.0, p.noise);
    for (auto& v : img.values()) v = static_cast<float>(v + gauss(rng));
  }
  for (auto& v : img.values()) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

}  // namespace

DatasetIndex synth_generate(const SynthParams& p) {
  if (p.height < 16 || p.width < 8) throw std::invalid_argument("synth_generate: image extents must be at least 16x8");
  if (p.identities == 0 || p.images_per_view == 0) throw std::invalid_argument("synth_generate: empty dataset requested");
  if (p.brightness_shift < 0 || p.brightness_shift >= 1 || p.hue_shift < 0 || p.noise < 0 || p.clutter < 0 || p.clutter > 0.5) {
    throw std::invalid_argument("synth_generate: shift, noise or clutter parameters out of range");
  }
  DatasetIndex index;
  index.name = p.name;
  Rng palette_rng(derive_seed(p.seed, {0xA11CEu}));
  std::vector<Appearance> people;
  for (std::size_t i = 0; i < p.identities; ++i) people.push_back(random_appearance(palette_rng));

  for (const std::string camera : {"a", "b"}) {
    for (std::size_t i = 0; i < p.identities; ++i) {
      for (std::size_t k = 0; k < p.images_per_view; ++k) {
        Rng rng(derive_seed(p.seed, {camera == "a" ? 1u : 2u, i, k}));
        DatasetEntry e;
        e.identity = static_cast<int>(i + 1);
        e.camera = camera;
        e.index = static_cast<int>(k);
        e.pixels = std::make_shared<const Tensor<float>>(render_image(people[i], p, camera == "b", rng));
        index.entries.push_back(std::move(e));
      }
    }
  }
  return index;
}

}  // namespace deeprank
