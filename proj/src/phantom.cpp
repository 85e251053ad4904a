#include <algorithm>
#include <cmath>

#include "ssnas/data.hpp"

namespace ssnas {

void PhantomSpec::validate() const {
    if (size < 32 || size % 32 != 0) throw ConfigError("PhantomSpec: size must be a multiple of 32");
    if (num_classes != 3) throw ConfigError("PhantomSpec: phantom rendering defines 3 classes");
    if (!(center_min < center_max) || !(outer_min < outer_max) || !(ring_min < ring_max))
        throw ConfigError("PhantomSpec: degenerate geometry range");
    if (outer_min <= 0.0 || ring_min <= 0.0 || ring_max >= 1.0)
        throw ConfigError("PhantomSpec: geometry range out of bounds");
    if (center_max + outer_max > 1.0)
        throw ConfigError("PhantomSpec: ellipse can leave the image");
    if (speckle < 0.0 || bias < 0.0) throw ConfigError("PhantomSpec: negative noise strength");
}

namespace {

struct PhantomDraw {
    double cx, cy, ax, ay, rot, ring;
    double level[3];
    double fx, fy, phase;
};

PhantomDraw draw_params(const PhantomSpec& spec, Rng& rng) {
    PhantomDraw d;
    d.cx = spec.size * rng.uniform(spec.center_min, spec.center_max);
    d.cy = spec.size * rng.uniform(spec.center_min, spec.center_max);
    d.ax = spec.size * rng.uniform(spec.outer_min, spec.outer_max);
    d.ay = spec.size * rng.uniform(spec.outer_min, spec.outer_max);
    d.rot = rng.uniform(0.0, 3.141592653589793);
    d.ring = rng.uniform(spec.ring_min, spec.ring_max);
    d.level[0] = 0.20 + 0.04 * rng.uniform(-1.0, 1.0);
    d.level[1] = 0.85 + 0.04 * rng.uniform(-1.0, 1.0);
    d.level[2] = 0.50 + 0.04 * rng.uniform(-1.0, 1.0);
    d.fx = rng.uniform(0.3, 1.0);
    d.fy = rng.uniform(0.3, 1.0);
    d.phase = rng.uniform(0.0, 6.283185307179586);
    return d;
}

int classify(const PhantomDraw& d, double x, double y) {
    const double dx = x - d.cx, dy = y - d.cy;
    const double u = dx * std::cos(d.rot) + dy * std::sin(d.rot);
    const double v = -dx * std::sin(d.rot) + dy * std::cos(d.rot);
    const double outer = (u / d.ax) * (u / d.ax) + (v / d.ay) * (v / d.ay);
    if (outer > 1.0) return 0;
    const double ia = d.ax * d.ring, ib = d.ay * d.ring;
    const double inner = (u / ia) * (u / ia) + (v / ib) * (v / ib);
    return inner <= 1.0 ? 2 : 1;
}

void render(const PhantomSpec& spec, std::uint64_t seed, Tensor& image, IntMask& mask,
            bool apply_speckle) {
    Rng rng(seed);
    const PhantomDraw d = draw_params(spec, rng);
    const int n = spec.size;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const int cls = classify(d, x + 0.5, y + 0.5);
            mask[static_cast<std::int64_t>(y) * n + x] = cls;
            const double field =
                1.0 + spec.bias * std::sin(6.283185307179586 * (d.fx * x + d.fy * y) / n + d.phase);
            image[static_cast<std::int64_t>(y) * n + x] =
                std::clamp(d.level[cls] * field, 0.0, 1.0);
        }
    // noise draws happen after the clean rendering, in one fixed pass
    if (apply_speckle && spec.speckle > 0.0)
        for (std::int64_t i = 0; i < image.numel(); ++i)
            image[i] = std::clamp(image[i] * (1.0 + spec.speckle * rng.normal()), 0.0, 1.0);
}

} // namespace

SegSample generate_phantom(const PhantomSpec& spec, std::uint64_t seed) {
    spec.validate();
    SegSample s;
    s.image = Tensor({1, spec.size, spec.size});
    IntMask mask({spec.size, spec.size});
    render(spec, seed, s.image, mask, true);
    s.mask = std::move(mask);
    s.id = "phantom_" + std::to_string(seed);
    return s;
}

Tensor phantom_clean_image(const PhantomSpec& spec, std::uint64_t seed) {
    spec.validate();
    Tensor image({1, spec.size, spec.size});
    IntMask mask({spec.size, spec.size});
    render(spec, seed, image, mask, false);
    return image;
}

Dataset generate_phantom_dataset(const PhantomSpec& spec, int count, std::uint64_t seed) {
    if (count < 1) throw ConfigError("generate_phantom_dataset: count must be >= 1");
    Dataset data;
    data.num_classes = spec.num_classes;
    data.samples.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        SegSample s = generate_phantom(spec, seed + static_cast<std::uint64_t>(i));
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "phantom_%05d", i);
        s.id = idbuf;
        data.samples.push_back(std::move(s));
    }
    return data;
}

} // namespace ssnas
