#include <algorithm>
#include <cmath>
#include <filesystem>

#include "ssnas/data.hpp"
#include "ssnas/png_io.hpp"

namespace ssnas {

namespace fs = std::filesystem;

Dataset load_directory(const std::string& path, int num_classes) {
    const fs::path root(path);
    const fs::path images = root / "images";
    const fs::path masks = root / "masks";
    if (!fs::is_directory(images))
        throw IoError("load_directory: missing images/ under '" + path + "'");

    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(images))
        if (entry.path().extension() == ".png") ids.push_back(entry.path().stem().string());
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw IoError("load_directory: no PNG images under '" + path + "'");

    Dataset data;
    data.num_classes = num_classes;
    for (const std::string& id : ids) {
        png_io::GrayImage img = png_io::read_gray8((images / (id + ".png")).string());
        SegSample s;
        s.id = id;
        s.image = Tensor({1, img.height, img.width});
        for (std::int64_t i = 0; i < s.image.numel(); ++i)
            s.image[i] = img.pixels[static_cast<std::size_t>(i)] / 255.0;

        const fs::path mask_path = masks / (id + ".png");
        if (fs::exists(mask_path)) {
            png_io::GrayImage m = png_io::read_gray8(mask_path.string());
            if (m.height != img.height || m.width != img.width)
                throw IoError("load_directory: mask size mismatch for '" + id + "'");
            IntMask mask({m.height, m.width});
            for (std::int64_t i = 0; i < mask.numel(); ++i) {
                const int cls = m.pixels[static_cast<std::size_t>(i)];
                if (cls >= num_classes)
                    throw IoError("load_directory: mask class out of range for '" + id + "'");
                mask[i] = cls;
            }
            s.mask = std::move(mask);
        }
        data.samples.push_back(std::move(s));
    }
    return data;
}

void save_dataset(const Dataset& data, const std::string& path) {
    const fs::path root(path);
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");
    for (const SegSample& s : data.samples) {
        png_io::GrayImage img;
        img.height = s.image.dim(1);
        img.width = s.image.dim(2);
        img.pixels.resize(static_cast<std::size_t>(s.image.numel()));
        for (std::int64_t i = 0; i < s.image.numel(); ++i)
            img.pixels[static_cast<std::size_t>(i)] =
                static_cast<std::uint8_t>(std::lround(std::clamp(s.image[i], 0.0, 1.0) * 255.0));
        png_io::write_gray8((root / "images" / (s.id + ".png")).string(), img);
        if (s.mask) {
            png_io::GrayImage m;
            m.height = s.mask->shape[0];
            m.width = s.mask->shape[1];
            m.pixels.resize(static_cast<std::size_t>(s.mask->numel()));
            for (std::int64_t i = 0; i < s.mask->numel(); ++i)
                m.pixels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>((*s.mask)[i]);
            png_io::write_gray8((root / "masks" / (s.id + ".png")).string(), m);
        }
    }
}

SplitResult split(const Dataset& data, double labeled_fraction, double test_fraction,
                  std::uint64_t seed) {
    if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0))
        throw ConfigError("split: labeled_fraction must be in (0,1]");
    if (!(test_fraction >= 0.0 && test_fraction < 1.0))
        throw ConfigError("split: test_fraction must be in [0,1)");
    if (data.samples.empty()) throw ConfigError("split: empty dataset");

    Rng rng(seed);
    std::vector<int> order = rng.permutation(static_cast<int>(data.samples.size()));
    const int n = static_cast<int>(order.size());
    const int n_test = static_cast<int>(std::lround(test_fraction * n));
    const int n_train = n - n_test;
    const int n_labeled = static_cast<int>(std::lround(labeled_fraction * n_train));
    if (n_labeled < 1) throw ConfigError("split: labeled partition is empty");
    if (test_fraction > 0.0 && n_test < 1) throw ConfigError("split: test partition is empty");

    SplitResult out;
    out.labeled.num_classes = out.unlabeled.num_classes = out.test.num_classes = data.num_classes;
    for (int i = 0; i < n; ++i) {
        const SegSample& s = data.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        if (i < n_test) {
            out.test.samples.push_back(s);
        } else if (i < n_test + n_labeled) {
            if (!s.mask) throw ConfigError("split: unlabeled sample cannot join the labeled pool");
            out.labeled.samples.push_back(s);
        } else {
            SegSample u = s;
            u.mask.reset(); // unlabeled pool carries no masks
            out.unlabeled.samples.push_back(std::move(u));
        }
    }
    return out;
}

} // namespace ssnas
