#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ssnas/rng.hpp"
#include "ssnas/tensor.hpp"

namespace ssnas {

/// One grayscale image with an optional integer mask; labeled iff mask set.
struct SegSample {
    Tensor image;                 // (1,H,W), values in [0,1]
    std::optional<IntMask> mask;  // (H,W), class indices
    std::string id;
};

struct Dataset {
    std::vector<SegSample> samples;
    int num_classes = 0;

    std::size_t size() const { return samples.size(); }
};

/// Synthetic ultrasound-like phantom: an elliptical ring (class 1) with an
/// interior (class 2) on background (class 0), multiplicative speckle and a
/// smooth intensity bias. The mask records the exact pre-noise geometry.
struct PhantomSpec {
    int size = 64;
    int num_classes = 3;
    double center_min = 0.38, center_max = 0.62; // fractions of size
    double outer_min = 0.18, outer_max = 0.30;   // outer semi-axes, fraction of size
    double ring_min = 0.55, ring_max = 0.75;     // inner/outer axis ratio
    double speckle = 0.08;                       // multiplicative noise strength
    double bias = 0.10;                          // smooth intensity bias amplitude

    void validate() const;
};

SegSample generate_phantom(const PhantomSpec& spec, std::uint64_t seed);
/// The rendering before speckle is applied (geometry, jitter, bias included).
Tensor phantom_clean_image(const PhantomSpec& spec, std::uint64_t seed);

Dataset generate_phantom_dataset(const PhantomSpec& spec, int count, std::uint64_t seed);

/// Directory layout: images/<id>.png (8-bit grayscale), masks/<id>.png
/// (8-bit class indices). A sample without a mask file is unlabeled.
Dataset load_directory(const std::string& path, int num_classes);
void save_dataset(const Dataset& data, const std::string& path);

struct SplitResult {
    Dataset labeled, unlabeled, test;
};

/// Shuffles by seed, carves off the test split, then labels the requested
/// fraction of the remaining training pool (masks are stripped from the
/// rest). labeled_fraction = 1 leaves the unlabeled pool empty.
SplitResult split(const Dataset& data, double labeled_fraction, double test_fraction,
                  std::uint64_t seed);

} // namespace ssnas
