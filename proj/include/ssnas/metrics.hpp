#pragma once

#include <vector>

#include "ssnas/tensor.hpp"

namespace ssnas {

/// Dice coefficient of the binary masks of one class; 1 when both are empty.
double dsc(const IntMask& pred, const IntMask& gt, int cls);
/// Intersection over union; same empty-mask convention.
double iou(const IntMask& pred, const IntMask& gt, int cls);

/// 95th percentile (linear interpolation) of the symmetric set of
/// boundary-to-nearest-boundary Euclidean distances, in pixels. Boundaries
/// are 4-connectivity erosion differences. Conventions: both class masks
/// empty -> 0; exactly one empty -> the image diagonal.
double hd95(const IntMask& pred, const IntMask& gt, int cls);

/// Mean of the per-class scores over foreground classes (1..num_classes-1).
double mean_foreground_dsc(const IntMask& pred, const IntMask& gt, int num_classes);
double mean_foreground_iou(const IntMask& pred, const IntMask& gt, int num_classes);
double mean_foreground_hd95(const IntMask& pred, const IntMask& gt, int num_classes);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
};

/// Two-tailed paired t-test. Identical inputs return (t=0, p=1); any other
/// zero-variance differences are rejected as degenerate.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// q-th percentile of unsorted values with linear interpolation (q in [0,1]).
double percentile(std::vector<double> values, double q);

} // namespace ssnas
