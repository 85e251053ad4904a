#include "ssnas/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace ssnas {

namespace {

void check_pair(const IntMask& pred, const IntMask& gt) {
    if (pred.shape != gt.shape || pred.shape.size() != 2)
        throw ContractError("metrics: masks must be equal-shape (H,W)");
}

struct Counts {
    std::int64_t inter = 0, a = 0, b = 0;
};

Counts overlap(const IntMask& pred, const IntMask& gt, int cls) {
    Counts c;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        const bool pa = pred[i] == cls;
        const bool pb = gt[i] == cls;
        c.a += pa;
        c.b += pb;
        c.inter += pa && pb;
    }
    return c;
}

std::vector<std::pair<int, int>> boundary(const IntMask& mask, int cls) {
    const int h = mask.shape[0], w = mask.shape[1];
    std::vector<std::pair<int, int>> out;
    auto in_cls = [&](int y, int x) {
        return y >= 0 && y < h && x >= 0 && x < w && mask[static_cast<std::int64_t>(y) * w + x] == cls;
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!in_cls(y, x)) continue;
            if (!in_cls(y - 1, x) || !in_cls(y + 1, x) || !in_cls(y, x - 1) || !in_cls(y, x + 1))
                out.emplace_back(y, x);
        }
    return out;
}

void directed_distances(const std::vector<std::pair<int, int>>& from,
                        const std::vector<std::pair<int, int>>& to, std::vector<double>& out) {
    for (const auto& [ay, ax] : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [by, bx] : to) {
            const double dy = ay - by, dx = ax - bx;
            best = std::min(best, dy * dy + dx * dx);
        }
        out.push_back(std::sqrt(best));
    }
}

} // namespace

double dsc(const IntMask& pred, const IntMask& gt, int cls) {
    check_pair(pred, gt);
    const Counts c = overlap(pred, gt, cls);
    if (c.a + c.b == 0) return 1.0;
    return 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.a + c.b);
}

double iou(const IntMask& pred, const IntMask& gt, int cls) {
    check_pair(pred, gt);
    const Counts c = overlap(pred, gt, cls);
    const std::int64_t uni = c.a + c.b - c.inter;
    if (uni == 0) return 1.0;
    return static_cast<double>(c.inter) / static_cast<double>(uni);
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw ContractError("percentile: empty sample");
    std::sort(values.begin(), values.end());
    const double rank = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = rank - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

double hd95(const IntMask& pred, const IntMask& gt, int cls) {
    check_pair(pred, gt);
    const Counts c = overlap(pred, gt, cls);
    const int h = pred.shape[0], w = pred.shape[1];
    if (c.a == 0 && c.b == 0) return 0.0;
    if (c.a == 0 || c.b == 0)
        return std::sqrt(static_cast<double>(h) * h + static_cast<double>(w) * w);
    const auto ba = boundary(pred, cls);
    const auto bb = boundary(gt, cls);
    std::vector<double> dists;
    dists.reserve(ba.size() + bb.size());
    directed_distances(ba, bb, dists);
    directed_distances(bb, ba, dists);
    return percentile(std::move(dists), 0.95);
}

namespace {

template <class F>
double mean_foreground(const IntMask& pred, const IntMask& gt, int num_classes, F&& metric) {
    if (num_classes < 2) throw ContractError("metrics: need at least one foreground class");
    double acc = 0.0;
    for (int c = 1; c < num_classes; ++c) acc += metric(pred, gt, c);
    return acc / static_cast<double>(num_classes - 1);
}

// regularized incomplete beta via the Lentz continued fraction
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 200;
    constexpr double kEps = 3e-14, kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

double incbeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

} // namespace

double mean_foreground_dsc(const IntMask& pred, const IntMask& gt, int num_classes) {
    return mean_foreground(pred, gt, num_classes, dsc);
}
double mean_foreground_iou(const IntMask& pred, const IntMask& gt, int num_classes) {
    return mean_foreground(pred, gt, num_classes, iou);
}
double mean_foreground_hd95(const IntMask& pred, const IntMask& gt, int num_classes) {
    return mean_foreground(pred, gt, num_classes, hd95);
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ContractError("paired_t_test: unequal sample sizes");
    const std::size_t n = a.size();
    if (n < 2) throw ContractError("paired_t_test: need at least two pairs");

    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = (a[i] - b[i]) - mean;
        var += d * d;
    }
    var /= static_cast<double>(n - 1);

    if (var == 0.0) {
        if (mean == 0.0) return {0.0, 1.0}; // identical inputs, by convention
        throw ContractError("paired_t_test: zero-variance differences");
    }
    const double t = mean / std::sqrt(var / static_cast<double>(n));
    const double nu = static_cast<double>(n - 1);
    const double p = incbeta(nu / 2.0, 0.5, nu / (nu + t * t));
    return {t, p};
}

} // namespace ssnas
