#pragma once

#include <limits>
#include <string>
#include <vector>

#include "vitfill/image.hpp"
#include "vitfill/mask.hpp"

namespace vitfill {

// Identical images have zero MSE, so their PSNR is reported as +inf and
// excluded from aggregate means instead of being capped at a made-up value.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

inline bool psnr_is_identical(double value) {
    return std::isinf(value) && value > 0.0;
}

double mse(const ImageTensor& a, const ImageTensor& b);

// 10 * log10(peak^2 / MSE) in dB, MSE over every channel and pixel.
double psnr(const ImageTensor& a, const ImageTensor& b, double peak = 1.0);

// PSNR with the MSE restricted to pixels where the mask is set. The known
// region of a composed output is bit-identical to the reference, so the
// whole-image number dilutes what the fill actually changed.
double psnr_masked(const ImageTensor& a, const ImageTensor& b, const BinaryMask& m,
                   double peak = 1.0);

// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5, K1=0.01, K2=0.03,
// peak 1), valid-mode windows only. Multi-channel images score each channel
// separately and average. Images smaller than the window are rejected.
double ssim(const ImageTensor& a, const ImageTensor& b);

struct ImageMetrics {
    std::string id;
    double psnr_db = 0.0;
    double psnr_masked_db = 0.0;
    double ssim = 0.0;
};

struct MetricAggregate {
    double mean = 0.0;
    double std_dev = 0.0;  // population standard deviation
    int count = 0;         // finite values included (identical sentinels drop out)
};

struct MetricsReport {
    std::vector<ImageMetrics> rows;
    std::string fingerprint;
    MetricAggregate psnr_db;
    MetricAggregate psnr_masked_db;
    MetricAggregate ssim;
};

MetricAggregate aggregate_values(const std::vector<double>& values);

MetricsReport make_report(std::vector<ImageMetrics> rows, std::string fingerprint);

// CSV with header id,psnr_db,psnr_masked_db,ssim, one row per image at six
// decimal places, LF line endings, aggregates appended as '#' comment lines.
// Identical-PSNR sentinels render as "inf".
std::string metrics_csv(const MetricsReport& report);

void write_metrics_csv(const MetricsReport& report, const std::string& path);

}  // namespace vitfill
