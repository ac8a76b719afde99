#include "vitfill/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "vitfill/common.hpp"

namespace vitfill {

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimK1 = 0.01;
constexpr double kSsimK2 = 0.03;

void require_metric_pair(const ImageTensor& a, const ImageTensor& b, const char* op) {
    if (a.shape.size() != 3) {
        throw DimensionError(std::string(op) + ": expected a CxHxW image, got " +
                             a.shape_string());
    }
    require_same_shape(a, b, op);
    require_finite(a, op);
    require_finite(b, op);
}

std::vector<double> channel_plane(const ImageTensor& img, int64_t c) {
    const int64_t h = img.shape[1];
    const int64_t w = img.shape[2];
    std::vector<double> plane(static_cast<size_t>(h * w));
    const float* src = img.data.data() + c * h * w;
    for (int64_t i = 0; i < h * w; ++i) plane[static_cast<size_t>(i)] = src[i];
    return plane;
}

// Separable valid-mode Gaussian filter: rows first (h x (w-10)), then
// columns ((h-10) x (w-10)).
std::vector<double> gauss_valid(const std::vector<double>& img, int64_t h, int64_t w,
                                const std::vector<double>& kernel) {
    const int64_t k = static_cast<int64_t>(kernel.size());
    const int64_t ow = w - k + 1;
    const int64_t oh = h - k + 1;
    std::vector<double> rows(static_cast<size_t>(h * ow));
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int64_t i = 0; i < k; ++i) {
                s += kernel[static_cast<size_t>(i)] * img[static_cast<size_t>(y * w + x + i)];
            }
            rows[static_cast<size_t>(y * ow + x)] = s;
        }
    }
    std::vector<double> out(static_cast<size_t>(oh * ow));
    for (int64_t y = 0; y < oh; ++y) {
        for (int64_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int64_t i = 0; i < k; ++i) {
                s += kernel[static_cast<size_t>(i)] * rows[static_cast<size_t>((y + i) * ow + x)];
            }
            out[static_cast<size_t>(y * ow + x)] = s;
        }
    }
    return out;
}

std::vector<double> ssim_kernel() {
    std::vector<double> k(kSsimWindow);
    const double centre = (kSsimWindow - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - centre;
        k[static_cast<size_t>(i)] = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
        sum += k[static_cast<size_t>(i)];
    }
    for (double& v : k) v /= sum;
    return k;
}

std::string fmt6(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6) << v;
    return os.str();
}

}  // namespace

double mse(const ImageTensor& a, const ImageTensor& b) {
    require_metric_pair(a, b, "mse");
    double sum = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(a.data.size());
}

double psnr(const ImageTensor& a, const ImageTensor& b, double peak) {
    if (!(peak > 0.0)) {
        throw ValidationError("psnr: peak must be positive");
    }
    const double m = mse(a, b);
    if (m == 0.0) return kPsnrIdentical;
    return 10.0 * std::log10(peak * peak / m);
}

double psnr_masked(const ImageTensor& a, const ImageTensor& b, const BinaryMask& m,
                   double peak) {
    if (!(peak > 0.0)) {
        throw ValidationError("psnr_masked: peak must be positive");
    }
    require_metric_pair(a, b, "psnr_masked");
    const int64_t c = a.shape[0];
    const int64_t h = a.shape[1];
    const int64_t w = a.shape[2];
    if (m.h != h || m.w != w) {
        throw DimensionError("psnr_masked: mask is " + std::to_string(m.h) + "x" +
                             std::to_string(m.w) + " but image is " + a.shape_string());
    }
    if (m.hole_area() == 0) {
        throw ValidationError("psnr_masked: mask has no set pixels");
    }
    double sum = 0.0;
    int64_t count = 0;
    for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                if (m.at(y, x) == 0) continue;
                const int64_t i = (ch * h + y) * w + x;
                const double d = static_cast<double>(a.data[static_cast<size_t>(i)]) -
                                 static_cast<double>(b.data[static_cast<size_t>(i)]);
                sum += d * d;
                ++count;
            }
        }
    }
    const double masked_mse = sum / static_cast<double>(count);
    if (masked_mse == 0.0) return kPsnrIdentical;
    return 10.0 * std::log10(peak * peak / masked_mse);
}

double ssim(const ImageTensor& a, const ImageTensor& b) {
    require_image(a, "ssim");
    require_image(b, "ssim");
    require_same_shape(a, b, "ssim");
    const int64_t c = a.shape[0];
    const int64_t h = a.shape[1];
    const int64_t w = a.shape[2];
    if (h < kSsimWindow || w < kSsimWindow) {
        throw ValidationError("ssim: image " + a.shape_string() + " is smaller than the " +
                              std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow) +
                              " window");
    }
    static const std::vector<double> kernel = ssim_kernel();
    const double c1 = kSsimK1 * kSsimK1;
    const double c2 = kSsimK2 * kSsimK2;

    double channel_sum = 0.0;
    for (int64_t ch = 0; ch < c; ++ch) {
        const std::vector<double> x = channel_plane(a, ch);
        const std::vector<double> y = channel_plane(b, ch);
        std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
        for (size_t i = 0; i < x.size(); ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const std::vector<double> mu_x = gauss_valid(x, h, w, kernel);
        const std::vector<double> mu_y = gauss_valid(y, h, w, kernel);
        const std::vector<double> m_xx = gauss_valid(xx, h, w, kernel);
        const std::vector<double> m_yy = gauss_valid(yy, h, w, kernel);
        const std::vector<double> m_xy = gauss_valid(xy, h, w, kernel);

        double local_sum = 0.0;
        for (size_t i = 0; i < mu_x.size(); ++i) {
            const double var_x = m_xx[i] - mu_x[i] * mu_x[i];
            const double var_y = m_yy[i] - mu_y[i] * mu_y[i];
            const double cov = m_xy[i] - mu_x[i] * mu_y[i];
            const double num = (2.0 * mu_x[i] * mu_y[i] + c1) * (2.0 * cov + c2);
            const double den = (mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + c1) *
                               (var_x + var_y + c2);
            local_sum += num / den;
        }
        channel_sum += local_sum / static_cast<double>(mu_x.size());
    }
    return channel_sum / static_cast<double>(c);
}

MetricAggregate aggregate_values(const std::vector<double>& values) {
    MetricAggregate agg;
    double sum = 0.0;
    for (double v : values) {
        if (!std::isfinite(v)) continue;
        sum += v;
        ++agg.count;
    }
    if (agg.count == 0) return agg;
    agg.mean = sum / agg.count;
    double ss = 0.0;
    for (double v : values) {
        if (!std::isfinite(v)) continue;
        const double d = v - agg.mean;
        ss += d * d;
    }
    agg.std_dev = std::sqrt(ss / agg.count);
    return agg;
}

MetricsReport make_report(std::vector<ImageMetrics> rows, std::string fingerprint) {
    MetricsReport report;
    report.rows = std::move(rows);
    report.fingerprint = std::move(fingerprint);
    std::vector<double> p, pm, s;
    p.reserve(report.rows.size());
    pm.reserve(report.rows.size());
    s.reserve(report.rows.size());
    for (const ImageMetrics& r : report.rows) {
        p.push_back(r.psnr_db);
        pm.push_back(r.psnr_masked_db);
        s.push_back(r.ssim);
    }
    report.psnr_db = aggregate_values(p);
    report.psnr_masked_db = aggregate_values(pm);
    report.ssim = aggregate_values(s);
    return report;
}

std::string metrics_csv(const MetricsReport& report) {
    std::ostringstream os;
    os << "id,psnr_db,psnr_masked_db,ssim\n";
    for (const ImageMetrics& r : report.rows) {
        os << r.id << ',' << fmt6(r.psnr_db) << ',' << fmt6(r.psnr_masked_db) << ','
           << fmt6(r.ssim) << '\n';
    }
    os << "# fingerprint=" << report.fingerprint << '\n';
    const auto agg_line = [&os](const char* name, const MetricAggregate& a) {
        os << "# " << name << " mean=" << fmt6(a.mean) << " std=" << fmt6(a.std_dev)
           << " n=" << a.count << '\n';
    };
    agg_line("psnr_db", report.psnr_db);
    agg_line("psnr_masked_db", report.psnr_masked_db);
    agg_line("ssim", report.ssim);
    return os.str();
}

void write_metrics_csv(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    const std::string text = metrics_csv(report);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw IoError("failed writing " + path);
    }
}

}  // namespace vitfill
