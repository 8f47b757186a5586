// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0

#include "ava/metrics/metrics.hpp"

#include <cmath>
#include <sstream>

#include "ava/util/errors.hpp"

namespace ava::metrics {

namespace {

void require_same_shape(const util::ImageF& a, const util::ImageF& b, const char* op) {
    if (!a.same_shape(b)) {
        throw util::InputError(std::string(op) + " requires images of identical shape");
    }
}

std::vector<double> grayscale(const util::ImageF& img) {
    std::vector<double> g(size_t(img.width) * size_t(img.height));
    for (size_t i = 0; i < g.size(); ++i) {
        g[i] = 0.299 * img.rgb[3 * i] + 0.587 * img.rgb[3 * i + 1] +
               0.114 * img.rgb[3 * i + 2];
    }
    return g;
}

// 11-tap Gaussian, sigma 1.5, normalized to sum 1.
const std::vector<double>& gaussian11() {
    static const std::vector<double> k = [] {
        std::vector<double> v(11);
        double sum = 0.0;
        for (int i = 0; i < 11; ++i) {
            const double x = i - 5;
            v[size_t(i)] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
            sum += v[size_t(i)];
        }
        for (auto& x : v) x /= sum;
        return v;
    }();
    return k;
}

}  // namespace

double psnr(const util::ImageF& a, const util::ImageF& b) {
    require_same_shape(a, b, "psnr");
    double mse = 0.0;
    for (size_t i = 0; i < a.rgb.size(); ++i) {
        const double d = double(a.rgb[i]) - double(b.rgb[i]);
        mse += d * d;
    }
    mse /= double(a.rgb.size());
    if (mse <= 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const util::ImageF& a, const util::ImageF& b) {
    require_same_shape(a, b, "ssim");
    if (a.width < 11 || a.height < 11) {
        throw util::InputError("ssim needs image extents of at least 11 pixels");
    }
    const auto ga = grayscale(a);
    const auto gb = grayscale(b);
    const auto& k = gaussian11();
    const int W = a.width, H = a.height;
    constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2 with L = 1
    constexpr double kC2 = 0.03 * 0.03;

    double total = 0.0;
    int64_t count = 0;
    for (int y = 5; y < H - 5; ++y) {
        for (int x = 5; x < W - 5; ++x) {
            double mu_a = 0.0, mu_b = 0.0, ab = 0.0, dd = 0.0;
            for (int dy = -5; dy <= 5; ++dy) {
                const double wy = k[size_t(dy + 5)];
                const size_t row = size_t(y + dy) * size_t(W);
                for (int dx = -5; dx <= 5; ++dx) {
                    const double w = wy * k[size_t(dx + 5)];
                    const double va = ga[row + size_t(x + dx)];
                    const double vb = gb[row + size_t(x + dx)];
                    const double dv = va - vb;
                    mu_a += w * va;
                    mu_b += w * vb;
                    ab += w * va * vb;
                    dd += w * dv * dv;
                }
            }
            // Each denominator factor is the matching numerator factor plus a
            // non-negative remainder:
            //   mu_a^2 + mu_b^2 = 2*mu_a*mu_b + (mu_a - mu_b)^2
            //   var_a + var_b   = 2*cov       + var(a - b)
            // Both remainders are exactly zero when the window contents are
            // identical, so identical images score exactly 1.0 per window no
            // matter how the compiler contracts multiply-add chains into FMAs.
            const double md = mu_a - mu_b;
            const double cov = ab - mu_a * mu_b;
            const double var_diff = dd - md * md;
            const double num1 = 2.0 * mu_a * mu_b + kC1;
            const double num2 = 2.0 * cov + kC2;
            const double den1 = num1 + md * md;
            const double den2 = num2 + var_diff;
            total += (num1 * num2) / (den1 * den2);
            ++count;
        }
    }
    return total / double(count);
}

ConsistencyResult consistency(const std::vector<util::ImageF>& rendered,
                              const std::vector<util::ImageF>& reference,
                              const FlowOptions& opts) {
    if (rendered.size() != reference.size() || rendered.size() < 2) {
        throw util::InputError("consistency needs equal-length sequences of >= 2 frames");
    }
    for (size_t i = 0; i < rendered.size(); ++i) {
        require_same_shape(rendered[i], reference[i], "consistency");
    }
    ConsistencyResult out;
    const size_t pairs = rendered.size() - 1;
    for (size_t i = 0; i + 1 < rendered.size(); ++i) {
        const auto flow_r = optical_flow(rendered[i], rendered[i + 1], opts);
        const auto flow_x = optical_flow(reference[i], reference[i + 1], opts);
        double diff = 0.0;
        for (size_t j = 0; j < flow_r.uv.size(); ++j) {
            diff += std::abs(double(flow_r.uv[j]) - double(flow_x.uv[j]));
        }
        out.tof += diff / double(flow_r.uv.size());
        out.tss += std::abs(ssim(rendered[i + 1], rendered[i]) -
                            ssim(reference[i + 1], reference[i]));
    }
    out.tof /= double(pairs);
    out.tss /= double(pairs);
    return out;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

std::string report_csv(const MetricsReport& report) {
    std::ostringstream os;
    os << "source,target,psnr,ssim,tof,tss\n";
    for (const auto& p : report.pairs) {
        os << p.source << "," << p.target << "," << fmt(p.psnr) << "," << fmt(p.ssim) << ",";
        if (p.tof) os << fmt(*p.tof);
        os << ",";
        if (p.tss) os << fmt(*p.tss);
        os << "\n";
    }
    return os.str();
}

std::string report_markdown(const MetricsReport& report) {
    std::ostringstream os;
    os << "| source | target | PSNR (dB) | SSIM | tOF (px) | tSS |\n";
    os << "|---|---|---|---|---|---|\n";
    for (const auto& p : report.pairs) {
        os << "| " << p.source << " | " << p.target << " | " << fmt(p.psnr) << " | "
           << fmt(p.ssim) << " | " << (p.tof ? fmt(*p.tof) : std::string("-")) << " | "
           << (p.tss ? fmt(*p.tss) : std::string("-")) << " |\n";
    }
    return os.str();
}

}  // namespace ava::metrics
