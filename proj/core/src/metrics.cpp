#include "meshsplat/metrics.hpp"

#include "meshsplat/errors.hpp"

#include <cmath>
#include <vector>

namespace meshsplat {

namespace {

void check_metric_inputs(const Image& a, const Image& b, const Image& mask) {
  if (!a.same_shape(b)) throw ParameterError("metric: image shapes differ");
  if (mask.width() != a.width() || mask.height() != a.height() || mask.channels() != 1) {
    throw ParameterError("metric: mask shape mismatch");
  }
}

constexpr int kWindow = 11;
constexpr int kRadius = kWindow / 2;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

const std::vector<double>& ssim_kernel() {
  static const std::vector<double> kernel = [] {
    std::vector<double> k(kWindow);
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      const double d = i - kRadius;
      k[i] = std::exp(-0.5 * d * d / (1.5 * 1.5));
      sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
  }();
  return kernel;
}

// Separable convolution with zero padding (single channel).
Image conv_zeropad(const Image& img) {
  const auto& k = ssim_kernel();
  const int w = img.width();
  const int h = img.height();
  Image tmp(w, h, 1), out(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = 0.0;
      for (int i = -kRadius; i <= kRadius; ++i) {
        const int xi = x + i;
        if (xi >= 0 && xi < w) v += k[i + kRadius] * img.at(xi, y);
      }
      tmp.at(x, y) = v;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = 0.0;
      for (int i = -kRadius; i <= kRadius; ++i) {
        const int yi = y + i;
        if (yi >= 0 && yi < h) v += k[i + kRadius] * tmp.at(x, yi);
      }
      out.at(x, y) = v;
    }
  }
  return out;
}

// Per-position normalizer: the window mass inside the image.
Image window_norm(int w, int h) {
  const auto& k = ssim_kernel();
  std::vector<double> row(w, 0.0), col(h, 0.0);
  for (int x = 0; x < w; ++x) {
    for (int i = -kRadius; i <= kRadius; ++i) {
      if (x + i >= 0 && x + i < w) row[x] += k[i + kRadius];
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int i = -kRadius; i <= kRadius; ++i) {
      if (y + i >= 0 && y + i < h) col[y] += k[i + kRadius];
    }
  }
  Image norm(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) norm.at(x, y) = row[x] * col[y];
  }
  return norm;
}

Image extract_channel(const Image& img, int c) {
  Image out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) out.at(x, y) = img.at(x, y, c);
  }
  return out;
}

Image multiply(const Image& a, const Image& b) {
  Image out(a.width(), a.height(), 1);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

struct SsimStats {
  Image mu_x, mu_y, sxx, syy, sxy;
};

SsimStats ssim_stats(const Image& x, const Image& y, const Image& norm) {
  SsimStats s;
  auto renorm = [&](Image img) {
    for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] /= norm.data()[i];
    return img;
  };
  s.mu_x = renorm(conv_zeropad(x));
  s.mu_y = renorm(conv_zeropad(y));
  s.sxx = renorm(conv_zeropad(multiply(x, x)));
  s.syy = renorm(conv_zeropad(multiply(y, y)));
  s.sxy = renorm(conv_zeropad(multiply(x, y)));
  for (std::size_t i = 0; i < s.sxx.size(); ++i) {
    s.sxx.data()[i] -= s.mu_x.data()[i] * s.mu_x.data()[i];
    s.syy.data()[i] -= s.mu_y.data()[i] * s.mu_y.data()[i];
    s.sxy.data()[i] -= s.mu_x.data()[i] * s.mu_y.data()[i];
  }
  return s;
}

}  // namespace

double psnr(const Image& a, const Image& b, const Image& mask) {
  check_metric_inputs(a, b, mask);
  double mse = 0.0;
  std::int64_t count = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (mask.at(x, y) <= 0.5) continue;
      for (int c = 0; c < a.channels(); ++c) {
        const double d = a.at(x, y, c) - b.at(x, y, c);
        mse += d * d;
        ++count;
      }
    }
  }
  if (count == 0) throw UndefinedMetricError("psnr: empty mask");
  mse /= static_cast<double>(count);
  if (mse < 1e-10) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double dssim(const Image& a, const Image& b, const Image& mask) {
  check_metric_inputs(a, b, mask);
  const Image norm = window_norm(a.width(), a.height());
  double total = 0.0;
  std::int64_t count = 0;
  for (int c = 0; c < a.channels(); ++c) {
    const Image xc = extract_channel(a, c);
    const Image yc = extract_channel(b, c);
    const SsimStats s = ssim_stats(xc, yc, norm);
    for (int y = 0; y < a.height(); ++y) {
      for (int x = 0; x < a.width(); ++x) {
        if (mask.at(x, y) <= 0.5) continue;
        const double mx = s.mu_x.at(x, y), my = s.mu_y.at(x, y);
        const double a1 = 2.0 * mx * my + kSsimC1;
        const double a2 = 2.0 * s.sxy.at(x, y) + kSsimC2;
        const double b1 = mx * mx + my * my + kSsimC1;
        const double b2 = s.sxx.at(x, y) + s.syy.at(x, y) + kSsimC2;
        total += (a1 * a2) / (b1 * b2);
        ++count;
      }
    }
  }
  if (count == 0) throw UndefinedMetricError("dssim: empty mask");
  return 1.0 - total / static_cast<double>(count);
}

Image dssim_backward(const Image& target, const Image& render, const Image& mask) {
  check_metric_inputs(target, render, mask);
  const int w = target.width();
  const int h = target.height();
  const Image norm = window_norm(w, h);

  std::int64_t count = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask.at(x, y) > 0.5) ++count;
    }
  }
  Image grad(w, h, target.channels());
  if (count == 0) return grad;
  const double scale = -1.0 / static_cast<double>(count * target.channels());

  for (int c = 0; c < target.channels(); ++c) {
    const Image xc = extract_channel(target, c);
    const Image yc = extract_channel(render, c);
    const SsimStats s = ssim_stats(xc, yc, norm);

    // Per-pixel partials of the masked-mean SSIM w.r.t. the windowed stats.
    Image d_mu(w, h, 1), d_syy(w, h, 1), d_sxy(w, h, 1);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (mask.at(x, y) <= 0.5) continue;
        const double mx = s.mu_x.at(x, y), my = s.mu_y.at(x, y);
        const double a1 = 2.0 * mx * my + kSsimC1;
        const double a2 = 2.0 * s.sxy.at(x, y) + kSsimC2;
        const double b1 = mx * mx + my * my + kSsimC1;
        const double b2 = s.sxx.at(x, y) + s.syy.at(x, y) + kSsimC2;
        const double ssim = (a1 * a2) / (b1 * b2);
        const double d_ssim_mu = 2.0 * mx * a2 / (b1 * b2) - ssim * 2.0 * my / b1;
        const double d_ssim_syy = -ssim / b2;
        const double d_ssim_sxy = 2.0 * a1 / (b1 * b2);
        // mu_y feeds syy and sxy through the subtracted products.
        d_mu.at(x, y) = scale * (d_ssim_mu - 2.0 * my * d_ssim_syy - mx * d_ssim_sxy);
        d_syy.at(x, y) = scale * d_ssim_syy;
        d_sxy.at(x, y) = scale * d_ssim_sxy;
      }
    }
    // Adjoint of the renormalized convolution: divide by the window mass,
    // then plain zero-padded convolution (the kernel is symmetric).
    auto adjoint = [&](Image field) {
      for (std::size_t i = 0; i < field.size(); ++i) field.data()[i] /= norm.data()[i];
      return conv_zeropad(field);
    };
    const Image t_mu = adjoint(d_mu);
    const Image t_syy = adjoint(d_syy);
    const Image t_sxy = adjoint(d_sxy);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        grad.at(x, y, c) = t_mu.at(x, y) + 2.0 * render.at(x, y, c) * t_syy.at(x, y) +
                           target.at(x, y, c) * t_sxy.at(x, y);
      }
    }
  }
  return grad;
}

double masked_mae(const Image& a, const Image& b, const Image& mask) {
  check_metric_inputs(a, b, mask);
  double total = 0.0;
  std::int64_t count = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (mask.at(x, y) <= 0.5) continue;
      for (int c = 0; c < a.channels(); ++c) {
        const double av = a.at(x, y, c);
        const double bv = b.at(x, y, c);
        if (!std::isfinite(av) || !std::isfinite(bv)) continue;
        total += std::abs(av - bv);
        ++count;
      }
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

}  // namespace meshsplat
