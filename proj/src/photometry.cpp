#include "photocon/photometry.hpp"

#include <algorithm>
#include <cmath>

namespace photocon {

BrightnessResult brightness_transform(const Image& image, const BrightnessParams& params, Exec exec) {
  BrightnessResult out{Image(image.height, image.width), image, 1.0};
  for_rows(image.height, exec, [&](int i) {
    for (int j = 0; j < image.width; ++j) {
      const std::size_t k = image.index(i, j);
      out.image[k] = params.a * image[k] + params.b;
    }
  });
  return out;
}

namespace {

inline int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

// Number of taps d in {-1, 0, 1} for which clamp(p + d) lands on q.
inline int tap_multiplicity(int p, int q, int n) {
  int m = 0;
  for (int d = -1; d <= 1; ++d) m += clampi(p + d, 0, n - 1) == q ? 1 : 0;
  return m;
}

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

Grid<double> box3(const Grid<double>& in, Exec exec) {
  Grid<double> out(in.height, in.width);
  const int h = in.height;
  const int w = in.width;
  for_rows(h, exec, [&](int i) {
    for (int j = 0; j < w; ++j) {
      double s = 0.0;
      for (int di = -1; di <= 1; ++di) {
        const int ii = clampi(i + di, 0, h - 1);
        for (int dj = -1; dj <= 1; ++dj) s += in(ii, clampi(j + dj, 0, w - 1));
      }
      out(i, j) = s / 9.0;
    }
  });
  return out;
}

SsimMap ssim_full(const Image& a, const Image& b, Exec exec) {
  require_same_shape(a, b, "ssim");
  const int h = a.height;
  const int w = a.width;
  SsimMap s;
  s.value = Grid<double>(h, w);
  s.d_mean_a = Grid<double>(h, w);
  s.d_mean_b = Grid<double>(h, w);
  s.d_sq_a = Grid<double>(h, w);
  s.d_sq_b = Grid<double>(h, w);
  s.d_cross = Grid<double>(h, w);
  for_rows(h, exec, [&](int i) {
    for (int j = 0; j < w; ++j) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int di = -1; di <= 1; ++di) {
        const int ii = clampi(i + di, 0, h - 1);
        for (int dj = -1; dj <= 1; ++dj) {
          const int jj = clampi(j + dj, 0, w - 1);
          const double x = a(ii, jj);
          const double y = b(ii, jj);
          sa += x;
          sb += y;
          saa += x * x;
          sbb += y * y;
          sab += x * y;
        }
      }
      const double mx = sa / 9.0, my = sb / 9.0;
      const double vx = saa / 9.0 - mx * mx;
      const double vy = sbb / 9.0 - my * my;
      const double cxy = sab / 9.0 - mx * my;
      const double n1 = 2.0 * mx * my + kSsimC1;
      const double n2 = 2.0 * cxy + kSsimC2;
      const double d1 = mx * mx + my * my + kSsimC1;
      const double d2 = vx + vy + kSsimC2;
      const double val = n1 * n2 / (d1 * d2);
      const std::size_t k = a.index(i, j);
      s.value[k] = val;
      // Partials w.r.t. (mu_x, mu_y, var_x, var_y, cov), then chained to raw moments.
      const double ds_dmx = 2.0 * my * n2 / (d1 * d2) - val * 2.0 * mx / d1;
      const double ds_dmy = 2.0 * mx * n2 / (d1 * d2) - val * 2.0 * my / d1;
      const double ds_dv = -val / d2;
      const double ds_dc = 2.0 * n1 / (d1 * d2);
      s.d_mean_a[k] = ds_dmx + ds_dv * (-2.0 * mx) + ds_dc * (-my);
      s.d_mean_b[k] = ds_dmy + ds_dv * (-2.0 * my) + ds_dc * (-mx);
      s.d_sq_a[k] = ds_dv;
      s.d_sq_b[k] = ds_dv;
      s.d_cross[k] = ds_dc;
    }
  });
  return s;
}

ErrorMap ssim(const Image& a, const Image& b, Exec exec) {
  ErrorMap e;
  e.value = ssim_full(a, b, exec).value;
  e.valid = Mask(a.height, a.width, 1);
  return e;
}

void ssim_backward(const SsimMap& s, const Image& a, const Image& b, const Grid<double>& upstream, Grid<double>* grad_a,
                   Grid<double>* grad_b, Exec exec) {
  const int h = a.height;
  const int w = a.width;
  // Gather form: q collects from every window p that contains it.
  for_rows(h, exec, [&](int qi) {
    for (int qj = 0; qj < w; ++qj) {
      const std::size_t q = a.index(qi, qj);
      const double aq = a[q];
      const double bq = b[q];
      double ga = 0.0, gb = 0.0;
      for (int pi = std::max(qi - 1, 0); pi <= std::min(qi + 1, h - 1); ++pi) {
        const int mi = tap_multiplicity(pi, qi, h);
        if (mi == 0) continue;
        for (int pj = std::max(qj - 1, 0); pj <= std::min(qj + 1, w - 1); ++pj) {
          const int mj = tap_multiplicity(pj, qj, w);
          if (mj == 0) continue;
          const std::size_t p = a.index(pi, pj);
          const double g = upstream[p];
          if (g == 0.0) continue;
          const double wgt = g * (mi * mj) / 9.0;
          ga += wgt * (s.d_mean_a[p] + 2.0 * aq * s.d_sq_a[p] + bq * s.d_cross[p]);
          gb += wgt * (s.d_mean_b[p] + 2.0 * bq * s.d_sq_b[p] + aq * s.d_cross[p]);
        }
      }
      if (grad_a) (*grad_a)[q] += ga;
      if (grad_b) (*grad_b)[q] += gb;
    }
  });
}

PeMap pe_full(const Image& a, const Image& b, const PeOptions& options, Exec exec) {
  require_same_shape(a, b, "pe");
  if (options.ssim_weight) require_same_shape(a, *options.ssim_weight, "pe weights");
  PeMap m;
  m.options = options;
  m.error = ErrorMap(a.height, a.width);
  std::fill(m.error.valid.data.begin(), m.error.valid.data.end(), 1);
  if (options.use_ssim) m.ssim = ssim_full(a, b, exec);
  const double alpha = options.alpha;
  for_rows(a.height, exec, [&](int i) {
    for (int j = 0; j < a.width; ++j) {
      const std::size_t k = a.index(i, j);
      const double l1 = std::abs(a[k] - b[k]);
      if (!options.use_ssim) {
        m.error.value[k] = l1;
        continue;
      }
      const double wk = options.ssim_weight ? (*options.ssim_weight)[k] : 1.0;
      m.error.value[k] = alpha / 2.0 * (1.0 - m.ssim.value[k]) * wk + (1.0 - alpha) * l1;
    }
  });
  return m;
}

ErrorMap pe(const Image& a, const Image& b, const PeOptions& options, Exec exec) {
  return pe_full(a, b, options, exec).error;
}

void pe_backward(const PeMap& m, const Image& a, const Image& b, const Grid<double>& upstream, Grid<double>* grad_a,
                 Grid<double>* grad_b, Exec exec) {
  const bool use_ssim = m.options.use_ssim;
  const double l1w = use_ssim ? 1.0 - m.options.alpha : 1.0;
  for_rows(a.height, exec, [&](int i) {
    for (int j = 0; j < a.width; ++j) {
      const std::size_t k = a.index(i, j);
      const double g = upstream[k] * l1w * sgn(a[k] - b[k]);
      if (grad_a) (*grad_a)[k] += g;
      if (grad_b) (*grad_b)[k] -= g;
    }
  });
  if (!use_ssim) return;
  Grid<double> d_ssim(a.height, a.width);
  const double half = m.options.alpha / 2.0;
  for (std::size_t k = 0; k < d_ssim.size(); ++k) {
    const double wk = m.options.ssim_weight ? (*m.options.ssim_weight)[k] : 1.0;
    d_ssim[k] = -half * wk * upstream[k];
  }
  ssim_backward(m.ssim, a, b, d_ssim, grad_a, grad_b, exec);
}

Grid<double> dw_ssim_weights(const DepthMap& d_pred, const DepthMap& d_recon, const Mask* valid) {
  require_same_shape(d_pred, d_recon, "dw_ssim_weights");
  if (valid) require_same_shape(d_pred, *valid, "dw_ssim_weights");
  Grid<double> w(d_pred.height, d_pred.width, 1.0);
  auto usable = [&](std::size_t k) {
    return (!valid || (*valid)[k]) && std::isfinite(d_pred[k]) && std::isfinite(d_recon[k]) && d_pred[k] > 0.0 &&
           d_recon[k] > 0.0;
  };
  double s2 = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (!usable(k)) continue;
    const double e = d_recon[k] - d_pred[k];
    s2 += e * e;
    ++n;
  }
  if (n == 0) throw InvalidInput("dw_ssim_weights: no jointly valid pixels");
  s2 /= static_cast<double>(n);
  if (s2 == 0.0) return w;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (!usable(k)) continue;
    const double e = d_recon[k] - d_pred[k];
    w[k] = s2 / (s2 + e * e);
  }
  return w;
}

}  // namespace photocon
