#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "photocon/photometry.hpp"

using namespace photocon;

namespace {

Image random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image im(h, w);
  for (double& v : im.data) v = u(rng);
  return im;
}

// Direct per-window SSIM with replicate padding.
double naive_ssim(const Image& a, const Image& b, int i, int j) {
  double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
  for (int di = -1; di <= 1; ++di) {
    for (int dj = -1; dj <= 1; ++dj) {
      const int ii = std::clamp(i + di, 0, a.height - 1);
      const int jj = std::clamp(j + dj, 0, a.width - 1);
      const double x = a(ii, jj), y = b(ii, jj);
      ma += x;
      mb += y;
      saa += x * x;
      sbb += y * y;
      sab += x * y;
    }
  }
  ma /= 9;
  mb /= 9;
  const double va = saa / 9 - ma * ma, vb = sbb / 9 - mb * mb, cov = sab / 9 - ma * mb;
  return ((2 * ma * mb + kSsimC1) * (2 * cov + kSsimC2)) /
         ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
}

}  // namespace

TEST_CASE("brightness transform") {
  const Image im = random_image(4, 5, 1);
  const BrightnessResult r = brightness_transform(im, {1.2, 0.05});
  for (std::size_t k = 0; k < im.size(); ++k) {
    CHECK(r.image[k] == doctest::Approx(1.2 * im[k] + 0.05));
    CHECK(r.d_gain[k] == im[k]);
  }
  CHECK(r.d_bias == 1.0);
}

TEST_CASE("SSIM matches a direct window computation") {
  const Image a = random_image(7, 9, 2), b = random_image(7, 9, 3);
  const ErrorMap s = ssim(a, b);
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 9; ++j) {
      CHECK(std::abs(s.value(i, j) - naive_ssim(a, b, i, j)) < 1e-12);
      CHECK(s.valid(i, j) == 1);
    }
  }
  const ErrorMap self = ssim(a, a);
  for (double v : self.value.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pe of identical images is zero and of constant offset is (1-alpha)|d|") {
  const Image a = random_image(6, 6, 4);
  for (double v : pe(a, a).value.data) CHECK(std::abs(v) < 1e-12);
  PeOptions no_ssim;
  no_ssim.use_ssim = false;
  Image b = a;
  for (double& v : b.data) v += 0.1;
  for (double v : pe(a, b, no_ssim).value.data) CHECK(v == doctest::Approx(0.1));
  const ErrorMap full = pe(a, b);
  const ErrorMap s = ssim(a, b);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(full.value[k] == doctest::Approx(kPeAlpha / 2 * (1 - s.value[k]) + (1 - kPeAlpha) * 0.1).epsilon(1e-12));
  }
}

TEST_CASE("pe backward matches finite differences") {
  const Image a = random_image(5, 6, 5), b = random_image(5, 6, 6);
  const Image up = random_image(5, 6, 7);
  Grid<double> wts(5, 6, 0.5);
  for (std::size_t k = 0; k < wts.size(); ++k) wts[k] += 0.1 * static_cast<double>(k % 4);
  for (int variant = 0; variant < 3; ++variant) {
    PeOptions opt;
    if (variant == 1) opt.ssim_weight = &wts;
    if (variant == 2) opt.use_ssim = false;
    auto objective = [&](const Image& x, const Image& y) {
      const ErrorMap e = pe(x, y, opt);
      double s = 0;
      for (std::size_t k = 0; k < e.value.size(); ++k) s += up[k] * e.value[k];
      return s;
    };
    const PeMap m = pe_full(a, b, opt);
    Grid<double> ga(5, 6, 0.0), gb(5, 6, 0.0);
    pe_backward(m, a, b, up, &ga, &gb);
    const double h = 1e-6;
    for (std::size_t k = 0; k < a.size(); ++k) {
      Image ap = a, am = a, bp = b, bm = b;
      ap[k] += h;
      am[k] -= h;
      bp[k] += h;
      bm[k] -= h;
      const double fa = (objective(ap, b) - objective(am, b)) / (2 * h);
      const double fb = (objective(a, bp) - objective(a, bm)) / (2 * h);
      CHECK(ga[k] == doctest::Approx(fa).epsilon(1e-5).scale(1e-6));
      CHECK(gb[k] == doctest::Approx(fb).epsilon(1e-5).scale(1e-6));
    }
  }
}

TEST_CASE("box3 replicates the border") {
  Image im(2, 2);
  im.data = {1, 2, 3, 4};
  const Grid<double> f = box3(im);
  // (0,0) window rows {0,0,1} cols {0,0,1}: 4*1 + 2*2 + 2*3 + 4 = 18
  CHECK(f(0, 0) == doctest::Approx(18.0 / 9));
}

TEST_CASE("depth-error weights") {
  DepthMap p(1, 4, 2.0), r(1, 4, 2.0);
  r[0] = 3.0;  // err 1
  r[1] = 2.0;  // err 0
  Mask valid(1, 4, 1);
  valid[3] = 0;
  r[3] = 100.0;
  const double s2 = 1.0 / 3.0;
  const Grid<double> w = dw_ssim_weights(p, r, &valid);
  CHECK(w[0] == doctest::Approx(s2 / (s2 + 1.0)));
  CHECK(w[1] == doctest::Approx(1.0));
  CHECK(w[3] == 1.0);
  const Grid<double> same = dw_ssim_weights(p, p);
  for (double v : same.data) CHECK(v == 1.0);
}

TEST_CASE("serial and parallel kernels agree bitwise") {
  const Image a = random_image(33, 41, 8), b = random_image(33, 41, 9);
  const ErrorMap s = pe(a, b, {}, Exec::serial);
  const ErrorMap p = pe(a, b, {}, Exec::parallel);
  CHECK(s.value.data == p.value.data);
}

TEST_CASE("size mismatch is rejected") {
  CHECK_THROWS_AS(ssim(Image(3, 3), Image(3, 4)), InvalidInput);
  CHECK_THROWS_AS(pe(Image(3, 3), Image(4, 3)), InvalidInput);
}
